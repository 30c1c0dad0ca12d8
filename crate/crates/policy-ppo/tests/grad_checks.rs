//! Finite-difference checks of the full PPO loss through the policy network.

use std::collections::HashMap;

use grad_core::seeding::rng_from;
use grad_core::{grad_check_coords, Graph, Tensor, Var};
use policy_ppo::{forward_graph, PolicyNet, AUX_LEN, HIDDEN_DIM, LOOKAHEAD_DIM, RAY_COUNT};
use rand::seq::SliceRandom;
use rand::Rng;
use world_model::VarTable;

struct FixedBatch {
    rows: usize,
    depth: Vec<f64>,
    aux: Vec<f64>,
    hidden: Vec<f64>,
    look: Vec<f64>,
    actions: Vec<usize>,
    logp_old: Vec<f64>,
    adv: Vec<f64>,
    returns: Vec<f64>,
}

fn fixed_batch(net: &PolicyNet, rows: usize, seed: u64) -> FixedBatch {
    let mut rng = rng_from(seed);
    let mut b = FixedBatch {
        rows,
        depth: (0..rows * RAY_COUNT).map(|_| rng.gen::<f64>()).collect(),
        aux: (0..rows * AUX_LEN).map(|_| rng.gen::<f64>() - 0.5).collect(),
        hidden: (0..rows * HIDDEN_DIM).map(|_| rng.gen::<f64>() - 0.5).collect(),
        look: (0..rows * LOOKAHEAD_DIM).map(|_| rng.gen::<f64>() - 0.5).collect(),
        actions: (0..rows).map(|_| rng.gen_range(0..4)).collect(),
        logp_old: Vec::new(),
        adv: (0..rows).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        returns: (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    };
    // stored log-probs sit near but not on the net's own, so some rows land
    // in the clipped branch and some do not
    let mut g = Graph::new();
    let ps = net.params().bind_frozen(&mut g);
    let fv = forward_graph(&mut g, &ps, rows, &b.depth, &b.aux, &b.hidden, &b.look).unwrap();
    let lp = g.categorical_logprob(fv.logits, &b.actions).unwrap();
    b.logp_old = g.value(lp).iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
    b
}

/// The exact loss shape the update optimizes: clipped surrogate plus value
/// and entropy terms, averaged over the batch.
fn ppo_loss(g: &mut Graph, ps: &VarTable, b: &FixedBatch) -> Var {
    let fv = forward_graph(g, ps, b.rows, &b.depth, &b.aux, &b.hidden, &b.look).unwrap();
    let lp_new = g.categorical_logprob(fv.logits, &b.actions).unwrap();
    let lp_old = g.constant_from(vec![b.rows], b.logp_old.clone()).unwrap();
    let dlp = g.sub(lp_new, lp_old).unwrap();
    let ratio = g.exp(dlp);
    let adv = g.constant_from(vec![b.rows], b.adv.clone()).unwrap();
    let s1 = g.mul(ratio, adv).unwrap();
    let clipped = g.clamp(ratio, 0.8, 1.2);
    let s2 = g.mul(clipped, adv).unwrap();
    let surr = g.min2(s1, s2).unwrap();
    let surr_sum = g.sum_all(surr);
    let policy = g.scale(surr_sum, -1.0);
    let ret = g.constant_from(vec![b.rows], b.returns.clone()).unwrap();
    let vdiff = g.sub(fv.value, ret).unwrap();
    let vsq = g.mul(vdiff, vdiff).unwrap();
    let vsum = g.sum_all(vsq);
    let vterm = g.scale(vsum, 0.5);
    let ent = g.entropy(fv.logits).unwrap();
    let esum = g.sum_all(ent);
    let eterm = g.scale(esum, -0.01);
    let a = g.add(policy, vterm).unwrap();
    let total = g.add(a, eterm).unwrap();
    g.scale(total, 1.0 / b.rows as f64)
}

#[test]
fn loss_gradients_match_finite_differences() {
    let net = PolicyNet::new(41);
    let batch = fixed_batch(&net, 6, 42);
    let mut rng = rng_from(43);

    let names: Vec<String> = net.params().iter().map(|(n, _)| n.to_string()).collect();
    let inputs: Vec<Tensor> = names
        .iter()
        .map(|n| {
            let t = net.params().get(n).unwrap();
            Tensor::from_vec(t.shape().to_vec(), t.data().to_vec()).unwrap()
        })
        .collect();
    let coords: Vec<Vec<usize>> = inputs
        .iter()
        .map(|t| {
            let mut all: Vec<usize> = (0..t.numel()).collect();
            all.shuffle(&mut rng);
            all.truncate(6);
            all
        })
        .collect();
    let cases: usize = coords.iter().map(Vec::len).sum();
    assert!(cases >= 100, "{cases} coordinate cases");

    let worst = grad_check_coords(&inputs, &coords, 1e-5, &mut |g, vars| {
        let table = VarTable(
            names.iter().cloned().zip(vars.iter().copied()).collect::<HashMap<String, Var>>(),
        );
        ppo_loss(g, &table, &batch)
    });
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn recurrent_path_carries_gradient_through_the_gate() {
    // perturbing the gate weights must move the loss: catch a dead cell wiring
    let net = PolicyNet::new(44);
    let batch = fixed_batch(&net, 4, 45);
    for target in ["pol.cell.wu", "pol.cell.wc", "pol.embed.w", "pol.flat.w", "pol.conv1.w"] {
        let names: Vec<String> = net.params().iter().map(|(n, _)| n.to_string()).collect();
        let inputs: Vec<Tensor> = names
            .iter()
            .map(|n| {
                let t = net.params().get(n).unwrap();
                Tensor::from_vec(t.shape().to_vec(), t.data().to_vec()).unwrap()
            })
            .collect();
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(&t.clone().requires_grad(true))).collect();
        let table =
            VarTable(names.iter().cloned().zip(vars.iter().copied()).collect::<HashMap<_, _>>());
        let loss = ppo_loss(&mut g, &table, &batch);
        g.backward(loss).unwrap();
        let idx = names.iter().position(|n| n == target).unwrap();
        let grad = g.grad(vars[idx]).expect("reached leaf");
        assert!(grad.iter().any(|v| *v != 0.0), "{target} received no gradient");
    }
}
