//! Structural properties of the transition model: frame causality, parity
//! between the tape and tape-free forwards, and rollout composition.

use grad_core::seeding::{indexed_seed, rng_from};
use grad_core::Graph;
use rand::Rng;
use world_model::transition::{transformer_states, TransitionModel};
use world_model::{
    transformer_forward, WmError, ACTION_COUNT, EMBED_DIM, LATENT_LEN, MAX_CONTEXT_FRAMES,
    PATCH_COUNT, TOKENS_PER_FRAME,
};

fn random_context(seed: u64, frames: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = rng_from(seed);
    let z = (0..frames)
        .map(|_| (0..LATENT_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let a = (0..frames).map(|_| rng.gen_range(0..ACTION_COUNT as u8)).collect();
    (z, a)
}

fn flat(z: &[Vec<f64>]) -> Vec<f64> {
    z.iter().flatten().copied().collect()
}

/// Token states [frames*9, EMBED_DIM] for a single context, via the graph.
fn states_of(model: &TransitionModel, z: &[Vec<f64>], actions: &[u8]) -> Vec<f64> {
    let frames = z.len();
    let mut g = Graph::new();
    let bound = model.params().bind_frozen(&mut g);
    let z_var = g
        .constant_from(vec![1, frames, PATCH_COUNT, EMBED_DIM], flat(z))
        .unwrap();
    let out = transformer_states(&mut g, &bound, z_var, actions, 1, frames).unwrap();
    g.value(out).to_vec()
}

#[test]
fn future_frames_cannot_touch_past_tokens() {
    let model = TransitionModel::new(9);
    for case in 0..40u64 {
        let frames = 2 + (case % 4) as usize; // 2..=5
        let (z, a) = random_context(indexed_seed(11, case), frames);
        let base = states_of(&model, &z, &a);

        // rewrite everything after a cut frame, including its action
        let cut = (case % (frames as u64 - 1)) as usize; // 0..frames-2
        let (z2_tail, a2_tail) = random_context(indexed_seed(12, case), frames);
        let mut z2 = z.clone();
        let mut a2 = a.clone();
        for f in cut + 1..frames {
            z2[f] = z2_tail[f].clone();
            a2[f] = a2_tail[f];
        }
        let edited = states_of(&model, &z2, &a2);

        let guarded = (cut + 1) * TOKENS_PER_FRAME * EMBED_DIM;
        for i in 0..guarded {
            assert!(
                (base[i] - edited[i]).abs() <= 1e-9,
                "case {case}: token state {i} moved by {}",
                (base[i] - edited[i]).abs()
            );
        }
        // sanity that the edit did reach the later frames
        let tail_moved = (guarded..base.len()).any(|i| (base[i] - edited[i]).abs() > 1e-6);
        assert!(tail_moved, "case {case}: edited future had no effect at all");
    }
}

#[test]
fn appending_a_frame_preserves_prefix_states() {
    let model = TransitionModel::new(10);
    let (z, a) = random_context(33, MAX_CONTEXT_FRAMES);
    for frames in 1..MAX_CONTEXT_FRAMES {
        let short = states_of(&model, &z[..frames], &a[..frames]);
        let long = states_of(&model, &z[..frames + 1], &a[..frames + 1]);
        for i in 0..short.len() {
            assert!(
                (short[i] - long[i]).abs() <= 1e-9,
                "frames={frames}: prefix state {i} changed"
            );
        }
    }
}

#[test]
fn last_action_changes_the_prediction() {
    let model = TransitionModel::new(11);
    let (z, mut a) = random_context(44, 3);
    a[2] = 0;
    let p0 = model.predict_next(&z, &a).unwrap();
    a[2] = 3;
    let p3 = model.predict_next(&z, &a).unwrap();
    let max_diff = p0.iter().zip(&p3).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(max_diff > 1e-6, "action had no effect: {max_diff}");
}

#[test]
fn graph_forward_matches_plain_forward_bitwise() {
    let model = TransitionModel::new(12);
    for frames in 1..=MAX_CONTEXT_FRAMES {
        let (z, a) = random_context(indexed_seed(55, frames as u64), frames);
        let plain = model.predict_next(&z, &a).unwrap();

        let mut g = Graph::new();
        let bound = model.params().bind_frozen(&mut g);
        let z_var = g
            .constant_from(vec![1, frames, PATCH_COUNT, EMBED_DIM], flat(&z))
            .unwrap();
        let pred = transformer_forward(&mut g, &bound, z_var, &a, 1, frames).unwrap();
        let graph = g.value(pred);
        assert_eq!(graph.len(), plain.len());
        for i in 0..plain.len() {
            assert_eq!(
                graph[i].to_bits(),
                plain[i].to_bits(),
                "frames={frames} coord {i}: {} vs {}",
                graph[i],
                plain[i]
            );
        }
    }
}

#[test]
fn batched_graph_rows_match_single_contexts() {
    let model = TransitionModel::new(13);
    let frames = 4;
    let (z0, a0) = random_context(71, frames);
    let (z1, a1) = random_context(72, frames);

    let mut g = Graph::new();
    let bound = model.params().bind_frozen(&mut g);
    let mut data = flat(&z0);
    data.extend(flat(&z1));
    let z_var = g
        .constant_from(vec![2, frames, PATCH_COUNT, EMBED_DIM], data)
        .unwrap();
    let mut actions = a0.clone();
    actions.extend(&a1);
    let pred = transformer_forward(&mut g, &bound, z_var, &actions, 2, frames).unwrap();
    let batched = g.value(pred);

    let p0 = model.predict_next(&z0, &a0).unwrap();
    let p1 = model.predict_next(&z1, &a1).unwrap();
    for i in 0..LATENT_LEN {
        assert_eq!(batched[i].to_bits(), p0[i].to_bits(), "row 0 coord {i}");
        assert_eq!(batched[LATENT_LEN + i].to_bits(), p1[i].to_bits(), "row 1 coord {i}");
    }
}

#[test]
fn lookahead_matches_appending_each_action() {
    let model = TransitionModel::new(14);
    for frames in [1usize, 2, 5] {
        let (z, a) = random_context(indexed_seed(91, frames as u64), frames);
        let past = &a[..frames - 1];
        let branches = model.lookahead(&z, past).unwrap();
        for cand in 0..ACTION_COUNT {
            let mut acts = past.to_vec();
            acts.push(cand as u8);
            let direct = model.predict_next(&z, &acts).unwrap();
            for i in 0..LATENT_LEN {
                assert_eq!(
                    branches[cand][i].to_bits(),
                    direct[i].to_bits(),
                    "frames={frames} action {cand} coord {i}"
                );
            }
        }
    }
}

#[test]
fn rollout_composes_single_step_predictions() {
    let model = TransitionModel::new(15);
    let (z, a) = random_context(101, MAX_CONTEXT_FRAMES);
    let plan = [2u8, 0, 1, 3];
    let rollout = model.imagine_rollout(&z, &a, &plan).unwrap();
    assert_eq!(rollout.len(), plan.len());

    // replay the same sliding-window recursion by hand
    let mut ctx = z.clone();
    let mut acts = a.clone();
    for (i, &fa) in plan.iter().enumerate() {
        let step = model.predict_next(&ctx, &acts).unwrap();
        for j in 0..LATENT_LEN {
            assert_eq!(rollout[i][j].to_bits(), step[j].to_bits(), "step {i} coord {j}");
        }
        ctx.push(step);
        acts.push(fa);
        if ctx.len() > MAX_CONTEXT_FRAMES {
            ctx.remove(0);
            acts.remove(0);
        }
    }

    // first prediction never depends on the plan
    let other = model.imagine_rollout(&z, &a, &[1u8, 1, 1, 1]).unwrap();
    for j in 0..LATENT_LEN {
        assert_eq!(rollout[0][j].to_bits(), other[0][j].to_bits(), "coord {j}");
    }
    // but the plan changes later predictions
    let moved = rollout[1].iter().zip(&other[1]).any(|(x, y)| (x - y).abs() > 1e-9);
    assert!(moved, "plan action had no effect on the second step");
}

#[test]
fn malformed_contexts_are_rejected() {
    let model = TransitionModel::new(16);
    let (z, a) = random_context(111, 3);

    assert!(matches!(
        model.predict_next(&[], &[]),
        Err(WmError::BadContext { frames: 0 })
    ));
    let (z6, a6) = random_context(112, 6);
    assert!(matches!(
        model.predict_next(&z6, &a6),
        Err(WmError::BadContext { frames: 6 })
    ));
    assert!(matches!(
        model.predict_next(&z, &a[..2]),
        Err(WmError::ActionCount { .. })
    ));
    let mut bad = a.clone();
    bad[1] = 4;
    assert!(matches!(model.predict_next(&z, &bad), Err(WmError::BadAction { value: 4 })));
    let mut short = z.clone();
    short[0].pop();
    assert!(matches!(
        model.predict_next(&short, &a),
        Err(WmError::BadLatentLen { expected: 256, found: 255 })
    ));
    assert!(matches!(
        model.imagine_rollout(&z, &a, &[]),
        Err(WmError::EmptyPlan)
    ));
    assert!(matches!(
        model.lookahead(&z, &a),
        Err(WmError::ActionCount { .. })
    ));
}
