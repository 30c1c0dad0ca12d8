//! Training driver: synchronous rollout collection across parallel envs,
//! sealed-buffer PPO updates, and periodic greedy evaluation on held-out
//! episode seeds.
//!
//! Each env worker owns its episode stream, its recurrent state, and its
//! action rng, so a lane's trajectory is a pure function of the master seed
//! and the parameter snapshot. Workers run on scoped threads and the learner
//! joins them in env order, which keeps runs byte-for-byte reproducible.

use std::io::Write as IoWrite;
use std::path::Path;

use grad_core::seeding::{indexed_seed, rng_from, stream_seed};
use grad_core::OptimizerState;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use socialnav_sim::{
    compute_metrics, generate_scene, Action, Env, EpisodeRecord, MetricsReport, Observation,
    SceneConfig,
};
use world_model::WorldModel;

use crate::buffer::{RolloutBuffer, StepSample};
use crate::error::{PolicyError, Result};
use crate::features::{aux_features, imagine_branches, pool_branches, LatentContext};
use crate::net::{ActMode, PolicyNet};
use crate::reward::{shape_reward, ShapingConfig};
use crate::update::{ppo_update, PPOConfig, UpdateStats};
use crate::{HIDDEN_DIM, LOOKAHEAD_DIM};

/// Which of the two world-model hooks are live. Disabling `lookahead` feeds
/// the policy an all-zero feature in place of the imagined latents; disabling
/// `traj_reward` drops the shaping term from every reward.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub lookahead: bool,
    pub traj_reward: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags { lookahead: true, traj_reward: true }
    }
}

/// Scene family and crowd size the policy trains against.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSetup {
    pub scene: SceneConfig,
    pub n_humans: usize,
}

impl Default for SimSetup {
    fn default() -> Self {
        SimSetup { scene: SceneConfig::default(), n_humans: 4 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBudget {
    pub total_env_steps: u64,
    /// Env steps between greedy evals; 0 means only the final eval runs.
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Stop once an eval reaches this success rate, if set.
    pub stop_at_sr: Option<f64>,
    pub seed: u64,
}

impl Default for RunBudget {
    fn default() -> Self {
        RunBudget {
            total_env_steps: 200_000,
            eval_every: 25_000,
            eval_episodes: 40,
            stop_at_sr: None,
            seed: 0,
        }
    }
}

/// One learning-curve row: greedy eval metrics plus the latest update stats.
#[derive(Clone, Copy, Debug)]
pub struct CurveRow {
    pub env_steps: u64,
    pub sr: f64,
    pub spl: f64,
    pub psc: f64,
    pub h_coll: f64,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub struct PolicyTrainOutput {
    pub net: PolicyNet,
    pub curve: Vec<CurveRow>,
    pub final_eval: MetricsReport,
    pub env_steps: u64,
}

/// One env worker's episode stream, recurrent state, and action rng.
struct EnvRunner {
    idx: usize,
    env: Env,
    obs: Observation,
    hidden: Vec<f64>,
    ctx: LatentContext,
    rng: ChaCha12Rng,
    episodes_started: u64,
    scene_stream: u64,
    env_stream: u64,
}

// env index and local episode counter fold into one child index, so a lane's
// seeds never depend on what the other lanes did
const EPISODE_STRIDE: u64 = 1 << 32;

impl EnvRunner {
    fn new(idx: usize, setup: &SimSetup, wm: &WorldModel, master: u64) -> Result<Self> {
        let scene_stream = stream_seed(master, "train-scenes");
        let env_stream = stream_seed(master, "train-envs");
        let child = idx as u64 * EPISODE_STRIDE;
        let scene = generate_scene(indexed_seed(scene_stream, child), &setup.scene)?;
        let env = Env::reset(&scene, 1, setup.n_humans, indexed_seed(env_stream, child))?;
        let obs = env.observations().remove(0);
        let mut ctx = LatentContext::new();
        ctx.reset(wm.encoder.encode(&obs.depth)?);
        Ok(EnvRunner {
            idx,
            env,
            obs,
            hidden: vec![0.0; HIDDEN_DIM],
            ctx,
            rng: rng_from(indexed_seed(stream_seed(master, "policy-act"), idx as u64)),
            episodes_started: 1,
            scene_stream,
            env_stream,
        })
    }

    fn next_episode(&mut self, setup: &SimSetup, wm: &WorldModel) -> Result<()> {
        let child = self.idx as u64 * EPISODE_STRIDE + self.episodes_started;
        self.episodes_started += 1;
        let scene = generate_scene(indexed_seed(self.scene_stream, child), &setup.scene)?;
        self.env = Env::reset(&scene, 1, setup.n_humans, indexed_seed(self.env_stream, child))?;
        self.obs = self.env.observations().remove(0);
        self.hidden = vec![0.0; HIDDEN_DIM];
        self.ctx.reset(wm.encoder.encode(&self.obs.depth)?);
        Ok(())
    }
}

/// Lookahead feature and, when shaping is on, the per-action imagined
/// latents for the executed-action decode.
fn wm_features(
    wm: &WorldModel,
    ctx: &LatentContext,
    flags: AblationFlags,
) -> Result<(Vec<f64>, Option<[Vec<f64>; 4]>)> {
    if !flags.lookahead && !flags.traj_reward {
        return Ok((vec![0.0; LOOKAHEAD_DIM], None));
    }
    let branches = imagine_branches(&wm.transition, ctx)?;
    let look = if flags.lookahead {
        pool_branches(&branches)?
    } else {
        vec![0.0; LOOKAHEAD_DIM]
    };
    Ok((look, Some(branches)))
}

/// Steps one lane for `rollout_len` steps, starting episodes as needed.
/// Returns the collected samples and the bootstrap value of the state left
/// standing at the end.
fn collect_lane(
    runner: &mut EnvRunner,
    net: &PolicyNet,
    wm: &WorldModel,
    setup: &SimSetup,
    shaping: &ShapingConfig,
    flags: AblationFlags,
    rollout_len: usize,
) -> Result<(Vec<StepSample>, f64)> {
    let mut out = Vec::with_capacity(rollout_len);
    for _ in 0..rollout_len {
        let (look, branches) = wm_features(wm, &runner.ctx, flags)?;
        let aux = aux_features(&runner.obs, runner.env.scene());
        let dec = net.act(
            &runner.obs.depth,
            &aux,
            &runner.hidden,
            &look,
            ActMode::Sample,
            &mut runner.rng,
        )?;
        let tracked = runner.env.humans_in_fov(0).len().min(world_model::TRACKED_HUMANS);
        let validity = (1u8 << tracked) - 1;
        let action = Action::from_id(dec.action).expect("logits cover exactly the action set");
        let step = runner.env.step(&[Some(action)])?;
        let mut terms = step.rewards[0];
        if flags.traj_reward && validity != 0 {
            let branches = branches.as_ref().expect("shaping requested imagination");
            let decoded = wm.heads.decode(&branches[dec.action as usize])?;
            terms = shape_reward(terms, &decoded.traj, validity, shaping);
        }
        out.push(StepSample {
            depth: runner.obs.depth.clone(),
            aux: aux.to_vec(),
            hidden: runner.hidden.clone(),
            lookahead: look,
            action: dec.action,
            log_prob: dec.log_prob,
            value: dec.value,
            reward: terms,
            done: step.done[0],
        });
        runner.hidden = dec.hidden_next;
        if step.done[0] {
            runner.next_episode(setup, wm)?;
        } else {
            runner.obs = step.observations.into_iter().next().expect("one robot");
            runner.ctx.push(dec.action, wm.encoder.encode(&runner.obs.depth)?);
        }
    }
    // bootstrap value for the state the lane stopped in, greedy pass so the
    // rng stays untouched
    let (look, _) = wm_features(wm, &runner.ctx, flags)?;
    let aux = aux_features(&runner.obs, runner.env.scene());
    let dec =
        net.act(&runner.obs.depth, &aux, &runner.hidden, &look, ActMode::Argmax, &mut runner.rng)?;
    Ok((out, dec.value))
}

/// Greedy rollouts on a held-out episode seed stream.
pub fn evaluate_policy(
    net: &PolicyNet,
    wm: &WorldModel,
    setup: &SimSetup,
    flags: AblationFlags,
    episodes: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let scene_stream = stream_seed(seed, "eval-scenes");
    let env_stream = stream_seed(seed, "eval-envs");
    let mut rng = rng_from(stream_seed(seed, "eval-act"));
    let mut records: Vec<EpisodeRecord> = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let scene = generate_scene(indexed_seed(scene_stream, ep as u64), &setup.scene)?;
        let mut env =
            Env::reset(&scene, 1, setup.n_humans, indexed_seed(env_stream, ep as u64))?;
        let mut obs = env.observations().remove(0);
        let mut hidden = vec![0.0; HIDDEN_DIM];
        let mut ctx = LatentContext::new();
        ctx.reset(wm.encoder.encode(&obs.depth)?);
        while !env.all_done() {
            let (look, _) = wm_features(wm, &ctx, flags)?;
            let aux = aux_features(&obs, env.scene());
            let dec = net.act(&obs.depth, &aux, &hidden, &look, ActMode::Argmax, &mut rng)?;
            let action = Action::from_id(dec.action).expect("action ids are dense");
            let step = env.step(&[Some(action)])?;
            hidden = dec.hidden_next;
            if !step.done[0] {
                obs = step.observations.into_iter().next().expect("one robot");
                ctx.push(dec.action, wm.encoder.encode(&obs.depth)?);
            }
        }
        records.push(env.episode_record());
    }
    Ok(compute_metrics(&records)?)
}

pub fn train_policy(
    wm: &WorldModel,
    setup: &SimSetup,
    ppo: &PPOConfig,
    shaping: &ShapingConfig,
    flags: AblationFlags,
    budget: &RunBudget,
) -> Result<PolicyTrainOutput> {
    if ppo.n_envs == 0 || ppo.rollout_len == 0 {
        return Err(PolicyError::BadConfig("n_envs and rollout_len must be positive".into()));
    }
    let mut net = PolicyNet::new(budget.seed);
    let mut opt = OptimizerState::adam(ppo.lr);
    let mut runners: Vec<EnvRunner> = (0..ppo.n_envs)
        .map(|i| EnvRunner::new(i, setup, wm, budget.seed))
        .collect::<Result<_>>()?;
    let mut buf = RolloutBuffer::new(ppo.n_envs, ppo.rollout_len);
    let eval_seed = stream_seed(budget.seed, "heldout-eval");

    let mut curve = Vec::new();
    let mut env_steps: u64 = 0;
    let mut next_eval = if budget.eval_every == 0 { u64::MAX } else { budget.eval_every };
    let mut last_eval: Option<MetricsReport> = None;
    while env_steps < budget.total_env_steps {
        buf.reset();
        let lanes: Vec<Result<(Vec<StepSample>, f64)>> = std::thread::scope(|s| {
            let handles: Vec<_> = runners
                .iter_mut()
                .map(|r| {
                    let net = &net;
                    s.spawn(move || {
                        collect_lane(r, net, wm, setup, shaping, flags, ppo.rollout_len)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("lane worker panicked")).collect()
        });
        let mut bootstraps = Vec::with_capacity(ppo.n_envs);
        for (env, lane) in lanes.into_iter().enumerate() {
            let (samples, bootstrap) = lane?;
            for s in samples {
                buf.push(env, s)?;
            }
            bootstraps.push(bootstrap);
        }
        buf.seal(&bootstraps, ppo.gamma, ppo.lambda)?;
        let mean_reward = {
            let n = buf.len() as f64;
            (0..buf.len()).map(|i| buf.flat(i).reward.total).sum::<f64>() / n
        };
        let stats: UpdateStats = ppo_update(&mut net, &buf, ppo, &mut opt)?;
        env_steps += (ppo.n_envs * ppo.rollout_len) as u64;

        if env_steps >= next_eval || env_steps >= budget.total_env_steps {
            let report =
                evaluate_policy(&net, wm, setup, flags, budget.eval_episodes, eval_seed)?;
            curve.push(CurveRow {
                env_steps,
                sr: report.sr,
                spl: report.spl,
                psc: report.psc,
                h_coll: report.h_coll,
                mean_reward,
                policy_loss: stats.policy_loss,
                value_loss: stats.value_loss,
                entropy: stats.entropy,
            });
            let sr = report.sr;
            last_eval = Some(report);
            while next_eval <= env_steps {
                next_eval = next_eval.saturating_add(budget.eval_every.max(1));
            }
            if budget.stop_at_sr.is_some_and(|th| sr >= th) {
                break;
            }
        }
    }
    let final_eval = match last_eval {
        Some(r) if curve.last().map(|c| c.env_steps) == Some(env_steps) => r,
        _ => evaluate_policy(&net, wm, setup, flags, budget.eval_episodes, eval_seed)?,
    };
    Ok(PolicyTrainOutput { net, curve, final_eval, env_steps })
}


pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "env_steps,SR,SPL,PSC,H-Coll,mean_reward,policy_loss,value_loss,entropy")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            r.env_steps,
            r.sr,
            r.spl,
            r.psc,
            r.h_coll,
            r.mean_reward,
            r.policy_loss,
            r.value_loss,
            r.entropy
        )?;
    }
    Ok(())
}
