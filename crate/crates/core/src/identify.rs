//! Simulator identification by adversarial RL and policy refinement in the
//! identified simulator.
//!
//! One identification iteration: roll the behavior policy out in the hybrid
//! simulator, train the discriminator on target-vs-simulated tuples, reward
//! every simulated step with the updated discriminator's logit plus the
//! adaptive alive bonus, then take a PPO step on the parameter function.

use serde::{Deserialize, Serialize};

use crate::discriminator::{self, Discriminator, DiscriminatorConfig};
use crate::envs::{self, Env, EnvSpec, TargetGap, TaskRewardConfig};
use crate::error::{contract, Error, Result};
use crate::hybrid::{param_input, ParamFnInit, ParamFunction, ParamLayout, ParamSource};
use crate::ppo::{
    build_batch, ppo_update, train_policy, BehaviorPolicy, GaussianPolicy, PolicyTrainConfig, PpoConfig, PpoState,
    Segment, TrainStats, ValueFunction,
};
use crate::rng::{self, Stream};
use crate::trajectory::{mean_length, Simulator, Trajectory, TransitionTuple};

/// Where a target dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub env: String,
    pub gap: TargetGap,
    pub seed: u64,
    /// Path or label of the behavior-policy checkpoint, if known.
    pub policy: Option<String>,
    pub noise_std: f64,
}

/// Target-domain trajectories collected once, up front.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDataset {
    pub trajectories: Vec<Trajectory>,
    /// Mean episode length `l_R` in steps.
    pub mean_length: f64,
    pub provenance: Provenance,
}

impl TargetDataset {
    pub fn new(trajectories: Vec<Trajectory>, provenance: Provenance) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(contract("a target dataset needs at least one trajectory"));
        }
        let total: usize = trajectories.iter().map(Trajectory::len).sum();
        if total == 0 {
            return Err(Error::NoData(
                "every target episode has zero length; the behavior policy performs too poorly to identify anything"
                    .into(),
            ));
        }
        Ok(Self { mean_length: mean_length(&trajectories), trajectories, provenance })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn tuples(&self) -> Vec<TransitionTuple> {
        self.trajectories.iter().flat_map(|t| t.tuples()).collect()
    }
}

/// Run `n` episodes of the behavior policy (mean action plus Gaussian noise
/// of std `noise_std`) on the target environment. Task rewards are recorded
/// with `reward` when given.
pub fn collect_target_data(
    policy: &GaussianPolicy,
    target: &Env,
    n: usize,
    noise_std: f64,
    seed: u64,
    reward: Option<&TaskRewardConfig>,
) -> Result<TargetDataset> {
    if n == 0 {
        return Err(contract("collect at least one target trajectory"));
    }
    let sim = Simulator::new(target.clone(), ParamSource::Nominal);
    let actor = BehaviorPolicy { policy, noise_std };
    let trajs = sim.collect(&actor, n, rng::derive_seed(seed, Stream::Env, 1), 0, reward)?;
    TargetDataset::new(
        trajs,
        Provenance {
            env: target.spec.kind.name().into(),
            gap: target.gap.clone(),
            seed,
            policy: None,
            noise_std,
        },
    )
}

/// Identification reward from a clamped discriminator score: `ln(d / (1 - d))`.
pub fn gan_reward(d: f64) -> f64 {
    (d / (1.0 - d)).ln()
}

/// Adaptive alive bonus `ln(l_i / l_R)`.
pub fn alive_bonus(l_i: f64, l_r: f64) -> Result<f64> {
    if l_i <= 0.0 || !l_i.is_finite() {
        return Err(Error::NoData("no simulated steps this iteration; the alive bonus is undefined".into()));
    }
    if l_r <= 0.0 || !l_r.is_finite() {
        return Err(contract("target mean length must be positive"));
    }
    Ok((l_i / l_r).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub behavior_noise: f64,
    pub alive_bonus: bool,
    /// Sample parameters from `f` (true) or use its mean during rollouts.
    pub stochastic: bool,
    pub early_stop: bool,
    pub early_stop_window: usize,
    pub early_stop_band: (f64, f64),
    /// Never stop before this many iterations.
    pub min_iterations: usize,
    pub param_fn: ParamFnInit,
    /// Parameter ranges; `None` uses the system's default layout.
    pub layout: Option<ParamLayout>,
    pub value_hidden: Vec<usize>,
    pub ppo: PpoConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            episodes_per_iter: 50,
            behavior_noise: 0.25,
            alive_bonus: true,
            stochastic: true,
            early_stop: true,
            early_stop_window: 20,
            early_stop_band: (0.45, 0.55),
            min_iterations: 20,
            param_fn: ParamFnInit::default(),
            layout: None,
            value_hidden: vec![64, 64],
            ppo: PpoConfig { lr: 3e-4, epochs: 5, target_kl: Some(0.02), ..PpoConfig::default() },
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

/// One row of identification diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Mean post-update discriminator score on simulated tuples.
    pub mean_score: f64,
    /// Same, on target tuples.
    pub mean_target_score: f64,
    pub mean_reward: f64,
    pub mean_length: f64,
    pub alive_bonus: f64,
    pub disc_loss: f64,
    pub approx_kl: f64,
    pub entropy: f64,
    /// Mean of `f`'s deterministic output over visited (s, a), per layout entry.
    pub mean_params: Vec<f64>,
}

/// The rollouts and rewards of the last completed iteration.
#[derive(Debug, Clone)]
pub struct IterationSnapshot {
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<Vec<f64>>,
    pub alive_bonus: f64,
}

#[derive(Debug, Clone)]
pub struct IdentificationRun {
    pub config: IdentifyConfig,
    pub metrics: Vec<IterationMetrics>,
    pub param_fn: ParamFunction,
    pub discriminator: Discriminator,
    pub stopped_early: bool,
    /// Set when a non-finite update ended the run; `param_fn` is then the
    /// last valid iterate.
    pub aborted: Option<String>,
    pub last: Option<IterationSnapshot>,
}

/// Mean deterministic output of `f` over the `(s, a)` pairs of `trajs`.
pub fn mean_param_outputs(f: &ParamFunction, spec: &EnvSpec, trajs: &[Trajectory]) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; f.layout.len()];
    let mut n = 0usize;
    for step in trajs.iter().flat_map(|t| &t.steps) {
        let head = f.head(&param_input(&envs::observe_exact(spec, &step.state), &step.action))?;
        let c = f.layout.squash_into(&head.mu, &f.base);
        for (s, r) in sum.iter_mut().zip(&f.layout.ranges) {
            *s += c.get(r.kind);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoData("no visited states to average over".into()));
    }
    Ok(sum.into_iter().map(|s| s / n as f64).collect())
}

/// Input scale of the parameter function's critic: observation scales then
/// action limits.
fn param_value_scale(spec: &EnvSpec) -> Vec<f64> {
    let mut s = spec.obs_scale.clone();
    s.extend(std::iter::repeat_n(spec.action_limit, spec.action_dim()));
    s
}

/// Fresh parameter function for `spec` according to `cfg`.
pub fn initial_param_fn(spec: &EnvSpec, cfg: &IdentifyConfig, seed: u64) -> Result<ParamFunction> {
    let layout = cfg.layout.clone().unwrap_or_else(|| ParamLayout::default_for(spec));
    layout.validate(spec)?;
    ParamFunction::new(spec, layout, &cfg.param_fn, &mut rng::stream(seed, Stream::ParamFn, u64::MAX))
}

/// Identify the hybrid simulator from `dataset`. Only the hybrid simulator
/// built on `source` is stepped; the target environment is never touched.
pub fn identify(
    dataset: &TargetDataset,
    behavior: &GaussianPolicy,
    source: &EnvSpec,
    cfg: &IdentifyConfig,
    seed: u64,
) -> Result<IdentificationRun> {
    let f = initial_param_fn(source, cfg, seed)?;
    identify_from(dataset, behavior, source, cfg, seed, f)
}

/// [`identify`] starting from a given parameter function.
pub fn identify_from(
    dataset: &TargetDataset,
    behavior: &GaussianPolicy,
    source: &EnvSpec,
    cfg: &IdentifyConfig,
    seed: u64,
    mut f: ParamFunction,
) -> Result<IdentificationRun> {
    if dataset.is_empty() || dataset.mean_length <= 0.0 {
        return Err(Error::NoData("empty target dataset".into()));
    }
    let real = dataset.tuples();
    let mut d_rng = rng::stream(seed, Stream::Discriminator, 0);
    let mut d = Discriminator::new(&real, &cfg.discriminator, &mut d_rng)?;
    let mut value = ValueFunction::new(
        param_value_scale(source),
        &cfg.value_hidden,
        cfg.ppo.value_scale,
        &mut rng::stream(seed, Stream::Init, 7),
    )?;
    let mut state = PpoState::new(&f, &value, &cfg.ppo);
    let env = Env::source(source.clone())?;
    let actor_seed = rng::derive_seed(seed, Stream::ParamFn, 2);
    let actor = BehaviorPolicy { policy: behavior, noise_std: cfg.behavior_noise };

    let mut run = IdentificationRun {
        config: cfg.clone(),
        metrics: Vec::new(),
        param_fn: f.clone(),
        discriminator: d.clone(),
        stopped_early: false,
        aborted: None,
        last: None,
    };
    let mut episode = 0u64;
    for it in 0..cfg.iterations {
        let sim = Simulator::new(env.clone(), ParamSource::Learned { f: f.clone(), stochastic: cfg.stochastic });
        let trajs = sim.collect(&actor, cfg.episodes_per_iter, actor_seed, episode, None)?;
        episode += trajs.len() as u64;
        let sim_tuples: Vec<TransitionTuple> = trajs.iter().flat_map(|t| t.tuples()).collect();
        let l_i = mean_length(&trajs);
        let bonus = if cfg.alive_bonus { alive_bonus(l_i, dataset.mean_length)? } else { 0.0 };
        if sim_tuples.is_empty() {
            return Err(Error::NoData("the hybrid simulator produced no transitions".into()));
        }
        let losses = discriminator::train_discriminator(
            &mut d,
            &real,
            &sim_tuples,
            cfg.discriminator.epochs,
            cfg.discriminator.minibatch,
            &mut d_rng,
        )?;

        // Rewards use the discriminator after this iteration's update.
        let mut segments = Vec::with_capacity(trajs.len());
        let mut rewards = Vec::with_capacity(trajs.len());
        let (mut score_sum, mut reward_sum) = (0.0, 0.0);
        for t in &trajs {
            let mut seg = Segment {
                inputs: Vec::with_capacity(t.len()),
                samples: Vec::with_capacity(t.len()),
                log_probs: Vec::with_capacity(t.len()),
                rewards: Vec::with_capacity(t.len()),
                terminal: t.terminated,
                bootstrap_input: None,
            };
            for step in &t.steps {
                let s = d.score(&step.tuple())?;
                let r = gan_reward(s) + bonus;
                score_sum += s;
                reward_sum += r;
                seg.inputs.push(param_input(&envs::observe_exact(source, &step.state), &step.action));
                seg.samples.push(step.param_sample.clone());
                seg.log_probs.push(step.param_log_prob);
                seg.rewards.push(r);
            }
            seg.bootstrap_input = seg.inputs.last().cloned();
            rewards.push(seg.rewards.clone());
            segments.push(seg);
        }
        let n_sim = sim_tuples.len() as f64;
        let target_score =
            real.iter().map(|t| d.score(t)).sum::<Result<f64>>()? / real.len() as f64;

        let batch = build_batch(&segments, &value, cfg.ppo.gamma, cfg.ppo.lambda)?;
        let mut ppo_rng = rng::stream(seed, Stream::ParamFn, 1_000_000 + it as u64);
        let diag = ppo_update(&mut f, &mut value, &mut state, &batch, &cfg.ppo, &mut ppo_rng)?;
        if diag.aborted {
            run.aborted = Some(format!("parameter-function update became non-finite at iteration {it}"));
            break;
        }
        run.metrics.push(IterationMetrics {
            iteration: it,
            mean_score: score_sum / n_sim,
            mean_target_score: target_score,
            mean_reward: reward_sum / n_sim,
            mean_length: l_i,
            alive_bonus: bonus,
            disc_loss: losses.last().copied().unwrap_or(f64::NAN),
            approx_kl: diag.approx_kl,
            entropy: diag.entropy,
            mean_params: mean_param_outputs(&f, source, &trajs)?,
        });
        run.param_fn = f.clone();
        run.discriminator = d.clone();
        run.last = Some(IterationSnapshot { trajectories: trajs, rewards, alive_bonus: bonus });

        if cfg.early_stop && it + 1 >= cfg.min_iterations.max(cfg.early_stop_window) {
            let w = cfg.early_stop_window.max(1);
            let avg = run.metrics[run.metrics.len() - w..].iter().map(|m| m.mean_score).sum::<f64>() / w as f64;
            if avg >= cfg.early_stop_band.0 && avg <= cfg.early_stop_band.1 {
                run.stopped_early = true;
                break;
            }
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Policy-training settings; `train.ppo.lr` is the behavior policy's rate.
    pub train: PolicyTrainConfig,
    /// Multiplier on the behavior learning rate (halved by default).
    pub lr_factor: f64,
    pub stochastic: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { train: PolicyTrainConfig::default(), lr_factor: 0.5, stochastic: true }
    }
}

/// Refine `behavior` with PPO inside the hybrid simulator defined by `f`.
/// Weights are inherited, the critic is re-initialized and the learning rate
/// is scaled by `lr_factor`. No target-domain environment is involved.
pub fn refine_policy(
    f: &ParamFunction,
    behavior: &GaussianPolicy,
    source: &EnvSpec,
    reward: &TaskRewardConfig,
    cfg: &RefineConfig,
    seed: u64,
) -> Result<(GaussianPolicy, Vec<TrainStats>)> {
    let sim = Simulator::new(
        Env::source(source.clone())?,
        ParamSource::Learned { f: f.clone(), stochastic: cfg.stochastic },
    );
    refine_in(&sim, behavior, reward, cfg, seed)
}

/// Warm-started refinement in an arbitrary simulator.
pub fn refine_in(
    sim: &Simulator,
    behavior: &GaussianPolicy,
    reward: &TaskRewardConfig,
    cfg: &RefineConfig,
    seed: u64,
) -> Result<(GaussianPolicy, Vec<TrainStats>)> {
    let mut train = cfg.train.clone();
    train.ppo.lr *= cfg.lr_factor;
    train_policy(sim, reward, &train, rng::derive_seed(seed, Stream::Policy, 3), Some(behavior))
}

/// Deterministic evaluation returns: `n` episodes with the policy mean.
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    sim: &Simulator,
    reward: &TaskRewardConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let actor = BehaviorPolicy { policy, noise_std: 0.0 };
    let trajs = sim.collect(&actor, n, rng::derive_seed(seed, Stream::Eval, 0), 0, Some(reward))?;
    Ok(trajs.iter().map(Trajectory::total_reward).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gan_reward_values() {
        assert_eq!(gan_reward(0.5), 0.0);
        assert!((gan_reward(0.731059) - 1.0).abs() < 1e-4);
        assert!((gan_reward(1.0 - discriminator::EPS) - 13.8155).abs() < 1e-4);
    }

    #[test]
    fn alive_bonus_values() {
        assert_eq!(alive_bonus(40.0, 40.0).unwrap(), 0.0);
        assert!((alive_bonus(80.0, 40.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((alive_bonus(20.0, 40.0).unwrap() + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(alive_bonus(0.0, 40.0), Err(Error::NoData(_))));
    }
}
