//! Clipped-surrogate PPO with generalized advantage estimation.
//!
//! The same update drives two kinds of agents: control policies acting on
//! observations, and the simulation-parameter function acting on
//! `(state, action)` inputs. Both implement [`PpoModel`].

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, TaskRewardConfig};
use crate::error::{contract, Error, Result};
use crate::hybrid::{ParamFnCache, ParamFunction};
use crate::nn::{self, AdamState, ForwardCache, GaussianHead, MlpNet, NetCheckpoint};
use crate::rng::{self, Rng, Stream};
use crate::trajectory::{Actor, ActorOutput, Simulator, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr: f64,
    pub value_lr: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    /// Stop the epoch loop once the approximate KL exceeds this.
    pub target_kl: Option<f64>,
    /// Value targets are divided by this before regression.
    pub value_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            value_lr: 1e-3,
            clip: 0.2,
            epochs: 10,
            minibatch: 256,
            gamma: 0.99,
            lambda: 0.95,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
            target_kl: Some(0.03),
            value_scale: 10.0,
        }
    }
}

/// A differentiable Gaussian agent that PPO can update.
pub trait PpoModel {
    type Cache;
    fn num_params(&self) -> usize;
    fn flat_params(&self) -> Vec<f64>;
    fn set_flat_params(&mut self, p: &[f64]);
    fn head_cached(&self, input: &[f64]) -> Result<(GaussianHead, Self::Cache)>;
    /// Accumulate d loss / d params given d loss / d (mu, raw log_sigma).
    fn accumulate_grad(&self, cache: &Self::Cache, d_mu: &[f64], d_ls: &[f64], grad: &mut [f64]) -> Result<()>;
}

/// Observation -> Gaussian action policy with a state-independent log std.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: MlpNet,
    pub log_std: Vec<f64>,
    pub obs_scale: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(spec: &EnvSpec, hidden: &[usize], init_log_std: f64, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![spec.obs_dim()];
        sizes.extend(hidden);
        sizes.push(spec.action_dim());
        Ok(Self {
            net: MlpNet::new(&sizes, 0.01, rng)?,
            log_std: vec![init_log_std; spec.action_dim()],
            obs_scale: spec.obs_scale.clone(),
        })
    }

    fn normalized(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.obs_scale.len() {
            return Err(contract(format!("policy expects {} observations, got {}", self.obs_scale.len(), obs.len())));
        }
        Ok(obs.iter().zip(&self.obs_scale).map(|(o, s)| o / s).collect())
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(&self.normalized(obs)?)
    }

    pub fn head(&self, obs: &[f64]) -> Result<GaussianHead> {
        Ok(GaussianHead::new(self.mean(obs)?, self.log_std.clone()))
    }

    pub fn to_checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            format: POLICY_FORMAT.into(),
            version: nn::NET_VERSION,
            obs_scale: self.obs_scale.clone(),
            log_std: self.log_std.clone(),
            net: self.net.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ckpt: &PolicyCheckpoint) -> Result<Self> {
        if ckpt.format != POLICY_FORMAT || ckpt.version != nn::NET_VERSION {
            return Err(Error::Schema(format!("unsupported policy checkpoint {} v{}", ckpt.format, ckpt.version)));
        }
        let net = MlpNet::from_checkpoint(&ckpt.net)?;
        if net.input_dim() != ckpt.obs_scale.len() || net.output_dim() != ckpt.log_std.len() {
            return Err(Error::Schema("policy checkpoint dimensions disagree".into()));
        }
        Ok(Self { net, log_std: ckpt.log_std.clone(), obs_scale: ckpt.obs_scale.clone() })
    }
}

pub const POLICY_FORMAT: &str = "advsim-policy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format: String,
    pub version: u32,
    pub obs_scale: Vec<f64>,
    pub log_std: Vec<f64>,
    pub net: NetCheckpoint,
}

impl Actor for GaussianPolicy {
    fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    fn distribution(&self, obs: &[f64]) -> Result<ActorOutput> {
        Ok(ActorOutput::Stochastic(self.head(obs)?))
    }
}

impl PpoModel for GaussianPolicy {
    type Cache = ForwardCache;

    fn num_params(&self) -> usize {
        self.net.num_params() + self.log_std.len()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    fn set_flat_params(&mut self, p: &[f64]) {
        let n = self.net.num_params();
        self.net.params_mut().copy_from_slice(&p[..n]);
        self.log_std.copy_from_slice(&p[n..]);
    }

    fn head_cached(&self, input: &[f64]) -> Result<(GaussianHead, ForwardCache)> {
        let cache = self.net.forward_cached(&self.normalized(input)?)?;
        let head = GaussianHead::new(cache.output().to_vec(), self.log_std.clone());
        Ok((head, cache))
    }

    fn accumulate_grad(&self, cache: &ForwardCache, d_mu: &[f64], d_ls: &[f64], grad: &mut [f64]) -> Result<()> {
        let n = self.net.num_params();
        let (g_net, g_ls) = grad.split_at_mut(n);
        self.net.backward(cache, d_mu, g_net)?;
        for (g, d) in g_ls.iter_mut().zip(d_ls) {
            *g += d;
        }
        Ok(())
    }
}

impl PpoModel for ParamFunction {
    type Cache = ParamFnCache;

    fn num_params(&self) -> usize {
        ParamFunction::num_params(self)
    }

    fn flat_params(&self) -> Vec<f64> {
        ParamFunction::flat_params(self)
    }

    fn set_flat_params(&mut self, p: &[f64]) {
        ParamFunction::set_flat_params(self, p)
    }

    fn head_cached(&self, input: &[f64]) -> Result<(GaussianHead, ParamFnCache)> {
        ParamFunction::head_cached(self, input)
    }

    fn accumulate_grad(&self, cache: &ParamFnCache, d_mu: &[f64], d_ls: &[f64], grad: &mut [f64]) -> Result<()> {
        ParamFunction::accumulate_grad(self, cache, d_mu, d_ls, grad)
    }
}

/// Acts with the policy mean plus fixed Gaussian exploration noise.
/// With zero noise it is deterministic.
pub struct BehaviorPolicy<'a> {
    pub policy: &'a GaussianPolicy,
    pub noise_std: f64,
}

impl Actor for BehaviorPolicy<'_> {
    fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    fn distribution(&self, obs: &[f64]) -> Result<ActorOutput> {
        let mean = self.policy.mean(obs)?;
        if self.noise_std > 0.0 {
            let ls = vec![self.noise_std.ln(); mean.len()];
            Ok(ActorOutput::Stochastic(GaussianHead::new(mean, ls)))
        } else {
            Ok(ActorOutput::Deterministic(mean))
        }
    }
}

/// Scalar critic over an arbitrary input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub net: MlpNet,
    pub input_scale: Vec<f64>,
    pub value_scale: f64,
}

impl ValueFunction {
    pub fn new(input_scale: Vec<f64>, hidden: &[usize], value_scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![input_scale.len()];
        sizes.extend(hidden);
        sizes.push(1);
        Ok(Self { net: MlpNet::new(&sizes, 1.0, rng)?, input_scale, value_scale })
    }

    fn normalized(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.input_scale).map(|(v, s)| v / s).collect()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.net.forward(&self.normalized(x))?[0] * self.value_scale)
    }
}

/// Flattened on-policy data ready for [`ppo_update`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub inputs: Vec<Vec<f64>>,
    pub samples: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// One episode's worth of agent experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub inputs: Vec<Vec<f64>>,
    pub samples: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// True when the episode ended in a failure state (no bootstrap).
    pub terminal: bool,
    /// Input at which to bootstrap a truncated episode.
    pub bootstrap_input: Option<Vec<f64>>,
}

/// GAE over one episode. `values` has one more entry than `rewards` (the
/// bootstrap value, 0 after a terminal step). `dones[t]` cuts the recursion
/// after step `t`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(contract(format!(
            "GAE needs {} values and {} done flags, got {} and {}",
            n + 1,
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * not_done - values[t];
        acc = delta + gamma * lambda * not_done * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Evaluate the critic on every segment and assemble a batch with GAE.
pub fn build_batch(segments: &[Segment], value: &ValueFunction, gamma: f64, lambda: f64) -> Result<RolloutBatch> {
    if !(gamma > 0.0 && gamma <= 1.0 && lambda > 0.0 && lambda <= 1.0) {
        return Err(contract("gamma and lambda must lie in (0, 1]"));
    }
    let mut batch = RolloutBatch { gamma, lambda, ..Default::default() };
    for seg in segments {
        let n = seg.rewards.len();
        if seg.inputs.len() != n || seg.samples.len() != n || seg.log_probs.len() != n {
            return Err(contract("segment arrays differ in length"));
        }
        if n == 0 {
            continue;
        }
        let mut values = Vec::with_capacity(n + 1);
        for x in &seg.inputs {
            values.push(value.value(x)?);
        }
        let tail = match (&seg.bootstrap_input, seg.terminal) {
            (Some(x), false) => value.value(x)?,
            _ => 0.0,
        };
        values.push(tail);
        let mut dones = vec![false; n];
        dones[n - 1] = seg.terminal;
        let (adv, ret) = compute_gae(&seg.rewards, &values, &dones, gamma, lambda)?;
        batch.inputs.extend(seg.inputs.iter().cloned());
        batch.samples.extend(seg.samples.iter().cloned());
        batch.old_log_probs.extend(&seg.log_probs);
        batch.rewards.extend(&seg.rewards);
        batch.dones.extend(dones);
        batch.advantages.extend(adv);
        batch.returns.extend(ret);
    }
    Ok(batch)
}

/// Control-policy segments: inputs are observations, samples raw actions.
pub fn policy_segments(trajs: &[Trajectory]) -> Vec<Segment> {
    trajs
        .iter()
        .map(|t| Segment {
            inputs: t.steps.iter().map(|s| s.obs.clone()).collect(),
            samples: t.steps.iter().map(|s| s.action_sample.clone()).collect(),
            log_probs: t.steps.iter().map(|s| s.policy_log_prob).collect(),
            rewards: t.steps.iter().map(|s| s.reward).collect(),
            terminal: t.terminated,
            bootstrap_input: t.steps.last().map(|s| s.next_obs.clone()),
        })
        .collect()
}

/// Rescale advantages to zero mean and unit std (std floored at 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub epochs_run: usize,
    pub aborted: bool,
}

/// Surrogate-loss gradient for one sample: d(-min(rho*A, clip(rho)*A))/d log pi.
/// Zero whenever the clipped branch is the active minimum.
pub fn surrogate_logp_grad(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped_active = (advantage > 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip);
    if clipped_active {
        0.0
    } else {
        -advantage * ratio
    }
}

/// Clipped surrogate objective `min(rho*A, clip(rho, 1-e, 1+e)*A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Optimizer state for one agent/critic pair.
#[derive(Debug, Clone)]
pub struct PpoState {
    pub policy_opt: AdamState,
    pub value_opt: AdamState,
}

impl PpoState {
    pub fn new<M: PpoModel>(model: &M, value: &ValueFunction, cfg: &PpoConfig) -> Self {
        Self {
            policy_opt: AdamState::new(model.num_params(), cfg.lr),
            value_opt: AdamState::new(value.net.num_params(), cfg.value_lr),
        }
    }
}

/// One PPO update over `batch`. Advantages are normalized here. If any loss
/// or gradient becomes non-finite, the model, critic and optimizer states
/// are restored and the diagnostics report `aborted`.
pub fn ppo_update<M: PpoModel>(
    model: &mut M,
    value: &mut ValueFunction,
    state: &mut PpoState,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<PpoDiagnostics> {
    let n = batch.len();
    if n == 0 {
        return Err(contract("empty rollout batch"));
    }
    if batch.samples.len() != n || batch.old_log_probs.len() != n || batch.advantages.len() != n || batch.returns.len() != n
    {
        return Err(contract("rollout batch arrays differ in length"));
    }
    let snapshot = (model.flat_params(), value.net.clone(), state.clone());
    let mut adv = batch.advantages.clone();
    normalize_advantages(&mut adv);

    let mut diag = PpoDiagnostics { ratio_min: f64::INFINITY, ratio_max: f64::NEG_INFINITY, ..Default::default() };
    let mut idx: Vec<usize> = (0..n).collect();
    let mb = cfg.minibatch.max(1).min(n);
    let mut params = model.flat_params();
    let mut abort = false;
    'epochs: for _epoch in 0..cfg.epochs {
        idx.shuffle(rng);
        let (mut kl_sum, mut clip_count, mut pl_sum, mut vl_sum, mut ent_sum) = (0.0, 0usize, 0.0, 0.0, 0.0);
        for chunk in idx.chunks(mb) {
            let m = chunk.len() as f64;
            let mut grad = vec![0.0; model.num_params()];
            let mut vgrad = vec![0.0; value.net.num_params()];
            for &i in chunk {
                let (head, cache) = model.head_cached(&batch.inputs[i])?;
                let lp = head.log_prob(&batch.samples[i]);
                let log_ratio = lp - batch.old_log_probs[i];
                let ratio = log_ratio.exp();
                let a = adv[i];
                pl_sum -= clipped_surrogate(ratio, a, cfg.clip);
                kl_sum += (ratio - 1.0) - log_ratio;
                if (ratio - 1.0).abs() > cfg.clip {
                    clip_count += 1;
                }
                diag.ratio_min = diag.ratio_min.min(ratio);
                diag.ratio_max = diag.ratio_max.max(ratio);
                ent_sum += head.entropy();
                let g = surrogate_logp_grad(ratio, a, cfg.clip) / m;
                let (mut d_mu, mut d_ls) = head.grad_log_prob(&batch.samples[i]);
                d_mu.iter_mut().for_each(|d| *d *= g);
                d_ls.iter_mut().for_each(|d| *d *= g);
                if cfg.ent_coef != 0.0 {
                    for (d, e) in d_ls.iter_mut().zip(head.grad_entropy()) {
                        *d -= cfg.ent_coef * e / m;
                    }
                }
                model.accumulate_grad(&cache, &d_mu, &d_ls, &mut grad)?;

                let vx = value.normalized(&batch.inputs[i]);
                let vcache = value.net.forward_cached(&vx)?;
                let err = vcache.output()[0] - batch.returns[i] / value.value_scale;
                vl_sum += 0.5 * err * err;
                value.net.backward(&vcache, &[err / m], &mut vgrad)?;
            }
            if grad.iter().chain(&vgrad).any(|g| !g.is_finite()) || !pl_sum.is_finite() || !vl_sum.is_finite() {
                abort = true;
                break 'epochs;
            }
            nn::clip_grad_norm(&mut grad, cfg.max_grad_norm);
            nn::clip_grad_norm(&mut vgrad, cfg.max_grad_norm);
            state.policy_opt.step(&mut params, &grad)?;
            model.set_flat_params(&params);
            state.value_opt.step(value.net.params_mut(), &vgrad)?;
        }
        diag.epochs_run += 1;
        diag.approx_kl = kl_sum / n as f64;
        diag.clip_fraction = clip_count as f64 / n as f64;
        diag.policy_loss = pl_sum / n as f64;
        diag.value_loss = vl_sum / n as f64;
        diag.entropy = ent_sum / n as f64;
        if params.iter().any(|p| !p.is_finite()) {
            abort = true;
            break;
        }
        if let Some(limit) = cfg.target_kl {
            if diag.approx_kl > limit {
                break;
            }
        }
    }
    if abort {
        model.set_flat_params(&snapshot.0);
        value.net = snapshot.1;
        *state = snapshot.2;
        diag.aborted = true;
    }
    Ok(diag)
}

/// Collect `n` episodes with `actor` in `sim` and build a policy batch.
pub fn collect_rollouts(
    sim: &Simulator,
    actor: &dyn Actor,
    value: &ValueFunction,
    n: usize,
    seed: u64,
    first_index: u64,
    reward: &TaskRewardConfig,
    cfg: &PpoConfig,
) -> Result<(Vec<Trajectory>, RolloutBatch)> {
    let trajs = sim.collect(actor, n, seed, first_index, Some(reward))?;
    let batch = build_batch(&policy_segments(&trajs), value, cfg.gamma, cfg.lambda)?;
    Ok((trajs, batch))
}

/// Per-iteration statistics of a policy-training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub iteration: usize,
    pub mean_return: f64,
    pub mean_length: f64,
    pub episodes: usize,
    pub approx_kl: f64,
    pub entropy: f64,
}

/// PPO trainer for a control policy.
pub struct PolicyTrainer {
    pub policy: GaussianPolicy,
    pub value: ValueFunction,
    pub state: PpoState,
    pub cfg: PpoConfig,
}

impl PolicyTrainer {
    pub fn new(policy: GaussianPolicy, value: ValueFunction, cfg: PpoConfig) -> Self {
        let state = PpoState::new(&policy, &value, &cfg);
        Self { policy, value, state, cfg }
    }

    /// Fresh critic for `spec`.
    pub fn fresh_value(spec: &EnvSpec, hidden: &[usize], value_scale: f64, seed: u64) -> Result<ValueFunction> {
        ValueFunction::new(spec.obs_scale.clone(), hidden, value_scale, &mut rng::stream(seed, Stream::Init, 1))
    }

    /// One iteration on at least `steps` transitions. `episode_counter` is
    /// the running episode index used to derive per-episode streams.
    pub fn iterate_steps(
        &mut self,
        sim: &Simulator,
        reward: &TaskRewardConfig,
        steps: usize,
        seed: u64,
        episode_counter: &mut u64,
        iteration: usize,
    ) -> Result<TrainStats> {
        let trajs = sim.collect_steps(&self.policy, steps, seed, *episode_counter, Some(reward))?;
        *episode_counter += trajs.len() as u64;
        self.update_from(&trajs, seed, iteration)
    }

    /// One iteration on exactly `episodes` episodes.
    pub fn iterate_episodes(
        &mut self,
        sim: &Simulator,
        reward: &TaskRewardConfig,
        episodes: usize,
        seed: u64,
        episode_counter: &mut u64,
        iteration: usize,
    ) -> Result<TrainStats> {
        let trajs = sim.collect(&self.policy, episodes, seed, *episode_counter, Some(reward))?;
        *episode_counter += trajs.len() as u64;
        self.update_from(&trajs, seed, iteration)
    }

    fn update_from(&mut self, trajs: &[Trajectory], seed: u64, iteration: usize) -> Result<TrainStats> {
        let batch = build_batch(&policy_segments(trajs), &self.value, self.cfg.gamma, self.cfg.lambda)?;
        let mut stats = TrainStats {
            iteration,
            mean_return: trajs.iter().map(Trajectory::total_reward).sum::<f64>() / trajs.len().max(1) as f64,
            mean_length: crate::trajectory::mean_length(trajs),
            episodes: trajs.len(),
            ..Default::default()
        };
        if batch.is_empty() {
            return Ok(stats);
        }
        let mut rng = rng::stream(seed, Stream::Policy, 1_000_000 + iteration as u64);
        let diag = ppo_update(&mut self.policy, &mut self.value, &mut self.state, &batch, &self.cfg, &mut rng)?;
        stats.approx_kl = diag.approx_kl;
        stats.entropy = diag.entropy;
        Ok(stats)
    }
}

/// Settings for training a control policy from scratch or a warm start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyTrainConfig {
    pub hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub iterations: usize,
    pub steps_per_iter: usize,
    pub ppo: PpoConfig,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            init_log_std: -0.5,
            iterations: 100,
            steps_per_iter: 2048,
            ppo: PpoConfig::default(),
        }
    }
}

/// Train a policy with PPO in `sim`. With `init` the policy is warm-started
/// from those weights; the critic is always freshly initialized.
pub fn train_policy(
    sim: &Simulator,
    reward: &TaskRewardConfig,
    cfg: &PolicyTrainConfig,
    seed: u64,
    init: Option<&GaussianPolicy>,
) -> Result<(GaussianPolicy, Vec<TrainStats>)> {
    let spec = sim.spec();
    let policy = match init {
        Some(p) => p.clone(),
        None => GaussianPolicy::new(spec, &cfg.hidden, cfg.init_log_std, &mut rng::stream(seed, Stream::Init, 0))?,
    };
    let value = PolicyTrainer::fresh_value(spec, &cfg.value_hidden, cfg.ppo.value_scale, seed)?;
    let mut trainer = PolicyTrainer::new(policy, value, cfg.ppo.clone());
    let mut counter = 0;
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        history.push(trainer.iterate_steps(sim, reward, cfg.steps_per_iter, seed, &mut counter, it)?);
    }
    Ok((trainer.policy, history))
}
