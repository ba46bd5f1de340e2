//! Comparison methods: fine-tuning on the target, domain randomization
//! (optionally followed by fine-tuning), and CMA-ES system identification of
//! state-independent parameter distributions with open- or closed-loop
//! simulator rollouts.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvKind, EnvSpec, EnvState, TaskRewardConfig};
use crate::error::{contract, Error, Result};
use crate::hybrid::{ParamLayout, ParamSource, SimParamVector};
use crate::identify::TargetDataset;
use crate::ppo::{train_policy, BehaviorPolicy, GaussianPolicy, PolicyTrainConfig, PolicyTrainer, TrainStats};
use crate::rng::{self, Rng, Stream};
use crate::trajectory::{EpisodeDynamics, Simulator, Trajectory};

/// Uniform sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// Uniform draw; a degenerate interval returns `lo` exactly.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }
}

/// Per-episode randomization ranges over the toy systems' analogs of the
/// usual dynamics-randomization table. Latency has no analog and is left out;
/// contact ERP is represented by the contact-stiffness scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrRanges {
    /// Multiplies the body mass (and so the inertia of the pendulum).
    pub mass_ratio: Interval,
    /// Multiplies every motor gain.
    pub motor_scale: Interval,
    /// Absolute velocity-proportional motor loss.
    pub motor_friction: Interval,
    /// Absolute Coulomb friction (joint damping on the pendulum).
    pub friction: Interval,
    /// Spinning-friction analog: hopper tangential damping scale.
    pub tangential_damping_scale: Interval,
    /// Restitution analog: contact damping scale.
    pub contact_damping_scale: Interval,
    /// ERP analog: contact stiffness scale.
    pub contact_stiffness_scale: Interval,
}

impl DrRanges {
    /// Degenerate ranges pinned at the nominal constants.
    pub fn nominal(spec: &EnvSpec) -> Self {
        Self {
            mass_ratio: Interval::point(1.0),
            motor_scale: Interval::point(1.0),
            motor_friction: Interval::point(spec.motor_friction),
            friction: Interval::point(spec.friction),
            tangential_damping_scale: Interval::point(1.0),
            contact_damping_scale: Interval::point(1.0),
            contact_stiffness_scale: Interval::point(1.0),
        }
    }

    /// Shipped ranges.
    pub fn default_for(spec: &EnvSpec) -> Self {
        let base = Self {
            mass_ratio: Interval::new(0.5, 1.5),
            motor_scale: Interval::new(0.5, 1.5),
            motor_friction: Interval::new(0.0, 0.3),
            ..Self::nominal(spec)
        };
        match spec.kind {
            EnvKind::Hopper1d => Self {
                friction: Interval::new(0.4, 1.5),
                tangential_damping_scale: Interval::new(0.5, 2.0),
                contact_damping_scale: Interval::new(0.5, 2.0),
                contact_stiffness_scale: Interval::new(0.3, 1.5),
                ..base
            },
            EnvKind::Slider | EnvKind::Pendulum => {
                Self { friction: Interval::new(0.0, 2.0 * spec.friction.max(0.05)), ..base }
            }
        }
    }

    fn all(&self) -> [Interval; 7] {
        [
            self.mass_ratio,
            self.motor_scale,
            self.motor_friction,
            self.friction,
            self.tangential_damping_scale,
            self.contact_damping_scale,
            self.contact_stiffness_scale,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.all().iter().any(|r| !(r.lo <= r.hi) || !r.lo.is_finite() || !r.hi.is_finite() || r.lo < 0.0) {
            return Err(Error::Config("randomization ranges need 0 <= lo <= hi".into()));
        }
        if self.mass_ratio.lo <= 0.0 || self.contact_stiffness_scale.lo <= 0.0 {
            return Err(Error::Config("mass ratio and stiffness scale must stay positive".into()));
        }
        Ok(())
    }
}

/// Draw one episode's dynamics: a spec with mass and motor friction
/// overridden, plus the parameter vector for the stepper.
pub fn dr_sample(ranges: &DrRanges, spec: &EnvSpec, rng: &mut Rng) -> (EnvSpec, SimParamVector) {
    let mut s = spec.clone();
    s.mass = spec.mass * ranges.mass_ratio.sample(rng);
    s.motor_friction = ranges.motor_friction.sample(rng);
    let motor = ranges.motor_scale.sample(rng);
    let p = SimParamVector {
        friction: ranges.friction.sample(rng),
        tangential_damping_scale: ranges.tangential_damping_scale.sample(rng),
        contact_damping_scale: ranges.contact_damping_scale.sample(rng),
        contact_stiffness_scale: ranges.contact_stiffness_scale.sample(rng),
        motor_scale: vec![motor; spec.action_dim()],
    };
    (s, p)
}

/// PPO training where every episode draws its dynamics from `ranges`.
pub fn train_dr_policy(
    source: &EnvSpec,
    ranges: &DrRanges,
    reward: &TaskRewardConfig,
    cfg: &PolicyTrainConfig,
    seed: u64,
    init: Option<&GaussianPolicy>,
) -> Result<(GaussianPolicy, Vec<TrainStats>)> {
    ranges.validate()?;
    let mut sim = Simulator::new(Env::source(source.clone())?, ParamSource::Nominal);
    sim.dynamics = EpisodeDynamics::Randomized(ranges.clone());
    train_policy(&sim, reward, cfg, seed, init)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    /// Target episodes allowed in total.
    pub budget_trajs: usize,
    pub episodes_per_iter: usize,
    pub train: PolicyTrainConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { budget_trajs: 200, episodes_per_iter: 20, train: PolicyTrainConfig::default() }
    }
}

/// Fine-tune `start` directly on the target with a hard episode budget.
/// Returns the policy and the number of target episodes started.
pub fn finetune(
    start: &GaussianPolicy,
    target: &Env,
    reward: &TaskRewardConfig,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<(GaussianPolicy, usize)> {
    if cfg.budget_trajs == 0 {
        return Ok((start.clone(), 0));
    }
    let sim = Simulator::new(target.clone(), ParamSource::Nominal);
    let value = PolicyTrainer::fresh_value(&target.spec, &cfg.train.value_hidden, cfg.train.ppo.value_scale, seed)?;
    let mut trainer = PolicyTrainer::new(start.clone(), value, cfg.train.ppo.clone());
    let run_seed = rng::derive_seed(seed, Stream::Policy, 5);
    let mut counter = 0u64;
    let mut it = 0;
    while (counter as usize) < cfg.budget_trajs {
        let n = cfg.episodes_per_iter.max(1).min(cfg.budget_trajs - counter as usize);
        trainer.iterate_episodes(&sim, reward, n, run_seed, &mut counter, it)?;
        it += 1;
    }
    Ok((trainer.policy, counter as usize))
}

/// Fitness assigned to pairs with no common prefix and to non-finite candidates.
pub const MAX_PENALTY: f64 = 1.0e3;

/// Temporal Gaussian smoothing of a sequence of vectors. The kernel is
/// truncated at 3 sigma and renormalized at the edges, so constants are
/// preserved. `sigma <= 1e-12` is the identity.
pub fn gaussian_smooth(seq: &[Vec<f64>], sigma: f64) -> Vec<Vec<f64>> {
    if sigma <= 1e-12 || seq.is_empty() {
        return seq.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect();
    let n = seq.len() as isize;
    let dim = seq[0].len();
    (0..n)
        .map(|t| {
            let mut acc = vec![0.0; dim];
            let mut wsum = 0.0;
            for (j, w) in kernel.iter().enumerate() {
                let s = t + j as isize - radius;
                if s < 0 || s >= n {
                    continue;
                }
                wsum += w;
                for (a, v) in acc.iter_mut().zip(&seq[s as usize]) {
                    *a += w * v;
                }
            }
            acc.into_iter().map(|a| a / wsum).collect()
        })
        .collect()
}

fn lp_norm(v: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        return v.fold(0.0, |m, x| m.max(x.abs()));
    }
    v.map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn obs_sequence(t: &Trajectory, len: usize) -> Vec<Vec<f64>> {
    t.steps.iter().take(len).map(|s| s.next_obs.clone()).collect()
}

/// Trajectory distance for system identification.
///
/// Pairs are matched by index and truncated to their common length `T`.
/// Each pair contributes `(1/T) * sum_t ||x_t - y_t||_p` over the smoothed
/// post-step observation sequences, so a constant offset `delta` yields
/// `||delta||_p`. The fitness is the mean over pairs; a pair without a common
/// prefix contributes [`MAX_PENALTY`].
pub fn sysid_fitness(sim: &[Trajectory], real: &[Trajectory], p: f64, smooth_sigma: f64) -> Result<f64> {
    if sim.len() != real.len() || sim.is_empty() {
        return Err(contract("sysid fitness needs equally many simulated and recorded trajectories"));
    }
    if !(p >= 1.0) {
        return Err(contract("the l_p norm needs p >= 1"));
    }
    let mut total = 0.0;
    for (a, b) in sim.iter().zip(real) {
        let t = a.len().min(b.len());
        if t == 0 {
            total += MAX_PENALTY;
            continue;
        }
        let xa = gaussian_smooth(&obs_sequence(a, t), smooth_sigma);
        let xb = gaussian_smooth(&obs_sequence(b, t), smooth_sigma);
        let d: f64 = xa.iter().zip(&xb).map(|(u, v)| lp_norm(u.iter().zip(v).map(|(x, y)| x - y), p)).sum();
        let d = d / t as f64;
        total += if d.is_finite() { d.min(MAX_PENALTY) } else { MAX_PENALTY };
    }
    Ok(total / sim.len() as f64)
}

/// Settings of the (mu/mu_w, lambda) CMA-ES.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmaEsConfig {
    pub population: usize,
    /// Initial step size as a fraction of the search-range width.
    pub sigma0_fraction: f64,
    pub generations: usize,
    /// Stop once the step size falls below this.
    pub min_sigma: f64,
}

impl Default for CmaEsConfig {
    fn default() -> Self {
        Self { population: 16, sigma0_fraction: 0.3, generations: 200, min_sigma: 1e-8 }
    }
}

/// Per-generation log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaEsResult {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub mean: Vec<f64>,
    pub log: Vec<GenerationLog>,
}

/// Minimize `fitness` over the box `[lo, hi]` with CMA-ES (rank-one and
/// rank-mu covariance updates, cumulative step-size adaptation). Candidates
/// are clipped into the box before evaluation; non-finite fitness becomes
/// [`MAX_PENALTY`].
pub fn cmaes_minimize<F>(
    mut fitness: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &CmaEsConfig,
    rng: &mut Rng,
) -> Result<CmaEsResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if n == 0 || lo.len() != n || hi.len() != n || lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
        return Err(contract("CMA-ES needs a non-empty box with lo < hi"));
    }
    let lambda = cfg.population.max(4);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu).map(|i| ((mu as f64) + 0.5).ln() - ((i + 1) as f64).ln()).collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let nf = n as f64;
    let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
    let cs = (mueff + 2.0) / (nf + mueff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
    let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    // Search in coordinates normalized to the box width.
    let width: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| h - l).collect();
    let to_x = |y: &DVector<f64>| -> Vec<f64> {
        (0..n).map(|i| (lo[i] + y[i] * width[i]).clamp(lo[i], hi[i])).collect()
    };
    let mut mean = DVector::from_iterator(n, (0..n).map(|i| ((x0[i] - lo[i]) / width[i]).clamp(0.0, 1.0)));
    let mut sigma = cfg.sigma0_fraction;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut ps = DVector::<f64>::zeros(n);
    let mut pc = DVector::<f64>::zeros(n);
    let mut best = to_x(&mean);
    let mut best_fitness = f64::INFINITY;
    let mut log = Vec::with_capacity(cfg.generations);

    for generation in 0..cfg.generations {
        let eig = nalgebra::SymmetricEigen::new(cov.clone());
        let d = eig.eigenvalues.map(|v| v.max(1e-20).sqrt());
        let b = eig.eigenvectors;
        let mut pop: Vec<(f64, DVector<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let y = &b * z.component_mul(&d);
            let cand = &mean + sigma * &y;
            let x = to_x(&cand);
            let fx = fitness(&x)?;
            let fx = if fx.is_finite() { fx } else { MAX_PENALTY };
            if fx < best_fitness {
                best_fitness = fx;
                best = x;
            }
            pop.push((fx, y));
        }
        pop.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut y_w = DVector::<f64>::zeros(n);
        for (w, (_, y)) in weights.iter().zip(&pop) {
            y_w += *w * y;
        }
        mean += sigma * &y_w;
        // Keep the mean inside the (normalized) box.
        for i in 0..n {
            mean[i] = mean[i].clamp(0.0, 1.0);
        }
        let inv_sqrt = &b * DMatrix::from_diagonal(&d.map(|v| 1.0 / v)) * b.transpose();
        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mueff).sqrt() * (&inv_sqrt * &y_w);
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - cs).powi(2 * (generation as i32 + 1))).sqrt() / chi_n < 1.4 + 2.0 / (nf + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        pc = (1.0 - cc) * &pc + hs * (cc * (2.0 - cc) * mueff).sqrt() * &y_w;
        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, (_, y)) in weights.iter().zip(&pop) {
            rank_mu += *w * y * y.transpose();
        }
        cov = (1.0 - c1 - cmu) * &cov
            + c1 * (&pc * pc.transpose() + (1.0 - hs) * cc * (2.0 - cc) * &cov)
            + cmu * rank_mu;
        cov = 0.5 * (&cov + cov.transpose());
        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();
        sigma = sigma.min(1.0);
        let mean_fitness = pop.iter().map(|p| p.0).sum::<f64>() / lambda as f64;
        log.push(GenerationLog { generation, best_fitness, mean_fitness, sigma });
        if sigma < cfg.min_sigma {
            break;
        }
    }
    Ok(CmaEsResult { best, best_fitness, mean: to_x(&mean), log })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SysIdMode {
    /// Replay the recorded action sequences.
    OpenLoop,
    /// Re-run the behavior policy on simulated observations.
    ClosedLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SysIdConfig {
    pub cmaes: CmaEsConfig,
    /// Recorded trajectories used in each fitness evaluation.
    pub num_trajs: usize,
    pub p: f64,
    pub smooth_sigma: f64,
    /// Also optimize a per-parameter log std (false pins it at `min_log_std`).
    pub learn_variance: bool,
    /// Pre-squash search box for the means.
    pub mean_bound: f64,
    pub min_log_std: f64,
    pub max_log_std: f64,
    pub layout: Option<ParamLayout>,
}

impl Default for SysIdConfig {
    fn default() -> Self {
        Self {
            cmaes: CmaEsConfig::default(),
            num_trajs: 20,
            p: 2.0,
            smooth_sigma: 2.0,
            learn_variance: true,
            mean_bound: 8.0,
            min_log_std: -5.0,
            max_log_std: 0.0,
            layout: None,
        }
    }
}

/// State-independent parameter distribution found by CMA-ES.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysIdResult {
    pub mode: SysIdMode,
    pub layout: ParamLayout,
    pub base: SimParamVector,
    /// Pre-squash mean per layout entry.
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub fitness: f64,
    pub log: Vec<GenerationLog>,
}

impl SysIdResult {
    /// Squashed parameter vector at the mean.
    pub fn mean_params(&self) -> SimParamVector {
        self.layout.squash_into(&self.mean, &self.base)
    }

    /// Parameter source sampling one parameter vector per episode.
    pub fn param_source(&self) -> ParamSource {
        ParamSource::EpisodeGaussian {
            layout: self.layout.clone(),
            base: self.base.clone(),
            mean: self.mean.clone(),
            log_std: self.log_std.clone(),
        }
    }
}

/// Replays a recorded action sequence step by step.
struct Replay<'a> {
    actions: &'a [Vec<f64>],
    t: std::cell::Cell<usize>,
}

impl crate::trajectory::Actor for Replay<'_> {
    fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    fn distribution(&self, _obs: &[f64]) -> Result<crate::trajectory::ActorOutput> {
        let t = self.t.get();
        self.t.set(t + 1);
        let a = self.actions.get(t).or(self.actions.last()).cloned().unwrap_or_default();
        Ok(crate::trajectory::ActorOutput::Deterministic(a))
    }
}

/// Simulate counterparts of `real` under constant parameters `c_k` (one per
/// trajectory), from the recorded initial states, without noise.
pub fn sysid_rollouts(
    spec: &EnvSpec,
    real: &[Trajectory],
    params: &[SimParamVector],
    mode: SysIdMode,
    policy: &GaussianPolicy,
) -> Result<Vec<Trajectory>> {
    let quiet = spec.without_noise();
    let env = Env::source(quiet.clone())?;
    real.iter()
        .zip(params)
        .enumerate()
        .map(|(k, (r, c))| {
            let mut sim = Simulator::new(env.clone(), ParamSource::Fixed(c.clone()));
            sim.obs_noise = false;
            let mut rngs = crate::trajectory::RolloutRngs::for_episode(0, k as u64);
            let start: &EnvState = &r.initial_state;
            match mode {
                SysIdMode::OpenLoop => {
                    let actions: Vec<Vec<f64>> = r.steps.iter().map(|s| s.action.clone()).collect();
                    if actions.is_empty() {
                        return Ok(Trajectory { steps: Vec::new(), ..r.clone() });
                    }
                    // Stop the replay where the recording stopped.
                    let horizon = EnvSpec { max_steps: start.t + actions.len(), ..quiet.clone() };
                    sim.env = Env::source(horizon)?;
                    let replay = Replay { actions: &actions, t: std::cell::Cell::new(0) };
                    let mut t = sim.run_episode_from(&replay, &mut rngs, None, Some(start))?;
                    t.steps.truncate(actions.len());
                    Ok(t)
                }
                SysIdMode::ClosedLoop => {
                    let actor = BehaviorPolicy { policy, noise_std: 0.0 };
                    sim.run_episode_from(&actor, &mut rngs, None, Some(start))
                }
            }
        })
        .collect()
}

/// CMA-ES system identification of a state-independent Gaussian over the
/// pre-squash parameters.
pub fn cmaes_sysid(
    dataset: &TargetDataset,
    policy: &GaussianPolicy,
    source: &EnvSpec,
    mode: SysIdMode,
    cfg: &SysIdConfig,
    seed: u64,
) -> Result<SysIdResult> {
    let layout = cfg.layout.clone().unwrap_or_else(|| ParamLayout::default_for(source));
    layout.validate(source)?;
    let base = SimParamVector::nominal(source);
    let real: Vec<Trajectory> = dataset.trajectories.iter().take(cfg.num_trajs.max(1)).cloned().collect();
    let m = layout.len();
    // Common random numbers: fixed standard-normal draws per trajectory.
    let mut z_rng = rng::stream(seed, Stream::CmaEs, 1);
    let z: Vec<Vec<f64>> =
        real.iter().map(|_| (0..m).map(|_| z_rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let dim = if cfg.learn_variance { 2 * m } else { m };
    let mut lo = vec![-cfg.mean_bound; m];
    let mut hi = vec![cfg.mean_bound; m];
    let mut x0 = layout.unsquash(&base);
    if cfg.learn_variance {
        lo.extend(std::iter::repeat_n(cfg.min_log_std, m));
        hi.extend(std::iter::repeat_n(cfg.max_log_std, m));
        x0.extend(std::iter::repeat_n(0.5 * (cfg.min_log_std + cfg.max_log_std), m));
    }
    let split = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mean = x[..m].to_vec();
        let log_std = if cfg.learn_variance { x[m..].to_vec() } else { vec![cfg.min_log_std; m] };
        (mean, log_std)
    };
    let eval = |x: &[f64]| -> Result<f64> {
        let (mean, log_std) = split(x);
        let params: Vec<SimParamVector> = z
            .iter()
            .map(|zk| {
                let pre: Vec<f64> = (0..m).map(|i| mean[i] + log_std[i].exp() * zk[i]).collect();
                layout.squash_into(&pre, &base)
            })
            .collect();
        let sim = sysid_rollouts(source, &real, &params, mode, policy)?;
        sysid_fitness(&sim, &real, cfg.p, cfg.smooth_sigma)
    };
    debug_assert_eq!(x0.len(), dim);
    let res = cmaes_minimize(eval, &x0, &lo, &hi, &cfg.cmaes, &mut rng::stream(seed, Stream::CmaEs, 0))?;
    let (mean, log_std) = split(&res.best);
    Ok(SysIdResult { mode, layout, base, mean, log_std, fitness: res.best_fitness, log: res.log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    #[test]
    fn degenerate_ranges_give_nominal() {
        let spec = EnvSpec::hopper1d();
        let (s, p) = dr_sample(&DrRanges::nominal(&spec), &spec, &mut from_seed(0));
        assert_eq!(s, spec);
        assert_eq!(p, SimParamVector::nominal(&spec));
    }

    #[test]
    fn motor_scale_samples_are_uniform() {
        let spec = EnvSpec::hopper1d();
        let ranges = DrRanges::default_for(&spec);
        let mut rng = from_seed(1);
        let draws: Vec<(EnvSpec, SimParamVector)> = (0..10_000).map(|_| dr_sample(&ranges, &spec, &mut rng)).collect();
        let m: Vec<f64> = draws.iter().map(|d| d.1.motor_scale[0]).collect();
        assert!(m.iter().all(|v| (0.5..=1.5).contains(v)));
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.02);
        let f: Vec<f64> = draws.iter().map(|d| d.1.friction).collect();
        assert!(f.iter().all(|v| (0.4..=1.5).contains(v)));
    }

    #[test]
    fn smoothing_with_zero_sigma_is_identity() {
        let seq: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64).sin(), i as f64]).collect();
        assert_eq!(gaussian_smooth(&seq, 0.0), seq);
        let tiny = gaussian_smooth(&seq, 1e-3);
        for (a, b) in tiny.iter().zip(&seq) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn smoothing_preserves_constants() {
        let seq = vec![vec![2.5, -1.0]; 7];
        for row in gaussian_smooth(&seq, 1.7) {
            assert!((row[0] - 2.5).abs() < 1e-12 && (row[1] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cmaes_sphere() {
        let res = cmaes_minimize(
            |x| Ok(x.iter().map(|v| (v - 0.5).powi(2)).sum()),
            &[-1.0, 1.5, 0.0],
            &[-2.0; 3],
            &[2.0; 3],
            &CmaEsConfig { generations: 300, ..Default::default() },
            &mut from_seed(2),
        )
        .unwrap();
        for v in &res.best {
            assert!((v - 0.5).abs() < 1e-3, "{:?}", res.best);
        }
    }
}
