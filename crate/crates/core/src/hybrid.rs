//! The hybrid simulator: the analytic stepper from [`crate::envs`] whose
//! contact and actuator constants are produced per step by a learned,
//! stochastic, state-action-dependent parameter function.

use serde::{Deserialize, Serialize};

use crate::envs::{self, EnvKind, EnvSpec, EnvState, StepNoise, TargetGap};
use crate::error::{contract, Error, Result};
use crate::nn::{self, ForwardCache, GaussianHead, MlpNet, NetCheckpoint};
use crate::rng::Rng;
use crate::trajectory::{Actor, ActorOutput, Trajectory};

/// Per-step simulation parameters.
///
/// * `friction`: Coulomb coefficient (slider, hopper foot) or joint damping
///   (pendulum). Absolute value, replaces the spec's `friction`.
/// * `contact_damping_scale`: restitution analog, multiplies contact damping.
/// * `tangential_damping_scale`: spinning-friction analog, multiplies the
///   hopper foot's tangential damping.
/// * `contact_stiffness_scale`: ERP analog, multiplies contact stiffness.
/// * `motor_scale`: per-actuator factor, torque = gain * motor_scale * action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParamVector {
    pub friction: f64,
    pub contact_damping_scale: f64,
    pub tangential_damping_scale: f64,
    pub contact_stiffness_scale: f64,
    pub motor_scale: Vec<f64>,
}

impl SimParamVector {
    /// The analytic simulator's own constants.
    pub fn nominal(spec: &EnvSpec) -> Self {
        Self {
            friction: spec.friction,
            contact_damping_scale: 1.0,
            tangential_damping_scale: 1.0,
            contact_stiffness_scale: 1.0,
            motor_scale: vec![1.0; spec.action_dim()],
        }
    }

    pub fn get(&self, kind: ParamKind) -> f64 {
        match kind {
            ParamKind::Friction => self.friction,
            ParamKind::ContactDampingScale => self.contact_damping_scale,
            ParamKind::TangentialDampingScale => self.tangential_damping_scale,
            ParamKind::ContactStiffnessScale => self.contact_stiffness_scale,
            ParamKind::MotorScale(i) => self.motor_scale[i],
        }
    }

    pub fn set(&mut self, kind: ParamKind, value: f64) {
        match kind {
            ParamKind::Friction => self.friction = value,
            ParamKind::ContactDampingScale => self.contact_damping_scale = value,
            ParamKind::TangentialDampingScale => self.tangential_damping_scale = value,
            ParamKind::ContactStiffnessScale => self.contact_stiffness_scale = value,
            ParamKind::MotorScale(i) => self.motor_scale[i] = value,
        }
    }

    /// Physical validity: frictions and scales non-negative, stiffness positive.
    pub fn is_valid(&self) -> bool {
        self.friction >= 0.0
            && self.contact_damping_scale >= 0.0
            && self.tangential_damping_scale >= 0.0
            && self.contact_stiffness_scale > 0.0
            && self.motor_scale.iter().all(|&m| m >= 0.0)
            && self.friction.is_finite()
            && self.contact_stiffness_scale.is_finite()
            && self.motor_scale.iter().all(|m| m.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Friction,
    ContactDampingScale,
    TangentialDampingScale,
    ContactStiffnessScale,
    MotorScale(usize),
}

impl ParamKind {
    pub fn is_actuator(self) -> bool {
        matches!(self, ParamKind::MotorScale(_))
    }

    pub fn label(self) -> String {
        match self {
            ParamKind::Friction => "friction".into(),
            ParamKind::ContactDampingScale => "contact_damping_scale".into(),
            ParamKind::TangentialDampingScale => "tangential_damping_scale".into(),
            ParamKind::ContactStiffnessScale => "contact_stiffness_scale".into(),
            ParamKind::MotorScale(i) => format!("motor_scale_{i}"),
        }
    }
}

/// One learned parameter and its squashing interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub kind: ParamKind,
    pub lo: f64,
    pub hi: f64,
}

/// Which parameters the function outputs for a given system, contact
/// parameters first, then actuator scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub ranges: Vec<ParamRange>,
}

impl ParamLayout {
    /// Wide default ranges: friction [0, 2], damping scales [0, 5],
    /// stiffness scale [0.05, 20], motor scale [0, 3].
    pub fn default_for(spec: &EnvSpec) -> Self {
        let r = |kind, lo, hi| ParamRange { kind, lo, hi };
        let mut ranges = vec![r(ParamKind::Friction, 0.0, 2.0)];
        if spec.kind == EnvKind::Hopper1d {
            ranges.push(r(ParamKind::ContactDampingScale, 0.0, 5.0));
            ranges.push(r(ParamKind::TangentialDampingScale, 0.0, 5.0));
            ranges.push(r(ParamKind::ContactStiffnessScale, 0.05, 20.0));
        }
        for i in 0..spec.action_dim() {
            ranges.push(r(ParamKind::MotorScale(i), 0.0, 3.0));
        }
        Self { ranges }
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn num_contact(&self) -> usize {
        self.ranges.iter().filter(|r| !r.kind.is_actuator()).count()
    }

    pub fn num_actuator(&self) -> usize {
        self.len() - self.num_contact()
    }

    /// Map pre-squash values onto `[lo, hi]` with an affine sigmoid and
    /// write them over `base`.
    pub fn squash_into(&self, pre: &[f64], base: &SimParamVector) -> SimParamVector {
        let mut c = base.clone();
        for (r, u) in self.ranges.iter().zip(pre) {
            c.set(r.kind, squash(*u, r.lo, r.hi));
        }
        c
    }

    /// Inverse of the squash for a value strictly inside its range.
    pub fn unsquash(&self, c: &SimParamVector) -> Vec<f64> {
        self.ranges.iter().map(|r| unsquash(c.get(r.kind), r.lo, r.hi)).collect()
    }

    pub fn validate(&self, spec: &EnvSpec) -> Result<()> {
        for r in &self.ranges {
            if !(r.lo < r.hi) || !r.lo.is_finite() || !r.hi.is_finite() {
                return Err(Error::Config(format!("bad range for {}", r.kind.label())));
            }
            if let ParamKind::MotorScale(i) = r.kind {
                if i >= spec.action_dim() {
                    return Err(Error::Config(format!("motor scale {i} has no actuator")));
                }
            }
            let min_ok = match r.kind {
                ParamKind::ContactStiffnessScale => r.lo > 0.0,
                _ => r.lo >= 0.0,
            };
            if !min_ok {
                return Err(Error::Config(format!("range of {} leaves the physical domain", r.kind.label())));
            }
        }
        let contact_first = self
            .ranges
            .iter()
            .position(|r| r.kind.is_actuator())
            .is_none_or(|p| self.ranges[p..].iter().all(|r| r.kind.is_actuator()));
        if !contact_first {
            return Err(Error::Config("contact parameters must precede actuator scales".into()));
        }
        Ok(())
    }
}

pub fn squash(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-u).exp())
}

/// Inverse squash, clamped to stay finite at the range edges.
pub fn unsquash(c: f64, lo: f64, hi: f64) -> f64 {
    let p = ((c - lo) / (hi - lo)).clamp(1e-3, 1.0 - 1e-3);
    (p / (1.0 - p)).ln()
}

/// Stochastic parameter function `(s, a) -> N(mu, sigma)` over pre-squash
/// parameters, with separate contact and actuator branches. Each branch
/// emits means followed by log standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamFunction {
    pub layout: ParamLayout,
    pub contact: MlpNet,
    pub actuator: MlpNet,
    /// Normalization of the raw `(state features, action)` input.
    pub input_scale: Vec<f64>,
    /// Parameters not covered by the layout take these values.
    pub base: SimParamVector,
}

/// Initialization of a [`ParamFunction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamFnInit {
    pub hidden: Vec<usize>,
    /// Output-layer weight scale.
    pub output_scale: f64,
    /// Initial pre-squash log standard deviation.
    pub init_log_sigma: f64,
    /// Start the mean at the nominal constants (otherwise at range midpoints).
    pub nominal_start: bool,
}

impl Default for ParamFnInit {
    fn default() -> Self {
        Self { hidden: vec![64, 64], output_scale: 0.01, init_log_sigma: -2.0, nominal_start: true }
    }
}

/// Saved form: both branch networks plus layout and input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFnCheckpoint {
    pub format: String,
    pub version: u32,
    pub layout: ParamLayout,
    pub input_scale: Vec<f64>,
    pub base: SimParamVector,
    pub contact: NetCheckpoint,
    pub actuator: NetCheckpoint,
}

pub const PARAM_FN_FORMAT: &str = "advsim-param-fn";

impl ParamFunction {
    pub fn new(spec: &EnvSpec, layout: ParamLayout, init: &ParamFnInit, rng: &mut Rng) -> Result<Self> {
        layout.validate(spec)?;
        let n_in = spec.obs_dim() + spec.action_dim();
        let sizes = |n_out: usize| {
            let mut s = vec![n_in];
            s.extend(&init.hidden);
            s.push(2 * n_out);
            s
        };
        let n_contact = layout.num_contact().max(1);
        let n_act = layout.num_actuator().max(1);
        let mut contact = MlpNet::new(&sizes(n_contact), init.output_scale, rng)?;
        let mut actuator = MlpNet::new(&sizes(n_act), init.output_scale, rng)?;
        let base = SimParamVector::nominal(spec);
        let start: Vec<f64> = if init.nominal_start {
            layout.unsquash(&base)
        } else {
            vec![0.0; layout.len()]
        };
        let nc = layout.num_contact();
        let fill = |net: &mut MlpNet, mus: &[f64], n: usize| {
            let b = net.output_bias_mut();
            for i in 0..n {
                b[i] = mus.get(i).copied().unwrap_or(0.0);
                b[n + i] = init.init_log_sigma;
            }
        };
        fill(&mut contact, &start[..nc], n_contact);
        fill(&mut actuator, &start[nc..], n_act);
        let mut input_scale = spec.obs_scale.clone();
        input_scale.extend(std::iter::repeat_n(spec.action_limit, spec.action_dim()));
        Ok(Self { layout, contact, actuator, input_scale, base })
    }

    /// Function with all-zero networks: every parameter sits at its range
    /// midpoint with unit pre-squash variance.
    pub fn zeros(spec: &EnvSpec, layout: ParamLayout, hidden: &[usize]) -> Result<Self> {
        layout.validate(spec)?;
        let n_in = spec.obs_dim() + spec.action_dim();
        let sizes = |n_out: usize| {
            let mut s = vec![n_in];
            s.extend(hidden);
            s.push(2 * n_out);
            s
        };
        let contact = MlpNet::zeros(&sizes(layout.num_contact().max(1)))?;
        let actuator = MlpNet::zeros(&sizes(layout.num_actuator().max(1)))?;
        let mut input_scale = spec.obs_scale.clone();
        input_scale.extend(std::iter::repeat_n(spec.action_limit, spec.action_dim()));
        Ok(Self { layout, contact, actuator, input_scale, base: SimParamVector::nominal(spec) })
    }

    pub fn input_dim(&self) -> usize {
        self.input_scale.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layout.len()
    }

    pub fn num_params(&self) -> usize {
        self.contact.num_params() + self.actuator.num_params()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.contact.params().to_vec();
        p.extend_from_slice(self.actuator.params());
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let n = self.contact.num_params();
        self.contact.params_mut().copy_from_slice(&p[..n]);
        self.actuator.params_mut().copy_from_slice(&p[n..]);
    }

    fn normalized(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(contract(format!(
                "parameter function expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(input.iter().zip(&self.input_scale).map(|(x, s)| x / s).collect())
    }

    fn assemble(&self, c_out: &[f64], a_out: &[f64]) -> GaussianHead {
        let nc = self.layout.num_contact();
        let na = self.layout.num_actuator();
        let nc_out = nc.max(1);
        let na_out = na.max(1);
        let mut mu = Vec::with_capacity(nc + na);
        let mut ls = Vec::with_capacity(nc + na);
        mu.extend_from_slice(&c_out[..nc]);
        ls.extend_from_slice(&c_out[nc_out..nc_out + nc]);
        mu.extend_from_slice(&a_out[..na]);
        ls.extend_from_slice(&a_out[na_out..na_out + na]);
        GaussianHead::new(mu, ls)
    }

    /// Gaussian over pre-squash parameters at raw input `(features, action)`.
    pub fn head(&self, input: &[f64]) -> Result<GaussianHead> {
        let x = self.normalized(input)?;
        Ok(self.assemble(&self.contact.forward(&x)?, &self.actuator.forward(&x)?))
    }

    pub fn head_cached(&self, input: &[f64]) -> Result<(GaussianHead, ParamFnCache)> {
        let x = self.normalized(input)?;
        let c = self.contact.forward_cached(&x)?;
        let a = self.actuator.forward_cached(&x)?;
        let head = self.assemble(c.output(), a.output());
        Ok((head, ParamFnCache { contact: c, actuator: a }))
    }

    /// Accumulate the parameter gradient given d/d(mu) and d/d(log_sigma).
    pub fn accumulate_grad(&self, cache: &ParamFnCache, d_mu: &[f64], d_ls: &[f64], grad: &mut [f64]) -> Result<()> {
        let nc = self.layout.num_contact();
        let na = self.layout.num_actuator();
        let (nc_out, na_out) = (nc.max(1), na.max(1));
        let mut gc = vec![0.0; 2 * nc_out];
        gc[..nc].copy_from_slice(&d_mu[..nc]);
        gc[nc_out..nc_out + nc].copy_from_slice(&d_ls[..nc]);
        let mut ga = vec![0.0; 2 * na_out];
        ga[..na].copy_from_slice(&d_mu[nc..]);
        ga[na_out..na_out + na].copy_from_slice(&d_ls[nc..]);
        let n = self.contact.num_params();
        let (g_contact, g_actuator) = grad.split_at_mut(n);
        self.contact.backward(&cache.contact, &gc, g_contact)?;
        self.actuator.backward(&cache.actuator, &ga, g_actuator)?;
        Ok(())
    }

    pub fn to_checkpoint(&self) -> ParamFnCheckpoint {
        ParamFnCheckpoint {
            format: PARAM_FN_FORMAT.into(),
            version: nn::NET_VERSION,
            layout: self.layout.clone(),
            input_scale: self.input_scale.clone(),
            base: self.base.clone(),
            contact: self.contact.to_checkpoint(),
            actuator: self.actuator.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ckpt: &ParamFnCheckpoint) -> Result<Self> {
        if ckpt.format != PARAM_FN_FORMAT || ckpt.version != nn::NET_VERSION {
            return Err(Error::Schema(format!(
                "unsupported parameter-function checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let f = Self {
            layout: ckpt.layout.clone(),
            contact: MlpNet::from_checkpoint(&ckpt.contact)?,
            actuator: MlpNet::from_checkpoint(&ckpt.actuator)?,
            input_scale: ckpt.input_scale.clone(),
            base: ckpt.base.clone(),
        };
        if f.contact.input_dim() != f.input_dim() || f.actuator.input_dim() != f.input_dim() {
            return Err(Error::Schema("branch input sizes disagree with input_scale".into()));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamFnCache {
    contact: ForwardCache,
    actuator: ForwardCache,
}

/// Result of evaluating the parameter function once.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEval {
    pub params: SimParamVector,
    /// Pre-squash sample (the mean in deterministic mode).
    pub pre_squash: Vec<f64>,
    /// Pre-squash Gaussian log-density of `pre_squash`.
    pub log_prob: f64,
}

/// Concatenate state features and action into the parameter-function input.
pub fn param_input(features: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = features.to_vec();
    x.extend_from_slice(action);
    x
}

/// Evaluate `f` at full (noise-free) state `s` and executed action `a`.
pub fn param_eval(
    f: &ParamFunction,
    spec: &EnvSpec,
    s: &EnvState,
    a: &[f64],
    rng: &mut Rng,
    stochastic: bool,
) -> Result<ParamEval> {
    let head = f.head(&param_input(&envs::observe_exact(spec, s), a))?;
    let (pre, log_prob) = if stochastic {
        head.sample(rng)
    } else {
        let lp = head.log_prob(&head.mu);
        (head.mu.clone(), lp)
    };
    Ok(ParamEval { params: f.layout.squash_into(&pre, &f.base), pre_squash: pre, log_prob })
}

/// Sample `c ~ f(s, a)`, override the stepper's constants with it and step
/// the source dynamics.
pub fn hybrid_step(
    spec: &EnvSpec,
    f: &ParamFunction,
    state: &EnvState,
    a: &[f64],
    param_rng: &mut Rng,
    env_rng: &mut Rng,
    stochastic: bool,
) -> Result<(EnvState, ParamEval, StepNoise)> {
    let a = envs::clip_action(spec, a);
    let eval = param_eval(f, spec, state, &a, param_rng, stochastic)?;
    let (next, noise) = envs::env_step(spec, &TargetGap::none(), state, &a, Some(&eval.params), env_rng)?;
    Ok((next, eval, noise))
}

/// Where a rollout's simulation parameters come from.
#[derive(Debug, Clone)]
pub enum ParamSource {
    /// The analytic simulator's own constants (no override).
    Nominal,
    /// A constant override.
    Fixed(SimParamVector),
    /// The learned hybrid simulator.
    Learned { f: ParamFunction, stochastic: bool },
    /// State-independent Gaussian over pre-squash parameters, resampled at
    /// each episode reset.
    EpisodeGaussian { layout: ParamLayout, base: SimParamVector, mean: Vec<f64>, log_std: Vec<f64> },
}

/// Per-factor breakdown of a trajectory's log-probability.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryLogProb {
    pub total: f64,
    pub initial: f64,
    pub policy: f64,
    pub param_fn: f64,
    pub dynamics: f64,
    pub observation: f64,
}

/// Log-probability of a recorded trajectory: initial-state density,
/// observation noise at every observation, policy density of each raw action
/// sample, parameter-function density of each pre-squash sample and the
/// torque-noise density (in its standard-normal coordinates). Deterministic
/// factors contribute 0.
pub fn trajectory_log_prob(
    traj: &Trajectory,
    actor: &dyn Actor,
    f: Option<&ParamFunction>,
    spec: &EnvSpec,
) -> Result<TrajectoryLogProb> {
    let mut lp = TrajectoryLogProb { initial: spec.initial_log_prob(&traj.initial_state), ..Default::default() };
    let obs_std: Vec<f64> = envs::obs_noise_std(spec);
    let obs_log_std: Vec<f64> = obs_std.iter().map(|s| s.ln()).collect();
    let obs_term = |obs: &[f64], z: &[f64], state: &EnvState| -> Result<f64> {
        if !traj.obs_noise {
            return Ok(0.0);
        }
        if z.len() != obs.len() {
            return Err(contract("observation-noise draws were not recorded"));
        }
        Ok(nn::gaussian_log_prob(&envs::observe_exact(spec, state), &obs_log_std, obs))
    };
    lp.observation += obs_term(&traj.initial_obs, &traj.initial_obs_z, &traj.initial_state)?;
    for step in &traj.steps {
        lp.observation += obs_term(&step.next_obs, &step.next_obs_z, &step.next_state)?;
        match actor.distribution(&step.obs)? {
            ActorOutput::Stochastic(head) => {
                if step.action_sample.len() != head.dim() {
                    return Err(contract("raw action sample was not recorded"));
                }
                lp.policy += head.log_prob(&step.action_sample);
            }
            ActorOutput::Deterministic(_) => {}
        }
        if !step.param_sample.is_empty() {
            let f = f.ok_or_else(|| contract("trajectory has parameter samples but no parameter function"))?;
            let head = f.head(&param_input(&envs::observe_exact(spec, &step.state), &step.action))?;
            lp.param_fn += head.log_prob(&step.param_sample);
        }
        if traj.torque_noise {
            if step.torque_z.len() != step.action.len() {
                return Err(contract("torque-noise draws were not recorded"));
            }
            lp.dynamics += nn::standard_normal_log_prob(&step.torque_z);
        }
    }
    lp.total = lp.initial + lp.policy + lp.param_fn + lp.dynamics + lp.observation;
    Ok(lp)
}
