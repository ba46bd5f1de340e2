//! Analytic source environments and their target-domain variants.
//!
//! Three systems are provided, all stepped with semi-implicit Euler at
//! 50 Hz (`dt = 0.02 s`):
//!
//! | name       | q        | qdot       | actions (limit 1)          | observation     |
//! |------------|----------|------------|----------------------------|-----------------|
//! | `slider`   | x (m)    | v (m/s)    | push force                 | (x, v)          |
//! | `pendulum` | θ (rad)  | ω (rad/s)  | joint torque               | (θ, ω)          |
//! | `hopper1d` | x, z (m) | vx, vz     | leg thrust, hip (traction) | (z, vx, vz)     |
//!
//! The hopper is a point mass on a massless springy leg of rest length
//! `length`. Ground contact is a penalty spring-damper on leg compression;
//! the leg thrust acts along the normal while in contact and the hip drives
//! traction bounded by the friction cone.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::hybrid::SimParamVector;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Slider,
    Pendulum,
    Hopper1d,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Slider => "slider",
            EnvKind::Pendulum => "pendulum",
            EnvKind::Hopper1d => "hopper1d",
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slider" => Ok(EnvKind::Slider),
            "pendulum" => Ok(EnvKind::Pendulum),
            "hopper1d" => Ok(EnvKind::Hopper1d),
            other => Err(Error::Config(format!("unknown environment {other:?}"))),
        }
    }
}

/// Simulation state: generalized positions, velocities and elapsed steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub t: usize,
}

impl EnvState {
    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).all(|v| v.is_finite())
    }

    /// `(q, qdot)` concatenated.
    pub fn to_vec(&self) -> Vec<f64> {
        self.q.iter().chain(&self.qdot).copied().collect()
    }
}

/// Physical constants, limits and noise model of one environment.
///
/// Field meaning depends on the system: `friction` is the Coulomb
/// coefficient for the slider and the hopper foot, and a viscous joint
/// damping (N·m·s/rad) for the pendulum. `length` is the pendulum arm or the
/// hopper leg rest length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub dt: f64,
    pub gravity: f64,
    /// kg
    pub mass: f64,
    /// m
    pub length: f64,
    pub friction: f64,
    /// N/m, hopper only
    pub contact_stiffness: f64,
    /// N·s/m, hopper only
    pub contact_damping: f64,
    /// N·s/m, hopper foot tangential damping
    pub tangential_damping: f64,
    /// Force or torque per unit action, one entry per actuator.
    pub motor_gain: Vec<f64>,
    /// Velocity-proportional loss subtracted from each actuator (N·s/m).
    pub motor_friction: f64,
    pub action_limit: f64,
    pub max_steps: usize,
    /// Hopper healthy height band (m).
    pub min_height: f64,
    pub max_height: f64,
    /// Slider |v| or pendulum |ω| bound.
    pub max_speed: f64,
    /// Nominal magnitude of each observation dimension.
    pub obs_scale: Vec<f64>,
    /// Observation noise std as a fraction of `obs_scale`.
    pub obs_noise: f64,
    /// Multiplicative torque noise std.
    pub torque_noise: f64,
    /// Uniform initial-state box over `(q, qdot)`.
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
}

impl EnvSpec {
    pub fn slider() -> Self {
        Self {
            kind: EnvKind::Slider,
            dt: 0.02,
            gravity: 9.8,
            mass: 1.0,
            length: 0.0,
            friction: 0.5,
            contact_stiffness: 0.0,
            contact_damping: 0.0,
            tangential_damping: 0.0,
            motor_gain: vec![10.0],
            motor_friction: 0.0,
            action_limit: 1.0,
            max_steps: 100,
            min_height: 0.0,
            max_height: 0.0,
            max_speed: 2.0,
            obs_scale: vec![1.0, 1.0],
            obs_noise: 0.10,
            torque_noise: 0.05,
            init_low: vec![-0.1, 0.0],
            init_high: vec![0.1, 0.2],
        }
    }

    /// Slider without Coulomb friction: a double integrator.
    pub fn frictionless_slider() -> Self {
        Self { friction: 0.0, motor_gain: vec![5.0], ..Self::slider() }
    }

    pub fn pendulum() -> Self {
        Self {
            kind: EnvKind::Pendulum,
            dt: 0.02,
            gravity: 9.8,
            mass: 1.0,
            length: 1.0,
            friction: 0.1,
            contact_stiffness: 0.0,
            contact_damping: 0.0,
            tangential_damping: 0.0,
            motor_gain: vec![5.0],
            motor_friction: 0.0,
            action_limit: 1.0,
            max_steps: 150,
            min_height: 0.0,
            max_height: 0.0,
            max_speed: 8.0,
            obs_scale: vec![1.0, 2.0],
            obs_noise: 0.10,
            torque_noise: 0.05,
            init_low: vec![-0.2, -0.2],
            init_high: vec![0.2, 0.2],
        }
    }

    pub fn hopper1d() -> Self {
        Self {
            kind: EnvKind::Hopper1d,
            dt: 0.02,
            gravity: 9.8,
            mass: 1.0,
            length: 1.0,
            friction: 0.8,
            contact_stiffness: 15.0,
            contact_damping: 3.0,
            tangential_damping: 2.0,
            motor_gain: vec![8.0, 4.0],
            motor_friction: 0.0,
            action_limit: 1.0,
            max_steps: 200,
            min_height: 0.3,
            max_height: 2.0,
            max_speed: 0.0,
            obs_scale: vec![0.5, 1.0, 1.0],
            obs_noise: 0.10,
            torque_noise: 0.05,
            init_low: vec![0.0, 1.0, -0.1, 0.0],
            init_high: vec![0.0, 1.1, 0.1, 0.0],
        }
    }

    pub fn by_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Slider => Self::slider(),
            EnvKind::Pendulum => Self::pendulum(),
            EnvKind::Hopper1d => Self::hopper1d(),
        }
    }

    /// Same system with observation and torque noise disabled.
    pub fn without_noise(&self) -> Self {
        Self { obs_noise: 0.0, torque_noise: 0.0, ..self.clone() }
    }

    pub fn num_q(&self) -> usize {
        match self.kind {
            EnvKind::Slider | EnvKind::Pendulum => 1,
            EnvKind::Hopper1d => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.motor_gain.len()
    }

    pub fn obs_dim(&self) -> usize {
        match self.kind {
            EnvKind::Slider | EnvKind::Pendulum => 2,
            EnvKind::Hopper1d => 3,
        }
    }

    /// Index into `qdot` of the coordinate each actuator drives.
    fn actuated_velocity(&self, state: &EnvState, actuator: usize) -> f64 {
        match self.kind {
            EnvKind::Slider | EnvKind::Pendulum => state.qdot[0],
            // thrust acts along z, hip along x
            EnvKind::Hopper1d => state.qdot[1 - actuator],
        }
    }

    /// Velocity along the task's forward direction.
    pub fn forward_velocity(&self, state: &EnvState) -> f64 {
        state.qdot[0]
    }

    pub fn validate(&self) -> Result<()> {
        let n_state = 2 * self.num_q();
        if !(self.dt > 0.0) || !(self.mass > 0.0) || self.max_steps == 0 {
            return Err(Error::Config("dt, mass and max_steps must be positive".into()));
        }
        let expected_actuators = match self.kind {
            EnvKind::Slider | EnvKind::Pendulum => 1,
            EnvKind::Hopper1d => 2,
        };
        if self.motor_gain.len() != expected_actuators {
            return Err(Error::Config(format!(
                "{} needs {expected_actuators} motor gains",
                self.kind.name()
            )));
        }
        if self.obs_scale.len() != self.obs_dim() || self.obs_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("obs_scale must be positive, one per observation".into()));
        }
        if self.init_low.len() != n_state
            || self.init_high.len() != n_state
            || self.init_low.iter().zip(&self.init_high).any(|(l, h)| l > h)
        {
            return Err(Error::Config("initial-state box is malformed".into()));
        }
        if self.kind == EnvKind::Pendulum && !(self.length > 0.0) {
            return Err(Error::Config("pendulum length must be positive".into()));
        }
        Ok(())
    }

    /// Draw an initial state from the uniform box.
    pub fn sample_initial_state(&self, rng: &mut Rng) -> EnvState {
        let v: Vec<f64> = self
            .init_low
            .iter()
            .zip(&self.init_high)
            .map(|(&l, &h)| if l == h { l } else { rng.random_range(l..h) })
            .collect();
        let nq = self.num_q();
        EnvState { q: v[..nq].to_vec(), qdot: v[nq..].to_vec(), t: 0 }
    }

    /// Log-density of the initial-state distribution at `s` (degenerate
    /// dimensions contribute 0).
    pub fn initial_log_prob(&self, s: &EnvState) -> f64 {
        let v = s.to_vec();
        let mut lp = 0.0;
        for ((x, l), h) in v.iter().zip(&self.init_low).zip(&self.init_high) {
            if l == h {
                continue;
            }
            if x < l || x > h {
                return f64::NEG_INFINITY;
            }
            lp -= (h - l).ln();
        }
        lp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    None,
    Deform,
    Power,
    Heavy,
}

impl GapKind {
    pub fn name(self) -> &'static str {
        match self {
            GapKind::None => "none",
            GapKind::Deform => "deform",
            GapKind::Power => "power",
            GapKind::Heavy => "heavy",
        }
    }
}

impl FromStr for GapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(GapKind::None),
            "deform" => Ok(GapKind::Deform),
            "power" => Ok(GapKind::Power),
            "heavy" => Ok(GapKind::Heavy),
            other => Err(Error::Config(format!("unknown gap kind {other:?}"))),
        }
    }
}

/// How a target domain differs from its source.
///
/// * `Power`: actual torque = `motor_scale[i] * commanded - motor_friction * qdot`.
/// * `Heavy`: body mass increased by `mass_delta`.
/// * `Deform`: soft nonlinear contact. The hopper's contact spring becomes
///   `deform_stiffness_scale * k * pen + deform_quadratic * pen^2` with damping
///   scaled by `deform_damping_scale`; on the slider and pendulum the friction
///   (resp. joint damping) becomes `deform_stiffness_scale * mu + deform_quadratic * |v|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGap {
    pub kind: GapKind,
    #[serde(default)]
    pub motor_friction: f64,
    #[serde(default)]
    pub motor_scale: Vec<f64>,
    #[serde(default)]
    pub mass_delta: f64,
    #[serde(default = "one")]
    pub deform_stiffness_scale: f64,
    #[serde(default)]
    pub deform_quadratic: f64,
    #[serde(default = "one")]
    pub deform_damping_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for TargetGap {
    fn default() -> Self {
        Self::none()
    }
}

impl TargetGap {
    pub fn none() -> Self {
        Self {
            kind: GapKind::None,
            motor_friction: 0.0,
            motor_scale: Vec::new(),
            mass_delta: 0.0,
            deform_stiffness_scale: 1.0,
            deform_quadratic: 0.0,
            deform_damping_scale: 1.0,
        }
    }

    pub fn power(motor_friction: f64, motor_scale: Vec<f64>) -> Self {
        Self { kind: GapKind::Power, motor_friction, motor_scale, ..Self::none() }
    }

    pub fn heavy(mass_delta: f64) -> Self {
        Self { kind: GapKind::Heavy, mass_delta, ..Self::none() }
    }

    pub fn deform(stiffness_scale: f64, quadratic: f64, damping_scale: f64) -> Self {
        Self {
            kind: GapKind::Deform,
            deform_stiffness_scale: stiffness_scale,
            deform_quadratic: quadratic,
            deform_damping_scale: damping_scale,
            ..Self::none()
        }
    }

    /// Shipped gap magnitudes for each system.
    pub fn default_for(env: EnvKind, kind: GapKind) -> Self {
        match (env, kind) {
            (_, GapKind::None) => Self::none(),
            (EnvKind::Slider, GapKind::Power) => Self::power(0.0, vec![0.5]),
            (EnvKind::Slider, GapKind::Heavy) => Self::heavy(1.0),
            (EnvKind::Slider, GapKind::Deform) => Self::deform(1.0, 0.6, 1.0),
            (EnvKind::Pendulum, GapKind::Power) => Self::power(0.3, vec![1.0]),
            (EnvKind::Pendulum, GapKind::Heavy) => Self::heavy(0.5),
            (EnvKind::Pendulum, GapKind::Deform) => Self::deform(1.0, 0.2, 1.0),
            (EnvKind::Hopper1d, GapKind::Power) => Self::power(0.0, vec![0.5, 1.0]),
            (EnvKind::Hopper1d, GapKind::Heavy) => Self::heavy(0.5),
            (EnvKind::Hopper1d, GapKind::Deform) => Self::deform(0.2, 10.0, 0.5),
        }
    }

    fn scale(&self, actuator: usize) -> f64 {
        match self.kind {
            GapKind::Power => self.motor_scale.get(actuator).copied().unwrap_or(1.0),
            _ => 1.0,
        }
    }

    pub fn validate(&self, spec: &EnvSpec) -> Result<()> {
        if !self.motor_scale.is_empty() && self.motor_scale.len() != spec.action_dim() {
            return Err(Error::Config("gap motor_scale must have one entry per actuator".into()));
        }
        if spec.mass + self.mass_delta <= 0.0 {
            return Err(Error::Config("gap makes the mass non-positive".into()));
        }
        let all = [
            self.motor_friction,
            self.mass_delta,
            self.deform_stiffness_scale,
            self.deform_quadratic,
            self.deform_damping_scale,
        ];
        if all.iter().chain(&self.motor_scale).any(|v| !v.is_finite()) {
            return Err(Error::Config("gap magnitudes must be finite".into()));
        }
        Ok(())
    }
}

/// Weights of `w_c + w_v*dir*v - w_a*|a|^2 - w_j*#saturated - w_s*|qddot|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRewardConfig {
    pub w_c: f64,
    pub w_v: f64,
    pub w_a: f64,
    pub w_j: f64,
    pub w_s: f64,
    /// +1 rewards forward motion, -1 backward.
    pub direction: f64,
}

impl TaskRewardConfig {
    pub fn default_for(env: EnvKind) -> Self {
        match env {
            EnvKind::Slider => Self { w_c: 0.5, w_v: 1.0, w_a: 0.05, w_j: 0.0, w_s: 0.0, direction: 1.0 },
            EnvKind::Pendulum => Self { w_c: 0.5, w_v: 0.25, w_a: 0.1, w_j: 0.05, w_s: 0.001, direction: 1.0 },
            EnvKind::Hopper1d => Self { w_c: 1.0, w_v: 1.0, w_a: 0.3, w_j: 0.0, w_s: 0.002, direction: 1.0 },
        }
    }

    pub fn reversed(&self) -> Self {
        Self { direction: -self.direction, ..self.clone() }
    }
}

/// Effective physical constants after applying an optional parameter
/// override. With `None` these are exactly the spec's nominal constants.
struct Effective {
    friction: f64,
    stiffness: f64,
    damping: f64,
    tangential: f64,
    motor: Vec<f64>,
}

impl Effective {
    fn new(spec: &EnvSpec, params: Option<&SimParamVector>) -> Self {
        match params {
            None => Self {
                friction: spec.friction,
                stiffness: spec.contact_stiffness,
                damping: spec.contact_damping,
                tangential: spec.tangential_damping,
                motor: spec.motor_gain.clone(),
            },
            Some(p) => Self {
                friction: p.friction,
                stiffness: spec.contact_stiffness * p.contact_stiffness_scale,
                damping: spec.contact_damping * p.contact_damping_scale,
                tangential: spec.tangential_damping * p.tangential_damping_scale,
                motor: spec
                    .motor_gain
                    .iter()
                    .zip(&p.motor_scale)
                    .map(|(g, s)| g * s)
                    .collect(),
            },
        }
    }
}

/// Actual torque delivered by the Power gap for a commanded torque.
pub fn effective_torque(gap: &TargetGap, actuator: usize, commanded: f64, qdot: f64) -> f64 {
    match gap.kind {
        GapKind::Power => gap.scale(actuator) * commanded - gap.motor_friction * qdot,
        _ => commanded,
    }
}

/// Record of the random draws consumed by one step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepNoise {
    /// Standard-normal torque-noise draws (empty when torque noise is off).
    pub torque_z: Vec<f64>,
}

/// Clip an action to the actuator limits.
pub fn clip_action(spec: &EnvSpec, action: &[f64]) -> Vec<f64> {
    action
        .iter()
        .map(|a| if a.is_nan() { 0.0 } else { a.clamp(-spec.action_limit, spec.action_limit) })
        .collect()
}

/// Advance one control step.
///
/// The action is clipped, perturbed by multiplicative torque noise
/// `(1 + torque_noise * z)`, turned into torque through the motor gains
/// (scaled by `params.motor_scale` when given), passed through the gap's
/// actuator model, and integrated with semi-implicit Euler.
pub fn env_step(
    spec: &EnvSpec,
    gap: &TargetGap,
    state: &EnvState,
    action: &[f64],
    params: Option<&SimParamVector>,
    rng: &mut Rng,
) -> Result<(EnvState, StepNoise)> {
    let torque_z: Vec<f64> = if spec.torque_noise > 0.0 {
        (0..action.len()).map(|_| rng.sample(StandardNormal)).collect()
    } else {
        Vec::new()
    };
    let next = env_step_with_noise(spec, gap, state, action, params, &torque_z)?;
    Ok((next, StepNoise { torque_z }))
}

/// Deterministic core of [`env_step`] given explicit torque-noise draws.
pub fn env_step_with_noise(
    spec: &EnvSpec,
    gap: &TargetGap,
    state: &EnvState,
    action: &[f64],
    params: Option<&SimParamVector>,
    torque_z: &[f64],
) -> Result<EnvState> {
    if action.len() != spec.action_dim() {
        return Err(contract(format!(
            "{} expects {} actions, got {}",
            spec.kind.name(),
            spec.action_dim(),
            action.len()
        )));
    }
    if let Some(p) = params {
        if p.motor_scale.len() != spec.action_dim() {
            return Err(contract("parameter vector has the wrong number of motor scales"));
        }
    }
    if !state.is_finite() {
        return Err(Error::Diverged { step: state.t });
    }
    let eff = Effective::new(spec, params);
    let a = clip_action(spec, action);
    let torque: Vec<f64> = (0..a.len())
        .map(|i| {
            let noisy = match torque_z.get(i) {
                Some(z) => a[i] * (1.0 + spec.torque_noise * z),
                None => a[i],
            };
            let commanded = eff.motor[i] * noisy - spec.motor_friction * spec.actuated_velocity(state, i);
            effective_torque(gap, i, commanded, spec.actuated_velocity(state, i))
        })
        .collect();
    let mass = spec.mass + if gap.kind == GapKind::Heavy { gap.mass_delta } else { 0.0 };
    let dt = spec.dt;
    let mut next = state.clone();
    next.t += 1;
    match spec.kind {
        EnvKind::Slider => {
            let v = state.qdot[0];
            let mu = match gap.kind {
                GapKind::Deform => gap.deform_stiffness_scale * eff.friction + gap.deform_quadratic * v.abs(),
                _ => eff.friction,
            };
            let v_free = v + dt * torque[0] / mass;
            let stop = dt * (mu * spec.gravity);
            let v_next = if v_free.abs() <= stop { 0.0 } else { v_free - v_free.signum() * stop };
            next.qdot[0] = v_next;
            next.q[0] = state.q[0] + dt * v_next;
        }
        EnvKind::Pendulum => {
            let (th, om) = (state.q[0], state.qdot[0]);
            let damping = match gap.kind {
                GapKind::Deform => gap.deform_stiffness_scale * eff.friction + gap.deform_quadratic * om.abs(),
                _ => eff.friction,
            };
            let inertia = mass * spec.length * spec.length;
            let acc = (torque[0] - damping * om - mass * spec.gravity * spec.length * th.sin()) / inertia;
            let om_next = om + dt * acc;
            next.qdot[0] = om_next;
            next.q[0] = th + dt * om_next;
        }
        EnvKind::Hopper1d => {
            let (x, z) = (state.q[0], state.q[1]);
            let (vx, vz) = (state.qdot[0], state.qdot[1]);
            let (ground_n, traction) = hopper_contact(spec, gap, &eff, z, vx, vz, torque[0], torque[1]);
            let ax = traction / mass;
            let az = ground_n / mass - spec.gravity;
            let vx_next = vx + dt * ax;
            let vz_next = vz + dt * az;
            next.qdot = vec![vx_next, vz_next];
            next.q = vec![x + dt * vx_next, z + dt * vz_next];
        }
    }
    if !next.is_finite() {
        return Err(Error::Diverged { step: next.t });
    }
    Ok(next)
}

/// Hopper ground reaction: returns (normal force on the body, traction).
/// The normal force is clamped at zero, so the ground never pulls.
#[allow(clippy::too_many_arguments)]
fn hopper_contact(
    spec: &EnvSpec,
    gap: &TargetGap,
    eff: &Effective,
    z: f64,
    vx: f64,
    vz: f64,
    thrust: f64,
    hip: f64,
) -> (f64, f64) {
    let pen = spec.length - z;
    if pen <= 0.0 {
        return (0.0, 0.0);
    }
    let spring = match gap.kind {
        GapKind::Deform => {
            gap.deform_stiffness_scale * eff.stiffness * pen + gap.deform_quadratic * pen * pen
                - gap.deform_damping_scale * eff.damping * vz
        }
        _ => eff.stiffness * pen - eff.damping * vz,
    };
    let normal = (spring.max(0.0) + thrust).max(0.0);
    let limit = eff.friction * normal;
    let traction = (hip - eff.tangential * vx).clamp(-limit, limit);
    (normal, traction)
}

/// Noise-free observation map.
pub fn observe_exact(spec: &EnvSpec, state: &EnvState) -> Vec<f64> {
    match spec.kind {
        EnvKind::Slider | EnvKind::Pendulum => vec![state.q[0], state.qdot[0]],
        EnvKind::Hopper1d => vec![state.q[1], state.qdot[0], state.qdot[1]],
    }
}

/// Observation plus the standard-normal draws that produced its noise
/// (empty when noise is off).
pub fn observe_with_noise(spec: &EnvSpec, state: &EnvState, rng: &mut Rng, noise_on: bool) -> (Vec<f64>, Vec<f64>) {
    let mut obs = observe_exact(spec, state);
    if !noise_on || spec.obs_noise == 0.0 {
        return (obs, Vec::new());
    }
    let z: Vec<f64> = (0..obs.len()).map(|_| rng.sample(StandardNormal)).collect();
    for ((o, s), z) in obs.iter_mut().zip(&spec.obs_scale).zip(&z) {
        *o += spec.obs_noise * s * z;
    }
    (obs, z)
}

pub fn observe(spec: &EnvSpec, state: &EnvState, rng: &mut Rng, noise_on: bool) -> Vec<f64> {
    observe_with_noise(spec, state, rng, noise_on).0
}

/// Per-dimension observation noise std.
pub fn obs_noise_std(spec: &EnvSpec) -> Vec<f64> {
    spec.obs_scale.iter().map(|s| spec.obs_noise * s).collect()
}

/// True when the state left the healthy region or the step budget is spent.
pub fn is_terminal(spec: &EnvSpec, state: &EnvState) -> bool {
    state.t >= spec.max_steps || is_unhealthy(spec, state)
}

/// Failure termination only (excludes the time limit).
pub fn is_unhealthy(spec: &EnvSpec, state: &EnvState) -> bool {
    if !state.is_finite() {
        return true;
    }
    match spec.kind {
        EnvKind::Slider | EnvKind::Pendulum => state.qdot[0].abs() > spec.max_speed,
        EnvKind::Hopper1d => {
            let z = state.q[1];
            z < spec.min_height || z > spec.max_height
        }
    }
}

/// Task reward for the transition `s -> s_next` under executed action `a`.
/// Joint-limit count uses actuators at their torque limit; `qddot` is
/// estimated as `(qdot' - qdot) / dt`.
pub fn task_reward(cfg: &TaskRewardConfig, spec: &EnvSpec, s: &EnvState, a: &[f64], s_next: &EnvState) -> f64 {
    let v = spec.forward_velocity(s_next);
    let a_sq: f64 = a.iter().map(|x| x * x).sum();
    let saturated = a.iter().filter(|x| x.abs() >= spec.action_limit).count() as f64;
    let acc = s
        .qdot
        .iter()
        .zip(&s_next.qdot)
        .map(|(v0, v1)| ((v1 - v0) / spec.dt).powi(2))
        .sum::<f64>()
        .sqrt();
    cfg.w_c + cfg.w_v * cfg.direction * v - cfg.w_a * a_sq - cfg.w_j * saturated - cfg.w_s * acc
}

/// An environment instance: spec + gap + a shared step counter.
///
/// Clones share the counter, so a handle passed to a training routine can be
/// audited afterwards for how many steps were taken on it.
#[derive(Debug, Clone)]
pub struct Env {
    pub spec: EnvSpec,
    pub gap: TargetGap,
    steps: Arc<AtomicU64>,
}

impl Env {
    pub fn source(spec: EnvSpec) -> Result<Self> {
        make_target(&spec, &TargetGap::none())
    }

    pub fn step(
        &self,
        state: &EnvState,
        action: &[f64],
        params: Option<&SimParamVector>,
        rng: &mut Rng,
    ) -> Result<(EnvState, StepNoise)> {
        self.steps.fetch_add(1, Ordering::Relaxed);
        env_step(&self.spec, &self.gap, state, action, params, rng)
    }

    /// Step with a per-episode spec (domain randomization) while still
    /// counting against this handle.
    pub fn step_with_spec(
        &self,
        spec: &EnvSpec,
        state: &EnvState,
        action: &[f64],
        params: Option<&SimParamVector>,
        rng: &mut Rng,
    ) -> Result<(EnvState, StepNoise)> {
        self.steps.fetch_add(1, Ordering::Relaxed);
        env_step(spec, &self.gap, state, action, params, rng)
    }

    pub fn step_count(&self) -> u64 {
        self.steps.load(Ordering::Relaxed)
    }

    pub fn reset(&self, rng: &mut Rng) -> EnvState {
        self.spec.sample_initial_state(rng)
    }
}

/// Build the target-domain environment for `gap` on top of `spec`.
pub fn make_target(spec: &EnvSpec, gap: &TargetGap) -> Result<Env> {
    spec.validate()?;
    gap.validate(spec)?;
    Ok(Env { spec: spec.clone(), gap: gap.clone(), steps: Arc::new(AtomicU64::new(0)) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn state(q: &[f64], qdot: &[f64]) -> EnvState {
        EnvState { q: q.to_vec(), qdot: qdot.to_vec(), t: 0 }
    }

    #[test]
    fn slider_friction_hand_integration() {
        let spec = EnvSpec::slider().without_noise();
        let s = state(&[0.3], &[1.0]);
        let (n, _) = env_step(&spec, &TargetGap::none(), &s, &[0.0], None, &mut from_seed(0)).unwrap();
        let v = 1.0 - 0.02 * (0.5 * 9.8);
        assert!((n.qdot[0] - 0.902).abs() < 1e-12);
        assert!((n.q[0] - (0.3 + 0.02 * v)).abs() < 1e-12);
        assert_eq!(n.t, 1);
    }

    #[test]
    fn equilibrium_is_preserved() {
        for spec in [EnvSpec::slider(), EnvSpec::pendulum()] {
            let spec = spec.without_noise();
            let s = state(&[0.0], &[0.0]);
            let (n, _) = env_step(&spec, &TargetGap::none(), &s, &[0.0], None, &mut from_seed(0)).unwrap();
            assert_eq!(n.q, s.q);
            assert_eq!(n.qdot, s.qdot);
            assert_eq!(n.t, 1);
        }
        // hopper resting at its static compression
        let spec = EnvSpec::hopper1d().without_noise();
        let pen = spec.mass * spec.gravity / spec.contact_stiffness;
        let s = state(&[0.0, spec.length - pen], &[0.0, 0.0]);
        let (n, _) = env_step(&spec, &TargetGap::none(), &s, &[0.0, 0.0], None, &mut from_seed(0)).unwrap();
        assert!((n.q[1] - s.q[1]).abs() < 1e-12 && n.qdot[1].abs() < 1e-12);
    }

    #[test]
    fn hopper_free_fall() {
        let spec = EnvSpec::hopper1d().without_noise();
        let s = state(&[0.0, 1.5], &[0.3, -0.4]);
        let (n, _) = env_step(&spec, &TargetGap::none(), &s, &[1.0, 1.0], None, &mut from_seed(0)).unwrap();
        assert!((n.qdot[1] - (-0.4 - 0.02 * 9.8)).abs() < 1e-12);
        assert_eq!(n.qdot[0], 0.3);
    }

    #[test]
    fn hopper_normal_force_never_pulls() {
        let spec = EnvSpec::hopper1d().without_noise();
        // barely compressed, leaving the ground fast, thrust pulling down
        let s = state(&[0.0, 0.99], &[0.0, 5.0]);
        let (n, _) = env_step(&spec, &TargetGap::none(), &s, &[-1.0, 0.0], None, &mut from_seed(0)).unwrap();
        assert!((n.qdot[1] - (5.0 - 0.02 * 9.8)).abs() < 1e-12);
    }

    #[test]
    fn frictionless_slider_conserves_energy() {
        let spec = EnvSpec::frictionless_slider().without_noise();
        let mut s = state(&[0.0], &[1.3]);
        let ke = |s: &EnvState| 0.5 * spec.mass * s.qdot[0] * s.qdot[0];
        let e0 = ke(&s);
        for _ in 0..50 {
            s = env_step(&spec, &TargetGap::none(), &s, &[0.0], None, &mut from_seed(0)).unwrap().0;
            assert!((ke(&s) - e0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_state_diverges() {
        let spec = EnvSpec::slider();
        let s = state(&[f64::NAN], &[0.0]);
        let err = env_step(&spec, &TargetGap::none(), &s, &[0.0], None, &mut from_seed(0));
        assert!(matches!(err, Err(Error::Diverged { .. })));
    }

    #[test]
    fn wrong_action_length_is_contract_error() {
        let spec = EnvSpec::hopper1d();
        let s = spec.sample_initial_state(&mut from_seed(0));
        let err = env_step(&spec, &TargetGap::none(), &s, &[0.0], None, &mut from_seed(0));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn observe_noise_off_is_exact() {
        let spec = EnvSpec::slider();
        let s = state(&[1.0], &[2.0]);
        assert_eq!(observe(&spec, &s, &mut from_seed(0), false), vec![1.0, 2.0]);
    }

    #[test]
    fn observe_noise_on_is_scaled_draw() {
        let spec = EnvSpec::hopper1d();
        let s = state(&[0.0, 0.8], &[0.5, -0.1]);
        let (o, z) = observe_with_noise(&spec, &s, &mut from_seed(5), true);
        let exact = observe_exact(&spec, &s);
        for i in 0..3 {
            assert_eq!(o[i], exact[i] + 0.10 * spec.obs_scale[i] * z[i]);
        }
    }

    #[test]
    fn terminal_conditions() {
        let spec = EnvSpec::hopper1d();
        assert!(is_terminal(&spec, &state(&[0.0, 0.1], &[0.0, 0.0])));
        assert!(!is_terminal(&spec, &spec.sample_initial_state(&mut from_seed(1))));
        let mut s = spec.sample_initial_state(&mut from_seed(1));
        s.t = spec.max_steps;
        assert!(is_terminal(&spec, &s));
        let slider = EnvSpec::slider();
        assert!(is_terminal(&slider, &state(&[0.0], &[2.5])));
    }

    #[test]
    fn reward_formula() {
        let spec = EnvSpec::slider();
        let cfg = TaskRewardConfig { w_c: 1.0, w_v: 1.0, w_a: 0.1, w_j: 0.0, w_s: 0.0, direction: 1.0 };
        let s = state(&[0.0], &[2.0]);
        let r = task_reward(&cfg, &spec, &s, &[1.0], &s);
        assert!((r - 2.9).abs() < 1e-12);
        let zero = TaskRewardConfig { w_c: 0.0, w_v: 0.0, w_a: 0.0, w_j: 0.0, w_s: 0.0, direction: 1.0 };
        assert_eq!(task_reward(&zero, &spec, &s, &[0.7], &s), 0.0);
        let still = state(&[0.0], &[0.0]);
        let alive = TaskRewardConfig { w_c: 1.0, ..zero.clone() };
        assert_eq!(task_reward(&alive, &spec, &still, &[0.0], &still), 1.0);
    }

    #[test]
    fn power_gap_torque_formula() {
        let gap = TargetGap::power(0.3, vec![]);
        assert!((effective_torque(&gap, 0, 1.0, 1.0) - 0.7).abs() < 1e-15);
        let none = TargetGap::power(0.0, vec![]);
        assert_eq!(effective_torque(&none, 0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn degenerate_gaps_match_source() {
        let spec = EnvSpec::hopper1d();
        for gap in [TargetGap::none(), TargetGap::power(0.0, vec![])] {
            let mut rng_a = from_seed(9);
            let mut rng_b = from_seed(9);
            let mut a = spec.sample_initial_state(&mut from_seed(2));
            let mut b = a.clone();
            for k in 0..100 {
                let act = [((k as f64) * 0.1).sin(), 0.3];
                a = env_step(&spec, &TargetGap::none(), &a, &act, None, &mut rng_a).unwrap().0;
                b = env_step(&spec, &gap, &b, &act, None, &mut rng_b).unwrap().0;
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn unknown_gap_is_config_error() {
        assert!(matches!("wobbly".parse::<GapKind>(), Err(Error::Config(_))));
        assert!(matches!("cartpole".parse::<EnvKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn step_counter_counts() {
        let env = make_target(&EnvSpec::slider(), &TargetGap::default_for(EnvKind::Slider, GapKind::Power)).unwrap();
        let clone = env.clone();
        let mut rng = from_seed(0);
        let s = env.reset(&mut rng);
        clone.step(&s, &[0.5], None, &mut rng).unwrap();
        assert_eq!(env.step_count(), 1);
    }

    #[test]
    fn observation_mean_converges() {
        let spec = EnvSpec::hopper1d();
        let s = state(&[0.0, 0.8], &[0.5, -0.1]);
        let mut rng = from_seed(11);
        let n = 10_000;
        let mut sum = vec![0.0; 3];
        for _ in 0..n {
            for (acc, o) in sum.iter_mut().zip(observe(&spec, &s, &mut rng, true)) {
                *acc += o;
            }
        }
        let exact = observe_exact(&spec, &s);
        for i in 0..3 {
            let se = 0.10 * spec.obs_scale[i] / (n as f64).sqrt();
            assert!((sum[i] / n as f64 - exact[i]).abs() < 3.0 * se);
        }
    }
}
