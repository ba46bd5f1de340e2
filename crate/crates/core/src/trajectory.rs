//! Trajectory records and the episode runner shared by every training loop.

use serde::{Deserialize, Serialize};

use crate::baselines::{dr_sample, DrRanges};
use crate::envs::{self, Env, EnvSpec, EnvState, TaskRewardConfig};
use crate::error::{Error, Result};
use crate::hybrid::{self, ParamSource, SimParamVector};
use crate::nn::GaussianHead;
use crate::rng::{self, Rng, Stream};

/// What an actor wants to do at an observation.
#[derive(Debug, Clone, PartialEq)]
pub enum ActorOutput {
    Stochastic(GaussianHead),
    Deterministic(Vec<f64>),
}

/// Anything that maps observations to action distributions.
pub trait Actor {
    fn action_dim(&self) -> usize;
    fn distribution(&self, obs: &[f64]) -> Result<ActorOutput>;
}

/// One `(o_t, a_t, o_{t+1})` record, the discriminator's unit of evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTuple {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub next_obs: Vec<f64>,
}

impl TransitionTuple {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.obs.len() + self.action.len() + self.next_obs.len());
        v.extend_from_slice(&self.obs);
        v.extend_from_slice(&self.action);
        v.extend_from_slice(&self.next_obs);
        v
    }
}

/// A fully recorded step, including every random intermediate.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub obs: Vec<f64>,
    /// Executed (clipped) action.
    pub action: Vec<f64>,
    /// Raw draw from the actor before clipping.
    pub action_sample: Vec<f64>,
    pub policy_log_prob: f64,
    pub params: Option<SimParamVector>,
    /// Pre-squash parameter sample (empty unless a learned function acted).
    pub param_sample: Vec<f64>,
    pub param_log_prob: f64,
    pub torque_z: Vec<f64>,
    pub next_state: EnvState,
    pub next_obs: Vec<f64>,
    pub next_obs_z: Vec<f64>,
    pub reward: f64,
}

impl Transition {
    pub fn tuple(&self) -> TransitionTuple {
        TransitionTuple { obs: self.obs.clone(), action: self.action.clone(), next_obs: self.next_obs.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: EnvState,
    pub initial_obs: Vec<f64>,
    pub initial_obs_z: Vec<f64>,
    pub steps: Vec<Transition>,
    /// Ended by leaving the healthy region (or divergence).
    pub terminated: bool,
    /// Ended by the step budget.
    pub truncated: bool,
    pub diverged: bool,
    pub obs_noise: bool,
    pub torque_noise: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn tuples(&self) -> impl Iterator<Item = TransitionTuple> + '_ {
        self.steps.iter().map(Transition::tuple)
    }
}

pub fn mean_length(trajs: &[Trajectory]) -> f64 {
    if trajs.is_empty() {
        return 0.0;
    }
    trajs.iter().map(|t| t.len() as f64).sum::<f64>() / trajs.len() as f64
}

/// Independent random streams used inside one episode.
pub struct RolloutRngs {
    pub env: Rng,
    pub policy: Rng,
    pub param: Rng,
}

impl RolloutRngs {
    /// Streams for episode `index` of a run seeded with `seed`.
    pub fn for_episode(seed: u64, index: u64) -> Self {
        Self {
            env: rng::stream(seed, Stream::Env, index),
            policy: rng::stream(seed, Stream::Policy, index),
            param: rng::stream(seed, Stream::ParamFn, index),
        }
    }
}

/// Per-episode dynamics: either fixed by the handle or domain-randomized.
#[derive(Debug, Clone, Default)]
pub enum EpisodeDynamics {
    #[default]
    Fixed,
    Randomized(DrRanges),
}

/// Everything that defines how episodes are simulated.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub env: Env,
    pub params: ParamSource,
    pub dynamics: EpisodeDynamics,
    pub obs_noise: bool,
}

impl Simulator {
    pub fn new(env: Env, params: ParamSource) -> Self {
        Self { env, params, dynamics: EpisodeDynamics::Fixed, obs_noise: true }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.env.spec
    }

    /// Run one episode to termination or the step budget.
    pub fn run_episode(
        &self,
        actor: &dyn Actor,
        rngs: &mut RolloutRngs,
        reward: Option<&TaskRewardConfig>,
    ) -> Result<Trajectory> {
        self.run_episode_from(actor, rngs, reward, None)
    }

    /// Like [`Simulator::run_episode`], optionally starting from a given
    /// state instead of sampling the initial-state distribution.
    pub fn run_episode_from(
        &self,
        actor: &dyn Actor,
        rngs: &mut RolloutRngs,
        reward: Option<&TaskRewardConfig>,
        start: Option<&EnvState>,
    ) -> Result<Trajectory> {
        let (spec, episode_params) = match &self.dynamics {
            EpisodeDynamics::Fixed => (self.env.spec.clone(), None),
            EpisodeDynamics::Randomized(ranges) => {
                let (spec, p) = dr_sample(ranges, &self.env.spec, &mut rngs.param);
                (spec, Some(p))
            }
        };
        let fixed_params: Option<SimParamVector> = match &self.params {
            ParamSource::Nominal => episode_params,
            ParamSource::Fixed(p) => Some(p.clone()),
            ParamSource::Learned { .. } => None,
            ParamSource::EpisodeGaussian { layout, base, mean, log_std } => {
                let head = GaussianHead::new(mean.clone(), log_std.clone());
                let (pre, _) = head.sample(&mut rngs.param);
                Some(layout.squash_into(&pre, base))
            }
        };
        let initial_state = match start {
            Some(s) => s.clone(),
            None => self.env.reset(&mut rngs.env),
        };
        let (initial_obs, initial_obs_z) =
            envs::observe_with_noise(&spec, &initial_state, &mut rngs.env, self.obs_noise);
        let mut traj = Trajectory {
            initial_state: initial_state.clone(),
            initial_obs: initial_obs.clone(),
            initial_obs_z,
            steps: Vec::new(),
            terminated: false,
            truncated: false,
            diverged: false,
            obs_noise: self.obs_noise && spec.obs_noise > 0.0,
            torque_noise: spec.torque_noise > 0.0,
        };
        let mut state = initial_state;
        let mut obs = initial_obs;
        loop {
            let (action_sample, policy_log_prob) = match actor.distribution(&obs)? {
                ActorOutput::Stochastic(head) => head.sample(&mut rngs.policy),
                ActorOutput::Deterministic(a) => (a, 0.0),
            };
            let action = envs::clip_action(&spec, &action_sample);
            let (params, param_sample, param_log_prob) = match &self.params {
                ParamSource::Learned { f, stochastic } => {
                    let e = hybrid::param_eval(f, &spec, &state, &action, &mut rngs.param, *stochastic)?;
                    (Some(e.params), e.pre_squash, e.log_prob)
                }
                _ => (fixed_params.clone(), Vec::new(), 0.0),
            };
            let stepped = self.env.step_with_spec(&spec, &state, &action, params.as_ref(), &mut rngs.env);
            let (next_state, noise) = match stepped {
                Ok(v) => v,
                Err(Error::Diverged { .. }) => {
                    traj.terminated = true;
                    traj.diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let (next_obs, next_obs_z) = envs::observe_with_noise(&spec, &next_state, &mut rngs.env, self.obs_noise);
            let r = reward.map_or(0.0, |cfg| envs::task_reward(cfg, &spec, &state, &action, &next_state));
            let unhealthy = envs::is_unhealthy(&spec, &next_state);
            let out_of_time = next_state.t >= spec.max_steps;
            traj.steps.push(Transition {
                state,
                obs,
                action,
                action_sample,
                policy_log_prob,
                params,
                param_sample,
                param_log_prob,
                torque_z: noise.torque_z,
                next_state: next_state.clone(),
                next_obs: next_obs.clone(),
                next_obs_z,
                reward: r,
            });
            if unhealthy {
                traj.terminated = true;
                break;
            }
            if out_of_time {
                traj.truncated = true;
                break;
            }
            state = next_state;
            obs = next_obs;
        }
        Ok(traj)
    }

    /// Run `n` episodes; episode `k` uses the streams of index `first_index + k`.
    pub fn collect(
        &self,
        actor: &dyn Actor,
        n: usize,
        seed: u64,
        first_index: u64,
        reward: Option<&TaskRewardConfig>,
    ) -> Result<Vec<Trajectory>> {
        (0..n)
            .map(|k| {
                let mut rngs = RolloutRngs::for_episode(seed, first_index + k as u64);
                self.run_episode(actor, &mut rngs, reward)
            })
            .collect()
    }

    /// Run episodes until at least `min_steps` transitions were recorded.
    pub fn collect_steps(
        &self,
        actor: &dyn Actor,
        min_steps: usize,
        seed: u64,
        first_index: u64,
        reward: Option<&TaskRewardConfig>,
    ) -> Result<Vec<Trajectory>> {
        let mut out = Vec::new();
        let mut total = 0;
        let mut k = first_index;
        while total < min_steps {
            let mut rngs = RolloutRngs::for_episode(seed, k);
            let t = self.run_episode(actor, &mut rngs, reward)?;
            total += t.len().max(1);
            out.push(t);
            k += 1;
        }
        Ok(out)
    }
}
