//! End-to-end experiment drivers shared by the CLI and the experiment
//! tests: behavior-policy training, per-gap identification + refinement and
//! the baseline methods, all configured by one [`RunConfig`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, SysIdMode, SysIdResult};
use crate::config::RunConfig;
use crate::envs::{self, Env, GapKind, TargetGap};
use crate::error::{Error, Result};
use crate::hybrid::ParamSource;
use crate::identify::{self, IdentificationRun, TargetDataset};
use crate::io::{self, EvalSummary};
use crate::ppo::{self, GaussianPolicy, TrainStats};
use crate::trajectory::Simulator;

/// Policy-adaptation methods compared against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Identified hybrid simulator + refinement.
    Ours,
    /// Fine-tune the behavior policy on the target.
    Ft,
    /// Domain randomization over the source simulator.
    Dr,
    /// Domain randomization, then fine-tuning on the target.
    DrFt,
    /// CMA-ES system identification, open loop.
    SysidO,
    /// CMA-ES system identification, closed loop.
    SysidC,
}

impl Method {
    pub const BASELINES: [Method; 5] = [Method::Ft, Method::Dr, Method::DrFt, Method::SysidO, Method::SysidC];

    pub fn label(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Ft => "ft",
            Method::Dr => "dr",
            Method::DrFt => "dr-ft",
            Method::SysidO => "sysid-o",
            Method::SysidC => "sysid-c",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::Ours, Method::Ft, Method::Dr, Method::DrFt, Method::SysidO, Method::SysidC]
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (ours, ft, dr, dr-ft, sysid-o, sysid-c)")))
    }
}

/// Train the behavior policy on the (noisy) source system.
pub fn train_behavior(cfg: &RunConfig) -> Result<(GaussianPolicy, Vec<TrainStats>)> {
    let sim = Simulator::new(Env::source(cfg.source_spec())?, ParamSource::Nominal);
    ppo::train_policy(&sim, &cfg.task_reward(), &cfg.behavior, cfg.seed, None)
}

pub fn target_env(cfg: &RunConfig) -> Result<Env> {
    envs::make_target(&cfg.source_spec(), &cfg.target_gap())
}

/// Collect `cfg.n_trajectories` target trajectories with the behavior policy.
pub fn collect(cfg: &RunConfig, behavior: &GaussianPolicy, target: &Env) -> Result<TargetDataset> {
    identify::collect_target_data(
        behavior,
        target,
        cfg.n_trajectories,
        cfg.identify.behavior_noise,
        cfg.seed,
        Some(&cfg.task_reward()),
    )
}

/// Identification followed by refinement of the behavior policy.
pub fn ours(
    cfg: &RunConfig,
    behavior: &GaussianPolicy,
    dataset: &TargetDataset,
) -> Result<(GaussianPolicy, IdentificationRun)> {
    let run = identify::identify(dataset, behavior, &cfg.source_spec(), &cfg.identify, cfg.seed)?;
    let policy = refine(cfg, &run.param_fn, behavior)?;
    Ok((policy, run))
}

/// Refine `behavior` in the hybrid simulator of `f` with the task reward.
pub fn refine(cfg: &RunConfig, f: &crate::hybrid::ParamFunction, behavior: &GaussianPolicy) -> Result<GaussianPolicy> {
    let mut rc = cfg.refine.clone();
    rc.train.ppo.lr = cfg.behavior.ppo.lr;
    Ok(identify::refine_policy(f, behavior, &cfg.source_spec(), &cfg.task_reward(), &rc, cfg.seed)?.0)
}

/// Domain-randomized policy trained from scratch on the source system. It
/// does not depend on the gap, so callers may train it once per seed.
pub fn dr_policy(cfg: &RunConfig) -> Result<GaussianPolicy> {
    let spec = cfg.source_spec();
    Ok(baselines::train_dr_policy(&spec, &cfg.dr(), &cfg.task_reward(), &cfg.dr_train, cfg.seed, None)?.0)
}

/// Run one baseline. SysID methods need the target dataset; `dr` is a
/// pre-trained [`dr_policy`] for `cfg` (trained here when `None`).
pub fn baseline(
    cfg: &RunConfig,
    method: Method,
    behavior: &GaussianPolicy,
    dataset: Option<&TargetDataset>,
    dr: Option<&GaussianPolicy>,
) -> Result<(GaussianPolicy, Option<SysIdResult>)> {
    let spec = cfg.source_spec();
    let reward = cfg.task_reward();
    let seed = cfg.seed;
    let finetune = |start: &GaussianPolicy, base_lr: f64| -> Result<GaussianPolicy> {
        let mut ft = cfg.finetune.clone();
        ft.train.ppo.lr = base_lr * cfg.refine.lr_factor;
        Ok(baselines::finetune(start, &target_env(cfg)?, &reward, &ft, seed)?.0)
    };
    match method {
        Method::Ours => Err(Error::Config("'ours' is not a baseline".into())),
        Method::Ft => Ok((finetune(behavior, cfg.behavior.ppo.lr)?, None)),
        Method::Dr | Method::DrFt => {
            let pi = match dr {
                Some(p) => p.clone(),
                None => dr_policy(cfg)?,
            };
            if method == Method::Dr {
                Ok((pi, None))
            } else {
                Ok((finetune(&pi, cfg.dr_train.ppo.lr)?, None))
            }
        }
        Method::SysidO | Method::SysidC => {
            let ds = dataset.ok_or_else(|| Error::Config("SysID baselines need a target dataset".into()))?;
            let mode = if method == Method::SysidO { SysIdMode::OpenLoop } else { SysIdMode::ClosedLoop };
            let res = baselines::cmaes_sysid(ds, behavior, &spec, mode, &cfg.sysid, seed)?;
            let sim = Simulator::new(Env::source(spec.clone())?, res.param_source());
            let mut rc = cfg.refine.clone();
            rc.train.ppo.lr = cfg.behavior.ppo.lr;
            let (pi, _) = identify::refine_in(&sim, behavior, &reward, &rc, seed)?;
            Ok((pi, Some(res)))
        }
    }
}

/// Evaluate `policy` on `spec` + `gap` over `cfg.seeds`.
pub fn evaluate_on(cfg: &RunConfig, label: &str, policy: &GaussianPolicy, gap: &TargetGap) -> Result<EvalSummary> {
    let env = envs::make_target(&cfg.source_spec(), gap)?;
    let sim = Simulator::new(env, ParamSource::Nominal);
    io::evaluate(label, gap.kind.name(), policy, &sim, &cfg.task_reward(), cfg.eval_episodes, &cfg.seeds)
}

/// Everything produced for one gap by [`run_gap`].
pub struct GapOutcome {
    pub gap: GapKind,
    pub dataset: TargetDataset,
    pub identification: IdentificationRun,
    /// Target-domain evaluation per method, behavior policy first.
    pub evals: Vec<EvalSummary>,
    pub policies: Vec<(String, GaussianPolicy)>,
}

impl GapOutcome {
    pub fn mean_of(&self, label: &str) -> Option<f64> {
        self.evals.iter().find(|e| e.policy == label).map(|e| e.mean)
    }
}

/// Collect target data for `cfg.gap`, run ours and `baselines`, and evaluate
/// every policy (plus the behavior policy) on the target. `dr` as in
/// [`baseline`].
pub fn run_gap(
    cfg: &RunConfig,
    behavior: &GaussianPolicy,
    methods: &[Method],
    dr: Option<&GaussianPolicy>,
) -> Result<GapOutcome> {
    let target = target_env(cfg)?;
    let dataset = collect(cfg, behavior, &target)?;
    let (pi_ours, identification) = ours(cfg, behavior, &dataset)?;
    let gap = cfg.target_gap();
    let mut evals = vec![evaluate_on(cfg, "behavior", behavior, &gap)?];
    let mut policies = vec![("behavior".to_string(), behavior.clone())];
    for &m in methods {
        let pi = if m == Method::Ours { pi_ours.clone() } else { baseline(cfg, m, behavior, Some(&dataset), dr)?.0 };
        evals.push(evaluate_on(cfg, m.label(), &pi, &gap)?);
        policies.push((m.label().to_string(), pi));
    }
    Ok(GapOutcome { gap: cfg.gap, dataset, identification, evals, policies })
}
