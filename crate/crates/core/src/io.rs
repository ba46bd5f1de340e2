//! Persistence: JSON-Lines trajectory files, CSV metrics, JSON checkpoints,
//! run directories and evaluation summaries.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvKind, EnvSpec, EnvState, TaskRewardConfig};
use crate::error::{Error, Result};
use crate::hybrid::SimParamVector;
use crate::identify::{self, IterationMetrics, Provenance, TargetDataset};
use crate::ppo::GaussianPolicy;
use crate::trajectory::{Simulator, Trajectory, Transition};

pub const TRAJECTORY_SCHEMA: &str = "advsim-trajectories";
/// Major.minor; readers accept any minor of the same major.
pub const TRAJECTORY_VERSION: &str = "1.0";

/// First line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub schema: String,
    pub version: String,
    pub env: EnvKind,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub num_q: usize,
    pub episodes: usize,
    pub obs_noise: bool,
    pub torque_noise: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogProbs {
    pub policy: f64,
    pub param: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    Terminated,
    Truncated,
    Diverged,
    /// Stopped for another reason (e.g. a replay ran out of actions).
    Open,
}

/// One transition per line. Optional fields carry the sampled intermediates
/// needed to recompute trajectory log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub episode_id: u64,
    pub t: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub next_obs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<EpisodeEnd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<EnvState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_state: Option<EnvState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_params: Option<SimParamVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_probs: Option<LogProbs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_sample: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_sample: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque_z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_obs_z: Option<Vec<f64>>,
    /// Marks a record standing for an episode without transitions; only
    /// `obs`, `state` and `obs_z` are meaningful then.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub empty_episode: bool,
}

fn end_of(t: &Trajectory) -> EpisodeEnd {
    if t.diverged {
        EpisodeEnd::Diverged
    } else if t.terminated {
        EpisodeEnd::Terminated
    } else if t.truncated {
        EpisodeEnd::Truncated
    } else {
        EpisodeEnd::Open
    }
}

fn records_of(id: u64, traj: &Trajectory) -> Vec<TransitionRecord> {
    if traj.steps.is_empty() {
        return vec![TransitionRecord {
            episode_id: id,
            t: traj.initial_state.t,
            obs: traj.initial_obs.clone(),
            action: Vec::new(),
            next_obs: Vec::new(),
            reward: None,
            done: true,
            end: Some(end_of(traj)),
            state: Some(traj.initial_state.clone()),
            next_state: None,
            sampled_params: None,
            log_probs: None,
            action_sample: None,
            param_sample: None,
            torque_z: None,
            obs_z: Some(traj.initial_obs_z.clone()),
            next_obs_z: None,
            empty_episode: true,
        }];
    }
    let last = traj.steps.len() - 1;
    traj.steps
        .iter()
        .enumerate()
        .map(|(k, s)| TransitionRecord {
            episode_id: id,
            t: s.state.t,
            obs: s.obs.clone(),
            action: s.action.clone(),
            next_obs: s.next_obs.clone(),
            reward: Some(s.reward),
            done: k == last,
            end: (k == last).then(|| end_of(traj)),
            state: Some(s.state.clone()),
            next_state: Some(s.next_state.clone()),
            sampled_params: s.params.clone(),
            log_probs: Some(LogProbs { policy: s.policy_log_prob, param: s.param_log_prob }),
            action_sample: Some(s.action_sample.clone()),
            param_sample: Some(s.param_sample.clone()),
            torque_z: Some(s.torque_z.clone()),
            obs_z: Some(if k == 0 { traj.initial_obs_z.clone() } else { traj.steps[k - 1].next_obs_z.clone() }),
            next_obs_z: Some(s.next_obs_z.clone()),
            empty_episode: false,
        })
        .collect()
}

/// Write `trajs` as a JSON-Lines file: one header line, then one line per
/// transition.
pub fn write_trajectories(path: &Path, spec: &EnvSpec, trajs: &[Trajectory], provenance: Option<&Provenance>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = TrajectoryHeader {
        schema: TRAJECTORY_SCHEMA.into(),
        version: TRAJECTORY_VERSION.into(),
        env: spec.kind,
        obs_dim: spec.obs_dim(),
        action_dim: spec.action_dim(),
        num_q: spec.num_q(),
        episodes: trajs.len(),
        obs_noise: trajs.iter().any(|t| t.obs_noise),
        torque_noise: trajs.iter().any(|t| t.torque_noise),
        provenance: provenance.cloned(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (id, t) in trajs.iter().enumerate() {
        for rec in records_of(id as u64, t) {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn check_version(header: &TrajectoryHeader) -> Result<()> {
    if header.schema != TRAJECTORY_SCHEMA {
        return Err(Error::Schema(format!("not a trajectory file (schema {:?})", header.schema)));
    }
    let major = header.version.split('.').next().unwrap_or("");
    let ours = TRAJECTORY_VERSION.split('.').next().unwrap_or("");
    if major != ours {
        return Err(Error::Schema(format!(
            "trajectory schema version {} is not supported (expected major version {ours})",
            header.version
        )));
    }
    Ok(())
}

fn blank_state() -> EnvState {
    EnvState { q: Vec::new(), qdot: Vec::new(), t: 0 }
}

/// Read a trajectory file written by [`write_trajectories`] (or any file
/// following the same schema; missing optional fields get empty defaults).
pub fn read_trajectories(path: &Path) -> Result<(TrajectoryHeader, Vec<Trajectory>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| Error::Schema("empty trajectory file".into()))??;
    let header: TrajectoryHeader =
        serde_json::from_str(&first).map_err(|e| Error::Schema(format!("bad trajectory header: {e}")))?;
    check_version(&header)?;
    let mut trajs: Vec<Trajectory> = Vec::new();
    let mut current: Option<(u64, Trajectory, bool)> = None;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransitionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("line {}: {e}", lineno + 2)))?;
        let bad = |msg: &str| Error::Schema(format!("line {}: {msg}", lineno + 2));
        if rec.obs.len() != header.obs_dim
            || (!rec.empty_episode && (rec.next_obs.len() != header.obs_dim || rec.action.len() != header.action_dim))
        {
            return Err(bad("dimensions disagree with the header"));
        }
        let same_episode = current.as_ref().is_some_and(|(id, _, closed)| *id == rec.episode_id && !closed);
        if !same_episode {
            if let Some((_, t, closed)) = current.take() {
                if !closed {
                    return Err(bad("previous episode was not closed with done=true"));
                }
                trajs.push(t);
            }
            let state = rec.state.clone().unwrap_or_else(blank_state);
            current = Some((
                rec.episode_id,
                Trajectory {
                    initial_state: state,
                    initial_obs: rec.obs.clone(),
                    initial_obs_z: rec.obs_z.clone().unwrap_or_default(),
                    steps: Vec::new(),
                    terminated: false,
                    truncated: false,
                    diverged: false,
                    obs_noise: header.obs_noise,
                    torque_noise: header.torque_noise,
                },
                false,
            ));
        }
        let (_, traj, closed) = current.as_mut().expect("episode just opened");
        if !rec.empty_episode {
            if let Some(prev) = traj.steps.last() {
                if rec.t <= prev.state.t {
                    return Err(bad("t must increase strictly within an episode"));
                }
            }
            let lp = rec.log_probs.unwrap_or(LogProbs { policy: 0.0, param: 0.0 });
            let state = rec.state.unwrap_or_else(|| EnvState { t: rec.t, ..blank_state() });
            let next_state = rec.next_state.unwrap_or_else(|| EnvState { t: rec.t + 1, ..blank_state() });
            traj.steps.push(Transition {
                state,
                obs: rec.obs,
                action_sample: rec.action_sample.unwrap_or_else(|| rec.action.clone()),
                action: rec.action,
                policy_log_prob: lp.policy,
                params: rec.sampled_params,
                param_sample: rec.param_sample.unwrap_or_default(),
                param_log_prob: lp.param,
                torque_z: rec.torque_z.unwrap_or_default(),
                next_state,
                next_obs: rec.next_obs,
                next_obs_z: rec.next_obs_z.unwrap_or_default(),
                reward: rec.reward.unwrap_or(0.0),
            });
        }
        if rec.done {
            match rec.end.unwrap_or(EpisodeEnd::Terminated) {
                EpisodeEnd::Terminated => traj.terminated = true,
                EpisodeEnd::Truncated => traj.truncated = true,
                EpisodeEnd::Diverged => {
                    traj.terminated = true;
                    traj.diverged = true;
                }
                EpisodeEnd::Open => {}
            }
            *closed = true;
        }
    }
    if let Some((_, t, closed)) = current {
        if !closed {
            return Err(Error::Schema("last episode was not closed with done=true".into()));
        }
        trajs.push(t);
    }
    Ok((header, trajs))
}

/// Persist a target dataset.
pub fn write_dataset(path: &Path, spec: &EnvSpec, dataset: &TargetDataset) -> Result<()> {
    write_trajectories(path, spec, &dataset.trajectories, Some(&dataset.provenance))
}

/// Load a target dataset; its provenance must be present in the header.
pub fn read_dataset(path: &Path) -> Result<(TrajectoryHeader, TargetDataset)> {
    let (header, trajs) = read_trajectories(path)?;
    let provenance = header
        .provenance
        .clone()
        .ok_or_else(|| Error::Schema(format!("{} has no dataset provenance", path.display())))?;
    let ds = TargetDataset::new(trajs, provenance)?;
    Ok((header, ds))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Load JSON, reporting a missing path as [`Error::MissingFile`].
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn save_policy(path: &Path, policy: &GaussianPolicy) -> Result<()> {
    save_json(path, &policy.to_checkpoint())
}

pub fn load_policy(path: &Path) -> Result<GaussianPolicy> {
    GaussianPolicy::from_checkpoint(&load_json(path)?)
}

/// Write identification metrics; parameter columns are named after `labels`.
pub fn write_identify_metrics(path: &Path, labels: &[String], rows: &[IterationMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "iteration",
        "mean_score",
        "mean_target_score",
        "mean_reward",
        "mean_length",
        "alive_bonus",
        "disc_loss",
        "approx_kl",
        "entropy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(labels.iter().map(|l| format!("param_{l}")));
    w.write_record(&header)?;
    for m in rows {
        let mut rec = vec![
            m.iteration.to_string(),
            m.mean_score.to_string(),
            m.mean_target_score.to_string(),
            m.mean_reward.to_string(),
            m.mean_length.to_string(),
            m.alive_bonus.to_string(),
            m.disc_loss.to_string(),
            m.approx_kl.to_string(),
            m.entropy.to_string(),
        ];
        rec.extend(m.mean_params.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write any serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// A run output directory holding the exact config that produced it.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create<C: Serialize>(path: &Path, config: &C) -> Result<Self> {
        std::fs::create_dir_all(path)?;
        save_json(&path.join("config.json"), config)?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }
}

/// Return statistics of one policy in one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: String,
    pub env: String,
    pub gap: String,
    pub episodes_per_seed: usize,
    pub mean: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
    pub seed_means: Vec<f64>,
    /// Standard deviation of the per-seed means.
    pub seed_std: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Evaluate `policy` for `episodes` deterministic episodes per seed.
pub fn evaluate(
    label: &str,
    gap: &str,
    policy: &GaussianPolicy,
    sim: &Simulator,
    reward: &TaskRewardConfig,
    episodes: usize,
    seeds: &[u64],
) -> Result<EvalSummary> {
    let mut all = Vec::new();
    let mut seed_means = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let r = identify::evaluate_policy(policy, sim, reward, episodes, s)?;
        seed_means.push(mean_std(&r).0);
        all.extend(r);
    }
    let (mean, std) = mean_std(&all);
    Ok(EvalSummary {
        policy: label.into(),
        env: sim.spec().kind.name().into(),
        gap: gap.into(),
        episodes_per_seed: episodes,
        mean,
        std,
        seeds: seeds.to_vec(),
        seed_means: seed_means.clone(),
        seed_std: mean_std(&seed_means).1,
    })
}
