use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use advsim::config::RunConfig;
use advsim::discriminator::{Discriminator, DiscriminatorCheckpoint};
use advsim::envs::{self, EnvKind, EnvSpec, GapKind, TargetGap};
use advsim::hybrid::{param_input, ParamFnCheckpoint, ParamFunction};
use advsim::identify::{self, TargetDataset};
use advsim::io::{self, EvalSummary, RunDir};
use advsim::pipeline::{self, Method};
use advsim::{Error, Result};

#[derive(Parser)]
#[command(name = "advsim", version, about = "Adversarial simulator identification and policy adaptation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration (every field optional).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// slider | pendulum | hopper1d
    #[arg(long, global = true)]
    env: Option<String>,
    /// none | deform | power | heavy
    #[arg(long, global = true)]
    gap: Option<String>,
    /// Baseline method for `baseline`: ft | dr | dr-ft | sysid-o | sysid-c.
    #[arg(long, global = true)]
    method: Option<Method>,
}

#[derive(Subcommand)]
enum Command {
    /// Collect target-domain trajectories with the behavior policy.
    Collect {
        /// Behavior policy checkpoint; trained on the source system if absent.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Identify the hybrid simulator from a target dataset.
    Identify {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Override the iteration budget.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Refine a policy inside an identified simulator.
    Refine {
        #[arg(long)]
        param_fn: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Use the parameter function's mean instead of sampling.
        #[arg(long)]
        deterministic: bool,
    },
    /// Run a baseline method (choose with --method).
    Baseline {
        #[arg(long)]
        policy: PathBuf,
        /// Target dataset (SysID methods).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate policies on the target (and source) system.
    Evaluate {
        /// `label=path` pairs, or plain paths.
        #[arg(long = "policy", required = true)]
        policies: Vec<String>,
    },
    /// Emit the parameter function's mean output on a feature grid as CSV.
    DumpParams {
        #[arg(long)]
        param_fn: PathBuf,
        /// Grid points per feature dimension.
        #[arg(long, default_value_t = 5)]
        grid: usize,
    },
    /// Emit per-tuple discriminator scores of a dataset as CSV.
    ScoreDataset {
        #[arg(long)]
        discriminator: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Behavior policy, data collection, identification, refinement and all
    /// baselines for every gap of one system; writes a methods x gaps table.
    Pipeline {
        /// Gaps to run (defaults to deform, power, heavy).
        #[arg(long = "gaps", value_delimiter = ',')]
        gaps: Vec<String>,
    },
}

fn run_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(env) = &g.env {
        let kind: EnvKind = env.parse()?;
        if kind != cfg.env {
            cfg.env = kind;
            cfg.spec = None;
        }
    }
    if let Some(gap) = &g.gap {
        let kind: GapKind = gap.parse()?;
        if kind != cfg.gap {
            cfg.gap = kind;
            cfg.gap_spec = None;
        }
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_param_fn(path: &Path) -> Result<ParamFunction> {
    let ckpt: ParamFnCheckpoint = io::load_json(path)?;
    ParamFunction::from_checkpoint(&ckpt)
}

fn load_dataset(path: &Path, spec: &EnvSpec) -> Result<TargetDataset> {
    let (header, ds) = io::read_dataset(path)?;
    if header.env != spec.kind || header.obs_dim != spec.obs_dim() || header.action_dim != spec.action_dim() {
        return Err(Error::Config(format!("{} was recorded on a different system", path.display())));
    }
    Ok(ds)
}

fn cmd_collect(cfg: &RunConfig, policy: Option<&Path>) -> Result<()> {
    let dir = RunDir::create(&cfg.out, cfg)?;
    let (pi_b, label) = match policy {
        Some(p) => (io::load_policy(p)?, p.display().to_string()),
        None => {
            let (pi, stats) = pipeline::train_behavior(cfg)?;
            io::write_csv(&dir.file("behavior_train.csv"), &stats)?;
            io::save_policy(&dir.file("policy.json"), &pi)?;
            (pi, dir.file("policy.json").display().to_string())
        }
    };
    let target = pipeline::target_env(cfg)?;
    let mut ds = identify::collect_target_data(
        &pi_b,
        &target,
        cfg.n_trajectories,
        cfg.identify.behavior_noise,
        cfg.seed,
        Some(&cfg.task_reward()),
    )?;
    ds.provenance.policy = Some(label);
    io::write_dataset(&dir.file("dataset.jsonl"), &cfg.source_spec(), &ds)?;
    println!(
        "collected {} trajectories, {} steps, mean length {:.2} -> {}",
        ds.len(),
        ds.num_steps(),
        ds.mean_length,
        dir.file("dataset.jsonl").display()
    );
    Ok(())
}

fn cmd_identify(cfg: &RunConfig, dataset: &Path, policy: &Path) -> Result<()> {
    let spec = cfg.source_spec();
    let ds = load_dataset(dataset, &spec)?;
    let pi_b = io::load_policy(policy)?;
    let dir = RunDir::create(&cfg.out, cfg)?;
    let run = identify::identify(&ds, &pi_b, &spec, &cfg.identify, cfg.seed)?;
    let labels: Vec<String> = run.param_fn.layout.ranges.iter().map(|r| r.kind.label()).collect();
    io::write_identify_metrics(&dir.file("metrics.csv"), &labels, &run.metrics)?;
    io::save_json(&dir.file("param_fn.json"), &run.param_fn.to_checkpoint())?;
    io::save_json(&dir.file("discriminator.json"), &run.discriminator.to_checkpoint())?;
    if let Some(reason) = &run.aborted {
        eprintln!("warning: {reason}; saved the last valid parameter function");
    }
    if let Some(m) = run.metrics.last() {
        println!(
            "{} iterations (early stop: {}), final simulated score {:.3}, mean params {:?}",
            run.metrics.len(),
            run.stopped_early,
            m.mean_score,
            labels.iter().zip(&m.mean_params).collect::<Vec<_>>()
        );
    }
    Ok(())
}

fn cmd_refine(cfg: &RunConfig, param_fn: &Path, policy: &Path, deterministic: bool) -> Result<()> {
    let f = load_param_fn(param_fn)?;
    let pi_b = io::load_policy(policy)?;
    let dir = RunDir::create(&cfg.out, cfg)?;
    let mut rc = cfg.refine.clone();
    rc.train.ppo.lr = cfg.behavior.ppo.lr;
    if deterministic {
        rc.stochastic = false;
    }
    let (pi, stats) = identify::refine_policy(&f, &pi_b, &cfg.source_spec(), &cfg.task_reward(), &rc, cfg.seed)?;
    io::write_csv(&dir.file("refine_train.csv"), &stats)?;
    io::save_policy(&dir.file("policy.json"), &pi)?;
    println!("refined policy -> {}", dir.file("policy.json").display());
    Ok(())
}

fn cmd_baseline(cfg: &RunConfig, method: Option<Method>, policy: &Path, dataset: Option<&Path>) -> Result<()> {
    let method = method.ok_or_else(|| Error::Config("baseline needs --method".into()))?;
    let pi_b = io::load_policy(policy)?;
    let ds = dataset.map(|p| load_dataset(p, &cfg.source_spec())).transpose()?;
    let dir = RunDir::create(&cfg.out, cfg)?;
    let (pi, sysid) = pipeline::baseline(cfg, method, &pi_b, ds.as_ref(), None)?;
    if let Some(res) = sysid {
        io::save_json(&dir.file("sysid.json"), &res)?;
        io::write_csv(&dir.file("metrics.csv"), &res.log)?;
    }
    io::save_policy(&dir.file("policy.json"), &pi)?;
    println!("{} policy -> {}", method.label(), dir.file("policy.json").display());
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, policies: &[String]) -> Result<()> {
    let dir = RunDir::create(&cfg.out, cfg)?;
    let mut rows = Vec::new();
    for entry in policies {
        let (label, path) = match entry.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => (entry.clone(), PathBuf::from(entry)),
        };
        let pi = io::load_policy(&path)?;
        for gap in [TargetGap::none(), cfg.target_gap()] {
            let s = pipeline::evaluate_on(cfg, &label, &pi, &gap)?;
            println!("{:<12} {:<7} {:>9.2} ± {:<7.2} (seed std {:.2})", s.policy, s.gap, s.mean, s.std, s.seed_std);
            rows.push(s);
            if cfg.gap == GapKind::None {
                break;
            }
        }
    }
    write_eval(&dir, &rows)
}

fn write_eval(dir: &RunDir, rows: &[EvalSummary]) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Row<'a> {
        policy: &'a str,
        env: &'a str,
        gap: &'a str,
        mean: f64,
        std: f64,
        seed_std: f64,
    }
    let flat: Vec<Row> = rows
        .iter()
        .map(|s| Row { policy: &s.policy, env: &s.env, gap: &s.gap, mean: s.mean, std: s.std, seed_std: s.seed_std })
        .collect();
    io::write_csv(&dir.file("eval.csv"), &flat)?;
    io::save_json(&dir.file("eval.json"), &rows)?;
    Ok(())
}

fn cmd_dump_params(cfg: &RunConfig, param_fn: &Path, grid: usize) -> Result<()> {
    let f = load_param_fn(param_fn)?;
    let spec = cfg.source_spec();
    if f.input_dim() != spec.obs_dim() + spec.action_dim() {
        return Err(Error::Config(format!("{} does not match the {} system", param_fn.display(), spec.kind.name())));
    }
    let dir = RunDir::create(&cfg.out, cfg)?;
    let grid = grid.max(2);
    let mid = envs::observe_exact(
        &spec,
        &envs::EnvState {
            q: spec.init_low[..spec.num_q()].iter().zip(&spec.init_high).map(|(l, h)| 0.5 * (l + h)).collect(),
            qdot: spec.init_low[spec.num_q()..].iter().zip(&spec.init_high[spec.num_q()..]).map(|(l, h)| 0.5 * (l + h)).collect(),
            t: 0,
        },
    );
    let axes: Vec<Vec<f64>> = mid
        .iter()
        .zip(&spec.obs_scale)
        .map(|(c, s)| (0..grid).map(|k| c - s + 2.0 * s * k as f64 / (grid - 1) as f64).collect())
        .chain((0..spec.action_dim()).map(|_| {
            (0..grid).map(|k| -spec.action_limit + 2.0 * spec.action_limit * k as f64 / (grid - 1) as f64).collect()
        }))
        .collect();
    let mut w = csv::Writer::from_path(dir.file("params.csv"))?;
    let mut header: Vec<String> = (0..spec.obs_dim()).map(|i| format!("feature_{i}")).collect();
    header.extend((0..spec.action_dim()).map(|i| format!("action_{i}")));
    header.extend(f.layout.ranges.iter().map(|r| r.kind.label()));
    header.extend(f.layout.ranges.iter().map(|r| format!("{}_log_sigma", r.kind.label())));
    w.write_record(&header)?;
    let dims = axes.len();
    let total = grid.pow(dims as u32);
    for idx in 0..total {
        let mut k = idx;
        let point: Vec<f64> = axes
            .iter()
            .map(|a| {
                let v = a[k % grid];
                k /= grid;
                v
            })
            .collect();
        let (features, action) = point.split_at(spec.obs_dim());
        let head = f.head(&param_input(features, action))?;
        let c = f.layout.squash_into(&head.mu, &f.base);
        let mut rec: Vec<String> = point.iter().map(f64::to_string).collect();
        rec.extend(f.layout.ranges.iter().map(|r| c.get(r.kind).to_string()));
        rec.extend(head.log_sigma.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("{total} grid points -> {}", dir.file("params.csv").display());
    Ok(())
}

fn cmd_score_dataset(cfg: &RunConfig, disc: &Path, dataset: &Path) -> Result<()> {
    let ckpt: DiscriminatorCheckpoint = io::load_json(disc)?;
    let d = Discriminator::from_checkpoint(&ckpt, 0.0)?;
    let (_, trajs) = io::read_trajectories(dataset)?;
    let dir = RunDir::create(&cfg.out, cfg)?;
    let mut w = csv::Writer::from_path(dir.file("scores.csv"))?;
    w.write_record(["episode_id", "t", "score", "reward"])?;
    let mut n = 0usize;
    let mut sum = 0.0;
    for (id, t) in trajs.iter().enumerate() {
        for step in &t.steps {
            let s = d.score(&step.tuple())?;
            sum += s;
            n += 1;
            w.write_record([
                id.to_string(),
                step.state.t.to_string(),
                s.to_string(),
                identify::gan_reward(s).to_string(),
            ])?;
        }
    }
    w.flush()?;
    println!("{n} tuples, mean score {:.4} -> {}", sum / n.max(1) as f64, dir.file("scores.csv").display());
    Ok(())
}

fn cmd_pipeline(base: &RunConfig, gaps: &[String]) -> Result<()> {
    let gaps: Vec<GapKind> = if gaps.is_empty() {
        vec![GapKind::Deform, GapKind::Power, GapKind::Heavy]
    } else {
        gaps.iter().map(|g| g.parse()).collect::<Result<_>>()?
    };
    let root = RunDir::create(&base.out, base)?;
    let (pi_b, _) = pipeline::train_behavior(base)?;
    io::save_policy(&root.file("behavior_policy.json"), &pi_b)?;
    let dr = pipeline::dr_policy(base)?;
    let mut rows = Vec::new();
    for gap in gaps {
        let cfg = RunConfig { gap, gap_spec: None, out: base.out.join(gap.name()), ..base.clone() };
        let dir = RunDir::create(&cfg.out, &cfg)?;
        let mut methods = vec![Method::Ours];
        methods.extend(Method::BASELINES);
        let outcome = pipeline::run_gap(&cfg, &pi_b, &methods, Some(&dr))?;
        io::write_dataset(&dir.file("dataset.jsonl"), &cfg.source_spec(), &outcome.dataset)?;
        let run = &outcome.identification;
        let labels: Vec<String> = run.param_fn.layout.ranges.iter().map(|r| r.kind.label()).collect();
        io::write_identify_metrics(&dir.file("metrics.csv"), &labels, &run.metrics)?;
        io::save_json(&dir.file("param_fn.json"), &run.param_fn.to_checkpoint())?;
        for (label, pi) in &outcome.policies {
            io::save_policy(&dir.file(&format!("policy_{label}.json")), pi)?;
        }
        rows.extend(outcome.evals);
        println!("{} done", gap.name());
    }
    write_eval(&root, &rows)?;
    // Methods x gaps table.
    let gap_names: Vec<String> = {
        let mut g: Vec<String> = rows.iter().map(|r| r.gap.clone()).collect();
        g.dedup();
        g
    };
    let mut w = csv::Writer::from_path(root.file("table.csv"))?;
    let mut header = vec!["method".to_string()];
    header.extend(gap_names.iter().map(|g| format!("{}_{g}", base.env.name())));
    w.write_record(&header)?;
    let mut methods: Vec<String> = Vec::new();
    for r in &rows {
        if !methods.contains(&r.policy) {
            methods.push(r.policy.clone());
        }
    }
    for m in methods {
        let mut rec = vec![m.clone()];
        for g in &gap_names {
            let cell = rows
                .iter()
                .find(|r| r.policy == m && &r.gap == g)
                .map_or(String::new(), |r| format!("{:.2} ± {:.2}", r.mean, r.seed_std));
            rec.push(cell);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("table -> {}", root.file("table.csv").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = run_config(&cli.global)?;
    match cli.cmd {
        Command::Collect { policy } => cmd_collect(&cfg, policy.as_deref()),
        Command::Identify { dataset, policy, iterations } => {
            let mut cfg = cfg;
            if let Some(n) = iterations {
                cfg.identify.iterations = n;
            }
            cmd_identify(&cfg, &dataset, &policy)
        }
        Command::Refine { param_fn, policy, deterministic } => cmd_refine(&cfg, &param_fn, &policy, deterministic),
        Command::Baseline { policy, dataset } => cmd_baseline(&cfg, cli.global.method, &policy, dataset.as_deref()),
        Command::Evaluate { policies } => cmd_evaluate(&cfg, &policies),
        Command::DumpParams { param_fn, grid } => cmd_dump_params(&cfg, &param_fn, grid),
        Command::ScoreDataset { discriminator, dataset } => cmd_score_dataset(&cfg, &discriminator, &dataset),
        Command::Pipeline { gaps } => cmd_pipeline(&cfg, &gaps),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
