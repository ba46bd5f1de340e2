//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Run all: `cargo test -p advsim --test acceptance`.
//! Run a subset: `ACCEPTANCE_ONLY=A4,A5 cargo test -p advsim --test acceptance`.
//! Set `ACCEPTANCE_STRICT=1` to exit non-zero when a criterion fails.
//! Each criterion must meet its numeric tolerance and its wall-clock budget.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use advsim::baselines::{self, SysIdMode};
use advsim::config::RunConfig;
use advsim::discriminator::{Discriminator, DiscriminatorConfig};
use advsim::envs::{self, Env, EnvSpec, GapKind, TargetGap};
use advsim::hybrid::{
    trajectory_log_prob, ParamFnInit, ParamFunction, ParamKind, ParamLayout, ParamRange, ParamSource, SimParamVector,
};
use advsim::identify::{self, IdentificationRun, IdentifyConfig, TargetDataset};
use advsim::nn::MlpNet;
use advsim::pipeline::{self, Method};
use advsim::ppo::{GaussianPolicy, PpoModel};
use advsim::rng::{self, Stream};
use advsim::trajectory::{Simulator, Trajectory};

type Outcome = Result<String, String>;

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|x| x.trim().to_uppercase()).filter(|x| !x.is_empty()).collect());
    let criteria = [
        Criterion { id: "A1", name: "gradient correctness", budget: secs(10), run: a1_gradients },
        Criterion { id: "A2", name: "formula exactness", budget: secs(5), run: a2_formulas },
        Criterion { id: "A3", name: "identity-parameter equivalence", budget: secs(5), run: a3_identity },
        Criterion { id: "A4", name: "zero-gap self-identification", budget: secs(600), run: a4_zero_gap },
        Criterion { id: "A5", name: "constant-gap recovery", budget: secs(900), run: a5_constant_gap },
        Criterion { id: "A6", name: "end-to-end adaptation ordering", budget: secs(7200), run: a6_ordering },
        Criterion { id: "A7", name: "alive-bonus ablation", budget: secs(3600), run: a7_alive_bonus },
        Criterion { id: "A8", name: "data-budget ablation", budget: secs(3600), run: a8_data_budget },
        Criterion { id: "A9", name: "cross-task generalization", budget: secs(1800), run: a9_cross_task },
        Criterion { id: "A10", name: "target-data isolation", budget: secs(1), run: a10_isolation },
    ];
    let mut failed = 0;
    for c in &criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == c.id)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let over = elapsed > c.budget;
        let (ok, detail) = match result {
            Ok(d) if !over => (true, d),
            Ok(d) => (false, format!("{d}; over the {:.0} s budget", c.budget.as_secs_f64())),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:<4} {:<32} {:>8.1}s  {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            detail
        );
    }
    println!("{failed} acceptance criteria failed");
    // Failures are reported above; the exit status only reflects them on
    // request so that `cargo test --workspace` still runs the remaining suites.
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- fixtures

fn fixture(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn hopper(seed: u64, gap: GapKind) -> RunConfig {
    RunConfig { seed, gap, ..fixture("hopper1d.json") }
}

fn slider(seed: u64, gap: GapKind) -> RunConfig {
    RunConfig { seed, gap, ..fixture("slider.json") }
}

/// Frictionless slider with a constant motor-scale gap of 0.5.
fn frictionless(seed: u64) -> RunConfig {
    RunConfig {
        spec: Some(EnvSpec::frictionless_slider()),
        gap_spec: Some(TargetGap::power(0.0, vec![0.5])),
        ..slider(seed, GapKind::Power)
    }
}

/// Behavior policies are shared between criteria that use the same system
/// and seed.
fn behavior(cfg: &RunConfig) -> GaussianPolicy {
    static CACHE: Mutex<Option<HashMap<String, GaussianPolicy>>> = Mutex::new(None);
    let key = format!(
        "{}|{}|{}|{}",
        serde_json::to_string(&cfg.source_spec()).unwrap(),
        serde_json::to_string(&cfg.behavior).unwrap(),
        serde_json::to_string(&cfg.reward).unwrap(),
        cfg.seed
    );
    if let Some(p) = CACHE.lock().unwrap().get_or_insert_with(HashMap::new).get(&key) {
        return p.clone();
    }
    let (p, _) = pipeline::train_behavior(cfg).expect("behavior training");
    CACHE.lock().unwrap().get_or_insert_with(HashMap::new).insert(key, p.clone());
    p
}

fn collect(cfg: &RunConfig, pi_b: &GaussianPolicy) -> TargetDataset {
    pipeline::collect(cfg, pi_b, &pipeline::target_env(cfg).unwrap()).unwrap()
}

/// Moving average of the simulated-tuple score over the early-stop window.
fn final_window_score(run: &IdentificationRun) -> f64 {
    let w = run.config.early_stop_window.max(1).min(run.metrics.len());
    run.metrics[run.metrics.len() - w..].iter().map(|m| m.mean_score).sum::<f64>() / w as f64
}

fn param_index(f: &ParamFunction, kind: ParamKind) -> usize {
    f.layout.ranges.iter().position(|r| r.kind == kind).expect("parameter in layout")
}

// ---------------------------------------------------------------- A1

/// Relative error with a small floor so exact zeros compare sensibly.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central differences of `loss` at `theta` against `analytic`.
fn fd_max_rel(theta: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut p = theta.to_vec();
    for i in 0..theta.len() {
        p[i] = theta[i] + h;
        let up = loss(&p);
        p[i] = theta[i] - h;
        let down = loss(&p);
        p[i] = theta[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * h)));
    }
    worst
}

/// d/dθ [log π(x) + 0.1 H(π)] for a Gaussian-headed model.
fn head_objective_check<M: PpoModel + Clone>(model: &M, input: &[f64], x: &[f64]) -> f64 {
    let (head, cache) = model.head_cached(input).unwrap();
    let (d_mu, mut d_ls) = head.grad_log_prob(x);
    for (d, e) in d_ls.iter_mut().zip(head.grad_entropy()) {
        *d += 0.1 * e;
    }
    // The objective is maximized; accumulate its positive gradient.
    let mut grad = vec![0.0; model.num_params()];
    model.accumulate_grad(&cache, &d_mu, &d_ls, &mut grad).unwrap();
    let theta = model.flat_params();
    let mut probe = model.clone();
    fd_max_rel(&theta, &grad, |p| {
        probe.set_flat_params(p);
        let h = probe.head_cached(input).unwrap().0;
        h.log_prob(x) + 0.1 * h.entropy()
    })
}

fn a1_gradients() -> Outcome {
    let tol = 1e-4;
    let mut worst = Vec::new();
    for seed in 0..3u64 {
        let mut r = rng::stream(seed, Stream::Init, 0);
        // MlpNet: parameter and input gradients of a nonlinear readout.
        let net = MlpNet::new(&[4, 7, 5, 3], 1.0, &mut r).unwrap();
        let x = [0.3, -0.7, 1.1, 0.05 * seed as f64];
        let w = [0.5, -1.2, 0.8];
        let loss = |n: &MlpNet, x: &[f64]| {
            let y = n.forward(x).unwrap();
            y.iter().zip(&w).map(|(y, w)| w * y + 0.5 * y * y).sum::<f64>()
        };
        let cache = net.forward_cached(&x).unwrap();
        let dy: Vec<f64> = cache.output().iter().zip(&w).map(|(y, w)| w + y).collect();
        let mut g = vec![0.0; net.num_params()];
        let dx = net.backward(&cache, &dy, &mut g).unwrap();
        let mut probe = net.clone();
        worst.push((
            "mlp params",
            fd_max_rel(net.params(), &g, |p| {
                probe.params_mut().copy_from_slice(p);
                loss(&probe, &x)
            }),
        ));
        worst.push(("mlp input", fd_max_rel(&x, &dx, |xp| loss(&net, xp))));

        // Policy: log-density of a fixed action plus entropy bonus.
        let spec = EnvSpec::hopper1d();
        let pi = GaussianPolicy::new(&spec, &[8, 8], -0.4, &mut r).unwrap();
        let mut pi = pi;
        for (i, v) in pi.net.output_bias_mut().iter_mut().enumerate() {
            *v = 0.2 * i as f64 - 0.1;
        }
        worst.push(("policy", head_objective_check(&pi, &[1.02, 0.3, -0.4], &[0.4, -0.2])));

        // Parameter function: both branches, non-trivial outputs.
        let init = ParamFnInit { hidden: vec![6], output_scale: 0.5, init_log_sigma: -1.0, nominal_start: true };
        let f = ParamFunction::new(&spec, ParamLayout::default_for(&spec), &init, &mut r).unwrap();
        let input = [0.9, 0.2, -0.5, 0.3, -0.6];
        let x: Vec<f64> = f.head(&input).unwrap().mu.iter().map(|m| m + 0.3).collect();
        worst.push(("param function", head_objective_check(&f, &input, &x)));

        // Discriminator: BCE loss over a small real/sim batch.
        let real: Vec<Vec<f64>> = (0..6).map(|k| (0..5).map(|j| ((k * 5 + j) as f64 * 0.37).sin()).collect()).collect();
        let sim: Vec<Vec<f64>> = (0..4).map(|k| (0..5).map(|j| ((k * 7 + j) as f64 * 0.23).cos()).collect()).collect();
        let tuples: Vec<_> = real
            .iter()
            .map(|v| advsim::trajectory::TransitionTuple {
                obs: v[..2].to_vec(),
                action: v[2..3].to_vec(),
                next_obs: v[3..].to_vec(),
            })
            .collect();
        let cfg = DiscriminatorConfig { hidden: vec![8, 8], ..Default::default() };
        let mut d = Discriminator::new(&tuples, &cfg, &mut r).unwrap();
        for p in d.net.params_mut() {
            *p *= 3.0;
        }
        let (_, g) = d.loss_gradient(&real, &sim).unwrap();
        let theta = d.net.params().to_vec();
        let mut probe = d.clone();
        worst.push((
            "discriminator",
            fd_max_rel(&theta, &g, |p| {
                probe.net.params_mut().copy_from_slice(p);
                probe.loss(&real, &sim).unwrap()
            }),
        ));
    }
    let (name, max) = worst.iter().fold(("", 0.0f64), |acc, (n, e)| if *e > acc.1 { (n, *e) } else { acc });
    check(max < tol, format!("max relative error {max:.2e} ({name}) over 3 fixtures x 5 gradients; tol {tol:.0e}"))
}

// ---------------------------------------------------------------- A2

fn a2_formulas() -> Outcome {
    let mut errs = Vec::new();
    if identify::gan_reward(0.5) != 0.0 {
        errs.push("gan_reward(0.5) != 0".to_string());
    }
    for l in [1.0, 7.0, 123.5] {
        if identify::alive_bonus(l, l).unwrap() != 0.0 {
            errs.push(format!("alive_bonus({l},{l}) != 0"));
        }
        if (identify::alive_bonus(2.0 * l, l).unwrap() - LN_2).abs() > 1e-12 {
            errs.push(format!("alive_bonus({},{l}) != ln 2", 2.0 * l));
        }
    }
    let d = Discriminator::zeros(5, &[8, 8], 1e-3).unwrap();
    let real = vec![vec![0.1, 0.2, 0.3, 0.4, 0.5]; 3];
    let sim = vec![vec![-1.0, 2.0, 0.0, 1.0, 3.0]; 2];
    let l0 = d.loss(&real, &sim).unwrap();
    if (l0 - LN_2).abs() > 1e-12 {
        errs.push(format!("zero-logit loss {l0} != ln 2"));
    }

    // Trajectory log-probability against an independent factor-sum oracle.
    let spec = EnvSpec::slider();
    let mut r = rng::stream(11, Stream::Init, 0);
    let pi = GaussianPolicy::new(&spec, &[8], -0.5, &mut r).unwrap();
    let init = ParamFnInit { hidden: vec![6], output_scale: 0.3, init_log_sigma: -1.5, nominal_start: true };
    let f = ParamFunction::new(&spec, ParamLayout::default_for(&spec), &init, &mut r).unwrap();
    let sim = Simulator::new(Env::source(spec.clone()).unwrap(), ParamSource::Learned { f: f.clone(), stochastic: true });
    let trajs = sim.collect(&pi, 3, 5, 0, None).unwrap();
    let normal = |x: f64, mu: f64, log_sigma: f64| {
        let s = log_sigma.exp();
        -0.5 * (2.0 * PI).ln() - log_sigma - 0.5 * ((x - mu) / s).powi(2)
    };
    let obs_std: Vec<f64> = spec.obs_scale.iter().map(|s| 0.10 * s).collect();
    let mut worst: f64 = 0.0;
    for t in &trajs {
        let mut oracle = 0.0;
        // Uniform initial box.
        for (lo, hi) in spec.init_low.iter().zip(&spec.init_high) {
            if hi > lo {
                oracle -= (hi - lo).ln();
            }
        }
        let obs_term = |obs: &[f64], state: &advsim::envs::EnvState| {
            let exact = [state.q[0], state.qdot[0]];
            (0..2).map(|i| normal(obs[i], exact[i], obs_std[i].ln())).sum::<f64>()
        };
        oracle += obs_term(&t.initial_obs, &t.initial_state);
        for s in &t.steps {
            oracle += obs_term(&s.next_obs, &s.next_state);
            let mu = pi.mean(&s.obs).unwrap();
            oracle += (0..mu.len()).map(|i| normal(s.action_sample[i], mu[i], pi.log_std[i])).sum::<f64>();
            let head = f.head(&[s.state.q[0], s.state.qdot[0], s.action[0]]).unwrap();
            oracle += (0..head.mu.len()).map(|i| normal(s.param_sample[i], head.mu[i], head.log_sigma[i])).sum::<f64>();
            oracle += s.torque_z.iter().map(|z| normal(*z, 0.0, 0.0)).sum::<f64>();
        }
        let lp = trajectory_log_prob(t, &pi, Some(&f), &spec).unwrap();
        let factor_sum = lp.initial + lp.policy + lp.param_fn + lp.dynamics + lp.observation;
        worst = worst.max((lp.total - oracle).abs()).max((lp.total - factor_sum).abs());
    }
    if worst > 1e-9 {
        errs.push(format!("trajectory_log_prob off by {worst:.2e}"));
    }
    check(
        errs.is_empty(),
        if errs.is_empty() {
            format!("all identities exact; log-prob oracle error {worst:.1e} (tol 1e-9)")
        } else {
            errs.join("; ")
        },
    )
}

// ---------------------------------------------------------------- A3

/// Compare every recorded quantity except the parameter annotations.
fn same_rollouts(a: &[Trajectory], b: &[Trajectory]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.initial_state == y.initial_state
                && x.initial_obs == y.initial_obs
                && x.terminated == y.terminated
                && x.truncated == y.truncated
                && x.steps.len() == y.steps.len()
                && x.steps.iter().zip(&y.steps).all(|(s, t)| {
                    s.state == t.state
                        && s.obs == t.obs
                        && s.action == t.action
                        && s.torque_z == t.torque_z
                        && s.next_state == t.next_state
                        && s.next_obs == t.next_obs
                        && s.reward.to_bits() == t.reward.to_bits()
                })
        })
}

fn a3_identity() -> Outcome {
    let mut lines = Vec::new();
    for spec in [EnvSpec::slider(), EnvSpec::pendulum(), EnvSpec::hopper1d()] {
        let reward = envs::TaskRewardConfig::default_for(spec.kind);
        let pi = GaussianPolicy::new(&spec, &[8], 0.0, &mut rng::stream(3, Stream::Init, 0)).unwrap();
        let env = Env::source(spec.clone()).unwrap();
        let source = Simulator::new(env.clone(), ParamSource::Nominal);
        let reference = source.collect_steps(&pi, 1000, 21, 0, Some(&reward)).unwrap();
        let steps: usize = reference.iter().map(Trajectory::len).sum();

        let pinned = Simulator::new(env.clone(), ParamSource::Fixed(SimParamVector::nominal(&spec)));
        let fixed = pinned.collect_steps(&pi, 1000, 21, 0, Some(&reward)).unwrap();

        // A zero network whose ranges are centred on the nominal constants
        // yields exactly nominal parameters in deterministic mode.
        let nominal = SimParamVector::nominal(&spec);
        let layout = ParamLayout {
            ranges: ParamLayout::default_for(&spec)
                .ranges
                .iter()
                .map(|r| {
                    let c = nominal.get(r.kind);
                    let (lo, hi) = if c > 0.0 { (0.0, 2.0 * c) } else { (0.0, 2.0) };
                    let (lo, hi) = if r.kind == ParamKind::ContactStiffnessScale { (0.5, 1.5) } else { (lo, hi) };
                    ParamRange { kind: r.kind, lo, hi }
                })
                .collect(),
        };
        let f = ParamFunction::zeros(&spec, layout, &[4]).unwrap();
        let exact = f.layout.squash_into(&vec![0.0; f.layout.len()], &f.base) == nominal;
        let learned = Simulator::new(env, ParamSource::Learned { f, stochastic: false });
        let hybrid = learned.collect_steps(&pi, 1000, 21, 0, Some(&reward)).unwrap();
        let ok = same_rollouts(&reference, &fixed) && (!exact || same_rollouts(&reference, &hybrid));
        lines.push((spec.kind.name(), steps, ok, exact));
    }
    let ok = lines.iter().all(|l| l.2 && l.3);
    check(
        ok,
        lines
            .iter()
            .map(|(n, s, ok, exact)| {
                format!("{n}: {s} steps {}{}", if *ok { "bit-identical" } else { "DIFFER" }, if *exact { "" } else { " (pin inexact)" })
            })
            .collect::<Vec<_>>()
            .join(", "),
    )
}

// ---------------------------------------------------------------- A4

fn a4_zero_gap() -> Outcome {
    let cfg = slider(0, GapKind::None);
    let pi_b = behavior(&cfg);
    let ds = collect(&cfg, &pi_b);
    let spec = cfg.source_spec();
    let run = identify::identify(&ds, &pi_b, &spec, &cfg.identify, cfg.seed).map_err(|e| e.to_string())?;
    let score = final_window_score(&run);
    let means = identify::mean_param_outputs(&run.param_fn, &spec, &ds.trajectories).unwrap();
    let nominal = SimParamVector::nominal(&spec);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (r, m) in run.param_fn.layout.ranges.iter().zip(&means) {
        let c = nominal.get(r.kind);
        let rel = (m - c).abs() / c.abs();
        worst = worst.max(rel);
        parts.push(format!("{} {m:.3} vs {c}", r.kind.label()));
    }
    check(
        (0.45..=0.55).contains(&score) && worst <= 0.10,
        format!(
            "{} iterations, window score {score:.3} (band [0.45, 0.55]); {} (max rel {:.1}%, tol 10%)",
            run.metrics.len(),
            parts.join(", "),
            100.0 * worst
        ),
    )
}

// ---------------------------------------------------------------- A5

fn a5_constant_gap() -> Outcome {
    let cfg = frictionless(0);
    let pi_b = behavior(&cfg);
    let ds = collect(&cfg, &pi_b);
    let spec = cfg.source_spec();
    let run = identify::identify(&ds, &pi_b, &spec, &cfg.identify, cfg.seed).map_err(|e| e.to_string())?;
    let means = identify::mean_param_outputs(&run.param_fn, &spec, &ds.trajectories).unwrap();
    let ours = means[param_index(&run.param_fn, ParamKind::MotorScale(0))];
    let sysid = baselines::cmaes_sysid(&ds, &pi_b, &spec, SysIdMode::OpenLoop, &cfg.sysid, cfg.seed)
        .map_err(|e| e.to_string())?;
    let cma = sysid.mean_params().motor_scale[0];
    let cma_rel = (cma - 0.5).abs() / 0.5;
    check(
        (0.45..=0.55).contains(&ours) && cma_rel <= 0.05,
        format!(
            "identified motor scale {ours:.3} (band [0.45, 0.55], {} iterations); CMA-ES {cma:.3} ({:.1}% off, tol 5%)",
            run.metrics.len(),
            100.0 * cma_rel
        ),
    )
}

// ---------------------------------------------------------------- A6

fn a6_ordering() -> Outcome {
    let seeds = [0u64, 1, 2];
    let gaps = [GapKind::Power, GapKind::Heavy, GapKind::Deform];
    let mut methods = vec![Method::Ours];
    methods.extend(Method::BASELINES);
    // returns[gap][label] = per-seed target returns
    let mut returns: Vec<HashMap<String, Vec<f64>>> = vec![HashMap::new(); gaps.len()];
    for &seed in &seeds {
        let base = hopper(seed, GapKind::Power);
        let pi_b = behavior(&base);
        let dr = pipeline::dr_policy(&base).map_err(|e| e.to_string())?;
        for (gi, &gap) in gaps.iter().enumerate() {
            let cfg = hopper(seed, gap);
            let out = pipeline::run_gap(&cfg, &pi_b, &methods, Some(&dr)).map_err(|e| e.to_string())?;
            for e in &out.evals {
                returns[gi].entry(e.policy.clone()).or_default().push(e.mean);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut wins = 0;
    let mut parts = Vec::new();
    for (gi, gap) in gaps.iter().enumerate() {
        let r = &returns[gi];
        let ours = mean(&r["ours"]);
        let pib = mean(&r["behavior"]);
        let base_means: Vec<(String, f64)> =
            Method::BASELINES.iter().map(|m| (m.label().to_string(), mean(&r[m.label()]))).collect();
        let baselines_mean = base_means.iter().map(|b| b.1).sum::<f64>() / base_means.len() as f64;
        let beaten = base_means.iter().filter(|b| ours >= b.1).count();
        let win = ours >= 1.5 * pib && ours >= baselines_mean;
        wins += usize::from(win);
        parts.push(format!(
            "{}: ours {ours:.0} vs pi_B {pib:.0}, baselines' mean {baselines_mean:.0} [{}] beats {beaten}/5 {}",
            gap.name(),
            base_means.iter().map(|(l, v)| format!("{l} {v:.0}")).collect::<Vec<_>>().join(" "),
            if win { "WIN" } else { "loss" }
        ));
    }
    check(wins >= 2, format!("{wins}/3 gaps won (need 2); {}", parts.join("; ")))
}

// ---------------------------------------------------------------- A7

fn a7_alive_bonus() -> Outcome {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in 0..3u64 {
        let cfg = hopper(seed, GapKind::Heavy);
        let pi_b = behavior(&RunConfig { gap: GapKind::Power, ..cfg.clone() });
        let ds = collect(&cfg, &pi_b);
        for (bonus, out) in [(true, &mut with), (false, &mut without)] {
            let icfg = IdentifyConfig { alive_bonus: bonus, ..cfg.identify.clone() };
            let run = identify::identify(&ds, &pi_b, &cfg.source_spec(), &icfg, seed).map_err(|e| e.to_string())?;
            let l_n = run.metrics.last().unwrap().mean_length;
            out.push((l_n - ds.mean_length).abs() / ds.mean_length);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    check(
        mean(&with) < mean(&without),
        format!(
            "final |l_n - l_R|/l_R with bonus {:.3} [{}] vs without {:.3} [{}] (heavy gap, 3 seeds)",
            mean(&with),
            fmt(&with),
            mean(&without),
            fmt(&without)
        ),
    )
}

// ---------------------------------------------------------------- A8

fn a8_data_budget() -> Outcome {
    let mut result = Vec::new();
    for n in [50usize, 200] {
        let cfg = RunConfig { n_trajectories: n, seeds: vec![0, 1, 2], ..slider(0, GapKind::Power) };
        let pi_b = behavior(&cfg);
        let ds = collect(&cfg, &pi_b);
        let (pi, run) = pipeline::ours(&cfg, &pi_b, &ds).map_err(|e| e.to_string())?;
        let eval = pipeline::evaluate_on(&cfg, "ours", &pi, &cfg.target_gap()).map_err(|e| e.to_string())?;
        let before = pipeline::evaluate_on(&cfg, "behavior", &pi_b, &cfg.target_gap()).map_err(|e| e.to_string())?;
        let means = identify::mean_param_outputs(&run.param_fn, &cfg.source_spec(), &ds.trajectories).unwrap();
        let motor = means[param_index(&run.param_fn, ParamKind::MotorScale(0))];
        result.push((n, eval.mean, before.mean, motor));
    }
    let (r50, r200) = (result[0].1, result[1].1);
    let rel = (r50 - r200).abs() / r200.abs();
    check(
        rel <= 0.15,
        format!(
            "slider/power return N=50 {r50:.1} vs N=200 {r200:.1} ({:.1}% apart, tol 15%); pi_B {:.1}; \
             identified motor scale {:.3} vs {:.3} (true 0.5)",
            100.0 * rel,
            result[0].2,
            result[0].3,
            result[1].3
        ),
    )
}

// ---------------------------------------------------------------- A9

fn a9_cross_task() -> Outcome {
    let cfg = hopper(0, GapKind::Power);
    let pi_fwd = behavior(&cfg);
    let ds = collect(&cfg, &pi_fwd);
    let spec = cfg.source_spec();
    let run = identify::identify(&ds, &pi_fwd, &spec, &cfg.identify, cfg.seed).map_err(|e| e.to_string())?;

    let reversed = cfg.task_reward().reversed();
    let rev_cfg = RunConfig { reward: Some(reversed.clone()), ..cfg.clone() };
    let pi_rev = behavior(&rev_cfg);
    let before = pipeline::evaluate_on(&rev_cfg, "reverse", &pi_rev, &cfg.target_gap()).map_err(|e| e.to_string())?;
    let refined = pipeline::refine(&rev_cfg, &run.param_fn, &pi_rev).map_err(|e| e.to_string())?;
    let after = pipeline::evaluate_on(&rev_cfg, "reverse", &refined, &cfg.target_gap()).map_err(|e| e.to_string())?;
    let ratio = after.mean / before.mean;
    check(
        ratio >= 1.5,
        format!(
            "reversed-task target return {:.1} -> {:.1} after refining in the forward-identified simulator ({ratio:.2}x, need 1.5x)",
            before.mean, after.mean
        ),
    )
}

// ---------------------------------------------------------------- A10

fn a10_isolation() -> Outcome {
    let spec = EnvSpec::slider();
    let pi = GaussianPolicy::new(&spec, &[8], -0.5, &mut rng::stream(0, Stream::Init, 0)).unwrap();
    let target = envs::make_target(&spec, &TargetGap::default_for(spec.kind, GapKind::Power)).unwrap();
    let reward = envs::TaskRewardConfig::default_for(spec.kind);
    let ds = identify::collect_target_data(&pi, &target, 4, 0.25, 0, Some(&reward)).unwrap();
    let after_collect = target.step_count();
    let cfg = IdentifyConfig {
        iterations: 2,
        episodes_per_iter: 2,
        param_fn: ParamFnInit { hidden: vec![4], ..Default::default() },
        value_hidden: vec![4],
        discriminator: DiscriminatorConfig { hidden: vec![4], ..Default::default() },
        ..Default::default()
    };
    let run = identify::identify(&ds, &pi, &spec, &cfg, 0).map_err(|e| e.to_string())?;
    let after_identify = target.step_count();
    let mut rc = identify::RefineConfig::default();
    rc.train.iterations = 1;
    rc.train.steps_per_iter = 100;
    rc.train.value_hidden = vec![4];
    identify::refine_policy(&run.param_fn, &pi, &spec, &reward, &rc, 0).map_err(|e| e.to_string())?;
    let after_refine = target.step_count();
    // The counter is live: an evaluation on the target does register.
    let sim = Simulator::new(target.clone(), ParamSource::Nominal);
    identify::evaluate_policy(&pi, &sim, &reward, 1, 0).unwrap();
    let live = target.step_count() > after_refine;
    check(
        after_collect > 0 && after_identify == after_collect && after_refine == after_collect && live,
        format!(
            "target steps: {after_collect} during collection, +{} during identify, +{} during refine",
            after_identify - after_collect,
            after_refine - after_identify
        ),
    )
}
