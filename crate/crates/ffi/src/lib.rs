//! C ABI over the advsim core: environments (optionally driven by a learned
//! parameter function), discriminator scoring, policy inference and the
//! reward primitives used during identification.
//!
//! Conventions:
//! - Every fallible function returns an [`AdvsimStatus`]; on failure a
//!   message is available from [`advsim_last_error`] on the same thread.
//! - Handles are opaque, created by `*_new`/`*_load` and released with the
//!   matching `*_free` (which accepts NULL).
//! - Arrays are passed as pointer + length; lengths must match the handle's
//!   declared dimensions exactly.
//! - Panics never cross the boundary; they are reported as
//!   `ADVSIM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use advsim::discriminator::{Discriminator, DiscriminatorCheckpoint};
use advsim::envs::{self, Env, EnvKind, EnvSpec, EnvState, GapKind, TargetGap, TaskRewardConfig};
use advsim::hybrid::{self, param_input, ParamFnCheckpoint, ParamFunction};
use advsim::ppo::GaussianPolicy;
use advsim::rng::{self, Rng, Stream};
use advsim::trajectory::TransitionTuple;
use advsim::{identify, io, Error};

/// Result codes shared by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvsimStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// Bad argument: wrong array length, non-UTF-8 string, unknown name.
    InvalidArgument = 2,
    /// Operation precondition violated inside the core.
    Contract = 3,
    /// The simulation produced a non-finite state.
    Diverged = 4,
    /// The episode is over; call `advsim_env_reset`.
    EpisodeDone = 5,
    /// File missing or unreadable.
    Io = 6,
    /// File contents malformed or of an unsupported version.
    Format = 7,
    Config = 8,
    NoData = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> AdvsimStatus {
    match err {
        Error::Contract(_) => AdvsimStatus::Contract,
        Error::Diverged { .. } | Error::TrainingDiverged(_) => AdvsimStatus::Diverged,
        Error::Config(_) => AdvsimStatus::Config,
        Error::MissingFile(_) | Error::Io(_) => AdvsimStatus::Io,
        Error::Schema(_) | Error::Json(_) | Error::Csv(_) => AdvsimStatus::Format,
        Error::NoData(_) => AdvsimStatus::NoData,
    }
}

/// Internal failure carrying its status code.
struct Fail(AdvsimStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(AdvsimStatus::InvalidArgument, msg.into())
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AdvsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AdvsimStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            AdvsimStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller guarantees `p` is NULL or a live handle from this library.
    unsafe { p.as_ref() }.ok_or_else(|| Fail(AdvsimStatus::NullPointer, format!("{what} is NULL")))
}

fn non_null_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: as above, and the caller does not alias the handle across threads.
    unsafe { p.as_mut() }.ok_or_else(|| Fail(AdvsimStatus::NullPointer, format!("{what} is NULL")))
}

fn slice<'a>(p: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len != expected {
        return Err(invalid(format!("{what}: expected {expected} values, got {len}")));
    }
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(AdvsimStatus::NullPointer, format!("{what} is NULL")));
    }
    // SAFETY: non-null and the caller promises `len` readable doubles.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len != expected {
        return Err(invalid(format!("{what}: expected {expected} values, got {len}")));
    }
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail(AdvsimStatus::NullPointer, format!("{what} is NULL")));
    }
    // SAFETY: non-null and the caller promises `len` writable doubles.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn string(p: *const c_char, what: &str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail(AdvsimStatus::NullPointer, format!("{what} is NULL")));
    }
    // SAFETY: non-null, NUL-terminated per the caller's contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    let slot = non_null_mut(out, what)?;
    *slot = value;
    Ok(())
}

/// Message describing the last failure on this thread ("" after a success).
/// The pointer stays valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn advsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn advsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Discriminator-derived reward log(D / (1 - D)), with D clamped away from 0
/// and 1. Non-finite input yields NaN.
#[no_mangle]
pub extern "C" fn advsim_gan_reward(score: f64) -> f64 {
    if score.is_finite() {
        identify::gan_reward(score)
    } else {
        f64::NAN
    }
}

/// Adaptive alive bonus ln(l_i / l_r). Both lengths must be positive.
#[no_mangle]
pub extern "C" fn advsim_alive_bonus(l_i: f64, l_r: f64, out: *mut f64) -> AdvsimStatus {
    guard(|| {
        if !(l_i > 0.0 && l_r > 0.0 && l_i.is_finite() && l_r.is_finite()) {
            return Err(invalid("lengths must be positive and finite"));
        }
        write_out(out, identify::alive_bonus(l_i, l_r)?, "out")
    })
}

/// Opaque environment: a system with an optional target gap, its current
/// state, RNG streams and task reward.
pub struct AdvsimEnv {
    env: Env,
    reward: TaskRewardConfig,
    state: EnvState,
    obs: Vec<f64>,
    env_rng: Rng,
    param_rng: Rng,
    obs_rng: Rng,
    done: bool,
}

/// Create an environment. `env_name`: "slider" | "pendulum" | "hopper1d";
/// `gap_name`: "none" | "power" | "heavy" | "deform" (shipped magnitudes).
/// The environment is reset with `seed`.
#[no_mangle]
pub extern "C" fn advsim_env_new(
    env_name: *const c_char,
    gap_name: *const c_char,
    seed: u64,
    out: *mut *mut AdvsimEnv,
) -> AdvsimStatus {
    guard(|| {
        let kind: EnvKind = string(env_name, "env_name")?.parse().map_err(|e: Error| invalid(e.to_string()))?;
        let gap: GapKind = string(gap_name, "gap_name")?.parse().map_err(|e: Error| invalid(e.to_string()))?;
        let spec = EnvSpec::by_kind(kind);
        let env = envs::make_target(&spec, &TargetGap::default_for(kind, gap))?;
        let mut env_rng = rng::stream(seed, Stream::Env, 0);
        let state = env.reset(&mut env_rng);
        let mut obs_rng = rng::stream(seed, Stream::Env, 1);
        let obs = envs::observe(&env.spec, &state, &mut obs_rng, true);
        let handle = AdvsimEnv {
            reward: TaskRewardConfig::default_for(kind),
            env,
            state,
            obs,
            env_rng,
            param_rng: rng::stream(seed, Stream::ParamFn, 0),
            obs_rng,
            done: false,
        };
        write_out(out, Box::into_raw(Box::new(handle)), "out")
    })
}

/// Release an environment (NULL is ignored).
#[no_mangle]
pub extern "C" fn advsim_env_free(env: *mut AdvsimEnv) {
    if !env.is_null() {
        // SAFETY: created by `advsim_env_new` and not freed before.
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Observation dimension (0 for NULL).
#[no_mangle]
pub extern "C" fn advsim_env_obs_dim(env: *const AdvsimEnv) -> usize {
    non_null(env, "env").map_or(0, |e| e.env.spec.obs_dim())
}

/// Action dimension (0 for NULL).
#[no_mangle]
pub extern "C" fn advsim_env_action_dim(env: *const AdvsimEnv) -> usize {
    non_null(env, "env").map_or(0, |e| e.env.spec.action_dim())
}

/// Total steps taken on this environment since creation (0 for NULL).
#[no_mangle]
pub extern "C" fn advsim_env_step_count(env: *const AdvsimEnv) -> u64 {
    non_null(env, "env").map_or(0, |e| e.env.step_count())
}

/// Start a new episode and write the (noisy) initial observation.
#[no_mangle]
pub extern "C" fn advsim_env_reset(env: *mut AdvsimEnv, obs_out: *mut f64, obs_len: usize) -> AdvsimStatus {
    guard(|| {
        let e = non_null_mut(env, "env")?;
        let out = slice_mut(obs_out, obs_len, e.env.spec.obs_dim(), "obs_out")?;
        e.state = e.env.reset(&mut e.env_rng);
        e.obs = envs::observe(&e.env.spec, &e.state, &mut e.obs_rng, true);
        e.done = false;
        out.copy_from_slice(&e.obs);
        Ok(())
    })
}

/// Current observation without stepping.
#[no_mangle]
pub extern "C" fn advsim_env_observation(env: *const AdvsimEnv, obs_out: *mut f64, obs_len: usize) -> AdvsimStatus {
    guard(|| {
        let e = non_null(env, "env")?;
        slice_mut(obs_out, obs_len, e.env.spec.obs_dim(), "obs_out")?.copy_from_slice(&e.obs);
        Ok(())
    })
}

/// Advance one control step. When `param_fn` is non-NULL the step uses the
/// hybrid simulator: parameters are sampled from the function at the current
/// state and action (its mean when `stochastic` is 0) and override the
/// system's constants; the environment's gap is ignored in that case and
/// the step is not counted by `advsim_env_step_count`, which only counts
/// steps of the real (possibly gapped) system.
/// Writes the next observation, the task reward and whether the episode
/// ended (1) or not (0).
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn advsim_env_step(
    env: *mut AdvsimEnv,
    action: *const f64,
    action_len: usize,
    param_fn: *const AdvsimParamFn,
    stochastic: i32,
    obs_out: *mut f64,
    obs_len: usize,
    reward_out: *mut f64,
    done_out: *mut i32,
) -> AdvsimStatus {
    guard(|| {
        let e = non_null_mut(env, "env")?;
        let spec = e.env.spec.clone();
        let a = slice(action, action_len, spec.action_dim(), "action")?;
        let out = slice_mut(obs_out, obs_len, spec.obs_dim(), "obs_out")?;
        if e.done {
            return Err(Fail(AdvsimStatus::EpisodeDone, "episode is over; reset first".into()));
        }
        let a = envs::clip_action(&spec, a);
        let next = match (!param_fn.is_null()).then(|| non_null(param_fn, "param_fn")).transpose()? {
            Some(f) => {
                if f.f.input_dim() != spec.obs_dim() + spec.action_dim() {
                    return Err(invalid("parameter function does not match this system"));
                }
                let (next, _, _) =
                    hybrid::hybrid_step(&spec, &f.f, &e.state, &a, &mut e.param_rng, &mut e.env_rng, stochastic != 0)?;
                next
            }
            None => e.env.step(&e.state, &a, None, &mut e.env_rng)?.0,
        };
        let r = envs::task_reward(&e.reward, &spec, &e.state, &a, &next);
        e.done = envs::is_terminal(&spec, &next);
        e.state = next;
        e.obs = envs::observe(&spec, &e.state, &mut e.obs_rng, true);
        out.copy_from_slice(&e.obs);
        write_out(reward_out, r, "reward_out")?;
        write_out(done_out, i32::from(e.done), "done_out")
    })
}

fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    string(p, "path").map(PathBuf::from)
}

/// Opaque learned parameter function.
pub struct AdvsimParamFn {
    f: ParamFunction,
}

/// Load a parameter-function checkpoint (JSON written by `advsim identify`).
#[no_mangle]
pub extern "C" fn advsim_param_fn_load(file: *const c_char, out: *mut *mut AdvsimParamFn) -> AdvsimStatus {
    guard(|| {
        let ckpt: ParamFnCheckpoint = io::load_json(&path(file)?)?;
        let f = ParamFunction::from_checkpoint(&ckpt)?;
        write_out(out, Box::into_raw(Box::new(AdvsimParamFn { f })), "out")
    })
}

/// Release a parameter function (NULL is ignored).
#[no_mangle]
pub extern "C" fn advsim_param_fn_free(f: *mut AdvsimParamFn) {
    if !f.is_null() {
        // SAFETY: created by `advsim_param_fn_load` and not freed before.
        drop(unsafe { Box::from_raw(f) });
    }
}

/// Number of parameters the function outputs (0 for NULL).
#[no_mangle]
pub extern "C" fn advsim_param_fn_output_dim(f: *const AdvsimParamFn) -> usize {
    non_null(f, "param_fn").map_or(0, |f| f.f.output_dim())
}

/// Input dimension: state features followed by the action (0 for NULL).
#[no_mangle]
pub extern "C" fn advsim_param_fn_input_dim(f: *const AdvsimParamFn) -> usize {
    non_null(f, "param_fn").map_or(0, |f| f.f.input_dim())
}

/// Mean parameters (after squashing into their physical ranges, in layout
/// order) at the given noise-free state features and action.
#[no_mangle]
pub extern "C" fn advsim_param_fn_mean(
    f: *const AdvsimParamFn,
    input: *const f64,
    input_len: usize,
    params_out: *mut f64,
    params_len: usize,
) -> AdvsimStatus {
    guard(|| {
        let f = &non_null(f, "param_fn")?.f;
        let x = slice(input, input_len, f.input_dim(), "input")?;
        let out = slice_mut(params_out, params_len, f.output_dim(), "params_out")?;
        let head = f.head(&param_input(x, &[]))?;
        let c = f.layout.squash_into(&head.mu, &f.base);
        for (o, r) in out.iter_mut().zip(&f.layout.ranges) {
            *o = c.get(r.kind);
        }
        Ok(())
    })
}

/// Opaque trained discriminator.
pub struct AdvsimDiscriminator {
    d: Discriminator,
}

/// Load a discriminator checkpoint (JSON written by `advsim identify`).
#[no_mangle]
pub extern "C" fn advsim_discriminator_load(file: *const c_char, out: *mut *mut AdvsimDiscriminator) -> AdvsimStatus {
    guard(|| {
        let ckpt: DiscriminatorCheckpoint = io::load_json(&path(file)?)?;
        let d = Discriminator::from_checkpoint(&ckpt, 0.0)?;
        write_out(out, Box::into_raw(Box::new(AdvsimDiscriminator { d })), "out")
    })
}

/// Release a discriminator (NULL is ignored).
#[no_mangle]
pub extern "C" fn advsim_discriminator_free(d: *mut AdvsimDiscriminator) {
    if !d.is_null() {
        // SAFETY: created by `advsim_discriminator_load` and not freed before.
        drop(unsafe { Box::from_raw(d) });
    }
}

/// Length of the concatenated (obs, action, next_obs) input (0 for NULL).
#[no_mangle]
pub extern "C" fn advsim_discriminator_input_dim(d: *const AdvsimDiscriminator) -> usize {
    non_null(d, "discriminator").map_or(0, |d| d.d.input_dim())
}

/// Probability that the tuple came from the target system, clamped to
/// [1e-6, 1 - 1e-6]. `tuple` is obs, action and next_obs concatenated.
#[no_mangle]
pub extern "C" fn advsim_discriminator_score(
    d: *const AdvsimDiscriminator,
    tuple: *const f64,
    tuple_len: usize,
    score_out: *mut f64,
) -> AdvsimStatus {
    guard(|| {
        let d = &non_null(d, "discriminator")?.d;
        let x = slice(tuple, tuple_len, d.input_dim(), "tuple")?;
        write_out(score_out, d.score_vec(x)?, "score_out")
    })
}

/// Opaque control policy.
pub struct AdvsimPolicy {
    p: GaussianPolicy,
}

/// Load a policy checkpoint (JSON written by the CLI).
#[no_mangle]
pub extern "C" fn advsim_policy_load(file: *const c_char, out: *mut *mut AdvsimPolicy) -> AdvsimStatus {
    guard(|| {
        let p = io::load_policy(&path(file)?)?;
        write_out(out, Box::into_raw(Box::new(AdvsimPolicy { p })), "out")
    })
}

/// Release a policy (NULL is ignored).
#[no_mangle]
pub extern "C" fn advsim_policy_free(p: *mut AdvsimPolicy) {
    if !p.is_null() {
        // SAFETY: created by `advsim_policy_load` and not freed before.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Observation dimension the policy expects (0 for NULL).
#[no_mangle]
pub extern "C" fn advsim_policy_obs_dim(p: *const AdvsimPolicy) -> usize {
    non_null(p, "policy").map_or(0, |p| p.p.obs_scale.len())
}

/// Action dimension the policy produces (0 for NULL).
#[no_mangle]
pub extern "C" fn advsim_policy_action_dim(p: *const AdvsimPolicy) -> usize {
    non_null(p, "policy").map_or(0, |p| p.p.log_std.len())
}

/// Deterministic (mean) action for an observation.
#[no_mangle]
pub extern "C" fn advsim_policy_act(
    p: *const AdvsimPolicy,
    obs: *const f64,
    obs_len: usize,
    action_out: *mut f64,
    action_len: usize,
) -> AdvsimStatus {
    guard(|| {
        let p = &non_null(p, "policy")?.p;
        let o = slice(obs, obs_len, p.obs_scale.len(), "obs")?;
        let out = slice_mut(action_out, action_len, p.log_std.len(), "action_out")?;
        out.copy_from_slice(&p.mean(o)?);
        Ok(())
    })
}

/// Score one tuple given as separate arrays; convenience over
/// [`advsim_discriminator_score`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn advsim_discriminator_score_parts(
    d: *const AdvsimDiscriminator,
    obs: *const f64,
    obs_len: usize,
    action: *const f64,
    action_len: usize,
    next_obs: *const f64,
    next_obs_len: usize,
    score_out: *mut f64,
) -> AdvsimStatus {
    guard(|| {
        let d = &non_null(d, "discriminator")?.d;
        if 2 * obs_len + action_len != d.input_dim() || next_obs_len != obs_len {
            return Err(invalid("tuple dimensions do not match the discriminator"));
        }
        let tuple = TransitionTuple {
            obs: slice(obs, obs_len, obs_len, "obs")?.to_vec(),
            action: slice(action, action_len, action_len, "action")?.to_vec(),
            next_obs: slice(next_obs, next_obs_len, next_obs_len, "next_obs")?.to_vec(),
        };
        write_out(score_out, d.score(&tuple)?, "score_out")
    })
}
