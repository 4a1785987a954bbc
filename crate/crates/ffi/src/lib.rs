//! C interface to the holostream simulator.
//!
//! Every function returns an [`HsStatus`]; on failure a message is kept per
//! thread and can be read with [`hs_last_error`]. Handles are opaque and
//! must be released with their `_free` function. Complex arrays are
//! interleaved `(re, im)` doubles in (user, AP, antenna) row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use holostream::agent::{greedy_action, policy_forward, Checkpoint, Environment, PolicyParams};
use holostream::beamform::{build_problem, solve, SolveStatus};
use holostream::channel::{sinr_all, Beamformers, ChannelRealization, NoiseModel};
use holostream::config::Config;
use holostream::environment::{HoloEnv, Scheme};
use holostream::media::sinr_for_deadline;
use holostream::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Dimension = 4,
    Numerical = 5,
    Io = 6,
    MissingCheckpoint = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsSolveStatus {
    Feasible = 0,
    Infeasible = 1,
    NumericalFailure = 2,
}

/// Outcome of one slot.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsStepResult {
    pub reward: f64,
    /// Slot just played (1-based).
    pub slot: usize,
    pub feasible: bool,
    pub done: bool,
}

/// Simulator for one scheme.
pub struct HsEnv {
    inner: HoloEnv,
}

/// Trained policy loaded from a checkpoint.
pub struct HsPolicy {
    params: PolicyParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: HsStatus,
    message: String,
}

impl Failure {
    fn new(status: HsStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = status_of(&e);
        Failure::new(status, e.to_string())
    }
}

fn status_of(e: &Error) -> HsStatus {
    match e {
        Error::Dimension(_) => HsStatus::Dimension,
        Error::Domain(_) | Error::Selection(_) => HsStatus::InvalidArgument,
        Error::Config(_) => HsStatus::Config,
        Error::Numerical(_) => HsStatus::Numerical,
        Error::Slot { source, .. } => status_of(source),
        Error::MissingCheckpoint(_) => HsStatus::MissingCheckpoint,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => HsStatus::Io,
        // the error enum may grow; anything new is reported as invalid input
        #[allow(unreachable_patterns)]
        _ => HsStatus::InvalidArgument,
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(fail)) => {
            set_error(fail.message);
            fail.status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            HsStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(HsStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(HsStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn complex_from(re_im: &[f64]) -> Vec<Complex64> {
    re_im.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn tensor_len(users: usize, aps: usize, antennas: usize) -> Result<usize, Failure> {
    users
        .checked_mul(aps)
        .and_then(|v| v.checked_mul(antennas))
        .and_then(|v| v.checked_mul(2))
        .ok_or_else(|| Failure::new(HsStatus::Dimension, "tensor size overflows"))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a simulator. `config_toml` is the text of a config file (null
/// for defaults); `scheme` is one of "proposed", "B1" … "B4".
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_env_new(config_toml: *const c_char, scheme: *const c_char, out: *mut *mut HsEnv) -> HsStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = if config_toml.is_null() {
            Config::default()
        } else {
            Config::from_toml_str(str_arg(config_toml, "config_toml")?)?
        };
        let scheme = Scheme::parse(str_arg(scheme, "scheme")?)?;
        let inner = HoloEnv::new(cfg.episode()?, scheme)?;
        *out = Box::into_raw(Box::new(HsEnv { inner }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`hs_env_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hs_env_free(env: *mut HsEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Observation length, number of action heads and choices per head.
///
/// # Safety
/// `env` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_env_dims(env: *const HsEnv, obs_len: *mut usize, heads: *mut usize, choices: *mut usize) -> HsStatus {
    guard(|| {
        non_null(env, "env")?;
        non_null(obs_len, "obs_len")?;
        non_null(heads, "heads")?;
        non_null(choices, "choices")?;
        let e = &(*env).inner;
        *obs_len = e.observation_len();
        *heads = e.heads();
        *choices = e.choices();
        Ok(())
    })
}

/// Starts episode `episode` and writes the first observation.
///
/// # Safety
/// `env` must be a live handle; `obs` must hold `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_env_reset(env: *mut HsEnv, episode: u64, obs: *mut f64, obs_len: usize) -> HsStatus {
    guard(|| {
        non_null(env, "env")?;
        let e = &mut (*env).inner;
        if obs_len != e.observation_len() {
            return Err(Failure::new(HsStatus::Dimension, format!("obs_len {obs_len}, expected {}", e.observation_len())));
        }
        let first = e.reset(episode)?;
        slice_out(obs, obs_len, "obs")?.copy_from_slice(&first);
        Ok(())
    })
}

/// Plays one slot with one choice per head and writes the next observation.
///
/// # Safety
/// `env` must be a live handle; `choices` must hold `heads` entries, `obs`
/// must hold `obs_len` doubles, `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_env_step(
    env: *mut HsEnv,
    choices: *const usize,
    heads: usize,
    obs: *mut f64,
    obs_len: usize,
    result: *mut HsStepResult,
) -> HsStatus {
    guard(|| {
        non_null(env, "env")?;
        non_null(result, "result")?;
        let e = &mut (*env).inner;
        if obs_len != e.observation_len() {
            return Err(Failure::new(HsStatus::Dimension, format!("obs_len {obs_len}, expected {}", e.observation_len())));
        }
        let action = slice_arg(choices, heads, "choices")?;
        let slot = e.slot()?;
        let fb = e.act(action)?;
        slice_out(obs, obs_len, "obs")?.copy_from_slice(&fb.obs);
        *result = HsStepResult {
            reward: fb.reward,
            slot,
            feasible: fb.feasible,
            done: fb.done,
        };
        Ok(())
    })
}

/// Loads a policy checkpoint written by `holostream train`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_policy_load(path: *const c_char, out: *mut *mut HsPolicy) -> HsStatus {
    guard(|| {
        non_null(out, "out")?;
        let ck = Checkpoint::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(HsPolicy { params: ck.params }));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from [`hs_policy_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hs_policy_free(policy: *mut HsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Most likely choice of every head for `obs`.
///
/// # Safety
/// `policy` must be a live handle; `obs` must hold `obs_len` doubles and
/// `choices` must hold `heads` entries.
#[no_mangle]
pub unsafe extern "C" fn hs_policy_act(
    policy: *const HsPolicy,
    obs: *const f64,
    obs_len: usize,
    choices: *mut usize,
    heads: usize,
) -> HsStatus {
    guard(|| {
        non_null(policy, "policy")?;
        let params = &(*policy).params;
        if heads != params.heads {
            return Err(Failure::new(HsStatus::Dimension, format!("{heads} heads, policy has {}", params.heads)));
        }
        let dists = policy_forward(slice_arg(obs, obs_len, "obs")?, params)?;
        slice_out(choices, heads, "choices")?.copy_from_slice(&greedy_action(&dists));
        Ok(())
    })
}

/// Minimum SINR for delivering `payload_bits` within `tau` after `decode_s`
/// of decoding over `bandwidth_hz`, floored at `xi`. `*feasible` is false
/// (and `*out` untouched) when decoding alone overruns the slot.
///
/// # Safety
/// `out` and `feasible` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_required_sinr(
    payload_bits: f64,
    decode_s: f64,
    tau: f64,
    bandwidth_hz: f64,
    xi: f64,
    out: *mut f64,
    feasible: *mut bool,
) -> HsStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(feasible, "feasible")?;
        let args = [payload_bits, decode_s, tau, bandwidth_hz, xi];
        if args.iter().any(|v| !v.is_finite()) || payload_bits < 0.0 || decode_s < 0.0 || !(tau > 0.0) || !(bandwidth_hz > 0.0) || !(xi > 0.0) {
            return Err(Failure::new(HsStatus::InvalidArgument, "need payload, decode >= 0 and tau, bandwidth, xi > 0"));
        }
        match sinr_for_deadline(payload_bits, decode_s, tau, bandwidth_hz, xi) {
            Some(g) => {
                *out = g;
                *feasible = true;
            }
            None => *feasible = false,
        }
        Ok(())
    })
}

/// SINR of every user for channel `h` and beamformers `w` (both
/// `2·users·aps·antennas` doubles), noise power `noise_psd · bandwidth_hz`.
///
/// # Safety
/// Arrays must have the stated lengths; `out` must hold `users` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_sinr(
    h: *const f64,
    w: *const f64,
    users: usize,
    aps: usize,
    antennas: usize,
    noise_psd: f64,
    bandwidth_hz: f64,
    out: *mut f64,
) -> HsStatus {
    guard(|| {
        let len = tensor_len(users, aps, antennas)?;
        let ch = ChannelRealization::from_vec(users, aps, antennas, complex_from(slice_arg(h, len, "h")?))?;
        let bf = Beamformers::from_vec(users, aps, antennas, complex_from(slice_arg(w, len, "w")?))?;
        let noise = NoiseModel::new(noise_psd, bandwidth_hz)?;
        let values = sinr_all(&ch, &bf, &noise)?;
        slice_out(out, users, "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Minimum-power beamformers meeting per-user SINR `targets` under per-AP
/// power caps `caps` (W). On `HS_SOLVE_STATUS_FEASIBLE`, `w_out` receives
/// the beamformers and `*total_power` their power; otherwise both are zero.
///
/// # Safety
/// `h` and `w_out` hold `2·users·aps·antennas` doubles, `targets` holds
/// `users`, `caps` holds `aps`; scalar outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_solve_beamforming(
    h: *const f64,
    users: usize,
    aps: usize,
    antennas: usize,
    targets: *const f64,
    caps: *const f64,
    noise_psd: f64,
    bandwidth_hz: f64,
    w_out: *mut f64,
    total_power: *mut f64,
    status: *mut HsSolveStatus,
) -> HsStatus {
    guard(|| {
        non_null(total_power, "total_power")?;
        non_null(status, "status")?;
        let len = tensor_len(users, aps, antennas)?;
        let ch = ChannelRealization::from_vec(users, aps, antennas, complex_from(slice_arg(h, len, "h")?))?;
        let noise = NoiseModel::new(noise_psd, bandwidth_hz)?;
        let problem = build_problem(&ch, slice_arg(targets, users, "targets")?, slice_arg(caps, aps, "caps")?, &noise)?;
        let out = slice_out(w_out, len, "w_out")?;
        let sol = solve(&problem);
        for (dst, c) in out.chunks_exact_mut(2).zip(sol.beamformers.as_slice()) {
            dst[0] = c.re;
            dst[1] = c.im;
        }
        *total_power = sol.total_power;
        *status = match sol.status {
            SolveStatus::Feasible => HsSolveStatus::Feasible,
            SolveStatus::Infeasible => HsSolveStatus::Infeasible,
            SolveStatus::NumericalFailure => HsSolveStatus::NumericalFailure,
        };
        Ok(())
    })
}
