//! C ABI over `tsallis-merton`.
//!
//! Every fallible call returns a [`TmStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and can be copied out
//! with [`tm_last_error_message`]. Handles are opaque and must be released
//! with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tsallis_merton::error::Error;
use tsallis_merton::market::MarketParams;
use tsallis_merton::ode::WellPosednessVerdict;
use tsallis_merton::policy::{Beta, ExplorationSpec, Policy};
use tsallis_merton::rl::{Trainer, TrainingConfig};
use tsallis_merton::solutions::{self, ValueFunction};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a too-small buffer.
    InvalidArgument = 1,
    InvalidParameter = 2,
    /// The query lies where the value function is infinite.
    IllPosed = 3,
    Divergence = 4,
    Unsupported = 5,
    SingularMatrix = 6,
    Config = 7,
    MomentOrder = 8,
    Io = 9,
    /// A Rust panic was caught at the boundary.
    Internal = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmMarket {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// `beta` is 1 (Shannon) or 3 (Tsallis).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmSpec {
    pub p: f64,
    pub gamma: f64,
    pub beta: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmPolicyFamily {
    Gaussian = 0,
    Semicircle = 1,
}

/// `radius` is 0 for the Gaussian family.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmPolicy {
    pub family: TmPolicyFamily,
    pub mean: f64,
    pub variance: f64,
    pub radius: f64,
}

/// `tau` and `delta` are NaN when the value is finite everywhere.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmVerdict {
    pub well_posed_everywhere: bool,
    pub tau: f64,
    pub delta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmIterate {
    pub iteration: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub ml_loss: f64,
    pub reject_count: usize,
}

/// Solved value function for one market and exploration spec.
pub struct TmValueFunction(ValueFunction);

/// Actor-critic training session.
pub struct TmTrainer(Trainer);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> TmStatus {
    match err {
        Error::InvalidParameter { .. } => TmStatus::InvalidParameter,
        Error::MomentOrder { .. } => TmStatus::MomentOrder,
        Error::IllPosed { .. } => TmStatus::IllPosed,
        Error::Unsupported(_) => TmStatus::Unsupported,
        Error::SingularMatrix => TmStatus::SingularMatrix,
        Error::Divergence { .. } => TmStatus::Divergence,
        Error::Config { .. } | Error::Json(_) => TmStatus::Config,
        Error::Io(_) => TmStatus::Io,
    }
}

enum Fail {
    Arg(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(body: F) -> TmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            TmStatus::Ok
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg.to_owned());
            TmStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_owned());
            TmStatus::Internal
        }
    }
}

unsafe fn read<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Arg(what))
}

unsafe fn write<T>(p: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Arg(what));
    }
    p.write(value);
    Ok(())
}

fn market_of(m: &TmMarket) -> MarketParams {
    MarketParams {
        r: m.r,
        mu: m.mu,
        sigma: m.sigma,
    }
}

fn spec_of(s: &TmSpec) -> Result<ExplorationSpec, Fail> {
    let beta = Beta::try_from(s.beta).map_err(|reason| {
        Fail::Lib(Error::InvalidParameter {
            name: "beta",
            reason,
        })
    })?;
    Ok(ExplorationSpec {
        p: s.p,
        gamma: s.gamma,
        beta,
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len - 1` bytes). Returns the full message
/// length in bytes excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Classical Merton fraction `(μ - r) / (σ² (1 - p))`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_merton_strategy(market: *const TmMarket, p: f64, out: *mut f64) -> TmStatus {
    guard(|| {
        let m = market_of(read(market, "market is null")?);
        write(out, solutions::merton_strategy(&m, p)?, "out is null")
    })
}

/// Classical Merton value `V(t, w)` on horizon `horizon`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_merton_value(
    market: *const TmMarket,
    p: f64,
    t: f64,
    horizon: f64,
    w: f64,
    out: *mut f64,
) -> TmStatus {
    guard(|| {
        let m = market_of(read(market, "market is null")?);
        write(out, solutions::merton_value(&m, p, t, horizon, w)?, "out is null")
    })
}

/// Solves the exploratory value function. `step <= 0` selects the default
/// RK4 step `horizon / 10^4`.
///
/// # Safety
/// Pointers must be valid; free the handle with [`tm_value_function_free`].
#[no_mangle]
pub unsafe extern "C" fn tm_value_function_new(
    market: *const TmMarket,
    spec: *const TmSpec,
    horizon: f64,
    step: f64,
    out: *mut *mut TmValueFunction,
) -> TmStatus {
    guard(|| {
        let m = market_of(read(market, "market is null")?);
        let s = spec_of(read(spec, "spec is null")?)?;
        if out.is_null() {
            return Err(Fail::Arg("out is null"));
        }
        let vf = if step > 0.0 {
            ValueFunction::with_step(&m, &s, horizon, step)?
        } else {
            ValueFunction::new(&m, &s, horizon)?
        };
        *out = Box::into_raw(Box::new(TmValueFunction(vf)));
        Ok(())
    })
}

/// # Safety
/// `vf` must come from [`tm_value_function_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tm_value_function_free(vf: *mut TmValueFunction) {
    if !vf.is_null() {
        drop(Box::from_raw(vf));
    }
}

/// Well-posedness of the solved problem.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_value_function_verdict(vf: *const TmValueFunction, out: *mut TmVerdict) -> TmStatus {
    guard(|| {
        let vf = &read(vf, "vf is null")?.0;
        let verdict = match vf.report() {
            Some(report) => TmVerdict {
                well_posed_everywhere: report.verdicts.contains(&WellPosednessVerdict::WellPosedEverywhere),
                tau: report.tau.unwrap_or(f64::NAN),
                delta: report.delta.unwrap_or(f64::NAN),
            },
            None => TmVerdict {
                well_posed_everywhere: true,
                tau: f64::NAN,
                delta: f64::NAN,
            },
        };
        write(out, verdict, "out is null")
    })
}

/// `f(t)`; [`TmStatus::IllPosed`] when `t <= tau`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_value_function_f(vf: *const TmValueFunction, t: f64, out: *mut f64) -> TmStatus {
    guard(|| {
        let vf = &read(vf, "vf is null")?.0;
        write(out, vf.f(t)?, "out is null")
    })
}

/// Exploratory value `V(t, w)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_value_function_value(vf: *const TmValueFunction, t: f64, w: f64, out: *mut f64) -> TmStatus {
    guard(|| {
        let vf = &read(vf, "vf is null")?.0;
        write(out, vf.value(t, w)?, "out is null")
    })
}

/// Optimal exploratory policy at time `t`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_value_function_policy(vf: *const TmValueFunction, t: f64, out: *mut TmPolicy) -> TmStatus {
    guard(|| {
        let vf = &read(vf, "vf is null")?.0;
        let policy = solutions::optimal_policy(vf, t)?;
        let (family, radius) = match policy {
            Policy::Gaussian(_) => (TmPolicyFamily::Gaussian, 0.0),
            Policy::Semicircle(s) => (TmPolicyFamily::Semicircle, s.radius),
        };
        let value = TmPolicy {
            family,
            mean: policy.mean(),
            variance: policy.variance(),
            radius,
        };
        write(out, value, "out is null")
    })
}

/// Exploration cost at time `t` (Shannon entropy, `p != 0`).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_value_function_cost(vf: *const TmValueFunction, t: f64, out: *mut f64) -> TmStatus {
    guard(|| {
        let vf = &read(vf, "vf is null")?.0;
        write(out, solutions::exploration_cost(vf, t)?, "out is null")
    })
}

/// Creates a trainer from a JSON training config (NUL-terminated UTF-8).
/// Absent keys take the defaults.
///
/// # Safety
/// Pointers must be valid; free the handle with [`tm_trainer_free`].
#[no_mangle]
pub unsafe extern "C" fn tm_trainer_new(config_json: *const c_char, out: *mut *mut TmTrainer) -> TmStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            return Err(Fail::Arg("null pointer"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|_| Fail::Arg("config is not UTF-8"))?;
        let config: TrainingConfig = serde_json::from_str(text).map_err(Error::from)?;
        let trainer = Trainer::new(config)?;
        *out = Box::into_raw(Box::new(TmTrainer(trainer)));
        Ok(())
    })
}

/// # Safety
/// `trainer` must come from [`tm_trainer_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tm_trainer_free(trainer: *mut TmTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// Runs one iteration. `out` may be null.
///
/// # Safety
/// `trainer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_trainer_step(trainer: *mut TmTrainer, out: *mut TmIterate) -> TmStatus {
    guard(|| {
        let trainer = &mut trainer.as_mut().ok_or(Fail::Arg("trainer is null"))?.0;
        let rec = trainer.step()?;
        let it = TmIterate {
            iteration: rec.iter,
            phi1: rec.phi1,
            phi2: rec.phi2,
            ml_loss: rec.ml_loss,
            reject_count: rec.reject_count,
        };
        if !out.is_null() {
            out.write(it);
        }
        Ok(())
    })
}

/// Runs the remaining iterations.
///
/// # Safety
/// `trainer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_trainer_run(trainer: *mut TmTrainer) -> TmStatus {
    guard(|| {
        let trainer = &mut trainer.as_mut().ok_or(Fail::Arg("trainer is null"))?.0;
        trainer.run()?;
        Ok(())
    })
}

/// Current parameters. `theta` receives up to `theta_len` critic weights;
/// `theta_count` (if non-null) receives the total number.
///
/// # Safety
/// `theta` must be null or valid for `theta_len` doubles; other pointers
/// must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tm_trainer_params(
    trainer: *const TmTrainer,
    phi1: *mut f64,
    phi2: *mut f64,
    theta: *mut f64,
    theta_len: usize,
    theta_count: *mut usize,
) -> TmStatus {
    guard(|| {
        let trainer = &read(trainer, "trainer is null")?.0;
        let phi = trainer.phi();
        if !phi1.is_null() {
            phi1.write(phi.phi1);
        }
        if !phi2.is_null() {
            phi2.write(phi.phi2);
        }
        let th = trainer.theta();
        if !theta.is_null() {
            ptr::copy_nonoverlapping(th.as_ptr(), theta, th.len().min(theta_len));
        }
        if !theta_count.is_null() {
            theta_count.write(th.len());
        }
        Ok(())
    })
}

/// Completed iterations.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_trainer_iteration(trainer: *const TmTrainer, out: *mut usize) -> TmStatus {
    guard(|| {
        let trainer = &read(trainer, "trainer is null")?.0;
        write(out, trainer.iteration(), "out is null")
    })
}
