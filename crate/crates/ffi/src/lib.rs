//! C ABI over the `epra` solver.
//!
//! Instances and solutions cross the boundary as opaque handles, each released with the
//! matching `*_free` function. Every fallible call returns an [`EpraCode`]; on
//! failure, [`epra_last_error_message`] describes the error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use epra::oracle::{self, verify_relint_pair};
use epra::{DenseMatrix, Error, Family, GenSpec, Instance, Meta, RescaleMode, Scheme};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpraCode {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    RankDeficient = 4,
    NonFinite = 5,
    Format = 6,
    Numerical = 7,
    Panic = 8,
}

/// Basic procedure used inside each round.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpraScheme {
    Perceptron = 0,
    VonNeumann = 1,
    VonNeumannAway = 2,
    Smooth = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpraRescale {
    AllDirections = 0,
    SingleDirection = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpraFamily {
    Naive = 0,
    Controlled = 1,
    Partitioned = 2,
}

/// Termination status of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpraOutcome {
    TrivialPrimal = 0,
    TrivialDual = 1,
    PartitionFound = 2,
    RoundLimit = 3,
    Stalled = 4,
}

/// Solver parameters; start from `epra_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EpraSolverConfig {
    pub u_cap: f64,
    pub epsilon: f64,
    pub scheme: EpraScheme,
    pub max_rounds: usize,
    pub bp_max_iters: usize,
    pub rescale_mode: EpraRescale,
    pub membership_tol: f64,
    pub rank_tol: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EpraVerification {
    pub membership_ok: bool,
    pub positivity_ok: bool,
    pub relint_ok: bool,
    /// False when the instance carries no ground-truth partition.
    pub partition_known: bool,
    pub partition_matches: bool,
    pub max_residual: f64,
}

/// Opaque problem instance.
pub struct EpraInstance(Instance);

/// Opaque solver result.
pub struct EpraSolution(epra::EpraResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|b| *b != 0);
    let c = CString::new(bytes).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code_for(e: &Error) -> EpraCode {
    match e {
        Error::DimensionMismatch { .. } => EpraCode::DimensionMismatch,
        Error::RankDeficient { .. } | Error::FullRankSquare { .. } => EpraCode::RankDeficient,
        Error::NonFinite(_) => EpraCode::NonFinite,
        Error::InvalidInput(_) | Error::ZeroVector | Error::Io(_) => EpraCode::InvalidInput,
        Error::Format(_) => EpraCode::Format,
        _ => EpraCode::Numerical,
    }
}

/// Runs `f`, records any error or panic, and converts it to a status code.
fn guard(f: impl FnOnce() -> Result<(), (EpraCode, String)>) -> EpraCode {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EpraCode::Ok
        }
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            EpraCode::Panic
        }
    }
}

fn lib_err(e: Error) -> (EpraCode, String) {
    (code_for(&e), e.to_string())
}

fn null(what: &str) -> (EpraCode, String) {
    (EpraCode::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (EpraCode, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(buf: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], (EpraCode, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < need {
        return Err((
            EpraCode::DimensionMismatch,
            format!("buffer holds {len}, need {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(buf, need))
}

fn to_c_string(s: String) -> Result<*mut c_char, (EpraCode, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (EpraCode::Format, "string contains a nul byte".into()))
}

/// Message for the last failed call on this thread; empty after a success. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn epra_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses an instance from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn epra_instance_from_json(
    json: *const c_char,
    out: *mut *mut EpraInstance,
) -> EpraCode {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (EpraCode::Format, "json is not UTF-8".into()))?;
        let inst = Instance::from_json(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EpraInstance(inst)));
        Ok(())
    })
}

/// Builds an instance from an `m x n` row-major kernel matrix. `m = 0` means `L = R^n`
/// and `a` may then be null.
///
/// # Safety
/// `a` must point to `m * n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn epra_instance_from_matrix(
    m: usize,
    n: usize,
    a: *const f64,
    out: *mut *mut EpraInstance,
) -> EpraCode {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mat = if m == 0 {
            DenseMatrix::zeros(0, n)
        } else {
            if a.is_null() {
                return Err(null("a"));
            }
            let len = m
                .checked_mul(n)
                .ok_or_else(|| (EpraCode::InvalidInput, "m * n overflows".to_string()))?;
            let data = std::slice::from_raw_parts(a, len).to_vec();
            DenseMatrix::from_row_major(m, n, data).map_err(lib_err)?
        };
        let inst = Instance::new(n, mat, Meta::default()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EpraInstance(inst)));
        Ok(())
    })
}

/// Generates a random instance. `m` is ignored by the partitioned family; pass 0 there.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn epra_instance_generate(
    family: EpraFamily,
    n: usize,
    m: usize,
    seed: u64,
    out: *mut *mut EpraInstance,
) -> EpraCode {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let family = match family {
            EpraFamily::Naive => Family::Naive,
            EpraFamily::Controlled => Family::Controlled,
            EpraFamily::Partitioned => Family::Partitioned,
        };
        let m = (m > 0).then_some(m);
        let inst = GenSpec::new(family, n, m, seed).generate().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EpraInstance(inst)));
        Ok(())
    })
}

/// # Safety
/// `inst` must be a live handle; `m` and `n` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn epra_instance_dims(
    inst: *const EpraInstance,
    m: *mut usize,
    n: *mut usize,
) -> EpraCode {
    guard(|| {
        let inst = deref(inst, "instance")?;
        if m.is_null() || n.is_null() {
            return Err(null("m or n"));
        }
        *m = inst.0.m();
        *n = inst.0.n();
        Ok(())
    })
}

/// Serialises the instance; release the string with `epra_string_free`.
///
/// # Safety
/// `inst` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epra_instance_to_json(inst: *const EpraInstance, out: *mut *mut c_char) -> EpraCode {
    guard(|| {
        let inst = deref(inst, "instance")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = to_c_string(inst.0.to_json().map_err(lib_err)?)?;
        Ok(())
    })
}

/// # Safety
/// `inst` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn epra_instance_free(inst: *mut EpraInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn epra_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn epra_config_default() -> EpraSolverConfig {
    let d = epra::EpraConfig::default();
    EpraSolverConfig {
        u_cap: d.u_cap,
        epsilon: d.epsilon,
        scheme: EpraScheme::Smooth,
        max_rounds: d.max_rounds,
        bp_max_iters: d.bp_max_iters,
        rescale_mode: EpraRescale::AllDirections,
        membership_tol: d.membership_tol,
        rank_tol: d.rank_tol,
    }
}

fn to_config(c: &EpraSolverConfig) -> epra::EpraConfig {
    epra::EpraConfig {
        u_cap: c.u_cap,
        epsilon: c.epsilon,
        scheme: match c.scheme {
            EpraScheme::Perceptron => Scheme::Perceptron,
            EpraScheme::VonNeumann => Scheme::VonNeumann,
            EpraScheme::VonNeumannAway => Scheme::VonNeumannAway,
            EpraScheme::Smooth => Scheme::SmoothPerceptron,
        },
        max_rounds: c.max_rounds,
        bp_max_iters: c.bp_max_iters,
        rescale_mode: match c.rescale_mode {
            EpraRescale::AllDirections => RescaleMode::AllDirections,
            EpraRescale::SingleDirection => RescaleMode::SingleDirection,
        },
        membership_tol: c.membership_tol,
        rank_tol: c.rank_tol,
    }
}

/// Runs the solver. `config` may be null for the defaults. An unsolved run (round limit,
/// stall) still returns `Ok` with a solution whose outcome says so.
///
/// # Safety
/// `inst` must be a live handle, `config` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epra_solve(
    inst: *const EpraInstance,
    config: *const EpraSolverConfig,
    out: *mut *mut EpraSolution,
) -> EpraCode {
    guard(|| {
        let inst = deref(inst, "instance")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = match config.as_ref() {
            Some(c) => to_config(c),
            None => epra::EpraConfig::default(),
        };
        let res = epra::solve(&inst.0, &cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EpraSolution(res)));
        Ok(())
    })
}

/// # Safety
/// `sol` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epra_solution_outcome(sol: *const EpraSolution, out: *mut EpraOutcome) -> EpraCode {
    guard(|| {
        let sol = deref(sol, "solution")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = match sol.0.status {
            epra::EpraStatus::TrivialPrimal => EpraOutcome::TrivialPrimal,
            epra::EpraStatus::TrivialDual => EpraOutcome::TrivialDual,
            epra::EpraStatus::PartitionFound => EpraOutcome::PartitionFound,
            epra::EpraStatus::RoundLimit => EpraOutcome::RoundLimit,
            epra::EpraStatus::Stalled => EpraOutcome::Stalled,
        };
        Ok(())
    })
}

/// Rescaling rounds and basic-procedure iterations on each side.
///
/// # Safety
/// `sol` must be a live handle; the out pointers may be null to skip a value.
#[no_mangle]
pub unsafe extern "C" fn epra_solution_counters(
    sol: *const EpraSolution,
    rounds: *mut usize,
    bp_iters_primal: *mut usize,
    bp_iters_dual: *mut usize,
) -> EpraCode {
    guard(|| {
        let sol = deref(sol, "solution")?;
        for (p, v) in [
            (rounds, sol.0.rounds),
            (bp_iters_primal, sol.0.bp_iters_primal),
            (bp_iters_dual, sol.0.bp_iters_dual),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies `x` (a point of `L`) into `buf`, which must hold at least `n` doubles.
///
/// # Safety
/// `sol` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn epra_solution_x(sol: *const EpraSolution, buf: *mut f64, len: usize) -> EpraCode {
    guard(|| {
        let sol = deref(sol, "solution")?;
        out_slice(buf, len, sol.0.x.len())?.copy_from_slice(&sol.0.x);
        Ok(())
    })
}

/// Copies `x_hat` (a point of the orthogonal complement) into `buf`.
///
/// # Safety
/// As for `epra_solution_x`.
#[no_mangle]
pub unsafe extern "C" fn epra_solution_x_hat(
    sol: *const EpraSolution,
    buf: *mut f64,
    len: usize,
) -> EpraCode {
    guard(|| {
        let sol = deref(sol, "solution")?;
        out_slice(buf, len, sol.0.x_hat.len())?.copy_from_slice(&sol.0.x_hat);
        Ok(())
    })
}

/// Writes 1 for indices in `B`, 2 for indices in `N`, 0 for neither (unsolved runs).
///
/// # Safety
/// `sol` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn epra_solution_partition(
    sol: *const EpraSolution,
    buf: *mut u8,
    len: usize,
) -> EpraCode {
    guard(|| {
        let sol = deref(sol, "solution")?;
        let n = sol.0.x.len();
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len < n {
            return Err((
                EpraCode::DimensionMismatch,
                format!("buffer holds {len}, need {n}"),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, n);
        out.fill(0);
        for &i in &sol.0.b {
            out[i] = 1;
        }
        for &i in &sol.0.n {
            out[i] = 2;
        }
        Ok(())
    })
}

/// Serialises the result; release the string with `epra_string_free`.
///
/// # Safety
/// `sol` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epra_solution_to_json(sol: *const EpraSolution, out: *mut *mut c_char) -> EpraCode {
    guard(|| {
        let sol = deref(sol, "solution")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = to_c_string(sol.0.to_json().map_err(lib_err)?)?;
        Ok(())
    })
}

/// # Safety
/// `sol` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn epra_solution_free(sol: *mut EpraSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Checks a solution against its instance.
///
/// # Safety
/// `inst` and `sol` must be live handles and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epra_verify(
    inst: *const EpraInstance,
    sol: *const EpraSolution,
    u_cap: f64,
    tol: f64,
    out: *mut EpraVerification,
) -> EpraCode {
    guard(|| {
        let inst = deref(inst, "instance")?;
        let sol = deref(sol, "solution")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if inst.0.n() != sol.0.x.len() {
            return Err((
                EpraCode::DimensionMismatch,
                "solution does not match the instance".into(),
            ));
        }
        let rep = verify_relint_pair(&inst.0, &sol.0, u_cap, tol);
        *out = EpraVerification {
            membership_ok: rep.membership_ok,
            positivity_ok: rep.positivity_ok,
            relint_ok: rep.relint_ok,
            partition_known: rep.partition_matches_ground_truth.is_some(),
            partition_matches: rep.partition_matches_ground_truth == Some(true),
            max_residual: rep.max_residual,
        };
        Ok(())
    })
}

/// Probability that the orthogonal complement of the kernel of an `m x n` Gaussian matrix
/// meets the open orthant.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn epra_wendel_probability(m: usize, n: usize, out: *mut f64) -> EpraCode {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(1 <= m && m <= n) {
            return Err((
                EpraCode::InvalidInput,
                format!("need 1 <= m <= n, got m={m}, n={n}"),
            ));
        }
        *out = oracle::wendel_probability(m, n);
        Ok(())
    })
}
