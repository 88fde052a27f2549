//! C interface to `mcmle`.
//!
//! Objects cross the boundary as opaque handles created by a `*_new` or
//! producer function and released by the matching `*_free`. Every entry point
//! returns an [`McmleStatus`]; on failure the message is kept per thread and
//! can be read with [`mcmle_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mcmle::fdr::{ebh_select, mirror_select, MirrorConfig, MirrorKind, SelectionDiagnostics};
use mcmle::inference::{infer_coordinate, InferenceContext};
use mcmle::oracle::run_verify_suite;
use mcmle::solver::{fit_with_cv, PenaltyConfig, Tuning};
use mcmle::{BuiltinFeature, Error, FeatureMap, McLikelihood, ObservedSample, ReferenceSet, RngSeed, StateSpace};
use ndarray::{Array1, ArrayView1};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McmleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// Built-in sufficient statistics on a continuous box.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McmleFeature {
    Cos = 0,
    Arctan = 1,
    Rational = 2,
}

/// Combining function for mirror statistics.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McmleMirror {
    Product = 0,
    Sum = 1,
}

/// A feature map together with the state space it is defined on.
pub struct McmleModel {
    fm: FeatureMap,
    space: StateSpace,
}

/// Observed rows plus a weighted reference sample, both already featurized.
pub struct McmleData {
    obs: ObservedSample,
    reference: ReferenceSet,
}

/// A penalized fit.
pub struct McmleFit {
    theta: Array1<f64>,
    summary: McmleFitSummary,
}

/// Scalar summary of a fit and the penalty it used.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmleFitSummary {
    pub p: usize,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    pub support_size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_prime: f64,
}

/// Score test, one-step estimate and interval for one coordinate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmleInference {
    pub target_index: usize,
    pub alpha0: f64,
    pub u_hat: f64,
    pub h_hat: f64,
    pub s_stat: f64,
    pub p_value: f64,
    pub alpha_hat: f64,
    pub alpha_tilde: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ci_defined: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> McmleStatus {
    match err {
        Error::DimensionMismatch { .. } => McmleStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::Config(_) | Error::NotEnumerable { .. } => McmleStatus::InvalidArgument,
        Error::Numerical(_) => McmleStatus::Numerical,
        Error::Io(_) | Error::Csv(_) => McmleStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard<F>(body: F) -> McmleStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            McmleStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            McmleStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            McmleStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn view<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn rows(buf: &[f64], count: usize, d: usize) -> Vec<Vec<f64>> {
    buf.chunks_exact(d).take(count).map(<[f64]>::to_vec).collect()
}

fn checked_area(count: usize, d: usize) -> Result<usize, Failure> {
    count.checked_mul(d).ok_or_else(|| Failure::Core(Error::InvalidArgument("buffer size overflows".into())))
}

/// Message of the last failure on this thread, or null after a success.
///
/// The pointer stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn mcmle_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a built-in feature map of dimension `p` on the box `[lo, hi]^1`.
///
/// # Safety
/// `out_model` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mcmle_model_new_builtin(
    feature: McmleFeature,
    p: usize,
    lo: f64,
    hi: f64,
    out_model: *mut *mut McmleModel,
) -> McmleStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let kind = match feature {
            McmleFeature::Cos => BuiltinFeature::Cos,
            McmleFeature::Arctan => BuiltinFeature::Arctan,
            McmleFeature::Rational => BuiltinFeature::Rational,
        };
        let space = StateSpace::ContinuousBox { d: 1, lo, hi };
        space.validate()?;
        let fm = FeatureMap::builtin(kind, p, &space)?;
        *slot = Box::into_raw(Box::new(McmleModel { fm, space }));
        Ok(())
    })
}

/// Builds an Ising model on `d` binary spins, with external fields when `with_fields` is set.
///
/// # Safety
/// `out_model` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mcmle_model_new_ising(
    d: usize,
    with_fields: bool,
    out_model: *mut *mut McmleModel,
) -> McmleStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let fm = FeatureMap::ising(d, with_fields)?;
        let space = StateSpace::DiscreteProduct { d, r: 2 };
        *slot = Box::into_raw(Box::new(McmleModel { fm, space }));
        Ok(())
    })
}

/// Parameter dimension of a model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcmle_model_p(model: *const McmleModel) -> usize {
    model.as_ref().map_or(0, |m| m.fm.p())
}

/// State dimension of a model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcmle_model_state_dim(model: *const McmleModel) -> usize {
    model.as_ref().map_or(0, |m| m.space.dim())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcmle_model_free(model: *mut McmleModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Featurizes `n` observed states and `m` reference states.
///
/// Both buffers are row-major with `state_dim` columns. `log_h[i]` is the log
/// density the i-th reference state was drawn from, up to a shared constant.
///
/// # Safety
/// `observed` must hold `n * state_dim` doubles, `reference` and `log_h`
/// must hold `m * state_dim` and `m` doubles, and `out_data` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcmle_data_new(
    model: *const McmleModel,
    observed: *const f64,
    n: usize,
    reference: *const f64,
    log_h: *const f64,
    m: usize,
    out_data: *mut *mut McmleData,
) -> McmleStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let slot = out(out_data, "out_data")?;
        let d = model.space.dim();
        let obs_buf = view(observed, checked_area(n, d)?, "observed")?;
        let ref_buf = view(reference, checked_area(m, d)?, "reference")?;
        let log_h = view(log_h, m, "log_h")?;
        let obs = ObservedSample::from_draws(&model.fm, rows(obs_buf, n, d))?;
        let chain =
            mcmle::ReferenceChain::new(rows(ref_buf, m, d), log_h.to_vec(), mcmle::sampler::ReferenceKind::External)?;
        let reference = ReferenceSet::new(&model.fm, &chain, &model.space)?;
        *slot = Box::into_raw(Box::new(McmleData { obs, reference }));
        Ok(())
    })
}

/// Number of observed rows, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcmle_data_n(data: *const McmleData) -> usize {
    data.as_ref().map_or(0, |d| d.obs.n())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcmle_data_free(data: *mut McmleData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

fn finish_fit(data: &McmleData, tuning: &Tuning, seed: u64) -> Result<Box<McmleFit>, Failure> {
    let tuned = fit_with_cv(&data.obs, &data.reference, tuning, RngSeed::new(seed, 0))?;
    let summary = McmleFitSummary {
        p: tuned.fit.theta_hat.len(),
        objective: tuned.fit.objective,
        iterations: tuned.fit.iterations,
        kkt_residual: tuned.fit.kkt_residual,
        converged: tuned.fit.converged,
        support_size: tuned.fit.support_size,
        lambda1: tuned.config.lambda1,
        lambda2: tuned.config.lambda2,
        lambda_prime: tuned.config.lambda_prime,
    };
    Ok(Box::new(McmleFit { theta: tuned.fit.theta_hat, summary }))
}

/// Elastic-net fit at fixed penalties.
///
/// # Safety
/// `data` must be a live handle and `out_fit` writable.
#[no_mangle]
pub unsafe extern "C" fn mcmle_fit_fixed(
    data: *const McmleData,
    lambda1: f64,
    lambda2: f64,
    lambda_prime: f64,
    out_fit: *mut *mut McmleFit,
) -> McmleStatus {
    guard(|| {
        let data = deref(data, "data")?;
        let slot = out(out_fit, "out_fit")?;
        let cfg = PenaltyConfig::with_lambdas(lambda1, lambda2, lambda_prime);
        cfg.validate()?;
        *slot = Box::into_raw(finish_fit(data, &Tuning::Fixed(cfg), 0)?);
        Ok(())
    })
}

/// Elastic-net fit with penalties chosen by `folds`-fold cross-validation on the default grid.
///
/// # Safety
/// `data` must be a live handle and `out_fit` writable.
#[no_mangle]
pub unsafe extern "C" fn mcmle_fit_cv(
    data: *const McmleData,
    folds: usize,
    seed: u64,
    out_fit: *mut *mut McmleFit,
) -> McmleStatus {
    guard(|| {
        let data = deref(data, "data")?;
        let slot = out(out_fit, "out_fit")?;
        let tuning = Tuning::CrossValidated { folds, base: PenaltyConfig::default(), grid: Vec::new() };
        *slot = Box::into_raw(finish_fit(data, &tuning, seed)?);
        Ok(())
    })
}

/// Copies the fit summary into `out_summary`.
///
/// # Safety
/// `fit` must be a live handle and `out_summary` writable.
#[no_mangle]
pub unsafe extern "C" fn mcmle_fit_summary(fit: *const McmleFit, out_summary: *mut McmleFitSummary) -> McmleStatus {
    guard(|| {
        let fit = deref(fit, "fit")?;
        *out(out_summary, "out_summary")? = fit.summary;
        Ok(())
    })
}

/// Copies the estimate into `buf`, which must have room for exactly `len == p` doubles.
///
/// # Safety
/// `fit` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mcmle_fit_theta(fit: *const McmleFit, buf: *mut f64, len: usize) -> McmleStatus {
    guard(|| {
        let fit = deref(fit, "fit")?;
        let p = fit.theta.len();
        if len != p {
            return Err(Error::DimensionMismatch { expected: p, found: len }.into());
        }
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        slice::from_raw_parts_mut(buf, len).copy_from_slice(fit.theta.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcmle_fit_free(fit: *mut McmleFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Decorrelated score test of `theta[target] = alpha0` with a `100(1 - eta)%` interval.
///
/// `lambda_prime` penalizes the decorrelation direction; pass the fit's own
/// value from [`McmleFitSummary`] when in doubt.
///
/// # Safety
/// `data` and `fit` must be live handles and `out_result` writable.
#[no_mangle]
pub unsafe extern "C" fn mcmle_infer(
    data: *const McmleData,
    fit: *const McmleFit,
    target: usize,
    alpha0: f64,
    lambda_prime: f64,
    eta: f64,
    out_result: *mut McmleInference,
) -> McmleStatus {
    guard(|| {
        let data = deref(data, "data")?;
        let fit = deref(fit, "fit")?;
        let slot = out(out_result, "out_result")?;
        let like = McLikelihood::from_sample(&data.obs, &data.reference)?;
        let ctx = InferenceContext::new(like, data.obs.n(), fit.theta.view())?;
        let cfg = PenaltyConfig { lambda_prime, ..PenaltyConfig::default() };
        cfg.validate()?;
        let r = infer_coordinate(&ctx, target, alpha0, &cfg, eta)?;
        *slot = McmleInference {
            target_index: r.target_index,
            alpha0: r.alpha0,
            u_hat: r.u_hat,
            h_hat: r.h_hat,
            s_stat: r.s_stat,
            p_value: r.p_value,
            alpha_hat: r.alpha_hat,
            alpha_tilde: r.alpha_tilde,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
            ci_defined: r.ci_defined,
        };
        Ok(())
    })
}

fn write_mask(selected: &[usize], mask: &mut [u8]) {
    mask.fill(0);
    for &j in selected {
        mask[j] = 1;
    }
}

/// e-BH selection at level `q`; `selected_mask[j]` becomes 1 for rejected hypotheses.
///
/// # Safety
/// `e_values` must hold `p` doubles, `selected_mask` must have `p` writable
/// bytes and `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcmle_ebh_select(
    e_values: *const f64,
    p: usize,
    q: f64,
    selected_mask: *mut u8,
    out_count: *mut usize,
) -> McmleStatus {
    guard(|| {
        let e = view(e_values, p, "e_values")?;
        let count = out(out_count, "out_count")?;
        if selected_mask.is_null() && p > 0 {
            return Err(Failure::Null("selected_mask"));
        }
        let res = ebh_select(ArrayView1::from(e), q)?;
        if p > 0 {
            write_mask(&res.selected, slice::from_raw_parts_mut(selected_mask, p));
        }
        *count = res.selected.len();
        Ok(())
    })
}

/// Mirror-statistic selection from two independent normalized estimates.
///
/// `out_threshold` receives the data-driven cutoff (infinite when nothing can be selected).
///
/// # Safety
/// `t1` and `t2` must hold `p` doubles, `selected_mask` must have `p` writable
/// bytes, and `out_count` and `out_threshold` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcmle_mirror_select(
    t1: *const f64,
    t2: *const f64,
    p: usize,
    q: f64,
    mirror: McmleMirror,
    selected_mask: *mut u8,
    out_count: *mut usize,
    out_threshold: *mut f64,
) -> McmleStatus {
    guard(|| {
        let a = view(t1, p, "t1")?;
        let b = view(t2, p, "t2")?;
        let count = out(out_count, "out_count")?;
        let threshold = out(out_threshold, "out_threshold")?;
        if selected_mask.is_null() && p > 0 {
            return Err(Failure::Null("selected_mask"));
        }
        let mut cfg = MirrorConfig::new(q);
        cfg.f_kind = match mirror {
            McmleMirror::Product => MirrorKind::Product,
            McmleMirror::Sum => MirrorKind::Sum,
        };
        let res = mirror_select(ArrayView1::from(a), ArrayView1::from(b), &cfg)?;
        if p > 0 {
            write_mask(&res.selected, slice::from_raw_parts_mut(selected_mask, p));
        }
        *count = res.selected.len();
        *threshold = match &res.diagnostics {
            SelectionDiagnostics::Mirror(m) => m.tau_q,
            _ => f64::INFINITY,
        };
        Ok(())
    })
}

/// Runs the built-in numerical self-checks and reports how many passed.
///
/// # Safety
/// `out_passed` and `out_total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcmle_verify(seed: u64, out_passed: *mut usize, out_total: *mut usize) -> McmleStatus {
    guard(|| {
        let passed = out(out_passed, "out_passed")?;
        let total = out(out_total, "out_total")?;
        let checks = run_verify_suite(RngSeed::new(seed, 0));
        *passed = checks.iter().filter(|c| c.passed).count();
        *total = checks.len();
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping_covers_validation() {
        assert_eq!(status_of(&Error::InvalidArgument("x".into())), McmleStatus::InvalidArgument);
        assert_eq!(status_of(&Error::DimensionMismatch { expected: 1, found: 2 }), McmleStatus::DimensionMismatch);
        assert_eq!(status_of(&Error::Numerical("x".into())), McmleStatus::Numerical);
    }

    #[test]
    fn panics_are_contained() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, McmleStatus::Panic);
        let msg = unsafe { std::ffi::CStr::from_ptr(mcmle_last_error()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }

    #[test]
    fn rows_split_row_major() {
        let r = rows(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        assert_eq!(r, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }
}
