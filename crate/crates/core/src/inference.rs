//! Decorrelated score inference for one coordinate of θ at a time.
//!
//! The target is `α = θ_t` and the nuisance is `β = θ_{-t}`. Vectors over the
//! nuisance block are carried as length-`p` vectors with a zero at `t`, so
//! one Hessian operator serves every target.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_len, Error, Result};
use crate::likelihood::{Curvature, McLikelihood};
use crate::prox::{self, ProxOptions, Smooth};
use crate::solver::PenaltyConfig;

/// Above this dimension the nuisance programs use the implicit Hessian.
pub const DENSE_INFERENCE_P: usize = 1024;

/// θ̂ viewed as `(α̂, β̂)` around one index.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSplit {
    pub target_index: usize,
    pub alpha_hat: f64,
    pub beta_hat: Array1<f64>,
}

impl CoordinateSplit {
    pub fn new(theta: ArrayView1<f64>, target_index: usize) -> Result<Self> {
        check_target(theta.len(), target_index)?;
        let beta_hat = theta.iter().enumerate().filter(|(j, _)| *j != target_index).map(|(_, v)| *v).collect();
        Ok(Self { target_index, alpha_hat: theta[target_index], beta_hat })
    }

    /// `(α, β̂)` put back together.
    pub fn assemble(&self, alpha: f64) -> Array1<f64> {
        embed(self.beta_hat.view(), self.target_index, alpha)
    }
}

fn check_target(p: usize, target: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("inference needs p >= 2, got {p}")));
    }
    if target >= p {
        return Err(Error::InvalidArgument(format!("target index {target} out of range for p = {p}")));
    }
    Ok(())
}

fn embed(rest: ArrayView1<f64>, target: usize, value: f64) -> Array1<f64> {
    let mut out = Array1::zeros(rest.len() + 1);
    out.slice_mut(s![..target]).assign(&rest.slice(s![..target]));
    out[target] = value;
    out.slice_mut(s![target + 1..]).assign(&rest.slice(s![target..]));
    out
}

fn drop_index(v: ArrayView1<f64>, target: usize) -> Array1<f64> {
    v.iter().enumerate().filter(|(j, _)| *j != target).map(|(_, x)| *x).collect()
}

#[derive(Debug, Clone)]
enum HessOp {
    Dense(Array2<f64>),
    Implicit(Curvature),
}

impl HessOp {
    fn apply(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        match self {
            HessOp::Dense(h) => Ok(h.dot(&v)),
            HessOp::Implicit(c) => c.apply(v),
        }
    }

    fn column(&self, j: usize) -> Result<Array1<f64>> {
        match self {
            HessOp::Dense(h) => Ok(h.column(j).to_owned()),
            HessOp::Implicit(c) => {
                let mut e = Array1::zeros(c.p());
                e[j] = 1.0;
                c.apply(e.view())
            }
        }
    }
}

/// Everything at θ̂ that every coordinate shares: the gradient and the
/// Hessian operator.
#[derive(Debug, Clone)]
pub struct InferenceContext<'a> {
    like: McLikelihood<'a>,
    n: usize,
    theta_hat: Array1<f64>,
    grad_hat: Array1<f64>,
    hess: HessOp,
}

impl<'a> InferenceContext<'a> {
    /// `n` is the number of observed rows behind `like`.
    pub fn new(like: McLikelihood<'a>, n: usize, theta_hat: ArrayView1<f64>) -> Result<Self> {
        check_len(like.p(), theta_hat.len())?;
        if n < 2 {
            return Err(Error::InvalidArgument(format!("inference needs n >= 2, got {n}")));
        }
        let ws = like.weights(theta_hat)?;
        let grad_hat = like.weighted_mean(&ws) - like.data_mean();
        let curvature = Curvature::from_weights(like.reference(), &ws);
        let hess =
            if like.p() <= DENSE_INFERENCE_P { HessOp::Dense(curvature.dense()?) } else { HessOp::Implicit(curvature) };
        Ok(Self { like, n, theta_hat: theta_hat.to_owned(), grad_hat, hess })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn theta_hat(&self) -> ArrayView1<'_, f64> {
        self.theta_hat.view()
    }

    pub fn likelihood(&self) -> &McLikelihood<'a> {
        &self.like
    }
}

/// Solution of the nuisance projection program.
#[derive(Debug, Clone, PartialEq)]
pub struct WFit {
    /// Length `p - 1`, the target coordinate removed.
    pub w_hat: Array1<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// `½ vᵀHv - vᵀh` over vectors with `v_t = 0`, where `h = H_{·t}` with its
/// `t` entry cleared.
struct NuisanceQuadratic<'c> {
    hess: &'c HessOp,
    cross: Array1<f64>,
    target: usize,
}

impl Smooth for NuisanceQuadratic<'_> {
    fn value(&self, v: ArrayView1<f64>) -> Result<f64> {
        let hv = self.hess.apply(v)?;
        Ok(0.5 * v.dot(&hv) - v.dot(&self.cross))
    }

    fn value_grad(&self, v: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        let hv = self.hess.apply(v)?;
        let value = 0.5 * v.dot(&hv) - v.dot(&self.cross);
        let mut g = hv - &self.cross;
        g[self.target] = 0.0;
        Ok((value, g))
    }
}

fn cross_block(ctx: &InferenceContext, target: usize) -> Result<(f64, Array1<f64>)> {
    let mut col = ctx.hess.column(target)?;
    let h_tt = col[target];
    col[target] = 0.0;
    Ok((h_tt, col))
}

fn fit_w_embedded(ctx: &InferenceContext, target: usize, cfg: &PenaltyConfig) -> Result<(Array1<f64>, WFit)> {
    check_target(ctx.p(), target)?;
    cfg.validate()?;
    let (_, cross) = cross_block(ctx, target)?;
    let quad = NuisanceQuadratic { hess: &ctx.hess, cross, target };
    let out = prox::minimize(
        &quad,
        Array1::zeros(ctx.p()).view(),
        &ProxOptions { l1: cfg.lambda_prime, max_iter: cfg.max_iter, tol: cfg.tol, step_init: cfg.step_init },
    )?;
    if !out.converged {
        log::debug!("nuisance program for coordinate {target} stopped with KKT residual {:.3e}", out.kkt_residual);
    }
    let fit = WFit {
        w_hat: drop_index(out.x.view(), target),
        objective: out.objective,
        iterations: out.iterations,
        kkt_residual: out.kkt_residual,
        converged: out.converged,
    };
    Ok((out.x, fit))
}

/// `ŵ = argmin ½wᵀH_ββw - wᵀH_βα + λ′‖w‖₁` at θ̂, with `λ′ = cfg.lambda_prime`.
pub fn fit_w_hat(ctx: &InferenceContext, target: usize, cfg: &PenaltyConfig) -> Result<WFit> {
    fit_w_embedded(ctx, target, cfg).map(|(_, fit)| fit)
}

/// `Û(α₀, β̂) = ∇_αL - ŵᵀ∇_βL` at the point `(α₀, β̂)`.
pub fn decorrelated_score(
    like: &McLikelihood,
    split: &CoordinateSplit,
    alpha0: f64,
    w_hat: ArrayView1<f64>,
) -> Result<f64> {
    check_len(split.beta_hat.len(), w_hat.len())?;
    let g = like.grad(split.assemble(alpha0).view())?;
    let t = split.target_index;
    Ok(g[t] - drop_index(g.view(), t).dot(&w_hat))
}

/// `Ĥ_{α|β} = ∇²_ααL - ŵᵀ∇²_βαL` at θ̂.
pub fn variance_estimate(ctx: &InferenceContext, target: usize, w_hat: ArrayView1<f64>) -> Result<f64> {
    check_target(ctx.p(), target)?;
    check_len(ctx.p() - 1, w_hat.len())?;
    let (h_tt, cross) = cross_block(ctx, target)?;
    Ok(h_tt - drop_index(cross.view(), target).dot(&w_hat))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    pub target_index: usize,
    #[serde(skip)]
    pub w_hat: Array1<f64>,
    /// Hypothesized value the score is evaluated at.
    pub alpha0: f64,
    /// `Û(α₀, β̂)`.
    pub u_hat: f64,
    pub h_hat: f64,
    pub s_stat: f64,
    pub p_value: f64,
    pub alpha_hat: f64,
    pub alpha_tilde: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub eta: f64,
    pub ci_defined: bool,
    pub n: usize,
    pub w_kkt_residual: f64,
    pub w_converged: bool,
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eta must lie in (0, 1), got {eta}")))
    }
}

/// `√(n/Ĥ)·Û` when `Ĥ > 0`, otherwise 0.
pub fn score_statistic(n: usize, u_hat: f64, h_hat: f64) -> f64 {
    if h_hat > 0.0 {
        (n as f64 / h_hat).sqrt() * u_hat
    } else {
        0.0
    }
}

/// Two-sided normal p-value `2(1 - Φ(|s|))`.
pub fn two_sided_p_value(s: f64) -> f64 {
    2.0 * standard_normal().sf(s.abs())
}

/// `Φ⁻¹(1 - η/2)`.
pub fn normal_quantile(eta: f64) -> f64 {
    standard_normal().inverse_cdf(1.0 - 0.5 * eta)
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Full inference for one coordinate: the score test of `α = α₀`, the
/// one-step estimate and its `100(1-η)%` interval.
pub fn infer_coordinate(
    ctx: &InferenceContext,
    target: usize,
    alpha0: f64,
    cfg: &PenaltyConfig,
    eta: f64,
) -> Result<InferenceResult> {
    check_eta(eta)?;
    let (w_full, wfit) = fit_w_embedded(ctx, target, cfg)?;
    let split = CoordinateSplit::new(ctx.theta_hat.view(), target)?;
    let (h_tt, cross) = cross_block(ctx, target)?;
    let h_hat = h_tt - w_full.dot(&cross);
    let u_at_hat = ctx.grad_hat[target] - w_full.dot(&ctx.grad_hat);
    let u_hat = if alpha0 == split.alpha_hat {
        u_at_hat
    } else {
        let g = ctx.like.grad(split.assemble(alpha0).view())?;
        g[target] - w_full.dot(&g)
    };
    let n = ctx.n;
    let s_stat = score_statistic(n, u_hat, h_hat);
    let ci_defined = h_hat > 0.0;
    let (alpha_tilde, ci_lo, ci_hi) = if ci_defined {
        let centre = split.alpha_hat - u_at_hat / h_hat;
        let half = normal_quantile(eta) / (n as f64 * h_hat).sqrt();
        (centre, centre - half, centre + half)
    } else {
        log::debug!("coordinate {target}: variance estimate {h_hat:.3e} is not positive");
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(InferenceResult {
        target_index: target,
        w_hat: wfit.w_hat,
        alpha0,
        u_hat,
        h_hat,
        s_stat,
        p_value: two_sided_p_value(s_stat),
        alpha_hat: split.alpha_hat,
        alpha_tilde,
        ci_lo,
        ci_hi,
        eta,
        ci_defined,
        n,
        w_kkt_residual: wfit.kkt_residual,
        w_converged: wfit.converged,
    })
}

/// Score test of `α = alpha0` at level 0.05.
pub fn score_test(ctx: &InferenceContext, target: usize, alpha0: f64, cfg: &PenaltyConfig) -> Result<InferenceResult> {
    infer_coordinate(ctx, target, alpha0, cfg, 0.05)
}

/// `α̃ = α̂ - Û(α̂, β̂)/Ĥ` and its interval; the score is taken at `α̂`.
pub fn one_step_estimate(
    ctx: &InferenceContext,
    target: usize,
    cfg: &PenaltyConfig,
    eta: f64,
) -> Result<InferenceResult> {
    let alpha_hat = ctx.theta_hat[target.min(ctx.p().saturating_sub(1))];
    infer_coordinate(ctx, target, alpha_hat, cfg, eta)
}

/// [`infer_coordinate`] over `targets` in parallel, each tested against its
/// entry of `null_values` (zero when absent).
pub fn infer_all(
    ctx: &InferenceContext,
    targets: &[usize],
    null_values: Option<ArrayView1<f64>>,
    cfg: &PenaltyConfig,
    eta: f64,
) -> Result<Vec<InferenceResult>> {
    if let Some(nv) = null_values {
        check_len(ctx.p(), nv.len())?;
    }
    targets
        .par_iter()
        .map(|&t| {
            check_target(ctx.p(), t)?;
            let alpha0 = null_values.map_or(0.0, |nv| nv[t]);
            infer_coordinate(ctx, t, alpha0, cfg, eta)
        })
        .collect()
}

pub fn write_inference_csv(path: impl AsRef<Path>, results: &[InferenceResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "alpha_tilde", "h_hat", "s_stat", "p_value", "ci_lo", "ci_hi"])?;
    for r in results {
        w.write_record([
            r.target_index.to_string(),
            format!("{:e}", r.alpha_tilde),
            format!("{:e}", r.h_hat),
            format!("{:e}", r.s_stat),
            format!("{:e}", r.p_value),
            format!("{:e}", r.ci_lo),
            format!("{:e}", r.ci_hi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::ReferenceSet;
    use crate::model::{BuiltinFeature, FeatureMap, StateSpace};
    use crate::rng::RngSeed;
    use crate::sampler::{metropolis_sample, sample_reference_gaussian, MetropolisConfig, ObservedSample};
    use crate::solver::solve;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use ndarray::array;

    fn instance(p: usize, n: usize, seed: u64) -> (ObservedSample, ReferenceSet) {
        let space = StateSpace::ContinuousBox { d: 1, lo: -1.0, hi: 1.0 };
        let fm = FeatureMap::builtin(BuiltinFeature::Cos, p, &space).unwrap();
        let mut theta = Array1::zeros(p);
        theta[0] = 0.6;
        let (obs, _) =
            metropolis_sample(&fm, &space, theta.view(), n, &MetropolisConfig::default(), RngSeed::new(seed, 1))
                .unwrap();
        let chain = sample_reference_gaussian(n, 1, RngSeed::new(seed, 2)).unwrap();
        (obs, ReferenceSet::new(&fm, &chain, &space).unwrap())
    }

    fn tight(lambda_prime: f64) -> PenaltyConfig {
        PenaltyConfig { lambda_prime, tol: 1e-12, max_iter: 50_000, ..PenaltyConfig::default() }
    }

    #[test]
    fn split_round_trip() {
        let theta = array![0.5, -1.0, 2.0, 0.0];
        for t in 0..4 {
            let split = CoordinateSplit::new(theta.view(), t).unwrap();
            assert_eq!(split.assemble(split.alpha_hat), theta);
            assert_eq!(split.beta_hat.len(), 3);
        }
        assert!(CoordinateSplit::new(theta.view(), 4).is_err());
        assert!(CoordinateSplit::new(array![1.0].view(), 0).is_err());
    }

    #[test]
    fn huge_lambda_prime_gives_zero_w() {
        let (obs, reference) = instance(5, 200, 1);
        let like = McLikelihood::from_sample(&obs, &reference).unwrap();
        let ctx = InferenceContext::new(like, obs.n(), Array1::zeros(5).view()).unwrap();
        let fit = fit_w_hat(&ctx, 1, &tight(1e6)).unwrap();
        assert!(fit.w_hat.iter().all(|&v| v == 0.0));
        assert!(fit.converged);
    }

    #[test]
    fn unpenalized_w_matches_dense_solve() {
        let (obs, reference) = instance(3, 400, 2);
        let like = McLikelihood::from_sample(&obs, &reference).unwrap();
        let theta = array![0.3, -0.1, 0.05];
        let ctx = InferenceContext::new(like, obs.n(), theta.view()).unwrap();
        let h = like.hess(theta.view()).unwrap();
        for t in 0..3 {
            let fit = fit_w_hat(&ctx, t, &tight(0.0)).unwrap();
            assert!(fit.converged);
            let keep: Vec<usize> = (0..3).filter(|&j| j != t).collect();
            let hbb = DMatrix::from_fn(2, 2, |a, b| h[[keep[a], keep[b]]]);
            let hba = DVector::from_fn(2, |a, _| h[[keep[a], t]]);
            let w = hbb.lu().solve(&hba).unwrap();
            for a in 0..2 {
                assert_abs_diff_eq!(fit.w_hat[a], w[a], epsilon = 1e-6);
            }
            assert!(fit.objective <= 0.0);
        }
    }

    #[test]
    fn zero_w_reduces_to_partial_score_and_diagonal() {
        let (obs, reference) = instance(4, 200, 3);
        let like = McLikelihood::from_sample(&obs, &reference).unwrap();
        let theta = array![0.2, 0.1, 0.0, -0.1];
        let ctx = InferenceContext::new(like, obs.n(), theta.view()).unwrap();
        let split = CoordinateSplit::new(theta.view(), 2).unwrap();
        let zero = Array1::zeros(3);
        let u = decorrelated_score(&like, &split, 0.4, zero.view()).unwrap();
        let g = like.grad(split.assemble(0.4).view()).unwrap();
        assert_eq!(u, g[2]);
        let h = like.hess(theta.view()).unwrap();
        assert_abs_diff_eq!(variance_estimate(&ctx, 2, zero.view()).unwrap(), h[[2, 2]], epsilon = 1e-15);
        assert!(h[[2, 2]] >= 0.0);
    }

    #[test]
    fn two_by_two_variance_is_direct_algebra() {
        let (obs, reference) = instance(2, 300, 4);
        let like = McLikelihood::from_sample(&obs, &reference).unwrap();
        let theta = array![0.4, -0.2];
        let ctx = InferenceContext::new(like, obs.n(), theta.view()).unwrap();
        let h = like.hess(theta.view()).unwrap();
        let w = array![0.7];
        let v = variance_estimate(&ctx, 0, w.view()).unwrap();
        assert_abs_diff_eq!(v, h[[0, 0]] - 0.7 * h[[1, 0]], epsilon = 1e-15);
    }

    #[test]
    fn score_vanishes_at_unpenalized_minimizer() {
        let (obs, reference) = instance(3, 500, 5);
        let like = McLikelihood::from_sample(&obs, &reference).unwrap();
        let fit = solve(&like, &tight(0.0), Array1::zeros(3).view()).unwrap();
        let ctx = InferenceContext::new(like, obs.n(), fit.theta_hat.view()).unwrap();
        for t in 0..3 {
            let r = one_step_estimate(&ctx, t, &tight(0.0), 0.05).unwrap();
            assert!(r.u_hat.abs() <= 1e-8, "{}", r.u_hat);
            assert_abs_diff_eq!(r.alpha_tilde, r.alpha_hat, epsilon = 1e-6);
        }
    }

    #[test]
    fn definitional_identities() {
        let (obs, reference) = instance(6, 300, 6);
        let like = McLikelihood::from_sample(&obs, &reference).unwrap();
        let fit = solve(&like, &PenaltyConfig::with_lambdas(0.02, 0.002, 0.02), Array1::zeros(6).view()).unwrap();
        let ctx = InferenceContext::new(like, obs.n(), fit.theta_hat.view()).unwrap();
        let cfg = PenaltyConfig::with_lambdas(0.02, 0.002, 0.02);
        let results = infer_all(&ctx, &[0, 1, 2, 3, 4, 5], None, &cfg, 0.1).unwrap();
        let z = normal_quantile(0.1);
        for r in &results {
            assert!(r.ci_defined);
            assert!(r.w_kkt_residual <= 10.0 * cfg.tol);
            let expected = (obs.n() as f64 / r.h_hat).sqrt() * r.u_hat;
            assert_eq!(r.s_stat, expected);
            assert!(r.ci_lo <= r.alpha_tilde && r.alpha_tilde <= r.ci_hi);
            let width = 2.0 * z / (obs.n() as f64 * r.h_hat).sqrt();
            assert_abs_diff_eq!(r.ci_hi - r.ci_lo, width, epsilon = 1e-12);
            assert_abs_diff_eq!(0.5 * (r.ci_lo + r.ci_hi), r.alpha_tilde, epsilon = 1e-12);
            let split = CoordinateSplit::new(fit.theta_hat.view(), r.target_index).unwrap();
            let u0 = decorrelated_score(&like, &split, 0.0, r.w_hat.view()).unwrap();
            assert_abs_diff_eq!(u0, r.u_hat, epsilon = 1e-12);
            let v = variance_estimate(&ctx, r.target_index, r.w_hat.view()).unwrap();
            assert_abs_diff_eq!(v, r.h_hat, epsilon = 1e-12);
        }
    }

    #[test]
    fn statistic_branches_and_half_width() {
        assert_eq!(score_statistic(100, 3.0, 0.0), 0.0);
        assert_eq!(score_statistic(100, 3.0, -1.0), 0.0);
        assert_eq!(score_statistic(100, 0.5, 4.0), 2.5);
        assert_eq!(two_sided_p_value(0.0), 1.0);
        assert_abs_diff_eq!(normal_quantile(0.05) / 100.0, 0.0196, epsilon = 1e-4);
    }

    #[test]
    fn implicit_and_dense_operators_agree() {
        let (obs, reference) = instance(5, 200, 7);
        let like = McLikelihood::from_sample(&obs, &reference).unwrap();
        let theta = array![0.3, 0.0, -0.2, 0.1, 0.0];
        let dense = InferenceContext::new(like, obs.n(), theta.view()).unwrap();
        let mut implicit = dense.clone();
        implicit.hess = HessOp::Implicit(Curvature::at(&reference, theta.view()).unwrap());
        let cfg = tight(0.01);
        for t in 0..5 {
            let a = infer_coordinate(&dense, t, 0.0, &cfg, 0.05).unwrap();
            let b = infer_coordinate(&implicit, t, 0.0, &cfg, 0.05).unwrap();
            assert_abs_diff_eq!(a.h_hat, b.h_hat, epsilon = 1e-9);
            assert_abs_diff_eq!(a.s_stat, b.s_stat, epsilon = 1e-6);
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        let (obs, reference) = instance(3, 50, 8);
        let like = McLikelihood::from_sample(&obs, &reference).unwrap();
        let ctx = InferenceContext::new(like, obs.n(), Array1::zeros(3).view()).unwrap();
        let cfg = PenaltyConfig::default();
        assert!(infer_coordinate(&ctx, 3, 0.0, &cfg, 0.05).is_err());
        assert!(infer_coordinate(&ctx, 0, 0.0, &cfg, 1.0).is_err());
        assert!(InferenceContext::new(like, 1, Array1::zeros(3).view()).is_err());
        assert!(infer_all(&ctx, &[0], Some(Array1::zeros(2).view()), &cfg, 0.05).is_err());
    }
}
