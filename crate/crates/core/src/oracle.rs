//! Brute-force reference computations used to check the fast paths:
//! finite differences, dense Newton and linear solves, and full sweeps of the
//! selection cutoffs. Also runs as a self-check suite from the CLI.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdr::{ebh_select, inclusion_rate_select, mirror_select, MirrorConfig, SelectionDiagnostics};
use crate::inference::{fit_w_hat, variance_estimate, InferenceContext};
use crate::likelihood::{mc_log_normalizer, McLikelihood, ReferenceSet};
use crate::model::{brute_force_log_c, BuiltinFeature, FeatureMap, StateSpace};
use crate::rng::RngSeed;
use crate::sampler::{sample_reference_gaussian, sample_reference_uniform, ObservedSample};
use crate::solver::{solve, PenaltyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DiffScheme {
    #[default]
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDiffSpec {
    pub step: f64,
    pub scheme: DiffScheme,
    /// Relative, against the sup-norm of the analytic gradient.
    pub tol_grad: f64,
    /// Absolute, entrywise.
    pub tol_hess: f64,
}

impl Default for FiniteDiffSpec {
    fn default() -> Self {
        Self { step: 1e-5, scheme: DiffScheme::Central, tol_grad: 1e-6, tol_hess: 1e-5 }
    }
}

impl FiniteDiffSpec {
    fn checked_step(&self) -> Result<f64> {
        if self.step > 0.0 && self.step.is_finite() {
            Ok(self.step)
        } else {
            Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {}", self.step)))
        }
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{what} evaluated to {v}")))
    }
}

/// Central differences `(f(θ + h e_j) - f(θ - h e_j)) / 2h`.
pub fn fd_gradient<F>(f: F, theta: ArrayView1<f64>, spec: &FiniteDiffSpec) -> Result<Array1<f64>>
where
    F: Fn(ArrayView1<f64>) -> Result<f64>,
{
    let h = spec.checked_step()?;
    let mut x = theta.to_owned();
    let mut out = Array1::zeros(theta.len());
    for j in 0..theta.len() {
        let orig = x[j];
        x[j] = orig + h;
        let up = finite(f(x.view())?, "function")?;
        x[j] = orig - h;
        let down = finite(f(x.view())?, "function")?;
        x[j] = orig;
        out[j] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Column `j` is the central difference of `grad` along `e_j`.
pub fn fd_hessian<G>(grad: G, theta: ArrayView1<f64>, spec: &FiniteDiffSpec) -> Result<Array2<f64>>
where
    G: Fn(ArrayView1<f64>) -> Result<Array1<f64>>,
{
    let h = spec.checked_step()?;
    let p = theta.len();
    let mut x = theta.to_owned();
    let mut out = Array2::zeros((p, p));
    for j in 0..p {
        let orig = x[j];
        x[j] = orig + h;
        let up = grad(x.view())?;
        x[j] = orig - h;
        let down = grad(x.view())?;
        x[j] = orig;
        if up.len() != p || down.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: up.len() });
        }
        for i in 0..p {
            out[[i, j]] = finite((up[i] - down[i]) / (2.0 * h), "gradient")?;
        }
    }
    Ok(out)
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn to_dvector(v: ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

/// `A x = b` by LU with partial pivoting.
pub fn dense_solve(a: &Array2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
    }
    let x = to_dmatrix(a)
        .lu()
        .solve(&to_dvector(b))
        .ok_or_else(|| Error::Numerical("singular matrix in dense solve".into()))?;
    Ok(x.iter().copied().collect())
}

/// `H_tt - H_tβ H_ββ⁻¹ H_βt` and the projection `H_ββ⁻¹ H_βt`.
pub fn schur_complement(h: &Array2<f64>, target: usize) -> Result<(f64, Array1<f64>)> {
    let p = h.nrows();
    if target >= p || p < 2 {
        return Err(Error::InvalidArgument(format!("target {target} invalid for p = {p}")));
    }
    let keep: Vec<usize> = (0..p).filter(|&j| j != target).collect();
    let hbb = Array2::from_shape_fn((p - 1, p - 1), |(a, b)| h[[keep[a], keep[b]]]);
    let hbt: Array1<f64> = keep.iter().map(|&a| h[[a, target]]).collect();
    let w = dense_solve(&hbb, hbt.view())?;
    Ok((h[[target, target]] - hbt.dot(&w), w))
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub theta: Array1<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Largest dimension [`dense_newton_solve`] accepts.
pub const NEWTON_MAX_P: usize = 50;

fn sup_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Damped Newton iterations until `‖∇‖_∞ ≤ tol`. Steps are halved until the
/// gradient norm drops; the Hessian is shifted by `μI` if not positive definite.
pub fn dense_newton_solve<G, H>(
    grad: G,
    hess: H,
    theta0: ArrayView1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome>
where
    G: Fn(ArrayView1<f64>) -> Result<Array1<f64>>,
    H: Fn(ArrayView1<f64>) -> Result<Array2<f64>>,
{
    let p = theta0.len();
    if p > NEWTON_MAX_P {
        return Err(Error::InvalidArgument(format!("dense Newton oracle limited to p <= {NEWTON_MAX_P}")));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("Newton tolerance must be positive".into()));
    }
    let mut theta = theta0.to_owned();
    let mut g = grad(theta.view())?;
    for iterations in 0..=max_iter {
        let gn = sup_norm(&g);
        if gn <= tol {
            return Ok(NewtonOutcome { theta, iterations, grad_norm: gn });
        }
        if iterations == max_iter {
            break;
        }
        let h = to_dmatrix(&hess(theta.view())?);
        let rhs = -to_dvector(g.view());
        let scale = h.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        let mut mu = 0.0;
        let dir = loop {
            let shifted = &h + DMatrix::identity(p, p) * mu;
            if let Some(ch) = shifted.cholesky() {
                break ch.solve(&rhs);
            }
            mu = if mu == 0.0 { 1e-12 * scale } else { mu * 10.0 };
            if mu > 1e12 * scale {
                return Err(Error::Numerical("Hessian could not be made positive definite".into()));
            }
        };
        let dir: Array1<f64> = dir.iter().copied().collect();
        let base = g.dot(&g).sqrt();
        let mut t = 1.0;
        loop {
            let trial = &theta + &(t * &dir);
            let gt = grad(trial.view())?;
            if gt.dot(&gt).sqrt() < (1.0 - 1e-4 * t) * base || t < 1e-10 {
                theta = trial;
                g = gt;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::Numerical(format!("Newton oracle hit the iteration cap of {max_iter}")))
}

/// Cutoff by sweeping every threshold in `{|M_j| > 0} ∪ {∞}` and counting
/// directly; `∞` is returned when only the infinite threshold qualifies.
pub fn exhaustive_mirror_cutoff(m_values: ArrayView1<f64>, q: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &cand in m_values.iter() {
        let t = cand.abs();
        if t == 0.0 || t >= best {
            continue;
        }
        let mut below = 0usize;
        let mut above = 0usize;
        for &m in m_values.iter() {
            if m < -t {
                below += 1;
            }
            if m > t {
                above += 1;
            }
        }
        let fdp = if below == 0 {
            0.0
        } else if above == 0 {
            f64::INFINITY
        } else {
            below as f64 / above as f64
        };
        if fdp <= q {
            best = t;
        }
    }
    best
}

/// `max{k : k e_(k) / p ≥ 1/q}` by checking every `k` against a fresh sort.
pub fn exhaustive_ebh_k_star(e: ArrayView1<f64>, q: f64) -> usize {
    let p = e.len();
    let mut desc = e.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    let mut k_star = 0;
    for k in 1..=p {
        if k as f64 * desc[k - 1] / p as f64 >= 1.0 / q {
            k_star = k;
        }
    }
    k_star
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

/// A random cosine-feature instance on `[-1, 1]` with `p` features, `n`
/// uniform observations and `m` Gaussian reference draws.
pub fn random_instance(
    p: usize,
    n: usize,
    m: usize,
    seed: RngSeed,
) -> Result<(ObservedSample, ReferenceSet, Array1<f64>)> {
    let space = StateSpace::ContinuousBox { d: 1, lo: -1.0, hi: 1.0 };
    let fm = FeatureMap::builtin(BuiltinFeature::Cos, p, &space)?;
    let mut rng = seed.rng();
    let draws: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let theta: Array1<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
    let obs = ObservedSample::from_draws(&fm, draws)?;
    let chain = sample_reference_gaussian(m, 1, seed.derive(1))?;
    Ok((obs, ReferenceSet::new(&fm, &chain, &space)?, theta))
}

/// Gradient and Hessian against finite differences on `instances` random
/// instances. Returns the worst relative gradient and absolute Hessian errors.
pub fn derivative_check(instances: usize, seed: RngSeed) -> Result<(f64, f64)> {
    let spec = FiniteDiffSpec::default();
    let mut worst = (0.0f64, 0.0f64);
    for k in 0..instances as u64 {
        let s = seed.derive(k);
        let mut rng = s.rng();
        let p = rng.random_range(2..=10);
        let m = rng.random_range(100..=500);
        let (obs, reference, theta) = random_instance(p, 80, m, s.derive(7))?;
        let like = McLikelihood::from_sample(&obs, &reference)?;
        let g = like.grad(theta.view())?;
        let g_fd = fd_gradient(|t| like.loss(t), theta.view(), &spec)?;
        let rel = sup_norm(&(&g - &g_fd)) / sup_norm(&g).max(1e-300);
        let h = like.hess(theta.view())?;
        let h_fd = fd_hessian(|t| like.grad(t), theta.view(), &spec)?;
        let abs = (&h - &h_fd).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst = (worst.0.max(rel), worst.1.max(abs));
    }
    Ok(worst)
}

/// `|MC log C - exact log C|` on a three-spin Ising model with fields, using
/// `m` uniform reference draws.
pub fn normalizer_check(m: usize, seed: RngSeed) -> Result<f64> {
    let space = StateSpace::DiscreteProduct { d: 3, r: 2 };
    let fm = FeatureMap::ising(3, true)?;
    let theta = Array1::from(vec![0.3, -0.2, 0.1, 0.5, -0.4, 0.25]);
    let exact = brute_force_log_c(&fm, theta.view(), &space)?;
    let chain = sample_reference_uniform(&space, m, seed)?;
    let reference = ReferenceSet::new(&fm, &chain, &space)?;
    Ok((mc_log_normalizer(&reference, theta.view())? - exact).abs())
}

/// Ridge-only solver fits against the Newton oracle; returns the worst
/// sup-norm gap and the worst KKT residual relative to `10·tol`.
pub fn solver_check(instances: usize, seed: RngSeed) -> Result<(f64, f64)> {
    let mut worst_gap = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for k in 0..instances as u64 {
        let s = seed.derive(k);
        let p = 5 + (k as usize * 5) % 16;
        let (obs, reference, _) = random_instance(p, 200, 400, s)?;
        let like = McLikelihood::from_sample(&obs, &reference)?;
        let cfg = PenaltyConfig { lambda2: 0.01, tol: 1e-12, max_iter: 100_000, ..PenaltyConfig::default() };
        let fit = solve(&like, &cfg, Array1::zeros(p).view())?;
        let l2 = cfg.lambda2;
        let newton = dense_newton_solve(
            |t| Ok(like.grad(t)? + &(2.0 * l2 * &t)),
            |t| Ok(like.hess(t)? + &(Array2::<f64>::eye(t.len()) * (2.0 * l2))),
            Array1::zeros(p).view(),
            1e-12,
            100,
        )?;
        worst_gap = worst_gap.max(sup_norm(&(&fit.theta_hat - &newton.theta)));
        worst_kkt = worst_kkt.max(fit.kkt_residual / (10.0 * cfg.tol));
        let lasso = PenaltyConfig { lambda1: 0.01, lambda2: 0.001, ..cfg };
        let fit = solve(&like, &lasso, Array1::zeros(p).view())?;
        worst_kkt = worst_kkt.max(fit.kkt_residual / (10.0 * lasso.tol));
    }
    Ok((worst_gap, worst_kkt))
}

/// Unpenalized nuisance projection and variance estimate against the dense
/// Schur complement; returns the worst gap over both.
pub fn projection_check(seed: RngSeed) -> Result<f64> {
    let (obs, reference, theta) = random_instance(4, 200, 400, seed)?;
    let like = McLikelihood::from_sample(&obs, &reference)?;
    let ctx = InferenceContext::new(like, obs.n(), theta.view())?;
    let h = like.hess(theta.view())?;
    let cfg = PenaltyConfig { tol: 1e-13, max_iter: 200_000, ..PenaltyConfig::default() };
    let mut worst = 0.0f64;
    for t in 0..4 {
        let (schur, w) = schur_complement(&h, t)?;
        let fit = fit_w_hat(&ctx, t, &cfg)?;
        worst = worst.max(sup_norm(&(&fit.w_hat - &w)));
        worst = worst.max((variance_estimate(&ctx, t, w.view())? - schur).abs());
    }
    Ok(worst)
}

/// Number of random statistic vectors on which the mirror rule and the
/// exhaustive sweep disagree, out of `trials`.
pub fn mirror_equivalence(trials: usize, seed: RngSeed) -> Result<usize> {
    let mut rng = seed.rng();
    let mut disagreements = 0;
    for _ in 0..trials {
        let p = rng.random_range(1..=40);
        let t1: Array1<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0f64).round()).collect();
        let t2: Array1<f64> = (0..p).map(|_| rng.random_range(-1.0..4.0)).collect();
        let q = rng.random_range(0.01..0.99);
        let r = mirror_select(t1.view(), t2.view(), &MirrorConfig::new(q))?;
        let SelectionDiagnostics::Mirror(st) = &r.diagnostics else {
            unreachable!("mirror selection carries mirror diagnostics")
        };
        let tau = exhaustive_mirror_cutoff(st.m_values.view(), q);
        let expected: Vec<usize> = (0..p).filter(|&j| st.m_values[j] > tau).collect();
        if tau != st.tau_q || expected != r.selected {
            disagreements += 1;
        }
    }
    Ok(disagreements)
}

/// e-BH on the fixed fixture plus random vectors checked against the
/// exhaustive `k*` and the threshold inequality.
pub fn ebh_check(trials: usize, seed: RngSeed) -> Result<(bool, usize)> {
    let fixture = ebh_select(Array1::from(vec![10.0, 9.0, 1.0, 0.1]).view(), 0.5)?;
    let fixture_ok = fixture.selected == vec![0, 1];
    let mut rng = seed.rng();
    let mut bad = 0;
    for _ in 0..trials {
        let p = rng.random_range(1..=30);
        let e: Array1<f64> = (0..p).map(|_| rng.random_range(0.0..40.0f64).powi(2) / 40.0).collect();
        let q = rng.random_range(0.01..0.5);
        let r = ebh_select(e.view(), q)?;
        let SelectionDiagnostics::EBh(set) = &r.diagnostics else {
            unreachable!("e-BH selection carries e-value diagnostics")
        };
        let k = set.k_star;
        let ok_k = k == exhaustive_ebh_k_star(e.view(), q);
        let ok_ineq = k == 0 || k as f64 * e[set.order[k - 1]] / p as f64 >= 1.0 / q;
        if !(ok_k && ok_ineq && r.selected.len() == k) {
            bad += 1;
        }
    }
    Ok((fixture_ok, bad))
}

/// The installation self-check: every oracle comparison at its stated tolerance.
pub fn run_verify_suite(seed: RngSeed) -> Vec<CheckOutcome> {
    let mut checks = Vec::new();
    checks.push(CheckOutcome::from_result(
        "gradient and Hessian vs finite differences",
        derivative_check(20, seed.derive(1))
            .map(|(g, h)| (g <= 1e-6 && h <= 1e-5, format!("max rel grad err {g:.2e}, max abs hess err {h:.2e}"))),
    ));
    checks.push(CheckOutcome::from_result(
        "Monte Carlo log-normalizer vs enumeration",
        normalizer_check(100_000, seed.derive(2)).map(|d| (d <= 0.01, format!("abs err {d:.2e}"))),
    ));
    checks.push(CheckOutcome::from_result(
        "elastic-net solver vs dense Newton",
        solver_check(4, seed.derive(3))
            .map(|(gap, kkt)| (gap <= 1e-6 && kkt <= 1.0, format!("max gap {gap:.2e}, KKT/(10 tol) {kkt:.2e}"))),
    ));
    checks.push(CheckOutcome::from_result(
        "nuisance projection vs Schur complement",
        projection_check(seed.derive(4)).map(|d| (d <= 1e-6, format!("max gap {d:.2e}"))),
    ));
    checks.push(CheckOutcome::from_result(
        "mirror cutoff vs exhaustive sweep",
        mirror_equivalence(1000, seed.derive(5)).map(|bad| (bad == 0, format!("{bad} of 1000 disagree"))),
    ));
    checks.push(CheckOutcome::from_result(
        "e-BH fixture and threshold rule",
        ebh_check(1000, seed.derive(6)).map(|(fixture, bad)| {
            (
                fixture && bad == 0,
                format!("fixture {}, {bad} of 1000 random vectors wrong", if fixture { "ok" } else { "wrong" }),
            )
        }),
    ));
    checks.push(CheckOutcome::from_result(
        "inclusion-rate fixture",
        inclusion_rate_select(Array1::from(vec![0.5, 0.3, 0.2, 0.0, 0.0]).view(), 0.25)
            .map(|r| (r.selected == vec![0, 1], format!("selected {:?}", r.selected))),
    ));
    checks
}
