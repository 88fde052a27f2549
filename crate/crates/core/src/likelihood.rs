//! The Monte Carlo negative log-likelihood
//!
//! ```text
//! L(θ) = -θᵀ φ̂_n + log( m⁻¹ Σ_i exp(θᵀφ(Y_i)) / h(Y_i) )
//! ```
//!
//! with its gradient `-φ̂_n + φ̄(θ)` and Hessian, the importance-weighted
//! covariance of `φ(Y_i)`. All weight arithmetic is done in log space with a
//! single max shift.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{check_len, Error, Result};
use crate::model::{FeatureMap, StateSpace};
use crate::sampler::{ObservedSample, ReferenceChain};

/// Largest `p` for which a dense `p × p` Hessian is materialized.
pub const MAX_DENSE_P: usize = 4096;

/// Reference draws with their features cached once.
///
/// Draws outside the support of the target carry zero importance weight and
/// are dropped here; they still count towards `m` in the `m⁻¹` factor.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    features: Array2<f64>,
    neg_log_h: Array1<f64>,
    m_total: usize,
}

impl ReferenceSet {
    pub fn new(fm: &FeatureMap, chain: &ReferenceChain, space: &StateSpace) -> Result<Self> {
        let kept: Vec<usize> = (0..chain.len()).filter(|&i| space.contains(&chain.draws()[i])).collect();
        if kept.is_empty() {
            return Err(Error::InvalidArgument("no reference draw lies inside the state space".into()));
        }
        let draws: Vec<Vec<f64>> = kept.iter().map(|&i| chain.draws()[i].clone()).collect();
        let features = fm.eval_rows(&draws);
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("feature map produced a non-finite value".into()));
        }
        let neg_log_h = kept.iter().map(|&i| -chain.log_h()[i]).collect();
        Ok(Self { features, neg_log_h, m_total: chain.len() })
    }

    /// Builds directly from a feature matrix (`m × p`) and `log h` values.
    pub fn from_features(features: Array2<f64>, log_h: &[f64]) -> Result<Self> {
        check_len(features.nrows(), log_h.len())?;
        if features.nrows() == 0 {
            return Err(Error::InvalidArgument("reference set needs m >= 1".into()));
        }
        let m_total = features.nrows();
        Ok(Self { features, neg_log_h: log_h.iter().map(|v| -v).collect(), m_total })
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    /// Total number of reference draws `m`.
    pub fn m(&self) -> usize {
        self.m_total
    }

    /// Draws that lie in the support.
    pub fn m_in_support(&self) -> usize {
        self.features.nrows()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }
}

/// Importance weights `w_i(θ) = exp(θᵀφ(Y_i)) / h(Y_i)` at one θ.
#[derive(Debug, Clone)]
pub struct WeightWorkspace {
    pub log_w: Array1<f64>,
    pub log_sum_w: f64,
    /// `w_i / Σ_j w_j`.
    pub norm_w: Array1<f64>,
    /// `(Σ w)² / Σ w²`.
    pub ess: f64,
}

impl WeightWorkspace {
    pub fn compute(reference: &ReferenceSet, theta: ArrayView1<f64>) -> Result<Self> {
        check_len(reference.p(), theta.len())?;
        let log_w = reference.features.dot(&theta) + &reference.neg_log_h;
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical(format!("log weight maximum is {max}")));
        }
        let sum: f64 = log_w.iter().map(|v| (v - max).exp()).sum();
        let log_sum_w = max + sum.ln();
        let norm_w = log_w.mapv(|v| (v - log_sum_w).exp());
        let ess = 1.0 / norm_w.iter().map(|w| w * w).sum::<f64>();
        Ok(Self { log_w, log_sum_w, norm_w, ess })
    }
}

#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub value: f64,
    pub grad: Array1<f64>,
    pub hess: Option<Array2<f64>>,
    pub ess: f64,
}

/// `L(θ)` for one observed mean-feature vector and one reference set.
#[derive(Debug, Clone, Copy)]
pub struct McLikelihood<'a> {
    data_mean: ArrayView1<'a, f64>,
    reference: &'a ReferenceSet,
}

impl<'a> McLikelihood<'a> {
    pub fn new(data_mean: ArrayView1<'a, f64>, reference: &'a ReferenceSet) -> Result<Self> {
        check_len(reference.p(), data_mean.len())?;
        Ok(Self { data_mean, reference })
    }

    pub fn from_sample(obs: &'a ObservedSample, reference: &'a ReferenceSet) -> Result<Self> {
        Self::new(obs.mean_features(), reference)
    }

    pub fn p(&self) -> usize {
        self.reference.p()
    }

    pub fn reference(&self) -> &'a ReferenceSet {
        self.reference
    }

    pub fn data_mean(&self) -> ArrayView1<'a, f64> {
        self.data_mean
    }

    pub fn weights(&self, theta: ArrayView1<f64>) -> Result<WeightWorkspace> {
        WeightWorkspace::compute(self.reference, theta)
    }

    fn value_from(&self, theta: ArrayView1<f64>, ws: &WeightWorkspace) -> Result<f64> {
        let v = -theta.dot(&self.data_mean) + ws.log_sum_w - (self.reference.m_total as f64).ln();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical(format!("loss evaluated to {v}")))
        }
    }

    /// `φ̄(θ) = Σ_i norm_w_i φ(Y_i)`.
    pub fn weighted_mean(&self, ws: &WeightWorkspace) -> Array1<f64> {
        self.reference.features.t().dot(&ws.norm_w)
    }

    pub fn loss(&self, theta: ArrayView1<f64>) -> Result<f64> {
        let ws = self.weights(theta)?;
        self.value_from(theta, &ws)
    }

    pub fn grad(&self, theta: ArrayView1<f64>) -> Result<Array1<f64>> {
        let ws = self.weights(theta)?;
        Ok(self.weighted_mean(&ws) - self.data_mean)
    }

    pub fn loss_and_grad(&self, theta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        let ws = self.weights(theta)?;
        let value = self.value_from(theta, &ws)?;
        Ok((value, self.weighted_mean(&ws) - self.data_mean))
    }

    pub fn hess(&self, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        Curvature::at(self.reference, theta)?.dense()
    }

    pub fn hess_vector_product(&self, theta: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        Curvature::at(self.reference, theta)?.apply(v)
    }

    pub fn eval(&self, theta: ArrayView1<f64>, with_hess: bool) -> Result<LikelihoodEval> {
        let ws = self.weights(theta)?;
        let value = self.value_from(theta, &ws)?;
        let grad = self.weighted_mean(&ws) - self.data_mean;
        let hess = if with_hess { Some(Curvature::from_weights(self.reference, &ws).dense()?) } else { None };
        Ok(LikelihoodEval { value, grad, hess, ess: ws.ess })
    }
}

/// The Hessian at a fixed θ as an operator, stored as the `m × p` matrix
/// `G = diag(√w) (F - 1 φ̄ᵀ)` so that `∇²L = GᵀG`.
#[derive(Debug, Clone)]
pub struct Curvature {
    scaled: Array2<f64>,
    ess: f64,
}

impl Curvature {
    pub fn at(reference: &ReferenceSet, theta: ArrayView1<f64>) -> Result<Self> {
        let ws = WeightWorkspace::compute(reference, theta)?;
        Ok(Self::from_weights(reference, &ws))
    }

    pub fn from_weights(reference: &ReferenceSet, ws: &WeightWorkspace) -> Self {
        let mean = reference.features.t().dot(&ws.norm_w);
        let mut scaled = &reference.features - &mean.view().insert_axis(Axis(0));
        for (mut row, &w) in scaled.rows_mut().into_iter().zip(ws.norm_w.iter()) {
            row *= w.sqrt();
        }
        Self { scaled, ess: ws.ess }
    }

    pub fn p(&self) -> usize {
        self.scaled.ncols()
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    /// `∇²L · v` in `O(mp)`.
    pub fn apply(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len(self.p(), v.len())?;
        Ok(self.scaled.t().dot(&self.scaled.dot(&v)))
    }

    pub fn dense(&self) -> Result<Array2<f64>> {
        let p = self.p();
        if p > MAX_DENSE_P {
            return Err(Error::InvalidArgument(format!("p = {p} exceeds the dense Hessian limit of {MAX_DENSE_P}")));
        }
        let mut h = self.scaled.t().dot(&self.scaled);
        for a in 0..p {
            for b in 0..a {
                let s = 0.5 * (h[[a, b]] + h[[b, a]]);
                h[[a, b]] = s;
                h[[b, a]] = s;
            }
        }
        Ok(h)
    }
}

/// `log(m⁻¹ Σ_i exp(θᵀφ(Y_i)) / h(Y_i))`, the Monte Carlo estimate of `log C(θ)`.
pub fn mc_log_normalizer(reference: &ReferenceSet, theta: ArrayView1<f64>) -> Result<f64> {
    let ws = WeightWorkspace::compute(reference, theta)?;
    Ok(ws.log_sum_w - (reference.m_total as f64).ln())
}

pub fn eval_loss(obs: &ObservedSample, reference: &ReferenceSet, theta: ArrayView1<f64>) -> Result<f64> {
    McLikelihood::from_sample(obs, reference)?.loss(theta)
}

pub fn eval_grad(obs: &ObservedSample, reference: &ReferenceSet, theta: ArrayView1<f64>) -> Result<Array1<f64>> {
    McLikelihood::from_sample(obs, reference)?.grad(theta)
}

pub fn eval_hess(reference: &ReferenceSet, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
    Curvature::at(reference, theta)?.dense()
}

pub fn hess_vector_product(
    reference: &ReferenceSet,
    theta: ArrayView1<f64>,
    v: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    Curvature::at(reference, theta)?.apply(v)
}

/// Symmetric Bregman divergence of `L + λ₂‖·‖²` between two points:
/// `(a - b)ᵀ (∇L(a) - ∇L(b) + 2λ₂(a - b))`. Nonnegative by convexity.
pub fn bregman_diagnostic(
    obs: &ObservedSample,
    reference: &ReferenceSet,
    theta_a: ArrayView1<f64>,
    theta_b: ArrayView1<f64>,
    lambda2: f64,
) -> Result<f64> {
    if lambda2.is_nan() || lambda2 < 0.0 {
        return Err(Error::InvalidArgument("lambda2 must be nonnegative".into()));
    }
    check_len(theta_a.len(), theta_b.len())?;
    let like = McLikelihood::from_sample(obs, reference)?;
    let diff = &theta_a - &theta_b;
    let dg = like.grad(theta_a)? - like.grad(theta_b)? + &(2.0 * lambda2 * &diff);
    Ok(diff.dot(&dg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BuiltinFeature;
    use crate::rng::RngSeed;
    use crate::sampler::{sample_reference_gaussian, ReferenceKind};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn setup(p: usize, m: usize) -> (FeatureMap, ObservedSample, ReferenceSet) {
        let space = StateSpace::ContinuousBox { d: 1, lo: -1.0, hi: 1.0 };
        let fm = FeatureMap::builtin(BuiltinFeature::Cos, p, &space).unwrap();
        let chain = sample_reference_gaussian(m, 1, RngSeed::new(2, 0)).unwrap();
        let reference = ReferenceSet::new(&fm, &chain, &space).unwrap();
        let draws = (0..40).map(|i| vec![-1.0 + 2.0 * (i as f64 + 0.5) / 40.0]).collect();
        let obs = ObservedSample::from_draws(&fm, draws).unwrap();
        (fm, obs, reference)
    }

    #[test]
    fn loss_at_zero_is_log_mean_inverse_density() {
        let wide = StateSpace::ContinuousBox { d: 1, lo: -50.0, hi: 50.0 };
        let fm = FeatureMap::builtin(BuiltinFeature::Cos, 3, &wide).unwrap();
        let chain = sample_reference_gaussian(200, 1, RngSeed::new(8, 0)).unwrap();
        let reference = ReferenceSet::new(&fm, &chain, &wide).unwrap();
        let obs = ObservedSample::from_draws(&fm, vec![vec![0.2], vec![0.4]]).unwrap();
        let direct = (chain.log_h().iter().map(|lh| (-lh).exp()).sum::<f64>() / 200.0).ln();
        let got = eval_loss(&obs, &reference, Array1::zeros(3).view()).unwrap();
        assert_abs_diff_eq!(got, direct, epsilon = 1e-12);
    }

    #[test]
    fn weights_are_normalized() {
        let (_, _, reference) = setup(5, 300);
        let ws = WeightWorkspace::compute(&reference, array![3.0, -2.0, 1.0, 0.5, 40.0].view()).unwrap();
        assert_abs_diff_eq!(ws.norm_w.sum(), 1.0, epsilon = 1e-12);
        assert!(ws.norm_w.iter().all(|&w| (0.0..=1.0).contains(&w)));
        assert!(ws.ess >= 1.0 - 1e-12 && ws.ess <= reference.m_in_support() as f64 + 1e-9);
    }

    #[test]
    fn gradient_vanishes_when_moments_match() {
        let (_, _, reference) = setup(4, 100);
        let theta = array![0.2, -0.1, 0.3, 0.0];
        let ws = WeightWorkspace::compute(&reference, theta.view()).unwrap();
        let target = reference.features().t().dot(&ws.norm_w);
        let like = McLikelihood::new(target.view(), &reference).unwrap();
        let g = like.grad(theta.view()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn equal_weights_give_plain_average() {
        let features = array![[1.0, 2.0], [3.0, 0.0], [2.0, 1.0]];
        let reference = ReferenceSet::from_features(features, &[-1.0; 3]).unwrap();
        let zero = Array1::zeros(2);
        let like = McLikelihood::new(zero.view(), &reference).unwrap();
        let g = like.grad(zero.view()).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hessian_degenerate_cases() {
        let one = ReferenceSet::from_features(array![[1.0, 2.0, 3.0]], &[0.0]).unwrap();
        let h = eval_hess(&one, array![0.3, 0.1, -0.2].view()).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        let same = ReferenceSet::from_features(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]], &[0.0, -1.0, 0.5]).unwrap();
        let h = eval_hess(&same, array![0.3, 0.1].view()).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn hvp_matches_dense_columns() {
        let (_, _, reference) = setup(6, 200);
        let theta = array![0.4, 0.0, -0.3, 0.2, 0.0, 0.1];
        let h = eval_hess(&reference, theta.view()).unwrap();
        for j in 0..6 {
            let mut e = Array1::zeros(6);
            e[j] = 1.0;
            let col = hess_vector_product(&reference, theta.view(), e.view()).unwrap();
            for k in 0..6 {
                assert_abs_diff_eq!(col[k], h[[k, j]], epsilon = 1e-12);
            }
        }
        let zero = hess_vector_product(&reference, theta.view(), Array1::zeros(6).view()).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_h_only_shifts_loss() {
        let (fm, obs, _) = setup(4, 1);
        let space = StateSpace::ContinuousBox { d: 1, lo: -1.0, hi: 1.0 };
        let chain = sample_reference_gaussian(150, 1, RngSeed::new(6, 0)).unwrap();
        let scaled = ReferenceChain::new(
            chain.draws().to_vec(),
            chain.log_h().iter().map(|v| v + 2.5).collect(),
            ReferenceKind::External,
        )
        .unwrap();
        let a = ReferenceSet::new(&fm, &chain, &space).unwrap();
        let b = ReferenceSet::new(&fm, &scaled, &space).unwrap();
        let theta = array![0.5, -0.2, 0.1, 0.3];
        let la = eval_loss(&obs, &a, theta.view()).unwrap();
        let lb = eval_loss(&obs, &b, theta.view()).unwrap();
        assert_abs_diff_eq!(la - lb, 2.5, epsilon = 1e-12);
        let ga = eval_grad(&obs, &a, theta.view()).unwrap();
        let gb = eval_grad(&obs, &b, theta.view()).unwrap();
        for (x, y) in ga.iter().zip(gb.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn bregman_examples() {
        let (_, obs, reference) = setup(5, 200);
        let a = array![0.1, 0.2, -0.3, 0.0, 0.5];
        let b = array![-0.2, 0.0, 0.1, 0.4, 0.0];
        assert_eq!(bregman_diagnostic(&obs, &reference, a.view(), a.view(), 0.7).unwrap(), 0.0);
        let d = bregman_diagnostic(&obs, &reference, a.view(), b.view(), 0.7).unwrap();
        let ridge = 2.0 * 0.7 * (&a - &b).mapv(|v| v * v).sum();
        assert!(d >= ridge - 1e-12);
    }

    #[test]
    fn out_of_support_draws_carry_no_weight() {
        let space = StateSpace::ContinuousBox { d: 1, lo: 0.0, hi: 1.0 };
        let fm = FeatureMap::builtin(BuiltinFeature::Rational, 2, &space).unwrap();
        let chain = ReferenceChain::new(
            vec![vec![0.5], vec![-3.0], vec![0.25]],
            vec![-1.0, -5.0, -1.0],
            ReferenceKind::External,
        )
        .unwrap();
        let reference = ReferenceSet::new(&fm, &chain, &space).unwrap();
        assert_eq!(reference.m(), 3);
        assert_eq!(reference.m_in_support(), 2);
        let bad = ReferenceChain::new(vec![vec![5.0]], vec![0.0], ReferenceKind::External).unwrap();
        assert!(ReferenceSet::new(&fm, &bad, &space).is_err());
    }
}
