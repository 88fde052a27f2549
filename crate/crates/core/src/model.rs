//! Exponential-family Markov random fields `p(x | θ) ∝ exp(θᵀφ(x))`.
//!
//! A model is a [`FeatureMap`] (the sufficient statistic φ) together with a
//! [`StateSpace`]. Discrete product spaces with counting base measure can be
//! enumerated exactly, which gives the brute-force normalizer and moments used
//! as oracles throughout the test suite. Continuous boxes carry Lebesgue base
//! measure and are only ever sampled.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Largest number of states the brute-force routines will enumerate.
pub const ENUMERATION_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpace {
    /// `d` vertices, each taking one of the levels `0, 1, …, r-1`.
    DiscreteProduct { d: usize, r: usize },
    /// The box `[lo, hi]^d`.
    ContinuousBox { d: usize, lo: f64, hi: f64 },
}

impl StateSpace {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StateSpace::DiscreteProduct { d, r } => {
                if d == 0 || r < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "discrete product space needs d >= 1 and r >= 2 (got d={d}, r={r})"
                    )));
                }
            }
            StateSpace::ContinuousBox { d, lo, hi } => {
                if d == 0 || !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::InvalidArgument(format!(
                        "continuous box needs d >= 1 and finite lo < hi (got d={d}, lo={lo}, hi={hi})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match *self {
            StateSpace::DiscreteProduct { d, .. } | StateSpace::ContinuousBox { d, .. } => d,
        }
    }

    /// Range of a single coordinate, as reals.
    pub fn coordinate_range(&self) -> (f64, f64) {
        match *self {
            StateSpace::DiscreteProduct { r, .. } => (0.0, (r - 1) as f64),
            StateSpace::ContinuousBox { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match *self {
            StateSpace::DiscreteProduct { r, .. } => x.iter().all(|&v| v >= 0.0 && v < r as f64 && v.fract() == 0.0),
            StateSpace::ContinuousBox { lo, hi, .. } => x.iter().all(|&v| v >= lo && v <= hi),
        }
    }

    /// Number of states as a float (`r^d` can overflow any integer type).
    pub fn num_states(&self) -> f64 {
        match *self {
            StateSpace::DiscreteProduct { d, r } => (r as f64).powi(d as i32),
            StateSpace::ContinuousBox { .. } => f64::INFINITY,
        }
    }

    pub fn is_enumerable(&self) -> bool {
        self.num_states() <= ENUMERATION_CAP as f64
    }

    /// All states of an enumerable discrete space, vertex 0 varying fastest.
    pub fn enumerate(&self) -> Result<StateIter> {
        match *self {
            StateSpace::DiscreteProduct { d, r } if self.is_enumerable() => {
                Ok(StateIter { d, r, next: 0, total: r.pow(d as u32) })
            }
            _ => Err(Error::NotEnumerable { states: self.num_states(), cap: ENUMERATION_CAP }),
        }
    }
}

pub struct StateIter {
    d: usize,
    r: usize,
    next: usize,
    total: usize,
}

impl Iterator for StateIter {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.next >= self.total {
            return None;
        }
        let mut k = self.next;
        let mut x = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            x.push((k % self.r) as f64);
            k /= self.r;
        }
        self.next += 1;
        Some(x)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for StateIter {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinFeature {
    /// `φ_j(x) = cos(j π x)`.
    Cos,
    /// `φ_j(x) = arctan(j x)` for `j < p`, last coordinate `log(p x + 1)`.
    Arctan,
    /// `φ_j(x) = 1 / (1 + x^j)`.
    Rational,
}

impl std::str::FromStr for BuiltinFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cos" | "phi1" => Ok(BuiltinFeature::Cos),
            "arctan" | "phi2" => Ok(BuiltinFeature::Arctan),
            "rational" | "phi3" => Ok(BuiltinFeature::Rational),
            other => Err(Error::InvalidArgument(format!("unknown feature map '{other}'"))),
        }
    }
}

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// The sufficient statistic φ: states → ℝ^p, with a declared bound
/// `‖φ(x)‖_∞ ≤ sup_bound` over the state space it was built for.
#[derive(Clone)]
pub struct FeatureMap {
    name: String,
    p: usize,
    sup_bound: f64,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureMap")
            .field("name", &self.name)
            .field("p", &self.p)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl FeatureMap {
    /// Wraps a user-supplied map. `eval` writes `φ(x)` into a slice of length `p`.
    pub fn custom<F>(name: impl Into<String>, p: usize, sup_bound: f64, eval: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if p == 0 {
            return Err(Error::InvalidArgument("feature dimension p must be positive".into()));
        }
        if sup_bound.is_nan() || sup_bound <= 0.0 {
            return Err(Error::InvalidArgument("sup_bound must be positive".into()));
        }
        Ok(Self { name: name.into(), p, sup_bound, eval: Arc::new(eval) })
    }

    /// One of the three scalar maps used in the simulation studies. The space
    /// must be one-dimensional; its range determines `sup_bound`.
    pub fn builtin(kind: BuiltinFeature, p: usize, space: &StateSpace) -> Result<Self> {
        space.validate()?;
        if p == 0 {
            return Err(Error::InvalidArgument("feature dimension p must be positive".into()));
        }
        if space.dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "built-in feature maps act on scalar states; space has dimension {}",
                space.dim()
            )));
        }
        let (lo, hi) = space.coordinate_range();
        match kind {
            BuiltinFeature::Cos => Self::custom("cos", p, 1.0, |x, out| {
                let t = x[0] * std::f64::consts::PI;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = ((j + 1) as f64 * t).cos();
                }
            }),
            BuiltinFeature::Arctan => {
                let pf = p as f64;
                if pf * lo + 1.0 <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "arctan map needs lo > -1/p so that log(p x + 1) is defined (lo={lo})"
                    )));
                }
                let log_bound = (pf * lo + 1.0).ln().abs().max((pf * hi + 1.0).ln().abs());
                let bound = std::f64::consts::FRAC_PI_2.max(log_bound);
                Self::custom("arctan", p, bound, move |x, out| {
                    let last = out.len() - 1;
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = if j == last { (pf * x[0] + 1.0).ln() } else { ((j + 1) as f64 * x[0]).atan() };
                    }
                })
            }
            BuiltinFeature::Rational => {
                if lo <= -1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "rational map has a pole at x = -1; box must satisfy lo > -1 (lo={lo})"
                    )));
                }
                // 1 + x^j >= 1 - |lo| on the box, and >= 1 when lo >= 0
                let bound = if lo >= 0.0 { 1.0 } else { 1.0 / (1.0 + lo) };
                Self::custom("rational", p, bound, |x, out| {
                    let mut pow = 1.0;
                    for o in out.iter_mut() {
                        pow *= x[0];
                        *o = 1.0 / (1.0 + pow);
                    }
                })
            }
        }
    }

    /// Pairwise spin products `s_j s_k` (j < k) with `s = 2x - 1` on `{0,1}^d`,
    /// optionally preceded by the `d` singleton spins.
    pub fn ising(d: usize, with_fields: bool) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument("ising map needs d >= 2".into()));
        }
        let p = d * (d - 1) / 2 + if with_fields { d } else { 0 };
        Self::custom("ising", p, 1.0, move |x, out| {
            let mut k = 0;
            if with_fields {
                for &v in x.iter() {
                    out[k] = 2.0 * v - 1.0;
                    k += 1;
                }
            }
            for a in 0..x.len() {
                for b in (a + 1)..x.len() {
                    out[k] = (2.0 * x[a] - 1.0) * (2.0 * x[b] - 1.0);
                    k += 1;
                }
            }
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.p);
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Array1<f64> {
        let mut out = Array1::zeros(self.p);
        self.eval_into(x, out.as_slice_mut().expect("contiguous"));
        out
    }

    /// Feature matrix with one row per state.
    pub fn eval_rows(&self, states: &[Vec<f64>]) -> Array2<f64> {
        let mut out = Array2::zeros((states.len(), self.p));
        for (mut row, x) in out.rows_mut().into_iter().zip(states) {
            self.eval_into(x, row.as_slice_mut().expect("row-major"));
        }
        out
    }
}

/// `θᵀφ(x)`, without normalization.
pub fn log_density_unnormalized(fm: &FeatureMap, theta: ArrayView1<f64>, x: &[f64]) -> Result<f64> {
    check_len(fm.p(), theta.len())?;
    Ok(fm.eval(x).dot(&theta))
}

fn enumerated_energies(fm: &FeatureMap, theta: ArrayView1<f64>, space: &StateSpace) -> Result<(Vec<f64>, f64)> {
    check_len(fm.p(), theta.len())?;
    let mut phi = vec![0.0; fm.p()];
    let mut energies = Vec::with_capacity(space.enumerate()?.len());
    for x in space.enumerate()? {
        fm.eval_into(&x, &mut phi);
        energies.push(phi.iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>());
    }
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = energies.iter().map(|e| (e - max).exp()).sum();
    Ok((energies, max + sum.ln()))
}

/// Exact `log C(θ) = log Σ_x exp(θᵀφ(x))` by enumeration.
pub fn brute_force_log_c(fm: &FeatureMap, theta: ArrayView1<f64>, space: &StateSpace) -> Result<f64> {
    enumerated_energies(fm, theta, space).map(|(_, log_c)| log_c)
}

/// Exact state probabilities in enumeration order.
pub fn brute_force_probabilities(fm: &FeatureMap, theta: ArrayView1<f64>, space: &StateSpace) -> Result<Vec<f64>> {
    let (energies, log_c) = enumerated_energies(fm, theta, space)?;
    Ok(energies.into_iter().map(|e| (e - log_c).exp()).collect())
}

/// Exact mean and covariance of `φ(X)` under `p(· | θ)`.
pub fn brute_force_moments(
    fm: &FeatureMap,
    theta: ArrayView1<f64>,
    space: &StateSpace,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let probs = brute_force_probabilities(fm, theta, space)?;
    let p = fm.p();
    let mut phi = Array1::zeros(p);
    let mut mean = Array1::<f64>::zeros(p);
    for (x, &pr) in space.enumerate()?.zip(&probs) {
        fm.eval_into(&x, phi.as_slice_mut().unwrap());
        mean.scaled_add(pr, &phi);
    }
    let mut cov = Array2::<f64>::zeros((p, p));
    for (x, &pr) in space.enumerate()?.zip(&probs) {
        fm.eval_into(&x, phi.as_slice_mut().unwrap());
        phi -= &mean;
        for a in 0..p {
            let wa = pr * phi[a];
            for b in a..p {
                cov[[a, b]] += wa * phi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            cov[[a, b]] = cov[[b, a]];
        }
    }
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn line() -> StateSpace {
        StateSpace::ContinuousBox { d: 1, lo: 0.0, hi: 1.0 }
    }

    #[test]
    fn builtin_examples() {
        let cos = FeatureMap::builtin(BuiltinFeature::Cos, 3, &line()).unwrap();
        assert_eq!(cos.eval(&[0.0]), array![1.0, 1.0, 1.0]);
        let rat = FeatureMap::builtin(BuiltinFeature::Rational, 2, &line()).unwrap();
        assert_eq!(rat.eval(&[1.0]), array![0.5, 0.5]);
        let atan = FeatureMap::builtin(BuiltinFeature::Arctan, 4, &line()).unwrap();
        assert_eq!(atan.eval(&[0.0]), array![0.0, 0.0, 0.0, 0.0]);
        let x = 0.3;
        let v = atan.eval(&[x]);
        assert_eq!(v[1], (2.0 * x).atan());
        assert_eq!(v[3], (4.0 * x + 1.0).ln());
    }

    #[test]
    fn builtin_rejects_bad_inputs() {
        assert!(FeatureMap::builtin(BuiltinFeature::Cos, 0, &line()).is_err());
        assert!("phi9".parse::<BuiltinFeature>().is_err());
        let wide = StateSpace::ContinuousBox { d: 1, lo: -1.0, hi: 1.0 };
        assert!(FeatureMap::builtin(BuiltinFeature::Rational, 3, &wide).is_err());
        assert!(FeatureMap::builtin(BuiltinFeature::Arctan, 3, &wide).is_err());
        let plane = StateSpace::ContinuousBox { d: 2, lo: 0.0, hi: 1.0 };
        assert!(FeatureMap::builtin(BuiltinFeature::Cos, 3, &plane).is_err());
    }

    #[test]
    fn arctan_bound_uses_box() {
        let fm = FeatureMap::builtin(BuiltinFeature::Arctan, 50, &StateSpace::ContinuousBox { d: 1, lo: 0.0, hi: 1.0 })
            .unwrap();
        assert_abs_diff_eq!(fm.sup_bound(), 51f64.ln(), epsilon = 1e-15);
        let small =
            FeatureMap::builtin(BuiltinFeature::Arctan, 1, &StateSpace::ContinuousBox { d: 1, lo: 0.0, hi: 1.0 })
                .unwrap();
        assert_abs_diff_eq!(small.sup_bound(), std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn log_density_examples() {
        let fm = FeatureMap::custom("fixed", 2, 2.0, |_, out| {
            out[0] = 2.0;
            out[1] = 0.5;
        })
        .unwrap();
        let x = [0.0];
        assert_eq!(log_density_unnormalized(&fm, array![0.0, 0.0].view(), &x).unwrap(), 0.0);
        assert_eq!(log_density_unnormalized(&fm, array![1.0, 0.0].view(), &x).unwrap(), 2.0);
        assert!(log_density_unnormalized(&fm, array![1.0].view(), &x).is_err());
        let half = FeatureMap::builtin(BuiltinFeature::Rational, 2, &line()).unwrap();
        assert_eq!(log_density_unnormalized(&half, array![1.0, 1.0].view(), &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn log_c_at_zero_counts_states() {
        let fm = FeatureMap::ising(3, false).unwrap();
        let space = StateSpace::DiscreteProduct { d: 3, r: 2 };
        let lc = brute_force_log_c(&fm, Array1::zeros(3).view(), &space).unwrap();
        assert_abs_diff_eq!(lc, 8f64.ln(), epsilon = 1e-14);

        let fm = FeatureMap::custom("sum", 1, 10.0, |x, o| o[0] = x.iter().sum()).unwrap();
        let space = StateSpace::DiscreteProduct { d: 2, r: 3 };
        let lc = brute_force_log_c(&fm, Array1::zeros(1).view(), &space).unwrap();
        assert_abs_diff_eq!(lc, 9f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn ising_log_c_by_direct_summation() {
        let fm = FeatureMap::ising(3, false).unwrap();
        let space = StateSpace::DiscreteProduct { d: 3, r: 2 };
        let theta = array![0.3, -0.7, 1.1];
        let mut naive = 0.0;
        for s1 in [-1.0f64, 1.0] {
            for s2 in [-1.0f64, 1.0] {
                for s3 in [-1.0f64, 1.0] {
                    naive += (0.3 * s1 * s2 - 0.7 * s1 * s3 + 1.1 * s2 * s3).exp();
                }
            }
        }
        let lc = brute_force_log_c(&fm, theta.view(), &space).unwrap();
        assert!((lc.exp() - naive).abs() <= 1e-12 * naive);
    }

    #[test]
    fn moments_at_zero_are_uniform_averages() {
        let fm = FeatureMap::custom("lin", 2, 4.0, |x, o| {
            o[0] = x[0];
            o[1] = x[0] * x[1];
        })
        .unwrap();
        let space = StateSpace::DiscreteProduct { d: 2, r: 3 };
        let (mean, cov) = brute_force_moments(&fm, Array1::zeros(2).view(), &space).unwrap();
        let states: Vec<_> = space.enumerate().unwrap().collect();
        let avg0 = states.iter().map(|x| x[0]).sum::<f64>() / 9.0;
        let avg1 = states.iter().map(|x| x[0] * x[1]).sum::<f64>() / 9.0;
        assert_abs_diff_eq!(mean[0], avg0, epsilon = 1e-14);
        assert_abs_diff_eq!(mean[1], avg1, epsilon = 1e-14);
        assert!(cov[[0, 0]] >= 0.0 && cov[[1, 1]] >= 0.0);
        assert_eq!(cov[[0, 1]], cov[[1, 0]]);
    }

    #[test]
    fn non_enumerable_is_rejected() {
        let fm = FeatureMap::ising(21, false).unwrap();
        let space = StateSpace::DiscreteProduct { d: 21, r: 2 };
        let theta = Array1::zeros(fm.p());
        assert!(matches!(brute_force_log_c(&fm, theta.view(), &space), Err(Error::NotEnumerable { .. })));
        let fm = FeatureMap::builtin(BuiltinFeature::Cos, 2, &line()).unwrap();
        assert!(brute_force_moments(&fm, array![0.0, 0.0].view(), &line()).is_err());
    }

    #[test]
    fn contains_respects_space() {
        let s = StateSpace::DiscreteProduct { d: 2, r: 3 };
        assert!(s.contains(&[0.0, 2.0]));
        assert!(!s.contains(&[0.0, 3.0]));
        assert!(!s.contains(&[0.5, 1.0]));
        assert!(line().contains(&[1.0]));
        assert!(!line().contains(&[1.0001]));
    }
}
