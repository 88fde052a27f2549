//! Reference chains `Y_1..Y_m` with known density `h`, and observed samples
//! drawn from `p(· | θ*)` by random-walk Metropolis.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{FeatureMap, StateSpace};
use crate::rng::RngSeed;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    IidGaussian,
    IidUniform,
    MarkovKernel,
    /// Loaded from a file; provenance unknown.
    External,
}

#[derive(Debug, Clone)]
pub struct ReferenceChain {
    draws: Vec<Vec<f64>>,
    log_h: Vec<f64>,
    kind: ReferenceKind,
}

impl ReferenceChain {
    pub fn new(draws: Vec<Vec<f64>>, log_h: Vec<f64>, kind: ReferenceKind) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidArgument("reference chain needs m >= 1 draws".into()));
        }
        check_len(draws.len(), log_h.len())?;
        if let Some(i) = log_h.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("log_h[{i}] is not finite")));
        }
        let d = draws[0].len();
        if let Some(bad) = draws.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
        }
        Ok(Self { draws, log_h, kind })
    }

    pub fn draws(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn log_h(&self) -> &[f64] {
        &self.log_h
    }

    pub fn kind(&self) -> ReferenceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_draws_csv(path, &self.draws, Some(&self.log_h))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let (draws, log_h) = read_draws_csv(path)?;
        let log_h = log_h.ok_or_else(|| Error::InvalidArgument("reference CSV needs a log_h column".into()))?;
        Self::new(draws, log_h, ReferenceKind::External)
    }
}

/// Standard-normal log density of a d-vector.
pub fn std_normal_log_density(x: &[f64]) -> f64 {
    -(x.len() as f64) * HALF_LOG_TWO_PI - 0.5 * x.iter().map(|v| v * v).sum::<f64>()
}

/// `m` i.i.d. draws from `N(0, I_d)`.
pub fn sample_reference_gaussian(m: usize, d: usize, seed: RngSeed) -> Result<ReferenceChain> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidArgument("need m >= 1 and d >= 1".into()));
    }
    let mut rng = seed.rng();
    let draws: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let log_h = draws.iter().map(|x| std_normal_log_density(x)).collect();
    ReferenceChain::new(draws, log_h, ReferenceKind::IidGaussian)
}

fn discrete_dims(space: &StateSpace) -> Result<(usize, usize)> {
    space.validate()?;
    match *space {
        StateSpace::DiscreteProduct { d, r } => Ok((d, r)),
        StateSpace::ContinuousBox { .. } => {
            Err(Error::InvalidArgument("uniform reference draws are only defined on discrete spaces".into()))
        }
    }
}

/// `m` i.i.d. uniform draws on a discrete product space, `h = r^{-d}`.
pub fn sample_reference_uniform(space: &StateSpace, m: usize, seed: RngSeed) -> Result<ReferenceChain> {
    let (d, r) = discrete_dims(space)?;
    if m == 0 {
        return Err(Error::InvalidArgument("need m >= 1".into()));
    }
    let mut rng = seed.rng();
    let log_h = -(d as f64) * (r as f64).ln();
    let draws = (0..m).map(|_| (0..d).map(|_| rng.random_range(0..r) as f64).collect()).collect();
    ReferenceChain::new(draws, vec![log_h; m], ReferenceKind::IidUniform)
}

/// A single-site resampling chain on a discrete product space. Its stationary
/// law is uniform, so `h = r^{-d}`; the chain starts from a uniform draw.
pub fn sample_reference_markov(space: &StateSpace, m: usize, seed: RngSeed) -> Result<ReferenceChain> {
    let (d, r) = discrete_dims(space)?;
    if m == 0 {
        return Err(Error::InvalidArgument("need m >= 1".into()));
    }
    let mut rng = seed.rng();
    let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(0..r) as f64).collect();
    let mut draws = Vec::with_capacity(m);
    for _ in 0..m {
        draws.push(x.clone());
        let v = rng.random_range(0..d);
        x[v] = rng.random_range(0..r) as f64;
    }
    let log_h = -(d as f64) * (r as f64).ln();
    ReferenceChain::new(draws, vec![log_h; m], ReferenceKind::MarkovKernel)
}

/// Observed data `X_1..X_n` with cached features.
#[derive(Debug, Clone)]
pub struct ObservedSample {
    draws: Vec<Vec<f64>>,
    features: Array2<f64>,
    mean_features: Array1<f64>,
}

impl ObservedSample {
    pub fn from_draws(fm: &FeatureMap, draws: Vec<Vec<f64>>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidArgument("observed sample needs n >= 1 draws".into()));
        }
        let features = fm.eval_rows(&draws);
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("feature map produced a non-finite value".into()));
        }
        let mean_features = features.mean_axis(Axis(0)).expect("n >= 1");
        Ok(Self { draws, features, mean_features })
    }

    pub fn n(&self) -> usize {
        self.draws.len()
    }

    pub fn draws(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn mean_features(&self) -> ArrayView1<'_, f64> {
        self.mean_features.view()
    }

    /// The rows at `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::InvalidArgument("empty subset".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidArgument(format!("row {bad} out of range")));
        }
        let draws = idx.iter().map(|&i| self.draws[i].clone()).collect();
        let features = self.features.select(Axis(0), idx);
        let mean_features = features.mean_axis(Axis(0)).expect("nonempty");
        Ok(Self { draws, features, mean_features })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_draws_csv(path, &self.draws, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetropolisConfig {
    pub proposal_sd: f64,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for MetropolisConfig {
    fn default() -> Self {
        Self { proposal_sd: 1.0, burn_in: 1000, thin: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetropolisDiagnostics {
    /// Accepted fraction of post-burn-in proposals.
    pub acceptance_rate: f64,
    /// Post-burn-in proposals that fell inside the support.
    pub proposals_in_support: usize,
    pub accepted: usize,
    pub steps: usize,
}

/// Random-walk Metropolis targeting `p(· | θ*)` on `space`.
///
/// Continuous boxes use Gaussian increments with standard deviation
/// `proposal_sd` (proposals leaving the box are rejected); discrete spaces
/// pick a vertex uniformly and propose a uniformly chosen different level.
/// After `burn_in` steps every `thin`-th state is kept until `n` are collected.
pub fn metropolis_sample(
    fm: &FeatureMap,
    space: &StateSpace,
    theta_star: ArrayView1<f64>,
    n: usize,
    cfg: &MetropolisConfig,
    seed: RngSeed,
) -> Result<(ObservedSample, MetropolisDiagnostics)> {
    space.validate()?;
    check_len(fm.p(), theta_star.len())?;
    if n == 0 {
        return Err(Error::InvalidArgument("need n >= 1".into()));
    }
    if cfg.proposal_sd.is_nan() || cfg.proposal_sd <= 0.0 || cfg.thin == 0 {
        return Err(Error::InvalidArgument("need proposal_sd > 0 and thin >= 1".into()));
    }
    let mut rng = seed.rng();
    let d = space.dim();
    let mut x: Vec<f64> = match *space {
        StateSpace::ContinuousBox { lo, hi, .. } => (0..d).map(|_| rng.random_range(lo..=hi)).collect(),
        StateSpace::DiscreteProduct { r, .. } => (0..d).map(|_| rng.random_range(0..r) as f64).collect(),
    };
    let mut phi = vec![0.0; fm.p()];
    let energy = |x: &[f64], phi: &mut [f64]| -> f64 {
        fm.eval_into(x, phi);
        phi.iter().zip(theta_star.iter()).map(|(a, b)| a * b).sum()
    };
    let mut e_cur = energy(&x, &mut phi);
    let mut proposal = x.clone();
    let total = cfg.burn_in + n * cfg.thin;
    let mut draws = Vec::with_capacity(n);
    let (mut accepted, mut in_support) = (0usize, 0usize);
    for step in 0..total {
        proposal.copy_from_slice(&x);
        match *space {
            StateSpace::ContinuousBox { .. } => {
                for v in proposal.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += cfg.proposal_sd * z;
                }
            }
            StateSpace::DiscreteProduct { r, .. } => {
                let site = rng.random_range(0..d);
                let shift = rng.random_range(1..r);
                proposal[site] = ((proposal[site] as usize + shift) % r) as f64;
            }
        }
        let counted = step >= cfg.burn_in;
        if space.contains(&proposal) {
            if counted {
                in_support += 1;
            }
            let e_new = energy(&proposal, &mut phi);
            let log_u: f64 = rng.random::<f64>().ln();
            if log_u < e_new - e_cur {
                std::mem::swap(&mut x, &mut proposal);
                e_cur = e_new;
                if counted {
                    accepted += 1;
                }
            }
        }
        if counted && (step - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
            draws.push(x.clone());
        }
    }
    let steps = total - cfg.burn_in;
    let acceptance_rate = accepted as f64 / steps as f64;
    if !(0.05..=0.95).contains(&acceptance_rate) {
        log::warn!(
            "metropolis acceptance rate {acceptance_rate:.3} is outside [0.05, 0.95]; consider tuning proposal_sd"
        );
    }
    let sample = ObservedSample::from_draws(fm, draws)?;
    Ok((sample, MetropolisDiagnostics { acceptance_rate, proposals_in_support: in_support, accepted, steps }))
}

/// Writes one row per draw: `x0..x{d-1}` and, when given, `log_h`.
pub fn write_draws_csv(path: impl AsRef<Path>, draws: &[Vec<f64>], log_h: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = draws.first().map_or(0, |x| x.len());
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    if log_h.is_some() {
        header.push("log_h".into());
    }
    w.write_record(&header)?;
    for (i, x) in draws.iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
        if let Some(lh) = log_h {
            row.push(format!("{:e}", lh[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Row-major states, one `Vec` per draw.
pub type Draws = Vec<Vec<f64>>;

/// Inverse of [`write_draws_csv`]: columns named `x*` are state coordinates,
/// an optional `log_h` column is returned separately.
pub fn read_draws_csv(path: impl AsRef<Path>) -> Result<(Draws, Option<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let coord_cols: Vec<usize> =
        header.iter().enumerate().filter(|(_, h)| h.starts_with('x')).map(|(i, _)| i).collect();
    let log_h_col = header.iter().position(|h| h == "log_h");
    if coord_cols.is_empty() {
        return Err(Error::InvalidArgument("draws CSV has no x* columns".into()));
    }
    let parse = |s: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("cannot parse '{s}' as a number")))
    };
    let mut draws = Vec::new();
    let mut log_h = log_h_col.map(|_| Vec::new());
    for rec in r.records() {
        let rec = rec?;
        draws.push(coord_cols.iter().map(|&c| parse(&rec[c])).collect::<Result<Vec<_>>>()?);
        if let (Some(c), Some(v)) = (log_h_col, log_h.as_mut()) {
            v.push(parse(&rec[c])?);
        }
    }
    Ok((draws, log_h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{brute_force_probabilities, BuiltinFeature};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn gaussian_reference_log_h() {
        assert_abs_diff_eq!(std_normal_log_density(&[0.0]), -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-15);
        let chain = sample_reference_gaussian(100, 2, RngSeed::new(1, 0)).unwrap();
        for (x, lh) in chain.draws().iter().zip(chain.log_h()) {
            let direct =
                x.iter().map(|v| (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt()).product::<f64>().ln();
            assert_abs_diff_eq!(*lh, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_reference_deterministic() {
        let a = sample_reference_gaussian(50, 1, RngSeed::new(9, 2)).unwrap();
        let b = sample_reference_gaussian(50, 1, RngSeed::new(9, 2)).unwrap();
        assert_eq!(a.draws(), b.draws());
        assert!(sample_reference_gaussian(0, 1, RngSeed::default()).is_err());
    }

    #[test]
    fn gaussian_reference_mean_clt() {
        let m = 1_000_000;
        let chain = sample_reference_gaussian(m, 1, RngSeed::new(3, 0)).unwrap();
        let mean = chain.draws().iter().map(|x| x[0]).sum::<f64>() / m as f64;
        assert!(mean.abs() < 4.0 / (m as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn flat_target_accepts_every_in_box_proposal() {
        let space = StateSpace::ContinuousBox { d: 1, lo: -1.0, hi: 1.0 };
        let fm = FeatureMap::builtin(BuiltinFeature::Cos, 4, &space).unwrap();
        let cfg = MetropolisConfig { proposal_sd: 0.5, burn_in: 100, thin: 2 };
        let (sample, diag) =
            metropolis_sample(&fm, &space, Array1::zeros(4).view(), 500, &cfg, RngSeed::new(4, 0)).unwrap();
        assert_eq!(sample.n(), 500);
        assert_eq!(diag.accepted, diag.proposals_in_support);
        assert!(sample.draws().iter().all(|x| space.contains(x)));
    }

    #[test]
    fn metropolis_is_deterministic() {
        let space = StateSpace::ContinuousBox { d: 1, lo: -1.0, hi: 1.0 };
        let fm = FeatureMap::builtin(BuiltinFeature::Cos, 3, &space).unwrap();
        let theta = array![0.5, 0.0, -0.3];
        let cfg = MetropolisConfig::default();
        let (a, _) = metropolis_sample(&fm, &space, theta.view(), 100, &cfg, RngSeed::new(5, 1)).unwrap();
        let (b, _) = metropolis_sample(&fm, &space, theta.view(), 100, &cfg, RngSeed::new(5, 1)).unwrap();
        assert_eq!(a.draws(), b.draws());
        assert_eq!(a.features(), b.features());
    }

    #[test]
    fn metropolis_matches_enumeration_on_small_ising() {
        let space = StateSpace::DiscreteProduct { d: 2, r: 2 };
        let fm = FeatureMap::ising(2, true).unwrap();
        let theta = array![0.4, -0.2, 0.8];
        let probs = brute_force_probabilities(&fm, theta.view(), &space).unwrap();
        let cfg = MetropolisConfig { proposal_sd: 1.0, burn_in: 1000, thin: 1 };
        let n = 1_000_000;
        let (sample, _) = metropolis_sample(&fm, &space, theta.view(), n, &cfg, RngSeed::new(11, 0)).unwrap();
        let mut counts = [0usize; 4];
        for x in sample.draws() {
            counts[x[0] as usize + 2 * x[1] as usize] += 1;
        }
        let mut tv = 0.0;
        for k in 0..4 {
            let freq = counts[k] as f64 / n as f64;
            assert!((freq - probs[k]).abs() < 0.01, "state {k}: {freq} vs {}", probs[k]);
            tv += 0.5 * (freq - probs[k]).abs();
        }
        assert!(tv < 0.02);
    }

    #[test]
    fn observed_sample_mean_and_subset() {
        let space = StateSpace::ContinuousBox { d: 1, lo: 0.0, hi: 1.0 };
        let fm = FeatureMap::builtin(BuiltinFeature::Rational, 3, &space).unwrap();
        let draws = vec![vec![0.1], vec![0.5], vec![0.9], vec![0.3]];
        let obs = ObservedSample::from_draws(&fm, draws).unwrap();
        let direct = obs.features().sum_axis(Axis(0)) / 4.0;
        for (a, b) in obs.mean_features().iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let sub = obs.subset(&[2, 0]).unwrap();
        assert_eq!(sub.draws(), &[vec![0.9], vec![0.1]]);
        assert!(obs.subset(&[7]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.csv");
        let chain = sample_reference_gaussian(20, 2, RngSeed::new(1, 1)).unwrap();
        chain.write_csv(&path).unwrap();
        let back = ReferenceChain::read_csv(&path).unwrap();
        assert_eq!(back.draws(), chain.draws());
        assert_eq!(back.log_h(), chain.log_h());
    }

    #[test]
    fn discrete_references_have_uniform_density() {
        let space = StateSpace::DiscreteProduct { d: 3, r: 2 };
        let a = sample_reference_uniform(&space, 10, RngSeed::new(1, 0)).unwrap();
        let b = sample_reference_markov(&space, 10, RngSeed::new(1, 0)).unwrap();
        for lh in a.log_h().iter().chain(b.log_h()) {
            assert_abs_diff_eq!(*lh, -(8f64.ln()), epsilon = 1e-15);
        }
        assert!(a.draws().iter().chain(b.draws()).all(|x| space.contains(x)));
    }
}
