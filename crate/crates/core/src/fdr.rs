//! Selection with false discovery rate control: mirror statistics from one
//! or many data splits, and e-BH on whole-data e-values.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::inference::{infer_all, InferenceContext, InferenceResult};
use crate::likelihood::{McLikelihood, ReferenceSet};
use crate::rng::RngSeed;
use crate::sampler::ObservedSample;
use crate::solver::{fit_with_cv, PenaltyConfig, Tuning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorKind {
    /// `f(u, v) = uv`
    #[default]
    Product,
    /// `f(u, v) = u + v`
    Sum,
}

impl MirrorKind {
    pub fn apply(self, u: f64, v: f64) -> f64 {
        match self {
            MirrorKind::Product => u * v,
            MirrorKind::Sum => u + v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorConfig {
    #[serde(default)]
    pub f_kind: MirrorKind,
    pub q: f64,
    #[serde(default = "one")]
    pub n_splits: usize,
    #[serde(default)]
    pub seed: RngSeed,
}

fn one() -> usize {
    1
}

impl MirrorConfig {
    pub fn new(q: f64) -> Self {
        Self { f_kind: MirrorKind::Product, q, n_splits: 1, seed: RngSeed::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_q(self.q)?;
        if self.n_splits == 0 {
            return Err(Error::InvalidArgument("n_splits must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("q must lie in (0, 1), got {q}")))
    }
}

/// Fit and inference settings shared by every selection procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub tuning: Tuning,
    /// Miscoverage level for the per-coordinate intervals.
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    0.05
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { tuning: Tuning::default(), eta: default_eta() }
    }
}

/// A fitted θ̂, the penalty used and inference on every coordinate.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub theta_hat: Array1<f64>,
    pub config: PenaltyConfig,
    pub inference: Vec<InferenceResult>,
}

/// Tuned elastic-net fit on `obs` followed by inference on all coordinates.
pub fn run_pipeline(
    obs: &ObservedSample,
    reference: &ReferenceSet,
    pipeline: &PipelineConfig,
    null_values: ArrayView1<f64>,
    seed: RngSeed,
) -> Result<PipelineOutput> {
    check_len(reference.p(), null_values.len())?;
    let tuned = fit_with_cv(obs, reference, &pipeline.tuning, seed)?;
    let like = McLikelihood::from_sample(obs, reference)?;
    let ctx = InferenceContext::new(like, obs.n(), tuned.fit.theta_hat.view())?;
    let targets: Vec<usize> = (0..reference.p()).collect();
    let inference = infer_all(&ctx, &targets, Some(null_values), &tuned.config, pipeline.eta)?;
    Ok(PipelineOutput { theta_hat: tuned.fit.theta_hat, config: tuned.config, inference })
}

/// `T_j = (θ̃_j - null_j) · √(n Ĥ_j / 2)`; NaN where `Ĥ_j ≤ 0`.
pub fn normalized_estimates(inference: &[InferenceResult], null_values: ArrayView1<f64>, n: usize) -> Array1<f64> {
    inference
        .iter()
        .map(|r| {
            if r.ci_defined {
                (r.alpha_tilde - null_values[r.target_index]) * (n as f64 * r.h_hat / 2.0).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SplitStatistics {
    pub t1: Array1<f64>,
    pub t2: Array1<f64>,
    /// Row indices of the first half.
    pub first_half: Vec<usize>,
}

/// Random halving of the observed rows; the smaller half comes first.
pub fn random_halves(n: usize, seed: RngSeed) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut seed.rng());
    let mut second = rows.split_off(n / 2);
    rows.sort_unstable();
    second.sort_unstable();
    (rows, second)
}

/// Runs the pipeline on each half and returns the two vectors of normalized
/// estimates, scaled with the full-data `n`.
pub fn split_and_infer(
    obs: &ObservedSample,
    reference: &ReferenceSet,
    pipeline: &PipelineConfig,
    null_values: ArrayView1<f64>,
    seed: RngSeed,
) -> Result<SplitStatistics> {
    let n = obs.n();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("data splitting needs n >= 4, got {n}")));
    }
    check_len(reference.p(), null_values.len())?;
    let (first, second) = random_halves(n, seed);
    let half = |rows: &[usize], tag: u64| -> Result<Array1<f64>> {
        let part = obs.subset(rows)?;
        let out = run_pipeline(&part, reference, pipeline, null_values, seed.derive(tag))?;
        let t = normalized_estimates(&out.inference, null_values, n);
        let undefined = t.iter().filter(|v| !v.is_finite()).count();
        if undefined > 0 {
            log::warn!("{undefined} coordinates have no defined statistic on half {tag}");
        }
        Ok(t)
    };
    let (t1, t2) = rayon::join(|| half(&first, 1), || half(&second, 2));
    Ok(SplitStatistics { t1: t1?, t2: t2?, first_half: first })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `M_j = sgn(T¹_j T²_j) f(|T¹_j|, |T²_j|)`, zero when either input is undefined.
pub fn mirror_statistics(t1: ArrayView1<f64>, t2: ArrayView1<f64>, kind: MirrorKind) -> Result<Array1<f64>> {
    check_len(t1.len(), t2.len())?;
    Ok(t1
        .iter()
        .zip(t2.iter())
        .map(
            |(&a, &b)| {
                if a.is_finite() && b.is_finite() {
                    sign(a) * sign(b) * kind.apply(a.abs(), b.abs())
                } else {
                    0.0
                }
            },
        )
        .collect())
}

/// `#{M < -t} / #{M > t}` with `0/0 = 0` and `x/0 = ∞`.
fn fdp_ratio(neg: usize, pos: usize) -> f64 {
    match (neg, pos) {
        (0, _) => 0.0,
        (_, 0) => f64::INFINITY,
        _ => neg as f64 / pos as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorStatistics {
    pub m_values: Array1<f64>,
    pub t1: Array1<f64>,
    pub t2: Array1<f64>,
    /// `∞` when no cutoff reaches the target level.
    pub tau_q: f64,
    /// `(t, FDP̂(t))` for every candidate `t`, ascending.
    pub fdp_hat_curve: Vec<(f64, f64)>,
}

/// Smallest `t ∈ {|M_j|} ∩ (0, ∞)` with `FDP̂(t) ≤ q`, and the sweep.
pub fn mirror_cutoff(m_values: ArrayView1<f64>, q: f64) -> (f64, Vec<(f64, f64)>) {
    let mut sorted: Vec<f64> = m_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = sorted.iter().map(|v| v.abs()).filter(|&t| t > 0.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let p = sorted.len();
    let curve: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&t| {
            let neg = sorted.partition_point(|&v| v < -t);
            let pos = p - sorted.partition_point(|&v| v <= t);
            (t, fdp_ratio(neg, pos))
        })
        .collect();
    let tau = curve.iter().find(|(_, f)| *f <= q).map_or(f64::INFINITY, |(t, _)| *t);
    (tau, curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    SingleSplit,
    MultiSplit,
    #[serde(rename = "ebh")]
    EBh,
}

impl SelectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::SingleSplit => "single-split",
            SelectionMethod::MultiSplit => "multi-split",
            SelectionMethod::EBh => "ebh",
        }
    }
}

impl std::str::FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-split" => Ok(SelectionMethod::SingleSplit),
            "multi-split" => Ok(SelectionMethod::MultiSplit),
            "ebh" | "e-bh" => Ok(SelectionMethod::EBh),
            other => Err(Error::InvalidArgument(format!("unknown selection method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectionDiagnostics {
    Mirror(MirrorStatistics),
    InclusionRates { rates: Array1<f64>, threshold: f64 },
    EBh(EValueSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Ascending coordinate indices.
    pub selected: Vec<usize>,
    pub method: SelectionMethod,
    pub q: f64,
    pub diagnostics: SelectionDiagnostics,
}

impl SelectionResult {
    /// The per-coordinate statistic the rule thresholds.
    pub fn statistic(&self) -> Array1<f64> {
        match &self.diagnostics {
            SelectionDiagnostics::Mirror(m) => m.m_values.clone(),
            SelectionDiagnostics::InclusionRates { rates, .. } => rates.clone(),
            SelectionDiagnostics::EBh(e) => e.e_values.clone(),
        }
    }
}

/// Single-split rule: `Ŝ = {j : M_j > τ_q}`.
pub fn mirror_select(t1: ArrayView1<f64>, t2: ArrayView1<f64>, cfg: &MirrorConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let m_values = mirror_statistics(t1, t2, cfg.f_kind)?;
    let (tau_q, fdp_hat_curve) = mirror_cutoff(m_values.view(), cfg.q);
    let selected = (0..m_values.len()).filter(|&j| m_values[j] > tau_q).collect();
    Ok(SelectionResult {
        selected,
        method: SelectionMethod::SingleSplit,
        q: cfg.q,
        diagnostics: SelectionDiagnostics::Mirror(MirrorStatistics {
            m_values,
            t1: t1.to_owned(),
            t2: t2.to_owned(),
            tau_q,
            fdp_hat_curve,
        }),
    })
}

/// One data split followed by [`mirror_select`].
pub fn single_split_select(
    obs: &ObservedSample,
    reference: &ReferenceSet,
    pipeline: &PipelineConfig,
    cfg: &MirrorConfig,
    null_values: ArrayView1<f64>,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let st = split_and_infer(obs, reference, pipeline, null_values, cfg.seed)?;
    mirror_select(st.t1.view(), st.t2.view(), cfg)
}

/// `Î_j = K⁻¹ Σ_k 1(j ∈ S_k) / |S_k|`, empty sets contributing nothing.
pub fn inclusion_rates(sets: &[Vec<usize>], p: usize) -> Result<Array1<f64>> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no selection sets given".into()));
    }
    let mut rates = Array1::zeros(p);
    for set in sets {
        if set.is_empty() {
            continue;
        }
        let share = 1.0 / set.len() as f64;
        for &j in set {
            if j >= p {
                return Err(Error::InvalidArgument(format!("index {j} out of range for p = {p}")));
            }
            rates[j] += share;
        }
    }
    rates /= sets.len() as f64;
    Ok(rates)
}

/// Largest `ℓ` with `Î_(1) + … + Î_(ℓ) ≤ q` over ascending rates; selects
/// `{j : Î_j > Î_(ℓ)}`, with threshold 0 when `ℓ = 0`.
pub fn inclusion_rate_select(rates: ArrayView1<f64>, q: f64) -> Result<SelectionResult> {
    check_q(q)?;
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ell = 0;
    let mut acc = 0.0;
    for &r in &sorted {
        acc += r;
        if acc > q {
            break;
        }
        ell += 1;
    }
    let threshold = if ell == 0 { 0.0 } else { sorted[ell - 1] };
    let selected = (0..rates.len()).filter(|&j| rates[j] > threshold).collect();
    Ok(SelectionResult {
        selected,
        method: SelectionMethod::MultiSplit,
        q,
        diagnostics: SelectionDiagnostics::InclusionRates { rates: rates.to_owned(), threshold },
    })
}

/// `cfg.n_splits` independent single-split selections aggregated by inclusion rate.
pub fn multi_split_select(
    obs: &ObservedSample,
    reference: &ReferenceSet,
    pipeline: &PipelineConfig,
    cfg: &MirrorConfig,
    null_values: ArrayView1<f64>,
) -> Result<SelectionResult> {
    cfg.validate()?;
    if cfg.n_splits < 2 {
        return Err(Error::InvalidArgument("multiple splitting needs n_splits >= 2".into()));
    }
    let sets: Vec<Vec<usize>> = (0..cfg.n_splits as u64)
        .into_par_iter()
        .map(|k| {
            let split_cfg = MirrorConfig { seed: cfg.seed.derive(k), n_splits: 1, ..*cfg };
            single_split_select(obs, reference, pipeline, &split_cfg, null_values).map(|r| r.selected)
        })
        .collect::<Result<_>>()?;
    let rates = inclusion_rates(&sets, reference.p())?;
    inclusion_rate_select(rates.view(), cfg.q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EValueSet {
    pub e_values: Array1<f64>,
    /// Indices by descending e-value, ties by ascending index.
    pub order: Vec<usize>,
    pub k_star: usize,
}

/// `E_k = √(π/2) · √(n Ĥ_k) · |θ̃_k - null_k|`, zero where `Ĥ_k ≤ 0`.
pub fn e_values(inference: &[InferenceResult], null_values: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len(inference.len(), null_values.len())?;
    Ok(inference
        .iter()
        .map(|r| {
            if r.ci_defined {
                FRAC_PI_2.sqrt() * (r.n as f64 * r.h_hat).sqrt() * (r.alpha_tilde - null_values[r.target_index]).abs()
            } else {
                0.0
            }
        })
        .collect())
}

/// e-BH: rejects the `k* = max{k : k e_(k) / p ≥ 1/q}` largest e-values.
pub fn ebh_select(e: ArrayView1<f64>, q: f64) -> Result<SelectionResult> {
    check_q(q)?;
    if let Some(bad) = e.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!("e-values must be nonnegative, got {bad}")));
    }
    let p = e.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| e[b].total_cmp(&e[a]).then(a.cmp(&b)));
    let k_star = (1..=p).rev().find(|&k| k as f64 * e[order[k - 1]] / p as f64 >= 1.0 / q).unwrap_or(0);
    let mut selected = order[..k_star].to_vec();
    selected.sort_unstable();
    Ok(SelectionResult {
        selected,
        method: SelectionMethod::EBh,
        q,
        diagnostics: SelectionDiagnostics::EBh(EValueSet { e_values: e.to_owned(), order, k_star }),
    })
}

/// Whole-data pipeline followed by [`ebh_select`].
pub fn ebh_from_data(
    obs: &ObservedSample,
    reference: &ReferenceSet,
    pipeline: &PipelineConfig,
    null_values: ArrayView1<f64>,
    q: f64,
    seed: RngSeed,
) -> Result<SelectionResult> {
    check_q(q)?;
    let out = run_pipeline(obs, reference, pipeline, null_values, seed)?;
    ebh_select(e_values(&out.inference, null_values)?.view(), q)
}

/// Realized FDP and power of `selected` against a known support.
pub fn fdp_and_power(selected: &[usize], truth_support: &[usize]) -> (f64, f64) {
    let false_hits = selected.iter().filter(|j| !truth_support.contains(j)).count();
    let fdp = if selected.is_empty() { 0.0 } else { false_hits as f64 / selected.len() as f64 };
    let power =
        if truth_support.is_empty() { 0.0 } else { (selected.len() - false_hits) as f64 / truth_support.len() as f64 };
    (fdp, power)
}

/// Rows `index, statistic, selected, method, q`.
pub fn write_selection_csv(path: impl AsRef<Path>, result: &SelectionResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "statistic", "selected", "method", "q"])?;
    for (j, s) in result.statistic().iter().enumerate() {
        w.write_record([
            j.to_string(),
            format!("{s:e}"),
            u8::from(result.selected.binary_search(&j).is_ok()).to_string(),
            result.method.as_str().to_string(),
            result.q.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The cutoff sweep for mirror selections, inclusion rates for
/// multiple splitting, and sorted e-values for e-BH.
pub fn write_selection_diagnostics_csv(path: impl AsRef<Path>, result: &SelectionResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match &result.diagnostics {
        SelectionDiagnostics::Mirror(m) => {
            w.write_record(["t", "fdp_hat", "tau_q"])?;
            for (t, f) in &m.fdp_hat_curve {
                w.write_record([format!("{t:e}"), format!("{f:e}"), format!("{:e}", m.tau_q)])?;
            }
        }
        SelectionDiagnostics::InclusionRates { rates, threshold } => {
            w.write_record(["index", "inclusion_rate", "threshold"])?;
            for (j, r) in rates.iter().enumerate() {
                w.write_record([j.to_string(), format!("{r:e}"), format!("{threshold:e}")])?;
            }
        }
        SelectionDiagnostics::EBh(e) => {
            w.write_record(["rank", "index", "e_value", "k_star"])?;
            for (rank, &j) in e.order.iter().enumerate() {
                w.write_record([
                    (rank + 1).to_string(),
                    j.to_string(),
                    format!("{:e}", e.e_values[j]),
                    e.k_star.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg(q: f64) -> MirrorConfig {
        MirrorConfig::new(q)
    }

    #[test]
    fn mirror_hand_example() {
        let m = array![5.0, 4.0, 3.0, -1.0];
        let ones = Array1::ones(4);
        let r = mirror_select(m.view(), ones.view(), &cfg(0.5)).unwrap();
        let SelectionDiagnostics::Mirror(st) = &r.diagnostics else { panic!() };
        assert_eq!(st.tau_q, 1.0);
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert_eq!(st.m_values, m);
    }

    #[test]
    fn mirror_all_negative_selects_nothing() {
        let t1 = array![1.0, 2.0, 3.0];
        let t2 = array![-1.0, -1.0, -2.0];
        let r = mirror_select(t1.view(), t2.view(), &cfg(0.2)).unwrap();
        assert!(r.selected.is_empty());
        let SelectionDiagnostics::Mirror(st) = &r.diagnostics else { panic!() };
        assert_eq!(st.tau_q, 6.0);
        let none = mirror_select(Array1::zeros(3).view(), t2.view(), &cfg(0.2)).unwrap();
        let SelectionDiagnostics::Mirror(st) = &none.diagnostics else { panic!() };
        assert_eq!(st.tau_q, f64::INFINITY);
        assert!(none.selected.is_empty());
    }

    #[test]
    fn mirror_symmetric_pair() {
        let t1 = array![2.0, 2.0];
        let t2 = array![1.5, -1.5];
        let r = mirror_select(t1.view(), t2.view(), &cfg(0.9)).unwrap();
        assert!(r.selected.is_empty());
    }

    #[test]
    fn mirror_kinds_and_undefined() {
        let t1 = array![2.0, -3.0, f64::NAN, 0.0];
        let t2 = array![0.5, 1.0, 1.0, 4.0];
        let prod = mirror_statistics(t1.view(), t2.view(), MirrorKind::Product).unwrap();
        assert_eq!(prod, array![1.0, -3.0, 0.0, 0.0]);
        let sum = mirror_statistics(t1.view(), t2.view(), MirrorKind::Sum).unwrap();
        assert_eq!(sum, array![2.5, -4.0, 0.0, 0.0]);
        assert!(mirror_statistics(t1.view(), array![1.0].view(), MirrorKind::Sum).is_err());
    }

    #[test]
    fn fdp_conventions() {
        assert_eq!(fdp_ratio(0, 0), 0.0);
        assert_eq!(fdp_ratio(2, 0), f64::INFINITY);
        assert_eq!(fdp_ratio(1, 4), 0.25);
    }

    #[test]
    fn inclusion_rate_hand_example() {
        let rates = array![0.5, 0.3, 0.2, 0.0, 0.0];
        let r = inclusion_rate_select(rates.view(), 0.25).unwrap();
        assert_eq!(r.selected, vec![0, 1]);
        let SelectionDiagnostics::InclusionRates { threshold, .. } = r.diagnostics else { panic!() };
        assert_eq!(threshold, 0.2);
    }

    #[test]
    fn inclusion_rates_unanimous_and_empty() {
        let sets = vec![vec![2], vec![2], vec![2]];
        let rates = inclusion_rates(&sets, 4).unwrap();
        assert_eq!(rates, array![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(inclusion_rate_select(rates.view(), 0.1).unwrap().selected, vec![2]);
        let empty = inclusion_rates(&[vec![], vec![]], 3).unwrap();
        assert!(inclusion_rate_select(empty.view(), 0.1).unwrap().selected.is_empty());
        let shared = inclusion_rates(&[vec![0, 1], vec![]], 3).unwrap();
        assert_eq!(shared, array![0.25, 0.25, 0.0]);
        assert!(inclusion_rates(&[vec![5]], 3).is_err());
    }

    #[test]
    fn ebh_hand_example() {
        let e = array![10.0, 9.0, 1.0, 0.1];
        let r = ebh_select(e.view(), 0.5).unwrap();
        assert_eq!(r.selected, vec![0, 1]);
        let SelectionDiagnostics::EBh(set) = &r.diagnostics else { panic!() };
        assert_eq!(set.k_star, 2);
        assert!(set.k_star as f64 * e[set.order[1]] / 4.0 >= 2.0);
    }

    #[test]
    fn ebh_edge_cases() {
        let r = ebh_select(Array1::zeros(5).view(), 0.1).unwrap();
        assert!(r.selected.is_empty());
        assert!(ebh_select(array![1.0].view(), 1.0).is_err());
        assert!(ebh_select(array![-1.0].view(), 0.1).is_err());
        let tied = array![20.0, 20.0, 20.0];
        let r = ebh_select(tied.view(), 0.1).unwrap();
        assert_eq!(r.selected, vec![0, 1, 2]);
        let SelectionDiagnostics::EBh(set) = &r.diagnostics else { panic!() };
        assert_eq!(set.order, vec![0, 1, 2]);
    }

    #[test]
    fn fdp_power_counts() {
        assert_eq!(fdp_and_power(&[], &[1, 2]), (0.0, 0.0));
        assert_eq!(fdp_and_power(&[1, 3], &[1, 2]), (0.5, 0.5));
        assert_eq!(fdp_and_power(&[0], &[]), (1.0, 0.0));
    }

    #[test]
    fn halves_partition_rows() {
        let (a, b) = random_halves(11, RngSeed::new(3, 0));
        assert_eq!(a.len(), 5);
        assert_eq!(b.len(), 6);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(random_halves(11, RngSeed::new(3, 0)).0, a);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [SelectionMethod::SingleSplit, SelectionMethod::MultiSplit, SelectionMethod::EBh] {
            assert_eq!(m.as_str().parse::<SelectionMethod>().unwrap(), m);
        }
        assert!("bh".parse::<SelectionMethod>().is_err());
    }
}
