use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{generate_truth, plot_coverage_svg, ExperimentConfig, ExperimentKind, Truth};
use crate::error::Result;
use crate::fdr::{ebh_from_data, fdp_and_power, multi_split_select, single_split_select, MirrorConfig, PipelineConfig};
use crate::inference::{infer_coordinate, InferenceContext};
use crate::likelihood::{McLikelihood, ReferenceSet};
use crate::rng::RngSeed;
use crate::sampler::{metropolis_sample, sample_reference_gaussian, ObservedSample};
use crate::solver::fit_with_cv;

/// One metric from one replication of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub replication_id: usize,
    pub metric_name: String,
    pub metric_value: f64,
    pub seed_used: String,
}

/// Coverage and calibration summary for one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    /// Replications whose interval was defined.
    pub defined: usize,
    pub coverage: f64,
    pub rejection_rate: f64,
    pub ks_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub p: usize,
    pub metric: String,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub summary: Vec<SummaryRow>,
    pub coverage: Vec<CoverageRow>,
}

impl ExperimentOutput {
    /// Mean of `metric` in cell `(n, p)`.
    pub fn mean(&self, n: usize, p: usize, metric: &str) -> Option<f64> {
        self.summary.iter().find(|r| r.n == n && r.p == p && r.metric == metric).map(|r| r.mean)
    }

    /// All values of `metric` in cell `(n, p)`, by replication.
    pub fn values(&self, n: usize, p: usize, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.n == n && r.p == p && r.metric_name == metric)
            .map(|r| r.metric_value)
            .collect()
    }
}

/// Simulated inputs of one replication.
#[derive(Debug, Clone)]
pub struct ReplicationData {
    pub truth: Truth,
    pub obs: ObservedSample,
    pub reference: ReferenceSet,
    pub acceptance_rate: f64,
}

/// Draws the truth, the Metropolis sample and the Gaussian reference chain
/// for one replication. Reproducible from `seed` alone.
pub fn run_replication(cfg: &ExperimentConfig, n: usize, p: usize, seed: RngSeed) -> Result<ReplicationData> {
    let truth = if cfg.global_null {
        Truth { theta: Array1::zeros(p), support: Vec::new() }
    } else {
        generate_truth(p, cfg.sparsity.prob, seed.derive(0))?
    };
    let fm = cfg.feature_map(p)?;
    let space = cfg.space();
    let (obs, diag) = metropolis_sample(&fm, &space, truth.theta.view(), n, &cfg.sampler, seed.derive(1))?;
    let chain = sample_reference_gaussian(cfg.m_rule.m_for(n), 1, seed.derive(2))?;
    let reference = ReferenceSet::new(&fm, &chain, &space)?;
    Ok(ReplicationData { truth, obs, reference, acceptance_rate: diag.acceptance_rate })
}

fn pipeline(cfg: &ExperimentConfig) -> PipelineConfig {
    PipelineConfig { tuning: cfg.cv.clone(), eta: cfg.eta }
}

fn l1_metrics(cfg: &ExperimentConfig, data: &ReplicationData, seed: RngSeed) -> Result<Vec<(&'static str, f64)>> {
    let tuned = fit_with_cv(&data.obs, &data.reference, &cfg.cv, seed.derive(3))?;
    let p = data.truth.theta.len() as f64;
    let l1 = (&tuned.fit.theta_hat - &data.truth.theta).mapv(f64::abs).sum() / p;
    Ok(vec![
        ("l1_error", l1),
        ("support_size", tuned.fit.support_size as f64),
        ("lambda1", tuned.config.lambda1),
        ("lambda2", tuned.config.lambda2),
        ("converged", f64::from(u8::from(tuned.fit.converged))),
        ("acceptance_rate", data.acceptance_rate),
    ])
}

fn coverage_metrics(cfg: &ExperimentConfig, data: &ReplicationData, seed: RngSeed) -> Result<Vec<(&'static str, f64)>> {
    let tuned = fit_with_cv(&data.obs, &data.reference, &cfg.cv, seed.derive(3))?;
    let like = McLikelihood::from_sample(&data.obs, &data.reference)?;
    let ctx = InferenceContext::new(like, data.obs.n(), tuned.fit.theta_hat.view())?;
    let t = cfg.target_index;
    let truth = data.truth.theta[t];
    let r = infer_coordinate(&ctx, t, truth, &tuned.config, cfg.eta)?;
    let mut out = vec![
        ("theta_star", truth),
        ("alpha_hat", r.alpha_hat),
        ("alpha_tilde", r.alpha_tilde),
        ("h_hat", r.h_hat),
        ("s_stat", r.s_stat),
        ("p_value", r.p_value),
        ("rejected", f64::from(u8::from(r.p_value < cfg.eta))),
        ("ci_defined", f64::from(u8::from(r.ci_defined))),
    ];
    if r.ci_defined {
        out.push(("covered", f64::from(u8::from(r.ci_lo <= truth && truth <= r.ci_hi))));
    }
    Ok(out)
}

fn fdr_metrics(cfg: &ExperimentConfig, data: &ReplicationData, seed: RngSeed) -> Result<Vec<(&'static str, f64)>> {
    let pipe = pipeline(cfg);
    let p = data.truth.theta.len();
    let null = Array1::zeros(p);
    let mirror = MirrorConfig { seed: seed.derive(4), ..MirrorConfig::new(cfg.q) };
    let single_sel = single_split_select(&data.obs, &data.reference, &pipe, &mirror, null.view())?;
    let ebh_sel = ebh_from_data(&data.obs, &data.reference, &pipe, null.view(), cfg.q, seed.derive(3))?;
    let (fdp_s, pow_s) = fdp_and_power(&single_sel.selected, &data.truth.support);
    let (fdp_e, pow_e) = fdp_and_power(&ebh_sel.selected, &data.truth.support);
    let mut out = vec![
        ("fdp_single_split", fdp_s),
        ("power_single_split", pow_s),
        ("discoveries_single_split", single_sel.selected.len() as f64),
        ("fdp_ebh", fdp_e),
        ("power_ebh", pow_e),
        ("discoveries_ebh", ebh_sel.selected.len() as f64),
        ("support_size", data.truth.support.len() as f64),
    ];
    if cfg.multi_splits >= 2 {
        let multi = MirrorConfig { n_splits: cfg.multi_splits, seed: seed.derive(5), ..MirrorConfig::new(cfg.q) };
        let multi_sel = multi_split_select(&data.obs, &data.reference, &pipe, &multi, null.view())?;
        let (fdp_m, pow_m) = fdp_and_power(&multi_sel.selected, &data.truth.support);
        out.extend([
            ("fdp_multi_split", fdp_m),
            ("power_multi_split", pow_m),
            ("discoveries_multi_split", multi_sel.selected.len() as f64),
        ]);
    }
    Ok(out)
}

type MetricFn = fn(&ExperimentConfig, &ReplicationData, RngSeed) -> Result<Vec<(&'static str, f64)>>;

fn run_grid(cfg: &ExperimentConfig, kind: ExperimentKind, metrics: MetricFn) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, usize)> =
        cfg.cells().into_iter().flat_map(|(n, p)| (0..cfg.replications).map(move |r| (n, p, r))).collect();
    let rows: Vec<Vec<ExperimentRecord>> = jobs
        .par_iter()
        .map(|&(n, p, rep)| {
            let seed = cfg.replication_seed(n, p, rep);
            let outcome = run_replication(cfg, n, p, seed).and_then(|data| metrics(cfg, &data, seed));
            let values = outcome.unwrap_or_else(|e| {
                log::warn!("{} cell n={n} p={p} replication {rep} (seed {seed}) failed: {e}", kind.name());
                vec![("failed", 1.0)]
            });
            values
                .into_iter()
                .map(|(name, value)| ExperimentRecord {
                    experiment: kind.name().to_string(),
                    scenario: cfg.scenario.name().to_string(),
                    n,
                    p,
                    m: cfg.m_rule.m_for(n),
                    replication_id: rep,
                    metric_name: name.to_string(),
                    metric_value: value,
                    seed_used: seed.to_string(),
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn summarize(cfg: &ExperimentConfig, records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for (n, p) in cfg.cells() {
        let mut by_metric: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for r in records.iter().filter(|r| r.n == n && r.p == p) {
            let e = by_metric.entry(r.metric_name.as_str()).or_insert((0.0, 0));
            e.0 += r.metric_value;
            e.1 += 1;
        }
        for (metric, (sum, count)) in by_metric {
            out.push(SummaryRow { n, p, metric: metric.to_string(), mean: sum / count as f64, count });
        }
    }
    out
}

/// `sup_x |F_N(x) - Φ(x)|` for the empirical distribution of `samples`.
pub fn ks_distance_normal(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let normal = Normal::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn coverage_rows(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Vec<CoverageRow> {
    cfg.cells()
        .into_iter()
        .map(|(n, p)| {
            let covered = out.values(n, p, "covered");
            let s = out.values(n, p, "s_stat");
            let rejected = out.values(n, p, "rejected");
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            CoverageRow {
                n,
                p,
                replications: s.len(),
                defined: covered.len(),
                coverage: mean(&covered),
                rejection_rate: mean(&rejected),
                ks_distance: ks_distance_normal(&s),
            }
        })
        .collect()
}

fn finish(cfg: &ExperimentConfig, records: Vec<ExperimentRecord>) -> ExperimentOutput {
    let summary = summarize(cfg, &records);
    let mut out = ExperimentOutput { records, summary, coverage: Vec::new() };
    if cfg.experiment == ExperimentKind::Coverage {
        out.coverage = coverage_rows(cfg, &out);
    }
    out
}

/// Average `p⁻¹‖θ̂ - θ*‖₁` of the cross-validated fit in every cell.
pub fn run_l1_error_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cfg = ExperimentConfig { experiment: ExperimentKind::L1Error, ..cfg.clone() };
    let records = run_grid(&cfg, ExperimentKind::L1Error, l1_metrics)?;
    Ok(finish(&cfg, records))
}

/// Interval coverage of `θ*_target` and calibration of the score test of
/// `α = θ*_target` in every cell.
pub fn run_coverage_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cfg = ExperimentConfig { experiment: ExperimentKind::Coverage, ..cfg.clone() };
    let records = run_grid(&cfg, ExperimentKind::Coverage, coverage_metrics)?;
    Ok(finish(&cfg, records))
}

/// Realized FDP and power of single-split mirror selection and e-BH (and
/// multiple splitting when configured) against the known support.
pub fn run_fdr_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cfg = ExperimentConfig { experiment: ExperimentKind::Fdr, ..cfg.clone() };
    let records = run_grid(&cfg, ExperimentKind::Fdr, fdr_metrics)?;
    Ok(finish(&cfg, records))
}

pub fn write_records_csv(path: impl AsRef<Path>, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows by `n`, columns by `p`, the headline mean(s) in each cell.
fn write_table(path: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    let metrics: &[&str] = match cfg.experiment {
        ExperimentKind::L1Error => &["l1_error"],
        ExperimentKind::Coverage => &["covered"],
        ExperimentKind::Fdr => &["fdp_single_split", "fdp_ebh"],
    };
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["n".to_string()];
    header.extend(cfg.p_grid.iter().map(|p| format!("p={p}")));
    w.write_record(&header)?;
    for &n in &cfg.n_grid {
        let mut row = vec![n.to_string()];
        for &p in &cfg.p_grid {
            let cell: Vec<String> = metrics
                .iter()
                .map(|m| out.mean(n, p, m).map_or_else(|| "NA".to_string(), |v| format!("{v:.4}")))
                .collect();
            row.push(if cell.len() == 1 { cell[0].clone() } else { format!("({})", cell.join(", ")) });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the configured experiment and writes `records.csv`, `summary.csv`
/// and `table.csv` (plus `coverage.csv` and `coverage.svg` for coverage
/// runs) into `output_dir`. Returns the written paths.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentOutput, Vec<PathBuf>)> {
    let out = match cfg.experiment {
        ExperimentKind::L1Error => run_l1_error_experiment(cfg)?,
        ExperimentKind::Coverage => run_coverage_experiment(cfg)?,
        ExperimentKind::Fdr => run_fdr_experiment(cfg)?,
    };
    fs::create_dir_all(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    let mut written = vec![dir.join("records.csv"), dir.join("summary.csv"), dir.join("table.csv")];
    write_records_csv(&written[0], &out.records)?;
    write_rows(&written[1], &out.summary)?;
    write_table(&written[2], cfg, &out)?;
    if cfg.experiment == ExperimentKind::Coverage {
        let curve = dir.join("coverage.csv");
        write_rows(&curve, &out.coverage)?;
        written.push(curve);
        if cfg.plot {
            let svg = dir.join("coverage.svg");
            match plot_coverage_svg(&svg, &out.coverage, 1.0 - cfg.eta) {
                Ok(()) => written.push(svg),
                Err(e) => log::warn!("coverage plot skipped: {e}"),
            }
        }
    }
    Ok((out, written))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Scenario;
    use crate::solver::{PenaltyConfig, Tuning};

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind, Scenario::Phi1, vec![50], vec![5], 2);
        cfg.cv = Tuning::CrossValidated { folds: 3, base: PenaltyConfig::default(), grid: Vec::new() };
        cfg.sampler.burn_in = 200;
        cfg
    }

    #[test]
    fn smoke_l1_cell() {
        let out = run_l1_error_experiment(&small(ExperimentKind::L1Error)).unwrap();
        let err = out.mean(50, 5, "l1_error").unwrap();
        assert!(err.is_finite() && err >= 0.0);
        assert!(out.records.iter().all(|r| r.metric_name != "failed"));
        assert_eq!(out.values(50, 5, "l1_error").len(), 2);
    }

    #[test]
    fn replication_is_replayable() {
        let cfg = small(ExperimentKind::L1Error);
        let seed = cfg.replication_seed(50, 5, 1);
        let a = run_replication(&cfg, 50, 5, seed).unwrap();
        let b = run_replication(&cfg, 50, 5, seed).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.obs.draws(), b.obs.draws());
        assert_eq!(a.reference.features(), b.reference.features());
    }

    #[test]
    fn ks_distance_examples() {
        assert!(ks_distance_normal(&[]).is_nan());
        assert!((ks_distance_normal(&[0.0]) - 0.5).abs() < 1e-12);
        let grid: Vec<f64> = (1..2000).map(|i| Normal::standard().inverse_cdf(i as f64 / 2000.0)).collect();
        assert!(ks_distance_normal(&grid) < 1e-3);
    }

    #[test]
    fn global_null_fdr_cell_runs() {
        let mut cfg = small(ExperimentKind::Fdr);
        cfg.global_null = true;
        cfg.n_grid = vec![60];
        let out = run_fdr_experiment(&cfg).unwrap();
        assert_eq!(out.values(60, 5, "support_size"), vec![0.0, 0.0]);
        for fdp in out.values(60, 5, "fdp_ebh") {
            assert!(fdp == 0.0 || fdp == 1.0);
        }
    }
}
