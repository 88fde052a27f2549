//! Config-driven simulation studies: ℓ₁ estimation error, interval coverage
//! and score-test calibration, and realized FDP of the selection rules.

mod experiments;
mod plot;

use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BuiltinFeature, FeatureMap, StateSpace};
use crate::rng::RngSeed;
use crate::sampler::MetropolisConfig;
use crate::solver::Tuning;

pub use experiments::{
    ks_distance_normal, run_coverage_experiment, run_experiment, run_fdr_experiment, run_l1_error_experiment,
    run_replication, write_records_csv, CoverageRow, ExperimentOutput, ExperimentRecord, ReplicationData,
};
pub use plot::plot_coverage_svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Phi1,
    Phi2,
    Phi3,
}

impl Scenario {
    pub fn feature(self) -> BuiltinFeature {
        match self {
            Scenario::Phi1 => BuiltinFeature::Cos,
            Scenario::Phi2 => BuiltinFeature::Arctan,
            Scenario::Phi3 => BuiltinFeature::Rational,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Phi1 => "phi1",
            Scenario::Phi2 => "phi2",
            Scenario::Phi3 => "phi3",
        }
    }

    /// `[-1, 1]` for the cosine map, `[0, 1]` for the two maps with a
    /// singularity on the negative axis.
    pub fn default_box(self) -> (f64, f64) {
        match self {
            Scenario::Phi1 => (-1.0, 1.0),
            Scenario::Phi2 | Scenario::Phi3 => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    L1Error,
    Coverage,
    Fdr,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::L1Error => "l1_error",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Fdr => "fdr",
        }
    }
}

/// Reference chain length as a function of the observed sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MRule {
    EqualToN,
    Fixed { m: usize },
}

impl MRule {
    pub fn m_for(self, n: usize) -> usize {
        match self {
            MRule::EqualToN => n,
            MRule::Fixed { m } => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityRule {
    pub prob: f64,
}

impl Default for SparsityRule {
    fn default() -> Self {
        Self { prob: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub scenario: Scenario,
    pub n_grid: Vec<usize>,
    pub p_grid: Vec<usize>,
    #[serde(default = "default_m_rule")]
    pub m_rule: MRule,
    pub replications: usize,
    #[serde(default = "default_level")]
    pub q: f64,
    #[serde(default = "default_level")]
    pub eta: f64,
    #[serde(default)]
    pub sparsity: SparsityRule,
    /// All-zero truth instead of a sparse random one.
    #[serde(default)]
    pub global_null: bool,
    /// Coordinate studied by the coverage experiment.
    #[serde(default)]
    pub target_index: usize,
    #[serde(default)]
    pub seed: RngSeed,
    #[serde(default)]
    pub cv: Tuning,
    #[serde(default)]
    pub sampler: MetropolisConfig,
    /// Overrides the scenario's default sampling box.
    #[serde(default, rename = "box")]
    pub box_bounds: Option<BoxBounds>,
    /// Splits for the multiple-split rule in FDR runs; 0 skips it.
    #[serde(default)]
    pub multi_splits: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub plot: bool,
}

fn default_m_rule() -> MRule {
    MRule::EqualToN
}

fn default_level() -> f64 {
    0.05
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("mcmle-out")
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// A small configuration with the given grids and defaults elsewhere.
    pub fn new(
        experiment: ExperimentKind,
        scenario: Scenario,
        n_grid: Vec<usize>,
        p_grid: Vec<usize>,
        replications: usize,
    ) -> Self {
        Self {
            experiment,
            scenario,
            n_grid,
            p_grid,
            m_rule: MRule::EqualToN,
            replications,
            q: default_level(),
            eta: default_level(),
            sparsity: SparsityRule::default(),
            global_null: false,
            target_index: 0,
            seed: RngSeed::default(),
            cv: Tuning::default(),
            sampler: MetropolisConfig::default(),
            box_bounds: None,
            multi_splits: 0,
            output_dir: default_output_dir(),
            plot: true,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_grid.is_empty() || self.p_grid.is_empty() {
            return bad("n_grid and p_grid must be nonempty".into());
        }
        if self.n_grid.contains(&0) || self.p_grid.contains(&0) {
            return bad("grid entries must be positive".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.q > 0.0 && self.q < 1.0) || !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("q and eta must lie in (0, 1), got q={}, eta={}", self.q, self.eta));
        }
        if !(self.sparsity.prob > 0.0 && self.sparsity.prob <= 1.0) {
            return bad(format!("sparsity.prob must lie in (0, 1], got {}", self.sparsity.prob));
        }
        if let MRule::Fixed { m: 0 } = self.m_rule {
            return bad("fixed m must be positive".into());
        }
        if self.experiment == ExperimentKind::Coverage && self.p_grid.iter().any(|&p| self.target_index >= p || p < 2) {
            return bad(format!(
                "target_index {} needs every p in the grid to exceed it (and p >= 2)",
                self.target_index
            ));
        }
        if self.experiment == ExperimentKind::Fdr && self.n_grid.iter().any(|&n| n < 4) {
            return bad("FDR experiments need n >= 4 for data splitting".into());
        }
        if self.multi_splits == 1 {
            return bad("multi_splits must be 0 (off) or at least 2".into());
        }
        if self.sampler.proposal_sd <= 0.0 || self.sampler.thin == 0 {
            return bad("sampler needs proposal_sd > 0 and thin >= 1".into());
        }
        for &p in &self.p_grid {
            let space = self.space();
            space.validate().map_err(|e| Error::Config(e.to_string()))?;
            FeatureMap::builtin(self.scenario.feature(), p, &space).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn space(&self) -> StateSpace {
        let (lo, hi) = self.box_bounds.map_or(self.scenario.default_box(), |b| (b.lo, b.hi));
        StateSpace::ContinuousBox { d: 1, lo, hi }
    }

    pub fn feature_map(&self, p: usize) -> Result<FeatureMap> {
        FeatureMap::builtin(self.scenario.feature(), p, &self.space())
    }

    /// `(n, p)` cells in row-major order over `n_grid × p_grid`.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.n_grid.iter().flat_map(|&n| self.p_grid.iter().map(move |&p| (n, p))).collect()
    }

    /// Substream for one replication of one cell.
    pub fn replication_seed(&self, n: usize, p: usize, replication: usize) -> RngSeed {
        self.seed.derive(n as u64).derive(p as u64).derive(replication as u64)
    }
}

/// A sparse truth and its support.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub theta: Array1<f64>,
    pub support: Vec<usize>,
}

/// `θ*_j = U_j · 1(U′_j < prob)` with independent uniforms.
pub fn generate_truth(p: usize, prob: f64, seed: RngSeed) -> Result<Truth> {
    if !(prob > 0.0 && prob <= 1.0) {
        return Err(Error::InvalidArgument(format!("sparsity probability must lie in (0, 1], got {prob}")));
    }
    let mut rng = seed.rng();
    let theta: Array1<f64> = (0..p)
        .map(|_| {
            let u: f64 = rng.random();
            let gate: f64 = rng.random();
            if gate < prob {
                u
            } else {
                0.0
            }
        })
        .collect();
    let support = (0..p).filter(|&j| theta[j] != 0.0).collect();
    Ok(Truth { theta, support })
}
