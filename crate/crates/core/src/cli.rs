//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fdr::{
    ebh_from_data, ebh_select, inclusion_rate_select, inclusion_rates, mirror_select, multi_split_select,
    single_split_select, write_selection_csv, write_selection_diagnostics_csv, MirrorConfig, MirrorKind,
    PipelineConfig, SelectionDiagnostics, SelectionMethod, SelectionResult,
};
use crate::harness::{run_experiment, ExperimentConfig};
use crate::inference::{infer_all, write_inference_csv, InferenceContext};
use crate::likelihood::{McLikelihood, ReferenceSet};
use crate::model::{BuiltinFeature, FeatureMap, StateSpace};
use crate::oracle::run_verify_suite;
use crate::rng::RngSeed;
use crate::sampler::{read_draws_csv, sample_reference_gaussian, ObservedSample, ReferenceChain};
use crate::solver::{fit_with_cv, write_cv_csv, PenaltyConfig, Tuning};

#[derive(Debug, Parser)]
#[command(
    name = "mcmle",
    version,
    about = "Penalized Monte Carlo MLE, decorrelated inference and FDR-controlled selection"
)]
pub struct Cli {
    /// TOML file: an experiment for `simulate`, or a `[pipeline]` table for the other commands.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "MCMLE_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Elastic-net fit of one dataset.
    Fit(DataArgs),
    /// Decorrelated score tests and one-step intervals.
    Infer {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated coordinates; all when omitted.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<usize>>,
        /// Interval miscoverage level.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Variable selection with FDR control.
    Select {
        #[arg(long, value_parser = parse_method)]
        method: SelectionMethod,
        #[arg(long)]
        q: f64,
        /// Precomputed statistics instead of data: `e_value` for ebh,
        /// `t1,t2` for single-split, `t1_k,t2_k` pairs for multi-split.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        splits: usize,
        #[arg(long, value_enum, default_value_t = MirrorArg::Product)]
        mirror: MirrorArg,
        #[command(flatten)]
        data: OptionalDataArgs,
    },
    /// Run the simulation study described by `--config`.
    Simulate,
    /// Run the built-in oracle checks.
    Verify,
}

fn parse_method(s: &str) -> std::result::Result<SelectionMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MirrorArg {
    Product,
    Sum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureArg {
    Cos,
    Arctan,
    Rational,
    Ising,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = FeatureArg::Cos)]
    pub feature: FeatureArg,
    /// Feature dimension of the scalar maps.
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub hi: f64,
    /// Number of spins for the Ising map.
    #[arg(long, default_value_t = 3)]
    pub spins: usize,
    /// Include singleton fields in the Ising map.
    #[arg(long)]
    pub fields: bool,
}

impl ModelArgs {
    fn build(&self) -> Result<(FeatureMap, StateSpace)> {
        match self.feature {
            FeatureArg::Ising => {
                let space = StateSpace::DiscreteProduct { d: self.spins, r: 2 };
                Ok((FeatureMap::ising(self.spins, self.fields)?, space))
            }
            kind => {
                let space = StateSpace::ContinuousBox { d: 1, lo: self.lo, hi: self.hi };
                let builtin = match kind {
                    FeatureArg::Cos => BuiltinFeature::Cos,
                    FeatureArg::Arctan => BuiltinFeature::Arctan,
                    _ => BuiltinFeature::Rational,
                };
                Ok((FeatureMap::builtin(builtin, self.p, &space)?, space))
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    /// Fixed λ₁; cross-validation is used when absent.
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda_prime: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Observed draws, columns x0, x1, ...
    #[arg(long)]
    pub data: PathBuf,
    /// Reference draws with a `log_h` column.
    #[arg(long, conflicts_with = "reference_gaussian")]
    pub reference: Option<PathBuf>,
    /// Draw this many standard normal reference points instead.
    #[arg(long)]
    pub reference_gaussian: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptionalDataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, conflicts_with = "reference_gaussian")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub reference_gaussian: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
}

impl OptionalDataArgs {
    fn required(&self) -> Result<DataArgs> {
        let data =
            self.data.clone().ok_or_else(|| Error::InvalidArgument("either --stats or --data is required".into()))?;
        Ok(DataArgs {
            data,
            reference: self.reference.clone(),
            reference_gaussian: self.reference_gaussian,
            model: self.model.clone(),
            penalty: self.penalty.clone(),
        })
    }
}

#[derive(Debug, Default, Deserialize)]
struct RunConfig {
    #[serde(default)]
    pipeline: PipelineConfig,
    #[serde(default)]
    seed: Option<RngSeed>,
}

struct Context {
    pipeline: PipelineConfig,
    seed: RngSeed,
    output_dir: PathBuf,
}

fn load_context(cli: &Cli) -> Result<Context> {
    let run: RunConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => RunConfig::default(),
    };
    let mut seed = run.seed.unwrap_or_default();
    if let Some(s) = cli.seed {
        seed = RngSeed::new(s, 0);
    }
    Ok(Context {
        pipeline: run.pipeline,
        seed,
        output_dir: cli.output_dir.clone().unwrap_or_else(|| PathBuf::from(".")),
    })
}

fn apply_penalty(base: &Tuning, args: &PenaltyArgs) -> Result<Tuning> {
    if let Some(l1) = args.lambda1 {
        let cfg = PenaltyConfig {
            lambda1: l1,
            lambda2: args.lambda2.unwrap_or(0.1 * l1),
            lambda_prime: args.lambda_prime.unwrap_or(l1),
            ..PenaltyConfig::default()
        };
        cfg.validate()?;
        return Ok(Tuning::Fixed(cfg));
    }
    let mut tuning = base.clone();
    if let (Tuning::CrossValidated { folds, .. }, Some(k)) = (&mut tuning, args.folds) {
        *folds = k;
    }
    Ok(tuning)
}

struct LoadedData {
    obs: ObservedSample,
    reference: ReferenceSet,
}

fn load_data(args: &DataArgs, seed: RngSeed) -> Result<LoadedData> {
    let (fm, space) = args.model.build()?;
    let (draws, _) = read_draws_csv(&args.data)?;
    if let Some(bad) = draws.iter().position(|x| !space.contains(x)) {
        return Err(Error::InvalidArgument(format!("observation {bad} lies outside the state space")));
    }
    let obs = ObservedSample::from_draws(&fm, draws)?;
    let chain = match (&args.reference, args.reference_gaussian) {
        (Some(path), _) => ReferenceChain::read_csv(path)?,
        (None, Some(m)) => sample_reference_gaussian(m, space.dim(), seed.derive(2))?,
        (None, None) => {
            return Err(Error::InvalidArgument("one of --reference or --reference-gaussian is required".into()))
        }
    };
    let reference = ReferenceSet::new(&fm, &chain, &space)?;
    Ok(LoadedData { obs, reference })
}

fn out_path(ctx: &Context, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&ctx.output_dir)?;
    Ok(ctx.output_dir.join(name))
}

fn cmd_fit(ctx: &Context, args: &DataArgs) -> Result<()> {
    let data = load_data(args, ctx.seed)?;
    let tuning = apply_penalty(&ctx.pipeline.tuning, &args.penalty)?;
    let tuned = fit_with_cv(&data.obs, &data.reference, &tuning, ctx.seed.derive(3))?;
    let path = out_path(ctx, "fit.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["index", "theta_hat"])?;
    for (j, v) in tuned.fit.theta_hat.iter().enumerate() {
        w.write_record([j.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    if let Some(cv) = &tuned.cv {
        write_cv_csv(out_path(ctx, "cv.csv")?, cv)?;
    }
    println!(
        "lambda1={} lambda2={} objective={} iterations={} kkt={:.3e} converged={} support={}",
        tuned.config.lambda1,
        tuned.config.lambda2,
        tuned.fit.objective,
        tuned.fit.iterations,
        tuned.fit.kkt_residual,
        tuned.fit.converged,
        tuned.fit.support_size
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_infer(ctx: &Context, args: &DataArgs, targets: &Option<Vec<usize>>, eta: Option<f64>) -> Result<()> {
    let data = load_data(args, ctx.seed)?;
    let tuning = apply_penalty(&ctx.pipeline.tuning, &args.penalty)?;
    let tuned = fit_with_cv(&data.obs, &data.reference, &tuning, ctx.seed.derive(3))?;
    let like = McLikelihood::from_sample(&data.obs, &data.reference)?;
    let ictx = InferenceContext::new(like, data.obs.n(), tuned.fit.theta_hat.view())?;
    let targets: Vec<usize> = targets.clone().unwrap_or_else(|| (0..like.p()).collect());
    let results = infer_all(&ictx, &targets, None, &tuned.config, eta.unwrap_or(ctx.pipeline.eta))?;
    let path = out_path(ctx, "inference.csv")?;
    write_inference_csv(&path, &results)?;
    println!("{} coordinates; wrote {}", results.len(), path.display());
    Ok(())
}

fn read_stat_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut cols = vec![Vec::new(); headers.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (k, field) in rec.iter().enumerate().take(headers.len()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("non-numeric value '{field}' in {}", path.display())))?;
            cols[k].push(v);
        }
    }
    Ok((headers, cols))
}

fn column<'a>(headers: &[String], cols: &'a [Vec<f64>], name: &str) -> Result<&'a [f64]> {
    headers
        .iter()
        .position(|h| h == name)
        .map(|k| cols[k].as_slice())
        .ok_or_else(|| Error::InvalidArgument(format!("statistics file lacks a '{name}' column")))
}

fn select_from_stats(path: &Path, method: SelectionMethod, mirror: &MirrorConfig) -> Result<SelectionResult> {
    let (headers, cols) = read_stat_columns(path)?;
    match method {
        SelectionMethod::EBh => ebh_select(Array1::from(column(&headers, &cols, "e_value")?.to_vec()).view(), mirror.q),
        SelectionMethod::SingleSplit => {
            let t1 = Array1::from(column(&headers, &cols, "t1")?.to_vec());
            let t2 = Array1::from(column(&headers, &cols, "t2")?.to_vec());
            mirror_select(t1.view(), t2.view(), mirror)
        }
        SelectionMethod::MultiSplit => {
            let mut sets = Vec::new();
            let mut p = 0;
            for k in 0.. {
                let (Ok(t1), Ok(t2)) =
                    (column(&headers, &cols, &format!("t1_{k}")), column(&headers, &cols, &format!("t2_{k}")))
                else {
                    break;
                };
                p = t1.len();
                let r = mirror_select(Array1::from(t1.to_vec()).view(), Array1::from(t2.to_vec()).view(), mirror)?;
                sets.push(r.selected);
            }
            if sets.len() < 2 {
                return Err(Error::InvalidArgument(
                    "multi-split statistics need columns t1_0,t2_0,t1_1,t2_1,...".into(),
                ));
            }
            inclusion_rate_select(inclusion_rates(&sets, p)?.view(), mirror.q)
        }
    }
}

fn cmd_select(
    ctx: &Context,
    method: SelectionMethod,
    q: f64,
    stats: &Option<PathBuf>,
    splits: usize,
    mirror: MirrorArg,
    data: &OptionalDataArgs,
) -> Result<()> {
    let f_kind = match mirror {
        MirrorArg::Product => MirrorKind::Product,
        MirrorArg::Sum => MirrorKind::Sum,
    };
    let mirror_cfg = MirrorConfig { f_kind, q, n_splits: 1, seed: ctx.seed.derive(4) };
    mirror_cfg.validate()?;
    let result = match stats {
        Some(path) => select_from_stats(path, method, &mirror_cfg)?,
        None => {
            let args = data.required()?;
            let loaded = load_data(&args, ctx.seed)?;
            let pipeline =
                PipelineConfig { tuning: apply_penalty(&ctx.pipeline.tuning, &args.penalty)?, eta: ctx.pipeline.eta };
            let null = Array1::zeros(loaded.reference.p());
            match method {
                SelectionMethod::SingleSplit => {
                    single_split_select(&loaded.obs, &loaded.reference, &pipeline, &mirror_cfg, null.view())?
                }
                SelectionMethod::MultiSplit => {
                    let cfg = MirrorConfig { n_splits: splits, ..mirror_cfg };
                    multi_split_select(&loaded.obs, &loaded.reference, &pipeline, &cfg, null.view())?
                }
                SelectionMethod::EBh => {
                    ebh_from_data(&loaded.obs, &loaded.reference, &pipeline, null.view(), q, ctx.seed.derive(3))?
                }
            }
        }
    };
    let path = out_path(ctx, "selection.csv")?;
    write_selection_csv(&path, &result)?;
    write_selection_diagnostics_csv(out_path(ctx, "selection_diagnostics.csv")?, &result)?;
    let detail = match &result.diagnostics {
        SelectionDiagnostics::Mirror(m) => format!("tau_q={}", m.tau_q),
        SelectionDiagnostics::InclusionRates { threshold, .. } => format!("threshold={threshold}"),
        SelectionDiagnostics::EBh(e) => format!("k_star={}", e.k_star),
    };
    println!("method={} q={} {detail} selected={:?}", result.method.as_str(), result.q, result.selected);
    Ok(())
}

fn cmd_simulate(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("simulate needs --config <experiment.toml>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = RngSeed::new(s, 0);
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    let (out, written) = run_experiment(&cfg)?;
    let failed = out.records.iter().filter(|r| r.metric_name == "failed").count();
    println!("{} records, {failed} failed replications", out.records.len());
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_verify(ctx: &Context) -> Result<bool> {
    let checks = run_verify_suite(ctx.seed);
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", checks.len());
    Ok(passed == checks.len())
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let ctx = load_context(cli)?;
    match &cli.command {
        Command::Fit(args) => cmd_fit(&ctx, args)?,
        Command::Infer { data, targets, eta } => cmd_infer(&ctx, data, targets, *eta)?,
        Command::Select { method, q, stats, splits, mirror, data } => {
            cmd_select(&ctx, *method, *q, stats, *splits, *mirror, data)?
        }
        Command::Simulate => cmd_simulate(cli)?,
        Command::Verify => return Ok(if cmd_verify(&ctx)? { 0 } else { 2 }),
    }
    Ok(0)
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 1 on invalid input, 2 on a runtime failure.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let run = || match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    };
    match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            1
        }
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("error: cannot start thread pool: {e}");
                2
            }
        },
        None => run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["mcmle", "frobnicate"]), 1);
        assert_eq!(cli_main(["mcmle", "select", "--method", "bh", "--q", "0.1"]), 1);
        assert_eq!(cli_main(["mcmle", "simulate"]), 1);
        assert_eq!(cli_main(["mcmle", "--help"]), 0);
    }
}
