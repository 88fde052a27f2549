//! Elastic-net penalized MCMC-MLE and k-fold cross-validation over the
//! tuning triple `(λ₁, λ₂, λ′)`.

use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::likelihood::{McLikelihood, ReferenceSet};
use crate::prox::{self, ProxOptions, Smooth};
use crate::rng::RngSeed;
use crate::sampler::ObservedSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Penalty of the nuisance-projection program used by inference.
    pub lambda_prime: f64,
    pub max_iter: usize,
    /// Stopping tolerance on the relative change of the objective.
    pub tol: f64,
    pub step_init: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { lambda1: 0.0, lambda2: 0.0, lambda_prime: 0.0, max_iter: 5000, tol: 1e-8, step_init: 1.0 }
    }
}

impl PenaltyConfig {
    pub fn with_lambdas(lambda1: f64, lambda2: f64, lambda_prime: f64) -> Self {
        Self { lambda1, lambda2, lambda_prime, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda1 >= 0.0
            && self.lambda2 >= 0.0
            && self.lambda_prime >= 0.0
            && self.lambda1.is_finite()
            && self.lambda2.is_finite()
            && self.lambda_prime.is_finite()
            && self.tol > 0.0
            && self.step_init > 0.0
            && self.max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid penalty configuration {self:?}")))
        }
    }

    fn fit_key(&self) -> [u64; 5] {
        [
            self.lambda1.to_bits(),
            self.lambda2.to_bits(),
            self.max_iter as u64,
            self.tol.to_bits(),
            self.step_init.to_bits(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: Array1<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    pub support_size: usize,
}

/// Componentwise `sign(z) · max(|z| - κ, 0)`.
pub fn soft_threshold(z: ArrayView1<f64>, kappa: f64) -> Array1<f64> {
    let mut out = Array1::zeros(z.len());
    prox::soft_threshold_into(z, kappa.max(0.0), &mut out);
    out
}

/// `L(θ) + λ₂‖θ‖²`, the smooth part of the elastic-net objective.
struct RidgeLikelihood<'a> {
    like: McLikelihood<'a>,
    lambda2: f64,
}

impl Smooth for RidgeLikelihood<'_> {
    fn value(&self, x: ArrayView1<f64>) -> Result<f64> {
        Ok(self.like.loss(x)? + self.lambda2 * x.dot(&x))
    }

    fn value_grad(&self, x: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        let (v, mut g) = self.like.loss_and_grad(x)?;
        g.scaled_add(2.0 * self.lambda2, &x);
        Ok((v + self.lambda2 * x.dot(&x), g))
    }
}

/// Minimizes `L(θ) + λ₁‖θ‖₁ + λ₂‖θ‖²` from `theta_init`.
pub fn solve(like: &McLikelihood, cfg: &PenaltyConfig, theta_init: ArrayView1<f64>) -> Result<FitResult> {
    cfg.validate()?;
    check_len(like.p(), theta_init.len())?;
    let smooth = RidgeLikelihood { like: *like, lambda2: cfg.lambda2 };
    let out = prox::minimize(
        &smooth,
        theta_init,
        &ProxOptions { l1: cfg.lambda1, max_iter: cfg.max_iter, tol: cfg.tol, step_init: cfg.step_init },
    )?;
    if !out.converged {
        log::debug!(
            "elastic-net solve stopped after {} iterations with KKT residual {:.3e}",
            out.iterations,
            out.kkt_residual
        );
    }
    let support_size = out.x.iter().filter(|v| **v != 0.0).count();
    Ok(FitResult {
        theta_hat: out.x,
        objective: out.objective,
        iterations: out.iterations,
        kkt_residual: out.kkt_residual,
        converged: out.converged,
        support_size,
    })
}

/// [`solve`] on a sample from a zero start.
pub fn solve_sample(obs: &ObservedSample, reference: &ReferenceSet, cfg: &PenaltyConfig) -> Result<FitResult> {
    let like = McLikelihood::from_sample(obs, reference)?;
    solve(&like, cfg, Array1::zeros(like.p()).view())
}

/// The default tuning grid: 8 values of λ₁ log-spaced over
/// `[0.01, 1] · ‖∇L(0)‖_∞`, `λ₂ = c λ₁` for `c ∈ {0.1, 1}`, and `λ′ = λ₁`.
pub fn default_grid(like: &McLikelihood, base: &PenaltyConfig) -> Result<Vec<PenaltyConfig>> {
    let g0 = like.grad(Array1::zeros(like.p()).view())?;
    let top = g0.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-8);
    Ok(lambda_grid(top, 8, 0.01, &[0.1, 1.0], base))
}

/// `points` values of λ₁ from `top` down to `ratio · top`, crossed with `λ₂ = c λ₁`.
pub fn lambda_grid(top: f64, points: usize, ratio: f64, ridge: &[f64], base: &PenaltyConfig) -> Vec<PenaltyConfig> {
    let mut grid = Vec::with_capacity(points * ridge.len());
    for k in 0..points {
        let frac = if points > 1 { k as f64 / (points - 1) as f64 } else { 0.0 };
        let l1 = top * ratio.powf(frac);
        for &c in ridge {
            grid.push(PenaltyConfig { lambda1: l1, lambda2: c * l1, lambda_prime: l1, ..*base });
        }
    }
    grid
}

#[derive(Debug, Clone, Serialize)]
pub struct CvRow {
    pub config: PenaltyConfig,
    pub fold_losses: Vec<f64>,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best: PenaltyConfig,
    pub table: Vec<CvRow>,
}

/// Fold index of every observed row: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: RngSeed) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % folds;
    }
    fold
}

/// Fits each distinct configuration along a warm-started path, ordered by
/// decreasing λ₁ then λ₂. Returns one fit per entry of `grid`.
pub fn fit_path(like: &McLikelihood, grid: &[PenaltyConfig]) -> Result<Vec<FitResult>> {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        let (ga, gb) = (&grid[a], &grid[b]);
        gb.lambda1.total_cmp(&ga.lambda1).then(gb.lambda2.total_cmp(&ga.lambda2)).then(a.cmp(&b))
    });
    let mut results: Vec<Option<FitResult>> = vec![None; grid.len()];
    let mut done: Vec<([u64; 5], usize)> = Vec::new();
    let mut warm = Array1::zeros(like.p());
    for &i in &order {
        let key = grid[i].fit_key();
        if let Some(&(_, j)) = done.iter().find(|(k, _)| *k == key) {
            results[i] = results[j].clone();
            continue;
        }
        let fit = solve(like, &grid[i], warm.view())?;
        warm.assign(&fit.theta_hat);
        done.push((key, i));
        results[i] = Some(fit);
    }
    Ok(results.into_iter().map(|r| r.expect("every grid point fitted")).collect())
}

/// k-fold cross-validation over `grid`. Observed rows are split into folds;
/// the reference set is shared. The held-out criterion is the unpenalized
/// loss on the held-out rows at the fold fit. Ties in mean loss go to the
/// larger λ₁, then the larger λ₂.
pub fn cross_validate(
    obs: &ObservedSample,
    reference: &ReferenceSet,
    grid: &[PenaltyConfig],
    folds: usize,
    seed: RngSeed,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("cross-validation grid is empty".into()));
    }
    if folds < 2 || folds > obs.n() {
        return Err(Error::InvalidArgument(format!("need 2 <= folds <= n (folds={folds}, n={})", obs.n())));
    }
    for cfg in grid {
        cfg.validate()?;
    }
    let assignment = fold_assignment(obs.n(), folds, seed);
    let per_fold: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let train_idx: Vec<usize> = (0..obs.n()).filter(|&i| assignment[i] != k).collect();
            let test_idx: Vec<usize> = (0..obs.n()).filter(|&i| assignment[i] == k).collect();
            let train = obs.subset(&train_idx)?;
            let test = obs.subset(&test_idx)?;
            let train_like = McLikelihood::from_sample(&train, reference)?;
            let test_like = McLikelihood::from_sample(&test, reference)?;
            fit_path(&train_like, grid)?.iter().map(|fit| test_like.loss(fit.theta_hat.view())).collect()
        })
        .collect::<Result<_>>()?;

    let table: Vec<CvRow> = grid
        .iter()
        .enumerate()
        .map(|(g, cfg)| {
            let fold_losses: Vec<f64> = per_fold.iter().map(|f| f[g]).collect();
            let mean_loss = fold_losses.iter().sum::<f64>() / folds as f64;
            CvRow { config: *cfg, fold_losses, mean_loss }
        })
        .collect();
    let best = table
        .iter()
        .min_by(|a, b| {
            a.mean_loss
                .total_cmp(&b.mean_loss)
                .then(b.config.lambda1.total_cmp(&a.config.lambda1))
                .then(b.config.lambda2.total_cmp(&a.config.lambda2))
        })
        .expect("nonempty grid")
        .config;
    Ok(CvOutcome { best, table })
}

/// How the penalty is chosen for a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Tuning {
    Fixed(PenaltyConfig),
    /// k-fold CV over `grid`, or over [`default_grid`] built from `base` when `grid` is empty.
    CrossValidated {
        folds: usize,
        #[serde(default)]
        base: PenaltyConfig,
        #[serde(default)]
        grid: Vec<PenaltyConfig>,
    },
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::CrossValidated { folds: 5, base: PenaltyConfig::default(), grid: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct TunedFit {
    pub fit: FitResult,
    pub config: PenaltyConfig,
    pub cv: Option<CvOutcome>,
}

/// Chooses the penalty per `tuning`, then fits on all of `obs`.
pub fn fit_with_cv(obs: &ObservedSample, reference: &ReferenceSet, tuning: &Tuning, seed: RngSeed) -> Result<TunedFit> {
    let like = McLikelihood::from_sample(obs, reference)?;
    let (config, cv) = match tuning {
        Tuning::Fixed(cfg) => (*cfg, None),
        Tuning::CrossValidated { folds, base, grid } => {
            let grid = if grid.is_empty() { default_grid(&like, base)? } else { grid.clone() };
            let cv = cross_validate(obs, reference, &grid, *folds, seed)?;
            (cv.best, Some(cv))
        }
    };
    let path = match &cv {
        Some(cv) => {
            let mut g: Vec<PenaltyConfig> = cv
                .table
                .iter()
                .map(|r| r.config)
                .filter(|c| c.lambda1 > config.lambda1 || (c.lambda1 == config.lambda1 && c.lambda2 >= config.lambda2))
                .collect();
            g.push(config);
            g
        }
        None => vec![config],
    };
    let fits = fit_path(&like, &path)?;
    let fit = fits.into_iter().last().expect("path ends at the chosen config");
    Ok(TunedFit { fit, config, cv })
}

pub fn write_cv_csv(path: impl AsRef<Path>, outcome: &CvOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let folds = outcome.table.first().map_or(0, |r| r.fold_losses.len());
    let mut header = vec!["lambda1".to_string(), "lambda2".into(), "lambda_prime".into()];
    header.extend((0..folds).map(|k| format!("fold{k}")));
    header.push("mean".into());
    w.write_record(&header)?;
    for row in &outcome.table {
        let mut rec = vec![
            format!("{:e}", row.config.lambda1),
            format!("{:e}", row.config.lambda2),
            format!("{:e}", row.config.lambda_prime),
        ];
        rec.extend(row.fold_losses.iter().map(|v| format!("{v:e}")));
        rec.push(format!("{:e}", row.mean_loss));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
