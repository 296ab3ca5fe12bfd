//! Hyperparameter search over (α, ρ) with expanding-window validation.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{fit, fit_from, FitOptions};
use super::split::expanding_window_folds;
use super::weights::Weighting;
use super::{FitError, Result};

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect()
}

/// 30 log-spaced penalties in `[1e-3, 10]`, with the point closest to 0.12
/// moved onto 0.12 exactly.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut grid = log_space(1e-3, 10.0, 30);
    let nearest = grid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.ln() - 0.12f64.ln()).abs().total_cmp(&(b.1.ln() - 0.12f64.ln()).abs()))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    grid[nearest] = 0.12;
    grid
}

pub fn default_l1_ratio_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearchConfig {
    pub alphas: Vec<f64>,
    pub l1_ratios: Vec<f64>,
    pub folds: usize,
    pub weighting: Weighting,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            alphas: default_alpha_grid(),
            l1_ratios: default_l1_ratio_grid(),
            folds: 5,
            weighting: Weighting::Decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub alpha: f64,
    pub l1_ratio: f64,
    /// Weights refit on all training rows at the selected (α, ρ).
    pub weights: Vec<f64>,
    pub converged: bool,
    /// RMS of the pooled validation residuals at the selected (α, ρ).
    pub residual_std: f64,
    pub cells: Vec<CvCell>,
}

struct PathOutcome {
    /// Per alpha (in config order): validation MSE and squared residual sum.
    mse: Vec<f64>,
    sq_resid: Vec<f64>,
    count: usize,
}

/// Expanding-window CV over every (α, ρ) pair, then a refit on all rows.
///
/// Each fold weights its own training rows with the age counted from the
/// fold's newest training row. For a fixed (ρ, fold) the penalties are fit
/// from the largest down, each warm-started at the previous solution. The
/// lowest mean validation MSE wins; ties go to the larger α, then the
/// larger ρ.
pub fn cv_grid_search(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    config: &GridSearchConfig,
    options: FitOptions,
) -> Result<GridSearchResult> {
    if config.alphas.is_empty() || config.l1_ratios.is_empty() {
        return Err(FitError::InvalidParameter("empty hyperparameter grid".into()));
    }
    let folds = expanding_window_folds(x.nrows(), config.folds)?;
    let mut alpha_order: Vec<usize> = (0..config.alphas.len()).collect();
    alpha_order.sort_by(|&a, &b| config.alphas[b].total_cmp(&config.alphas[a]));

    let tasks: Vec<(usize, usize)> = (0..config.l1_ratios.len())
        .flat_map(|r| (0..folds.len()).map(move |f| (r, f)))
        .collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(r, f)| -> Result<PathOutcome> {
            let fold = &folds[f];
            let xt = x.slice_axis(Axis(0), fold.train.clone().into());
            let yt = y.slice_axis(Axis(0), fold.train.clone().into());
            let xv = x.slice_axis(Axis(0), fold.validation.clone().into());
            let yv = y.slice_axis(Axis(0), fold.validation.clone().into());
            let sw = config.weighting.weights(fold.train.len());
            let mut mse = vec![0.0; config.alphas.len()];
            let mut sq_resid = vec![0.0; config.alphas.len()];
            let mut warm = vec![0.0; x.ncols()];
            for &a in &alpha_order {
                let out = fit_from(
                    xt,
                    yt,
                    sw.as_slice(),
                    config.alphas[a],
                    config.l1_ratios[r],
                    &warm,
                    options,
                    None,
                )?;
                let pred = xv.dot(&ndarray::ArrayView1::from(&out.weights));
                let ss: f64 = (&yv - &pred).iter().map(|e| e * e).sum();
                sq_resid[a] = ss;
                mse[a] = ss / yv.len() as f64;
                warm = out.weights;
            }
            Ok(PathOutcome {
                mse,
                sq_resid,
                count: yv.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    let mut best: Option<(usize, usize, f64)> = None;
    for (r, &l1_ratio) in config.l1_ratios.iter().enumerate() {
        for (a, &alpha) in config.alphas.iter().enumerate() {
            let fold_mse: Vec<f64> = (0..folds.len())
                .map(|f| outcomes[r * folds.len() + f].mse[a])
                .collect();
            let mean_mse = fold_mse.iter().sum::<f64>() / fold_mse.len() as f64;
            let better = match best {
                None => true,
                Some((ba, br, bm)) => {
                    let tie = 1e-12 * bm.abs().max(1.0);
                    mean_mse < bm - tie
                        || ((mean_mse - bm).abs() <= tie
                            && (alpha > config.alphas[ba]
                                || (alpha == config.alphas[ba] && l1_ratio > config.l1_ratios[br])))
                }
            };
            if better {
                best = Some((a, r, mean_mse));
            }
            cells.push(CvCell {
                alpha,
                l1_ratio,
                fold_mse,
                mean_mse,
            });
        }
    }
    let (a, r, _) = best.expect("grid is non-empty");
    let (ss, count) = (0..folds.len()).fold((0.0, 0), |(ss, c), f| {
        let o = &outcomes[r * folds.len() + f];
        (ss + o.sq_resid[a], c + o.count)
    });
    let sw = config.weighting.weights(x.nrows());
    let refit = fit(x, y, sw.as_slice(), config.alphas[a], config.l1_ratios[r], options)?;
    Ok(GridSearchResult {
        alpha: config.alphas[a],
        l1_ratio: config.l1_ratios[r],
        weights: refit.weights,
        converged: refit.converged,
        residual_std: (ss / count as f64).sqrt(),
        cells,
    })
}
