//! Sample-weighted elastic-net regression on standardized daily features.

pub mod cv;
pub mod solver;
pub mod split;
pub mod weights;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::Standardizer;

pub use cv::{cv_grid_search, default_alpha_grid, default_l1_ratio_grid, GridSearchConfig, GridSearchResult};
pub use solver::{fit, fit_from, kkt_violation, objective, soft_threshold, FitOptions, FitResult};
pub use split::{expanding_window_folds, time_series_split, Fold, SplitSpec};
pub use weights::{sample_weight, sample_weights, zero_crossing_age, SampleWeights, Weighting};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FitError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("non-finite value in inputs")]
    NonFinite,
    #[error("model is not fitted")]
    ModelNotFitted,
}

pub type Result<T, E = FitError> = std::result::Result<T, E>;

/// 97.5% standard normal quantile, for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

/// A fitted linear model over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub target: String,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub l1_ratio: f64,
    /// Standard deviation of out-of-sample residuals, standardized units.
    pub residual_std: f64,
    /// Statistics that map raw features and the target to standardized units.
    pub standardizer: Standardizer,
    /// Range the original-scale prediction is clamped to for display.
    pub display_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub standardized: f64,
    pub half_width_standardized: f64,
    pub original: f64,
    pub half_width_original: f64,
    /// `original` clamped to the display range.
    pub display: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub mse: f64,
    pub explained_variance: f64,
}

impl LinearModel {
    pub fn is_fitted(&self) -> bool {
        !self.weights.is_empty()
            && self.weights.len() == self.feature_names.len()
            && self.residual_std.is_finite()
            && self.standardizer.stats(&self.target).is_some()
    }

    /// `w · x` for a standardized row, summed in feature order.
    pub fn predict(&self, x_row: &[f64]) -> Result<f64> {
        if !self.is_fitted() {
            return Err(FitError::ModelNotFitted);
        }
        if x_row.len() != self.weights.len() {
            return Err(FitError::ShapeMismatch(format!(
                "row has {} values, model has {} features",
                x_row.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(x_row).map(|(w, x)| w * x).sum())
    }

    pub fn target_mean_std(&self) -> (f64, f64) {
        let s = self
            .standardizer
            .stats(&self.target)
            .expect("fitted model carries target statistics");
        (s.mean, s.std)
    }

    /// Prediction with a homoscedastic 95% interval of `1.96 * residual_std`.
    pub fn predict_interval(&self, x_row: &[f64]) -> Result<Prediction> {
        let standardized = self.predict(x_row)?;
        let half_width_standardized = Z_95 * self.residual_std;
        let (mean, std) = self.target_mean_std();
        let original = standardized * std + mean;
        let display = match self.display_range {
            Some([lo, hi]) => original.clamp(lo, hi),
            None => original,
        };
        Ok(Prediction {
            standardized,
            half_width_standardized,
            original,
            half_width_original: half_width_standardized * std,
            display,
        })
    }

    /// Non-zero weights sorted by magnitude, largest first.
    pub fn selected(&self) -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = self
            .feature_names
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w != 0.0)
            .map(|(n, w)| (n.as_str(), *w))
            .collect();
        out.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(b.0)));
        out
    }

    pub fn weight_of(&self, feature: &str) -> Option<f64> {
        self.feature_names
            .iter()
            .position(|n| n == feature)
            .map(|i| self.weights[i])
    }

    pub fn evaluate(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Evaluation> {
        if x.ncols() != self.weights.len() {
            return Err(FitError::ShapeMismatch(format!(
                "X has {} columns, model has {} features",
                x.ncols(),
                self.weights.len()
            )));
        }
        let pred = x.dot(&ArrayView1::from(&self.weights));
        Ok(evaluate(pred.view(), y))
    }
}

/// MSE on standardized targets and `1 - MSE` as explained variance.
pub fn evaluate(predicted: ArrayView1<f64>, actual: ArrayView1<f64>) -> Evaluation {
    let n = actual.len();
    let mse = if n == 0 {
        f64::NAN
    } else {
        predicted
            .iter()
            .zip(actual.iter())
            .map(|(p, a)| (p - a).powi(2))
            .sum::<f64>()
            / n as f64
    };
    Evaluation {
        n,
        mse,
        explained_variance: 1.0 - mse,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::ColumnStats;
    use ndarray::array;

    fn model(weights: Vec<f64>, residual_std: f64) -> LinearModel {
        let names: Vec<String> = (0..weights.len()).map(|i| format!("F{i}")).collect();
        LinearModel {
            target: "Mood".into(),
            feature_names: names,
            weights,
            alpha: 0.12,
            l1_ratio: 1.0,
            residual_std,
            standardizer: Standardizer {
                columns: vec![ColumnStats {
                    name: "Mood".into(),
                    mean: 6.0,
                    std: 1.9,
                }],
                dropped: vec![],
            },
            display_range: Some([1.0, 9.0]),
        }
    }

    #[test]
    fn zero_weights_predict_target_mean() {
        let m = model(vec![0.0, 0.0], 0.5);
        let p = m.predict_interval(&[3.0, -7.0]).unwrap();
        assert_eq!(p.standardized, 0.0);
        assert_eq!(p.original, 6.0);
    }

    #[test]
    fn interval_half_width() {
        let m = model(vec![0.3], 0.612);
        let p = m.predict_interval(&[1.0]).unwrap();
        assert!((p.half_width_standardized - 1.2).abs() < 0.005);
        assert!((p.half_width_original / p.half_width_standardized - 1.9).abs() < 1e-12);
        // homoscedastic
        let q = m.predict_interval(&[-4.0]).unwrap();
        assert_eq!(p.half_width_standardized, q.half_width_standardized);
    }

    #[test]
    fn display_clamps_to_scale() {
        let m = model(vec![10.0], 0.5);
        let p = m.predict_interval(&[1.0]).unwrap();
        assert_eq!(p.display, 9.0);
        assert!(p.original > 9.0);
    }

    #[test]
    fn unfitted_and_shape_errors() {
        let m = model(vec![], 0.5);
        assert_eq!(m.predict(&[]), Err(FitError::ModelNotFitted));
        let m = model(vec![1.0], 0.5);
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(FitError::ShapeMismatch(_))));
    }

    #[test]
    fn evaluation_baselines() {
        let y = array![1.0, -1.0, 0.5, -0.5];
        let perfect = evaluate(y.view(), y.view());
        assert_eq!((perfect.mse, perfect.explained_variance), (0.0, 1.0));
        let y = array![1.0, -1.0, 1.0, -1.0];
        let mean_only = evaluate(array![0.0, 0.0, 0.0, 0.0].view(), y.view());
        assert_eq!((mean_only.mse, mean_only.explained_variance), (1.0, 0.0));
    }

    #[test]
    fn selected_sorted_by_magnitude() {
        let m = model(vec![0.05, -0.116, 0.0, 0.101], 0.5);
        let names: Vec<&str> = m.selected().iter().map(|s| s.0).collect();
        assert_eq!(names, vec!["F1", "F3", "F0"]);
    }
}
