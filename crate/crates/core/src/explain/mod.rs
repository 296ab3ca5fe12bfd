//! Per-feature breakdown of linear predictions and the charts that show it.

pub mod svg;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elasticnet::{FitError, LinearModel, Prediction};

pub use svg::{render_chart, ChartData, ChartKind, ChartSpec, DEEP_TEAL, GREEN, LIGHT_TEAL, NEUTRAL, RED};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExplainError {
    #[error(transparent)]
    Model(#[from] FitError),
    #[error("invalid chart spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub feature: String,
    /// Today's standardized value, i.e. its difference from the training mean
    /// in standard deviations.
    pub value: f64,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionBreakdown {
    pub target: String,
    /// Non-zero-weight features, largest |contribution| first.
    pub rows: Vec<ContributionRow>,
    /// Sum of all contributions; equal to the standardized prediction.
    pub total: f64,
    pub prediction: Prediction,
}

/// Splits the prediction for one standardized row into `weight * value`
/// terms. `total` is summed in feature order, exactly as the model predicts.
pub fn contributions(model: &LinearModel, x_row: &[f64]) -> Result<ContributionBreakdown, FitError> {
    let prediction = model.predict_interval(x_row)?;
    let mut rows: Vec<ContributionRow> = model
        .feature_names
        .iter()
        .zip(&model.weights)
        .zip(x_row)
        .filter(|((_, w), _)| **w != 0.0)
        .map(|((name, &weight), &value)| ContributionRow {
            feature: name.clone(),
            value,
            weight,
            contribution: weight * value,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.contribution
            .abs()
            .total_cmp(&a.contribution.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(ContributionBreakdown {
        target: model.target.clone(),
        rows,
        total: prediction.standardized,
        prediction,
    })
}

/// Trailing mean over the observed values among the last `window` entries.
/// Early entries use the shorter prefix; a window without observations
/// yields `None`.
pub fn moving_average(series: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    let window = window.max(1);
    (0..series.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            let seen: Vec<f64> = series[start..=i].iter().flatten().copied().collect();
            (!seen.is_empty()).then(|| seen.iter().sum::<f64>() / seen.len() as f64)
        })
        .collect()
}
