//! Recency weighting of training days.

use serde::{Deserialize, Serialize};

const OFFSET: f64 = 14.7498;
const SCALE: f64 = 13.2869;
const EXPONENT: f64 = 0.0101585;
const AGE_SHIFT: f64 = 30.0;

/// Weight of a training day that is `age` days older than the newest one:
/// `max(14.7498 - 13.2869 (age + 30)^0.0101585, 0)`.
pub fn sample_weight(age: f64) -> f64 {
    (OFFSET - SCALE * (age + AGE_SHIFT).powf(EXPONENT)).max(0.0)
}

/// Age in days at which the weight reaches zero.
pub fn zero_crossing_age() -> f64 {
    (OFFSET / SCALE).powf(1.0 / EXPONENT) - AGE_SHIFT
}

/// Per-row weights in row order (oldest first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights(pub Vec<f64>);

impl SampleWeights {
    /// Decaying weights for `n_rows` consecutive rows; the last row has age 0.
    pub fn decay(n_rows: usize) -> Self {
        SampleWeights(
            (0..n_rows)
                .map(|r| sample_weight((n_rows - 1 - r) as f64))
                .collect(),
        )
    }

    pub fn uniform(n_rows: usize) -> Self {
        SampleWeights(vec![1.0; n_rows])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn sample_weights(n_rows: usize) -> SampleWeights {
    SampleWeights::decay(n_rows)
}

/// How training rows are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    #[default]
    Decay,
}

impl Weighting {
    pub fn weights(self, n_rows: usize) -> SampleWeights {
        match self {
            Weighting::Uniform => SampleWeights::uniform(n_rows),
            Weighting::Decay => SampleWeights::decay(n_rows),
        }
    }
}
