//! Time-ordered train/test split and expanding-window folds.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{FitError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Range<usize>,
    pub test: Range<usize>,
    pub train_fraction: f64,
}

/// Oldest `ceil(fraction * n)` rows train, the rest test. Both sides keep at
/// least one row.
pub fn time_series_split(n_rows: usize, train_fraction: f64) -> Result<SplitSpec> {
    if n_rows < 5 {
        return Err(FitError::TooFewRows {
            needed: 5,
            got: n_rows,
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FitError::InvalidParameter(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    // guard against products like 0.7 * 10 = 7.000000000000001
    let raw = (train_fraction * n_rows as f64 - 1e-9).ceil() as usize;
    let n_train = raw.clamp(1, n_rows - 1);
    Ok(SplitSpec {
        train: 0..n_train,
        test: n_train..n_rows,
        train_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

/// `folds` expanding windows over `n_rows` time-ordered rows. Each validation
/// block has `n_rows / (folds + 1)` rows and directly follows its training
/// window; the last block ends at the final row.
pub fn expanding_window_folds(n_rows: usize, folds: usize) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(FitError::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let block = n_rows / (folds + 1);
    if block == 0 {
        return Err(FitError::TooFewRows {
            needed: folds + 1,
            got: n_rows,
        });
    }
    let first_end = n_rows - folds * block;
    Ok((0..folds)
        .map(|k| {
            let end = first_end + k * block;
            Fold {
                train: 0..end,
                validation: end..end + block,
            }
        })
        .collect())
}
