//! Correlation analysis with false-discovery-rate control, partial
//! autocorrelation for choosing target lags, and a PCA multicollinearity
//! diagnostic.

pub mod distributions;
pub mod pacf;
pub mod pca;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::DailyMatrix;

pub use pacf::{pacf, select_lag_count, PacfResult};
pub use pca::{jacobi_eigenvalues, pca_explained, PcaSpectrum};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("constant input")]
    ConstantInput,
    #[error("p-value {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("correlation {0} outside [-1, 1]")]
    InvalidCorrelation(f64),
    #[error("degenerate series")]
    DegenerateSeries,
    #[error("non-finite input")]
    NonFinite,
    #[error("Jacobi iteration did not converge within {0} sweeps")]
    ConvergenceFailure(usize),
    #[error("need at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("correlation of `{feature}` with the target: {source}")]
    Feature {
        feature: String,
        #[source]
        source: Box<StatsError>,
    },
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

/// Pearson product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort {
            needed: 3,
            got: x.len(),
        });
    }
    let is_constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if is_constant(x) || is_constant(y) {
        return Err(StatsError::ConstantInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a sample correlation `r` from `n` pairs, from the
/// Student-t statistic `r sqrt((n-2)/(1-r^2))` with `n-2` degrees of freedom.
///
/// `|r| = 1` yields 0.
pub fn pearson_p(r: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(StatsError::TooShort { needed: 3, got: n });
    }
    if !(r.abs() <= 1.0) {
        return Err(StatsError::InvalidCorrelation(r));
    }
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    // dof / (dof + t^2) simplifies to 1 - r^2
    let dof = (n - 2) as f64;
    Ok(distributions::regularized_incomplete_beta(
        1.0 - r * r,
        0.5 * dof,
        0.5,
    ))
}

/// Benjamini–Hochberg adjusted p-values, in input order.
pub fn bh_adjust(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = pvals
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(StatsError::OutOfRange { index, value });
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(m as f64 * pvals[i] / (rank + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub feature: String,
    pub n: usize,
    pub r: f64,
    pub p_raw: f64,
    pub p_adj: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub target: String,
    /// Description of the multiple-testing family BH was applied over.
    pub family: String,
    pub significance: f64,
    /// Sorted by adjusted p-value, then raw p-value, then name.
    pub rows: Vec<CorrelationRow>,
    /// Predictors without a defined correlation (constant or fewer than three
    /// overlapping days), with the reason. They are not part of the family.
    pub excluded: Vec<(String, String)>,
}

impl CorrelationReport {
    pub fn significant_count(&self) -> usize {
        self.rows.iter().filter(|r| r.significant).count()
    }

    pub fn row(&self, feature: &str) -> Option<&CorrelationRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }

    /// CSV with `feature,r,n,p_raw,p_adj,significant`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,r,n,p_raw,p_adj,significant\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.feature, row.r, row.n, row.p_raw, row.p_adj, row.significant
            ));
        }
        out
    }
}

/// Observed-in-both pairs of two matrix columns.
fn complete_pairs(matrix: &DailyMatrix, a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
    (0..matrix.n_rows())
        .filter_map(|r| Some((matrix.get(r, a)?, matrix.get(r, b)?)))
        .unzip()
}

/// Correlation of every predictor with the target over pairwise-complete
/// days, with BH correction across the feature-vs-target family.
pub fn correlation_report(matrix: &DailyMatrix, significance: f64) -> Result<CorrelationReport> {
    let target = matrix.target_index();
    let raw = matrix
        .predictor_indices()
        .into_par_iter()
        .map(|c| {
            let name = matrix.features[c].name.clone();
            let wrap = |source| StatsError::Feature {
                feature: name.clone(),
                source: Box::new(source),
            };
            let (x, y) = complete_pairs(matrix, c, target);
            let r = match pearson_r(&x, &y) {
                Ok(r) => r,
                Err(e @ (StatsError::ConstantInput | StatsError::TooShort { .. })) => {
                    return Ok(Err((name, e.to_string())))
                }
                Err(e) => return Err(wrap(e)),
            };
            let p = pearson_p(r, x.len()).map_err(wrap)?;
            Ok(Ok((name, x.len(), r, p)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut excluded = Vec::new();
    let raw: Vec<_> = raw
        .into_iter()
        .filter_map(|item| item.map_err(|skip| excluded.push(skip)).ok())
        .collect();
    let p_raw: Vec<f64> = raw.iter().map(|t| t.3).collect();
    let p_adj = bh_adjust(&p_raw)?;
    let mut rows: Vec<CorrelationRow> = raw
        .into_iter()
        .zip(p_adj)
        .map(|((feature, n, r, p_raw), p_adj)| CorrelationRow {
            feature,
            n,
            r,
            p_raw,
            p_adj,
            significant: p_adj < significance,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.p_adj
            .total_cmp(&b.p_adj)
            .then(a.p_raw.total_cmp(&b.p_raw))
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(CorrelationReport {
        target: matrix.target.clone(),
        family: format!("feature-vs-target ({} tests)", rows.len()),
        significance,
        rows,
        excluded,
    })
}

/// All-pairs correlation matrix with raw (unadjusted) p-values. Pairs that
/// are undefined (constant or too few overlapping days) hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major `names.len()²` coefficients, symmetric with unit diagonal.
    pub r: Vec<f64>,
    pub p_raw: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.names.len() + j]
    }

    pub fn to_csv(&self) -> String {
        let k = self.names.len();
        let mut out = String::from("feature");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..k {
            out.push_str(&self.names[i]);
            for j in 0..k {
                out.push(',');
                let v = self.r[i * k + j];
                if v.is_finite() {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn correlation_matrix(matrix: &DailyMatrix) -> CorrelationMatrix {
    let k = matrix.n_cols();
    let upper: Vec<Vec<(f64, f64)>> = (0..k)
        .into_par_iter()
        .map(|i| {
            (i + 1..k)
                .map(|j| {
                    let (x, y) = complete_pairs(matrix, i, j);
                    pearson_r(&x, &y)
                        .and_then(|r| Ok((r, pearson_p(r, x.len())?)))
                        .unwrap_or((f64::NAN, f64::NAN))
                })
                .collect()
        })
        .collect();
    let mut r = vec![0.0; k * k];
    let mut p_raw = vec![0.0; k * k];
    for i in 0..k {
        r[i * k + i] = 1.0;
        for (offset, &(rij, pij)) in upper[i].iter().enumerate() {
            let j = i + 1 + offset;
            r[i * k + j] = rij;
            r[j * k + i] = rij;
            p_raw[i * k + j] = pij;
            p_raw[j * k + i] = pij;
        }
    }
    CorrelationMatrix {
        names: matrix.features.iter().map(|f| f.name.clone()).collect(),
        r,
        p_raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{Aggregator, FeatureMeta};
    use chrono::NaiveDate;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // cov = 4, var = 5 each
        assert!((pearson_r(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(pearson_r(&x, &[1.0; 4]), Err(StatsError::ConstantInput));
        assert_eq!(pearson_r(&x, &[1.0; 3]), Err(StatsError::LengthMismatch(4, 3)));
    }

    #[test]
    fn p_value_limits() {
        assert_eq!(pearson_p(0.0, 17).unwrap(), 1.0);
        assert_eq!(pearson_p(1.0, 17).unwrap(), 0.0);
        let ps: Vec<f64> = [0.1, 0.5, 0.9, 0.99, 0.999]
            .iter()
            .map(|&r| pearson_p(r, 12).unwrap())
            .collect();
        assert!(ps.windows(2).all(|w| w[1] < w[0]));
        assert!(pearson_p(1.5, 10).is_err());
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_adjust(&[0.03]).unwrap(), vec![0.03]);
        let adj = bh_adjust(&[0.01, 0.04, 0.03, 0.005]).unwrap();
        for (a, e) in adj.iter().zip([0.02, 0.04, 0.04, 0.02]) {
            assert!((a - e).abs() < 1e-15, "{adj:?}");
        }
        assert_eq!(bh_adjust(&[0.05; 4]).unwrap(), vec![0.05; 4]);
        assert!(matches!(
            bh_adjust(&[0.1, 1.2]),
            Err(StatsError::OutOfRange { index: 1, .. })
        ));
        assert!(bh_adjust(&[]).unwrap().is_empty());
    }

    fn small_matrix() -> DailyMatrix {
        let dates: Vec<NaiveDate> = (1..=8)
            .map(|d| NaiveDate::from_ymd_opt(2022, 5, d).unwrap())
            .collect();
        let mood = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let near: Vec<f64> = mood.iter().enumerate().map(|(i, m)| m + 0.01 * (i % 2) as f64).collect();
        let noise = vec![3.0, -1.0, 2.0, 0.5, -2.0, 1.0, 0.0, 2.5];
        let col = |v: Vec<f64>| v.into_iter().map(Some).collect::<Vec<_>>();
        DailyMatrix::from_columns(
            dates,
            vec![
                (FeatureMeta::new("Mood", Aggregator::Raw, 0), col(mood)),
                (FeatureMeta::new("Noise", Aggregator::Raw, 0), col(noise)),
                (FeatureMeta::new("Near", Aggregator::Raw, 0), col(near)),
            ],
            "Mood",
        )
        .unwrap()
    }

    #[test]
    fn report_ranks_planted_feature_first_and_excludes_target() {
        let report = correlation_report(&small_matrix(), DEFAULT_SIGNIFICANCE).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].feature, "Near");
        assert!(report.rows[0].significant);
        assert!(report.row("Mood").is_none());
        assert!(report.rows.iter().all(|r| r.p_adj >= r.p_raw));
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let cm = correlation_matrix(&small_matrix());
        for i in 0..3 {
            assert_eq!(cm.get(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(cm.get(i, j), cm.get(j, i));
            }
        }
    }
}
