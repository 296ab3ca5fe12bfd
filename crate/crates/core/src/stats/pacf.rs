//! Partial autocorrelation by the Durbin–Levinson recursion and lag selection.

use serde::{Deserialize, Serialize};

use super::{Result, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacfResult {
    /// `coefficients[k - 1]` is the partial autocorrelation at lag `k`.
    pub coefficients: Vec<f64>,
    /// Two-sided 95% significance band, `1.96 / sqrt(n)`.
    pub band: f64,
    pub selected_k: usize,
}

/// Sample autocorrelations `r_0..=r_max_lag` of the demeaned series, each
/// normalized by the lag-0 sum so the Toeplitz matrix stays positive
/// semi-definite.
pub fn autocorrelations(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(StatsError::DegenerateSeries);
    }
    Ok((0..=max_lag)
        .map(|k| {
            centered[k..]
                .iter()
                .zip(&centered[..n - k])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom
        })
        .collect())
}

pub fn pacf(series: &[f64], max_lag: usize) -> Result<PacfResult> {
    if max_lag == 0 || series.len() <= max_lag + 1 {
        return Err(StatsError::TooShort {
            needed: max_lag + 2,
            got: series.len(),
        });
    }
    let r = autocorrelations(series, max_lag)?;
    let mut coefficients = Vec::with_capacity(max_lag);
    // phi[j - 1] holds phi_{k, j} of the current order k
    let mut phi: Vec<f64> = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let num = r[k] - (1..k).map(|j| phi[j - 1] * r[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * r[j]).sum::<f64>();
        if !(den > 0.0) {
            return Err(StatsError::DegenerateSeries);
        }
        let phi_kk = num / den;
        if !phi_kk.is_finite() {
            return Err(StatsError::DegenerateSeries);
        }
        let prev = phi.clone();
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - phi_kk * prev[k - j - 1];
        }
        phi.push(phi_kk);
        coefficients.push(phi_kk);
    }
    let band = 1.96 / (series.len() as f64).sqrt();
    let selected_k = select_lag_count(&coefficients, band);
    Ok(PacfResult {
        coefficients,
        band,
        selected_k,
    })
}

/// Number of leading lags that are significant (outside the band), stopping
/// at the first insignificant one. Never less than 1.
pub fn select_lag_count(coefficients: &[f64], band: f64) -> usize {
    let leading = coefficients
        .iter()
        .position(|c| c.abs() < band)
        .unwrap_or(coefficients.len());
    leading.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_selection_rules() {
        let band = 0.1;
        assert_eq!(select_lag_count(&[0.5, 0.4, 0.3, 0.2, 0.05, 0.3], band), 4);
        assert_eq!(select_lag_count(&[0.01, 0.5], band), 1);
        assert_eq!(select_lag_count(&[0.5, 0.3, 0.02, 0.4], band), 2);
        assert_eq!(select_lag_count(&[0.5, 0.3], band), 2);
    }

    #[test]
    fn first_coefficient_is_lag_one_autocorrelation() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 5.0, 8.0];
        let r = autocorrelations(&x, 3).unwrap();
        let p = pacf(&x, 3).unwrap();
        assert_eq!(p.coefficients[0], r[1]);
        assert!(p.coefficients.iter().all(|c| c.abs() <= 1.0));
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(pacf(&[2.0; 20], 3), Err(StatsError::DegenerateSeries));
        assert!(matches!(pacf(&[1.0, 2.0, 3.0], 2), Err(StatsError::TooShort { .. })));
        let mut spike = vec![0.0; 30];
        spike[12] = 1.0;
        let p = pacf(&spike, 5).unwrap();
        assert!(p.coefficients.iter().all(|c| c.is_finite() && c.abs() <= 1.0));
    }
}
