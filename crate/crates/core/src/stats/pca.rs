//! Explained-variance spectrum via cyclic Jacobi eigenvalue iteration.

use ndarray::{Array2, Axis};

use super::{Result, StatsError};

pub const MAX_SWEEPS: usize = 100;
pub const OFF_DIAGONAL_TOL: f64 = 1e-10;

/// Eigenvalues of a symmetric matrix, unsorted, by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(matrix: &Array2<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "matrix must be square");
    let mut a = matrix.clone();
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| 2.0 * a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off < OFF_DIAGONAL_TOL * scale {
            return Ok((0..n).map(|i| a[[i, i]]).collect());
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
            }
        }
    }
    Err(StatsError::ConvergenceFailure(MAX_SWEEPS))
}

/// Population covariance of the columns of `data` (rows = observations).
pub fn covariance(data: &Array2<f64>) -> Array2<f64> {
    let n = data.nrows() as f64;
    let mean = data.mean_axis(Axis(0)).expect("non-empty data");
    let centered = data - &mean;
    centered.t().dot(&centered) / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaSpectrum {
    /// Covariance eigenvalues, descending, negatives from round-off clipped to 0.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues normalized to sum to 1.
    pub ratios: Vec<f64>,
}

impl PcaSpectrum {
    /// How many components explain more than `fraction` of the variance.
    pub fn components_above(&self, fraction: f64) -> usize {
        self.ratios.iter().filter(|&&r| r > fraction).count()
    }
}

pub fn pca_explained(data: &Array2<f64>) -> Result<PcaSpectrum> {
    if data.ncols() < 2 {
        return Err(StatsError::TooFewFeatures(data.ncols()));
    }
    if data.nrows() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: data.nrows(),
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut eigenvalues: Vec<f64> = jacobi_eigenvalues(&covariance(data))?
        .into_iter()
        .map(|l| l.max(0.0))
        .collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(StatsError::DegenerateSeries);
    }
    let ratios = eigenvalues.iter().map(|l| l / total).collect();
    Ok(PcaSpectrum {
        eigenvalues,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_matrix_is_fixed_point() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let mut ev = jacobi_eigenvalues(&m).unwrap();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![1.0, 3.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let mut ev = jacobi_eigenvalues(&m).unwrap();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_feature_gives_zero_eigenvalue() {
        let data = array![[1.0, 1.0, 0.5], [2.0, 2.0, -1.0], [3.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let spec = pca_explained(&data).unwrap();
        assert!(spec.ratios[2].abs() < 1e-12);
        assert!((spec.ratios.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn needs_two_features() {
        let data = array![[1.0], [2.0]];
        assert_eq!(pca_explained(&data), Err(StatsError::TooFewFeatures(1)));
    }
}
