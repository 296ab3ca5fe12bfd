//! Cyclic coordinate descent for the sample-weighted elastic net
//!
//! ```text
//! (1 / (2 Σ sw)) Σ sw_i (y_i - x_i·w)² + α ρ ||w||₁ + α (1 - ρ) / 2 ||w||₂²
//! ```
//!
//! No intercept is fitted; inputs are expected to be standardized.

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::{FitError, Result};

/// `sign(z) * max(|z| - gamma, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Converged once a full cycle moves no coordinate by more than this.
    pub tol: f64,
    /// Cap on coordinate cycles (full and active-set passes together).
    pub max_cycles: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-7,
            max_cycles: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub cycles: usize,
    /// False when the cycle cap was hit; `weights` is then the last iterate.
    pub converged: bool,
    pub objective: f64,
}

/// The weighted elastic-net objective at `w`.
pub fn objective(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sw: &[f64],
    w: &[f64],
    alpha: f64,
    l1_ratio: f64,
) -> f64 {
    let total: f64 = sw.iter().sum();
    let loss: f64 = x
        .rows()
        .into_iter()
        .zip(y.iter())
        .zip(sw)
        .map(|((row, yi), s)| {
            let pred: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            s * (yi - pred).powi(2)
        })
        .sum();
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    loss / (2.0 * total) + alpha * l1_ratio * l1 + 0.5 * alpha * (1.0 - l1_ratio) * l2
}

/// Gradient of the smooth squared-error part at `w`.
pub fn loss_gradient(x: ArrayView2<f64>, y: ArrayView1<f64>, sw: &[f64], w: &[f64]) -> Vec<f64> {
    let total: f64 = sw.iter().sum();
    let mut grad = vec![0.0; x.ncols()];
    for ((row, yi), s) in x.rows().into_iter().zip(y.iter()).zip(sw) {
        let resid = yi - row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        for (g, xij) in grad.iter_mut().zip(row.iter()) {
            *g -= s * xij * resid / total;
        }
    }
    grad
}

/// Largest violation of the elastic-net optimality conditions at `w`.
///
/// For `w_j != 0` this is `|g_j + α(1-ρ) w_j + αρ sign(w_j)|`, for `w_j = 0`
/// it is how far `|g_j|` exceeds `αρ`.
pub fn kkt_violation(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sw: &[f64],
    w: &[f64],
    alpha: f64,
    l1_ratio: f64,
) -> f64 {
    loss_gradient(x, y, sw, w)
        .iter()
        .zip(w)
        .map(|(&g, &wj)| {
            if wj != 0.0 {
                (g + alpha * (1.0 - l1_ratio) * wj + alpha * l1_ratio * wj.signum()).abs()
            } else {
                (g.abs() - alpha * l1_ratio).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub(crate) fn validate(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sw: &[f64],
    alpha: f64,
    l1_ratio: f64,
) -> Result<()> {
    if x.nrows() != y.len() || sw.len() != y.len() {
        return Err(FitError::ShapeMismatch(format!(
            "X has {} rows, y {}, sample weights {}",
            x.nrows(),
            y.len(),
            sw.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(FitError::TooFewRows { needed: 1, got: 0 });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(FitError::InvalidParameter(format!("alpha = {alpha}")));
    }
    if !(0.0..=1.0).contains(&l1_ratio) {
        return Err(FitError::InvalidParameter(format!("l1_ratio = {l1_ratio}")));
    }
    if sw.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || !(sw.iter().sum::<f64>() > 0.0) {
        return Err(FitError::InvalidParameter(
            "sample weights must be non-negative with positive sum".into(),
        ));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    Ok(())
}

/// Long fits switch the active-set passes to a Gram matrix of the active
/// columns, which makes a coordinate update cost O(|active|) instead of O(n).
const GRAM_AFTER_CYCLES: usize = 100;

/// Weighted Gram matrix `Σ_i s_i x_ij x_ik` over one active set, row-major.
struct ActiveGram {
    active: Vec<usize>,
    matrix: Vec<f64>,
}

impl ActiveGram {
    fn new(active: Vec<usize>, weighted: &Array2<f64>, cols: &Array2<f64>) -> Self {
        let a = active.len();
        let mut matrix = vec![0.0; a * a];
        for u in 0..a {
            let wu = weighted.row(active[u]);
            let wu = wu.as_slice().expect("contiguous column");
            for v in u..a {
                let g = dot(wu, cols.row(active[v]).as_slice().expect("contiguous column"));
                matrix[u * a + v] = g;
                matrix[v * a + u] = g;
            }
        }
        ActiveGram { active, matrix }
    }
}

impl ActiveGram {
    /// Objective up to a constant for weights supported on the active set.
    fn objective(&self, linear: &[f64], w: &[f64], l1: f64, l2: f64) -> f64 {
        let a = self.active.len();
        let mut f = 0.0;
        for u in 0..a {
            let row = &self.matrix[u * a..(u + 1) * a];
            let gw: f64 = row.iter().zip(w).map(|(x, y)| x * y).sum();
            f += 0.5 * w[u] * gw - linear[u] * w[u] + l1 * w[u].abs() + 0.5 * l2 * w[u] * w[u];
        }
        f
    }
}

/// Iterates kept for one Anderson extrapolation step.
const ANDERSON_DEPTH: usize = 5;

/// Anderson extrapolation from consecutive iterates: the affine combination
/// of the last iterates whose combined step is smallest.
fn extrapolate(history: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = history.len() - 1;
    let diffs: Vec<Vec<f64>> = (0..k)
        .map(|i| history[i + 1].iter().zip(&history[i]).map(|(a, b)| a - b).collect())
        .collect();
    let mut m = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = diffs[i].iter().zip(&diffs[j]).map(|(a, b)| a * b).sum();
        }
        m[i][k] = 1.0;
    }
    let scale = (0..k).map(|i| m[i][i]).sum::<f64>();
    if !(scale > 0.0) {
        return None;
    }
    for (i, row) in m.iter_mut().enumerate() {
        row[i] += 1e-10 * scale;
    }
    let z = solve(m)?;
    let total: f64 = z.iter().sum();
    if !(total.abs() > 0.0) || !total.is_finite() {
        return None;
    }
    let n = history[0].len();
    let mut out = vec![0.0; n];
    for (c, iterate) in z.iter().zip(&history[1..]) {
        for (o, v) in out.iter_mut().zip(iterate) {
            *o += c / total * v;
        }
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = m.len();
    for col in 0..k {
        let pivot = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            for c in col..=k {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][k] - s) / m[r][r];
    }
    Some(x)
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ac, ar) = a.split_at(a.len() - a.len() % 8);
    let (bc, br) = b.split_at(ac.len());
    for (x, y) in ac.chunks_exact(8).zip(bc.chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// Fits from `w = 0`.
pub fn fit(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sw: &[f64],
    alpha: f64,
    l1_ratio: f64,
    options: FitOptions,
) -> Result<FitResult> {
    fit_from(x, y, sw, alpha, l1_ratio, &vec![0.0; x.ncols()], options, None)
}

/// Coordinate descent starting at `init`. When `trace` is given, the
/// objective after every cycle is appended to it.
///
/// A cycle over all coordinates alternates with cycles restricted to the
/// non-zero coordinates until those settle; convergence is only declared
/// after a full cycle.
#[allow(clippy::too_many_arguments)]
pub fn fit_from(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sw: &[f64],
    alpha: f64,
    l1_ratio: f64,
    init: &[f64],
    options: FitOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<FitResult> {
    validate(x, y, sw, alpha, l1_ratio)?;
    let (n, p) = x.dim();
    if init.len() != p {
        return Err(FitError::ShapeMismatch(format!(
            "initial weights have length {}, expected {p}",
            init.len()
        )));
    }
    let total: f64 = sw.iter().sum();
    let scaled: Vec<f64> = sw.iter().map(|s| s / total).collect();
    // columns stored contiguously
    let cols: Array2<f64> = x.t().as_standard_layout().into_owned();
    let col_sq: Vec<f64> = (0..p)
        .map(|j| {
            cols.row(j)
                .iter()
                .zip(&scaled)
                .map(|(v, s)| s * v * v)
                .sum()
        })
        .collect();
    let l1 = alpha * l1_ratio;
    let l2 = alpha * (1.0 - l1_ratio);

    let mut w = init.to_vec();
    let mut resid: Vec<f64> = (0..n)
        .map(|i| y[i] - x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        .collect();

    let weighted: Array2<f64> = Array2::from_shape_fn((p, n), |(j, i)| cols[[j, i]] * scaled[i]);

    let update = |j: usize, w: &mut [f64], resid: &mut [f64]| -> f64 {
        let col = cols.row(j);
        let col = col.as_slice().expect("contiguous column");
        let wcol = weighted.row(j);
        let old = w[j];
        let z = dot(wcol.as_slice().expect("contiguous column"), resid) + col_sq[j] * old;
        let denom = col_sq[j] + l2;
        let new = if denom > 0.0 {
            soft_threshold(z, l1) / denom
        } else {
            0.0
        };
        if new != old {
            let delta = new - old;
            for i in 0..n {
                resid[i] -= col[i] * delta;
            }
            w[j] = new;
        }
        (new - old).abs()
    };

    let mut cycles = 0;
    let mut converged = false;
    let mut gram: Option<ActiveGram> = None;
    let record = |w: &[f64], trace: &mut Option<&mut Vec<f64>>| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective(x, y, sw, w, alpha, l1_ratio));
        }
    };
    while cycles < options.max_cycles {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            max_change = max_change.max(update(j, &mut w, &mut resid));
        }
        cycles += 1;
        record(&w, &mut trace);
        if max_change < options.tol {
            converged = true;
            break;
        }
        // settle the active set before the next full cycle
        let active: Vec<usize> = (0..p).filter(|&j| w[j] != 0.0).collect();
        if active.is_empty() {
            continue;
        }
        if cycles >= GRAM_AFTER_CYCLES {
            if gram.as_ref().map(|g| &g.active) != Some(&active) {
                gram = Some(ActiveGram::new(active, &weighted, &cols));
            }
            let g = gram.as_ref().expect("gram built above");
            let start: Vec<f64> = g.active.iter().map(|&j| w[j]).collect();
            let mut corr: Vec<f64> = g
                .active
                .iter()
                .map(|&j| dot(weighted.row(j).as_slice().expect("contiguous column"), &resid))
                .collect();
            let a = g.active.len();
            // linear term of the smooth loss on the active set
            let linear: Vec<f64> = (0..a)
                .map(|u| corr[u] + (0..a).map(|v| g.matrix[u * a + v] * start[v]).sum::<f64>())
                .collect();
            let mut history: Vec<Vec<f64>> = Vec::with_capacity(ANDERSON_DEPTH + 1);
            while cycles < options.max_cycles {
                let mut max_change = 0.0_f64;
                for u in 0..a {
                    let j = g.active[u];
                    let old = w[j];
                    let z = corr[u] + col_sq[j] * old;
                    let denom = col_sq[j] + l2;
                    let new = if denom > 0.0 { soft_threshold(z, l1) / denom } else { 0.0 };
                    if new != old {
                        let delta = new - old;
                        let row = &g.matrix[u * a..(u + 1) * a];
                        for (c, gv) in corr.iter_mut().zip(row) {
                            *c -= delta * gv;
                        }
                        w[j] = new;
                    }
                    max_change = max_change.max((new - old).abs());
                }
                cycles += 1;
                record(&w, &mut trace);
                if max_change < options.tol {
                    break;
                }
                history.push(g.active.iter().map(|&j| w[j]).collect());
                if history.len() == ANDERSON_DEPTH + 1 {
                    let current = history.last().expect("non-empty history").clone();
                    if let Some(candidate) = extrapolate(&history) {
                        let f = |v: &[f64]| g.objective(&linear, v, l1, l2);
                        if f(&candidate) < f(&current) {
                            for (u, &j) in g.active.iter().enumerate() {
                                w[j] = candidate[u];
                            }
                            for u in 0..a {
                                let row = &g.matrix[u * a..(u + 1) * a];
                                corr[u] = linear[u] - row.iter().zip(&candidate).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    history.clear();
                }
            }
            for (u, &j) in g.active.iter().enumerate() {
                let delta = w[j] - start[u];
                if delta != 0.0 {
                    for (r, v) in resid.iter_mut().zip(cols.row(j)) {
                        *r -= v * delta;
                    }
                }
            }
        } else {
            while cycles < options.max_cycles {
                let mut max_change = 0.0_f64;
                for &j in &active {
                    max_change = max_change.max(update(j, &mut w, &mut resid));
                }
                cycles += 1;
                record(&w, &mut trace);
                if max_change < options.tol {
                    break;
                }
            }
        }
    }
    let objective = objective(x, y, sw, &w, alpha, l1_ratio);
    Ok(FitResult {
        weights: w,
        cycles,
        converged,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(0.0, 0.7), 0.0);
        assert_eq!(soft_threshold(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold(-0.3, 0.5), 0.0);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
    }

    #[test]
    fn unpenalized_exact_fit() {
        let x = array![[-1.5], [-0.5], [0.5], [1.5]];
        let y = Array1::from_iter(x.column(0).iter().copied());
        let fit = fit(x.view(), y.view(), &[1.0; 4], 0.0, 0.5, FitOptions::default()).unwrap();
        assert!((fit.weights[0] - 1.0).abs() < 1e-8);
        assert!(fit.converged);
    }

    #[test]
    fn ridge_one_feature_closed_form() {
        // w = (x·y/n) / (x·x/n + α)
        let x = array![[1.0], [-1.0], [2.0], [-2.0]];
        let y = array![2.0, -1.0, 3.0, -4.0];
        let alpha = 0.3;
        let fit = fit(x.view(), y.view(), &[1.0; 4], alpha, 0.0, FitOptions::default()).unwrap();
        let expected = (17.0 / 4.0) / (10.0 / 4.0 + alpha);
        assert!((fit.weights[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        let x = array![[1.0], [2.0]];
        let y = array![1.0, 2.0];
        let opts = FitOptions::default();
        assert!(matches!(
            fit(x.view(), y.view(), &[1.0], 0.1, 0.5, opts),
            Err(FitError::ShapeMismatch(_))
        ));
        assert!(matches!(
            fit(x.view(), y.view(), &[1.0, 1.0], -0.1, 0.5, opts),
            Err(FitError::InvalidParameter(_))
        ));
        assert!(matches!(
            fit(x.view(), y.view(), &[1.0, 1.0], 0.1, 1.5, opts),
            Err(FitError::InvalidParameter(_))
        ));
        assert!(matches!(
            fit(x.view(), y.view(), &[0.0, 0.0], 0.1, 0.5, opts),
            Err(FitError::InvalidParameter(_))
        ));
    }

    #[test]
    fn long_fits_through_active_gram_satisfy_kkt() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        // more columns than rows with correlated pairs: slow to settle
        let (n, p) = (40, 60);
        let base = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_fn((n, p), |(i, j)| base[[i, j]] + 3.0 * base[[i, j / 2]]);
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] - x[[i, 3]] + 0.1 * rng.random_range(-1.0..1.0));
        let sw: Vec<f64> = (0..n).map(|i| 0.5 + i as f64 / n as f64).collect();
        for (alpha, rho) in [(1e-3, 1.0), (5e-3, 0.9), (1e-2, 0.5)] {
            let out = fit(x.view(), y.view(), &sw, alpha, rho, FitOptions::default()).unwrap();
            assert!(out.cycles > GRAM_AFTER_CYCLES, "only {} cycles", out.cycles);
            assert!(out.converged);
            assert!(kkt_violation(x.view(), y.view(), &sw, &out.weights, alpha, rho) < 1e-5);
        }
    }

    #[test]
    fn extrapolation_of_a_geometric_sequence_hits_the_limit() {
        // x_k = 1 + 0.5^k in every coordinate has limit 1
        let history: Vec<Vec<f64>> = (0..=ANDERSON_DEPTH)
            .map(|k| vec![1.0 + 0.5f64.powi(k as i32), 2.0 - 0.5f64.powi(k as i32)])
            .collect();
        let limit = extrapolate(&history).unwrap();
        assert!((limit[0] - 1.0).abs() < 1e-6 && (limit[1] - 2.0).abs() < 1e-6, "{limit:?}");
    }

    #[test]
    fn cycle_cap_flags_non_convergence() {
        let x = array![[1.0, 0.999], [0.999, 1.0], [-1.0, -1.0]];
        let y = array![1.0, 0.5, -2.0];
        let opts = FitOptions {
            tol: 1e-15,
            max_cycles: 3,
        };
        let out = fit(x.view(), y.view(), &[1.0; 3], 0.0, 1.0, opts).unwrap();
        assert!(!out.converged);
        assert_eq!(out.cycles, 3);
    }
}
