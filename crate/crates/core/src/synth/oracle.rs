//! Brute-force reference solvers for small instances.
//!
//! These evaluate definitions directly and share no code with the production
//! solvers they are used to check.

use ndarray::{ArrayView1, ArrayView2};

use super::SynthError;

pub const MAX_ORACLE_FEATURES: usize = 3;
pub const MAX_ORACLE_ROWS: usize = 200;
pub const MAX_ORACLE_PVALUES: usize = 10;

/// Weighted elastic-net objective, written out from its definition.
pub fn elastic_net_objective(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sw: &[f64],
    w: &[f64],
    alpha: f64,
    l1_ratio: f64,
) -> f64 {
    let mut weighted_sq = 0.0;
    let mut total_weight = 0.0;
    for i in 0..x.nrows() {
        let mut fitted = 0.0;
        for j in 0..x.ncols() {
            fitted += x[[i, j]] * w[j];
        }
        weighted_sq += sw[i] * (y[i] - fitted) * (y[i] - fitted);
        total_weight += sw[i];
    }
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for &wj in w {
        l1 += wj.abs();
        l2 += wj * wj;
    }
    weighted_sq / (2.0 * total_weight) + alpha * l1_ratio * l1 + alpha * (1.0 - l1_ratio) / 2.0 * l2
}

const GRID_POINTS: usize = 41;
const GOLDEN_ITERS: usize = 200;
const MAX_ROUNDS: usize = 20_000;

/// Minimizes the elastic-net objective by a dense grid over a box that grows
/// until the best grid point is interior, followed by exact line searches
/// (golden section) along coordinates, coordinate pairs and the last
/// displacement until the objective stops decreasing.
pub fn oracle_elastic_net(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sw: &[f64],
    alpha: f64,
    l1_ratio: f64,
) -> Result<Vec<f64>, SynthError> {
    let (n, p) = x.dim();
    if p > MAX_ORACLE_FEATURES || n > MAX_ORACLE_ROWS {
        return Err(SynthError::TooLarge(format!(
            "{n} rows x {p} features exceeds {MAX_ORACLE_ROWS} x {MAX_ORACLE_FEATURES}"
        )));
    }
    if p == 0 {
        return Ok(Vec::new());
    }
    let f = |w: &[f64]| elastic_net_objective(x, y, sw, w, alpha, l1_ratio);

    // grid stage
    let mut half_width = 1.0;
    let mut best = vec![0.0; p];
    for _ in 0..40 {
        let step = 2.0 * half_width / (GRID_POINTS - 1) as f64;
        let mut idx = vec![0usize; p];
        let mut best_val = f64::INFINITY;
        let mut best_idx = idx.clone();
        loop {
            let w: Vec<f64> = idx.iter().map(|&k| -half_width + k as f64 * step).collect();
            let v = f(&w);
            if v < best_val {
                best_val = v;
                best_idx = idx.clone();
                best = w;
            }
            // odometer increment
            let mut d = 0;
            while d < p {
                idx[d] += 1;
                if idx[d] < GRID_POINTS {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == p {
                break;
            }
        }
        let on_boundary = best_idx.iter().any(|&k| k == 0 || k == GRID_POINTS - 1);
        if !on_boundary {
            break;
        }
        half_width *= 4.0;
    }

    // line-search refinement
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for i in 0..p {
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        directions.push(e);
        for j in i + 1..p {
            for sign in [1.0, -1.0] {
                let mut d = vec![0.0; p];
                d[i] = 1.0;
                d[j] = sign;
                directions.push(d);
            }
        }
    }
    let mut w = best;
    let mut value = f(&w);
    for _ in 0..MAX_ROUNDS {
        let start = w.clone();
        let before = value;
        for d in &directions {
            value = line_minimize(&f, &mut w, d, value);
        }
        let shift: Vec<f64> = w.iter().zip(&start).map(|(a, b)| a - b).collect();
        if shift.iter().any(|s| *s != 0.0) {
            value = line_minimize(&f, &mut w, &shift, value);
        }
        if before - value <= 1e-15 * value.abs().max(1e-300) {
            break;
        }
    }
    Ok(w)
}

/// Moves `w` to the minimizer of the convex function `t -> f(w + t d)`.
fn line_minimize(f: &impl Fn(&[f64]) -> f64, w: &mut [f64], d: &[f64], current: f64) -> f64 {
    let at = |t: f64| -> f64 {
        let p: Vec<f64> = w.iter().zip(d).map(|(a, b)| a + t * b).collect();
        f(&p)
    };
    let scale = w.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let mut step = 1e-3 * scale;
    // bracket the minimizer
    let (mut lo, mut hi);
    if at(step) < current {
        lo = 0.0;
        while at(2.0 * step) < at(step) {
            lo = step;
            step *= 2.0;
            if step > 1e12 {
                break;
            }
        }
        hi = 2.0 * step;
    } else if at(-step) < current {
        hi = 0.0;
        while at(-2.0 * step) < at(-step) {
            hi = -step;
            step *= 2.0;
            if step > 1e12 {
                break;
            }
        }
        lo = -2.0 * step;
    } else {
        lo = -step;
        hi = step;
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (at(a), at(b));
    for _ in 0..GOLDEN_ITERS {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = at(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = at(b);
        }
        if hi - lo <= 1e-15 * scale {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let candidate = at(t);
    if candidate < current {
        for (wi, di) in w.iter_mut().zip(d) {
            *wi += t * di;
        }
        candidate
    } else {
        current
    }
}

/// Benjamini–Hochberg adjusted p-values evaluated literally as
/// `min_{j >= i} m p_(j) / j`, capped at 1, in input order.
pub fn oracle_bh(pvals: &[f64]) -> Result<Vec<f64>, SynthError> {
    let m = pvals.len();
    if m > MAX_ORACLE_PVALUES {
        return Err(SynthError::TooLarge(format!(
            "{m} p-values exceeds {MAX_ORACLE_PVALUES}"
        )));
    }
    let mut sorted: Vec<(f64, usize)> = pvals.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut out = vec![0.0; m];
    for i in 0..m {
        let mut smallest = f64::INFINITY;
        for (j, item) in sorted.iter().enumerate().skip(i) {
            let candidate = m as f64 * item.0 / (j + 1) as f64;
            if candidate < smallest {
                smallest = candidate;
            }
        }
        out[sorted[i].1] = if smallest > 1.0 { 1.0 } else { smallest };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bh_oracle_basics() {
        assert_eq!(oracle_bh(&[0.03]).unwrap(), vec![0.03]);
        let adj = oracle_bh(&[0.01, 0.04, 0.03, 0.005]).unwrap();
        for (a, e) in adj.iter().zip([0.02, 0.04, 0.04, 0.02]) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!(oracle_bh(&[0.5; 11]).is_err());
    }

    #[test]
    fn matches_ols_without_penalty() {
        // orthogonal columns, OLS_j = x_j·y / x_j·x_j
        let x = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let y = array![3.0, 1.0, -1.0, -2.5];
        let w = oracle_elastic_net(x.view(), y.view(), &[1.0; 4], 0.0, 1.0).unwrap();
        assert!((w[0] - 7.5 / 4.0).abs() < 1e-7, "{w:?}");
        assert!((w[1] - 3.5 / 4.0).abs() < 1e-7, "{w:?}");
    }

    #[test]
    fn matches_lasso_closed_form_on_orthonormal_design() {
        // columns with x_j·x_j / n = 1 and orthogonal: w_j = S(x_j·y / n, α)
        let x = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let y = array![3.0, 1.0, -1.0, -2.5];
        let alpha = 0.5;
        let w = oracle_elastic_net(x.view(), y.view(), &[1.0; 4], alpha, 1.0).unwrap();
        let soft = |z: f64| z.signum() * (z.abs() - alpha).max(0.0);
        assert!((w[0] - soft(7.5 / 4.0)).abs() < 1e-7);
        assert!((w[1] - soft(3.5 / 4.0)).abs() < 1e-7);
    }

    #[test]
    fn refuses_large_instances() {
        let x = ndarray::Array2::<f64>::zeros((10, 4));
        let y = ndarray::Array1::<f64>::zeros(10);
        assert!(matches!(
            oracle_elastic_net(x.view(), y.view(), &[1.0; 10], 0.1, 0.5),
            Err(SynthError::TooLarge(_))
        ));
    }
}
