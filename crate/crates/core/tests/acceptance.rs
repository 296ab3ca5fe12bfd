//! Acceptance gate. Runs every criterion, prints one line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use moodlens::elasticnet::{
    expanding_window_folds, fit, sample_weight, time_series_split, FitOptions, GridSearchConfig,
    LinearModel, SampleWeights,
};
use moodlens::explain::{contributions, render_chart, ChartData, ChartSpec, GREEN, NEUTRAL, RED};
use moodlens::featurize::{ColumnStats, Standardizer};
use moodlens::ingest::{import_manifest, read_store, write_store};
use moodlens::mlp::Network;
use moodlens::pipeline::{build_design, featurize, target_lag_count, train_linear, Design};
use moodlens::report::{table1_csv, table2_csv, TABLE1_HEADER, TABLE2_HEADER};
use moodlens::stats::{bh_adjust, correlation_report, pacf, pearson_p, select_lag_count};
use moodlens::synth::{elastic_net_objective, generate, oracle_bh, oracle_elastic_net, SynthConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Array2<f64>, Array1<f64>, Vec<f64>) {
    let x = Array2::from_shape_fn((n, p), |_| normal(rng));
    let beta: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
    let y = Array1::from_shape_fn(n, |i| {
        (0..p).map(|j| x[[i, j]] * beta[j]).sum::<f64>() + normal(rng)
    });
    let sw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    (x, y, sw)
}

/// Largest violation of the elastic-net optimality conditions, computed from
/// the gradient definition.
fn kkt_gap(x: ArrayView2<f64>, y: ArrayView1<f64>, sw: &[f64], w: &[f64], alpha: f64, rho: f64) -> f64 {
    let total: f64 = sw.iter().sum();
    let mut worst = 0.0_f64;
    for j in 0..x.ncols() {
        let mut g = 0.0;
        for i in 0..x.nrows() {
            let fitted: f64 = (0..x.ncols()).map(|k| x[[i, k]] * w[k]).sum();
            g -= sw[i] * x[[i, j]] * (y[i] - fitted) / total;
        }
        let gap = if w[j] != 0.0 {
            (g + alpha * (1.0 - rho) * w[j] + alpha * rho * w[j].signum()).abs()
        } else {
            (g.abs() - alpha * rho).max(0.0)
        };
        worst = worst.max(gap);
    }
    worst
}

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases: Vec<_> = (0..50)
        .map(|_| {
            let p = rng.random_range(1..=3);
            let n = rng.random_range(10..=200);
            let (x, y, sw) = random_problem(&mut rng, n, p);
            let alpha = rng.random_range(0.01..=1.0);
            let rho = [0.0, 0.5, 1.0][rng.random_range(0..3)];
            (x, y, sw, alpha, rho)
        })
        .collect();
    let gaps: Vec<f64> = cases
        .par_iter()
        .map(|(x, y, sw, alpha, rho)| {
            let solver = fit(x.view(), y.view(), sw, *alpha, *rho, FitOptions::default()).unwrap();
            let oracle = oracle_elastic_net(x.view(), y.view(), sw, *alpha, *rho).unwrap();
            elastic_net_objective(x.view(), y.view(), sw, &solver.weights, *alpha, *rho)
                - elastic_net_objective(x.view(), y.view(), sw, &oracle, *alpha, *rho)
        })
        .collect();
    let worst = gaps.iter().copied().fold(f64::MIN, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs < 60.0,
        format!("max(solver - oracle objective) = {worst:.2e} over 50 instances in {secs:.1}s"),
    )
}

/// Columns with `x_j·x_k / n = δ_jk`.
fn orthonormal_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < p {
        let mut v: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|a| a / norm).collect());
    }
    let scale = (n as f64).sqrt();
    Array2::from_shape_fn((n, p), |(i, j)| cols[j][i] * scale)
}

fn c2_orthonormal_lasso() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let n = rng.random_range(20..120);
        let p = rng.random_range(1..8);
        let x = orthonormal_design(&mut rng, n, p);
        let y = Array1::from_shape_fn(n, |_| 2.0 * normal(&mut rng));
        let alpha = rng.random_range(0.01..1.0);
        let w = fit(x.view(), y.view(), &vec![1.0; n], alpha, 1.0, FitOptions::default())
            .unwrap()
            .weights;
        for j in 0..p {
            let ols: f64 = x.column(j).iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            let expected = ols.signum() * (ols.abs() - alpha).max(0.0);
            worst = worst.max((w[j] - expected).abs());
        }
    }
    outcome(worst < 1e-8, format!("max |w - S(OLS, α)| = {worst:.2e} over 20 instances"))
}

fn c3_kkt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for _ in 0..60 {
        let p = rng.random_range(1..25);
        let n = rng.random_range(15..150);
        let (x, y, sw) = random_problem(&mut rng, n, p);
        let alpha = 10f64.powf(rng.random_range(-3.0..0.5));
        let rho = [0.0, 0.1, 0.5, 0.9, 1.0][rng.random_range(0..5)];
        let out = fit(x.view(), y.view(), &sw, alpha, rho, FitOptions::default()).unwrap();
        if out.converged {
            checked += 1;
            worst = worst.max(kkt_gap(x.view(), y.view(), &sw, &out.weights, alpha, rho));
        }
    }
    outcome(
        worst < 1e-5 && checked > 50,
        format!("max KKT violation {worst:.2e} over {checked} converged fits"),
    )
}

fn c4_bh_exhaustive() -> Outcome {
    let grid: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
    let mut total = 0u64;
    let mut mismatches = 0u64;
    for len in 1..=6u32 {
        let count = grid.len().pow(len);
        let (t, m) = (0..count)
            .into_par_iter()
            .map(|mut code| {
                let p: Vec<f64> = (0..len)
                    .map(|_| {
                        let v = grid[code % grid.len()];
                        code /= grid.len();
                        v
                    })
                    .collect();
                let fast = bh_adjust(&p).unwrap();
                let slow = oracle_bh(&p).unwrap();
                let bad = fast.iter().zip(&slow).any(|(a, b)| (a - b).abs() > 1e-12);
                (1u64, bad as u64)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        total += t;
        mismatches += m;
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches over {total} lists"))
}

/// Two-sided null p-value of a correlation by quadrature: under the null,
/// r = cos θ with density ∝ sin^(n-3) θ on [0, π].
fn pearson_p_quadrature(r: f64, n: usize) -> f64 {
    let simpson = |a: f64, b: f64| -> f64 {
        let panels = 20_000;
        let h = (b - a) / panels as f64;
        let f = |t: f64| t.sin().powi(n as i32 - 3);
        let mut s = f(a) + f(b);
        for k in 1..panels {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    simpson(0.0, r.abs().acos()) / simpson(0.0, std::f64::consts::FRAC_PI_2)
}

fn c5_pearson_p() -> Outcome {
    let mut worst = 0.0_f64;
    for n in [5usize, 12, 30, 100] {
        for k in -9..=9 {
            let r = k as f64 / 10.0;
            let got = pearson_p(r, n).unwrap();
            worst = worst.max((got - pearson_p_quadrature(r, n)).abs());
        }
    }
    outcome(worst < 1e-6, format!("max |p - quadrature| = {worst:.2e}"))
}

fn simulate_ar(rng: &mut ChaCha8Rng, coefs: &[f64], n: usize) -> Vec<f64> {
    let burn = 500;
    let mut x = vec![0.0; n + burn];
    for t in 0..n + burn {
        let mut v = normal(rng);
        for (k, c) in coefs.iter().enumerate() {
            if t > k {
                v += c * x[t - k - 1];
            }
        }
        x[t] = v;
    }
    x.split_off(burn)
}

fn c6_pacf() -> Outcome {
    let mut err_sum = 0.0;
    let mut ar1_hits = 0;
    let mut ar2_hits = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let s = simulate_ar(&mut rng, &[0.6], 2000);
        let r = pacf(&s, 10).unwrap();
        err_sum += (r.coefficients[0] - 0.6).abs();
        ar1_hits += (select_lag_count(&r.coefficients, r.band) == 1) as usize;
        let s = simulate_ar(&mut rng, &[0.5, 0.3], 2000);
        let r = pacf(&s, 10).unwrap();
        ar2_hits += (select_lag_count(&r.coefficients, r.band) == 2) as usize;
    }
    let mean_err = err_sum / 20.0;
    outcome(
        mean_err < 0.05 && ar1_hits >= 16 && ar2_hits >= 16,
        format!("mean |φ11 - 0.6| = {mean_err:.4}, K=1 in {ar1_hits}/20 AR(1), K=2 in {ar2_hits}/20 AR(2)"),
    )
}

fn c7_sample_weight() -> Outcome {
    let w0 = sample_weight(0.0);
    let first_zero = (0..100_000u32)
        .find(|&i| sample_weight(i as f64) == 0.0)
        .expect("weight reaches zero");
    let years = first_zero as f64 / 365.25;
    let pass = (0.99..=1.005).contains(&w0)
        && (first_zero as i64 - 29_175).abs() <= 2
        && (years - 82.0).abs() <= 3.0
        && SampleWeights::decay(5).0.iter().all(|w| *w > 0.0);
    outcome(
        pass,
        format!("w(0) = {w0:.5}, first zero weight at age {first_zero} days ({years:.1} years)"),
    )
}

fn c8_gradient_check() -> Outcome {
    let mut worst = 0.0_f64;
    for case in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + case);
        let sizes = [rng.random_range(1..8), rng.random_range(2..17), rng.random_range(2..9), 1];
        let mut net = Network::with_sizes(&sizes, 0.01, case).unwrap();
        let params: Vec<f64> = net.parameters().iter().map(|p| p + 0.1 * normal(&mut rng)).collect();
        net.set_parameters(&params).unwrap();
        let n = rng.random_range(5..30);
        let x = Array2::from_shape_fn((n, sizes[0]), |_| normal(&mut rng));
        let y = Array1::from_shape_fn(n, |_| normal(&mut rng));
        let (_, analytic) = net.loss_and_gradients(x.view(), y.view()).unwrap();
        let h = 1e-5;
        let mut probe = net.clone();
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            probe.set_parameters(&p).unwrap();
            let up = probe.mse(x.view(), y.view()).unwrap();
            p[i] -= 2.0 * h;
            probe.set_parameters(&p).unwrap();
            let down = probe.mse(x.view(), y.view()).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e} over 20 networks"))
}

fn unit_standardizer(target: &str, mean: f64, std: f64) -> Standardizer {
    Standardizer {
        columns: vec![ColumnStats {
            name: target.into(),
            mean,
            std,
        }],
        dropped: vec![],
    }
}

fn c9_contribution_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let p = rng.random_range(1..60);
        let weights: Vec<f64> = (0..p)
            .map(|_| if rng.random_bool(0.4) { 0.0 } else { normal(&mut rng) })
            .collect();
        let x: Vec<f64> = (0..p).map(|_| 3.0 * normal(&mut rng)).collect();
        let model = LinearModel {
            target: "Mood".into(),
            feature_names: (0..p).map(|j| format!("F{j}")).collect(),
            weights: weights.clone(),
            alpha: 0.1,
            l1_ratio: 1.0,
            residual_std: 0.5,
            standardizer: unit_standardizer("Mood", 5.0, 2.0),
            display_range: Some([1.0, 9.0]),
        };
        let b = contributions(&model, &x).unwrap();
        let yhat = model.predict(&x).unwrap();
        let sum: f64 = b.rows.iter().map(|r| r.contribution).sum();
        worst = worst.max((sum - yhat).abs()).max((b.total - yhat).abs());
    }
    outcome(worst < 1e-10, format!("max |Σ contributions - ŷ| = {worst:.2e} over 1000 draws"))
}

struct RecoveryRun {
    design: Design,
    recovered: bool,
    selected: usize,
    explained_variance: f64,
}

fn recovery_run(seed: u64) -> RecoveryRun {
    let config = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let out = generate(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    let imported = import_manifest(dir.path(), &out.manifest).unwrap();
    write_store(&dir.path().join("store"), &imported.series).unwrap();
    let series = read_store(&dir.path().join("store")).unwrap();
    let f = featurize(&series, &Default::default()).unwrap();
    let (k, _) = target_lag_count(&f.daily, 7).unwrap();
    let design = build_design(&f.daily, k, 0.8).unwrap();
    let trained = train_linear(&design, &GridSearchConfig::default(), FitOptions::default(), Some([1.0, 9.0])).unwrap();
    let selected_bases: BTreeSet<&str> = trained
        .model
        .selected()
        .iter()
        .filter_map(|(name, _)| {
            let c = design.standardized.column_index(name)?;
            Some(design.standardized.features[c].base.as_str())
        })
        .collect();
    let recovered = out.truth.support_names().iter().all(|t| selected_bases.contains(t));
    RecoveryRun {
        recovered,
        selected: trained.model.selected().len(),
        explained_variance: trained.test.explained_variance,
        design,
    }
}

fn c10_recovery(runs: &[RecoveryRun], secs: f64) -> Outcome {
    let hits = runs.iter().filter(|r| r.recovered).count();
    let mean_ev = runs.iter().map(|r| r.explained_variance).sum::<f64>() / runs.len() as f64;
    let evs: Vec<String> = runs.iter().map(|r| format!("{:.2}", r.explained_variance)).collect();
    let sizes: Vec<String> = runs.iter().map(|r| r.selected.to_string()).collect();
    outcome(
        hits >= 8 && mean_ev >= 0.55 && secs < 300.0,
        format!(
            "support recovered in {hits}/10 seeds, mean test EV {mean_ev:.3} [{}], selected sizes [{}], {secs:.0}s",
            evs.join(" "),
            sizes.join(" ")
        ),
    )
}

fn c11_standardization(runs: &[RecoveryRun]) -> Outcome {
    let mut worst_mean = 0.0_f64;
    let mut worst_std = 0.0_f64;
    for run in runs {
        let m = &run.design.standardized;
        let train = run.design.train_rows();
        for c in 0..m.n_cols() {
            let v: Vec<f64> = train.iter().filter_map(|&r| m.get(r, c)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let std = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
            worst_mean = worst_mean.max(mean.abs());
            worst_std = worst_std.max((std - 1.0).abs());
        }
    }
    outcome(
        worst_mean < 1e-10 && worst_std < 1e-10,
        format!("max |mean| = {worst_mean:.1e}, max |std - 1| = {worst_std:.1e}"),
    )
}

fn c12_time_ordering(runs: &[RecoveryRun]) -> Outcome {
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut check = |train: &[NaiveDate], test: &[NaiveDate]| {
        checked += 1;
        let latest = train.iter().max();
        let earliest = test.iter().min();
        if train.is_empty() || test.is_empty() || latest >= earliest {
            violations += 1;
        }
    };
    for run in runs {
        let d = &run.design;
        let dates = |rows: &[usize]| -> Vec<NaiveDate> { rows.iter().map(|&r| d.standardized.dates[r]).collect() };
        let train = d.train_rows();
        check(&dates(&train), &dates(&d.test_rows()));
        for fold in expanding_window_folds(train.len(), 5).unwrap() {
            check(&dates(&train[fold.train.clone()]), &dates(&train[fold.validation.clone()]));
        }
    }
    // every split and fold layout on gapped date sequences
    let mut rng = ChaCha8Rng::seed_from_u64(1212);
    for n in 5..=200usize {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let mut day = 0;
        let dates: Vec<NaiveDate> = (0..n)
            .map(|_| {
                day += rng.random_range(1..4);
                start + Duration::days(day)
            })
            .collect();
        for f in 1..20 {
            let s = time_series_split(n, f as f64 / 20.0).unwrap();
            check(&dates[s.train.clone()], &dates[s.test.clone()]);
        }
        for folds in 2..=6 {
            if let Ok(all) = expanding_window_folds(n, folds) {
                for fold in all {
                    check(&dates[fold.train.clone()], &dates[fold.validation.clone()]);
                }
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations in {checked} splits and folds"))
}

fn chart_specs() -> Vec<ChartSpec> {
    let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let spec = |title: &str, data: ChartData| ChartSpec {
        title: title.into(),
        width: 640,
        height: 420,
        data,
    };
    vec![
        spec(
            "Mood estimate",
            ChartData::Waterfall {
                rows: vec![
                    ("HumidInMax()".into(), -0.31),
                    ("HeartPoints".into(), 0.22),
                    ("Steps".into(), 0.0),
                    ("MoodYesterday".into(), 0.05),
                ],
                prediction: -0.04,
                half_width: 1.2,
            },
        ),
        spec(
            "Steps",
            ChartData::Bar {
                feature: "Steps".into(),
                weight: 0.078,
                difference: -1.4,
            },
        ),
        spec(
            "HeartPoints",
            ChartData::Triangle {
                feature: "HeartPoints".into(),
                target: "Mood".into(),
                points: (0..30).map(|k| [k as f64, 5.0 + ((k * 7) % 5) as f64 / 2.0]).collect(),
                feature_mean: 14.5,
                feature_std: 8.6,
                target_mean: 6.0,
                target_std: 1.9,
                weight: 0.101,
                today: 25.0,
            },
        ),
        spec(
            "Mood",
            ChartData::TimeSeries {
                label: "Mood".into(),
                dates: (0..40).map(|d| start + Duration::days(d)).collect(),
                values: (0..40)
                    .map(|d| (d % 9 != 4).then(|| 5.0 + ((d * 13) % 7) as f64 / 3.0))
                    .collect(),
                window: 7,
            },
        ),
        spec(
            "Mood vs HumidInMax()",
            ChartData::Scatter {
                x_label: "HumidInMax()".into(),
                y_label: "Mood".into(),
                points: (0..25).map(|k| [40.0 + k as f64, 8.0 - 0.1 * k as f64 + ((k * 5) % 3) as f64 * 0.3]).collect(),
            },
        ),
    ]
}

fn color_rule_violations(doc: &roxmltree::Document) -> usize {
    let mut bad = 0;
    for node in doc.descendants().filter(|n| n.is_element()) {
        let paint: Vec<&str> = ["fill", "stroke"].iter().filter_map(|a| node.attribute(*a)).collect();
        let value = node.attribute("data-value").and_then(|v| v.parse::<f64>().ok());
        let signed = node
            .attribute("class")
            .is_some_and(|c| c.split(' ').any(|t| t == "contribution" || t == "correlation"));
        if paint.contains(&GREEN) && !value.is_some_and(|v| v > 0.0) {
            bad += 1;
        }
        if paint.contains(&RED) && !value.is_some_and(|v| v < 0.0) {
            bad += 1;
        }
        if signed {
            let expected = match value {
                Some(v) if v > 0.0 => GREEN,
                Some(v) if v < 0.0 => RED,
                _ => NEUTRAL,
            };
            if !paint.contains(&expected) {
                bad += 1;
            }
        }
    }
    bad
}

fn c13_rendering() -> Outcome {
    let mut problems = Vec::new();
    let mut kinds = BTreeSet::new();
    for spec in chart_specs() {
        let kind = spec.kind().name();
        kinds.insert(kind);
        let a = render_chart(&spec).unwrap();
        let b = render_chart(&spec.clone()).unwrap();
        if a != b {
            problems.push(format!("{kind}: not deterministic"));
        }
        match roxmltree::Document::parse(&a) {
            Ok(doc) => {
                if doc.root_element().tag_name().name() != "svg" {
                    problems.push(format!("{kind}: root is not svg"));
                }
                let bad = color_rule_violations(&doc);
                if bad > 0 {
                    problems.push(format!("{kind}: {bad} color-rule violations"));
                }
            }
            Err(e) => problems.push(format!("{kind}: {e}")),
        }
    }
    outcome(
        problems.is_empty() && kinds.len() == 5,
        if problems.is_empty() {
            format!("{} chart kinds well-formed, deterministic, color rule held", kinds.len())
        } else {
            problems.join("; ")
        },
    )
}

fn c14_report_formats(runs: &[RecoveryRun]) -> Outcome {
    let run = &runs[0];
    let trained = train_linear(
        &run.design,
        &GridSearchConfig {
            alphas: vec![0.01, 0.12, 1.0],
            l1_ratios: vec![1.0],
            ..GridSearchConfig::default()
        },
        FitOptions::default(),
        None,
    )
    .unwrap();
    let corr = correlation_report(&run.design.lagged, 0.05).unwrap();
    let t1 = table1_csv(&trained.model);
    let t2 = table2_csv(&corr, Some(&trained.model));
    let mut problems = Vec::new();
    let t1_lines: Vec<&str> = t1.lines().collect();
    if t1_lines[0] != TABLE1_HEADER {
        problems.push("table 1 header".to_string());
    }
    let nonzero = trained.model.weights.iter().filter(|w| **w != 0.0).count();
    if t1_lines.len() - 1 != nonzero {
        problems.push(format!("table 1 has {} rows for {nonzero} non-zero weights", t1_lines.len() - 1));
    }
    if t1_lines[1..].iter().any(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap() == 0.0) {
        problems.push("table 1 lists a zero weight".into());
    }
    let t2_lines: Vec<&str> = t2.lines().collect();
    if t2_lines[0] != TABLE2_HEADER {
        problems.push("table 2 header".into());
    }
    let ps: Vec<f64> = t2_lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    if ps.windows(2).any(|w| w[1] < w[0]) {
        problems.push("table 2 not sorted by p-value".into());
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("table 1: {} rows, table 2: {} rows sorted by p-value", t1_lines.len() - 1, ps.len())
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, name: &'static str, out: Outcome| {
        println!(
            "criterion {id:02} [{}] {name}: {}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
        results.push((id, name, out));
    };
    record(1, "elastic-net oracle equivalence", c1_oracle_equivalence());
    record(2, "orthonormal lasso closed form", c2_orthonormal_lasso());
    record(3, "KKT conditions", c3_kkt());
    record(4, "BH exhaustive equivalence", c4_bh_exhaustive());
    record(5, "Pearson p-value", c5_pearson_p());
    record(6, "PACF lag selection", c6_pacf());
    record(7, "sample-weight formula", c7_sample_weight());
    record(8, "MLP gradient check", c8_gradient_check());
    record(9, "contribution identity", c9_contribution_identity());
    let t = Instant::now();
    let runs: Vec<RecoveryRun> = (0..10).map(recovery_run).collect();
    let secs = t.elapsed().as_secs_f64();
    record(10, "synthetic end-to-end recovery", c10_recovery(&runs, secs));
    record(11, "standardization", c11_standardization(&runs));
    record(12, "time ordering", c12_time_ordering(&runs));
    record(13, "rendering", c13_rendering());
    record(14, "report formats", c14_report_formats(&runs));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
