//! Synthetic tracking exports with a planted linear mood model.
//!
//! Every feature follows a latent daily level. Fast features are observed
//! several times a day around that level, slow features are measured every
//! few days and move linearly in between, daily features are observed once.
//! The target is a linear combination of the levels of the support features
//! plus an autoregressive term and gaussian noise.

pub mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Kind, SourceManifest, SourceSpec, TimestampFormat, ValueColumn};

pub use oracle::{elastic_net_objective, oracle_bh, oracle_elastic_net};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("instance too large for the reference solver: {0}")]
    TooLarge(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub days: usize,
    pub start: NaiveDate,
    pub n_fast: usize,
    pub n_slow: usize,
    pub n_daily: usize,
    /// Planted model: (feature name, coefficient on its daily level).
    pub support: Vec<(String, f64)>,
    pub noise_std: f64,
    /// When set, the noise scale is chosen so that the share of target
    /// variance not due to noise equals this value; `noise_std` is ignored.
    pub target_r2: Option<f64>,
    /// Coefficient on yesterday's target.
    pub target_ar: f64,
    pub target_offset: f64,
    pub target: String,
    pub samples_per_day: usize,
    /// Spread of fast samples around their daily level.
    pub intraday_std: f64,
    /// Days between slow-feature measurements.
    pub slow_period: usize,
    /// Probability that a fast or daily feature has no data on a day.
    pub missing_rate: f64,
    pub target_missing_rate: f64,
    /// Sensor range per feature; raw values are clipped to it.
    pub saturation: BTreeMap<String, [f64; 2]>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            days: 300,
            start: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            n_fast: 30,
            n_slow: 10,
            n_daily: 10,
            support: vec![
                ("Fast01".into(), 0.8),
                ("Slow01".into(), -0.6),
                ("Daily01".into(), 0.5),
            ],
            noise_std: 1.0,
            target_r2: Some(0.7),
            target_ar: 0.3,
            target_offset: 5.0,
            target: "Mood".into(),
            samples_per_day: 24,
            intraday_std: 0.5,
            slow_period: 7,
            missing_rate: 0.05,
            target_missing_rate: 0.05,
            saturation: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn feature_names(&self) -> Vec<(String, Kind)> {
        let mut out = Vec::new();
        for (prefix, count, kind) in [
            ("Fast", self.n_fast, Kind::Fast),
            ("Slow", self.n_slow, Kind::Slow),
            ("Daily", self.n_daily, Kind::Daily),
        ] {
            out.extend((1..=count).map(|k| (format!("{prefix}{k:02}"), kind)));
        }
        out
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.days < 2 {
            return bad(format!("need at least 2 days, got {}", self.days));
        }
        if self.samples_per_day == 0 || self.slow_period == 0 {
            return bad("samples_per_day and slow_period must be positive".into());
        }
        for (name, rate) in [
            ("missing_rate", self.missing_rate),
            ("target_missing_rate", self.target_missing_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} = {rate} outside [0, 1)"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite())
            || !(self.intraday_std >= 0.0 && self.intraday_std.is_finite())
        {
            return bad("noise scales must be finite and non-negative".into());
        }
        if let Some(r2) = self.target_r2 {
            if !(r2 > 0.0 && r2 < 1.0) {
                return bad(format!("target_r2 = {r2} outside (0, 1)"));
            }
        }
        if !self.target_ar.is_finite() || self.target_ar.abs() >= 1.0 {
            return bad(format!("target_ar = {} must lie in (-1, 1)", self.target_ar));
        }
        let names: Vec<String> = self.feature_names().into_iter().map(|f| f.0).collect();
        for (feature, coef) in &self.support {
            if !coef.is_finite() {
                return bad(format!("coefficient of {feature} is not finite"));
            }
            if !names.contains(feature) {
                return bad(format!("support feature {feature} is not generated"));
            }
        }
        for (feature, [lo, hi]) in &self.saturation {
            if !names.contains(feature) || !(lo < hi) {
                return bad(format!("bad saturation entry for {feature}: [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub target: String,
    pub support: Vec<(String, f64)>,
    pub target_ar: f64,
    pub target_offset: f64,
    pub noise_std: f64,
    /// `1 - var(noise) / var(target)` over the generated days.
    pub realized_r2: f64,
    pub features: Vec<(String, Kind)>,
    /// Latent daily level per feature, in raw units.
    #[serde(skip)]
    pub levels: BTreeMap<String, Vec<f64>>,
    /// Target per day before missingness is applied.
    #[serde(skip)]
    pub target_values: Vec<f64>,
}

impl GroundTruth {
    pub fn support_names(&self) -> Vec<&str> {
        self.support.iter().map(|s| s.0.as_str()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// File name → contents, the raw exports referenced by `manifest`.
    pub files: BTreeMap<String, String>,
    pub manifest: SourceManifest,
    pub truth: GroundTruth,
}

impl SynthOutput {
    /// Writes the exports, `manifest.toml` and `truth.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SynthError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let truth = serde_json::to_string_pretty(&self.truth).expect("truth serializes") + "\n";
        let extra = [
            (MANIFEST_FILE.to_string(), self.manifest.to_toml_string()),
            (TRUTH_FILE.to_string(), truth),
        ];
        for (name, contents) in self.files.iter().map(|(a, b)| (a.clone(), b.clone())).chain(extra) {
            let path = dir.join(&name);
            fs::write(&path, contents).map_err(io(&path))?;
        }
        Ok(())
    }
}

/// AR(1) series with coefficient `phi` and unit stationary variance.
fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let innovation = (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut prev: f64 = rng.sample(StandardNormal);
    for _ in 0..n {
        let e: f64 = rng.sample(StandardNormal);
        prev = phi * prev + innovation * e;
        out.push(prev);
    }
    out
}

fn variance(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
}

/// `y_t = signal_t + ar * y_{t-1} + scale * e_t` with `y_{-1} = 0`.
fn simulate_target(signal: &[f64], noise: &[f64], ar: f64, scale: f64) -> Vec<f64> {
    let mut prev = 0.0;
    signal
        .iter()
        .zip(noise)
        .map(|(s, e)| {
            prev = s + ar * prev + scale * e;
            prev
        })
        .collect()
}

fn r2_at(signal: &[f64], noise: &[f64], ar: f64, scale: f64) -> f64 {
    let y = simulate_target(signal, noise, ar, scale);
    let scaled: Vec<f64> = noise.iter().map(|e| scale * e).collect();
    1.0 - variance(&scaled) / variance(&y)
}

/// Bisection for the noise scale that gives `target` R².
fn calibrate_noise(signal: &[f64], noise: &[f64], ar: f64, target: f64) -> Result<f64, SynthError> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while r2_at(signal, noise, ar, hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(SynthError::InvalidConfig(format!(
                "R² {target} is not reachable with target_ar = {ar}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r2_at(signal, noise, ar, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn value_column(name: &str, kind: Kind, config: &SynthConfig) -> ValueColumn {
    ValueColumn {
        column: name.to_string(),
        feature: name.to_string(),
        unit: String::new(),
        kind,
        sensor_range: config.saturation.get(name).copied(),
    }
}

/// Generates exports and ground truth. Identical configs give identical bytes.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.days;
    let features = config.feature_names();
    let clip = |name: &str, v: f64| match config.saturation.get(name) {
        Some([lo, hi]) => v.clamp(*lo, *hi),
        None => v,
    };
    let dates: Vec<NaiveDate> = (0..n)
        .map(|d| config.start + Duration::days(d as i64))
        .collect();

    let mut levels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut fast_cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut slow_knots: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut daily_cells: Vec<Vec<Option<f64>>> = Vec::new();
    let spd = config.samples_per_day;

    for (name, kind) in &features {
        match kind {
            Kind::Fast => {
                let level = ar1(&mut rng, n, 0.5);
                let mut cells = vec![None; n * spd];
                for day in 0..n {
                    if rng.random::<f64>() < config.missing_rate {
                        continue;
                    }
                    for k in 0..spd {
                        let e: f64 = rng.sample(StandardNormal);
                        cells[day * spd + k] = Some(clip(name, level[day] + config.intraday_std * e));
                    }
                }
                fast_cells.push(cells);
                levels.insert(name.clone(), level);
            }
            Kind::Slow => {
                let phase = rng.random_range(0..config.slow_period);
                let mut knot_days: Vec<usize> = (phase..n).step_by(config.slow_period).collect();
                knot_days.insert(0, 0);
                knot_days.push(n - 1);
                knot_days.dedup();
                let values = ar1(&mut rng, knot_days.len(), 0.7);
                let mut level = vec![0.0; n];
                for pair in knot_days.windows(2).zip(values.windows(2)) {
                    let ([d0, d1], [v0, v1]) = (pair.0, pair.1) else { unreachable!() };
                    for (d, slot) in level.iter_mut().enumerate().take(d1 + 1).skip(*d0) {
                        let t = (d - d0) as f64 / (d1 - d0) as f64;
                        *slot = v0 + t * (v1 - v0);
                    }
                }
                slow_knots.push(
                    knot_days
                        .iter()
                        .zip(&values)
                        .map(|(&d, &v)| (d, clip(name, v)))
                        .collect(),
                );
                levels.insert(name.clone(), level);
            }
            Kind::Daily | Kind::Binary => {
                let level = ar1(&mut rng, n, 0.5);
                let cells = level
                    .iter()
                    .map(|&v| (rng.random::<f64>() >= config.missing_rate).then(|| clip(name, v)))
                    .collect();
                daily_cells.push(cells);
                levels.insert(name.clone(), level);
            }
        }
    }

    let signal: Vec<f64> = (0..n)
        .map(|d| {
            config
                .support
                .iter()
                .map(|(name, coef)| coef * levels[name][d])
                .sum()
        })
        .collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let noise_std = match config.target_r2 {
        Some(r2) => calibrate_noise(&signal, &noise, config.target_ar, r2)?,
        None => config.noise_std,
    };
    let centered = simulate_target(&signal, &noise, config.target_ar, noise_std);
    let realized_r2 = if noise_std == 0.0 {
        1.0
    } else {
        r2_at(&signal, &noise, config.target_ar, noise_std)
    };
    let target_values: Vec<f64> = centered.iter().map(|y| config.target_offset + y).collect();
    let target_cells: Vec<Option<f64>> = target_values
        .iter()
        .map(|&y| (rng.random::<f64>() >= config.target_missing_rate).then_some(y))
        .collect();

    let mut files = BTreeMap::new();
    let mut sources = Vec::new();
    let names_of = |kind: Kind| -> Vec<&str> {
        features
            .iter()
            .filter(|f| f.1 == kind)
            .map(|f| f.0.as_str())
            .collect()
    };

    let fast_names = names_of(Kind::Fast);
    if !fast_names.is_empty() {
        let mut text = format!("time,{}\n", fast_names.join(","));
        let minutes = 1440 / spd as i64;
        for (day, date) in dates.iter().enumerate() {
            for k in 0..spd {
                let idx = day * spd + k;
                if fast_cells.iter().all(|c| c[idx].is_none()) {
                    continue;
                }
                let ts = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc()
                    + Duration::minutes(k as i64 * minutes);
                text.push_str(&ts.format("%Y-%m-%dT%H:%M:%SZ").to_string());
                for cells in &fast_cells {
                    text.push(',');
                    text.push_str(&fmt_cell(cells[idx]));
                }
                text.push('\n');
            }
        }
        files.insert("fast.csv".to_string(), text);
        sources.push(SourceSpec {
            id: "fast".into(),
            file: "fast.csv".into(),
            timestamp_column: "time".into(),
            timestamp_format: TimestampFormat::Rfc3339,
            values: fast_names.iter().map(|f| value_column(f, Kind::Fast, config)).collect(),
        });
    }

    let slow_names = names_of(Kind::Slow);
    if !slow_names.is_empty() {
        let mut text = format!("date,{}\n", slow_names.join(","));
        for (day, date) in dates.iter().enumerate() {
            if slow_knots.iter().all(|k| !k.contains_key(&day)) {
                continue;
            }
            text.push_str(&date.format("%Y-%m-%d").to_string());
            for knots in &slow_knots {
                text.push(',');
                text.push_str(&fmt_cell(knots.get(&day).copied()));
            }
            text.push('\n');
        }
        files.insert("slow.csv".to_string(), text);
        sources.push(SourceSpec {
            id: "slow".into(),
            file: "slow.csv".into(),
            timestamp_column: "date".into(),
            timestamp_format: TimestampFormat::Date,
            values: slow_names.iter().map(|f| value_column(f, Kind::Slow, config)).collect(),
        });
    }

    let daily_names = names_of(Kind::Daily);
    let mut text = format!("date,{}\n", daily_names.iter().chain([&config.target.as_str()]).copied().collect::<Vec<_>>().join(","));
    for (day, date) in dates.iter().enumerate() {
        text.push_str(&date.format("%Y-%m-%d").to_string());
        for cells in daily_cells.iter().map(|c| c[day]).chain([target_cells[day]]) {
            text.push(',');
            text.push_str(&fmt_cell(cells));
        }
        text.push('\n');
    }
    files.insert("daily.csv".to_string(), text);
    let mut daily_values: Vec<ValueColumn> = daily_names
        .iter()
        .map(|f| value_column(f, Kind::Daily, config))
        .collect();
    daily_values.push(value_column(&config.target, Kind::Daily, config));
    sources.push(SourceSpec {
        id: "daily".into(),
        file: "daily.csv".into(),
        timestamp_column: "date".into(),
        timestamp_format: TimestampFormat::Date,
        values: daily_values,
    });

    Ok(SynthOutput {
        files,
        manifest: SourceManifest { sources },
        truth: GroundTruth {
            seed: config.seed,
            target: config.target.clone(),
            support: config.support.clone(),
            target_ar: config.target_ar,
            target_offset: config.target_offset,
            noise_std,
            realized_r2,
            features,
            levels,
            target_values,
        },
    })
}
