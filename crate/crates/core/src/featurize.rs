//! Daily feature matrix construction.
//!
//! Raw series are reduced to one value per calendar day (UTC), sparse days and
//! features are dropped, lagged predictors are appended and everything is
//! standardized with statistics fit on training rows only.
//!
//! Column names follow the `<Base><Aggregate>()<Lag>` convention, e.g.
//! `CO2Median()`, `NoiseMax()Yesterday` or `MoodEreyesterday`. The 5th and
//! 95th percentile aggregates are labelled `Min()` and `Max()`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{Days, NaiveDate};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{samples_by_day, DateRange, Kind, RawSeries};

#[derive(Debug, Error, PartialEq)]
pub enum FeaturizeError {
    #[error("percentile of an empty list")]
    EmptyInput,
    #[error("series `{feature}` has {days} measurement day(s); interpolation needs at least 2")]
    TooFewSamples { feature: String, days: usize },
    #[error("nothing left after dropping sparse {0}")]
    AllDropped(&'static str),
    #[error("matrix has {rows} rows, too short for {lags} lag(s)")]
    TooShort { rows: usize, lags: usize },
    #[error("target `{0}` not found")]
    MissingTarget(String),
    #[error("target `{0}` is constant on the training rows")]
    ConstantTarget(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("no training rows")]
    NoTrainingRows,
}

pub type Result<T, E = FeaturizeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aggregator {
    Sum,
    Mean,
    Median,
    P05,
    P95,
    /// Daily-resolution value used as is.
    Raw,
}

impl Aggregator {
    pub const DAILY_SET: [Aggregator; 5] = [
        Aggregator::Sum,
        Aggregator::Mean,
        Aggregator::Median,
        Aggregator::P05,
        Aggregator::P95,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            Aggregator::Sum => "Sum()",
            Aggregator::Mean => "Mean()",
            Aggregator::Median => "Median()",
            Aggregator::P05 => "Min()",
            Aggregator::P95 => "Max()",
            Aggregator::Raw => "",
        }
    }

    pub fn apply(self, values: &[f64]) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        match self {
            Aggregator::Sum => values.iter().sum(),
            Aggregator::Mean | Aggregator::Raw => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Median => percentile_sorted(&sorted, 0.5),
            Aggregator::P05 => percentile_sorted(&sorted, 0.05),
            Aggregator::P95 => percentile_sorted(&sorted, 0.95),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Aggregator::Sum => "sum",
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
            Aggregator::P05 => "p05",
            Aggregator::P95 => "p95",
            Aggregator::Raw => "raw",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "sum" => Aggregator::Sum,
            "mean" => Aggregator::Mean,
            "median" => Aggregator::Median,
            "p05" => Aggregator::P05,
            "p95" => Aggregator::P95,
            "raw" => Aggregator::Raw,
            other => return Err(format!("unknown aggregator `{other}`")),
        })
    }
}

/// Suffix naming a lag in days: `Yesterday`, `Ereyesterday`, `3DaysAgo`, ...
pub fn lag_suffix(lag: u32) -> String {
    match lag {
        0 => String::new(),
        1 => "Yesterday".to_string(),
        2 => "Ereyesterday".to_string(),
        k => format!("{k}DaysAgo"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub base: String,
    pub aggregator: Aggregator,
    pub lag: u32,
}

impl FeatureMeta {
    pub fn new(base: impl Into<String>, aggregator: Aggregator, lag: u32) -> Self {
        let base = base.into();
        let name = format!("{base}{}{}", aggregator.suffix(), lag_suffix(lag));
        FeatureMeta {
            name,
            base,
            aggregator,
            lag,
        }
    }

    pub fn lagged(&self, lag: u32) -> Self {
        FeatureMeta::new(self.base.clone(), self.aggregator, lag)
    }
}

/// Linear-interpolation percentile of already sorted values.
///
/// With rank `h = (n-1) q` the result is `v[floor h] + (h - floor h)(v[ceil h] - v[floor h])`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(FeaturizeError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, q))
}

/// One daily feature column before alignment to a date grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyColumn {
    pub meta: FeatureMeta,
    pub values: BTreeMap<NaiveDate, f64>,
}

/// Reduces sub-daily samples to one value per day for each aggregator.
/// Days without samples are simply absent from the returned maps.
pub fn aggregate_daily(series: &RawSeries, aggregators: &[Aggregator]) -> Vec<DailyColumn> {
    let by_day = samples_by_day(series);
    aggregators
        .iter()
        .map(|&agg| DailyColumn {
            meta: FeatureMeta::new(series.feature.clone(), agg, 0),
            values: by_day.iter().map(|(d, v)| (*d, agg.apply(v))).collect(),
        })
        .collect()
}

/// Daily values of a slowly changing quantity by linear interpolation between
/// measurement days. Several measurements on one day are averaged. Days
/// before the first or after the last measurement are left out.
pub fn interpolate_slow(series: &RawSeries, dates: &[NaiveDate]) -> Result<DailyColumn> {
    let knots: Vec<(NaiveDate, f64)> = samples_by_day(series)
        .into_iter()
        .map(|(d, v)| (d, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    if knots.len() < 2 {
        return Err(FeaturizeError::TooFewSamples {
            feature: series.feature.clone(),
            days: knots.len(),
        });
    }
    let mut values = BTreeMap::new();
    let mut seg = 0;
    for &day in dates {
        if day < knots[0].0 || day > knots[knots.len() - 1].0 {
            continue;
        }
        while knots[seg + 1].0 < day {
            seg += 1;
        }
        let (d0, v0) = knots[seg];
        let (d1, v1) = knots[seg + 1];
        let span = (d1 - d0).num_days() as f64;
        let t = (day - d0).num_days() as f64 / span;
        values.insert(day, v0 + t * (v1 - v0));
    }
    Ok(DailyColumn {
        meta: FeatureMeta::new(series.feature.clone(), Aggregator::Raw, 0),
        values,
    })
}

/// Daily columns of a series according to its kind.
///
/// Fast series get the configured aggregates. Slow series are interpolated
/// (falling back to their raw daily values when measured on fewer than two
/// days). Daily series use the day mean, binary series the day maximum.
pub fn daily_columns(
    series: &RawSeries,
    aggregators: &[Aggregator],
    dates: &[NaiveDate],
) -> Vec<DailyColumn> {
    match series.kind {
        Kind::Fast => aggregate_daily(series, aggregators),
        Kind::Slow => match interpolate_slow(series, dates) {
            Ok(col) => vec![col],
            Err(_) => aggregate_daily(series, &[Aggregator::Raw]),
        },
        Kind::Daily => aggregate_daily(series, &[Aggregator::Raw]),
        Kind::Binary => {
            let by_day = samples_by_day(series);
            vec![DailyColumn {
                meta: FeatureMeta::new(series.feature.clone(), Aggregator::Raw, 0),
                values: by_day
                    .into_iter()
                    .map(|(d, v)| (d, v.into_iter().fold(f64::NEG_INFINITY, f64::max)))
                    .collect(),
            }]
        }
    }
}

/// Days × features table with a missingness mask. Masked cells hold NaN.
#[derive(Debug, Clone)]
pub struct DailyMatrix {
    pub dates: Vec<NaiveDate>,
    pub features: Vec<FeatureMeta>,
    pub target: String,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl PartialEq for DailyMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dates == other.dates
            && self.features == other.features
            && self.target == other.target
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), observed)| !observed || a.to_bits() == b.to_bits())
    }
}

impl DailyMatrix {
    /// Builds a matrix from aligned columns (`None` = missing).
    pub fn from_columns(
        dates: Vec<NaiveDate>,
        columns: Vec<(FeatureMeta, Vec<Option<f64>>)>,
        target: impl Into<String>,
    ) -> Result<Self> {
        let target = target.into();
        let n = dates.len();
        let p = columns.len();
        let mut values = vec![f64::NAN; n * p];
        let mut mask = vec![false; n * p];
        let mut features = Vec::with_capacity(p);
        for (c, (meta, col)) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(FeaturizeError::InvalidMatrix(format!(
                    "column `{}` has {} cells for {n} dates",
                    meta.name,
                    col.len()
                )));
            }
            for (r, cell) in col.into_iter().enumerate() {
                if let Some(v) = cell {
                    values[r * p + c] = v;
                    mask[r * p + c] = true;
                }
            }
            features.push(meta);
        }
        let m = DailyMatrix {
            dates,
            features,
            target,
            values,
            mask,
        };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        if self.dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FeaturizeError::InvalidMatrix(
                "dates must be strictly increasing".into(),
            ));
        }
        let mut seen = HashMap::new();
        for (c, f) in self.features.iter().enumerate() {
            if seen.insert(&f.name, c).is_some() {
                return Err(FeaturizeError::InvalidMatrix(format!(
                    "duplicate column `{}`",
                    f.name
                )));
            }
        }
        if let Some(i) = (0..self.values.len()).find(|&i| self.mask[i] && !self.values[i].is_finite())
        {
            let p = self.n_cols();
            return Err(FeaturizeError::InvalidMatrix(format!(
                "non-finite observed cell in `{}` on {}",
                self.features[i % p].name,
                self.dates[i / p]
            )));
        }
        if self.column_index(&self.target).is_none() {
            return Err(FeaturizeError::MissingTarget(self.target.clone()));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_cols(&self) -> usize {
        self.features.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.n_cols() + col;
        self.mask[i].then(|| self.values[i])
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.n_cols() + col]
    }

    fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let i = row * self.n_cols() + col;
        self.values[i] = value.unwrap_or(f64::NAN);
        self.mask[i] = value.is_some();
    }

    pub fn column(&self, col: usize) -> Vec<Option<f64>> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn target_index(&self) -> usize {
        self.column_index(&self.target)
            .expect("target column checked at construction")
    }

    /// Column indices of every non-target feature.
    pub fn predictor_indices(&self) -> Vec<usize> {
        let t = self.target_index();
        (0..self.n_cols()).filter(|&c| c != t).collect()
    }

    pub fn row_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn observed_fraction(&self, col: usize) -> f64 {
        if self.n_rows() == 0 {
            return 0.0;
        }
        (0..self.n_rows()).filter(|&r| self.is_observed(r, col)).count() as f64
            / self.n_rows() as f64
    }

    pub fn count_missing(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    fn columns(&self) -> Vec<(FeatureMeta, Vec<Option<f64>>)> {
        self.features
            .iter()
            .enumerate()
            .map(|(c, f)| (f.clone(), self.column(c)))
            .collect()
    }

    /// New matrix restricted to `rows` (in the given order) and `cols`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let dates = rows.iter().map(|&r| self.dates[r]).collect();
        let columns = cols
            .iter()
            .map(|&c| {
                (
                    self.features[c].clone(),
                    rows.iter().map(|&r| self.get(r, c)).collect(),
                )
            })
            .collect();
        DailyMatrix::from_columns(dates, columns, self.target.clone())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let cols: Vec<usize> = (0..self.n_cols()).collect();
        self.select(rows, &cols)
    }

    /// Rows whose target cell is observed.
    pub fn rows_with_target(&self) -> Vec<usize> {
        let t = self.target_index();
        (0..self.n_rows()).filter(|&r| self.is_observed(r, t)).collect()
    }

    /// Dense predictor block and target vector for `rows`, along with the
    /// predictor names in column order. Missing cells become NaN.
    pub fn design(&self, rows: &[usize]) -> (Array2<f64>, Array1<f64>, Vec<String>) {
        let preds = self.predictor_indices();
        let t = self.target_index();
        let x = Array2::from_shape_fn((rows.len(), preds.len()), |(i, j)| {
            self.values[rows[i] * self.n_cols() + preds[j]]
        });
        let y = Array1::from_shape_fn(rows.len(), |i| self.values[rows[i] * self.n_cols() + t]);
        let names = preds.iter().map(|&c| self.features[c].name.clone()).collect();
        (x, y, names)
    }

    /// Canonical CSV: first column ISO date, then one column per feature,
    /// missing cells empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for f in &self.features {
            out.push(',');
            out.push_str(&f.name);
        }
        out.push('\n');
        for r in 0..self.n_rows() {
            out.push_str(&self.dates[r].format("%Y-%m-%d").to_string());
            for c in 0..self.n_cols() {
                out.push(',');
                if let Some(v) = self.get(r, c) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Feature metadata as CSV (`name,base,aggregator,lag,role`).
    pub fn features_csv(&self) -> String {
        let mut out = String::from("name,base,aggregator,lag,role\n");
        for f in &self.features {
            let role = if f.name == self.target {
                "target"
            } else {
                "feature"
            };
            out.push_str(&format!(
                "{},{},{},{},{role}\n",
                f.name, f.base, f.aggregator, f.lag
            ));
        }
        out
    }

    /// Inverse of [`DailyMatrix::to_csv`] plus [`DailyMatrix::features_csv`].
    pub fn from_csv(matrix_csv: &str, features_csv: &str) -> Result<Self> {
        let bad = |m: String| FeaturizeError::InvalidMatrix(m);
        let mut metas = Vec::new();
        let mut target = None;
        let mut meta_reader = csv::Reader::from_reader(features_csv.as_bytes());
        for rec in meta_reader.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("").to_string();
            let aggregator: Aggregator = field(2).parse().map_err(bad)?;
            let lag: u32 = field(3).parse().map_err(|e| bad(format!("lag: {e}")))?;
            let meta = FeatureMeta::new(field(1), aggregator, lag);
            if meta.name != field(0) {
                return Err(bad(format!("name `{}` does not match its parts", field(0))));
            }
            if field(4) == "target" {
                target = Some(meta.name.clone());
            }
            metas.push(meta);
        }
        let target = target.ok_or_else(|| bad("no target column declared".into()))?;

        let mut reader = csv::Reader::from_reader(matrix_csv.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        let names: Vec<&str> = header.iter().skip(1).collect();
        if names.len() != metas.len() || names.iter().zip(&metas).any(|(n, m)| *n != m.name) {
            return Err(bad("matrix header does not match feature metadata".into()));
        }
        let mut dates = Vec::new();
        let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); metas.len()];
        for rec in reader.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let date = NaiveDate::parse_from_str(rec.get(0).unwrap_or(""), "%Y-%m-%d")
                .map_err(|e| bad(format!("date: {e}")))?;
            dates.push(date);
            for (c, col) in cols.iter_mut().enumerate() {
                let cell = rec.get(c + 1).unwrap_or("");
                col.push(if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse().map_err(|e| bad(format!("cell `{cell}`: {e}")))?)
                });
            }
        }
        DailyMatrix::from_columns(dates, metas.into_iter().zip(cols).collect(), target)
    }
}

/// Aligns daily columns on every day of `range`.
pub fn assemble(
    columns: Vec<DailyColumn>,
    range: DateRange,
    target: &str,
) -> Result<DailyMatrix> {
    let dates: Vec<NaiveDate> = range.iter().collect();
    let aligned = columns
        .into_iter()
        .map(|col| {
            let cells = dates.iter().map(|d| col.values.get(d).copied()).collect();
            (col.meta, cells)
        })
        .collect();
    DailyMatrix::from_columns(dates, aligned, target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizeConfig {
    pub target: String,
    pub aggregators: Vec<Aggregator>,
    pub day_threshold: f64,
    pub feature_threshold: f64,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            target: "Mood".into(),
            aggregators: Aggregator::DAILY_SET.to_vec(),
            day_threshold: 0.5,
            feature_threshold: 0.5,
        }
    }
}

/// Aggregates every series to the daily grid spanning all samples. The
/// target series is expected to be of daily kind and named `config.target`.
pub fn build_daily_matrix(series: &[RawSeries], config: &FeaturizeConfig) -> Result<DailyMatrix> {
    let range = DateRange::covering(series)
        .ok_or_else(|| FeaturizeError::MissingTarget(config.target.clone()))?;
    let dates: Vec<NaiveDate> = range.iter().collect();
    let mut ordered: Vec<&RawSeries> = series.iter().collect();
    ordered.sort_by(|a, b| (a.feature != config.target, &a.feature).cmp(&(b.feature != config.target, &b.feature)));
    let columns = ordered
        .into_iter()
        .flat_map(|s| daily_columns(s, &config.aggregators, &dates))
        .collect();
    assemble(columns, range, &config.target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DropEntry {
    Feature { name: String, missing_fraction: f64 },
    Day { date: NaiveDate, missing_fraction: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropLog {
    pub entries: Vec<DropEntry>,
}

impl DropLog {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match e {
                DropEntry::Feature {
                    name,
                    missing_fraction,
                } => out.push_str(&format!("feature {name} missing={missing_fraction:.4}\n")),
                DropEntry::Day {
                    date,
                    missing_fraction,
                } => out.push_str(&format!("day {date} missing={missing_fraction:.4}\n")),
            }
        }
        out
    }
}

/// Removes features missing on more than `feature_threshold` of days, then
/// days missing more than `day_threshold` of the remaining predictors. The
/// target column is never dropped and does not count towards day sparsity.
pub fn drop_sparse(
    matrix: &DailyMatrix,
    day_threshold: f64,
    feature_threshold: f64,
) -> Result<(DailyMatrix, DropLog)> {
    for t in [day_threshold, feature_threshold] {
        if !(t > 0.0 && t <= 1.0) {
            return Err(FeaturizeError::InvalidThreshold(t));
        }
    }
    let mut log = DropLog::default();
    let target = matrix.target_index();
    let mut keep_cols = Vec::new();
    for c in 0..matrix.n_cols() {
        let missing = 1.0 - matrix.observed_fraction(c);
        if c != target && missing > feature_threshold {
            log.entries.push(DropEntry::Feature {
                name: matrix.features[c].name.clone(),
                missing_fraction: missing,
            });
        } else {
            keep_cols.push(c);
        }
    }
    let predictors: Vec<usize> = keep_cols.iter().copied().filter(|&c| c != target).collect();
    if predictors.is_empty() {
        return Err(FeaturizeError::AllDropped("features"));
    }
    let mut keep_rows = Vec::new();
    for r in 0..matrix.n_rows() {
        let missing = predictors
            .iter()
            .filter(|&&c| !matrix.is_observed(r, c))
            .count() as f64
            / predictors.len() as f64;
        if missing > day_threshold {
            log.entries.push(DropEntry::Day {
                date: matrix.dates[r],
                missing_fraction: missing,
            });
        } else {
            keep_rows.push(r);
        }
    }
    if keep_rows.is_empty() {
        return Err(FeaturizeError::AllDropped("days"));
    }
    Ok((matrix.select(&keep_rows, &keep_cols)?, log))
}

/// Per-column fill values for imputation (target excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeans {
    pub means: BTreeMap<String, f64>,
}

/// Means of observed training cells per predictor. Columns with no observed
/// training cell get 0 so they come out constant and are dropped by
/// standardization.
pub fn fit_impute_means(matrix: &DailyMatrix, train_rows: &[usize]) -> ColumnMeans {
    let means = matrix
        .predictor_indices()
        .into_iter()
        .map(|c| {
            let observed: Vec<f64> = train_rows.iter().filter_map(|&r| matrix.get(r, c)).collect();
            let mean = if observed.is_empty() {
                0.0
            } else {
                observed.iter().sum::<f64>() / observed.len() as f64
            };
            (matrix.features[c].name.clone(), mean)
        })
        .collect();
    ColumnMeans { means }
}

/// Fills every missing predictor cell with its column mean. Observed cells and
/// the target column are left untouched.
pub fn apply_impute(matrix: &DailyMatrix, means: &ColumnMeans) -> DailyMatrix {
    let mut out = matrix.clone();
    for c in matrix.predictor_indices() {
        let Some(&fill) = means.means.get(&matrix.features[c].name) else {
            continue;
        };
        for r in 0..matrix.n_rows() {
            if !matrix.is_observed(r, c) {
                out.set(r, c, Some(fill));
            }
        }
    }
    out
}

pub fn impute_mean(matrix: &DailyMatrix, train_rows: &[usize]) -> (DailyMatrix, ColumnMeans) {
    let means = fit_impute_means(matrix, train_rows);
    (apply_impute(matrix, &means), means)
}

/// Appends a `Yesterday` copy of every lag-0 predictor and target lags
/// `1..=target_lags`, then drops the first `max(1, target_lags)` rows.
///
/// A lag value is taken from the row dated exactly `lag` days earlier; when
/// that day is absent (a dropped day) the lagged cell is missing.
pub fn build_lagged_matrix(matrix: &DailyMatrix, target_lags: usize) -> Result<DailyMatrix> {
    let skip = target_lags.max(1);
    if matrix.n_rows() <= skip {
        return Err(FeaturizeError::TooShort {
            rows: matrix.n_rows(),
            lags: skip,
        });
    }
    let target = matrix.target_index();
    let mut columns = matrix.columns();
    let shifted = |col: usize, lag: u32| -> Vec<Option<f64>> {
        matrix
            .dates
            .iter()
            .map(|d| {
                d.checked_sub_days(Days::new(lag as u64))
                    .and_then(|prev| matrix.row_index(prev))
                    .and_then(|r| matrix.get(r, col))
            })
            .collect()
    };
    for c in 0..matrix.n_cols() {
        let meta = &matrix.features[c];
        if c != target && meta.lag == 0 {
            columns.push((meta.lagged(1), shifted(c, 1)));
        }
    }
    for lag in 1..=target_lags as u32 {
        columns.push((matrix.features[target].lagged(lag), shifted(target, lag)));
    }
    let full = DailyMatrix::from_columns(matrix.dates.clone(), columns, matrix.target.clone())?;
    let rows: Vec<usize> = (skip..full.n_rows()).collect();
    full.select_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-column mean and population standard deviation from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<ColumnStats>,
    /// Columns that were constant on the training rows and are removed.
    pub dropped: Vec<String>,
}

impl Standardizer {
    pub fn stats(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn transform(&self, name: &str, value: f64) -> Option<f64> {
        self.stats(name).map(|s| (value - s.mean) / s.std)
    }

    pub fn inverse(&self, name: &str, z: f64) -> Option<f64> {
        self.stats(name).map(|s| z * s.std + s.mean)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits means and population standard deviations on `train_rows`. Constant
/// predictors are recorded in `dropped`; a constant target is an error.
pub fn fit_standardizer(matrix: &DailyMatrix, train_rows: &[usize]) -> Result<Standardizer> {
    if train_rows.is_empty() {
        return Err(FeaturizeError::NoTrainingRows);
    }
    let target = matrix.target_index();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..matrix.n_cols() {
        let name = matrix.features[c].name.clone();
        let observed: Vec<f64> = train_rows.iter().filter_map(|&r| matrix.get(r, c)).collect();
        let (mean, std) = if observed.is_empty() {
            (0.0, 0.0)
        } else {
            mean_std(&observed)
        };
        if !(std > 1e-12 * (1.0 + mean.abs())) {
            if c == target {
                return Err(FeaturizeError::ConstantTarget(name));
            }
            dropped.push(name);
        } else {
            columns.push(ColumnStats { name, mean, std });
        }
    }
    Ok(Standardizer { columns, dropped })
}

/// Applies training statistics to every row. Columns unknown to the
/// standardizer (dropped constants) are removed.
pub fn apply_standardizer(matrix: &DailyMatrix, standardizer: &Standardizer) -> Result<DailyMatrix> {
    let mut columns = Vec::with_capacity(standardizer.columns.len());
    for stats in &standardizer.columns {
        let c = matrix
            .column_index(&stats.name)
            .ok_or_else(|| FeaturizeError::UnknownFeature(stats.name.clone()))?;
        let cells = (0..matrix.n_rows())
            .map(|r| matrix.get(r, c).map(|v| (v - stats.mean) / stats.std))
            .collect();
        columns.push((matrix.features[c].clone(), cells));
    }
    DailyMatrix::from_columns(matrix.dates.clone(), columns, matrix.target.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn day(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + Days::new(n)
    }

    fn series(kind: Kind, points: &[(u64, u32, f64)]) -> RawSeries {
        let samples = points
            .iter()
            .map(|&(d, h, v)| {
                let date = day(d);
                (
                    Utc.from_utc_datetime(&date.and_hms_opt(h, 0, 0).unwrap()),
                    v,
                )
            })
            .collect();
        RawSeries::from_unordered("W", "", kind, None, samples).unwrap()
    }

    fn matrix(cols: Vec<(&str, Vec<Option<f64>>)>, target: &str) -> DailyMatrix {
        let n = cols[0].1.len();
        let dates = (0..n as u64).map(day).collect();
        let columns = cols
            .into_iter()
            .map(|(name, v)| (FeatureMeta::new(name, Aggregator::Raw, 0), v))
            .collect();
        DailyMatrix::from_columns(dates, columns, target).unwrap()
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 0.5).unwrap(), 2.0);
        assert!((percentile(&[10.0, 20.0], 0.05).unwrap() - 10.5).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 0.3).unwrap(), 7.0);
        assert_eq!(percentile(&[], 0.3), Err(FeaturizeError::EmptyInput));
    }

    #[test]
    fn daily_aggregates() {
        let s = series(Kind::Fast, &[(0, 1, 1.0), (0, 2, 2.0), (0, 3, 3.0)]);
        let cols = aggregate_daily(&s, &Aggregator::DAILY_SET);
        let at = |agg: Aggregator| {
            cols.iter().find(|c| c.meta.aggregator == agg).unwrap().values[&day(0)]
        };
        assert_eq!(at(Aggregator::Sum), 6.0);
        assert_eq!(at(Aggregator::Mean), 2.0);
        assert_eq!(at(Aggregator::Median), 2.0);
        assert_eq!(cols[0].meta.name, "WSum()");
    }

    #[test]
    fn percentiles_over_hundred_samples() {
        // h = 99 * 0.05 = 4.95 -> 5 + 0.95 * 1; h = 94.05 -> 95 + 0.05 * 1
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((Aggregator::P05.apply(&values) - 5.95).abs() < 1e-12);
        assert!((Aggregator::P95.apply(&values) - 95.05).abs() < 1e-12);
    }

    #[test]
    fn feature_names() {
        assert_eq!(FeatureMeta::new("CO2", Aggregator::Median, 0).name, "CO2Median()");
        assert_eq!(FeatureMeta::new("Noise", Aggregator::P95, 1).name, "NoiseMax()Yesterday");
        assert_eq!(FeatureMeta::new("Mood", Aggregator::Raw, 2).name, "MoodEreyesterday");
        assert_eq!(FeatureMeta::new("Mood", Aggregator::Raw, 4).name, "Mood4DaysAgo");
    }

    #[test]
    fn slow_interpolation() {
        let s = series(Kind::Slow, &[(0, 8, 80.0), (2, 8, 81.0)]);
        let dates: Vec<_> = (0..5).map(day).collect();
        let col = interpolate_slow(&s, &dates).unwrap();
        assert!((col.values[&day(1)] - 80.5).abs() < 1e-12);
        assert!(!col.values.contains_key(&day(3)));

        let s = series(Kind::Slow, &[(0, 8, 60.0), (3, 8, 66.0)]);
        let col = interpolate_slow(&s, &dates).unwrap();
        assert!((col.values[&day(2)] - 64.0).abs() < 1e-12);

        let s = series(Kind::Slow, &[(0, 8, 70.0), (10, 8, 70.0)]);
        let dates: Vec<_> = (0..11).map(day).collect();
        let col = interpolate_slow(&s, &dates).unwrap();
        assert!(col.values.values().all(|&v| v == 70.0));
        assert_eq!(col.values.len(), 11);

        let s = series(Kind::Slow, &[(0, 8, 70.0)]);
        assert!(matches!(
            interpolate_slow(&s, &dates),
            Err(FeaturizeError::TooFewSamples { days: 1, .. })
        ));
    }

    #[test]
    fn sparse_feature_dropped() {
        let mut sparse = vec![None; 100];
        sparse[3] = Some(1.0);
        sparse[50] = Some(2.0);
        let full: Vec<Option<f64>> = (0..100).map(|i| Some(i as f64)).collect();
        let m = matrix(
            vec![("Mood", full.clone()), ("A", full), ("B", sparse)],
            "Mood",
        );
        let (out, log) = drop_sparse(&m, 0.5, 0.5).unwrap();
        assert!(out.column_index("B").is_none());
        assert_eq!(out.n_rows(), 100);
        assert_eq!(log.entries.len(), 1);
    }

    #[test]
    fn fully_observed_matrix_unchanged() {
        let col: Vec<Option<f64>> = (0..5).map(|i| Some(i as f64)).collect();
        let m = matrix(vec![("Mood", col.clone()), ("A", col)], "Mood");
        let (out, log) = drop_sparse(&m, 0.5, 0.5).unwrap();
        assert_eq!(out, m);
        assert!(log.entries.is_empty());
    }

    #[test]
    fn sparse_day_dropped() {
        let m = matrix(
            vec![
                ("Mood", vec![Some(1.0), Some(2.0), Some(3.0)]),
                ("A", vec![Some(1.0), None, Some(1.0)]),
                ("B", vec![Some(1.0), None, Some(1.0)]),
                ("C", vec![Some(1.0), Some(1.0), Some(1.0)]),
            ],
            "Mood",
        );
        let (out, log) = drop_sparse(&m, 0.5, 0.5).unwrap();
        assert_eq!(out.dates, vec![day(0), day(2)]);
        assert_eq!(out.n_cols(), 4);
        assert!(matches!(log.entries[0], DropEntry::Day { .. }));
    }

    #[test]
    fn drop_everything_is_an_error() {
        let m = matrix(
            vec![("Mood", vec![Some(1.0), Some(2.0)]), ("A", vec![None, None])],
            "Mood",
        );
        assert_eq!(
            drop_sparse(&m, 0.5, 0.5),
            Err(FeaturizeError::AllDropped("features"))
        );
        assert!(matches!(
            drop_sparse(&m, 0.0, 0.5),
            Err(FeaturizeError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn impute_uses_training_mean_and_skips_target() {
        let m = matrix(
            vec![
                ("Mood", vec![Some(1.0), None, Some(3.0), Some(9.0)]),
                ("A", vec![Some(1.0), None, Some(3.0), None]),
            ],
            "Mood",
        );
        let (out, means) = impute_mean(&m, &[0, 1, 2]);
        assert_eq!(means.means["A"], 2.0);
        assert_eq!(out.column(1), vec![Some(1.0), Some(2.0), Some(3.0), Some(2.0)]);
        assert_eq!(out.get(1, 0), None);
        assert_eq!(out.rows_with_target(), vec![0, 2, 3]);

        let full = matrix(vec![("Mood", vec![Some(1.0), Some(2.0)]), ("A", vec![Some(5.0), Some(6.0)])], "Mood");
        assert_eq!(impute_mean(&full, &[0, 1]).0, full);
    }

    #[test]
    fn lag_shift_semantics() {
        let m = matrix(
            vec![
                ("Mood", vec![Some(5.0), Some(6.0), Some(7.0)]),
                ("F", vec![Some(1.0), Some(2.0), Some(3.0)]),
            ],
            "Mood",
        );
        let lagged = build_lagged_matrix(&m, 1).unwrap();
        assert_eq!(lagged.n_rows(), 2);
        let f_y = lagged.column_index("FYesterday").unwrap();
        assert_eq!(lagged.column(f_y), vec![Some(1.0), Some(2.0)]);
        let m_y = lagged.column_index("MoodYesterday").unwrap();
        assert_eq!(lagged.column(m_y), vec![Some(5.0), Some(6.0)]);
    }

    #[test]
    fn four_target_lags_on_ten_rows() {
        let col: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64)).collect();
        let m = matrix(vec![("Mood", col.clone()), ("F", col)], "Mood");
        let lagged = build_lagged_matrix(&m, 4).unwrap();
        assert_eq!(lagged.n_rows(), 6);
        for name in ["MoodYesterday", "MoodEreyesterday", "Mood3DaysAgo", "Mood4DaysAgo"] {
            assert!(lagged.column_index(name).is_some(), "{name}");
        }
        assert!(lagged.column_index("FEreyesterday").is_none());
        assert_eq!(
            build_lagged_matrix(&m.select_rows(&[0, 1, 2, 3]).unwrap(), 4),
            Err(FeaturizeError::TooShort { rows: 4, lags: 4 })
        );
    }

    #[test]
    fn lag_across_gap_is_missing() {
        let col: Vec<Option<f64>> = (0..5).map(|i| Some(i as f64)).collect();
        let m = matrix(vec![("Mood", col.clone()), ("F", col)], "Mood");
        let gapped = m.select_rows(&[0, 1, 3, 4]).unwrap();
        let lagged = build_lagged_matrix(&gapped, 1).unwrap();
        let f_y = lagged.column_index("FYesterday").unwrap();
        assert_eq!(lagged.column(f_y), vec![Some(0.0), None, Some(3.0)]);
    }

    #[test]
    fn standardize_population_convention() {
        let m = matrix(
            vec![
                ("Mood", vec![Some(1.0), Some(3.0), Some(2.0)]),
                ("A", vec![Some(1.0), Some(3.0), Some(2.0)]),
                ("K", vec![Some(4.0), Some(4.0), Some(1.0)]),
            ],
            "Mood",
        );
        let s = fit_standardizer(&m, &[0, 1]).unwrap();
        assert_eq!(s.dropped, vec!["K".to_string()]);
        let a = s.stats("A").unwrap();
        assert_eq!((a.mean, a.std), (2.0, 1.0));
        let z = apply_standardizer(&m, &s).unwrap();
        assert_eq!(z.column(1), vec![Some(-1.0), Some(1.0), Some(0.0)]);
        assert!(z.column_index("K").is_none());
    }

    #[test]
    fn standardizing_standardized_data_is_identity() {
        let m = matrix(
            vec![
                ("Mood", vec![Some(-1.0), Some(1.0), Some(-1.0), Some(1.0)]),
                ("A", vec![Some(-1.5), Some(0.5), Some(-0.5), Some(1.5)]),
            ],
            "Mood",
        );
        let first = apply_standardizer(&m, &fit_standardizer(&m, &[0, 1, 2, 3]).unwrap()).unwrap();
        let second =
            apply_standardizer(&first, &fit_standardizer(&first, &[0, 1, 2, 3]).unwrap()).unwrap();
        for r in 0..4 {
            for c in 0..2 {
                assert!((first.get(r, c).unwrap() - second.get(r, c).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_target_is_fatal() {
        let m = matrix(
            vec![("Mood", vec![Some(1.0), Some(1.0)]), ("A", vec![Some(1.0), Some(2.0)])],
            "Mood",
        );
        assert!(matches!(
            fit_standardizer(&m, &[0, 1]),
            Err(FeaturizeError::ConstantTarget(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let m = matrix(
            vec![
                ("Mood", vec![Some(1.0), None, Some(0.1 + 0.2)]),
                ("A", vec![Some(-1e-300), Some(2.5), None]),
            ],
            "Mood",
        );
        let back = DailyMatrix::from_csv(&m.to_csv(), &m.features_csv()).unwrap();
        assert_eq!(back.to_csv(), m.to_csv());
        assert_eq!(back.dates, m.dates);
        assert_eq!(back.target, "Mood");
    }
}
