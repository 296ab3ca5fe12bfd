//! Raw export ingestion.
//!
//! A [`SourceManifest`] maps the columns of vendor CSV exports onto feature
//! base-names. [`import_csv`] turns one export file into canonical
//! [`RawSeries`], which can be persisted as one CSV per series with
//! [`write_store`] and read back with [`read_store`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid manifest: {0}")]
    Validation(String),
    #[error("header of {path} lacks column `{column}`")]
    HeaderMismatch { path: PathBuf, column: String },
    #[error("no valid samples for feature `{feature}` in {path}")]
    EmptySeries { path: PathBuf, feature: String },
    #[error("invalid series `{feature}`: {message}")]
    InvalidSeries { feature: String, message: String },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Sampling behaviour of a source variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Sub-daily sampling (heart rate, CO2, ...). Aggregated per day.
    Fast,
    /// Measured every few days (body weight, VO2max). Linearly interpolated.
    Slow,
    /// One value per day.
    Daily,
    /// 0/1 indicator per day.
    Binary,
}

/// How timestamps are written in a source file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TimestampFormat {
    /// ISO-8601 / RFC 3339 with explicit offset.
    #[default]
    Rfc3339,
    /// Calendar date `YYYY-MM-DD`, taken as midnight UTC.
    Date,
    /// Seconds since the Unix epoch.
    Unix,
    /// A chrono format string. With `%z`/`%:z` the offset is honoured,
    /// otherwise the value is read as UTC.
    Custom(String),
}

impl Serialize for TimestampFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TimestampFormat::Rfc3339 => s.serialize_str("rfc3339"),
            TimestampFormat::Date => s.serialize_str("date"),
            TimestampFormat::Unix => s.serialize_str("unix"),
            TimestampFormat::Custom(f) => s.serialize_str(f),
        }
    }
}

impl<'de> Deserialize<'de> for TimestampFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(match raw.as_str() {
            "rfc3339" | "iso8601" => TimestampFormat::Rfc3339,
            "date" => TimestampFormat::Date,
            "unix" => TimestampFormat::Unix,
            _ => TimestampFormat::Custom(raw),
        })
    }
}

impl TimestampFormat {
    pub fn parse(&self, raw: &str) -> Option<DateTime<Utc>> {
        let raw = raw.trim();
        match self {
            TimestampFormat::Rfc3339 => DateTime::parse_from_rfc3339(raw)
                .ok()
                .map(|t| t.with_timezone(&Utc)),
            TimestampFormat::Date => NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .map(|t| t.and_utc()),
            TimestampFormat::Unix => raw
                .parse::<i64>()
                .ok()
                .and_then(|s| DateTime::from_timestamp(s, 0)),
            TimestampFormat::Custom(fmt) => {
                if let Ok(t) = DateTime::parse_from_str(raw, fmt) {
                    return Some(t.with_timezone(&Utc));
                }
                if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
                    return Some(t.and_utc());
                }
                NaiveDate::parse_from_str(raw, fmt)
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
                    .map(|t| t.and_utc())
            }
        }
    }
}

/// One value column of a source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueColumn {
    pub column: String,
    pub feature: String,
    #[serde(default)]
    pub unit: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub id: String,
    /// File name or wildcard pattern, relative to the manifest directory.
    pub file: String,
    pub timestamp_column: String,
    #[serde(default)]
    pub timestamp_format: TimestampFormat,
    pub values: Vec<ValueColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceManifest {
    #[serde(rename = "source", default)]
    pub sources: Vec<SourceSpec>,
}

impl SourceManifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let manifest: SourceManifest = toml::from_str(text).map_err(|e| IngestError::Parse {
            path: PathBuf::from("<manifest>"),
            message: e.to_string(),
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut features = HashSet::new();
        for source in &self.sources {
            if !ids.insert(source.id.as_str()) {
                return Err(IngestError::Validation(format!(
                    "duplicate source id `{}`",
                    source.id
                )));
            }
            if source.values.is_empty() {
                return Err(IngestError::Validation(format!(
                    "source `{}` declares no value columns",
                    source.id
                )));
            }
            for value in &source.values {
                if value.feature.is_empty() {
                    return Err(IngestError::Validation(format!(
                        "column `{}` of source `{}` has an empty feature name",
                        value.column, source.id
                    )));
                }
                if !features.insert(value.feature.as_str()) {
                    return Err(IngestError::Validation(format!(
                        "feature `{}` is declared more than once",
                        value.feature
                    )));
                }
                if let Some([lo, hi]) = value.sensor_range {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(IngestError::Validation(format!(
                            "sensor_range of `{}` must satisfy min < max, got [{lo}, {hi}]",
                            value.feature
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates a TOML manifest.
pub fn load_manifest(path: &Path) -> Result<SourceManifest> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SourceManifest::from_toml_str(&text).map_err(|e| match e {
        IngestError::Parse { message, .. } => IngestError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Files in `dir` matching the source's file pattern, sorted by name.
pub fn resolve_source_files(dir: &Path, spec: &SourceSpec) -> Result<Vec<PathBuf>> {
    let pattern = dir.join(&spec.file);
    let pattern = pattern.to_string_lossy();
    let mut files: Vec<PathBuf> = glob::glob(&pattern)
        .map_err(|e| IngestError::Validation(format!("bad file pattern `{}`: {e}", spec.file)))?
        .filter_map(|entry| entry.ok())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// One source variable as timestamped samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub feature: String,
    pub unit: String,
    pub kind: Kind,
    pub sensor_range: Option<[f64; 2]>,
    pub samples: Vec<(DateTime<Utc>, f64)>,
}

impl RawSeries {
    /// Builds a series from unordered samples. Samples are sorted by time and
    /// for duplicate timestamps the one that came last in `samples` wins.
    pub fn from_unordered(
        feature: impl Into<String>,
        unit: impl Into<String>,
        kind: Kind,
        sensor_range: Option<[f64; 2]>,
        samples: Vec<(DateTime<Utc>, f64)>,
    ) -> Result<Self> {
        let mut indexed: Vec<(usize, DateTime<Utc>, f64)> = samples
            .into_iter()
            .enumerate()
            .map(|(i, (t, v))| (i, t, v))
            .collect();
        indexed.sort_by_key(|&(i, t, _)| (t, i));
        let mut deduped: Vec<(DateTime<Utc>, f64)> = Vec::with_capacity(indexed.len());
        for (_, t, v) in indexed {
            match deduped.last_mut() {
                Some(last) if last.0 == t => last.1 = v,
                _ => deduped.push((t, v)),
            }
        }
        let series = RawSeries {
            feature: feature.into(),
            unit: unit.into(),
            kind,
            sensor_range,
            samples: deduped,
        };
        series.check()?;
        Ok(series)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |message: String| IngestError::InvalidSeries {
            feature: self.feature.clone(),
            message,
        };
        for pair in self.samples.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(bad(format!("timestamps not increasing at {}", pair[1].0)));
            }
        }
        for &(t, v) in &self.samples {
            if !v.is_finite() {
                return Err(bad(format!("non-finite value at {t}")));
            }
            if let Some([lo, hi]) = self.sensor_range {
                if v < lo || v > hi {
                    return Err(bad(format!("value {v} at {t} outside [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Calendar days (UTC) that hold at least one sample.
    pub fn days(&self) -> BTreeSet<NaiveDate> {
        self.samples.iter().map(|(t, _)| t.date_naive()).collect()
    }
}

/// Result of importing one file.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedFile {
    pub series: Vec<RawSeries>,
    /// Rows whose timestamp could not be parsed.
    pub skipped_rows: usize,
    /// Non-empty value cells that were unparseable, non-finite or outside the
    /// declared sensor range.
    pub skipped_values: usize,
}

/// Parses one CSV export into a series per value column of `spec`.
pub fn import_csv(path: &Path, spec: &SourceSpec) -> Result<ImportedFile> {
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(source) => IngestError::Io {
                    path: path.to_path_buf(),
                    source,
                },
                _ => unreachable!(),
            },
            _ => csv_err(e),
        })?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let position = |column: &str| {
        headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| IngestError::HeaderMismatch {
                path: path.to_path_buf(),
                column: column.to_string(),
            })
    };
    let ts_col = position(&spec.timestamp_column)?;
    let value_cols = spec
        .values
        .iter()
        .map(|v| position(&v.column))
        .collect::<Result<Vec<_>>>()?;

    let mut samples: Vec<Vec<(DateTime<Utc>, f64)>> = vec![Vec::new(); spec.values.len()];
    let mut skipped_rows = 0;
    let mut skipped_values = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let Some(ts) = record
            .get(ts_col)
            .and_then(|raw| spec.timestamp_format.parse(raw))
        else {
            skipped_rows += 1;
            continue;
        };
        for (k, (&col, value_spec)) in value_cols.iter().zip(&spec.values).enumerate() {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() && in_range(v, value_spec.sensor_range) => {
                    samples[k].push((ts, v))
                }
                _ => skipped_values += 1,
            }
        }
    }

    let series = spec
        .values
        .iter()
        .zip(samples)
        .map(|(value_spec, samples)| {
            if samples.is_empty() {
                return Err(IngestError::EmptySeries {
                    path: path.to_path_buf(),
                    feature: value_spec.feature.clone(),
                });
            }
            RawSeries::from_unordered(
                value_spec.feature.clone(),
                value_spec.unit.clone(),
                value_spec.kind,
                value_spec.sensor_range,
                samples,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportedFile {
        series,
        skipped_rows,
        skipped_values,
    })
}

fn in_range(v: f64, range: Option<[f64; 2]>) -> bool {
    range.is_none_or(|[lo, hi]| v >= lo && v <= hi)
}

/// Imports every source of a manifest located in `dir`. Multiple files that
/// match one source are concatenated in file-name order before
/// de-duplication, so later files override earlier ones.
pub fn import_manifest(dir: &Path, manifest: &SourceManifest) -> Result<ImportSummary> {
    let mut series = Vec::new();
    let mut skipped_rows = 0;
    let mut skipped_values = 0;
    for spec in &manifest.sources {
        let files = resolve_source_files(dir, spec)?;
        if files.is_empty() {
            return Err(IngestError::Io {
                path: dir.join(&spec.file),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no matching file"),
            });
        }
        let mut merged: Vec<Vec<(DateTime<Utc>, f64)>> = vec![Vec::new(); spec.values.len()];
        for file in &files {
            let imported = import_csv(file, spec)?;
            skipped_rows += imported.skipped_rows;
            skipped_values += imported.skipped_values;
            for (slot, s) in merged.iter_mut().zip(imported.series) {
                slot.extend(s.samples);
            }
        }
        for (value_spec, samples) in spec.values.iter().zip(merged) {
            series.push(RawSeries::from_unordered(
                value_spec.feature.clone(),
                value_spec.unit.clone(),
                value_spec.kind,
                value_spec.sensor_range,
                samples,
            )?);
        }
    }
    Ok(ImportSummary {
        series,
        skipped_rows,
        skipped_values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportSummary {
    pub series: Vec<RawSeries>,
    pub skipped_rows: usize,
    pub skipped_values: usize,
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    /// Smallest range that covers every sample of every series.
    pub fn covering(series: &[RawSeries]) -> Option<Self> {
        let mut days = series
            .iter()
            .flat_map(|s| s.samples.iter().map(|(t, _)| t.date_naive()));
        let first = days.next()?;
        let (start, end) = days.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
        Some(DateRange { start, end })
    }

    pub fn len_days(&self) -> usize {
        if self.end < self.start {
            0
        } else {
            (self.end - self.start).num_days() as usize + 1
        }
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        day >= self.start && day <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take(self.len_days())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesQuality {
    pub feature: String,
    pub sample_count: usize,
    pub days_covered: usize,
    pub missing_day_fraction: f64,
    pub saturation_fraction: f64,
    pub outlier_count: usize,
    pub outlier_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub range: DateRange,
    pub series: Vec<SeriesQuality>,
}

/// Per-series coverage, saturation and outlier summary over `range`.
///
/// Saturation counts samples sitting exactly on either bound of the sensor
/// range. Outliers are flagged with Tukey fences (1.5 IQR beyond the
/// quartiles); they are reported, never removed.
pub fn quality_report(series: &[RawSeries], range: DateRange) -> QualityReport {
    let entries = series
        .iter()
        .map(|s| {
            let total_days = range.len_days();
            let days_covered = s.days().into_iter().filter(|d| range.contains(*d)).count();
            let missing_day_fraction = if total_days == 0 {
                0.0
            } else {
                1.0 - days_covered as f64 / total_days as f64
            };
            let saturation_fraction = match (s.sensor_range, s.samples.len()) {
                (Some([lo, hi]), n) if n > 0 => {
                    let hits = s.samples.iter().filter(|(_, v)| *v == lo || *v == hi).count();
                    hits as f64 / n as f64
                }
                _ => 0.0,
            };
            let (outlier_count, outlier_note) = tukey_outliers(s);
            SeriesQuality {
                feature: s.feature.clone(),
                sample_count: s.samples.len(),
                days_covered,
                missing_day_fraction,
                saturation_fraction,
                outlier_count,
                outlier_note,
            }
        })
        .collect();
    QualityReport {
        range,
        series: entries,
    }
}

fn tukey_outliers(s: &RawSeries) -> (usize, String) {
    if s.samples.len() < 4 {
        return (0, "too few samples".to_string());
    }
    let mut values: Vec<f64> = s.samples.iter().map(|(_, v)| *v).collect();
    values.sort_by(f64::total_cmp);
    let q1 = crate::featurize::percentile_sorted(&values, 0.25);
    let q3 = crate::featurize::percentile_sorted(&values, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let count = values.iter().filter(|&&v| v < lo || v > hi).count();
    let note = if count == 0 {
        "none".to_string()
    } else {
        format!("{count} outside [{lo:.4}, {hi:.4}]")
    };
    (count, note)
}

/// Index entry of the canonical series store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreEntry {
    feature: String,
    unit: String,
    kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensor_range: Option<[f64; 2]>,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreIndex {
    #[serde(rename = "series", default)]
    series: Vec<StoreEntry>,
}

pub const STORE_INDEX: &str = "series.toml";

/// Writes one `timestamp,value` CSV per series plus a `series.toml` index.
pub fn write_store(dir: &Path, series: &[RawSeries]) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IngestError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut ordered: Vec<&RawSeries> = series.iter().collect();
    ordered.sort_by(|a, b| a.feature.cmp(&b.feature));
    let mut index = StoreIndex { series: Vec::new() };
    for s in ordered {
        let file = format!("{}.csv", sanitize_file_stem(&s.feature));
        let path = dir.join(&file);
        let mut text = String::from("timestamp,value\n");
        for (t, v) in &s.samples {
            text.push_str(&t.to_rfc3339_opts(SecondsFormat::AutoSi, true));
            text.push(',');
            text.push_str(&v.to_string());
            text.push('\n');
        }
        fs::write(&path, text).map_err(io(&path))?;
        index.series.push(StoreEntry {
            feature: s.feature.clone(),
            unit: s.unit.clone(),
            kind: s.kind,
            sensor_range: s.sensor_range,
            file,
        });
    }
    let index_path = dir.join(STORE_INDEX);
    let text = toml::to_string(&index).expect("store index serializes");
    fs::write(&index_path, text).map_err(io(&index_path))
}

/// Reads a store written by [`write_store`].
pub fn read_store(dir: &Path) -> Result<Vec<RawSeries>> {
    let index_path = dir.join(STORE_INDEX);
    let text = fs::read_to_string(&index_path).map_err(|source| IngestError::Io {
        path: index_path.clone(),
        source,
    })?;
    let index: StoreIndex = toml::from_str(&text).map_err(|e| IngestError::Parse {
        path: index_path.clone(),
        message: e.to_string(),
    })?;
    index
        .series
        .iter()
        .map(|entry| {
            let spec = SourceSpec {
                id: entry.feature.clone(),
                file: entry.file.clone(),
                timestamp_column: "timestamp".into(),
                timestamp_format: TimestampFormat::Rfc3339,
                values: vec![ValueColumn {
                    column: "value".into(),
                    feature: entry.feature.clone(),
                    unit: entry.unit.clone(),
                    kind: entry.kind,
                    sensor_range: entry.sensor_range,
                }],
            };
            let mut imported = import_csv(&dir.join(&entry.file), &spec)?;
            Ok(imported.series.remove(0))
        })
        .collect()
}

/// Keeps feature names usable as file names on every platform.
fn sanitize_file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Groups samples by UTC calendar day.
pub fn samples_by_day(series: &RawSeries) -> BTreeMap<NaiveDate, Vec<f64>> {
    let mut days: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for (t, v) in &series.samples {
        days.entry(t.date_naive()).or_default().push(*v);
    }
    days
}
