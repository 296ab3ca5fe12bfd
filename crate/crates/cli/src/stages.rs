//! One function per command. Each reads the artifacts of earlier stages from
//! the data directory and writes its own; nothing depends on the clock.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use moodlens::elasticnet::{Evaluation, LinearModel, Prediction};
use moodlens::explain::{contributions, render_chart, ChartData, ChartSpec, ContributionRow};
use moodlens::featurize::{build_lagged_matrix, ColumnMeans, DailyMatrix};
use moodlens::ingest::{import_manifest, load_manifest, quality_report, read_store, write_store, DateRange, STORE_INDEX};
use moodlens::mlp::MlpModel;
use moodlens::pipeline::{self, build_design, standardized_row, target_lag_count};
use moodlens::report::{table1_csv, table2_csv};
use moodlens::stats::{correlation_matrix, correlation_report, CorrelationReport};
use moodlens::synth::{generate, MANIFEST_FILE};

use crate::config::RunConfig;
use crate::error::CliError;

pub const RAW_DIR: &str = "raw";
pub const STORE_DIR: &str = "store";
pub const FEATURES_DIR: &str = "features";
pub const CORRELATIONS_DIR: &str = "correlations";
pub const MODEL_DIR: &str = "model";
pub const PREDICTIONS_DIR: &str = "predictions";
pub const REPORT_DIR: &str = "report";

const MATRIX_FILE: &str = "features/matrix.csv";
const FEATURE_LIST_FILE: &str = "features/features.csv";
const CORRELATION_FILE: &str = "correlations/report.json";
const LINEAR_FILE: &str = "model/linear.json";
const MLP_FILE: &str = "model/mlp.json";

const CHART_WIDTH: u32 = 720;
const CHART_HEIGHT: u32 = 440;
/// Features given their own bar and triangle charts by `explain`, and
/// scatter charts by `plot`.
const TOP_FEATURES: usize = 3;
const MOVING_AVERAGE_WINDOW: usize = 7;

/// What a command wrote, printed as one JSON line.
#[derive(Debug, Default, Serialize)]
pub struct StageOutput {
    pub command: &'static str,
    pub artifacts: Vec<PathBuf>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl StageOutput {
    fn new(command: &'static str) -> Self {
        StageOutput {
            command,
            ..StageOutput::default()
        }
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.into(), serde_json::to_value(value).expect("summary value serializes"));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArtifact {
    pub model: LinearModel,
    pub means: ColumnMeans,
    pub target_lags: usize,
    pub test: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArtifact {
    pub model: MlpModel,
    pub means: ColumnMeans,
    pub target_lags: usize,
    pub test: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPrediction {
    pub prediction: Prediction,
    pub contributions: Vec<ContributionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub date: NaiveDate,
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearPrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlp: Option<f64>,
}

fn write(out: &mut StageOutput, path: PathBuf, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    out.artifacts.push(path);
    Ok(())
}

fn write_json(out: &mut StageOutput, path: PathBuf, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write(out, path, text)
}

fn require(config: &RunConfig, relative: &str, stage: &'static str) -> Result<PathBuf, CliError> {
    let path = config.data_dir.join(relative);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingStage { stage, path })
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_matrix(config: &RunConfig) -> Result<DailyMatrix, CliError> {
    let matrix = require(config, MATRIX_FILE, "featurize")?;
    let features = require(config, FEATURE_LIST_FILE, "featurize")?;
    Ok(DailyMatrix::from_csv(&read_text(&matrix)?, &read_text(&features)?)?)
}

fn load_linear(config: &RunConfig) -> Result<LinearArtifact, CliError> {
    read_json(&require(config, LINEAR_FILE, "train")?)
}

fn load_mlp(config: &RunConfig) -> Result<MlpArtifact, CliError> {
    read_json(&require(config, MLP_FILE, "train")?)
}

fn load_correlations(config: &RunConfig) -> Result<CorrelationReport, CliError> {
    read_json(&require(config, CORRELATION_FILE, "correlate")?)
}

/// Keeps feature names such as `HumidInMax()` usable as file names.
fn file_stem(name: &str) -> String {
    let stem: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    stem.trim_end_matches('_').to_string()
}

pub fn synth(config: &RunConfig) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("synth");
    let generated = generate(&config.synth)?;
    let dir = config.data_dir.join(RAW_DIR);
    generated.write(&dir)?;
    out.artifacts.extend(generated.files.keys().map(|f| dir.join(f)));
    out.artifacts.push(dir.join(MANIFEST_FILE));
    out.artifacts.push(dir.join(moodlens::synth::TRUTH_FILE));
    out.note("realized_r2", generated.truth.realized_r2);
    out.note("support", generated.truth.support_names());
    Ok(out)
}

pub fn import(config: &RunConfig) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("import");
    let manifest_path = config.manifest_path();
    if !manifest_path.is_file() {
        return Err(CliError::MissingStage {
            stage: "synth",
            path: manifest_path,
        });
    }
    let manifest = load_manifest(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let summary = import_manifest(base, &manifest)?;
    let store = config.data_dir.join(STORE_DIR);
    write_store(&store, &summary.series)?;
    out.artifacts.push(store.join(STORE_INDEX));
    if let Some(range) = DateRange::covering(&summary.series) {
        write_json(&mut out, store.join("quality.json"), &quality_report(&summary.series, range))?;
    }
    out.note("series", summary.series.len());
    out.note("skipped_rows", summary.skipped_rows);
    out.note("skipped_values", summary.skipped_values);
    Ok(out)
}

pub fn featurize(config: &RunConfig) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("featurize");
    let store = config.data_dir.join(STORE_DIR);
    if !store.join(STORE_INDEX).is_file() {
        return Err(CliError::MissingStage {
            stage: "import",
            path: store.join(STORE_INDEX),
        });
    }
    let series = read_store(&store)?;
    let f = pipeline::featurize(&series, &config.pipeline.featurize)?;
    let dir = config.data_dir.join(FEATURES_DIR);
    write(&mut out, dir.join("matrix.csv"), f.daily.to_csv())?;
    write(&mut out, dir.join("features.csv"), f.daily.features_csv())?;
    write(&mut out, dir.join("drop_log.txt"), f.drop_log.to_text())?;
    out.note("days", f.daily.n_rows());
    out.note("features", f.daily.n_cols());
    out.note("dropped", f.drop_log.entries.len());
    Ok(out)
}

pub fn correlate(config: &RunConfig) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("correlate");
    let daily = load_matrix(config)?;
    let (lags, pacf) = target_lag_count(&daily, config.pipeline.max_target_lags)?;
    let lagged = build_lagged_matrix(&daily, lags)?;
    let report = correlation_report(&lagged, config.pipeline.significance)?;
    let dir = config.data_dir.join(CORRELATIONS_DIR);
    write_json(&mut out, dir.join("report.json"), &report)?;
    write(&mut out, dir.join("target.csv"), report.to_csv())?;
    write(&mut out, dir.join("all_pairs.csv"), correlation_matrix(&daily).to_csv())?;
    let mut pacf_csv = String::from("lag,coefficient,band\n");
    for (k, c) in pacf.coefficients.iter().enumerate() {
        pacf_csv.push_str(&format!("{},{c},{}\n", k + 1, pacf.band));
    }
    write(&mut out, dir.join("pacf.csv"), pacf_csv)?;
    out.note("target_lags", lags);
    out.note("significant", report.significant_count());
    out.note("excluded", report.excluded.len());
    Ok(out)
}

pub fn train(config: &RunConfig) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("train");
    let p = &config.pipeline;
    let daily = load_matrix(config)?;
    let (lags, _) = target_lag_count(&daily, p.max_target_lags)?;
    let design = build_design(&daily, lags, p.train_fraction)?;
    let dir = config.data_dir.join(MODEL_DIR);
    out.note("target_lags", lags);
    if config.model.linear() {
        let trained = pipeline::train_linear(&design, &p.grid, Default::default(), p.display_range)?;
        let mut grid_csv = String::from("alpha,l1_ratio,mean_mse");
        for k in 0..p.grid.folds {
            grid_csv.push_str(&format!(",fold{}_mse", k + 1));
        }
        grid_csv.push('\n');
        for cell in &trained.search.cells {
            grid_csv.push_str(&format!("{},{},{}", cell.alpha, cell.l1_ratio, cell.mean_mse));
            for m in &cell.fold_mse {
                grid_csv.push_str(&format!(",{m}"));
            }
            grid_csv.push('\n');
        }
        write(&mut out, dir.join("cv_grid.csv"), grid_csv)?;
        out.note("alpha", trained.model.alpha);
        out.note("l1_ratio", trained.model.l1_ratio);
        out.note("selected", trained.model.selected().len());
        out.note("linear_test_explained_variance", trained.test.explained_variance);
        let artifact = LinearArtifact {
            model: trained.model,
            means: design.means.clone(),
            target_lags: lags,
            test: trained.test,
        };
        write_json(&mut out, dir.join("linear.json"), &artifact)?;
    }
    if config.model.mlp() {
        let trained = pipeline::train_mlp(&design, &p.mlp)?;
        write(&mut out, dir.join("mlp_curve.csv"), trained.outcome.curve.to_csv())?;
        out.note("chosen_epochs", trained.model.chosen_epochs);
        out.note("mlp_test_explained_variance", trained.test.explained_variance);
        let artifact = MlpArtifact {
            model: trained.model,
            means: design.means.clone(),
            target_lags: lags,
            test: trained.test,
        };
        write_json(&mut out, dir.join("mlp.json"), &artifact)?;
    }
    Ok(out)
}

/// Lagged matrix rebuilt exactly as at training time, and the requested or
/// latest date in it.
fn lagged_for(config: &RunConfig, target_lags: usize, date: Option<NaiveDate>) -> Result<(DailyMatrix, NaiveDate), CliError> {
    let lagged = build_lagged_matrix(&load_matrix(config)?, target_lags)?;
    let date = match date {
        Some(d) => d,
        None => *lagged
            .dates
            .last()
            .ok_or_else(|| CliError::Config("feature matrix has no rows".into()))?,
    };
    Ok((lagged, date))
}

fn linear_prediction(
    config: &RunConfig,
    date: Option<NaiveDate>,
) -> Result<(LinearArtifact, DailyMatrix, NaiveDate, Vec<f64>, LinearPrediction), CliError> {
    let artifact = load_linear(config)?;
    let (lagged, date) = lagged_for(config, artifact.target_lags, date)?;
    let m = &artifact.model;
    let row = standardized_row(&lagged, &artifact.means, &m.standardizer, &m.feature_names, date)?;
    let breakdown = contributions(m, &row)?;
    let prediction = LinearPrediction {
        prediction: breakdown.prediction,
        contributions: breakdown.rows,
    };
    Ok((artifact, lagged, date, row, prediction))
}

pub fn predict(config: &RunConfig, date: Option<NaiveDate>) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("predict");
    let mut record = PredictionRecord {
        date: NaiveDate::MIN,
        target: config.target.clone(),
        linear: None,
        mlp: None,
    };
    if config.model.linear() {
        let (_, _, d, _, prediction) = linear_prediction(config, date)?;
        record.date = d;
        out.note("linear", &prediction.prediction);
        record.linear = Some(prediction);
    }
    if config.model.mlp() {
        let artifact = load_mlp(config)?;
        let (lagged, d) = lagged_for(config, artifact.target_lags, date)?;
        let m = &artifact.model;
        let row = standardized_row(&lagged, &artifact.means, &m.standardizer, &m.feature_names, d)?;
        let value = m.predict_original(&row)?;
        record.date = d;
        out.note("mlp", value);
        record.mlp = Some(value);
    }
    let path = config
        .data_dir
        .join(PREDICTIONS_DIR)
        .join(format!("{}.json", record.date));
    write_json(&mut out, path, &record)?;
    Ok(out)
}

/// Observed (feature, target) pairs on the original scale.
fn paired(matrix: &DailyMatrix, feature: &str, rows: &[usize]) -> Vec<[f64; 2]> {
    let (Some(f), t) = (matrix.column_index(feature), matrix.target_index()) else {
        return Vec::new();
    };
    rows.iter()
        .filter_map(|&r| Some([matrix.get(r, f)?, matrix.get(r, t)?]))
        .collect()
}

pub fn explain(config: &RunConfig, date: Option<NaiveDate>) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("explain");
    let (artifact, lagged, date, row, prediction) = linear_prediction(config, date)?;
    let m = &artifact.model;
    let breakdown = contributions(m, &row)?;
    let dir = config.chart_path();
    let spec = ChartSpec::waterfall(&breakdown, CHART_WIDTH, CHART_HEIGHT);
    write(&mut out, dir.join(format!("waterfall_{date}.svg")), render_chart(&spec)?)?;

    let all_rows: Vec<usize> = (0..lagged.n_rows()).collect();
    let (target_mean, target_std) = m.target_mean_std();
    for c in prediction.contributions.iter().take(TOP_FEATURES) {
        let stem = file_stem(&c.feature);
        let bar = ChartSpec {
            title: c.feature.clone(),
            width: CHART_WIDTH,
            height: CHART_HEIGHT,
            data: ChartData::Bar {
                feature: c.feature.clone(),
                weight: c.weight,
                difference: c.value,
            },
        };
        write(&mut out, dir.join(format!("bar_{stem}_{date}.svg")), render_chart(&bar)?)?;
        let stats = m
            .standardizer
            .stats(&c.feature)
            .ok_or_else(|| CliError::Config(format!("model has no statistics for {}", c.feature)))?;
        let triangle = ChartSpec {
            title: format!("{} vs {}", m.target, c.feature),
            width: CHART_WIDTH,
            height: CHART_HEIGHT,
            data: ChartData::Triangle {
                feature: c.feature.clone(),
                target: m.target.clone(),
                points: paired(&lagged, &c.feature, &all_rows),
                feature_mean: stats.mean,
                feature_std: stats.std,
                target_mean,
                target_std,
                weight: c.weight,
                today: stats.mean + c.value * stats.std,
            },
        };
        write(&mut out, dir.join(format!("triangle_{stem}_{date}.svg")), render_chart(&triangle)?)?;
    }
    out.note("date", date);
    out.note("rows", breakdown.rows.len());
    Ok(out)
}

pub fn plot(config: &RunConfig) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("plot");
    let daily = load_matrix(config)?;
    let report = load_correlations(config)?;
    let dir = config.chart_path();
    let target = daily.target_index();
    let series = ChartSpec {
        title: format!("{} with {}-day moving average", daily.target, MOVING_AVERAGE_WINDOW),
        width: CHART_WIDTH,
        height: CHART_HEIGHT,
        data: ChartData::TimeSeries {
            label: daily.target.clone(),
            dates: daily.dates.clone(),
            values: daily.column(target),
            window: MOVING_AVERAGE_WINDOW,
        },
    };
    write(&mut out, dir.join(format!("timeseries_{}.svg", file_stem(&daily.target))), render_chart(&series)?)?;

    let (lags, _) = target_lag_count(&daily, config.pipeline.max_target_lags)?;
    let lagged = build_lagged_matrix(&daily, lags)?;
    let all_rows: Vec<usize> = (0..lagged.n_rows()).collect();
    let mut ranked: Vec<_> = report.rows.iter().collect();
    ranked.sort_by(|a, b| a.p_adj.total_cmp(&b.p_adj).then_with(|| a.feature.cmp(&b.feature)));
    for row in ranked.into_iter().take(TOP_FEATURES) {
        let points = paired(&lagged, &row.feature, &all_rows);
        if points.len() < 3 {
            continue;
        }
        let spec = ChartSpec {
            title: format!("{} vs {}", lagged.target, row.feature),
            width: CHART_WIDTH,
            height: CHART_HEIGHT,
            data: ChartData::Scatter {
                x_label: row.feature.clone(),
                y_label: lagged.target.clone(),
                points,
            },
        };
        write(&mut out, dir.join(format!("scatter_{}.svg", file_stem(&row.feature))), render_chart(&spec)?)?;
    }
    Ok(out)
}

pub fn report(config: &RunConfig) -> Result<StageOutput, CliError> {
    let mut out = StageOutput::new("report");
    let artifact = load_linear(config)?;
    let correlations = load_correlations(config)?;
    let dir = config.data_dir.join(REPORT_DIR);
    write(&mut out, dir.join("table1.csv"), table1_csv(&artifact.model))?;
    write(&mut out, dir.join("table2.csv"), table2_csv(&correlations, Some(&artifact.model)))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("HumidInMax()"), "HumidInMax");
        assert_eq!(file_stem("CO2Min()Yesterday"), "CO2Min__Yesterday");
        assert_eq!(file_stem("Mood"), "Mood");
    }
}
