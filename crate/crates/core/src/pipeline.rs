//! The stages from imported series to fitted models, shared by the command
//! line and the end-to-end tests.

use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elasticnet::{
    cv_grid_search, evaluate, time_series_split, Evaluation, FitError, FitOptions, GridSearchConfig,
    GridSearchResult, LinearModel, SplitSpec,
};
use crate::featurize::{
    apply_impute, apply_standardizer, build_daily_matrix, build_lagged_matrix, drop_sparse,
    fit_impute_means, fit_standardizer, ColumnMeans, DailyMatrix, DropLog, FeaturizeConfig, FeaturizeError,
    Standardizer,
};
use crate::ingest::RawSeries;
use crate::mlp::{train_early_stopping, MlpError, MlpModel, TrainConfig, TrainOutcome};
use crate::stats::{pacf, select_lag_count, PacfResult, StatsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("no feature row for {0}")]
    UnknownDate(NaiveDate),
    #[error("feature {0} required by the model is not available")]
    MissingFeature(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub featurize: FeaturizeConfig,
    /// Largest target lag considered by the partial autocorrelation scan.
    pub max_target_lags: usize,
    pub train_fraction: f64,
    pub significance: f64,
    pub grid: GridSearchConfig,
    pub display_range: Option<[f64; 2]>,
    pub mlp: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            featurize: FeaturizeConfig::default(),
            max_target_lags: 7,
            train_fraction: 0.8,
            significance: 0.05,
            grid: GridSearchConfig::default(),
            display_range: Some([1.0, 9.0]),
            mlp: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Featurized {
    pub daily: DailyMatrix,
    pub drop_log: DropLog,
}

/// Daily aggregation followed by removal of sparse features and days.
pub fn featurize(series: &[RawSeries], config: &FeaturizeConfig) -> Result<Featurized> {
    let daily = build_daily_matrix(series, config)?;
    let (daily, drop_log) = drop_sparse(&daily, config.day_threshold, config.feature_threshold)?;
    Ok(Featurized { daily, drop_log })
}

/// Number of target lags to include: the leading run of significant partial
/// autocorrelations of the observed target values, at least 1.
pub fn target_lag_count(daily: &DailyMatrix, max_lags: usize) -> Result<(usize, PacfResult)> {
    let target: Vec<f64> = daily.column(daily.target_index()).into_iter().flatten().collect();
    let max_lag = max_lags.min(target.len().saturating_sub(2) / 2).max(1);
    let result = pacf(&target, max_lag)?;
    let k = select_lag_count(&result.coefficients, result.band);
    Ok((k, result))
}

/// Model-ready matrices. Row indices of `lagged` and `standardized` agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub target_lags: usize,
    /// Lagged features before imputation, on their original scale.
    pub lagged: DailyMatrix,
    /// Imputed with training means and standardized with training statistics.
    pub standardized: DailyMatrix,
    pub means: ColumnMeans,
    pub standardizer: Standardizer,
    /// Rows with an observed target, oldest first.
    pub modeled_rows: Vec<usize>,
    /// Split over positions in `modeled_rows`.
    pub split: SplitSpec,
}

impl Design {
    pub fn train_rows(&self) -> Vec<usize> {
        self.modeled_rows[self.split.train.clone()].to_vec()
    }

    pub fn test_rows(&self) -> Vec<usize> {
        self.modeled_rows[self.split.test.clone()].to_vec()
    }

    pub fn train_xy(&self) -> (Array2<f64>, Array1<f64>, Vec<String>) {
        self.standardized.design(&self.train_rows())
    }

    pub fn test_xy(&self) -> (Array2<f64>, Array1<f64>, Vec<String>) {
        self.standardized.design(&self.test_rows())
    }
}

pub fn build_design(daily: &DailyMatrix, target_lags: usize, train_fraction: f64) -> Result<Design> {
    let lagged = build_lagged_matrix(daily, target_lags)?;
    let modeled_rows = lagged.rows_with_target();
    let split = time_series_split(modeled_rows.len(), train_fraction)?;
    let train_rows = &modeled_rows[split.train.clone()];
    let means = fit_impute_means(&lagged, train_rows);
    let imputed = apply_impute(&lagged, &means);
    let standardizer = fit_standardizer(&imputed, train_rows)?;
    let standardized = apply_standardizer(&imputed, &standardizer)?;
    Ok(Design {
        target_lags,
        lagged,
        standardized,
        means,
        standardizer,
        modeled_rows,
        split,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLinear {
    pub model: LinearModel,
    pub search: GridSearchResult,
    pub test: Evaluation,
}

pub fn train_linear(
    design: &Design,
    grid: &GridSearchConfig,
    options: FitOptions,
    display_range: Option<[f64; 2]>,
) -> Result<TrainedLinear> {
    let (x, y, names) = design.train_xy();
    let search = cv_grid_search(x.view(), y.view(), grid, options)?;
    let model = LinearModel {
        target: design.standardized.target.clone(),
        feature_names: names,
        weights: search.weights.clone(),
        alpha: search.alpha,
        l1_ratio: search.l1_ratio,
        residual_std: search.residual_std,
        standardizer: design.standardizer.clone(),
        display_range,
    };
    let (xt, yt, _) = design.test_xy();
    let test = model.evaluate(xt.view(), yt.view())?;
    Ok(TrainedLinear { model, search, test })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMlp {
    pub model: MlpModel,
    pub outcome: TrainOutcome,
    pub test: Evaluation,
}

pub fn train_mlp(design: &Design, config: &TrainConfig) -> Result<TrainedMlp> {
    let (x, y, names) = design.train_xy();
    let outcome = train_early_stopping(x.view(), y.view(), config)?;
    let (xt, yt, _) = design.test_xy();
    let pred = Array1::from(outcome.network.predict(xt.view())?);
    let test = evaluate(pred.view(), yt.view());
    let model = MlpModel {
        target: design.standardized.target.clone(),
        feature_names: names,
        network: outcome.network.clone(),
        chosen_epochs: outcome.chosen_epochs,
        standardizer: design.standardizer.clone(),
    };
    Ok(TrainedMlp { model, outcome, test })
}

/// Standardized feature row for `date`, in `feature_names` order, using the
/// stored imputation means and training statistics.
pub fn standardized_row(
    lagged: &DailyMatrix,
    means: &ColumnMeans,
    standardizer: &Standardizer,
    feature_names: &[String],
    date: NaiveDate,
) -> Result<Vec<f64>> {
    let row = lagged.row_index(date).ok_or(PipelineError::UnknownDate(date))?;
    feature_names
        .iter()
        .map(|name| {
            let raw = lagged
                .column_index(name)
                .and_then(|c| lagged.get(row, c))
                .or_else(|| means.means.get(name).copied())
                .ok_or_else(|| PipelineError::MissingFeature(name.clone()))?;
            standardizer
                .transform(name, raw)
                .ok_or_else(|| PipelineError::MissingFeature(name.clone()))
        })
        .collect()
}
