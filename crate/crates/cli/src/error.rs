use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path} not found; run `moodlens {stage}` first")]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Ingest(#[from] moodlens::ingest::IngestError),
    #[error(transparent)]
    Featurize(#[from] moodlens::featurize::FeaturizeError),
    #[error(transparent)]
    Stats(#[from] moodlens::stats::StatsError),
    #[error(transparent)]
    Pipeline(#[from] moodlens::pipeline::PipelineError),
    #[error(transparent)]
    Fit(#[from] moodlens::elasticnet::FitError),
    #[error(transparent)]
    Mlp(#[from] moodlens::mlp::MlpError),
    #[error(transparent)]
    Explain(#[from] moodlens::explain::ExplainError),
    #[error(transparent)]
    Synth(#[from] moodlens::synth::SynthError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingStage { .. } => "MissingStage",
            CliError::Config(_) => "ConfigError",
            CliError::Io { .. } => "IoError",
            CliError::Artifact { .. } => "ArtifactError",
            CliError::Ingest(_) => "IngestError",
            CliError::Featurize(_) => "FeaturizeError",
            CliError::Stats(_) => "StatsError",
            CliError::Pipeline(_) => "PipelineError",
            CliError::Fit(_) => "FitError",
            CliError::Mlp(_) => "MlpError",
            CliError::Explain(_) => "ExplainError",
            CliError::Synth(_) => "SynthError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingStage { .. } => 3,
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json_line(&self) -> String {
        let mut value = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::MissingStage { stage, .. } = self {
            value["stage"] = serde_json::Value::from(*stage);
        }
        value.to_string()
    }
}
