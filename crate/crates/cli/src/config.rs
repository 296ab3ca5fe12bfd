//! The run configuration file and the command-line overrides applied to it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use moodlens::pipeline::PipelineConfig;
use moodlens::synth::SynthConfig;

use crate::error::CliError;

pub const DATA_DIR_ENV: &str = "MOODLENS_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Linear,
    Mlp,
    Both,
}

impl ModelChoice {
    pub fn linear(self) -> bool {
        matches!(self, ModelChoice::Linear | ModelChoice::Both)
    }

    pub fn mlp(self) -> bool {
        matches!(self, ModelChoice::Mlp | ModelChoice::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every stage artifact.
    pub data_dir: PathBuf,
    /// Source manifest; a relative path is resolved against `data_dir`.
    pub manifest: PathBuf,
    pub target: String,
    pub seed: u64,
    pub model: ModelChoice,
    /// Chart directory; a relative path is resolved against `data_dir`.
    pub chart_dir: PathBuf,
    pub pipeline: PipelineConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            manifest: PathBuf::from("raw/manifest.toml"),
            target: "Mood".into(),
            seed: 0,
            model: ModelChoice::Linear,
            chart_dir: PathBuf::from("charts"),
            pipeline: PipelineConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Values given on the command line or in the environment; each one wins
/// over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub target: Option<String>,
    pub model: Option<ModelChoice>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, overrides: Overrides) {
        if let Some(dir) = overrides.data_dir {
            self.data_dir = dir;
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(target) = overrides.target {
            self.target = target;
        }
        if let Some(model) = overrides.model {
            self.model = model;
        }
        // one seed and one target name drive every stage
        self.pipeline.featurize.target = self.target.clone();
        self.pipeline.mlp.seed = self.seed;
        self.synth.target = self.target.clone();
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.pipeline;
        let bad = |m: String| Err(CliError::Config(m));
        if self.target.is_empty() {
            return bad("target name is empty".into());
        }
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", p.train_fraction));
        }
        if !(p.significance > 0.0 && p.significance < 1.0) {
            return bad(format!("significance must be in (0, 1), got {}", p.significance));
        }
        for (name, t) in [
            ("day_threshold", p.featurize.day_threshold),
            ("feature_threshold", p.featurize.feature_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("{name} must be in [0, 1], got {t}"));
            }
        }
        if p.grid.alphas.is_empty() || p.grid.l1_ratios.is_empty() {
            return bad("hyperparameter grids must not be empty".into());
        }
        if p.grid.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("alphas must be finite and non-negative".into());
        }
        if p.grid.l1_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("l1_ratios must lie in [0, 1]".into());
        }
        if p.grid.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", p.grid.folds));
        }
        if p.featurize.aggregators.is_empty() {
            return bad("no aggregators configured".into());
        }
        self.synth.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data_dir.join(&self.manifest)
    }

    pub fn chart_path(&self) -> PathBuf {
        self.data_dir.join(&self.chart_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let config: RunConfig = toml::from_str("").unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.pipeline.significance, 0.05);
        assert!(config.pipeline.grid.alphas.contains(&0.12));
        assert!(config.pipeline.grid.l1_ratios.contains(&1.0));
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let text = "target = \"Energy\"\n[pipeline]\ntrain_fraction = 0.7\n[pipeline.grid]\nalphas = [0.1]\n";
        let config: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(config.pipeline.train_fraction, 0.7);
        assert_eq!(config.pipeline.grid.alphas, vec![0.1]);
        assert_eq!(config.pipeline.grid.folds, 5);
    }

    #[test]
    fn overrides_reach_every_stage() {
        let mut config = RunConfig::default();
        config.apply(Overrides {
            seed: Some(9),
            target: Some("Energy".into()),
            ..Overrides::default()
        });
        assert_eq!(config.pipeline.mlp.seed, 9);
        assert_eq!(config.synth.seed, 9);
        assert_eq!(config.pipeline.featurize.target, "Energy");
        assert_eq!(config.synth.target, "Energy");
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(toml::from_str::<RunConfig>("colour = 1").is_err());
        let mut config = RunConfig::default();
        config.pipeline.train_fraction = 1.0;
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
    }
}
