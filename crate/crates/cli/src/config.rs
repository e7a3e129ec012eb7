//! Effective run configuration: command-line flags over a TOML file over
//! built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use pma_core::model::ModelConfig;
use pma_core::preprocess::{AblationFlags, ResampleMode};
use pma_core::{Error, Result};

/// Environment variable naming the directory that relative paths resolve
/// against.
pub const WORK_DIR_VAR: &str = "PMA_WORK_DIR";

/// Layout of the `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub run: RunSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub threshold: f64,
    pub resample: ResampleMode,
    pub beta: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            threshold: 0.5,
            resample: ResampleMode::None,
            beta: 1.0,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
    }
}

/// Flags that override the configuration file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML file with `[model]` and `[run]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Comma-separated feature families to remove: source-name, line,
    /// before-after, operator.
    #[arg(long)]
    pub ablate: Option<String>,
    /// Class balancing of the training pairs: none, over or under.
    #[arg(long)]
    pub resample: Option<String>,
    /// Kill probability at or above which a pair is predicted killed.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Weight of recall in the F-score.
    #[arg(long)]
    pub beta: Option<f64>,
}

impl Overrides {
    /// Merges flags over the file (if any) over defaults.
    pub fn effective(&self, work_dir: &WorkDir) -> Result<FileConfig> {
        let mut cfg = match &self.config {
            Some(p) => FileConfig::load(&work_dir.resolve(p))?,
            None => FileConfig::default(),
        };
        let m = &mut cfg.model;
        set(&mut m.seed, self.seed);
        set(&mut m.max_epochs, self.epochs);
        set(&mut m.batch_size, self.batch_size);
        set(&mut m.learning_rate, self.learning_rate);
        set(&mut m.embed_dim, self.embed_dim);
        set(&mut m.hidden_dim, self.hidden_dim);
        set(&mut m.dropout_rate, self.dropout);
        set(&mut m.max_len, self.max_len);
        if let Some(a) = &self.ablate {
            m.ablation = AblationFlags::parse_list(a)?;
        }
        if let Some(r) = &self.resample {
            cfg.run.resample = ResampleMode::parse(r)?;
        }
        set(&mut cfg.run.threshold, self.threshold);
        set(&mut cfg.run.beta, self.beta);
        if !(0.0..=1.0).contains(&cfg.run.threshold) {
            return Err(Error::validation(format!("threshold {} outside [0, 1]", cfg.run.threshold)));
        }
        if !(cfg.run.beta > 0.0 && cfg.run.beta.is_finite()) {
            return Err(Error::validation(format!("beta must be positive, got {}", cfg.run.beta)));
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Base directory for relative paths, taken from `PMA_WORK_DIR`.
#[derive(Clone, Debug, Default)]
pub struct WorkDir(Option<PathBuf>);

impl WorkDir {
    pub fn from_env() -> Self {
        WorkDir(std::env::var_os(WORK_DIR_VAR).filter(|v| !v.is_empty()).map(PathBuf::from))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.0 {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[model]\nseed = 3\nmax_epochs = 4\n[run]\nthreshold = 0.7\n").unwrap();
        let o = Overrides {
            config: Some(path),
            epochs: Some(9),
            ..Overrides::default()
        };
        let cfg = o.effective(&WorkDir::default()).unwrap();
        assert_eq!(cfg.model.seed, 3);
        assert_eq!(cfg.model.max_epochs, 9);
        assert_eq!(cfg.model.hidden_dim, ModelConfig::default().hidden_dim);
        assert_eq!(cfg.run.threshold, 0.7);
        assert_eq!(cfg.run.beta, 1.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[model]\nwidth = 3\n").unwrap();
        let o = Overrides {
            config: Some(path),
            ..Overrides::default()
        };
        assert_eq!(o.effective(&WorkDir::default()).unwrap_err().exit_code(), 1);
        let o = Overrides {
            threshold: Some(2.0),
            ..Overrides::default()
        };
        assert!(o.effective(&WorkDir::default()).is_err());
    }

    #[test]
    fn work_dir_resolves_relative_paths() {
        let w = WorkDir(Some(PathBuf::from("/w")));
        assert_eq!(w.resolve(Path::new("a/b")), PathBuf::from("/w/a/b"));
        assert_eq!(w.resolve(Path::new("/abs")), PathBuf::from("/abs"));
    }
}
