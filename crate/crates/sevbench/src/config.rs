//! Optional TOML config file. Values here sit below command-line flags and
//! environment variables and above built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub reasoning_budget: Option<u32>,
    pub timeout_secs: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub endpoint: Option<String>,
    /// `mock` selects the built-in hashed embedder.
    pub model: Option<String>,
    pub dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub parallelism: Option<usize>,
    pub document_prefix: Option<String>,
    pub query_prefix: Option<String>,
    pub timeout_secs: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: Option<u64>,
    pub ratio: Option<f64>,
    pub k: Option<usize>,
    pub exemplars: Option<usize>,
    pub parse_mode: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub embedding: EmbeddingSection,
    pub experiment: ExperimentSection,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|source| ConfigFileError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// First present value wins: flag (clap already folds in env), then file,
/// then the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_and_unknown_keys_fail() {
        let cfg = ConfigFile::parse(
            "[model]\nendpoint = \"http://h:1/v1\"\ntemperature = 0.2\n[embedding]\ndim = 384\n[experiment]\nk = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.model.endpoint.as_deref(), Some("http://h:1/v1"));
        assert_eq!(cfg.embedding.dim, Some(384));
        assert_eq!(cfg.experiment.k, Some(3));
        assert!(ConfigFile::parse("[model]\ntemprature = 1.0\n").is_err());
        assert_eq!(ConfigFile::parse("").unwrap(), ConfigFile::default());
    }

    #[test]
    fn precedence() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }
}
