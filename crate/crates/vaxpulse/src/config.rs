//! Pipeline configuration: one JSON file drives every stage.
//!
//! Relative paths inside the file resolve against the config file's
//! directory, so a config can travel with its fixtures. Validation names
//! the offending field; referenced files must exist at validation time.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::normalize::CleanConfig;
use crate::sentiment::SentimentLabel;
use crate::trends::{Granularity, ReportFormat};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

fn default_seed() -> u64 {
    0
}

fn default_tau_r() -> f64 {
    0.75
}

fn default_tau_s() -> f64 {
    0.70
}

fn default_true() -> bool {
    true
}

fn default_distance_threshold() -> f64 {
    0.6
}

fn default_min_topic_size() -> usize {
    10
}

fn default_author_salt() -> String {
    "vaxpulse".into()
}

fn default_rate_limit() -> u32 {
    60
}

fn default_page_size() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    /// Corpus-format fixture files ingested by `pipeline run`.
    #[serde(default)]
    pub fixtures: Vec<PathBuf>,
    /// Search-interest CSV files ingested by `pipeline run`.
    #[serde(default)]
    pub trends: Vec<PathBuf>,
    #[serde(default = "default_author_salt")]
    pub author_salt: String,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default = "default_rate_limit")]
    pub rate_limit: u32,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            fixtures: Vec::new(),
            trends: Vec::new(),
            author_salt: default_author_salt(),
            page_size: default_page_size(),
            rate_limit: default_rate_limit(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceSection {
    #[serde(default = "default_tau_r")]
    pub tau_r: f64,
    #[serde(default = "default_true")]
    pub use_provider: bool,
    /// Vaccine lexicon file; bundled lexicon when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// Pre-trained relevance model; when absent one is trained from
    /// `train_path` or the bundled seed examples.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub train_path: Option<PathBuf>,
}

impl Default for RelevanceSection {
    fn default() -> Self {
        Self {
            tau_r: default_tau_r(),
            use_provider: true,
            lexicon: None,
            model_path: None,
            train_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentimentSection {
    pub model_path: PathBuf,
    #[serde(default = "default_tau_s")]
    pub tau_s: f64,
    #[serde(default = "default_true")]
    pub use_provider: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsSection {
    #[serde(default = "default_distance_threshold")]
    pub distance_threshold: f64,
    #[serde(default = "default_min_topic_size")]
    pub min_topic_size: usize,
    #[serde(default = "default_true")]
    pub concern_grouping: bool,
    /// Restrict the topic fit to these sentiment labels.
    #[serde(default)]
    pub sentiment_filter: Option<Vec<SentimentLabel>>,
    /// Concern taxonomy file; bundled taxonomy when absent.
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    /// Use the provider for concern fallback and topic naming.
    #[serde(default)]
    pub use_provider: bool,
}

impl Default for TopicsSection {
    fn default() -> Self {
        Self {
            distance_threshold: default_distance_threshold(),
            min_topic_size: default_min_topic_size(),
            concern_grouping: true,
            sentiment_filter: None,
            taxonomy: None,
            use_provider: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub id: String,
    /// Mock response table; a provider with `mock_file` is offline.
    #[serde(default)]
    pub mock_file: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable naming the credential.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_rate_limit")]
    pub rate_limit: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub granularity: Granularity,
    pub formats: BTreeSet<ReportFormat>,
    pub out_dir: PathBuf,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            granularity: Granularity::Monthly,
            formats: [ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Svg]
                .into_iter()
                .collect(),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub store_root: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub clean: CleanConfig,
    #[serde(default)]
    pub relevance: RelevanceSection,
    pub sentiment: SentimentSection,
    #[serde(default)]
    pub topics: TopicsSection,
    #[serde(default)]
    pub providers: Vec<ProviderSection>,
    #[serde(default)]
    pub report: ReportSection,
    /// Digest of the raw config file; stable wherever the file travels,
    /// unlike the resolved absolute paths.
    #[serde(skip)]
    source_digest: String,
}

impl PipelineConfig {
    /// Parses and validates; relative paths resolve against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let body = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut config: PipelineConfig =
            serde_json::from_str(&body).map_err(|e| ConfigError::File {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        config.source_digest = hex::encode(Sha256::digest(body.as_bytes()));
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        anchor(&mut self.store_root);
        anchor(&mut self.report.out_dir);
        anchor(&mut self.sentiment.model_path);
        for p in self
            .ingest
            .fixtures
            .iter_mut()
            .chain(self.ingest.trends.iter_mut())
        {
            anchor(p);
        }
        for p in [
            self.relevance.lexicon.as_mut(),
            self.relevance.model_path.as_mut(),
            self.relevance.train_path.as_mut(),
            self.topics.taxonomy.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            anchor(p);
        }
        for provider in &mut self.providers {
            if let Some(p) = provider.mock_file.as_mut() {
                anchor(p);
            }
        }
    }

    /// Field-naming validation: thresholds in range, referenced files
    /// present, provider entries well-formed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |field: &'static str, value: f64| -> Result<(), ConfigError> {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Field {
                    field,
                    reason: format!("{value} is outside [0, 1]"),
                });
            }
            Ok(())
        };
        unit("relevance.tau_r", self.relevance.tau_r)?;
        unit("sentiment.tau_s", self.sentiment.tau_s)?;
        if self.topics.distance_threshold < 0.0 {
            return Err(ConfigError::Field {
                field: "topics.distance_threshold",
                reason: "must be non-negative".into(),
            });
        }
        if self.clean.min_tokens < 1 {
            return Err(ConfigError::Field {
                field: "clean.min_tokens",
                reason: "must be at least 1".into(),
            });
        }
        if self.ingest.rate_limit < 1 {
            return Err(ConfigError::Field {
                field: "ingest.rate_limit",
                reason: "must be at least 1".into(),
            });
        }

        let must_exist = |field: &'static str, path: &Path| -> Result<(), ConfigError> {
            if !path.exists() {
                return Err(ConfigError::Field {
                    field,
                    reason: format!("referenced file {} does not exist", path.display()),
                });
            }
            Ok(())
        };
        for path in &self.ingest.fixtures {
            must_exist("ingest.fixtures", path)?;
        }
        for path in &self.ingest.trends {
            must_exist("ingest.trends", path)?;
        }
        if let Some(path) = &self.relevance.lexicon {
            must_exist("relevance.lexicon", path)?;
        }
        if let Some(path) = &self.relevance.train_path {
            must_exist("relevance.train_path", path)?;
        }
        if let Some(path) = &self.topics.taxonomy {
            must_exist("topics.taxonomy", path)?;
        }
        for provider in &self.providers {
            match (&provider.mock_file, &provider.endpoint) {
                (Some(path), _) => must_exist("providers.mock_file", path)?,
                (None, Some(_)) => {
                    if provider.model.is_none() {
                        return Err(ConfigError::Field {
                            field: "providers.model",
                            reason: format!("provider {} has an endpoint but no model", provider.id),
                        });
                    }
                }
                (None, None) => {
                    return Err(ConfigError::Field {
                        field: "providers.endpoint",
                        reason: format!(
                            "provider {} needs either mock_file or endpoint",
                            provider.id
                        ),
                    });
                }
            }
        }
        let needs_provider = self.relevance.use_provider
            || self.sentiment.use_provider
            || self.topics.use_provider;
        if needs_provider && self.providers.is_empty() {
            return Err(ConfigError::Field {
                field: "providers",
                reason: "a stage has use_provider=true but no provider is configured".into(),
            });
        }
        Ok(())
    }

    /// Digest identifying the configuration in run manifests: the raw
    /// file bytes when loaded from disk, the canonical JSON encoding for
    /// configs built in code.
    pub fn digest(&self) -> String {
        if !self.source_digest.is_empty() {
            return self.source_digest.clone();
        }
        let body = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(body.as_bytes()))
    }
}
