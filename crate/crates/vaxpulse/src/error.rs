//! Crate-level error wrapping every subsystem's failure type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error(transparent)]
    Provider(#[from] crate::providers::ProviderError),
    #[error(transparent)]
    Train(#[from] crate::sentiment::TrainError),
    #[error(transparent)]
    Topics(#[from] crate::topics::TopicsError),
    #[error(transparent)]
    Trends(#[from] crate::trends::TrendsError),
    #[error(transparent)]
    Report(#[from] crate::trends::ReportError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{0}")]
    Pipeline(String),
}
