//! Crate-level error with a stable machine-readable kind.

use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;
use crate::config::ConfigError;
use crate::corpus::CorpusError;
use crate::document::SegmentError;
use crate::extractor::ExtractError;
use crate::metrics::MetricsError;
use crate::prejudge::PrejudgeError;
use crate::retrieval::RetrievalError;
use crate::template::TemplateError;
use crate::writer::WriterError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus not ingested: {0} is missing")]
    MissingCorpus(PathBuf),
    #[error("cannot access {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prejudge(#[from] PrejudgeError),
    #[error(transparent)]
    Writer(#[from] WriterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn backend_kind(e: &BackendError) -> &'static str {
    match e {
        BackendError::Unavailable { .. } => "BackendUnavailable",
        BackendError::InvalidResponse { .. } => "InvalidBackendResponse",
    }
}

fn template_kind(_: &TemplateError) -> &'static str {
    "TemplateError"
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: e.to_string(),
        }
    }

    /// Stable name of the failure, used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingCorpus(_) => "MissingCorpus",
            Error::Io { .. } => "IoError",
            Error::Corpus(e) => match e {
                CorpusError::Io { .. } => "IoError",
                CorpusError::Format { .. } => "FormatError",
                CorpusError::DuplicateId(_) => "DuplicateId",
                CorpusError::MismatchedIds => "MismatchedIds",
                CorpusError::InvalidArticleId(_) => "InvalidArticleId",
            },
            Error::Segment(_) => "MalformedDocument",
            Error::Extract(_) => "ExtractionIncomplete",
            Error::Retrieval(e) => match e {
                RetrievalError::EmptyCorpus => "EmptyCorpus",
                RetrievalError::DimensionMismatch { .. } => "DimensionMismatch",
                RetrievalError::InvalidK => "InvalidK",
                RetrievalError::ScoreCountMismatch { .. } => "ScoreCountMismatch",
                RetrievalError::NonFiniteInput => "NonFiniteInput",
                RetrievalError::IndexOutOfRange { .. } => "IndexOutOfRange",
                RetrievalError::MissingScore(_) => "MissingScore",
                RetrievalError::InsufficientNegatives { .. } => "InsufficientNegatives",
                RetrievalError::NoPositiveInCandidates => "NoPositiveInCandidates",
                RetrievalError::VectorCountMismatch { .. } => "InvalidBackendResponse",
                RetrievalError::IndexCorpusMismatch => "IndexCorpusMismatch",
                RetrievalError::Backend(b) => backend_kind(b),
                RetrievalError::Extract(_) => "ExtractionIncomplete",
            },
            Error::Prejudge(e) => match e {
                PrejudgeError::ConclusionParse(_) => "ConclusionParseError",
                PrejudgeError::InvalidEdit { .. } => "InvalidEdit",
                PrejudgeError::InvalidParams(_) => "InvalidParams",
                PrejudgeError::Template(t) => template_kind(t),
                PrejudgeError::Backend(b) => backend_kind(b),
            },
            Error::Writer(e) => match e {
                WriterError::MalformedDocument(_) => "MalformedDocument",
                WriterError::InvalidConclusion(_) => "InvalidConclusion",
                WriterError::Template(t) => template_kind(t),
                WriterError::Prejudge(_) => "InvalidParams",
                WriterError::Backend(b) => backend_kind(b),
            },
            Error::Metrics(e) => match e {
                MetricsError::NegativeInput => "NegativeInput",
                MetricsError::EmptyInput => "EmptyInput",
                MetricsError::Extraction { .. } => "ExtractionIncomplete",
                MetricsError::VectorCount { .. } => "InvalidBackendResponse",
                MetricsError::Backend(b) => backend_kind(b),
            },
            Error::Config(e) => match e {
                ConfigError::Backend(b) => backend_kind(b),
                _ => "ConfigError",
            },
            Error::Template(t) => template_kind(t),
            Error::Backend(b) => backend_kind(b),
        }
    }
}
