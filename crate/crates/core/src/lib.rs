//! Search, pre-judge and write pipeline for Chinese criminal judgment
//! documents.
//!
//! A pending case's facts retrieve law articles and one precedent case
//! ([`retrieval`]); the precedent's elements and supplementary articles
//! prompt a structured intermediate conclusion ([`prejudge`]); the
//! conclusion and the precedent document prompt the final judgment
//! ([`writer`]). [`metrics`] scores generated judgments against gold ones.

pub mod backend;
pub mod config;
pub mod corpus;
pub mod document;
pub mod error;
pub mod extractor;
pub mod metrics;
pub mod numeral;
pub mod pipeline;
pub mod prejudge;
pub mod retrieval;
pub mod template;
pub mod writer;

pub use error::Error;
pub use pipeline::{Pipeline, RunOutput, Settings, SweepResult};
