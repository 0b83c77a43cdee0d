//! HTTP job service for the judgment pipeline.
//!
//! Each job walks Created → Searched → PreJudged → (AwaitingReview →)
//! Written, or ends in Failed. Jobs are event-sourced ([`job`]) and kept in
//! a [`store::JobStore`] that can persist an append-only log per job.

pub mod http;
pub mod job;
pub mod service;
pub mod store;

use std::sync::Arc;

use judgeflow_core::config::Config;
use judgeflow_core::pipeline::{load_pipeline, settings_from_config};

pub use http::router;
pub use job::{Event, Job, JobOptions, JobState};
pub use service::{CreateJob, JobService, ServiceError};
pub use store::{JobStore, StoreError};

/// Loads corpora and indices and opens the configured job store.
pub async fn build_service(config: &Config) -> Result<JobService, ServiceError> {
    let pipeline = load_pipeline(config, settings_from_config(config)).await?;
    let store = match &config.service.store_dir {
        Some(dir) => JobStore::open(dir, config.service.snapshot_every)?,
        None => JobStore::in_memory(),
    };
    Ok(JobService::new(pipeline, Arc::new(store)))
}

/// Serves the API on `listener` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, service: JobService) -> std::io::Result<()> {
    log::info!("serving on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}
