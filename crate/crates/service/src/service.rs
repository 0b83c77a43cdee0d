//! Job operations: create, advance through the pipeline stages, edit the
//! conclusion under review, and evaluate a written job.

use std::sync::Arc;

use chrono::Utc;
use judgeflow_core::corpus::CaseDocument;
use judgeflow_core::metrics::MetricReport;
use judgeflow_core::prejudge::{apply_human_edit, ConclusionPatch, PrejudgeError};
use judgeflow_core::Pipeline;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::job::{Event, Job, JobError, JobOptions, JobState};
use crate::store::{JobStore, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("job {0} not found")]
    NotFound(String),
    #[error("cannot advance from {from:?} to {to:?}")]
    InvalidTransition { from: JobState, to: JobState },
    #[error("{operation} needs a job in state {required:?}, job is {state:?}")]
    InvalidState {
        operation: &'static str,
        state: JobState,
        required: JobState,
    },
    #[error("invalid edit of {field}: {reason}")]
    InvalidEdit { field: String, reason: String },
    #[error("job {job_id} changed concurrently (expected version {expected}, found {actual})")]
    Conflict {
        job_id: String,
        expected: u64,
        actual: u64,
    },
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Pipeline(#[from] judgeflow_core::Error),
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ServiceError::NotFound(id),
            StoreError::Conflict {
                job_id,
                expected,
                actual,
            } => ServiceError::Conflict {
                job_id,
                expected,
                actual,
            },
            other => ServiceError::Store(other),
        }
    }
}

impl ServiceError {
    /// Stable machine-readable error name.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::InvalidRequest(_) => "InvalidRequest",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::InvalidTransition { .. } => "InvalidTransition",
            ServiceError::InvalidState { .. } => "InvalidState",
            ServiceError::InvalidEdit { .. } => "InvalidEdit",
            ServiceError::Conflict { .. } => "Conflict",
            ServiceError::Store(StoreError::Job(JobError::InvalidTransition { .. })) => {
                "InvalidTransition"
            }
            ServiceError::Store(_) => "StoreError",
            ServiceError::Pipeline(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateJob {
    pub fact: String,
    #[serde(flatten)]
    pub options: JobOptions,
}

/// The pipeline bound to a job store.
#[derive(Clone)]
pub struct JobService {
    pipeline: Pipeline,
    store: Arc<JobStore>,
}

impl JobService {
    pub fn new(pipeline: Pipeline, store: Arc<JobStore>) -> Self {
        Self { pipeline, store }
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn store(&self) -> &Arc<JobStore> {
        &self.store
    }

    pub fn create_job(&self, req: CreateJob) -> Result<Arc<Job>, ServiceError> {
        let fact = req.fact.trim();
        if fact.is_empty() {
            return Err(ServiceError::InvalidRequest("fact is empty".into()));
        }
        if req.options.k1 == Some(0) || req.options.k2 == Some(0) {
            return Err(ServiceError::InvalidRequest(
                "k1 and k2 must be positive".into(),
            ));
        }
        let event = Event::Created {
            job_id: uuid::Uuid::new_v4().simple().to_string(),
            fact: fact.to_string(),
            options: req.options,
            at: Utc::now(),
        };
        Ok(self.store.create(event)?)
    }

    pub fn get(&self, job_id: &str) -> Result<Arc<Job>, ServiceError> {
        Ok(self.store.get(job_id)?)
    }

    pub fn list(&self, state: Option<JobState>) -> Vec<Arc<Job>> {
        self.store.list(state)
    }

    /// Runs stages until the job reaches `target`. A review-mode job halts
    /// at `AwaitingReview`; the next advance resumes it with whatever
    /// conclusion it then holds. A failing stage moves the job to `Failed`
    /// and the failed job is returned.
    pub async fn advance_job(
        &self,
        job_id: &str,
        target: JobState,
        patch: Option<&ConclusionPatch>,
    ) -> Result<Arc<Job>, ServiceError> {
        let mut job = self.store.get(job_id)?;
        let reachable = match (job.state.rank(), target.rank()) {
            (Some(from), Some(to)) => to > from && target != JobState::Created,
            _ => false,
        };
        if !reachable {
            return Err(ServiceError::InvalidTransition {
                from: job.state,
                to: target,
            });
        }
        if let Some(patch) = patch {
            job = self.edit_conclusion(job_id, patch, Some(job.version))?;
        }
        let rank = |s: JobState| s.rank().unwrap_or(u8::MAX);
        while rank(job.state) < rank(target) {
            let (stage, outcome) = match job.state {
                JobState::Created => ("search", self.search(&job).await),
                JobState::Searched => ("prejudge", self.prejudge(&job).await),
                JobState::PreJudged
                    if target == JobState::AwaitingReview || job.options.review_mode =>
                {
                    let halted = self.store.commit(
                        job_id,
                        job.version,
                        Event::ReviewRequested { at: Utc::now() },
                    )?;
                    if halted.options.review_mode && target != JobState::AwaitingReview {
                        return Ok(halted);
                    }
                    job = halted;
                    continue;
                }
                JobState::PreJudged | JobState::AwaitingReview => ("write", self.write(&job).await),
                JobState::Written | JobState::Failed => break,
            };
            let event = outcome.unwrap_or_else(|e| {
                log::warn!("job {job_id} failed at {stage}: {e}");
                Event::Failed {
                    stage: stage.into(),
                    message: format!("{}: {e}", e.kind()),
                    at: Utc::now(),
                }
            });
            job = self.store.commit(job_id, job.version, event)?;
            if job.state == JobState::Failed {
                break;
            }
        }
        Ok(job)
    }

    async fn search(&self, job: &Job) -> Result<Event, judgeflow_core::Error> {
        let s = self.pipeline.settings();
        let e_ref = self
            .pipeline
            .search_with(
                &job.fact,
                job.options.query_case_id.as_deref(),
                job.options.k1.unwrap_or(s.k1),
                job.options.k2.unwrap_or(s.k2),
            )
            .await?;
        Ok(Event::Searched {
            e_ref: Box::new(e_ref),
            at: Utc::now(),
        })
    }

    async fn prejudge(&self, job: &Job) -> Result<Event, judgeflow_core::Error> {
        let e_ref = job.e_ref.as_ref().expect("searched job has e_ref");
        let j_pre = self.pipeline.prejudge(&job.fact, e_ref).await?;
        Ok(Event::PreJudged {
            j_pre,
            at: Utc::now(),
        })
    }

    async fn write(&self, job: &Job) -> Result<Event, judgeflow_core::Error> {
        let e_ref = job.e_ref.as_ref().expect("pre-judged job has e_ref");
        let j_pre = job.j_pre.as_ref().expect("pre-judged job has j_pre");
        let document = self.pipeline.write(&job.fact, j_pre, &e_ref.c_doc).await?;
        Ok(Event::Written {
            document,
            at: Utc::now(),
        })
    }

    /// Replaces fields of the conclusion of a job under review. With
    /// `expected_version`, the edit is rejected if the job has moved on.
    pub fn edit_conclusion(
        &self,
        job_id: &str,
        patch: &ConclusionPatch,
        expected_version: Option<u64>,
    ) -> Result<Arc<Job>, ServiceError> {
        let job = self.store.get(job_id)?;
        if let Some(expected) = expected_version.filter(|v| *v != job.version) {
            return Err(ServiceError::Conflict {
                job_id: job_id.into(),
                expected,
                actual: job.version,
            });
        }
        if job.state != JobState::AwaitingReview {
            return Err(ServiceError::InvalidState {
                operation: "edit",
                state: job.state,
                required: JobState::AwaitingReview,
            });
        }
        let base = job.j_pre.as_ref().expect("job under review has j_pre");
        let j_pre = apply_human_edit(base, patch).map_err(|e| match e {
            PrejudgeError::InvalidEdit { field, reason } => {
                ServiceError::InvalidEdit { field, reason }
            }
            other => ServiceError::Pipeline(other.into()),
        })?;
        Ok(self.store.commit(
            job_id,
            job.version,
            Event::ConclusionEdited {
                j_pre,
                at: Utc::now(),
            },
        )?)
    }

    /// Scores a written job against a gold judgment and stores the report.
    pub async fn evaluate_job(
        &self,
        job_id: &str,
        gold: &CaseDocument,
    ) -> Result<MetricReport, ServiceError> {
        let job = self.store.get(job_id)?;
        let Some(document) = job
            .document
            .as_ref()
            .filter(|_| job.state == JobState::Written)
        else {
            return Err(ServiceError::InvalidState {
                operation: "evaluate",
                state: job.state,
                required: JobState::Written,
            });
        };
        let generated = document
            .to_case_document(job_id)
            .map_err(|e| ServiceError::Pipeline(e.into()))?;
        let report = self.pipeline.evaluate(&generated, gold).await?;
        self.store.commit(
            job_id,
            job.version,
            Event::Evaluated {
                report,
                at: Utc::now(),
            },
        )?;
        Ok(report)
    }
}
