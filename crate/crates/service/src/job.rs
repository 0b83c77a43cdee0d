//! Jobs as event-sourced state machines.
//!
//! A job is the fold of its events. [`Job::apply`] rejects any event the
//! current state does not allow, so every reachable job satisfies
//! [`Job::check`]. A written job is final: it can be evaluated but not
//! failed.

use chrono::{DateTime, Utc};
use judgeflow_core::metrics::MetricReport;
use judgeflow_core::prejudge::IntermediateConclusion;
use judgeflow_core::retrieval::ReferentialElements;
use judgeflow_core::writer::JudgmentDocument;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobState {
    Created,
    Searched,
    PreJudged,
    AwaitingReview,
    Written,
    Failed,
}

impl JobState {
    /// Position along the forward path; `Failed` is off the path.
    pub fn rank(self) -> Option<u8> {
        match self {
            JobState::Created => Some(0),
            JobState::Searched => Some(1),
            JobState::PreJudged => Some(2),
            JobState::AwaitingReview => Some(3),
            JobState::Written => Some(4),
            JobState::Failed => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            JobState::Created,
            JobState::Searched,
            JobState::PreJudged,
            JobState::AwaitingReview,
            JobState::Written,
            JobState::Failed,
        ]
        .into_iter()
        .find(|st| st.name().eq_ignore_ascii_case(s))
    }

    pub fn name(self) -> &'static str {
        match self {
            JobState::Created => "Created",
            JobState::Searched => "Searched",
            JobState::PreJudged => "PreJudged",
            JobState::AwaitingReview => "AwaitingReview",
            JobState::Written => "Written",
            JobState::Failed => "Failed",
        }
    }

    fn has_e_ref(self) -> bool {
        self.rank().is_some_and(|r| r >= 1)
    }

    fn has_j_pre(self) -> bool {
        self.rank().is_some_and(|r| r >= 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobOptions {
    #[serde(default)]
    pub review_mode: bool,
    #[serde(default)]
    pub k1: Option<usize>,
    #[serde(default)]
    pub k2: Option<usize>,
    /// Case excluded from precedent retrieval, for queries taken from the
    /// case corpus.
    #[serde(default)]
    pub query_case_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
    /// State the job was in when the stage failed.
    pub from: JobState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub created: Option<DateTime<Utc>>,
    pub searched: Option<DateTime<Utc>>,
    pub prejudged: Option<DateTime<Utc>>,
    pub awaiting_review: Option<DateTime<Utc>>,
    pub edited: Option<DateTime<Utc>>,
    pub written: Option<DateTime<Utc>>,
    pub evaluated: Option<DateTime<Utc>>,
    pub failed: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Event {
    Created {
        job_id: String,
        fact: String,
        options: JobOptions,
        at: DateTime<Utc>,
    },
    Searched {
        e_ref: Box<ReferentialElements>,
        at: DateTime<Utc>,
    },
    PreJudged {
        j_pre: IntermediateConclusion,
        at: DateTime<Utc>,
    },
    ReviewRequested {
        at: DateTime<Utc>,
    },
    ConclusionEdited {
        j_pre: IntermediateConclusion,
        at: DateTime<Utc>,
    },
    Written {
        document: JudgmentDocument,
        at: DateTime<Utc>,
    },
    Evaluated {
        report: MetricReport,
        at: DateTime<Utc>,
    },
    Failed {
        stage: String,
        message: String,
        at: DateTime<Utc>,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Created { .. } => "Created",
            Event::Searched { .. } => "Searched",
            Event::PreJudged { .. } => "PreJudged",
            Event::ReviewRequested { .. } => "ReviewRequested",
            Event::ConclusionEdited { .. } => "ConclusionEdited",
            Event::Written { .. } => "Written",
            Event::Evaluated { .. } => "Evaluated",
            Event::Failed { .. } => "Failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JobError {
    #[error("event {event} is not allowed in state {state:?}")]
    InvalidTransition {
        state: JobState,
        event: &'static str,
    },
    #[error("job {job_id} violates an invariant: {reason}")]
    Invariant { job_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub fact: String,
    pub options: JobOptions,
    pub state: JobState,
    pub e_ref: Option<ReferentialElements>,
    pub j_pre: Option<IntermediateConclusion>,
    pub document: Option<JudgmentDocument>,
    pub report: Option<MetricReport>,
    pub timestamps: Timestamps,
    pub error: Option<StageError>,
    /// Number of events applied.
    pub version: u64,
}

impl Job {
    /// The job a `Created` event starts.
    pub fn from_created(event: &Event) -> Result<Self, JobError> {
        let Event::Created {
            job_id,
            fact,
            options,
            at,
        } = event
        else {
            return Err(JobError::InvalidTransition {
                state: JobState::Created,
                event: event.name(),
            });
        };
        let job = Job {
            job_id: job_id.clone(),
            fact: fact.clone(),
            options: options.clone(),
            state: JobState::Created,
            e_ref: None,
            j_pre: None,
            document: None,
            report: None,
            timestamps: Timestamps {
                created: Some(*at),
                ..Timestamps::default()
            },
            error: None,
            version: 1,
        };
        job.check()?;
        Ok(job)
    }

    /// Folds a full event history.
    pub fn replay<'a>(
        events: impl IntoIterator<Item = &'a Event>,
    ) -> Result<Option<Self>, JobError> {
        let mut job: Option<Job> = None;
        for e in events {
            match job.as_mut() {
                None => job = Some(Job::from_created(e)?),
                Some(j) => j.apply(e)?,
            }
        }
        Ok(job)
    }

    /// Applies one event, leaving `self` untouched on error.
    pub fn apply(&mut self, event: &Event) -> Result<(), JobError> {
        let mut next = self.clone();
        next.transition(event)?;
        next.version += 1;
        next.check()?;
        *self = next;
        Ok(())
    }

    fn transition(&mut self, event: &Event) -> Result<(), JobError> {
        use JobState::*;
        let invalid = || JobError::InvalidTransition {
            state: self.state,
            event: event.name(),
        };
        match (self.state, event) {
            (Created, Event::Searched { e_ref, at }) => {
                self.e_ref = Some((**e_ref).clone());
                self.timestamps.searched = Some(*at);
                self.state = Searched;
            }
            (Searched, Event::PreJudged { j_pre, at }) => {
                self.j_pre = Some(j_pre.clone());
                self.timestamps.prejudged = Some(*at);
                self.state = PreJudged;
            }
            (PreJudged, Event::ReviewRequested { at }) => {
                self.timestamps.awaiting_review = Some(*at);
                self.state = AwaitingReview;
            }
            (AwaitingReview, Event::ConclusionEdited { j_pre, at }) => {
                self.j_pre = Some(j_pre.clone());
                self.timestamps.edited = Some(*at);
            }
            (PreJudged | AwaitingReview, Event::Written { document, at }) => {
                self.document = Some(document.clone());
                self.timestamps.written = Some(*at);
                self.state = Written;
            }
            (Written, Event::Evaluated { report, at }) => {
                self.report = Some(*report);
                self.timestamps.evaluated = Some(*at);
            }
            (s, Event::Failed { stage, message, at }) if !matches!(s, Failed | Written) => {
                self.error = Some(StageError {
                    stage: stage.clone(),
                    message: message.clone(),
                    from: s,
                });
                self.timestamps.failed = Some(*at);
                self.state = Failed;
            }
            _ => return Err(invalid()),
        }
        Ok(())
    }

    /// Field presence and payload consistency for the current state.
    pub fn check(&self) -> Result<(), JobError> {
        let fail = |reason: String| {
            Err(JobError::Invariant {
                job_id: self.job_id.clone(),
                reason,
            })
        };
        if self.job_id.is_empty() {
            return fail("empty job id".into());
        }
        if self.fact.trim().is_empty() {
            return fail("empty fact".into());
        }
        let reached = match (self.state, &self.error) {
            (JobState::Failed, Some(e)) if e.from != JobState::Failed => e.from,
            (JobState::Failed, _) => return fail("failed job without a stage error".into()),
            (_, Some(_)) => return fail("stage error on a live job".into()),
            (s, None) => s,
        };
        if self.e_ref.is_some() != reached.has_e_ref() {
            return fail(format!("e_ref presence does not match {reached:?}"));
        }
        if self.j_pre.is_some() != reached.has_j_pre() {
            return fail(format!("j_pre presence does not match {reached:?}"));
        }
        if self.document.is_some() != (self.state == JobState::Written) {
            return fail(format!("document presence does not match {:?}", self.state));
        }
        if self.report.is_some() && self.state != JobState::Written {
            return fail("report on an unwritten job".into());
        }
        if let Some(e) = &self.e_ref {
            if !e.is_consistent() {
                return fail("external articles overlap the precedent's articles".into());
            }
        }
        if let Some(j) = &self.j_pre {
            if let Err((field, reason)) = j.check() {
                return fail(format!("j_pre.{field}: {reason}"));
            }
        }
        if let Some(r) = &self.report {
            if !r.all_in_unit_interval() {
                return fail("report value outside [0, 1]".into());
            }
        }
        Ok(())
    }
}
