//! Randomized job operations checked against an independent model of the
//! job lifecycle.

use std::collections::HashMap;
use std::sync::Arc;

use judgeflow_core::corpus::CaseDocument;
use judgeflow_core::prejudge::{ConclusionPatch, FineEdit, Provenance, TermEdit};
use judgeflow_service::{CreateJob, Job, JobOptions, JobService, JobState, ServiceError};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STATES: [JobState; 6] = [
    JobState::Created,
    JobState::Searched,
    JobState::PreJudged,
    JobState::AwaitingReview,
    JobState::Written,
    JobState::Failed,
];

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct FuzzStats {
    pub ops: usize,
    pub creates: usize,
    pub advances: usize,
    pub edits: usize,
    pub evaluations: usize,
    pub rejected: usize,
    pub written: usize,
    pub failed: usize,
    pub reviewed: usize,
}

fn order(s: JobState) -> Option<u8> {
    match s {
        JobState::Created => Some(0),
        JobState::Searched => Some(1),
        JobState::PreJudged => Some(2),
        JobState::AwaitingReview => Some(3),
        JobState::Written => Some(4),
        JobState::Failed => None,
    }
}

/// Field presence written out per state, without `Job::check`.
pub fn model_violation(job: &Job) -> Option<String> {
    let reached = match (job.state, &job.error) {
        (JobState::Failed, Some(e)) => e.from,
        (JobState::Failed, None) => return Some("Failed without error".into()),
        (_, Some(_)) => return Some("error on live job".into()),
        (s, None) => s,
    };
    let searched = matches!(
        reached,
        JobState::Searched | JobState::PreJudged | JobState::AwaitingReview | JobState::Written
    );
    let judged = matches!(
        reached,
        JobState::PreJudged | JobState::AwaitingReview | JobState::Written
    );
    if job.e_ref.is_some() != searched {
        return Some(format!("e_ref presence wrong in {reached:?}"));
    }
    if job.j_pre.is_some() != judged {
        return Some(format!("j_pre presence wrong in {reached:?}"));
    }
    if job.document.is_some() != (job.state == JobState::Written) {
        return Some("document presence wrong".into());
    }
    if job.report.is_some() && job.state != JobState::Written {
        return Some("report on unwritten job".into());
    }
    if let Some(e) = &job.e_ref {
        if e.a_ext.iter().any(|a| e.e_case.articles.contains(&a.id())) {
            return Some("a_ext overlaps precedent articles".into());
        }
    }
    if let Some(j) = &job.j_pre {
        if j.charges.is_empty() || j.articles.is_empty() {
            return Some("empty j_pre field".into());
        }
    }
    if job.options.review_mode
        && job.state == JobState::Written
        && job.timestamps.awaiting_review.is_none()
    {
        return Some("review-mode job written without review".into());
    }
    None
}

fn legal_step(from: JobState, to: JobState) -> bool {
    match (order(from), order(to)) {
        (Some(a), Some(b)) => b >= a,
        (Some(_), None) => from != JobState::Written,
        (None, None) => true,
        (None, Some(_)) => false,
    }
}

fn random_patch(rng: &mut ChaCha8Rng) -> ConclusionPatch {
    let mut p = ConclusionPatch::default();
    if rng.random_bool(0.5) {
        p.term = Some(match rng.random_range(0..4) {
            0 => TermEdit::Months(rng.random_range(0..200)),
            1 => TermEdit::Text("有期徒刑一年六个月".into()),
            2 => TermEdit::Text("不知道".into()),
            _ => TermEdit::Text("无期徒刑".into()),
        });
    }
    if rng.random_bool(0.3) {
        p.fine = Some(match rng.random_range(0..3) {
            0 => FineEdit::Yuan(rng.random_range(0..100_000)),
            1 => FineEdit::Text("没收个人全部财产".into()),
            _ => FineEdit::Text("很多".into()),
        });
    }
    if rng.random_bool(0.2) {
        p.charges = Some(match rng.random_range(0..3) {
            0 => vec![],
            1 => vec!["盗窃".into()],
            _ => vec!["诈骗罪".into(), "盗窃罪".into()],
        });
    }
    if rng.random_bool(0.2) {
        p.articles = Some(match rng.random_range(0..3) {
            0 => vec!["刑法#abc".into()],
            1 => vec![],
            _ => vec!["刑法#101".into(), "刑法#52".into()],
        });
    }
    p
}

/// Runs `ops` random operations. `services[0]` has working backends; the
/// others share its store and fail at some stage.
pub async fn run_random_ops(
    services: &[JobService],
    golds: &[CaseDocument],
    ops: usize,
    seed: u64,
) -> Result<FuzzStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = services[0].store().clone();
    let mut ids: Vec<String> = Vec::new();
    let mut last: HashMap<String, Arc<Job>> = HashMap::new();
    let mut stats = FuzzStats::default();
    for step in 0..ops {
        stats.ops += 1;
        let roll = rng.random_range(0..100);
        if ids.is_empty() || roll < 8 {
            stats.creates += 1;
            let empty = rng.random_bool(0.05);
            let gold = golds.choose(&mut rng).expect("golds");
            let req = CreateJob {
                fact: if empty {
                    "  ".into()
                } else {
                    gold.fact.clone()
                },
                options: JobOptions {
                    review_mode: rng.random_bool(0.4),
                    k1: [None, Some(5), Some(30)][rng.random_range(0..3)],
                    k2: [None, Some(1), Some(3)][rng.random_range(0..3)],
                    query_case_id: rng.random_bool(0.5).then(|| gold.case_id.clone()),
                },
            };
            match (services[0].create_job(req), empty) {
                (Ok(job), false) => {
                    if job.state != JobState::Created || job.version != 1 {
                        return Err(format!("step {step}: bad new job {job:?}"));
                    }
                    ids.push(job.job_id.clone());
                    last.insert(job.job_id.clone(), job);
                }
                (Err(ServiceError::InvalidRequest(_)), true) => stats.rejected += 1,
                (other, _) => return Err(format!("step {step}: create gave {other:?}")),
            }
            continue;
        }
        // Mostly recent jobs, which are still moving.
        let pool = if rng.random_bool(0.8) {
            &ids[ids.len().saturating_sub(12)..]
        } else {
            &ids[..]
        };
        let id = pool.choose(&mut rng).expect("ids").clone();
        let before = last[&id].clone();
        let outcome: Result<Arc<Job>, ServiceError> = if roll < 60 {
            stats.advances += 1;
            let target = *STATES.choose(&mut rng).expect("states");
            let svc = if rng.random_bool(0.85) {
                &services[0]
            } else {
                services[1..].choose(&mut rng).expect("variants")
            };
            let patch = rng.random_bool(0.1).then(|| random_patch(&mut rng));
            svc.advance_job(&id, target, patch.as_ref()).await
        } else if roll < 85 {
            stats.edits += 1;
            let patch = random_patch(&mut rng);
            let r = services[0].edit_conclusion(&id, &patch, None);
            if let Ok(job) = &r {
                if job.j_pre.as_ref().map(|j| j.provenance) != Some(Provenance::HumanEdited) {
                    return Err(format!("step {step}: edit did not mark provenance"));
                }
            }
            r
        } else if roll < 95 {
            stats.evaluations += 1;
            let gold = golds.choose(&mut rng).expect("golds");
            match services[0].evaluate_job(&id, gold).await {
                Ok(report) => {
                    if !report.all_in_unit_interval() {
                        return Err(format!("step {step}: report out of range"));
                    }
                    services[0].get(&id)
                }
                Err(e) => Err(e),
            }
        } else {
            let missing = services[0].get("no-such-job");
            if !matches!(missing, Err(ServiceError::NotFound(_))) {
                return Err(format!(
                    "step {step}: lookup of unknown job gave {missing:?}"
                ));
            }
            let listed = services[0]
                .list(Some(before.state))
                .iter()
                .any(|j| j.job_id == id);
            if !listed {
                return Err(format!("step {step}: list by state misses {id}"));
            }
            services[0].get(&id)
        };
        let after = store
            .get(&id)
            .map_err(|e| format!("step {step}: read failed: {e}"))?;
        if let Some(v) = model_violation(&after) {
            return Err(format!("step {step}: {v}: {after:?}"));
        }
        match outcome {
            Ok(_) => {
                if !legal_step(before.state, after.state) || after.version < before.version {
                    return Err(format!(
                        "step {step}: illegal step {:?} -> {:?}",
                        before.state, after.state
                    ));
                }
            }
            Err(
                ServiceError::InvalidTransition { .. }
                | ServiceError::InvalidState { .. }
                | ServiceError::InvalidEdit { .. },
            ) => {
                stats.rejected += 1;
                if after != before {
                    return Err(format!("step {step}: rejected operation changed the job"));
                }
            }
            Err(e) => return Err(format!("step {step}: unexpected error {e:?}")),
        }
        last.insert(id, after);
    }
    for job in store.list(None) {
        match job.state {
            JobState::Written => stats.written += 1,
            JobState::Failed => stats.failed += 1,
            _ => {}
        }
        if job.timestamps.awaiting_review.is_some() {
            stats.reviewed += 1;
        }
    }
    Ok(stats)
}
