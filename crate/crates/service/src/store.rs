//! Job store: in memory, or backed by one append-only event log per job
//! plus periodic snapshots.
//!
//! On disk, `{job_id}.jsonl` holds one `{"version", "event"}` record per
//! line and `{job_id}.snapshot.json` the job as of some logged version. A
//! record is durable before the new state becomes visible.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::job::{Event, Job, JobError, JobState};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("job {0} not found")]
    NotFound(String),
    #[error("job {job_id} changed concurrently (expected version {expected}, found {actual})")]
    Conflict {
        job_id: String,
        expected: u64,
        actual: u64,
    },
    #[error("job {0} already exists")]
    Duplicate(String),
    #[error(transparent)]
    Job(#[from] JobError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LogRecord {
    version: u64,
    event: Event,
}

fn io_err(path: &Path, e: impl ToString) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug)]
struct Disk {
    dir: PathBuf,
    snapshot_every: u64,
}

impl Disk {
    fn log_path(&self, job_id: &str) -> PathBuf {
        self.dir.join(format!("{job_id}.jsonl"))
    }

    fn snapshot_path(&self, job_id: &str) -> PathBuf {
        self.dir.join(format!("{job_id}.snapshot.json"))
    }

    fn append(&self, job_id: &str, record: &LogRecord) -> Result<(), StoreError> {
        let path = self.log_path(job_id);
        let mut line = serde_json::to_string(record).map_err(|e| io_err(&path, e))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
        f.sync_data().map_err(|e| io_err(&path, e))
    }

    fn snapshot(&self, job: &Job) -> Result<(), StoreError> {
        let path = self.snapshot_path(&job.job_id);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_vec(job).map_err(|e| io_err(&path, e))?;
        let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(&text).map_err(|e| io_err(&tmp, e))?;
        f.sync_data().map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
    }

    /// Snapshot, if readable, then every later logged event. A final line
    /// without its newline is a torn write and is dropped.
    fn load(&self, job_id: &str) -> Result<Option<Job>, StoreError> {
        let log_path = self.log_path(job_id);
        let text = fs::read_to_string(&log_path).map_err(|e| io_err(&log_path, e))?;
        let mut job = match fs::read(self.snapshot_path(job_id)) {
            Ok(bytes) => match serde_json::from_slice::<Job>(&bytes) {
                Ok(j) => Some(j),
                Err(e) => {
                    log::warn!("ignoring unreadable snapshot of {job_id}: {e}");
                    None
                }
            },
            Err(_) => None,
        };
        let complete = if text.ends_with('\n') {
            text.as_str()
        } else {
            let cut = text.rfind('\n').map_or(0, |i| i + 1);
            if cut < text.len() {
                log::warn!("{}: dropping torn final record", log_path.display());
            }
            &text[..cut]
        };
        for (n, line) in complete.lines().enumerate() {
            let corrupt = |message: String| StoreError::Corrupt {
                path: log_path.clone(),
                line: n + 1,
                message,
            };
            let record: LogRecord =
                serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            let current = job.as_ref().map_or(0, |j| j.version);
            if record.version <= current {
                continue;
            }
            if record.version != current + 1 {
                return Err(corrupt(format!(
                    "expected version {}, found {}",
                    current + 1,
                    record.version
                )));
            }
            match job.as_mut() {
                None => {
                    job =
                        Some(Job::from_created(&record.event).map_err(|e| corrupt(e.to_string()))?)
                }
                Some(j) => j.apply(&record.event).map_err(|e| corrupt(e.to_string()))?,
            }
        }
        Ok(job)
    }
}

/// Jobs by id. Writes are serialized and checked against the version the
/// writer last saw; reads clone a shared snapshot.
#[derive(Debug)]
pub struct JobStore {
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    write: Mutex<()>,
    disk: Option<Disk>,
}

impl JobStore {
    pub fn in_memory() -> Self {
        Self {
            jobs: RwLock::new(HashMap::new()),
            write: Mutex::new(()),
            disk: None,
        }
    }

    /// Opens `dir`, replaying every job log found there.
    pub fn open(dir: impl Into<PathBuf>, snapshot_every: u64) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let disk = Disk {
            dir: dir.clone(),
            snapshot_every: snapshot_every.max(1),
        };
        let mut jobs = HashMap::new();
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let path = entry.map_err(|e| io_err(&dir, e))?.path();
            let Some(job_id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".jsonl"))
            else {
                continue;
            };
            if let Some(job) = disk.load(job_id)? {
                job.check()?;
                jobs.insert(job.job_id.clone(), Arc::new(job));
            }
        }
        log::info!("job store {}: {} jobs replayed", dir.display(), jobs.len());
        Ok(Self {
            jobs: RwLock::new(jobs),
            write: Mutex::new(()),
            disk: Some(disk),
        })
    }

    pub fn is_persistent(&self) -> bool {
        self.disk.is_some()
    }

    /// Starts a job from its `Created` event.
    pub fn create(&self, event: Event) -> Result<Arc<Job>, StoreError> {
        let job = Job::from_created(&event)?;
        let _guard = self.write.lock();
        if self.jobs.read().contains_key(&job.job_id) {
            return Err(StoreError::Duplicate(job.job_id));
        }
        self.persist(&job, event)?;
        let job = Arc::new(job);
        self.jobs.write().insert(job.job_id.clone(), job.clone());
        Ok(job)
    }

    /// Applies `event` if the job is still at `expected_version`.
    pub fn commit(
        &self,
        job_id: &str,
        expected_version: u64,
        event: Event,
    ) -> Result<Arc<Job>, StoreError> {
        let _guard = self.write.lock();
        let current = self.get(job_id)?;
        if current.version != expected_version {
            return Err(StoreError::Conflict {
                job_id: job_id.to_string(),
                expected: expected_version,
                actual: current.version,
            });
        }
        let mut next = (*current).clone();
        next.apply(&event)?;
        self.persist(&next, event)?;
        let next = Arc::new(next);
        self.jobs.write().insert(job_id.to_string(), next.clone());
        Ok(next)
    }

    fn persist(&self, job: &Job, event: Event) -> Result<(), StoreError> {
        let Some(disk) = &self.disk else {
            return Ok(());
        };
        disk.append(
            &job.job_id,
            &LogRecord {
                version: job.version,
                event,
            },
        )?;
        if job.version.is_multiple_of(disk.snapshot_every) {
            disk.snapshot(job)?;
        }
        Ok(())
    }

    pub fn get(&self, job_id: &str) -> Result<Arc<Job>, StoreError> {
        let job = self
            .jobs
            .read()
            .get(job_id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(job_id.to_string()))?;
        job.check()?;
        Ok(job)
    }

    /// Jobs ordered by creation time, then id.
    pub fn list(&self, state: Option<JobState>) -> Vec<Arc<Job>> {
        let mut jobs: Vec<Arc<Job>> = self
            .jobs
            .read()
            .values()
            .filter(|j| state.is_none_or(|s| j.state == s))
            .cloned()
            .collect();
        jobs.sort_by(|a, b| {
            a.timestamps
                .created
                .cmp(&b.timestamps.created)
                .then_with(|| a.job_id.cmp(&b.job_id))
        });
        jobs
    }

    pub fn len(&self) -> usize {
        self.jobs.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.read().is_empty()
    }
}
