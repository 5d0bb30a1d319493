//! Asynchronous pipeline jobs.
//!
//! A job moves `Queued -> Running -> {Succeeded, Failed, Cancelled}`, or
//! straight from `Queued` to `Cancelled`. No other transition exists and a
//! terminal state never changes. At most `workers` jobs run at once; the
//! rest wait in submission order. Each running job gets its own thread.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use hmdap_core::orchestrator::PipelineResult;
use hmdap_core::{CancelToken, EngineError, ErrorClass};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            JobStatus::Succeeded | JobStatus::Failed | JobStatus::Cancelled
        )
    }

    /// Whether `self -> to` is a legal transition.
    pub fn can_move_to(self, to: JobStatus) -> bool {
        use JobStatus::*;
        matches!(
            (self, to),
            (Queued, Running) | (Queued, Cancelled) | (Running, Succeeded | Failed | Cancelled)
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobError {
    pub code: String,
    pub message: String,
}

/// Point-in-time view of a job. Timestamps are Unix milliseconds.
#[derive(Debug, Clone)]
pub struct JobSnapshot {
    pub id: String,
    pub status: JobStatus,
    pub submitted_at: u64,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
    pub result: Option<Arc<PipelineResult>>,
    pub error: Option<JobError>,
}

pub type JobFn = Box<dyn FnOnce(&CancelToken) -> Result<PipelineResult, EngineError> + Send>;

struct Job {
    state: Mutex<JobSnapshot>,
    cancel: CancelToken,
    history: Mutex<Vec<JobStatus>>,
}

impl Job {
    /// Applies `to` if legal; returns whether it was applied.
    fn transition(&self, to: JobStatus, fill: impl FnOnce(&mut JobSnapshot)) -> bool {
        self.transition_if(|_| true, to, fill)
    }

    fn transition_if(
        &self,
        pred: impl FnOnce(JobStatus) -> bool,
        to: JobStatus,
        fill: impl FnOnce(&mut JobSnapshot),
    ) -> bool {
        let mut s = self.state.lock().expect("job lock");
        if !pred(s.status) || !s.status.can_move_to(to) {
            return false;
        }
        s.status = to;
        fill(&mut s);
        self.history.lock().expect("history lock").push(to);
        true
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

struct Sched {
    queue: VecDeque<(Arc<Job>, JobFn)>,
    running: usize,
}

struct Inner {
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    sched: Mutex<Sched>,
    workers: usize,
}

pub struct JobManager {
    inner: Arc<Inner>,
}

impl JobManager {
    pub fn new(workers: usize) -> Self {
        JobManager {
            inner: Arc::new(Inner {
                jobs: RwLock::new(HashMap::new()),
                sched: Mutex::new(Sched {
                    queue: VecDeque::new(),
                    running: 0,
                }),
                workers: workers.max(1),
            }),
        }
    }

    /// Queues `work` and returns the job id.
    pub fn submit(&self, work: JobFn) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        let job = Arc::new(Job {
            state: Mutex::new(JobSnapshot {
                id: id.clone(),
                status: JobStatus::Queued,
                submitted_at: now_ms(),
                started_at: None,
                finished_at: None,
                result: None,
                error: None,
            }),
            cancel: CancelToken::new(),
            history: Mutex::new(vec![JobStatus::Queued]),
        });
        self.inner
            .jobs
            .write()
            .expect("jobs lock")
            .insert(id.clone(), Arc::clone(&job));
        self.inner
            .sched
            .lock()
            .expect("sched lock")
            .queue
            .push_back((job, work));
        pump(&self.inner);
        id
    }

    fn job(&self, id: &str) -> Option<Arc<Job>> {
        self.inner.jobs.read().expect("jobs lock").get(id).cloned()
    }

    pub fn get(&self, id: &str) -> Option<JobSnapshot> {
        self.job(id)
            .map(|j| j.state.lock().expect("job lock").clone())
    }

    /// Requests cancellation. A queued job is cancelled at once; a running
    /// job stops at its next stage boundary. Terminal jobs are unaffected,
    /// so repeated calls are harmless.
    pub fn cancel(&self, id: &str) -> Option<JobSnapshot> {
        let job = self.job(id)?;
        job.cancel.cancel();
        job.transition_if(
            |s| s == JobStatus::Queued,
            JobStatus::Cancelled,
            |s| s.finished_at = Some(now_ms()),
        );
        let snap = job.state.lock().expect("job lock").clone();
        Some(snap)
    }

    /// Every status a job has held, in order.
    pub fn history(&self, id: &str) -> Option<Vec<JobStatus>> {
        self.job(id)
            .map(|j| j.history.lock().expect("history lock").clone())
    }

    pub fn ids(&self) -> Vec<String> {
        self.inner
            .jobs
            .read()
            .expect("jobs lock")
            .keys()
            .cloned()
            .collect()
    }
}

/// Starts queued jobs, oldest first, while worker slots are free.
fn pump(inner: &Arc<Inner>) {
    loop {
        let (job, work) = {
            let mut sched = inner.sched.lock().expect("sched lock");
            if sched.running >= inner.workers {
                return;
            }
            let Some(next) = sched.queue.pop_front() else {
                return;
            };
            if !next
                .0
                .transition(JobStatus::Running, |s| s.started_at = Some(now_ms()))
            {
                continue;
            }
            sched.running += 1;
            next
        };
        let inner = Arc::clone(inner);
        let spawned = std::thread::Builder::new()
            .name("hmdap-job".into())
            .spawn(move || {
                let outcome =
                    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| work(&job.cancel)));
                finish(&job, outcome);
                inner.sched.lock().expect("sched lock").running -= 1;
                pump(&inner);
            });
        if let Err(e) = spawned {
            log::error!("cannot start job thread: {e}");
        }
    }
}

fn finish(job: &Job, outcome: std::thread::Result<Result<PipelineResult, EngineError>>) {
    let done = now_ms();
    match outcome {
        Ok(Ok(result)) => {
            job.transition(JobStatus::Succeeded, |s| {
                s.finished_at = Some(done);
                s.result = Some(Arc::new(result));
            });
        }
        Ok(Err(e)) if e.class() == ErrorClass::Cancelled => {
            job.transition(JobStatus::Cancelled, |s| s.finished_at = Some(done));
        }
        Ok(Err(e)) => {
            log::warn!("job failed: {e}");
            job.transition(JobStatus::Failed, |s| {
                s.finished_at = Some(done);
                s.error = Some(JobError {
                    code: e.code().to_string(),
                    message: e.to_string(),
                });
            });
        }
        Err(_) => {
            log::error!("job panicked");
            job.transition(JobStatus::Failed, |s| {
                s.finished_at = Some(done);
                s.error = Some(JobError {
                    code: "internal_error".into(),
                    message: "pipeline worker panicked".into(),
                });
            });
        }
    }
}
