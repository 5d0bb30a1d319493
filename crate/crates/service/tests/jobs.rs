//! Randomized stress test of the job state machine.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use hmdap_core::orchestrator::{PipelineError, PipelineResult};
use hmdap_core::{EngineError, Relation, Schema};
use hmdap_service::jobs::{JobFn, JobManager, JobStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
enum Kind {
    Ok,
    Fail,
    Slow(u32),
    Panic,
}

struct Probe {
    live: AtomicUsize,
    peak: AtomicUsize,
    starts: Mutex<Vec<usize>>,
}

fn empty_result() -> PipelineResult {
    PipelineResult {
        result: Relation::empty(Schema::default()),
        branches_run: vec![],
        timings: vec![],
        model_summary: None,
    }
}

fn make_job(i: usize, kind: Kind, probe: Arc<Probe>) -> JobFn {
    Box::new(move |cancel| {
        let now = probe.live.fetch_add(1, Ordering::SeqCst) + 1;
        probe.peak.fetch_max(now, Ordering::SeqCst);
        probe.starts.lock().unwrap().push(i);
        struct Leave<'a>(&'a AtomicUsize);
        impl Drop for Leave<'_> {
            fn drop(&mut self) {
                self.0.fetch_sub(1, Ordering::SeqCst);
            }
        }
        let _leave = Leave(&probe.live);
        match kind {
            Kind::Ok => Ok(empty_result()),
            Kind::Fail => Err(EngineError::BadNode("x".into())),
            Kind::Panic => panic!("job {i} exploded"),
            Kind::Slow(ms) => {
                for _ in 0..ms {
                    if cancel.is_cancelled() {
                        return Err(PipelineError::Cancelled.into());
                    }
                    std::thread::sleep(Duration::from_millis(1));
                }
                Ok(empty_result())
            }
        }
    })
}

fn wait_all(m: &JobManager, ids: &[String]) {
    let deadline = Instant::now() + Duration::from_secs(30);
    while !ids.iter().all(|id| m.get(id).unwrap().status.is_terminal()) {
        assert!(Instant::now() < deadline, "jobs did not finish");
        std::thread::sleep(Duration::from_millis(2));
    }
}

fn legal_path(h: &[JobStatus]) -> bool {
    h.first() == Some(&JobStatus::Queued)
        && h.windows(2).all(|w| w[0].can_move_to(w[1]))
        && h.last().is_some_and(|s| s.is_terminal())
}

fn run_scenario(seed: u64, workers: usize, n: usize) -> (Arc<Probe>, Vec<Kind>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = JobManager::new(workers);
    let probe = Arc::new(Probe {
        live: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
        starts: Mutex::new(vec![]),
    });
    let mut ids = Vec::new();
    let mut kinds = Vec::new();
    let mut cancelled_while_queued = Vec::new();
    for i in 0..n {
        let kind = match rng.gen_range(0..10) {
            0..=3 => Kind::Ok,
            4 => Kind::Fail,
            5 => Kind::Panic,
            _ => Kind::Slow(rng.gen_range(1..20)),
        };
        kinds.push(kind);
        ids.push(m.submit(make_job(i, kind, Arc::clone(&probe))));
        if rng.gen_bool(0.3) {
            let target = &ids[rng.gen_range(0..ids.len())];
            let before = m.get(target).unwrap().status;
            let after = m.cancel(target).unwrap().status;
            if before == JobStatus::Queued && after == JobStatus::Cancelled {
                cancelled_while_queued.push(target.clone());
            }
            let again = m.cancel(target).unwrap().status;
            assert!(
                again == after || after == JobStatus::Running,
                "{after:?} then {again:?}"
            );
        }
        if rng.gen_bool(0.2) {
            std::thread::sleep(Duration::from_millis(rng.gen_range(0..3)));
        }
    }
    wait_all(&m, &ids);
    let unique: std::collections::HashSet<&String> = ids.iter().collect();
    assert_eq!(unique.len(), ids.len(), "job ids repeat");

    for (i, id) in ids.iter().enumerate() {
        let snap = m.get(id).unwrap();
        let hist = m.history(id).unwrap();
        assert!(legal_path(&hist), "seed {seed} job {i}: {hist:?}");
        assert_eq!(*hist.last().unwrap(), snap.status);
        assert!(snap.finished_at.is_some());
        match snap.status {
            JobStatus::Succeeded => {
                assert!(snap.result.is_some() && snap.error.is_none());
                assert!(matches!(kinds[i], Kind::Ok | Kind::Slow(_)));
            }
            JobStatus::Failed => {
                assert!(snap.result.is_none());
                let code = &snap.error.as_ref().unwrap().code;
                match kinds[i] {
                    Kind::Fail => assert_eq!(code, "graph_error"),
                    Kind::Panic => assert_eq!(code, "internal_error"),
                    k => panic!("seed {seed} job {i} of kind {k:?} failed"),
                }
            }
            JobStatus::Cancelled => assert!(snap.result.is_none()),
            s => panic!("non-terminal {s:?}"),
        }
        // a job cancelled before it started never runs
        if cancelled_while_queued.contains(id) {
            assert_eq!(hist, vec![JobStatus::Queued, JobStatus::Cancelled]);
            assert!(!probe.starts.lock().unwrap().contains(&i));
            assert!(snap.started_at.is_none());
        }
    }
    assert!(probe.peak.load(Ordering::SeqCst) <= workers);
    assert_eq!(probe.live.load(Ordering::SeqCst), 0);
    (probe, kinds)
}

#[test]
fn concurrency_stays_within_worker_bound() {
    for seed in 0..12 {
        run_scenario(seed, 3, 40);
    }
}

#[test]
fn single_worker_starts_jobs_in_submission_order() {
    for seed in 100..106 {
        let (probe, _) = run_scenario(seed, 1, 30);
        let starts = probe.starts.lock().unwrap().clone();
        assert!(
            starts.windows(2).all(|w| w[0] < w[1]),
            "seed {seed}: {starts:?}"
        );
    }
}

#[test]
fn running_job_cancels_at_boundary() {
    let m = JobManager::new(1);
    let probe = Arc::new(Probe {
        live: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
        starts: Mutex::new(vec![]),
    });
    let long = m.submit(make_job(0, Kind::Slow(5_000), Arc::clone(&probe)));
    let queued = m.submit(make_job(1, Kind::Ok, Arc::clone(&probe)));
    let deadline = Instant::now() + Duration::from_secs(5);
    while m.get(&long).unwrap().status != JobStatus::Running {
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(1));
    }
    assert_eq!(m.get(&queued).unwrap().status, JobStatus::Queued);
    assert_eq!(m.cancel(&long).unwrap().status, JobStatus::Running);
    wait_all(&m, &[long.clone(), queued.clone()]);
    assert_eq!(m.get(&long).unwrap().status, JobStatus::Cancelled);
    assert_eq!(m.get(&queued).unwrap().status, JobStatus::Succeeded);
    assert!(m.cancel("no-such-job").is_none());
}
