//! Background training jobs, polled by id.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use cppnlab::train::{train_with_progress, TargetSpec, TracePoint, TrainConfig};
use cppnlab::LayerizedMlp;
use serde::Serialize;

use crate::store::{MlpMeta, Store};

/// Trace points kept in `trace_tail` while a job runs.
const TAIL: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    pub mlp: String,
    pub iterations: usize,
    pub points_recorded: usize,
    pub trace_tail: Vec<TracePoint>,
    /// Full trace once the job is done.
    pub trace: Option<Vec<TracePoint>>,
    pub result_mlp: Option<String>,
    pub error: Option<String>,
}

#[derive(Default)]
pub struct Jobs {
    next: AtomicU64,
    table: Mutex<HashMap<String, JobStatus>>,
}

impl Jobs {
    pub fn get(&self, id: &str) -> Option<JobStatus> {
        self.table.lock().expect("jobs lock poisoned").get(id).cloned()
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobStatus)) {
        if let Some(job) = self.table.lock().expect("jobs lock poisoned").get_mut(id) {
            f(job);
        }
    }

    /// Starts training `arch` on `target` in a background thread.
    pub fn start_training(
        self: &Arc<Self>,
        store: Arc<Store>,
        mlp_id: String,
        arch: LayerizedMlp,
        target: TargetSpec,
        cfg: TrainConfig,
    ) -> String {
        let id = format!("{:016x}", self.next.fetch_add(1, Ordering::Relaxed));
        let status = JobStatus {
            id: id.clone(),
            state: JobState::Running,
            mlp: mlp_id.clone(),
            iterations: cfg.iterations,
            points_recorded: 0,
            trace_tail: Vec::new(),
            trace: None,
            result_mlp: None,
            error: None,
        };
        self.table.lock().expect("jobs lock poisoned").insert(id.clone(), status);
        let jobs = Arc::clone(self);
        let job = id.clone();
        std::thread::spawn(move || {
            let result = train_with_progress(&arch, &target, &cfg, |p| {
                jobs.update(&job, |s| {
                    s.points_recorded += 1;
                    s.trace_tail.push(p);
                    if s.trace_tail.len() > TAIL {
                        s.trace_tail.remove(0);
                    }
                })
            });
            let outcome = result.map_err(|e| e.to_string()).and_then(|(trained, trace)| {
                let meta = MlpMeta { source_genome: None, trained_from: Some(mlp_id) };
                store.put_mlp(&trained, &meta).map(|id| (id, trace)).map_err(|e| e.to_string())
            });
            jobs.update(&job, |s| match outcome {
                Ok((result, trace)) => {
                    s.state = JobState::Done;
                    s.result_mlp = Some(result);
                    s.trace = Some(trace.points);
                }
                Err(e) => {
                    s.state = JobState::Failed;
                    s.error = Some(e);
                }
            });
        });
        id
    }
}
