//! Request/response types for the rgrl HTTP API.
//!
//! The heavy payloads (run configuration, outcomes, metric reports) are the
//! core crate's own serde types, re-exported here so the server and client
//! agree on one wire format.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub use rgrl_core::error::ErrorKind;
pub use rgrl_core::metrics::MetricsReport;
pub use rgrl_core::pipeline::{
    GenOutput, Mode, OosConfig, RunConfig, RunOutcome, SweepConfig, SweepRow, SyntheticSpec,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitJobRequest {
    pub config: RunConfig,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubmitJobResponse {
    pub id: Uuid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

/// Last progress beat reported by the pipeline: phase name plus a
/// done/total pair (epochs for training phases, points for sweeps).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobProgress {
    pub phase: String,
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: Uuid,
    pub state: JobState,
    pub mode: Mode,
    pub progress: Option<JobProgress>,
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobSummary {
    pub id: Uuid,
    pub state: JobState,
    pub mode: Mode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRequest {
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenRequest {
    pub spec: SyntheticSpec,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: std::path::PathBuf,
}

/// Error payload carried in non-2xx responses; `kind` maps onto the CLI
/// exit-code convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: ErrorKind,
    pub message: String,
}

impl ErrorBody {
    pub fn from_core(err: &rgrl_core::Error) -> Self {
        ErrorBody {
            kind: err.kind(),
            message: err.to_string(),
        }
    }
}
