//! Thin typed client for the rgrl HTTP API.

use rgrl_api::{
    ErrorBody, ErrorKind, EvalRequest, GenOutput, GenRequest, HealthResponse, JobStatus,
    JobSummary, MetricsReport, RunConfig, RunOutcome, SubmitJobRequest, SubmitJobResponse,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::time::Duration;
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),

    #[error("api error ({kind:?}): {message}")]
    Api { kind: ErrorKind, message: String },
}

impl ClientError {
    /// Exit-code mapping shared with the CLI: config 1, numerical 2, i/o 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Transport(_) => 3,
            ClientError::Api { kind, .. } => kind.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        let mut base = base_url.into();
        while base.ends_with('/') {
            base.pop();
        }
        Client {
            base,
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub async fn health(&self) -> Result<HealthResponse> {
        self.get("/health").await
    }

    pub async fn submit(&self, config: &RunConfig) -> Result<Uuid> {
        let response: SubmitJobResponse = self
            .post("/jobs", &SubmitJobRequest { config: config.clone() })
            .await?;
        Ok(response.id)
    }

    pub async fn jobs(&self) -> Result<Vec<JobSummary>> {
        self.get("/jobs").await
    }

    pub async fn status(&self, id: Uuid) -> Result<JobStatus> {
        self.get(&format!("/jobs/{id}")).await
    }

    pub async fn report(&self, id: Uuid) -> Result<RunOutcome> {
        self.get(&format!("/jobs/{id}/report")).await
    }

    /// Poll until the job reaches a terminal state, invoking `on_status`
    /// after every poll, then fetch the report.
    pub async fn wait(
        &self,
        id: Uuid,
        poll: Duration,
        mut on_status: impl FnMut(&JobStatus),
    ) -> Result<RunOutcome> {
        loop {
            let status = self.status(id).await?;
            on_status(&status);
            if status.state.is_terminal() {
                if let Some(error) = status.error {
                    return Err(ClientError::Api {
                        kind: error.kind,
                        message: error.message,
                    });
                }
                return self.report(id).await;
            }
            tokio::time::sleep(poll).await;
        }
    }

    pub async fn eval(&self, y_true: Vec<usize>, y_pred: Vec<usize>) -> Result<MetricsReport> {
        self.post("/eval", &EvalRequest { y_true, y_pred }).await
    }

    pub async fn gen(&self, request: &GenRequest) -> Result<GenOutput> {
        self.post("/gen", request).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let response = self.http.get(format!("{}{path}", self.base)).send().await?;
        Self::decode(response).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let response = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await?;
        Self::decode(response).await
    }

    async fn decode<T: DeserializeOwned>(response: reqwest::Response) -> Result<T> {
        if response.status().is_success() {
            return Ok(response.json().await?);
        }
        let status = response.status();
        match response.json::<ErrorBody>().await {
            Ok(body) => Err(ClientError::Api {
                kind: body.kind,
                message: body.message,
            }),
            Err(_) => Err(ClientError::Api {
                kind: ErrorKind::Io,
                message: format!("http status {status}"),
            }),
        }
    }
}
