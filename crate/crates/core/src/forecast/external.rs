//! Client side of the wire protocol: child-process and HTTP transports.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use ndarray::{Array2, ArrayView2};

use super::protocol::{decode_response, encode_request, matrix_to_rows, Role, WireRequest};
use super::{ForecastRequest, ForecastResult, Forecaster};
use crate::error::{Error, Result};
use crate::retrieval::{Embedder, Embedding};

/// `exec:COMMAND [ARGS...]` or an `http(s)://` URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Exec { program: String, args: Vec<String> },
    Http { url: String },
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(cmd) = s.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace().map(str::to_string);
            let program = parts
                .next()
                .ok_or_else(|| Error::Config("exec endpoint needs a command".into()))?;
            return Ok(Endpoint::Exec {
                program,
                args: parts.collect(),
            });
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Endpoint::Http { url: s.to_string() });
        }
        Err(Error::Config(format!(
            "endpoint '{s}' must be exec:PATH or an http(s) URL"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

struct ChildConn {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for ChildConn {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One connection to an external model. Requests on a connection are
/// serialized; clone the endpoint into several clients for concurrency.
pub struct ProtocolClient {
    endpoint: Endpoint,
    retry: RetryPolicy,
    conn: Mutex<Option<ChildConn>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for ProtocolClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProtocolClient")
            .field("endpoint", &self.endpoint)
            .field("retry", &self.retry)
            .finish()
    }
}

enum Failure {
    Transport(String),
    Fatal(Error),
}

impl ProtocolClient {
    pub fn new(endpoint: Endpoint) -> Self {
        Self::with_retry(endpoint, RetryPolicy::default())
    }

    pub fn with_retry(endpoint: Endpoint, retry: RetryPolicy) -> Self {
        Self {
            endpoint,
            retry,
            conn: Mutex::new(None),
            next_id: AtomicU64::new(0),
        }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// Sends one request and returns the decoded response matrix.
    pub fn call(
        &self,
        role: Role,
        matrix: ArrayView2<'_, f64>,
        horizon: usize,
        target_indices: &[usize],
        variables: &[String],
    ) -> Result<Array2<f64>> {
        let id = format!("req-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let req = WireRequest {
            id: id.clone(),
            role,
            horizon,
            target_indices: target_indices.to_vec(),
            matrix: matrix_to_rows(matrix),
            variables: variables.to_vec(),
        };
        let line = encode_request(&req)?;
        let attempts = self.retry.attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.exchange(&line) {
                Ok(resp) => return decode_response(&resp, &id),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transport(msg)) => {
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }

    fn exchange(&self, line: &str) -> std::result::Result<String, Failure> {
        match &self.endpoint {
            Endpoint::Exec { program, args } => self.exchange_exec(program, args, line),
            Endpoint::Http { url } => exchange_http(url, line),
        }
    }

    fn exchange_exec(&self, program: &str, args: &[String], line: &str) -> std::result::Result<String, Failure> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Failure::Transport(format!("cannot start '{program}': {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
            *guard = Some(ChildConn { child, stdin, stdout });
        }
        let conn = guard.as_mut().expect("connection just established");
        let result = (|| {
            conn.stdin.write_all(line.as_bytes())?;
            conn.stdin.write_all(b"\n")?;
            conn.stdin.flush()?;
            let mut resp = String::new();
            let n = conn.stdout.read_line(&mut resp)?;
            if n == 0 {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "child closed its stdout",
                ));
            }
            Ok(resp)
        })();
        result.map_err(|e: std::io::Error| {
            // Drop the broken child so the next attempt respawns it.
            *guard = None;
            Failure::Transport(e.to_string())
        })
    }
}

#[cfg(feature = "http")]
fn exchange_http(url: &str, line: &str) -> std::result::Result<String, Failure> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(600)))
        .build()
        .into();
    let mut resp = agent
        .post(url)
        .header("content-type", "application/json")
        .send(line)
        .map_err(|e| Failure::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let body = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| Failure::Transport(e.to_string()))?;
    if status >= 500 {
        return Err(Failure::Transport(format!("HTTP {status}")));
    }
    if status >= 400 && body.trim().is_empty() {
        return Err(Failure::Fatal(Error::Protocol {
            message: format!("HTTP {status}"),
            excerpt: String::new(),
        }));
    }
    Ok(body)
}

#[cfg(not(feature = "http"))]
fn exchange_http(url: &str, _line: &str) -> std::result::Result<String, Failure> {
    Err(Failure::Fatal(Error::Config(format!(
        "HTTP endpoint {url} requires the `http` feature"
    ))))
}

/// Forecaster served by an external process or HTTP service.
#[derive(Debug)]
pub struct ExternalForecaster {
    client: ProtocolClient,
    max_rows: Option<usize>,
}

impl ExternalForecaster {
    pub fn new(endpoint: Endpoint, max_rows: Option<usize>) -> Self {
        Self {
            client: ProtocolClient::new(endpoint),
            max_rows,
        }
    }

    pub fn with_client(client: ProtocolClient, max_rows: Option<usize>) -> Self {
        Self { client, max_rows }
    }
}

impl Forecaster for ExternalForecaster {
    fn id(&self) -> String {
        match self.client.endpoint() {
            Endpoint::Exec { program, .. } => format!("external(exec:{program})"),
            Endpoint::Http { url } => format!("external({url})"),
        }
    }

    fn forecast(&self, request: &ForecastRequest) -> Result<ForecastResult> {
        request.validate()?;
        if let Some(max) = self.max_rows {
            if request.context.nrows() > max {
                return Err(Error::Contract(format!(
                    "context of {} rows exceeds the endpoint limit of {max}",
                    request.context.nrows()
                )));
            }
        }
        let values = self.client.call(
            Role::Forecast,
            request.context.view(),
            request.horizon,
            &request.target_indices,
            &request.metadata.variables,
        )?;
        let result = ForecastResult {
            values,
            forecaster_id: self.id(),
        };
        result.check_contract(request.horizon, request.target_indices.len())?;
        Ok(result)
    }

    fn max_rows(&self) -> Option<usize> {
        self.max_rows
    }
}

/// Embedder served over the same protocol (role `embed`).
#[derive(Debug)]
pub struct ExternalEmbedder {
    client: ProtocolClient,
    dim: usize,
}

impl ExternalEmbedder {
    pub fn new(endpoint: Endpoint, dim: usize) -> Self {
        Self {
            client: ProtocolClient::new(endpoint),
            dim,
        }
    }
}

impl Embedder for ExternalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, window: ArrayView2<'_, f64>) -> Result<Embedding> {
        let m = self.client.call(Role::Embed, window, 1, &[], &[])?;
        if m.dim() != (1, self.dim) {
            return Err(Error::Contract(format!(
                "embedding response has shape {:?}, expected (1, {})",
                m.dim(),
                self.dim
            )));
        }
        Embedding::new(m.row(0).to_vec()).map_err(|e| Error::Contract(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            "exec:python3 bridge.py --stub persistence".parse::<Endpoint>().unwrap(),
            Endpoint::Exec {
                program: "python3".into(),
                args: vec!["bridge.py".into(), "--stub".into(), "persistence".into()]
            }
        );
        assert!(matches!(
            "http://localhost:8080/forecast".parse::<Endpoint>().unwrap(),
            Endpoint::Http { .. }
        ));
        assert!("ftp://x".parse::<Endpoint>().is_err());
        assert!("exec:".parse::<Endpoint>().is_err());
    }

    #[test]
    fn missing_program_is_retried_then_reported() {
        let client = ProtocolClient::with_retry(
            "exec:/nonexistent/raf-model".parse().unwrap(),
            RetryPolicy {
                attempts: 3,
                initial_backoff: Duration::from_millis(1),
            },
        );
        let m = Array2::<f64>::zeros((2, 1));
        match client.call(Role::Forecast, m.view(), 1, &[0], &[]) {
            Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
