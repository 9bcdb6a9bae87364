//! Newline-delimited JSON messages shared by external forecasters and embedders.
//!
//! Request:
//! `{"id": "...", "role": "forecast"|"embed", "horizon": 7, "target_indices": [...], "matrix": [[...], ...], "variables": [...]}`
//!
//! Response: `{"id": "...", "matrix": [[...], ...]}` or `{"id": "...", "error": "..."}`.
//! Matrices are row-major with the oldest row first; every float must be finite.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Forecast,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: String,
    pub role: Role,
    pub horizon: usize,
    pub target_indices: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireResponse {
    Matrix { id: String, matrix: Vec<Vec<f64>> },
    Error { id: String, error: String },
}

impl WireResponse {
    pub fn id(&self) -> &str {
        match self {
            WireResponse::Matrix { id, .. } | WireResponse::Error { id, .. } => id,
        }
    }
}

pub fn matrix_to_rows(m: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Rebuilds a dense matrix, rejecting ragged rows.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Contract(format!(
            "ragged matrix: row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), ncols), flat).expect("rectangular"))
}

fn check_finite(rows: &[Vec<f64>], what: &str) -> Result<()> {
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Protocol {
            message: format!("{what} contains NaN or infinite values"),
            excerpt: String::new(),
        });
    }
    Ok(())
}

fn excerpt(s: &str) -> String {
    const MAX: usize = 200;
    if s.len() <= MAX {
        return s.to_string();
    }
    let mut end = MAX;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}

pub fn encode_request(req: &WireRequest) -> Result<String> {
    check_finite(&req.matrix, "request matrix")?;
    Ok(serde_json::to_string(req)?)
}

pub fn decode_request(line: &str) -> Result<WireRequest> {
    serde_json::from_str(line).map_err(|e| Error::Protocol {
        message: format!("malformed request: {e}"),
        excerpt: excerpt(line),
    })
}

pub fn encode_response(resp: &WireResponse) -> Result<String> {
    if let WireResponse::Matrix { matrix, .. } = resp {
        check_finite(matrix, "response matrix")?;
    }
    Ok(serde_json::to_string(resp)?)
}

/// Parses a response and checks that it answers `expected_id`.
pub fn decode_response(line: &str, expected_id: &str) -> Result<Array2<f64>> {
    let resp: WireResponse = serde_json::from_str(line.trim()).map_err(|e| Error::Protocol {
        message: format!("malformed response: {e}"),
        excerpt: excerpt(line),
    })?;
    if resp.id() != expected_id {
        return Err(Error::Protocol {
            message: format!("response id '{}' does not match request '{expected_id}'", resp.id()),
            excerpt: excerpt(line),
        });
    }
    match resp {
        WireResponse::Error { id, error } => Err(Error::Remote { id, message: error }),
        WireResponse::Matrix { matrix, .. } => rows_to_matrix(&matrix),
    }
}
