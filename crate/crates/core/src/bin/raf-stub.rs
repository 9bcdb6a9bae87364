//! Line-oriented protocol stub for integration tests.
//!
//! `raf-stub [MODE] [--dim N]` reads requests on stdin and answers on stdout.
//! Modes: `persistence` (default), `wrong-shape`, `malformed`, `nan`,
//! `error`, `crash`, `echo` (returns the request matrix unchanged).

use std::io::{BufRead, Write};

use ndarray::Array2;
use raf_core::forecast::protocol::{decode_request, encode_response, rows_to_matrix, Role, WireRequest, WireResponse};
use raf_core::forecast::{ForecastRequest, Forecaster, Persistence};
use raf_core::retrieval::{embed_builtin, DEFAULT_EMBEDDING_DIM};

fn answer(req: &WireRequest, dim: usize) -> Result<Vec<Vec<f64>>, String> {
    let matrix = rows_to_matrix(&req.matrix).map_err(|e| e.to_string())?;
    match req.role {
        Role::Embed => {
            let e = embed_builtin(matrix.view(), dim).map_err(|e| e.to_string())?;
            Ok(vec![e.as_slice().to_vec()])
        }
        Role::Forecast => {
            let fr =
                ForecastRequest::new(matrix, req.horizon, req.target_indices.clone()).map_err(|e| e.to_string())?;
            let out: Array2<f64> = Persistence.forecast(&fr).map_err(|e| e.to_string())?.values;
            Ok(out.rows().into_iter().map(|r| r.to_vec()).collect())
        }
    }
}

fn main() {
    let mut mode = "persistence".to_string();
    let mut dim = DEFAULT_EMBEDDING_DIM;
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--dim" => dim = args.next().and_then(|v| v.parse().ok()).unwrap_or(dim),
            other => mode = other.to_string(),
        }
    }

    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if mode == "crash" {
            std::process::exit(3);
        }
        let reply = match decode_request(&line) {
            Err(e) => encode_response(&WireResponse::Error {
                id: String::new(),
                error: e.to_string(),
            })
            .expect("error frames encode"),
            Ok(req) => match mode.as_str() {
                "malformed" => format!("{{\"id\": \"{}\", \"matrix\": [[1.0,", req.id),
                "echo" => encode_response(&WireResponse::Matrix {
                    id: req.id,
                    matrix: req.matrix,
                })
                .expect("request floats are finite"),
                "nan" => format!("{{\"id\":\"{}\",\"matrix\":[[NaN]]}}", req.id),
                "error" => encode_response(&WireResponse::Error {
                    id: req.id.clone(),
                    error: "model unavailable".into(),
                })
                .expect("error frames encode"),
                _ => {
                    let resp = match answer(&req, dim) {
                        Ok(mut matrix) => {
                            if mode == "wrong-shape" {
                                matrix.pop();
                            }
                            WireResponse::Matrix { id: req.id, matrix }
                        }
                        Err(error) => WireResponse::Error { id: req.id, error },
                    };
                    encode_response(&resp).expect("finite response")
                }
            },
        };
        if writeln!(stdout, "{reply}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
}
