#![cfg(feature = "http")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use ndarray::Array2;
use raf_core::forecast::protocol::{decode_request, encode_response, rows_to_matrix, WireResponse};
use raf_core::forecast::{
    Endpoint, ExternalForecaster, ForecastRequest, Forecaster, Persistence, ProtocolClient, RetryPolicy,
};
use raf_core::Error;

/// Serves persistence forecasts over HTTP; the first `failures` requests get a 503.
fn serve(failures: usize) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/forecast", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = if n < failures {
                ("503 Service Unavailable", String::new())
            } else {
                let req = decode_request(std::str::from_utf8(&body).unwrap()).unwrap();
                let fr = ForecastRequest::new(rows_to_matrix(&req.matrix).unwrap(), req.horizon, req.target_indices)
                    .unwrap();
                let values = Persistence.forecast(&fr).unwrap().values;
                let matrix = values.rows().into_iter().map(|r| r.to_vec()).collect();
                (
                    "200 OK",
                    encode_response(&WireResponse::Matrix { id: req.id, matrix }).unwrap(),
                )
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    (url, hits)
}

fn client(url: &str) -> ProtocolClient {
    ProtocolClient::with_retry(
        url.parse::<Endpoint>().unwrap(),
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(5),
        },
    )
}

#[test]
fn http_endpoint_matches_builtin_persistence() {
    let (url, _) = serve(0);
    let ext = ExternalForecaster::with_client(client(&url), None);
    let req = ForecastRequest::new(
        Array2::from_shape_fn((8, 3), |(r, c)| r as f64 * 0.1 + c as f64),
        5,
        vec![2, 0],
    )
    .unwrap();
    assert_eq!(
        ext.forecast(&req).unwrap().values,
        Persistence.forecast(&req).unwrap().values
    );
}

#[test]
fn server_errors_are_retried() {
    let (url, hits) = serve(2);
    let ext = ExternalForecaster::with_client(client(&url), None);
    let req = ForecastRequest::new(Array2::ones((4, 1)), 2, vec![0]).unwrap();
    assert!(ext.forecast(&req).is_ok());
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_server_errors_exhaust_the_attempts() {
    let (url, hits) = serve(usize::MAX);
    let ext = ExternalForecaster::with_client(client(&url), None);
    let req = ForecastRequest::new(Array2::ones((4, 1)), 2, vec![0]).unwrap();
    match ext.forecast(&req) {
        Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_host_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let ext = ExternalForecaster::with_client(client(&format!("http://127.0.0.1:{port}/")), None);
    let req = ForecastRequest::new(Array2::ones((4, 1)), 2, vec![0]).unwrap();
    assert!(matches!(ext.forecast(&req), Err(Error::Transport { .. })));
}
