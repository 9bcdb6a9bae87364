//! WebAssembly front end for the browser demo in `www/`.
//!
//! Every export takes and returns JSON strings; [`session::Session`] holds
//! the same operations as plain Rust.

pub mod session;

use raf_core::augment::Strategy;
use raf_core::retrieval::RetrieverKind;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use session::{Query, Session};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(js_err)
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    /// Generates a synthetic series of `days` rows.
    #[wasm_bindgen(constructor)]
    pub fn new(days: usize, seed: u32) -> Result<Demo, JsError> {
        Ok(Demo {
            session: Session::generate(days, u64::from(seed)).map_err(js_err)?,
        })
    }

    pub fn overview(&self) -> Result<String, JsError> {
        to_json(&self.session.overview())
    }

    #[wasm_bindgen(js_name = testSize)]
    pub fn test_size(&self, horizon: usize) -> Result<usize, JsError> {
        self.session.test_size(horizon).map_err(js_err)
    }

    /// `query` is a JSON object: horizon, index, retriever, strategy, k, station.
    pub fn forecast(&self, query: &str) -> Result<String, JsError> {
        let query: Query = serde_json::from_str(query).map_err(js_err)?;
        to_json(&self.session.forecast(&query).map_err(js_err)?)
    }

    pub fn sweep(
        &self,
        horizon: usize,
        retriever: &str,
        strategy: &str,
        k: usize,
        coverages: Vec<f64>,
    ) -> Result<String, JsError> {
        let retriever: RetrieverKind = retriever.parse().map_err(js_err)?;
        let strategy: Strategy = strategy.parse().map_err(js_err)?;
        to_json(
            &self
                .session
                .sweep(horizon, retriever, strategy, k, &coverages)
                .map_err(js_err)?,
        )
    }
}
