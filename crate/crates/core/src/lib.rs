//! Retrieval-augmented forecasting for multivariate daily series.
//!
//! A query lookback is scored against a chronological knowledge base of
//! `(lookback, future)` window pairs, the best `k` pairs are combined with
//! the query under one of three augmentation strategies, and the result is
//! handed to any [`forecast::Forecaster`].
//!
//! ```
//! use std::sync::Arc;
//! use raf_core::prelude::*;
//!
//! let data = synthetic::generate(&synthetic::SyntheticConfig::default()).unwrap();
//! let series = &data.series;
//! let split = chronological_split(series.len(), 0.85).unwrap();
//! let kb = KnowledgeBase::build(series, &split, 100, 14, 1).unwrap();
//! let test = TestSet::build(series, &split, 100, 14).unwrap();
//!
//! let config = PipelineConfig::new(Retriever::mutual_information(), 3, Strategy::B);
//! let forecaster = ForecasterSpec::default().build().unwrap();
//! let pipeline = RafPipeline::new(&kb, &config, forecaster, series.target_indices().to_vec()).unwrap();
//! let out = pipeline.run(&test.samples[0]).unwrap();
//! assert_eq!(out.result.values.dim(), (14, 5));
//! ```

pub mod augment;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod ingest;
pub mod knowledge_base;
pub mod metrics;
mod parallel;
pub mod retrieval;
pub mod series;
pub mod synthetic;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::augment::Strategy;
    pub use crate::error::{Error, Result};
    pub use crate::forecast::{Forecaster, ForecasterSpec, PipelineConfig, RafPipeline};
    pub use crate::knowledge_base::{chronological_split, KnowledgeBase, RetainPolicy, TestSet};
    pub use crate::retrieval::{Retriever, RetrieverKind};
    pub use crate::series::{window_at, MultivariateSeries, WindowPair};
    pub use crate::synthetic;
}
