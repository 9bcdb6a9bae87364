//! Forecaster abstraction, built-in forecasters, the external wire
//! protocol and the retrieve/augment/forecast pipeline.

mod autoregressive;
mod baseline;
mod external;
mod pipeline;
pub mod protocol;

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use autoregressive::{fit_autoregression, ArFit, Autoregressive};
pub use baseline::{Persistence, SeasonalNaive};
pub use external::{Endpoint, ExternalEmbedder, ExternalForecaster, ProtocolClient, RetryPolicy};
pub use pipeline::{run_raf_pipeline, PipelineConfig, PipelineOutput, RafPipeline};

use crate::augment::Strategy;
use crate::error::{Error, Result};
use crate::retrieval::RetrieverKind;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestMetadata {
    pub strategy: Option<Strategy>,
    pub retriever: Option<RetrieverKind>,
    pub origin: Option<usize>,
    /// Column names of `context`; forwarded to external forecasters.
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRequest {
    /// Oldest row first.
    pub context: Array2<f64>,
    pub horizon: usize,
    pub target_indices: Vec<usize>,
    pub metadata: RequestMetadata,
}

impl ForecastRequest {
    pub fn new(context: Array2<f64>, horizon: usize, target_indices: Vec<usize>) -> Result<Self> {
        let req = Self {
            context,
            horizon,
            target_indices,
            metadata: RequestMetadata::default(),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_metadata(mut self, metadata: RequestMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.context.nrows() == 0 {
            return Err(Error::InvalidArgument("forecast context has no rows".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if let Some(&t) = self.target_indices.iter().find(|&&t| t >= self.context.ncols()) {
            return Err(Error::InvalidArgument(format!(
                "target index {t} out of range for {} columns",
                self.context.ncols()
            )));
        }
        Ok(())
    }

    pub fn context(&self) -> ArrayView2<'_, f64> {
        self.context.view()
    }
}

/// `h x n` point forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub values: Array2<f64>,
    pub forecaster_id: String,
}

impl ForecastResult {
    /// Enforces the exact `horizon x targets` shape and finite entries.
    pub fn check_contract(&self, horizon: usize, targets: usize) -> Result<()> {
        if self.values.dim() != (horizon, targets) {
            return Err(Error::Contract(format!(
                "{} returned a {:?} forecast, expected ({horizon}, {targets})",
                self.forecaster_id,
                self.values.dim()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "{} returned non-finite values",
                self.forecaster_id
            )));
        }
        Ok(())
    }
}

pub trait Forecaster: Send + Sync {
    fn id(&self) -> String;

    fn forecast(&self, request: &ForecastRequest) -> Result<ForecastResult>;

    /// Longest context the forecaster accepts, if bounded.
    fn max_rows(&self) -> Option<usize> {
        None
    }
}

pub const DEFAULT_AR_ORDER: usize = 7;
pub const DEFAULT_AR_RIDGE: f64 = 1e-3;

/// Serializable forecaster selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForecasterSpec {
    Persistence,
    #[serde(alias = "seasonal-naive")]
    Seasonal {
        period: usize,
    },
    #[serde(rename = "ar", alias = "autoregressive")]
    Autoregressive {
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    External {
        endpoint: String,
        #[serde(default)]
        max_rows: Option<usize>,
    },
}

fn default_order() -> usize {
    DEFAULT_AR_ORDER
}

fn default_ridge() -> f64 {
    DEFAULT_AR_RIDGE
}

impl Default for ForecasterSpec {
    fn default() -> Self {
        ForecasterSpec::Autoregressive {
            order: DEFAULT_AR_ORDER,
            ridge: DEFAULT_AR_RIDGE,
        }
    }
}

impl ForecasterSpec {
    /// Short label used in reports (`persistence`, `seasonal`, `ar`, `external`).
    pub fn label(&self) -> &'static str {
        match self {
            ForecasterSpec::Persistence => "persistence",
            ForecasterSpec::Seasonal { .. } => "seasonal",
            ForecasterSpec::Autoregressive { .. } => "ar",
            ForecasterSpec::External { .. } => "external",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ForecasterSpec::Seasonal { period: 0 } => Err(Error::Config("seasonal period must be at least 1".into())),
            ForecasterSpec::Autoregressive { order: 0, .. } => Err(Error::Config("AR order must be at least 1".into())),
            ForecasterSpec::Autoregressive { ridge, .. } if ridge.is_nan() || *ridge < 0.0 => {
                Err(Error::Config(format!("ridge damping must be >= 0, got {ridge}")))
            }
            ForecasterSpec::External { max_rows: Some(0), .. } => {
                Err(Error::Config("max_rows must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Forecaster>> {
        self.validate()?;
        Ok(match self {
            ForecasterSpec::Persistence => Arc::new(Persistence),
            ForecasterSpec::Seasonal { period } => Arc::new(SeasonalNaive::new(*period)),
            ForecasterSpec::Autoregressive { order, ridge } => Arc::new(Autoregressive::new(*order, *ridge)),
            ForecasterSpec::External { endpoint, max_rows } => {
                Arc::new(ExternalForecaster::new(endpoint.parse()?, *max_rows))
            }
        })
    }
}

impl fmt::Display for ForecasterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Copies the target columns of one context row.
pub(crate) fn target_row(request: &ForecastRequest, row: usize) -> Vec<f64> {
    request
        .target_indices
        .iter()
        .map(|&t| request.context[[row, t]])
        .collect()
}
