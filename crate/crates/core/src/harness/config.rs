use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::Strategy;
use crate::error::{Error, Result};
use crate::forecast::ForecasterSpec;
use crate::ingest::{self, IngestConfig};
use crate::knowledge_base::RetainPolicy;
use crate::metrics::{DEFAULT_SEDI_HIGH, DEFAULT_SEDI_LOW};
use crate::retrieval::{EmbedderSpec, Retriever, RetrieverKind};
use crate::series::MultivariateSeries;
use crate::synthetic::{self, SyntheticConfig};

pub const DEFAULT_STATIONS: [&str; 5] = ["NP205", "P33", "G620", "NESRS1", "NESRS2"];

/// Where the experiment's series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Csv(IngestConfig),
    Synthetic(SyntheticConfig),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticConfig::default())
    }
}

impl DataSource {
    /// Loads, adjusts and gap-fills the series. Targets are left to the caller.
    pub fn load(&self) -> Result<MultivariateSeries> {
        match self {
            DataSource::Csv(cfg) => ingest::ingest(cfg),
            DataSource::Synthetic(cfg) => Ok(synthetic::generate(cfg)?.series),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub train_fraction: f64,
    pub stride: usize,
    pub retrievers: Vec<RetrieverKind>,
    pub embedder: EmbedderSpec,
    /// Histogram bins for mutual information; Sturges' rule when absent.
    pub mi_bins: Option<usize>,
    pub strategies: Vec<Strategy>,
    pub k: usize,
    pub forecaster: ForecasterSpec,
    /// Pool coverages as fractions of the whole series; the full base when absent.
    pub coverages: Option<Vec<f64>>,
    pub retain: RetainPolicy,
    pub stations: Vec<String>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads per cell; 0 uses every core.
    pub workers: usize,
    /// Adds a no-retrieval row per lead time.
    pub include_baseline: bool,
    pub sedi_low: f64,
    pub sedi_high: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            lookback: 100,
            horizons: vec![7, 14, 21, 28],
            train_fraction: 0.85,
            stride: 1,
            retrievers: vec![RetrieverKind::Similarity, RetrieverKind::MutualInformation],
            embedder: EmbedderSpec::default(),
            mi_bins: None,
            strategies: vec![Strategy::B],
            k: 3,
            forecaster: ForecasterSpec::default(),
            coverages: None,
            retain: RetainPolicy::default(),
            stations: DEFAULT_STATIONS.iter().map(|s| s.to_string()).collect(),
            out_dir: PathBuf::from("results"),
            seed: 0,
            workers: 0,
            include_baseline: false,
            sedi_low: DEFAULT_SEDI_LOW,
            sedi_high: DEFAULT_SEDI_HIGH,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file. A relative CSV path is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let DataSource::Csv(ingest) = &mut cfg.data {
            if ingest.csv_path.is_relative() {
                if let Some(dir) = path.parent() {
                    ingest.csv_path = dir.join(&ingest.csv_path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn coverages(&self) -> Vec<f64> {
        self.coverages.clone().unwrap_or_else(|| vec![self.train_fraction])
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.lookback == 0 {
            return fail("lookback must be at least 1".into());
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return fail(format!(
                "horizons must be a non-empty list of positive integers, got {:?}",
                self.horizons
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!(
                "train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            ));
        }
        if self.stride == 0 {
            return fail("stride must be at least 1".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.retrievers.is_empty() && !self.include_baseline {
            return fail("no retrievers configured and include_baseline is off".into());
        }
        if self.strategies.is_empty() && !self.retrievers.is_empty() {
            return fail("strategies must not be empty".into());
        }
        if let Some(c) = self
            .coverages()
            .into_iter()
            .find(|c| !(*c >= 0.0 && *c <= self.train_fraction + 1e-12))
        {
            return fail(format!("coverage {c} outside [0, {}]", self.train_fraction));
        }
        if self.stations.is_empty() {
            return fail("stations must not be empty".into());
        }
        if !(self.sedi_low > 0.0 && self.sedi_low < self.sedi_high && self.sedi_high < 1.0) {
            return fail(format!(
                "need 0 < sedi_low < sedi_high < 1, got {} and {}",
                self.sedi_low, self.sedi_high
            ));
        }
        if self.mi_bins == Some(0) {
            return fail("mi_bins must be at least 1".into());
        }
        self.forecaster.validate()
    }

    pub fn build_retriever(&self, kind: RetrieverKind) -> Result<Retriever> {
        Ok(match kind {
            RetrieverKind::Similarity => Retriever::Similarity(self.embedder.build()?),
            RetrieverKind::MutualInformation => Retriever::MutualInformation { bins: self.mi_bins },
        })
    }

    /// Loads the data source and points its targets at the configured stations.
    pub fn load_series(&self) -> Result<MultivariateSeries> {
        let series = self.data.load()?;
        let mut targets = Vec::with_capacity(self.stations.len());
        for name in &self.stations {
            let idx = series.column_index(name).ok_or_else(|| Error::UnknownColumn {
                name: name.clone(),
                known: series.variable_names().iter().map(|s| s.to_string()).collect(),
            })?;
            targets.push(idx);
        }
        series.with_targets(targets)
    }
}
