use std::sync::Arc;

use raf_core::augment::Strategy;
use raf_core::forecast::{Forecaster, ForecasterSpec, PipelineConfig, RafPipeline};
use raf_core::harness::{sweep_pool_size_on, DataSource, ExperimentConfig};
use raf_core::knowledge_base::{chronological_split, KnowledgeBase, Split, TestSet};
use raf_core::metrics;
use raf_core::retrieval::{PooledEmbedder, Retriever, RetrieverKind, DEFAULT_EMBEDDING_DIM};
use raf_core::series::MultivariateSeries;
use raf_core::synthetic::{self, SyntheticConfig};
use raf_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const LOOKBACK: usize = 100;
pub const TRAIN_FRACTION: f64 = 0.85;

/// Target columns of the generated series, for plotting.
#[derive(Debug, Serialize)]
pub struct Overview {
    pub dates: Vec<String>,
    pub stations: Vec<String>,
    /// One column per station.
    pub values: Vec<Vec<f64>>,
    /// First test row.
    pub boundary: usize,
    pub episode_starts: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub horizon: usize,
    /// Position in the test set.
    pub index: usize,
    pub retriever: RetrieverKind,
    pub strategy: Strategy,
    pub k: usize,
    pub station: usize,
}

#[derive(Debug, Serialize)]
pub struct ContextView {
    pub rank: usize,
    pub origin: usize,
    pub origin_date: String,
    pub score: f64,
    pub lookback: Vec<f64>,
    pub future: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ForecastView {
    pub station: String,
    pub origin: usize,
    pub origin_date: String,
    pub test_size: usize,
    pub lookback: Vec<f64>,
    pub truth: Vec<f64>,
    pub prediction: Vec<f64>,
    pub bare: Vec<f64>,
    pub mae: f64,
    pub bare_mae: f64,
    pub contexts: Vec<ContextView>,
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub coverage: f64,
    pub mae: f64,
}

pub struct Session {
    series: MultivariateSeries,
    split: Split,
    episode_starts: Vec<usize>,
    forecaster: Arc<dyn Forecaster>,
}

fn column(matrix: &ndarray::Array2<f64>, col: usize) -> Vec<f64> {
    matrix.column(col).to_vec()
}

impl Session {
    pub fn generate(days: usize, seed: u64) -> Result<Self> {
        let data = synthetic::generate(&SyntheticConfig {
            days,
            seed,
            ..SyntheticConfig::default()
        })?;
        let split = chronological_split(data.series.len(), TRAIN_FRACTION)?;
        Ok(Self {
            series: data.series,
            split,
            episode_starts: data.episodes.iter().map(|e| e.start).collect(),
            forecaster: ForecasterSpec::default().build()?,
        })
    }

    pub fn overview(&self) -> Overview {
        let targets = self.series.target_indices();
        Overview {
            dates: self.series.dates().iter().map(|d| d.to_string()).collect(),
            stations: self.series.target_names().iter().map(|s| s.to_string()).collect(),
            values: targets
                .iter()
                .map(|&c| self.series.values().column(c).to_vec())
                .collect(),
            boundary: self.split.boundary(),
            episode_starts: self.episode_starts.clone(),
        }
    }

    pub fn test_size(&self, horizon: usize) -> Result<usize> {
        Ok(TestSet::build(&self.series, &self.split, LOOKBACK, horizon)?.len())
    }

    fn retriever(kind: RetrieverKind) -> Retriever {
        match kind {
            RetrieverKind::Similarity => Retriever::Similarity(Arc::new(PooledEmbedder::new(DEFAULT_EMBEDDING_DIM))),
            RetrieverKind::MutualInformation => Retriever::mutual_information(),
        }
    }

    /// Forecasts one test origin with and without retrieval.
    pub fn forecast(&self, query: &Query) -> Result<ForecastView> {
        let targets = self.series.target_indices().to_vec();
        let station_col = *targets
            .get(query.station)
            .ok_or_else(|| Error::Config(format!("station {} out of range 0..{}", query.station, targets.len())))?;
        let kb = KnowledgeBase::build(&self.series, &self.split, LOOKBACK, query.horizon, 1)?;
        let test = TestSet::build(&self.series, &self.split, LOOKBACK, query.horizon)?;
        let sample = test
            .samples
            .get(query.index)
            .ok_or_else(|| Error::Config(format!("test index {} out of range 0..{}", query.index, test.len())))?;

        let cfg = PipelineConfig::new(Self::retriever(query.retriever), query.k, query.strategy);
        let out = RafPipeline::new(&kb, &cfg, Arc::clone(&self.forecaster), targets.clone())?.run(sample)?;
        let bare = RafPipeline::new(
            &kb,
            &PipelineConfig::no_retrieval(),
            Arc::clone(&self.forecaster),
            targets,
        )?
        .run(sample)?;

        let truth = column(&sample.future, station_col);
        let prediction = column(&out.result.values, query.station);
        let bare = column(&bare.result.values, query.station);
        let dates = self.series.dates();
        let contexts = out
            .contexts
            .map(|set| {
                set.entries
                    .iter()
                    .enumerate()
                    .map(|(rank, e)| ContextView {
                        rank: rank + 1,
                        origin: e.pair.origin,
                        origin_date: dates[e.pair.origin].to_string(),
                        score: e.score,
                        lookback: column(&e.pair.lookback, station_col),
                        future: column(&e.pair.future, station_col),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(ForecastView {
            station: self.series.variables()[station_col].name.clone(),
            origin: sample.origin,
            origin_date: dates[sample.origin].to_string(),
            test_size: test.len(),
            lookback: column(&sample.lookback, station_col),
            mae: metrics::mae(&truth, &prediction)?,
            bare_mae: metrics::mae(&truth, &bare)?,
            truth,
            prediction,
            bare,
            contexts,
        })
    }

    /// Overall test MAE as the retrieval pool shrinks.
    pub fn sweep(
        &self,
        horizon: usize,
        retriever: RetrieverKind,
        strategy: Strategy,
        k: usize,
        coverages: &[f64],
    ) -> Result<Vec<SweepPoint>> {
        let config = ExperimentConfig {
            data: DataSource::default(),
            lookback: LOOKBACK,
            horizons: vec![horizon],
            train_fraction: TRAIN_FRACTION,
            retrievers: vec![retriever],
            strategies: vec![strategy],
            k,
            stations: self.series.target_names().iter().map(|s| s.to_string()).collect(),
            workers: 1,
            ..ExperimentConfig::default()
        };
        let sweep = sweep_pool_size_on(&self.series, &config, coverages)?;
        if let Some(failure) = sweep.output.failures.first() {
            return Err(Error::Config(format!("{}: {}", failure.cell, failure.message)));
        }
        Ok(sweep
            .rows
            .into_iter()
            .map(|r| SweepPoint {
                coverage: r.coverage,
                mae: r.mae,
            })
            .collect())
    }
}
