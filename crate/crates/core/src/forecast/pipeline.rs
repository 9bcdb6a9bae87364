use std::sync::Arc;

use ndarray::Array2;

use super::{ForecastRequest, ForecastResult, Forecaster, RequestMetadata};
use crate::augment::{augment_strategy_a, augment_strategy_b, augment_strategy_c, average_forecasts, Strategy};
use crate::error::{Result, Stage};
use crate::knowledge_base::KnowledgeBase;
use crate::retrieval::{ContextSet, Exclusion, RetrievalIndex, Retriever};
use crate::series::WindowPair;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// `None` runs the forecaster on the bare lookback.
    pub retriever: Option<Retriever>,
    pub k: usize,
    pub strategy: Strategy,
}

impl PipelineConfig {
    pub fn new(retriever: Retriever, k: usize, strategy: Strategy) -> Self {
        Self {
            retriever: Some(retriever),
            k,
            strategy,
        }
    }

    pub fn no_retrieval() -> Self {
        Self {
            retriever: None,
            k: 1,
            strategy: Strategy::B,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub result: ForecastResult,
    /// Absent on the no-retrieval path.
    pub contexts: Option<ContextSet>,
}

/// Retrieve, augment and forecast against one knowledge base. Retrieval
/// features of the base are computed once at construction.
pub struct RafPipeline<'a> {
    index: Option<RetrievalIndex<'a>>,
    forecaster: Arc<dyn Forecaster>,
    k: usize,
    strategy: Strategy,
    target_indices: Vec<usize>,
    variables: Vec<String>,
}

impl<'a> RafPipeline<'a> {
    pub fn new(
        kb: &'a KnowledgeBase,
        config: &PipelineConfig,
        forecaster: Arc<dyn Forecaster>,
        target_indices: Vec<usize>,
    ) -> Result<Self> {
        let index = match &config.retriever {
            Some(r) if !kb.is_empty() => Some(RetrievalIndex::new(kb, r).map_err(|e| e.at_stage(Stage::Retrieve))?),
            _ => None,
        };
        Ok(Self {
            index,
            forecaster,
            k: config.k,
            strategy: config.strategy,
            target_indices,
            variables: Vec::new(),
        })
    }

    pub fn with_variables(mut self, variables: Vec<String>) -> Self {
        self.variables = variables;
        self
    }

    pub fn forecaster(&self) -> &dyn Forecaster {
        self.forecaster.as_ref()
    }

    fn request(&self, context: Array2<f64>, query: &WindowPair) -> Result<ForecastRequest> {
        let metadata = RequestMetadata {
            strategy: self.index.as_ref().map(|_| self.strategy),
            retriever: self.index.as_ref().map(RetrievalIndex::kind),
            origin: Some(query.origin),
            variables: self.variables.clone(),
        };
        Ok(ForecastRequest::new(context, query.horizon(), self.target_indices.clone())?.with_metadata(metadata))
    }

    fn call(&self, req: &ForecastRequest) -> Result<ForecastResult> {
        let res = self.forecaster.forecast(req)?;
        res.check_contract(req.horizon, req.target_indices.len())?;
        Ok(res)
    }

    /// Forecasts `query.future` from `query.lookback`; the query's own
    /// future is never read.
    pub fn run(&self, query: &WindowPair) -> Result<PipelineOutput> {
        let forecast_stage = |e: crate::error::Error| e.at_stage(Stage::Forecast);
        let Some(index) = &self.index else {
            let req = self.request(query.lookback.clone(), query).map_err(forecast_stage)?;
            return Ok(PipelineOutput {
                result: self.call(&req).map_err(forecast_stage)?,
                contexts: None,
            });
        };

        let contexts = index
            .top_k(query.lookback.view(), self.k, Exclusion::for_query(query))
            .map_err(|e| e.at_stage(Stage::Retrieve))?;
        let augment_stage = |e: crate::error::Error| e.at_stage(Stage::Augment);
        let query_view = query.lookback.view();
        let result = match self.strategy {
            Strategy::A => {
                let input = augment_strategy_a(&contexts, query_view).map_err(augment_stage)?;
                let req = self.request(input.matrix, query).map_err(forecast_stage)?;
                self.call(&req).map_err(forecast_stage)?
            }
            Strategy::B => {
                let inputs = augment_strategy_b(&contexts, query_view).map_err(augment_stage)?;
                let mut forecasts = Vec::with_capacity(inputs.len());
                let mut id = String::new();
                for input in inputs {
                    let req = self.request(input.matrix, query).map_err(forecast_stage)?;
                    let res = self.call(&req).map_err(forecast_stage)?;
                    id = res.forecaster_id;
                    forecasts.push(res.values);
                }
                ForecastResult {
                    values: average_forecasts(&forecasts).map_err(forecast_stage)?,
                    forecaster_id: id,
                }
            }
            Strategy::C => {
                let input =
                    augment_strategy_c(&contexts, query_view, self.forecaster.max_rows()).map_err(augment_stage)?;
                let req = self.request(input.matrix, query).map_err(forecast_stage)?;
                self.call(&req).map_err(forecast_stage)?
            }
        };
        Ok(PipelineOutput {
            result,
            contexts: Some(contexts),
        })
    }
}

/// One-shot pipeline run.
pub fn run_raf_pipeline(
    kb: &KnowledgeBase,
    query: &WindowPair,
    config: &PipelineConfig,
    forecaster: Arc<dyn Forecaster>,
    target_indices: &[usize],
) -> Result<ForecastResult> {
    RafPipeline::new(kb, config, forecaster, target_indices.to_vec())?
        .run(query)
        .map(|o| o.result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::forecast::{Autoregressive, Persistence};
    use ndarray::array;

    fn pair(lookback: Array2<f64>, future: Array2<f64>, origin: usize) -> WindowPair {
        WindowPair {
            lookback,
            future,
            origin,
        }
    }

    #[test]
    fn empty_pool_is_bare_forecast() {
        let kb = KnowledgeBase::from_samples(vec![], 3, 2, 1).unwrap();
        let q = pair(array![[1.0], [2.0], [3.0]], array![[0.0], [0.0]], 50);
        let cfg = PipelineConfig::new(Retriever::similarity(), 3, Strategy::B);
        let out = run_raf_pipeline(&kb, &q, &cfg, Arc::new(Persistence), &[0]).unwrap();
        let bare = Persistence
            .forecast(&ForecastRequest::new(q.lookback.clone(), 2, vec![0]).unwrap())
            .unwrap();
        assert_eq!(out.values, bare.values);
    }

    #[test]
    fn hand_traced_three_sample_base() {
        // One base sample replays the query episode exactly, future included.
        let episode_lb = array![[1.0, 10.0], [2.0, 20.0], [4.0, 40.0], [8.0, 80.0]];
        let episode_fu = array![[16.0, 160.0], [32.0, 320.0]];
        let other_a = pair(
            array![[5.0, 1.0], [5.0, 1.0], [5.0, 2.0], [5.0, 1.0]],
            array![[5.0, 1.0], [5.0, 1.0]],
            3,
        );
        let copy = pair(episode_lb.clone(), episode_fu.clone(), 13);
        let other_b = pair(
            array![[9.0, 0.0], [7.0, 3.0], [1.0, 3.0], [2.0, 0.0]],
            array![[0.0, 0.0], [1.0, 1.0]],
            23,
        );
        let kb = KnowledgeBase::from_samples(vec![other_a, copy, other_b], 4, 2, 2).unwrap();
        let query = pair(episode_lb, array![[-1.0, -1.0], [-1.0, -1.0]], 100);

        let cfg = PipelineConfig::new(Retriever::similarity(), 1, Strategy::B);
        let out = RafPipeline::new(&kb, &cfg, Arc::new(Persistence), vec![1])
            .unwrap()
            .run(&query)
            .unwrap();
        let ctx = out.contexts.unwrap();
        assert_eq!(ctx.entries[0].pair.origin, 13);
        assert_eq!(ctx.entries[0].score, 0.0);
        // [context; query] ends with the query, so persistence repeats 80.
        assert_eq!(out.result.values, array![[80.0], [80.0]]);

        // AR(1) on [copy lookback; copy future; query] in column 0:
        let ar = Autoregressive::new(1, 0.0);
        let out = RafPipeline::new(&kb, &cfg, Arc::new(ar), vec![0])
            .unwrap()
            .run(&query)
            .unwrap();
        let y = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 1.0, 2.0, 4.0, 8.0];
        let fit = crate::forecast::fit_autoregression(&y, 1, 0.0).unwrap();
        assert_eq!(out.result.values.column(0).to_vec(), fit.roll_forward(&y, 2));
    }

    #[test]
    fn k_one_strategies_agree() {
        let samples = (0..5)
            .map(|i| {
                let lb = Array2::from_shape_fn((6, 2), |(r, c)| ((r * 3 + c + i) % 5) as f64);
                let fu = Array2::from_shape_fn((2, 2), |(r, c)| (r + c + i) as f64);
                pair(lb, fu, 5 + i * 8)
            })
            .collect();
        let kb = KnowledgeBase::from_samples(samples, 6, 2, 2).unwrap();
        let q = pair(
            Array2::from_shape_fn((6, 2), |(r, c)| ((r * 2 + c) % 5) as f64),
            Array2::zeros((2, 2)),
            200,
        );
        let run = |s| {
            let cfg = PipelineConfig::new(Retriever::mutual_information(), 1, s);
            run_raf_pipeline(&kb, &q, &cfg, Arc::new(Autoregressive::new(2, 0.1)), &[0, 1]).unwrap()
        };
        let (a, b, c) = (run(Strategy::A), run(Strategy::B), run(Strategy::C));
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn stage_is_reported() {
        let kb =
            KnowledgeBase::from_samples(vec![pair(Array2::zeros((3, 1)), Array2::zeros((1, 1)), 2)], 3, 1, 1).unwrap();
        // query overlaps the only base sample
        let q = pair(Array2::zeros((3, 1)), Array2::zeros((1, 1)), 3);
        let cfg = PipelineConfig::new(Retriever::similarity(), 1, Strategy::A);
        match run_raf_pipeline(&kb, &q, &cfg, Arc::new(Persistence), &[0]) {
            Err(Error::Pipeline { stage, source }) => {
                assert_eq!(stage, Stage::Retrieve);
                assert!(matches!(*source, Error::EmptyPool));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
