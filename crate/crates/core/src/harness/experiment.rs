use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::augment::Strategy;
use crate::error::{Error, Result};
use crate::forecast::{Forecaster, PipelineConfig, RafPipeline};
use crate::knowledge_base::{chronological_split, KnowledgeBase, Split, TestSet};
use crate::metrics::score_columns;
use crate::parallel::{par_map, with_workers};
use crate::retrieval::{Retriever, RetrieverKind};
use crate::series::MultivariateSeries;

/// Label used in reports for the no-retrieval path.
pub const NO_RETRIEVAL: &str = "none";
pub const OVERALL: &str = "Overall";
pub const REPORT_HEADER: [&str; 10] = [
    "station",
    "lead_time",
    "retriever",
    "strategy",
    "forecaster",
    "coverage",
    "mae",
    "rmse",
    "sedi",
    "n_samples",
];

/// One point of the evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lead_time: usize,
    /// `None` is the bare forecaster.
    pub method: Option<(RetrieverKind, Strategy)>,
    pub coverage: f64,
}

impl Cell {
    pub fn retriever_label(&self) -> &'static str {
        self.method.map_or(NO_RETRIEVAL, |(r, _)| r.as_str())
    }

    pub fn strategy_label(&self) -> &'static str {
        self.method.map_or(NO_RETRIEVAL, |(_, s)| s.as_str())
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "h={} retriever={} strategy={} coverage={}",
            self.lead_time,
            self.retriever_label(),
            self.strategy_label(),
            self.coverage
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub origin: usize,
    /// Dates of the forecast rows.
    pub dates: Vec<NaiveDate>,
    /// `h` rows, one column per station.
    pub truth: Vec<Vec<f64>>,
    pub prediction: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedCell {
    pub lead_time: usize,
    pub retriever: String,
    pub strategy: String,
    pub coverage: f64,
    pub forecaster: String,
    pub records: Vec<ForecastRecord>,
}

impl ArchivedCell {
    /// Method name used for trajectory columns, e.g. `mi-b@0.85`.
    pub fn method_label(&self) -> String {
        if self.retriever == NO_RETRIEVAL {
            NO_RETRIEVAL.to_string()
        } else {
            format!("{}-{}@{}", self.retriever, self.strategy, self.coverage)
        }
    }
}

/// Per-sample forecasts of every successful cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForecastArchive {
    pub stations: Vec<String>,
    pub cells: Vec<ArchivedCell>,
}

impl ForecastArchive {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub station: String,
    pub lead_time: usize,
    pub retriever: String,
    pub strategy: String,
    pub forecaster: String,
    pub coverage: f64,
    pub mae: f64,
    pub rmse: f64,
    pub sedi: Option<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn overall(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.station == OVERALL)
    }

    /// The Overall row of one cell.
    pub fn overall_for(&self, lead_time: usize, retriever: &str, strategy: &str, coverage: f64) -> Option<&ReportRow> {
        self.overall().find(|r| {
            r.lead_time == lead_time && r.retriever == retriever && r.strategy == strategy && r.coverage == coverage
        })
    }

    /// CSV with [`REPORT_HEADER`]; floats in shortest round-trip form, absent SEDI as an empty cell.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.station.clone(),
                r.lead_time.to_string(),
                r.retriever.clone(),
                r.strategy.clone(),
                r.forecaster.clone(),
                r.coverage.to_string(),
                r.mae.to_string(),
                r.rmse.to_string(),
                r.sedi.map(|s| s.to_string()).unwrap_or_default(),
                r.n_samples.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("report", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub cell: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub report: EvalReport,
    pub archive: ForecastArchive,
    pub failures: Vec<CellFailure>,
}

impl ExperimentOutput {
    /// Writes `report.csv`, `forecasts.json` and, when cells failed, `failures.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join("report.csv");
        let archive = dir.join("forecasts.json");
        std::fs::write(&report, self.report.to_csv_string()?).map_err(|e| Error::io(&report, e))?;
        self.archive.save(&archive)?;
        let mut written = vec![report, archive];
        let failures = dir.join("failures.txt");
        if self.failures.is_empty() {
            if failures.exists() {
                std::fs::remove_file(&failures).map_err(|e| Error::io(&failures, e))?;
            }
        } else {
            let text: String = self
                .failures
                .iter()
                .map(|f| format!("{}: {}\n", f.cell, f.message))
                .collect();
            std::fs::write(&failures, text).map_err(|e| Error::io(&failures, e))?;
            written.push(failures);
        }
        Ok(written)
    }
}

/// Loads the configured data and evaluates the whole grid.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let series = config.load_series()?;
    run_experiment_on(&series, config)
}

/// Evaluates the grid on an already loaded series whose targets are the stations.
pub fn run_experiment_on(series: &MultivariateSeries, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let forecaster = config.forecaster.build()?;
    let split = chronological_split(series.len(), config.train_fraction)?;
    let stations: Vec<String> = series.target_names().iter().map(|s| s.to_string()).collect();
    let retrievers = config
        .retrievers
        .iter()
        .map(|&kind| config.build_retriever(kind))
        .collect::<Result<Vec<_>>>()?;

    with_workers(config.workers, || {
        let mut out = ExperimentOutput {
            archive: ForecastArchive {
                stations: stations.clone(),
                cells: Vec::new(),
            },
            ..Default::default()
        };
        for &h in &config.horizons {
            let mut cells: Vec<(Cell, Option<&Retriever>)> = Vec::new();
            if config.include_baseline {
                cells.push((
                    Cell {
                        lead_time: h,
                        method: None,
                        coverage: 0.0,
                    },
                    None,
                ));
            }
            for retriever in &retrievers {
                for coverage in config.coverages() {
                    for &strategy in &config.strategies {
                        let cell = Cell {
                            lead_time: h,
                            method: Some((retriever.kind(), strategy)),
                            coverage,
                        };
                        cells.push((cell, Some(retriever)));
                    }
                }
            }

            let data = HorizonData::build(series, &split, config, h);
            for (cell, retriever) in cells {
                let result = data
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|d| run_cell(series, d, &cell, retriever, config, &forecaster));
                match result {
                    Ok((rows, archived)) => {
                        out.report.rows.extend(rows);
                        out.archive.cells.push(archived);
                    }
                    Err(e) => out.failures.push(CellFailure {
                        cell: cell.to_string(),
                        message: e.to_string(),
                    }),
                }
            }
        }
        out
    })
}

struct HorizonData {
    kb: KnowledgeBase,
    test: TestSet,
}

impl HorizonData {
    fn build(series: &MultivariateSeries, split: &Split, config: &ExperimentConfig, h: usize) -> Result<Self, String> {
        let kb = KnowledgeBase::build(series, split, config.lookback, h, config.stride).map_err(|e| e.to_string())?;
        let test = TestSet::build(series, split, config.lookback, h).map_err(|e| e.to_string())?;
        if test.is_empty() {
            return Err(format!("no test samples for lead time {h}"));
        }
        Ok(Self { kb, test })
    }
}

fn run_cell(
    series: &MultivariateSeries,
    data: &HorizonData,
    cell: &Cell,
    retriever: Option<&Retriever>,
    config: &ExperimentConfig,
    forecaster: &Arc<dyn Forecaster>,
) -> Result<(Vec<ReportRow>, ArchivedCell), String> {
    let run = || -> Result<(Vec<ReportRow>, ArchivedCell)> {
        let (kb, pipeline_config) = match (retriever, cell.method) {
            (Some(r), Some((_, strategy))) => (
                data.kb
                    .restrict_seeded(cell.coverage, config.train_fraction, config.retain, config.seed)?,
                PipelineConfig::new(r.clone(), config.k, strategy),
            ),
            _ => (
                data.kb.restrict(0.0, config.train_fraction, config.retain)?,
                PipelineConfig::no_retrieval(),
            ),
        };
        let targets = series.target_indices().to_vec();
        let variables = series.variable_names().iter().map(|s| s.to_string()).collect();
        let pipeline =
            RafPipeline::new(&kb, &pipeline_config, Arc::clone(forecaster), targets.clone())?.with_variables(variables);
        let records = par_map(&data.test.samples, |query| {
            let out = pipeline.run(query)?;
            let truth = query.future.select(ndarray::Axis(1), &targets);
            Ok(ForecastRecord {
                origin: query.origin,
                dates: series.dates()[query.origin + 1..=query.origin + cell.lead_time].to_vec(),
                truth: rows_of(&truth),
                prediction: rows_of(&out.result.values),
            })
        })?;
        let forecaster_id = pipeline.forecaster().id();
        let rows = score_cell(series, cell, &forecaster_id, &records, config)?;
        Ok((
            rows,
            ArchivedCell {
                lead_time: cell.lead_time,
                retriever: cell.retriever_label().to_string(),
                strategy: cell.strategy_label().to_string(),
                coverage: cell.coverage,
                forecaster: forecaster_id,
                records,
            },
        ))
    };
    run().map_err(|e| e.to_string())
}

fn rows_of(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Per-station rows over every (origin, step) value, then the unweighted station mean.
fn score_cell(
    series: &MultivariateSeries,
    cell: &Cell,
    forecaster: &str,
    records: &[ForecastRecord],
    config: &ExperimentConfig,
) -> Result<Vec<ReportRow>> {
    let n = series.target_indices().len();
    let flat = |pick: fn(&ForecastRecord) -> &Vec<Vec<f64>>| -> Result<Array2<f64>> {
        let values: Vec<f64> = records.iter().flat_map(|r| pick(r).iter().flatten().copied()).collect();
        Array2::from_shape_vec((values.len() / n.max(1), n), values).map_err(|e| Error::Shape(e.to_string()))
    };
    let truth = flat(|r| &r.truth)?;
    let pred = flat(|r| &r.prediction)?;
    let scores = score_columns(&truth, &pred, config.sedi_low, config.sedi_high)?;

    let row = |station: String, mae, rmse, sedi, n_samples| ReportRow {
        station,
        lead_time: cell.lead_time,
        retriever: cell.retriever_label().to_string(),
        strategy: cell.strategy_label().to_string(),
        forecaster: forecaster.to_string(),
        coverage: cell.coverage,
        mae,
        rmse,
        sedi,
        n_samples,
    };
    let mut rows: Vec<ReportRow> = series
        .target_names()
        .into_iter()
        .zip(&scores)
        .map(|(name, s)| row(name.to_string(), s.mae, s.rmse, s.sedi, s.n_samples))
        .collect();
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let sedis: Vec<f64> = scores.iter().filter_map(|s| s.sedi).collect();
    rows.push(row(
        OVERALL.to_string(),
        mean(scores.iter().map(|s| s.mae).collect()),
        mean(scores.iter().map(|s| s.rmse).collect()),
        (!sedis.is_empty()).then(|| mean(sedis)),
        scores.iter().map(|s| s.n_samples).sum(),
    ));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ForecasterSpec;
    use crate::harness::config::DataSource;
    use crate::synthetic::SyntheticConfig;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic(SyntheticConfig {
                days: 400,
                ..SyntheticConfig::default()
            }),
            lookback: 30,
            horizons: vec![7, 14],
            forecaster: ForecasterSpec::Autoregressive { order: 3, ridge: 0.01 },
            coverages: Some(vec![0.0, 0.85]),
            include_baseline: true,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn grid_cardinality_and_archive_rows() {
        let cfg = small_config();
        let out = run_experiment(&cfg).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        // per horizon: baseline + 2 retrievers x 2 coverages x 1 strategy
        assert_eq!(out.archive.cells.len(), 2 * 5);
        assert_eq!(out.report.rows.len(), 2 * 5 * 6);
        let t = |h| 400 - h - (0.85f64 * 400.0) as usize + 1;
        for c in &out.archive.cells {
            assert_eq!(c.records.len(), t(c.lead_time));
        }
    }

    #[test]
    fn coverage_zero_equals_baseline() {
        let out = run_experiment(&small_config()).unwrap();
        for h in [7, 14] {
            let base = out.report.overall_for(h, NO_RETRIEVAL, NO_RETRIEVAL, 0.0).unwrap();
            for r in ["sim", "mi"] {
                let zero = out.report.overall_for(h, r, "b", 0.0).unwrap();
                assert_eq!((zero.mae, zero.rmse, zero.sedi), (base.mae, base.rmse, base.sedi));
            }
        }
    }

    #[test]
    fn overall_is_unweighted_station_mean() {
        let out = run_experiment(&small_config()).unwrap();
        for chunk in out.report.rows.chunks(6) {
            let mean = chunk[..5].iter().map(|r| r.mae).sum::<f64>() / 5.0;
            assert_eq!(chunk[5].station, OVERALL);
            assert!((chunk[5].mae - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn failing_cell_does_not_stop_the_grid() {
        let cfg = ExperimentConfig {
            // h=380 leaves no room for a single knowledge-base pair
            horizons: vec![380, 7],
            ..small_config()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.failures.len(), 5);
        assert!(out.failures[0].cell.starts_with("h=380"));
        assert_eq!(out.archive.cells.len(), 5);
    }

    #[test]
    fn report_csv_layout() {
        let out = run_experiment(&small_config()).unwrap();
        let text = out.report.to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_HEADER.join(","));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[..6], ["NP205", "7", "none", "none", "ar(p=3;lambda=0.01)", "0"]);
        let mae: f64 = first[6].parse().unwrap();
        assert_eq!(mae, out.report.rows[0].mae);
    }

    #[test]
    fn archive_json_round_trip() {
        let out = run_experiment(&small_config()).unwrap();
        let back = ForecastArchive::from_json(&out.archive.to_json().unwrap()).unwrap();
        assert_eq!(back, out.archive);
    }
}
