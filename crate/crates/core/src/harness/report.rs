use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{run_experiment_on, ExperimentOutput, ForecastArchive};
use super::plot::{line_chart, Line};
use crate::error::{Error, Result};
use crate::series::MultivariateSeries;

pub const SWEEP_HEADER: [&str; 5] = ["coverage", "lead_time", "retriever", "strategy", "mae"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub coverage: f64,
    pub lead_time: usize,
    pub retriever: String,
    pub strategy: String,
    /// Overall (station-mean) MAE.
    pub mae: f64,
}

#[derive(Debug, Clone)]
pub struct PoolSweep {
    pub rows: Vec<SweepRow>,
    pub output: ExperimentOutput,
}

/// Runs the grid once per coverage and tabulates Overall MAE.
pub fn sweep_pool_size(config: &ExperimentConfig, coverages: &[f64]) -> Result<PoolSweep> {
    let series = config.load_series()?;
    sweep_pool_size_on(&series, config, coverages)
}

pub fn sweep_pool_size_on(
    series: &MultivariateSeries,
    config: &ExperimentConfig,
    coverages: &[f64],
) -> Result<PoolSweep> {
    if coverages.is_empty() {
        return Err(Error::Config("pool sweep needs at least one coverage".into()));
    }
    if config.retrievers.is_empty() {
        return Err(Error::Config("pool sweep needs at least one retriever".into()));
    }
    let cfg = ExperimentConfig {
        coverages: Some(coverages.to_vec()),
        include_baseline: false,
        ..config.clone()
    };
    let output = run_experiment_on(series, &cfg)?;
    let mut rows: Vec<SweepRow> = output
        .report
        .overall()
        .map(|r| SweepRow {
            coverage: r.coverage,
            lead_time: r.lead_time,
            retriever: r.retriever.clone(),
            strategy: r.strategy.clone(),
            mae: r.mae,
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.lead_time, &a.retriever, &a.strategy)
            .cmp(&(b.lead_time, &b.retriever, &b.strategy))
            .then(a.coverage.total_cmp(&b.coverage))
    });
    Ok(PoolSweep { rows, output })
}

impl PoolSweep {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.coverage.to_string(),
                r.lead_time.to_string(),
                r.retriever.clone(),
                r.strategy.clone(),
                r.mae.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("sweep", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// One MAE curve per (lead time, retriever, strategy).
    pub fn curves(&self) -> BTreeMap<(usize, String, String), Vec<(f64, f64)>> {
        let mut curves: BTreeMap<_, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &self.rows {
            curves
                .entry((r.lead_time, r.retriever.clone(), r.strategy.clone()))
                .or_default()
                .push((r.coverage, r.mae));
        }
        curves
    }

    /// Coverage with the largest MAE on one curve (the smallest coverage on ties).
    pub fn worst_coverage(&self, lead_time: usize, retriever: &str, strategy: &str) -> Option<f64> {
        let key = (lead_time, retriever.to_string(), strategy.to_string());
        self.curves()
            .get(&key)?
            .iter()
            .fold(None, |best: Option<(f64, f64)>, &(c, m)| match best {
                Some((_, bm)) if bm >= m => best,
                _ => Some((c, m)),
            })
            .map(|(c, _)| c)
    }

    pub fn to_svg(&self) -> String {
        let lines: Vec<Line> = self
            .curves()
            .into_iter()
            .map(|((h, r, s), points)| Line {
                name: format!("{r}-{s} h={h}"),
                points,
            })
            .collect();
        let mut ticks: Vec<f64> = self.rows.iter().map(|r| r.coverage).collect();
        ticks.sort_by(f64::total_cmp);
        ticks.dedup();
        let ticks: Vec<(f64, String)> = ticks.into_iter().map(|c| (c, format!("{:.0}%", c * 100.0))).collect();
        line_chart("MAE vs retrieval pool size", "pool coverage", "MAE", &lines, &ticks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub date: NaiveDate,
    pub truth: f64,
    /// One value per entry of [`Trajectory::methods`].
    pub predictions: Vec<f64>,
}

/// The `h`-step-ahead forecasts of one station, dated by their target day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub station: String,
    pub lead_time: usize,
    pub methods: Vec<String>,
    pub rows: Vec<TrajectoryRow>,
}

fn slice_name(station: &str, lead_time: usize) -> String {
    format!("{station}@h={lead_time}")
}

pub fn emit_trajectories(archive: &ForecastArchive, station: &str, lead_time: usize) -> Result<Trajectory> {
    let available = || {
        let mut leads: Vec<usize> = archive.cells.iter().map(|c| c.lead_time).collect();
        leads.sort_unstable();
        leads.dedup();
        leads
            .into_iter()
            .flat_map(|h| archive.stations.iter().map(move |s| slice_name(s, h)))
            .collect::<Vec<_>>()
    };
    let missing = || Error::MissingSlice {
        requested: slice_name(station, lead_time),
        available: available(),
    };
    let col = archive.stations.iter().position(|s| s == station).ok_or_else(missing)?;
    let cells: Vec<_> = archive.cells.iter().filter(|c| c.lead_time == lead_time).collect();
    if cells.is_empty() {
        return Err(missing());
    }

    let step = lead_time - 1;
    let mut by_origin: BTreeMap<usize, (NaiveDate, f64, Vec<f64>)> = BTreeMap::new();
    for (m, cell) in cells.iter().enumerate() {
        for rec in &cell.records {
            let entry = by_origin
                .entry(rec.origin)
                .or_insert_with(|| (rec.dates[step], rec.truth[step][col], vec![f64::NAN; cells.len()]));
            entry.2[m] = rec.prediction[step][col];
        }
    }
    let methods = cells.iter().map(|c| c.method_label()).collect();
    Ok(Trajectory {
        station: station.to_string(),
        lead_time,
        methods,
        rows: by_origin
            .into_values()
            .map(|(date, truth, predictions)| TrajectoryRow {
                date,
                truth,
                predictions,
            })
            .collect(),
    })
}

impl Trajectory {
    /// `date,truth,prediction` for a single method, otherwise one
    /// `prediction:<method>` column per method.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["date".to_string(), "truth".to_string()];
        if self.methods.len() == 1 {
            h.push("prediction".into());
        } else {
            h.extend(self.methods.iter().map(|m| format!("prediction:{m}")));
        }
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![r.date.to_string(), r.truth.to_string()];
            rec.extend(
                r.predictions
                    .iter()
                    .map(|p| if p.is_nan() { String::new() } else { p.to_string() }),
            );
            out.write_record(rec)?;
        }
        out.flush().map_err(|e| Error::io("trajectory", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    pub fn to_svg(&self) -> String {
        let x = |i: usize| i as f64;
        let mut lines = vec![Line {
            name: "truth".into(),
            points: self.rows.iter().enumerate().map(|(i, r)| (x(i), r.truth)).collect(),
        }];
        for (m, name) in self.methods.iter().enumerate() {
            lines.push(Line {
                name: name.clone(),
                points: self
                    .rows
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| !r.predictions[m].is_nan())
                    .map(|(i, r)| (x(i), r.predictions[m]))
                    .collect(),
            });
        }
        let ticks: Vec<(f64, String)> = match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => vec![(0.0, a.date.to_string()), (x(self.rows.len() - 1), b.date.to_string())],
            _ => Vec::new(),
        };
        line_chart(
            &format!("{} at {}-day lead", self.station, self.lead_time),
            "date",
            "level",
            &lines,
            &ticks,
        )
    }
}
