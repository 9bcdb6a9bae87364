//! CSV loading, vertical-datum corrections and gap filling.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{MultivariateSeries, Unit, Variable};

pub const DEFAULT_DATE_FORMAT: &str = "%Y-%m-%d";

/// Additive offset (ft) applied to one water-level column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatumAdjustment {
    pub variable_name: String,
    pub offset: f64,
}

impl DatumAdjustment {
    pub fn new(variable_name: impl Into<String>, offset: f64) -> Self {
        Self {
            variable_name: variable_name.into(),
            offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub csv_path: PathBuf,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    #[serde(default)]
    pub adjustments: Vec<DatumAdjustment>,
    #[serde(default)]
    pub target_station_names: Vec<String>,
    /// Optional unit per column name.
    #[serde(default)]
    pub units: BTreeMap<String, Unit>,
}

fn default_date_column() -> String {
    "date".to_string()
}

fn default_date_format() -> String {
    DEFAULT_DATE_FORMAT.to_string()
}

impl IngestConfig {
    pub fn new(csv_path: impl Into<PathBuf>) -> Self {
        Self {
            csv_path: csv_path.into(),
            date_column: default_date_column(),
            date_format: default_date_format(),
            adjustments: Vec::new(),
            target_station_names: Vec::new(),
            units: BTreeMap::new(),
        }
    }
}

/// Reads the CSV onto a complete daily grid. Dates absent from the file
/// become rows of `NaN`, as do empty cells.
pub fn load_csv(config: &IngestConfig) -> Result<MultivariateSeries> {
    let file = std::fs::File::open(&config.csv_path).map_err(|e| Error::io(&config.csv_path, e))?;
    load_csv_reader(file, config)
}

pub fn load_csv_reader<R: std::io::Read>(reader: R, config: &IngestConfig) -> Result<MultivariateSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_col = headers
        .iter()
        .position(|h| h == config.date_column)
        .ok_or_else(|| Error::Config(format!("date column '{}' not found in header", config.date_column)))?;
    let var_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != date_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut rows: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for (idx, record) in rdr.records().enumerate() {
        // header is line 1
        let row = idx + 2;
        let record = record?;
        let raw_date = record.get(date_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, &config.date_format).map_err(|e| Error::Parse {
            row,
            column: Some(config.date_column.clone()),
            message: format!("invalid date '{raw_date}': {e}"),
        })?;
        let mut values = Vec::with_capacity(var_cols.len());
        for (col, name) in &var_cols {
            let cell = record.get(*col).unwrap_or("");
            if cell.is_empty() {
                values.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: Some(name.clone()),
                message: format!("non-numeric value '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: Some(name.clone()),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            values.push(v);
        }
        if rows.insert(date, values).is_some() {
            return Err(Error::DuplicateDate {
                date: date.to_string(),
                row,
            });
        }
    }

    let (Some(first), Some(last)) = (rows.keys().next().copied(), rows.keys().next_back().copied()) else {
        return Err(Error::InvalidSeries("CSV contains no data rows".into()));
    };
    let t = (last - first).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = first.iter_days().take(t).collect();
    let mut values = Array2::from_elem((t, var_cols.len()), f64::NAN);
    for (date, row_values) in &rows {
        let r = (*date - first).num_days() as usize;
        for (c, v) in row_values.iter().enumerate() {
            values[[r, c]] = *v;
        }
    }

    let variables: Vec<Variable> = var_cols
        .iter()
        .map(|(_, name)| Variable::new(name.clone(), config.units.get(name).copied()))
        .collect();
    let mut targets = Vec::with_capacity(config.target_station_names.len());
    for name in &config.target_station_names {
        let idx = variables.iter().position(|v| &v.name == name).ok_or_else(|| {
            Error::Config(format!(
                "target station '{name}' is not a column of {}",
                config.csv_path.display()
            ))
        })?;
        targets.push(idx);
    }
    MultivariateSeries::new(dates, values, variables, targets)
}

/// Adds each adjustment's offset to every entry of its column.
pub fn apply_datum_adjustments(
    series: &MultivariateSeries,
    adjustments: &[DatumAdjustment],
) -> Result<MultivariateSeries> {
    let mut values = series.values().to_owned();
    for adj in adjustments {
        let col = series
            .column_index(&adj.variable_name)
            .ok_or_else(|| Error::UnknownColumn {
                name: adj.variable_name.clone(),
                known: series.variable_names(),
            })?;
        values.column_mut(col).mapv_inplace(|v| v + adj.offset);
    }
    Ok(series.map_values(values))
}

/// Fills missing markers column by column: linear interpolation over the
/// day axis inside a column, backward fill at the head, forward fill at
/// the tail.
pub fn interpolate_gaps(series: &MultivariateSeries) -> Result<MultivariateSeries> {
    let mut values = series.values().to_owned();
    for (c, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
        let observed: Vec<usize> = (0..col.len()).filter(|&i| !col[i].is_nan()).collect();
        let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
            if col.is_empty() {
                continue;
            }
            return Err(Error::EmptyColumn(series.variables()[c].name.clone()));
        };
        let head = col[first];
        let tail = col[last];
        for i in 0..first {
            col[i] = head;
        }
        for i in last + 1..col.len() {
            col[i] = tail;
        }
        for pair in observed.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a < 2 {
                continue;
            }
            let (ya, yb) = (col[a], col[b]);
            let span = (b - a) as f64;
            for i in a + 1..b {
                let frac = (i - a) as f64 / span;
                col[i] = ya + (yb - ya) * frac;
            }
        }
    }
    Ok(series.map_values(values))
}

/// Loads, adjusts and gap-fills in one step.
pub fn ingest(config: &IngestConfig) -> Result<MultivariateSeries> {
    let raw = load_csv(config)?;
    let adjusted = apply_datum_adjustments(&raw, &config.adjustments)?;
    interpolate_gaps(&adjusted)
}

/// Writes a dense series back out in the ingest CSV layout.
pub fn write_csv(series: &MultivariateSeries, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_writer(series, file)
}

pub fn write_csv_writer<W: std::io::Write>(series: &MultivariateSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(series.variable_names());
    wtr.write_record(&header)?;
    for (date, row) in series.dates().iter().zip(series.values().outer_iter()) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(date.format(DEFAULT_DATE_FORMAT).to_string());
        rec.extend(
            row.iter()
                .map(|v| if v.is_nan() { String::new() } else { v.to_string() }),
        );
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Per-variable summary used by the `ingest` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct ColumnSummary {
    pub name: String,
    pub unit: Option<Unit>,
    pub missing: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn summarize(series: &MultivariateSeries) -> Vec<ColumnSummary> {
    let missing: HashMap<usize, usize> = series
        .values()
        .axis_iter(Axis(1))
        .enumerate()
        .map(|(c, col)| (c, col.iter().filter(|v| v.is_nan()).count()))
        .collect();
    series
        .variables()
        .iter()
        .zip(series.values().axis_iter(Axis(1)))
        .enumerate()
        .map(|(c, (var, col))| {
            let obs: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
            let n = obs.len().max(1) as f64;
            ColumnSummary {
                name: var.name.clone(),
                unit: var.unit,
                missing: missing[&c],
                min: obs.iter().copied().fold(f64::INFINITY, f64::min),
                max: obs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: obs.iter().sum::<f64>() / n,
            }
        })
        .collect()
}
