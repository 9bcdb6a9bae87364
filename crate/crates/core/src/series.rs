//! Multivariate daily series, window slicing and per-column standardization.

use chrono::NaiveDate;
use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurement unit of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Ft,
    Cfs,
    Inches,
    Mm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub unit: Option<Unit>,
}

impl Variable {
    pub fn new(name: impl Into<String>, unit: Option<Unit>) -> Self {
        Self {
            name: name.into(),
            unit,
        }
    }
}

/// A `T x m` matrix of daily observations.
///
/// Missing observations are carried as `NaN` between loading and gap
/// filling; every other module expects a dense series (see [`is_dense`]).
///
/// [`is_dense`]: MultivariateSeries::is_dense
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    dates: Vec<NaiveDate>,
    values: Array2<f64>,
    variables: Vec<Variable>,
    target_indices: Vec<usize>,
}

impl MultivariateSeries {
    pub fn new(
        dates: Vec<NaiveDate>,
        values: Array2<f64>,
        variables: Vec<Variable>,
        target_indices: Vec<usize>,
    ) -> Result<Self> {
        if values.nrows() != dates.len() {
            return Err(Error::InvalidSeries(format!(
                "{} value rows for {} dates",
                values.nrows(),
                dates.len()
            )));
        }
        if values.ncols() != variables.len() {
            return Err(Error::InvalidSeries(format!(
                "{} value columns for {} variables",
                values.ncols(),
                variables.len()
            )));
        }
        for (i, pair) in dates.windows(2).enumerate() {
            if (pair[1] - pair[0]).num_days() != 1 {
                return Err(Error::InvalidSeries(format!(
                    "dates must be consecutive days; {} is followed by {} at row {}",
                    pair[0],
                    pair[1],
                    i + 1
                )));
            }
        }
        let mut seen = vec![false; variables.len()];
        for &t in &target_indices {
            match seen.get_mut(t) {
                None => {
                    return Err(Error::InvalidSeries(format!(
                        "target index {t} out of range for {} variables",
                        variables.len()
                    )))
                }
                Some(true) => return Err(Error::InvalidSeries(format!("duplicate target index {t}"))),
                Some(flag) => *flag = true,
            }
        }
        Ok(Self {
            dates,
            values,
            variables,
            target_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn target_indices(&self) -> &[usize] {
        &self.target_indices
    }

    pub fn target_names(&self) -> Vec<&str> {
        self.target_indices
            .iter()
            .map(|&i| self.variables[i].name.as_str())
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    /// True when no `NaN` missing-markers remain.
    pub fn is_dense(&self) -> bool {
        self.values.iter().all(|v| !v.is_nan())
    }

    /// Replaces the target designation, validating the indices.
    pub fn with_targets(self, target_indices: Vec<usize>) -> Result<Self> {
        Self::new(self.dates, self.values, self.variables, target_indices)
    }

    /// Rebuilds the series with a transformed value matrix of the same shape.
    pub(crate) fn map_values(&self, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), self.values.dim());
        Self {
            dates: self.dates.clone(),
            values,
            variables: self.variables.clone(),
            target_indices: self.target_indices.clone(),
        }
    }
}

/// One sample: an `l x m` lookback followed by an `h x m` future.
///
/// `origin` is the absolute row index of the last lookback row in the
/// source series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub lookback: Array2<f64>,
    pub future: Array2<f64>,
    pub origin: usize,
}

impl WindowPair {
    pub fn lookback_len(&self) -> usize {
        self.lookback.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.future.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.lookback.ncols()
    }

    /// Absolute row index of the first lookback row.
    pub fn start(&self) -> usize {
        self.origin + 1 - self.lookback_len()
    }

    /// Absolute row index of the last future row.
    pub fn end(&self) -> usize {
        self.origin + self.horizon()
    }

    /// Whether the inclusive row extents of two samples intersect.
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start() <= end && start <= self.end()
    }
}

/// Slices the lookback rows `[origin-l+1, origin]` and the future rows
/// `[origin+1, origin+h]`.
pub fn window_at(series: &MultivariateSeries, origin: usize, lookback: usize, horizon: usize) -> Result<WindowPair> {
    window_from_values(series.values(), origin, lookback, horizon)
}

pub(crate) fn window_from_values(
    values: ArrayView2<'_, f64>,
    origin: usize,
    lookback: usize,
    horizon: usize,
) -> Result<WindowPair> {
    let len = values.nrows();
    let bounds = || Error::WindowBounds {
        origin,
        lookback,
        horizon,
        len,
    };
    if lookback == 0 || origin + 1 < lookback || origin + horizon >= len {
        return Err(bounds());
    }
    Ok(WindowPair {
        lookback: values.slice(s![origin + 1 - lookback..=origin, ..]).to_owned(),
        future: values.slice(s![origin + 1..=origin + horizon, ..]).to_owned(),
        origin,
    })
}

/// Z-normalizes each column with the population standard deviation.
/// Zero-variance columns map to zeros.
pub fn zscore_window(window: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = window.to_owned();
    let n = window.nrows() as f64;
    if window.nrows() == 0 {
        return out;
    }
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 0.0 && std.is_finite() {
            col.mapv_inplace(|v| (v - mean) / std);
        } else {
            col.fill(0.0);
        }
    }
    out
}
