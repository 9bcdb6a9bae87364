//! Combining retrieved contexts with the query lookback.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::ContextSet;
use crate::series::WindowPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Average the contexts, then prepend the average.
    A,
    /// Prepend each context separately, average the resulting forecasts.
    B,
    /// Prepend all contexts, best-ranked first.
    C,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::A => "a",
            Strategy::B => "b",
            Strategy::C => "c",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Strategy::A),
            "b" => Ok(Strategy::B),
            "c" => Ok(Strategy::C),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected a, b or c)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentLabel {
    ContextLookback,
    ContextFuture,
    QueryLookback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub label: SegmentLabel,
    pub rows: Range<usize>,
}

/// Forecaster input with the provenance of each row span.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedInput {
    pub matrix: Array2<f64>,
    pub segments: Vec<Segment>,
    pub strategy: Strategy,
}

impl AugmentedInput {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `[lookback; future]`.
pub fn flatten_context(pair: &WindowPair) -> Array2<f64> {
    concatenate(Axis(0), &[pair.lookback.view(), pair.future.view()]).expect("lookback and future share width")
}

fn check_shapes(contexts: &ContextSet, query: ArrayView2<'_, f64>) -> Result<(usize, usize)> {
    let first = contexts
        .entries
        .first()
        .ok_or_else(|| Error::InvalidArgument("augmentation needs at least one context".into()))?;
    let (l, h) = (first.pair.lookback_len(), first.pair.horizon());
    let m = query.ncols();
    for (i, e) in contexts.entries.iter().enumerate() {
        if e.pair.lookback.dim() != (l, m) || e.pair.future.dim() != (h, m) {
            return Err(Error::Shape(format!(
                "context {i} has lookback {:?} and future {:?}, expected ({l}, {m}) and ({h}, {m})",
                e.pair.lookback.dim(),
                e.pair.future.dim()
            )));
        }
    }
    Ok((l, h))
}

fn assemble(blocks: &[ArrayView2<'_, f64>], lookback: usize, horizon: usize, strategy: Strategy) -> AugmentedInput {
    let matrix = concatenate(Axis(0), blocks).expect("validated widths");
    let n_ctx = blocks.len() - 1;
    let mut segments = Vec::with_capacity(2 * n_ctx + 1);
    let mut row = 0;
    for _ in 0..n_ctx {
        segments.push(Segment {
            label: SegmentLabel::ContextLookback,
            rows: row..row + lookback,
        });
        segments.push(Segment {
            label: SegmentLabel::ContextFuture,
            rows: row + lookback..row + lookback + horizon,
        });
        row += lookback + horizon;
    }
    let q = blocks[n_ctx].nrows();
    segments.push(Segment {
        label: SegmentLabel::QueryLookback,
        rows: row..row + q,
    });
    AugmentedInput {
        matrix,
        segments,
        strategy,
    }
}

/// `[mean(contexts); query]`.
pub fn augment_strategy_a(contexts: &ContextSet, query: ArrayView2<'_, f64>) -> Result<AugmentedInput> {
    let (l, h) = check_shapes(contexts, query)?;
    let mut pairs = contexts.pairs();
    let mut sum = flatten_context(pairs.next().expect("checked non-empty"));
    for pair in pairs {
        sum += &flatten_context(pair);
    }
    let mean = sum / contexts.len() as f64;
    Ok(assemble(&[mean.view(), query], l, h, Strategy::A))
}

/// One `[context_z; query]` per context.
pub fn augment_strategy_b(contexts: &ContextSet, query: ArrayView2<'_, f64>) -> Result<Vec<AugmentedInput>> {
    let (l, h) = check_shapes(contexts, query)?;
    Ok(contexts
        .pairs()
        .map(|pair| {
            let flat = flatten_context(pair);
            assemble(&[flat.view(), query], l, h, Strategy::B)
        })
        .collect())
}

/// `[context_1; ...; context_k; query]` in ranked order. With `max_rows`,
/// the worst-ranked contexts are dropped until the input fits.
pub fn augment_strategy_c(
    contexts: &ContextSet,
    query: ArrayView2<'_, f64>,
    max_rows: Option<usize>,
) -> Result<AugmentedInput> {
    let (l, h) = check_shapes(contexts, query)?;
    let q = query.nrows();
    let mut keep = contexts.len();
    if let Some(max) = max_rows {
        if max < q {
            return Err(Error::InvalidArgument(format!(
                "max_rows {max} cannot hold the {q}-row query lookback"
            )));
        }
        keep = keep.min((max - q) / (l + h));
    }
    let flats: Vec<Array2<f64>> = contexts.pairs().take(keep).map(flatten_context).collect();
    let mut blocks: Vec<ArrayView2<'_, f64>> = flats.iter().map(|f| f.view()).collect();
    blocks.push(query);
    Ok(assemble(&blocks, l, h, Strategy::C))
}

/// Pointwise mean of equally shaped matrices.
pub fn average_forecasts(forecasts: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = forecasts
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to average".into()))?;
    let mut sum = first.clone();
    for f in &forecasts[1..] {
        if f.dim() != first.dim() {
            return Err(Error::Shape(format!(
                "forecast {:?} differs from {:?}",
                f.dim(),
                first.dim()
            )));
        }
        sum += f;
    }
    Ok(sum / forecasts.len() as f64)
}
