//! Chronological splitting and the retrieval pool.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{window_from_values, MultivariateSeries, WindowPair};

/// Row spans produced by [`chronological_split`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    pub fn boundary(&self) -> usize {
        self.train.end
    }
}

/// Splits `len` rows at `floor(train_fraction * len)`.
pub fn chronological_split(len: usize, train_fraction: f64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if len < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to split, got {len}"
        )));
    }
    let boundary = (train_fraction * len as f64).floor() as usize;
    if boundary == 0 || boundary >= len {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} leaves an empty side for {len} rows"
        )));
    }
    Ok(Split {
        train: 0..boundary,
        test: boundary..len,
    })
}

/// Every window pair whose full extent lies in `span`, origins advancing by `stride`.
pub fn build_pairs(
    series: &MultivariateSeries,
    span: Range<usize>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowPair>> {
    if stride == 0 || lookback == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(
            "lookback, horizon and stride must all be at least 1".into(),
        ));
    }
    if span.end > series.len() {
        return Err(Error::InvalidArgument(format!(
            "span {span:?} exceeds series length {}",
            series.len()
        )));
    }
    let len = span.len();
    if len < lookback + horizon {
        return Err(Error::SpanTooShort {
            len,
            min: lookback + horizon,
        });
    }
    let view = series.values();
    (span.start + lookback - 1..span.end - horizon)
        .step_by(stride)
        .map(|origin| window_from_values(view, origin, lookback, horizon))
        .collect()
}

/// Which end of the base survives [`KnowledgeBase::restrict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetainPolicy {
    #[default]
    MostRecent,
    Oldest,
    /// Seeded uniform subset, kept in chronological order.
    Random,
}

/// The retrieval pool: window pairs drawn from the training span, ascending by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    samples: Vec<WindowPair>,
    lookback: usize,
    horizon: usize,
    n_vars: usize,
    source_span: Option<(NaiveDate, NaiveDate)>,
}

impl KnowledgeBase {
    /// Builds the pool from the rows of `split.train`.
    pub fn build(
        series: &MultivariateSeries,
        split: &Split,
        lookback: usize,
        horizon: usize,
        stride: usize,
    ) -> Result<Self> {
        let samples = build_pairs(series, split.train.clone(), lookback, horizon, stride)?;
        let dates = series.dates();
        Ok(Self {
            samples,
            lookback,
            horizon,
            n_vars: series.n_vars(),
            source_span: Some((dates[split.train.start], dates[split.train.end - 1])),
        })
    }

    pub fn from_samples(samples: Vec<WindowPair>, lookback: usize, horizon: usize, n_vars: usize) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.lookback.dim() != (lookback, n_vars) || s.future.dim() != (horizon, n_vars) {
                return Err(Error::Shape(format!(
                    "sample {i} has lookback {:?} and future {:?}, expected ({lookback}, {n_vars}) and ({horizon}, {n_vars})",
                    s.lookback.dim(),
                    s.future.dim()
                )));
            }
        }
        if samples.windows(2).any(|w| w[0].origin >= w[1].origin) {
            return Err(Error::InvalidArgument(
                "sample origins must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            samples,
            lookback,
            horizon,
            n_vars,
            source_span: None,
        })
    }

    pub fn samples(&self) -> &[WindowPair] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn source_span(&self) -> Option<(NaiveDate, NaiveDate)> {
        self.source_span
    }

    /// Keeps `ceil(d * coverage / train_fraction)` samples, where coverage is
    /// a fraction of the whole dataset.
    pub fn restrict(&self, coverage: f64, train_fraction: f64, policy: RetainPolicy) -> Result<Self> {
        self.restrict_seeded(coverage, train_fraction, policy, 0)
    }

    /// As [`restrict`](Self::restrict); `seed` only matters for [`RetainPolicy::Random`].
    /// A fixed seed keeps random restriction monotone in coverage.
    pub fn restrict_seeded(&self, coverage: f64, train_fraction: f64, policy: RetainPolicy, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&coverage) || coverage > train_fraction + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "coverage {coverage} must lie in [0, train fraction {train_fraction}]"
            )));
        }
        let d = self.samples.len();
        let keep = ((d as f64 * (coverage / train_fraction)).ceil() as usize).min(d);
        let samples = match policy {
            RetainPolicy::MostRecent => self.samples[d - keep..].to_vec(),
            RetainPolicy::Oldest => self.samples[..keep].to_vec(),
            RetainPolicy::Random => {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut order: Vec<usize> = (0..d).collect();
                order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let mut chosen = order[..keep].to_vec();
                chosen.sort_unstable();
                chosen.into_iter().map(|i| self.samples[i].clone()).collect()
            }
        };
        Ok(Self {
            samples,
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> Self {
        Self {
            samples: Vec::new(),
            lookback: self.lookback,
            horizon: self.horizon,
            n_vars: self.n_vars,
            source_span: self.source_span,
        }
    }

    /// Serializes as `RAFKB1`: magic, then `l, h, m, d` as little-endian u64,
    /// then `d` origins (u64), then each sample's lookback and future rows as
    /// row-major little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(KB_MAGIC)?;
        for v in [self.lookback, self.horizon, self.n_vars, self.samples.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for s in &self.samples {
            w.write_all(&(s.origin as u64).to_le_bytes())?;
        }
        for s in &self.samples {
            for v in s.lookback.iter().chain(s.future.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::KbFormat(format!("truncated or unreadable: {e}"));
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != KB_MAGIC {
            return Err(Error::KbFormat(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word).map_err(io)?;
            Ok(u64::from_le_bytes(word))
        };
        let l = next_u64(&mut r)? as usize;
        let h = next_u64(&mut r)? as usize;
        let m = next_u64(&mut r)? as usize;
        let d = next_u64(&mut r)? as usize;
        let origins = (0..d)
            .map(|_| next_u64(&mut r).map(|o| o as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut samples = Vec::with_capacity(d);
        let mut buf = vec![0u8; (l + h) * m * 8];
        for origin in origins {
            r.read_exact(&mut buf).map_err(io)?;
            let vals: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let (lb, fu) = vals.split_at(l * m);
            samples.push(WindowPair {
                lookback: Array2::from_shape_vec((l, m), lb.to_vec()).expect("sized"),
                future: Array2::from_shape_vec((h, m), fu.to_vec()).expect("sized"),
                origin,
            });
        }
        Self::from_samples(samples, l, h, m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

const KB_MAGIC: &[u8; 6] = b"RAFKB1";

/// Test queries: every pair whose future rows fall inside the test span.
/// Lookbacks may reach back into the training span.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub samples: Vec<WindowPair>,
    pub lookback: usize,
    pub horizon: usize,
}

impl TestSet {
    pub fn build(series: &MultivariateSeries, split: &Split, lookback: usize, horizon: usize) -> Result<Self> {
        let first_origin = (split.test.start - 1).max(lookback - 1);
        if split.test.end < horizon + 1 || first_origin + horizon >= split.test.end {
            return Err(Error::SpanTooShort {
                len: split.test.len(),
                min: horizon + 1,
            });
        }
        let view = series.values();
        let samples = (first_origin..split.test.end - horizon)
            .map(|o| window_from_values(view, o, lookback, horizon))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            lookback,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
