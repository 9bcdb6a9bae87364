//! Histogram plug-in entropy and mutual information on raw windows.

use ndarray::{ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Sturges' rule: `ceil(log2 n) + 1`.
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    (n as f64).log2().ceil() as usize + 1
}

#[inline]
fn bin_of(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let idx = ((x - lo) / (hi - lo) * bins as f64).floor();
    if idx <= 0.0 {
        0
    } else {
        (idx as usize).min(bins - 1)
    }
}

/// `-sum p ln p` over the given counts; zero counts contribute nothing.
/// Callers pass counts in ascending order so that equal multisets of counts
/// give bit-identical entropies (a constant partner then yields MI exactly 0).
fn entropy_of_counts<'a>(counts: impl IntoIterator<Item = &'a u32>, total: usize) -> f64 {
    let n = total as f64;
    -counts
        .into_iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Equal-width histogram entropy in nats over `[lo, hi]`; `hi` falls in the last bin.
pub fn entropy_histogram(samples: &[f64], bins: usize, range: (f64, f64)) -> Result<f64> {
    let (lo, hi) = range;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("entropy of an empty sample".into()));
    }
    if bins == 0 || lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "need bins >= 1 and lo <= hi, got {bins}, [{lo}, {hi}]"
        )));
    }
    if let Some(x) = samples.iter().find(|&&x| !(lo..=hi).contains(&x)) {
        return Err(Error::InvalidArgument(format!("sample {x} outside [{lo}, {hi}]")));
    }
    let mut counts = vec![0u32; bins];
    for &x in samples {
        counts[bin_of(x, lo, hi, bins)] += 1;
    }
    counts.sort_unstable();
    Ok(entropy_of_counts(&counts, samples.len()))
}

/// Per-column bin assignment of one window, with cached marginal entropies.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedWindow {
    bins: usize,
    rows: usize,
    /// column-major bin indices
    codes: Vec<Vec<u16>>,
    marginal: Vec<f64>,
}

impl BinnedWindow {
    pub fn new(window: ArrayView2<'_, f64>, bins: usize) -> Result<Self> {
        if bins == 0 || bins > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("bin count {bins} out of range")));
        }
        let rows = window.nrows();
        let mut codes = Vec::with_capacity(window.ncols());
        let mut marginal = Vec::with_capacity(window.ncols());
        for col in window.axis_iter(Axis(1)) {
            let (c, h) = bin_column(col, bins);
            codes.push(c);
            marginal.push(h);
        }
        Ok(Self {
            bins,
            rows,
            codes,
            marginal,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.codes.len()
    }

    pub fn marginal_entropies(&self) -> &[f64] {
        &self.marginal
    }

    /// Mean over variables of `max(0, H(A) + H(B) - H(A, B))`.
    pub fn mutual_information(&self, other: &BinnedWindow) -> Result<f64> {
        if self.rows != other.rows || self.n_vars() != other.n_vars() || self.bins != other.bins {
            return Err(Error::Shape(format!(
                "binned windows differ: {}x{} ({} bins) vs {}x{} ({} bins)",
                self.rows,
                self.n_vars(),
                self.bins,
                other.rows,
                other.n_vars(),
                other.bins
            )));
        }
        if self.n_vars() == 0 {
            return Ok(0.0);
        }
        let b = self.bins;
        let mut joint = vec![0u32; b * b];
        let mut nonzero: Vec<u32> = Vec::with_capacity(self.rows);
        let mut total = 0.0;
        for v in 0..self.n_vars() {
            joint.iter_mut().for_each(|c| *c = 0);
            for (&x, &y) in self.codes[v].iter().zip(&other.codes[v]) {
                joint[x as usize * b + y as usize] += 1;
            }
            nonzero.clear();
            nonzero.extend(joint.iter().copied().filter(|&c| c > 0));
            nonzero.sort_unstable();
            let h_joint = entropy_of_counts(&nonzero, self.rows);
            let mi = self.marginal[v] + other.marginal[v] - h_joint;
            total += mi.max(0.0);
        }
        Ok(total / self.n_vars() as f64)
    }
}

fn bin_column(col: ArrayView1<'_, f64>, bins: usize) -> (Vec<u16>, f64) {
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0u32; bins];
    let codes = col
        .iter()
        .map(|&x| {
            let c = bin_of(x, lo, hi, bins);
            counts[c] += 1;
            c as u16
        })
        .collect();
    counts.sort_unstable();
    (codes, entropy_of_counts(&counts, col.len()))
}

/// Histogram mutual information between aligned timesteps of two windows,
/// averaged over variables. Higher is better.
pub fn score_mutual_information(
    query: ArrayView2<'_, f64>,
    candidate: ArrayView2<'_, f64>,
    bins: usize,
) -> Result<f64> {
    if query.dim() != candidate.dim() {
        return Err(Error::Shape(format!(
            "query {:?} and candidate {:?} differ",
            query.dim(),
            candidate.dim()
        )));
    }
    if query.nrows() < 2 {
        return Err(Error::InvalidArgument(
            "mutual information needs at least 2 timesteps".into(),
        ));
    }
    let a = BinnedWindow::new(candidate, bins)?;
    let b = BinnedWindow::new(query, bins)?;
    a.mutual_information(&b)
}
