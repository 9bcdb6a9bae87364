//! Seeded synthetic hydrology-like benchmark: seasonal sinusoids with
//! recurring 30-day anomaly episodes drawn from a few fixed templates.

use std::f64::consts::PI;

use chrono::NaiveDate;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{MultivariateSeries, Unit, Variable};

/// Target columns, named after the default experiment stations.
pub const STATION_NAMES: [&str; 5] = ["NP205", "P33", "G620", "NESRS1", "NESRS2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub days: usize,
    pub seed: u64,
    pub start: NaiveDate,
    pub episode_len: usize,
    pub templates: usize,
    /// Inclusive range of days between consecutive episode starts.
    pub gap: (usize, usize),
    pub noise_sd: f64,
    /// Range of per-variable annual amplitudes.
    pub seasonal_amplitude: (f64, f64),
    /// Peak scale of the episode templates.
    pub episode_amplitude: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            days: 1538,
            seed: 7,
            start: NaiveDate::from_ymd_opt(2020, 10, 16).expect("valid date"),
            episode_len: 30,
            templates: 3,
            gap: (35, 70),
            noise_sd: 0.02,
            seasonal_amplitude: (0.2, 0.4),
            episode_amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Episode {
    pub start: usize,
    pub template: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub series: MultivariateSeries,
    pub episodes: Vec<Episode>,
}

/// Unit-amplitude shape of template `j` at day `t` of an episode.
fn template_shape(j: usize, t: f64, len: f64) -> f64 {
    match j % 3 {
        // sharp rise, slow recession
        0 => (1.0 - (-t / 2.0).exp()) * (-t / 7.0).exp() * 1.9,
        // slow drawdown and recovery
        1 => -(PI * t / len).sin(),
        // damped oscillation
        _ => (2.0 * PI * t / 12.0).sin() * (-t / 10.0).exp(),
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    if config.days < 2
        || config.episode_len == 0
        || config.templates == 0
        || config.gap.0 == 0
        || config.gap.0 > config.gap.1
    {
        return Err(Error::Config(format!("invalid synthetic configuration {config:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let variables: Vec<Variable> = STATION_NAMES
        .iter()
        .map(|n| Variable::new(*n, Some(Unit::Ft)))
        .chain([
            Variable::new("RAIN", Some(Unit::Inches)),
            Variable::new("PET", Some(Unit::Mm)),
            Variable::new("FLOW", Some(Unit::Cfs)),
        ])
        .collect();
    let m = variables.len();

    let base: Vec<f64> = (0..m).map(|v| if v < 5 { 2.0 + 0.4 * v as f64 } else { 5.0 }).collect();
    let amp: Vec<f64> = (0..m)
        .map(|_| rng.random_range(config.seasonal_amplitude.0..=config.seasonal_amplitude.1))
        .collect();
    let phase: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.6)).collect();
    // per-template, per-variable gains; stations respond coherently
    let gains: Vec<Vec<f64>> = (0..config.templates)
        .map(|_| {
            (0..m)
                .map(|v| {
                    if v < 5 {
                        rng.random_range(0.9..1.3)
                    } else {
                        rng.random_range(0.5..1.5)
                    }
                })
                .collect()
        })
        .collect();

    let days = config.days;
    let year = 365.25;
    let mut values = Array2::<f64>::zeros((days, m));
    let noise = Normal::new(0.0, config.noise_sd.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    for v in 0..m {
        let mut ar = 0.0;
        for t in 0..days {
            let w = 2.0 * PI * t as f64 / year;
            ar = 0.8 * ar + noise.sample(&mut rng);
            values[[t, v]] = base[v] + amp[v] * (w + 2.0 * PI * phase[v]).sin() + 0.3 * amp[v] * (2.0 * w).cos() + ar;
        }
    }

    let mut episodes = Vec::new();
    let mut start = rng.random_range(config.gap.0..=config.gap.1);
    while start + config.episode_len <= days {
        let template = rng.random_range(0..config.templates);
        let scale = config.episode_amplitude * rng.random_range(0.85..1.15);
        for d in 0..config.episode_len {
            let s = template_shape(template, d as f64, config.episode_len as f64);
            for v in 0..m {
                values[[start + d, v]] += scale * gains[template][v] * s;
            }
        }
        episodes.push(Episode { start, template });
        start += config.episode_len + rng.random_range(config.gap.0..=config.gap.1);
    }

    let dates = config.start.iter_days().take(days).collect();
    let series = MultivariateSeries::new(dates, values, variables, (0..STATION_NAMES.len()).collect())?;
    Ok(SyntheticDataset { series, episodes })
}
