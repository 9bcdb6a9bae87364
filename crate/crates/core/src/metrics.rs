//! MAE, RMSE, SEDI and Pearson correlation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultivariateSeries;

pub const DEFAULT_SEDI_LOW: f64 = 0.1;
pub const DEFAULT_SEDI_HIGH: f64 = 0.9;

fn paired(truth: &[f64], pred: &[f64]) -> Result<usize> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "truth has {} values, prediction {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("metrics need at least one value".into()));
    }
    Ok(truth.len())
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let n = paired(truth, pred)?;
    Ok(truth.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / n as f64)
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let n = paired(truth, pred)?;
    Ok((truth.iter().zip(pred).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / n as f64).sqrt())
}

/// Empirical quantile, linear between order statistics at position `(N-1) p`.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("quantile level {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SediThresholds {
    pub low: f64,
    pub high: f64,
    pub p_low: f64,
    pub p_high: f64,
}

pub const MIN_SEDI_SAMPLES: usize = 10;

pub fn sedi_thresholds(truth: &[f64], p_low: f64, p_high: f64) -> Result<SediThresholds> {
    if truth.len() < MIN_SEDI_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "SEDI thresholds need at least {MIN_SEDI_SAMPLES} samples, got {}",
            truth.len()
        )));
    }
    if !(0.0 < p_low && p_low < p_high && p_high < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < p_low < p_high < 1, got {p_low}, {p_high}"
        )));
    }
    Ok(SediThresholds {
        low: quantile(truth, p_low)?,
        high: quantile(truth, p_high)?,
        p_low,
        p_high,
    })
}

/// Share of true extremes that the forecast places on the same side of the
/// same threshold. `None` when the truth has no extremes.
pub fn sedi(truth: &[f64], pred: &[f64], thresholds: &SediThresholds) -> Result<Option<f64>> {
    paired(truth, pred)?;
    let (lo, hi) = (thresholds.low, thresholds.high);
    let mut hits = 0usize;
    let mut extremes = 0usize;
    for (&y, &p) in truth.iter().zip(pred) {
        if y < lo {
            extremes += 1;
            hits += usize::from(p < lo);
        } else if y > hi {
            extremes += 1;
            hits += usize::from(p > hi);
        }
    }
    Ok((extremes > 0).then(|| hits as f64 / extremes as f64))
}

/// Pearson correlation matrix; undefined entries (constant columns) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn correlation_matrix(series: &MultivariateSeries, columns: &[usize]) -> Result<CorrelationMatrix> {
    if series.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 rows".into()));
    }
    if let Some(&c) = columns.iter().find(|&&c| c >= series.n_vars()) {
        return Err(Error::InvalidArgument(format!("column {c} out of range")));
    }
    let cols: Vec<Vec<f64>> = columns.iter().map(|&c| series.values().column(c).to_vec()).collect();
    let constant: Vec<bool> = cols.iter().map(|c| pearson(c, c).is_none()).collect();
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = if constant[i] || constant[j] {
                None
            } else if i == j {
                Some(1.0)
            } else {
                pearson(&cols[i], &cols[j])
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        columns: columns.iter().map(|&c| series.variables()[c].name.clone()).collect(),
        values,
    })
}

/// Per-station metrics for one evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationScore {
    pub mae: f64,
    pub rmse: f64,
    pub sedi: Option<f64>,
    pub n_samples: usize,
}

/// Scores each target column of stacked `truth`/`pred` matrices. SEDI
/// thresholds come from that column's truth values.
pub fn score_columns(truth: &Array2<f64>, pred: &Array2<f64>, p_low: f64, p_high: f64) -> Result<Vec<StationScore>> {
    if truth.dim() != pred.dim() {
        return Err(Error::Shape(format!(
            "truth {:?} vs prediction {:?}",
            truth.dim(),
            pred.dim()
        )));
    }
    (0..truth.ncols())
        .map(|c| {
            let y = truth.column(c).to_vec();
            let p = pred.column(c).to_vec();
            let sedi = match sedi_thresholds(&y, p_low, p_high) {
                Ok(th) => sedi(&y, &p, &th)?,
                Err(_) => None,
            };
            Ok(StationScore {
                mae: mae(&y, &p)?,
                rmse: rmse(&y, &p)?,
                sedi,
                n_samples: y.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Variable;
    use chrono::NaiveDate;

    #[test]
    fn mae_rmse_hand_values() {
        assert_eq!(mae(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!((mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((rmse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((mae(&[1.0, 5.0], &[1.5, 5.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn quantile_convention() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        assert!((quantile(&v, 0.5).unwrap() - 4.5).abs() < 1e-12);
        assert!((quantile(&v, 0.1).unwrap() - 0.9).abs() < 1e-12);
        let th = sedi_thresholds(&v, DEFAULT_SEDI_LOW, DEFAULT_SEDI_HIGH).unwrap();
        assert!((th.high - 8.1).abs() < 1e-12);
        assert!(sedi_thresholds(&v[..9], 0.1, 0.9).is_err());
        assert!(sedi_thresholds(&v, 0.9, 0.1).is_err());
    }

    #[test]
    fn sedi_hand_count() {
        let th = SediThresholds {
            low: 1.5,
            high: 8.5,
            p_low: 0.1,
            p_high: 0.9,
        };
        let s = sedi(&[0.0, 1.0, 5.0, 9.0, 10.0], &[0.0, 5.0, 5.0, 5.0, 10.0], &th).unwrap();
        assert_eq!(s, Some(0.5));
        assert_eq!(sedi(&[5.0, 6.0], &[0.0, 10.0], &th).unwrap(), None);
    }

    #[test]
    fn sedi_perfect_and_flat() {
        let y: Vec<f64> = (0..50).map(|i| ((i * 17) % 23) as f64).collect();
        let th = sedi_thresholds(&y, 0.1, 0.9).unwrap();
        assert_eq!(sedi(&y, &y, &th).unwrap(), Some(1.0));
        let med = quantile(&y, 0.5).unwrap();
        assert_eq!(sedi(&y, &vec![med; y.len()], &th).unwrap(), Some(0.0));
    }

    fn series(cols: Vec<Vec<f64>>) -> MultivariateSeries {
        let t = cols[0].len();
        let d = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let values = Array2::from_shape_fn((t, cols.len()), |(r, c)| cols[c][r]);
        let vars = (0..cols.len()).map(|c| Variable::new(format!("c{c}"), None)).collect();
        MultivariateSeries::new(d.iter_days().take(t).collect(), values, vars, vec![]).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let s = series(vec![
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, 4.0],
            vec![-1.0, -2.0, -3.0],
            vec![7.0, 7.0, 7.0],
        ]);
        let c = correlation_matrix(&s, &[0, 1, 2, 3]).unwrap();
        assert_eq!(c.values[0][0], Some(1.0));
        let r = c.values[0][1].unwrap();
        // hand: cov = 3, var_a = 2, var_b = 14/3
        assert!((r - 3.0 / (2.0f64 * 14.0 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.9820).abs() < 1e-4);
        assert!((c.values[0][2].unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(c.values[3][3], None);
        assert_eq!(c.values[0][3], None);
        assert_eq!(c.values[1][0], c.values[0][1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (1usize..40).prop_flat_map(|n| {
                (
                    proptest::collection::vec(-100.0f64..100.0, n),
                    proptest::collection::vec(-100.0f64..100.0, n),
                )
            })
        }

        proptest! {
            #[test]
            fn rmse_dominates_mae((y, p) in pairs()) {
                prop_assert!(rmse(&y, &p).unwrap() + 1e-12 >= mae(&y, &p).unwrap());
            }

            #[test]
            fn translation_and_scale((y, p) in pairs(), c in -50.0f64..50.0, a in 0.1f64..10.0) {
                let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
                let scale = |v: &[f64]| v.iter().map(|x| x * a).collect::<Vec<_>>();
                let base = mae(&y, &p).unwrap();
                prop_assert!((mae(&shift(&y), &shift(&p)).unwrap() - base).abs() < 1e-9);
                prop_assert!((mae(&scale(&y), &scale(&p)).unwrap() - a * base).abs() < 1e-9 * (1.0 + a * base));
                let r = rmse(&y, &p).unwrap();
                prop_assert!((rmse(&scale(&y), &scale(&p)).unwrap() - a * r).abs() < 1e-9 * (1.0 + a * r));
            }

            #[test]
            fn sedi_fixing_a_miss_never_hurts(y in proptest::collection::vec(-10.0f64..10.0, 10..60), p in proptest::collection::vec(-10.0f64..10.0, 60)) {
                let p = &p[..y.len()];
                let th = sedi_thresholds(&y, 0.1, 0.9).unwrap();
                if let Some(before) = sedi(&y, p, &th).unwrap() {
                    prop_assert!((0.0..=1.0).contains(&before));
                    let mut fixed = p.to_vec();
                    if let Some(i) = (0..y.len()).find(|&i| (y[i] < th.low && p[i] >= th.low) || (y[i] > th.high && p[i] <= th.high)) {
                        fixed[i] = y[i];
                    }
                    prop_assert!(sedi(&y, &fixed, &th).unwrap().unwrap() >= before);
                }
            }
        }
    }
}
