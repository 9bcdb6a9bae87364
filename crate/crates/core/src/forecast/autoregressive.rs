//! Per-channel ridge autoregression with recursive multi-step rollout.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use super::{ForecastRequest, ForecastResult, Forecaster};
use crate::error::{Error, Result};

/// Fitted `y_t = intercept + sum_j coefficients[j] * y_{t-1-j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl ArFit {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_next(&self, history: &[f64]) -> f64 {
        let p = self.order();
        let lags = &history[history.len() - p..];
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(lags.iter().rev())
                .map(|(b, y)| b * y)
                .sum::<f64>()
    }

    /// Feeds each prediction back as the newest lag.
    pub fn roll_forward(&self, history: &[f64], steps: usize) -> Vec<f64> {
        let p = self.order();
        let mut window: Vec<f64> = history[history.len() - p..].to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = self.predict_next(&window);
            out.push(next);
            window.remove(0);
            window.push(next);
        }
        out
    }
}

/// Least squares with an unpenalized intercept and `ridge * |beta|^2` on the
/// lag coefficients, solved through centered normal equations.
pub fn fit_autoregression(y: &[f64], order: usize, ridge: f64) -> Result<ArFit> {
    if order == 0 {
        return Err(Error::InvalidArgument("AR order must be at least 1".into()));
    }
    if ridge.is_nan() || ridge < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "ridge damping must be >= 0, got {ridge}"
        )));
    }
    let min = 2 * order + 1;
    if y.len() < min {
        return Err(Error::InsufficientRows { min, got: y.len() });
    }
    let n = y.len() - order;
    let lag = |t: usize, j: usize| y[t - 1 - j];

    let targets = &y[order..];
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    let x_mean: Vec<f64> = (0..order)
        .map(|j| (order..y.len()).map(|t| lag(t, j)).sum::<f64>() / n as f64)
        .collect();

    let mut gram = DMatrix::<f64>::zeros(order, order);
    let mut rhs = DVector::<f64>::zeros(order);
    for (t, &yt) in y.iter().enumerate().skip(order) {
        let yc = yt - y_mean;
        for a in 0..order {
            let xa = lag(t, a) - x_mean[a];
            rhs[a] += xa * yc;
            for b in a..order {
                gram[(a, b)] += xa * (lag(t, b) - x_mean[b]);
            }
        }
    }
    for a in 0..order {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let scale = (0..order).map(|a| gram[(a, a)]).fold(0.0, f64::max);
    for a in 0..order {
        gram[(a, a)] += ridge;
    }
    let chol = gram.clone().cholesky().ok_or(Error::Singular)?;
    if ridge == 0.0 {
        let min_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d * d)
            .fold(f64::INFINITY, f64::min);
        if min_pivot.is_nan() || min_pivot <= 1e-12 * scale {
            return Err(Error::Singular);
        }
    }
    let beta = chol.solve(&rhs);
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(ArFit {
        intercept,
        coefficients: beta.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct Autoregressive {
    order: usize,
    ridge: f64,
}

impl Autoregressive {
    pub fn new(order: usize, ridge: f64) -> Self {
        Self { order, ridge }
    }
}

impl Forecaster for Autoregressive {
    fn id(&self) -> String {
        format!("ar(p={};lambda={})", self.order, self.ridge)
    }

    fn forecast(&self, request: &ForecastRequest) -> Result<ForecastResult> {
        request.validate()?;
        let n = request.target_indices.len();
        let mut values = Array2::zeros((request.horizon, n));
        for (j, &t) in request.target_indices.iter().enumerate() {
            let y: Vec<f64> = request.context.column(t).to_vec();
            let fit = fit_autoregression(&y, self.order, self.ridge)?;
            for (i, v) in fit.roll_forward(&y, request.horizon).into_iter().enumerate() {
                values[[i, j]] = v;
            }
        }
        Ok(ForecastResult {
            values,
            forecaster_id: self.id(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recurrence(n: usize) -> Vec<f64> {
        let mut y = vec![0.0];
        for _ in 1..n {
            let prev = *y.last().unwrap();
            y.push(0.5 * prev + 1.0);
        }
        y
    }

    #[test]
    fn recovers_linear_recurrence() {
        let y = recurrence(50);
        let fit = fit_autoregression(&y, 1, 0.0).unwrap();
        assert!((fit.coefficients[0] - 0.5).abs() < 1e-8);
        assert!((fit.intercept - 1.0).abs() < 1e-8);
        let ahead = fit.roll_forward(&y, 5);
        let mut truth = *y.last().unwrap();
        for v in ahead {
            truth = 0.5 * truth + 1.0;
            assert!((v - truth).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_context_forecasts_constant() {
        let y = vec![3.25; 30];
        let fit = fit_autoregression(&y, 3, 1e-3).unwrap();
        assert!(fit.roll_forward(&y, 10).iter().all(|v| (v - 3.25).abs() < 1e-12));
        assert!(matches!(fit_autoregression(&y, 3, 0.0), Err(Error::Singular)));
    }

    #[test]
    fn heavy_ridge_shrinks_to_target_mean() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 + 0.1 * i as f64).collect();
        let p = 2;
        let fit = fit_autoregression(&y, p, 1e9).unwrap();
        assert!(fit.coefficients.iter().all(|b| b.abs() < 1e-3));
        let mean = y[p..].iter().sum::<f64>() / (y.len() - p) as f64;
        for v in fit.roll_forward(&y, 4) {
            assert!((v - mean).abs() < 1e-3);
        }
    }

    #[test]
    fn too_few_rows() {
        match fit_autoregression(&[1.0, 2.0, 3.0, 4.0], 2, 0.1) {
            Err(Error::InsufficientRows { min, got }) => assert_eq!((min, got), (5, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn forecaster_is_deterministic_and_per_column() {
        let ctx = Array2::from_shape_fn((40, 3), |(r, c)| ((r * (c + 2)) % 7) as f64 + c as f64);
        let req = ForecastRequest::new(ctx, 6, vec![2, 0]).unwrap();
        let ar = Autoregressive::new(3, 0.01);
        let a = ar.forecast(&req).unwrap();
        let b = ar.forecast(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.dim(), (6, 2));
        let col2 = fit_autoregression(&req.context.column(2).to_vec(), 3, 0.01).unwrap();
        assert_eq!(
            a.values.column(0).to_vec(),
            col2.roll_forward(&req.context.column(2).to_vec(), 6)
        );
    }
}
