use ndarray::Array2;

use super::{target_row, ForecastRequest, ForecastResult, Forecaster};
use crate::error::Result;

/// Repeats the last context row's targets.
#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

impl Forecaster for Persistence {
    fn id(&self) -> String {
        "persistence".into()
    }

    fn forecast(&self, request: &ForecastRequest) -> Result<ForecastResult> {
        request.validate()?;
        let last = target_row(request, request.context.nrows() - 1);
        let n = last.len();
        let values = Array2::from_shape_fn((request.horizon, n), |(_, j)| last[j]);
        Ok(ForecastResult {
            values,
            forecaster_id: self.id(),
        })
    }
}

/// Step `i` copies the row `s` days earlier in the cycle; falls back to
/// persistence when the context is shorter than one period.
#[derive(Debug, Clone, Copy)]
pub struct SeasonalNaive {
    period: usize,
}

impl SeasonalNaive {
    pub fn new(period: usize) -> Self {
        Self { period: period.max(1) }
    }
}

impl Forecaster for SeasonalNaive {
    fn id(&self) -> String {
        format!("seasonal-naive(s={})", self.period)
    }

    fn forecast(&self, request: &ForecastRequest) -> Result<ForecastResult> {
        request.validate()?;
        let rows = request.context.nrows();
        if rows < self.period {
            let mut res = Persistence.forecast(request)?;
            res.forecaster_id = format!("{}+fallback:persistence", self.id());
            return Ok(res);
        }
        let n = request.target_indices.len();
        let mut values = Array2::zeros((request.horizon, n));
        for i in 0..request.horizon {
            let src = rows - self.period + (i % self.period);
            for (j, &t) in request.target_indices.iter().enumerate() {
                values[[i, j]] = request.context[[src, t]];
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
    use ndarray::array;

    fn request(context: Array2<f64>, h: usize, targets: Vec<usize>) -> ForecastRequest {
        ForecastRequest::new(context, h, targets).unwrap()
    }

    #[test]
    fn persistence_repeats_last_row() {
        let r = request(array![[1.0, 0.0, 2.0], [5.1, 9.9, 4.2]], 3, vec![0, 2]);
        let f = Persistence.forecast(&r).unwrap();
        assert_eq!(f.values, array![[5.1, 4.2], [5.1, 4.2], [5.1, 4.2]]);
        let single = request(array![[3.0, 4.0]], 1, vec![1]);
        assert_eq!(Persistence.forecast(&single).unwrap().values, array![[4.0]]);
    }

    #[test]
    fn seasonal_offsets() {
        let ctx = Array2::from_shape_fn((10, 1), |(r, _)| r as f64);
        let f = SeasonalNaive::new(7)
            .forecast(&request(ctx.clone(), 2, vec![0]))
            .unwrap();
        assert_eq!(f.values, array![[3.0], [4.0]]);
        // wraps after one period
        let f = SeasonalNaive::new(3)
            .forecast(&request(ctx.clone(), 5, vec![0]))
            .unwrap();
        assert_eq!(f.values.column(0).to_vec(), vec![7.0, 8.0, 9.0, 7.0, 8.0]);
        let s1 = SeasonalNaive::new(1)
            .forecast(&request(ctx.clone(), 4, vec![0]))
            .unwrap();
        assert_eq!(
            s1.values,
            Persistence.forecast(&request(ctx, 4, vec![0])).unwrap().values
        );
    }

    #[test]
    fn seasonal_short_context_falls_back() {
        let ctx = Array2::from_shape_fn((5, 1), |(r, _)| r as f64);
        let f = SeasonalNaive::new(7).forecast(&request(ctx, 2, vec![0])).unwrap();
        assert_eq!(f.values, array![[4.0], [4.0]]);
        assert!(f.forecaster_id.contains("fallback"));
    }
}
