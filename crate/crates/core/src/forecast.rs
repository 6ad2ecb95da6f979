//! In-sample fitted values and trend extrapolation.

use serde::{Deserialize, Serialize};

use crate::ingest::UserSeries;
use crate::trendfit::{eval_trend, TrendModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub user_id: String,
    pub times: Vec<f64>,
    /// Predicted minutes; not clamped at zero.
    pub yhat: Vec<f64>,
    /// First period index that lies beyond the training window.
    pub horizon_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("series has {got} periods but the model was trained on {expected}")]
pub struct LengthMismatch {
    pub expected: usize,
    pub got: usize,
}

pub fn predict_in_sample(
    model: &TrendModel,
    series: &UserSeries,
) -> Result<ForecastSeries, LengthMismatch> {
    if series.len() != model.n_train {
        return Err(LengthMismatch {
            expected: model.n_train,
            got: series.len(),
        });
    }
    let times = series.times();
    let yhat = times.iter().map(|&t| eval_trend(model, t)).collect();
    Ok(ForecastSeries {
        user_id: model.user_id.clone(),
        times,
        yhat,
        horizon_start: model.n_train,
    })
}

/// Extrapolates `horizon` periods past the training window with the final
/// slope. An empty horizon yields an empty series.
pub fn forecast_future(model: &TrendModel, horizon: usize) -> ForecastSeries {
    let times: Vec<f64> = (model.n_train..model.n_train + horizon)
        .map(|t| t as f64)
        .collect();
    let yhat = times.iter().map(|&t| eval_trend(model, t)).collect();
    ForecastSeries {
        user_id: model.user_id.clone(),
        times,
        yhat,
        horizon_start: model.n_train,
    }
}

/// In-sample values followed by `horizon` extrapolated periods.
pub fn predict_through(
    model: &TrendModel,
    series: &UserSeries,
    horizon: usize,
) -> Result<ForecastSeries, LengthMismatch> {
    let mut out = predict_in_sample(model, series)?;
    let future = forecast_future(model, horizon);
    out.times.extend(future.times);
    out.yhat.extend(future.yhat);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::period::Granularity;
    use chrono::NaiveDate;

    fn model(k: f64, m: f64, s: Vec<f64>, d: Vec<f64>, n: usize) -> TrendModel {
        TrendModel::from_parts(
            "u", k, m, s, d, 0.0, n, Granularity::Annual,
            NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
        )
    }

    fn series(n: usize) -> UserSeries {
        UserSeries {
            user_id: "u".into(),
            granularity: Granularity::Annual,
            origin: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
            values: vec![0.0; n],
        }
    }

    #[test]
    fn in_sample_values() {
        let f = predict_in_sample(&model(0.0, 5.0, vec![], vec![], 5), &series(5)).unwrap();
        assert_eq!(f.yhat, vec![5.0; 5]);
        let f = predict_in_sample(&model(2.0, 1.0, vec![], vec![], 3), &series(3)).unwrap();
        assert_eq!(f.yhat, vec![1.0, 3.0, 5.0]);
        assert_eq!(f.times, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn in_sample_hinge_matches_generator() {
        let m = model(1.0, 3.0, vec![4.0], vec![2.0], 10);
        let f = predict_in_sample(&m, &series(10)).unwrap();
        for (t, v) in f.yhat.iter().enumerate() {
            let t = t as f64;
            let want = t + 3.0 + 2.0 * (t - 4.0).max(0.0);
            assert!((v - want).abs() < 1e-6);
        }
    }

    #[test]
    fn length_mismatch() {
        let err = predict_in_sample(&model(0.0, 1.0, vec![], vec![], 5), &series(4)).unwrap_err();
        assert_eq!(err, LengthMismatch { expected: 5, got: 4 });
    }

    #[test]
    fn future_values() {
        let f = forecast_future(&model(2.0, 1.0, vec![], vec![], 5), 2);
        assert_eq!(f.times, vec![5.0, 6.0]);
        assert_eq!(f.yhat, vec![11.0, 13.0]);
        assert_eq!(forecast_future(&model(0.0, 7.5, vec![], vec![], 5), 1).yhat, vec![7.5]);
        let f = forecast_future(&model(1.0, 0.0, vec![4.0], vec![2.0], 10), 3);
        assert_eq!(f.yhat, vec![22.0, 25.0, 28.0]);
        assert_eq!(f.horizon_start, 10);
    }

    #[test]
    fn through_concatenates() {
        let m = model(2.0, 1.0, vec![], vec![], 5);
        let f = predict_through(&m, &series(5), 2).unwrap();
        assert_eq!(f.yhat, vec![1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0]);
        assert_eq!(f.horizon_start, 5);
    }
}
