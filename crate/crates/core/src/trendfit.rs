//! Continuous piecewise-linear trend with rate changes at fixed changepoints.
//!
//! The trend is
//!
//! ```text
//! g(t) = (k + a(t)'delta) t + (m + a(t)'gamma),   a_j(t) = [t >= s_j]
//! ```
//!
//! with `gamma_j = -s_j * delta_j`, which keeps `g` continuous and turns each
//! changepoint into a hinge regressor `max(0, t - s_j)`. Coefficients are the
//! minimiser of `sum (y_i - g(t_i))^2 + lambda * sum delta_j^2`, solved with a
//! Householder QR on the ridge-augmented design.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::UserSeries;
use crate::period::Granularity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Upper bound on the number of changepoints; capped at `n - 2`.
    pub n_changepoints: usize,
    /// Fraction of the training span eligible for changepoints, in `(0, 1]`.
    pub cp_range: f64,
    /// Ridge strength on the rate adjustments.
    pub lambda: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_changepoints: 25,
            cp_range: 0.8,
            lambda: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 3 periods to fit a trend, got {0}")]
    InsufficientData(usize),
    #[error("design matrix is rank deficient (lambda = 0)")]
    SingularSystem,
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
}

/// A fitted trend. Immutable once built; `gamma` always equals `-s * delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub user_id: String,
    /// Base growth rate, minutes per period.
    pub k: f64,
    /// Base offset, minutes.
    pub m_offset: f64,
    pub changepoints: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: f64,
    pub n_train: usize,
    pub granularity: Granularity,
    pub origin: NaiveDate,
}

impl TrendModel {
    /// Builds a model from its free parameters, deriving `gamma`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        user_id: impl Into<String>,
        k: f64,
        m_offset: f64,
        changepoints: Vec<f64>,
        delta: Vec<f64>,
        lambda: f64,
        n_train: usize,
        granularity: Granularity,
        origin: NaiveDate,
    ) -> Self {
        assert_eq!(changepoints.len(), delta.len(), "one delta per changepoint");
        let gamma = continuity_offsets(&changepoints, &delta);
        Self {
            user_id: user_id.into(),
            k,
            m_offset,
            changepoints,
            delta,
            gamma,
            lambda,
            n_train,
            granularity,
            origin,
        }
    }

    /// Checks the structural invariants. Used when loading persisted models.
    pub fn check(&self) -> Result<(), String> {
        let j = self.changepoints.len();
        if self.delta.len() != j || self.gamma.len() != j {
            return Err("changepoints, delta and gamma differ in length".into());
        }
        if self.changepoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("changepoints are not strictly increasing".into());
        }
        let finite = [self.k, self.m_offset, self.lambda]
            .iter()
            .chain(&self.changepoints)
            .chain(&self.delta)
            .chain(&self.gamma)
            .all(|v| v.is_finite());
        if !finite {
            return Err("non-finite parameter".into());
        }
        if self
            .gamma
            .iter()
            .zip(continuity_offsets(&self.changepoints, &self.delta))
            .any(|(g, want)| g.to_bits() != want.to_bits())
        {
            return Err("gamma is not -s * delta".into());
        }
        Ok(())
    }

    /// Slope after the last changepoint, `k + sum delta`.
    pub fn final_rate(&self) -> f64 {
        self.k + self.delta.iter().sum::<f64>()
    }
}

fn continuity_offsets(changepoints: &[f64], delta: &[f64]) -> Vec<f64> {
    changepoints.iter().zip(delta).map(|(s, d)| -s * d).collect()
}

/// Evenly spaced changepoints over `(0, cp_range * (n_train - 1)]`.
pub fn place_changepoints(n_train: usize, cfg: &FitConfig) -> Vec<f64> {
    let count = cfg.n_changepoints.min(n_train.saturating_sub(2));
    let span = cfg.cp_range * (n_train.saturating_sub(1)) as f64;
    (1..=count)
        .map(|j| span * j as f64 / count as f64)
        .collect()
}

/// Regressor row `[t, 1, max(0, t - s_1), ..., max(0, t - s_J)]`.
pub fn design_row(t: f64, changepoints: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + changepoints.len());
    row.push(t);
    row.push(1.0);
    row.extend(changepoints.iter().map(|&s| if t >= s { t - s } else { 0.0 }));
    row
}

/// Evaluates the trend in its rate/offset form.
pub fn eval_trend(model: &TrendModel, t: f64) -> f64 {
    let mut rate = model.k;
    let mut offset = model.m_offset;
    for ((&s, &d), &g) in model
        .changepoints
        .iter()
        .zip(&model.delta)
        .zip(&model.gamma)
    {
        if t >= s {
            rate += d;
            offset += g;
        }
    }
    rate * t + offset
}

/// Penalised least-squares objective at the model's coefficients.
pub fn objective(model: &TrendModel, y: &[f64]) -> f64 {
    let sse: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let r = yi - hinge_value(model, i as f64);
            r * r
        })
        .sum();
    sse + model.lambda * model.delta.iter().map(|d| d * d).sum::<f64>()
}

fn hinge_value(model: &TrendModel, t: f64) -> f64 {
    let row = design_row(t, &model.changepoints);
    let mut v = model.k * row[0] + model.m_offset;
    for (x, d) in row[2..].iter().zip(&model.delta) {
        v += x * d;
    }
    v
}

/// Ridge coefficients for a fixed changepoint set.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub k: f64,
    pub m_offset: f64,
    pub delta: Vec<f64>,
}

/// Solves the penalised fit of `y` observed at `t = 0..n-1`.
pub fn solve_coefficients(
    y: &[f64],
    changepoints: &[f64],
    lambda: f64,
) -> Result<Coefficients, FitError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(FitError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    if changepoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(FitError::InvalidConfig("changepoints must be strictly increasing".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FitError::InvalidConfig("series contains non-finite values".into()));
    }
    let n = y.len();
    let p = 2 + changepoints.len();
    // Centring on the median only moves the unpenalised intercept; a constant
    // series then solves to exact zeros.
    let centre = median(y);
    let penalty_rows = if lambda > 0.0 { changepoints.len() } else { 0 };
    let rows = n + penalty_rows;
    let mut a = vec![vec![0.0; p]; rows];
    let mut b = vec![0.0; rows];
    for i in 0..n {
        a[i] = design_row(i as f64, changepoints);
        b[i] = y[i] - centre;
    }
    let root = lambda.sqrt();
    for j in 0..penalty_rows {
        a[n + j][2 + j] = root;
    }
    let beta = householder_lstsq(a, b, p).ok_or(FitError::SingularSystem)?;
    Ok(Coefficients {
        k: beta[0],
        m_offset: beta[1] + centre,
        delta: beta[2..].to_vec(),
    })
}

fn median(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mut v = y.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        v[mid - 1] + (v[mid] - v[mid - 1]) / 2.0
    }
}

/// Least squares `min |A x - b|` by Householder reflections. `None` when `A`
/// is numerically rank deficient.
fn householder_lstsq(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, p: usize) -> Option<Vec<f64>> {
    let rows = a.len();
    if rows < p {
        return None;
    }
    let mut diag = vec![0.0; p];
    for j in 0..p {
        let norm = (j..rows).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..rows).map(|i| a[i][j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in j..p {
                let dot: f64 = (j..rows).map(|i| v[i - j] * a[i][c]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in j..rows {
                    a[i][c] -= f * v[i - j];
                }
            }
            let dot: f64 = (j..rows).map(|i| v[i - j] * b[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..rows {
                b[i] -= f * v[i - j];
            }
        }
        diag[j] = a[j][j];
    }
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if scale == 0.0 || diag.iter().any(|d| d.abs() <= 1e-10 * scale) {
        return None;
    }
    let mut x = vec![0.0; p];
    for j in (0..p).rev() {
        let tail: f64 = (j + 1..p).map(|c| a[j][c] * x[c]).sum();
        x[j] = (b[j] - tail) / a[j][j];
    }
    Some(x)
}

/// Fits a trend to the whole series with changepoints placed by `cfg`.
pub fn fit_trend(series: &UserSeries, cfg: &FitConfig) -> Result<TrendModel, FitError> {
    if !(cfg.cp_range > 0.0 && cfg.cp_range <= 1.0) {
        return Err(FitError::InvalidConfig(format!(
            "cp_range must lie in (0, 1], got {}",
            cfg.cp_range
        )));
    }
    let n = series.len();
    if n < 3 {
        return Err(FitError::InsufficientData(n));
    }
    let changepoints = place_changepoints(n, cfg);
    fit_with_changepoints(series, changepoints, cfg.lambda)
}

/// Fits a trend with an explicit changepoint set.
pub fn fit_with_changepoints(
    series: &UserSeries,
    changepoints: Vec<f64>,
    lambda: f64,
) -> Result<TrendModel, FitError> {
    if series.len() < 3 {
        return Err(FitError::InsufficientData(series.len()));
    }
    let c = solve_coefficients(&series.values, &changepoints, lambda)?;
    Ok(TrendModel::from_parts(
        series.user_id.clone(),
        c.k,
        c.m_offset,
        changepoints,
        c.delta,
        lambda,
        series.len(),
        series.granularity,
        series.origin,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> UserSeries {
        UserSeries {
            user_id: "u".into(),
            granularity: Granularity::Annual,
            origin: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
            values,
        }
    }

    fn cfg(n_changepoints: usize, cp_range: f64, lambda: f64) -> FitConfig {
        FitConfig {
            n_changepoints,
            cp_range,
            lambda,
        }
    }

    #[test]
    fn changepoint_placement() {
        assert!(place_changepoints(10, &cfg(0, 0.8, 0.0)).is_empty());
        assert!(place_changepoints(2, &cfg(5, 0.8, 0.0)).is_empty());
        assert_eq!(place_changepoints(11, &cfg(4, 0.8, 0.0)), vec![2.0, 4.0, 6.0, 8.0]);
        assert_eq!(place_changepoints(5, &FitConfig::default()).len(), 3);
        assert_eq!(place_changepoints(100, &FitConfig::default()).len(), 25);
    }

    #[test]
    fn design_rows() {
        assert_eq!(design_row(3.0, &[]), vec![3.0, 1.0]);
        assert_eq!(design_row(3.0, &[5.0]), vec![3.0, 1.0, 0.0]);
        assert_eq!(design_row(7.0, &[5.0]), vec![7.0, 1.0, 2.0]);
    }

    #[test]
    fn constant_series_is_exact() {
        let m = fit_trend(&series(vec![5.0; 5]), &cfg(0, 0.8, 0.0)).unwrap();
        assert_eq!(m.k, 0.0);
        assert_eq!(m.m_offset, 5.0);
        let m = fit_trend(&series(vec![41.37; 5]), &FitConfig::default()).unwrap();
        for t in 0..8 {
            assert_eq!(eval_trend(&m, t as f64), 41.37);
        }
    }

    #[test]
    fn recovers_a_line() {
        let y = (0..5).map(|t| 2.0 * t as f64 + 1.0).collect();
        let m = fit_trend(&series(y), &cfg(0, 0.8, 0.0)).unwrap();
        assert!((m.k - 2.0).abs() < 1e-9);
        assert!((m.m_offset - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_a_hinge() {
        let truth = TrendModel::from_parts(
            "u", 1.0, 3.0, vec![4.0], vec![2.0], 0.0, 10, Granularity::Annual,
            NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
        );
        let y = (0..10).map(|t| eval_trend(&truth, t as f64)).collect();
        let m = fit_with_changepoints(&series(y), vec![4.0], 0.0).unwrap();
        assert!((m.k - 1.0).abs() < 1e-6);
        assert!((m.m_offset - 3.0).abs() < 1e-6);
        assert!((m.delta[0] - 2.0).abs() < 1e-6);
        assert_eq!(m.gamma[0], -4.0 * m.delta[0]);
        m.check().unwrap();
    }

    #[test]
    fn two_algebraic_forms_agree() {
        let m = TrendModel::from_parts(
            "u", 1.0, 0.0, vec![4.0], vec![2.0], 0.0, 10, Granularity::Annual,
            NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
        );
        assert_eq!(m.gamma, vec![-8.0]);
        assert_eq!(eval_trend(&m, 6.0), 10.0);
        assert_eq!(hinge_value(&m, 6.0), 10.0);
        assert_eq!(eval_trend(&m, 0.0), m.m_offset);
        assert_eq!(eval_trend(&m, 3.0), 3.0);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            fit_trend(&series(vec![1.0, 2.0]), &FitConfig::default()),
            Err(FitError::InsufficientData(2))
        );
        // A changepoint on the last period has an all-zero hinge column.
        assert_eq!(
            fit_with_changepoints(&series(vec![1.0, 2.0, 4.0]), vec![2.0], 0.0),
            Err(FitError::SingularSystem)
        );
        assert!(fit_with_changepoints(&series(vec![1.0, 2.0, 4.0]), vec![2.0], 0.5).is_ok());
        assert!(matches!(
            fit_trend(&series(vec![1.0; 4]), &cfg(1, 0.0, 0.0)),
            Err(FitError::InvalidConfig(_))
        ));
        assert!(matches!(
            fit_trend(&series(vec![1.0; 4]), &cfg(1, 0.5, -1.0)),
            Err(FitError::InvalidConfig(_))
        ));
    }

    #[test]
    fn check_rejects_broken_gamma() {
        let mut m = fit_trend(&series(vec![1.0, 3.0, 2.0, 5.0, 4.0]), &FitConfig::default())
            .unwrap();
        m.check().unwrap();
        m.gamma[0] += 1e-9;
        assert!(m.check().is_err());
    }
}
