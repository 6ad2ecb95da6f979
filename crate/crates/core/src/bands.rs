//! Residual statistics and the symmetric access band around the trend.
//!
//! For observations `y_i` and fitted values `yhat_i`:
//!
//! - residual `eps_i = (y_i + alpha) - (yhat_i - alpha)`
//! - percentage error `xi_i = 100 * eps_i / (y_i + alpha)`
//! - absolute error `ae_i = |eps_i|`, with population mean `mu` and
//!   standard deviation `sigma`
//! - band `yhat_i -/+ w`, where `w = mu * varsigma * sigma` by default.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// How the band half-width is built from `mu`, `sigma` and `varsigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    /// `w = mu * varsigma * sigma`
    #[default]
    Literal,
    /// `w = mu + varsigma * sigma`
    MuPlus,
}

impl fmt::Display for BandMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandMode::Literal => "literal",
            BandMode::MuPlus => "mu_plus",
        })
    }
}

impl FromStr for BandMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "literal" => Ok(BandMode::Literal),
            "mu_plus" => Ok(BandMode::MuPlus),
            other => Err(format!("unknown band mode {other:?} (expected literal or mu_plus)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    /// Offset applied to actual and predicted values in the residual.
    pub alpha: f64,
    /// Sensitivity multiplier, > 0.
    pub varsigma: f64,
    pub mode: BandMode,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            varsigma: 2.0,
            mode: BandMode::Literal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BandError {
    #[error("y has {y} values but yhat has {yhat}")]
    LengthMismatch { y: usize, yhat: usize },
    #[error("no observations")]
    EmptyInput,
    #[error("varsigma must be > 0, got {0}")]
    InvalidSensitivity(f64),
}

pub fn residual(y: f64, yhat: f64, alpha: f64) -> f64 {
    y - yhat + 2.0 * alpha
}

/// `None` where `y + alpha` is (numerically) zero.
pub fn pct_error(epsilon: f64, y: f64, alpha: f64) -> Option<f64> {
    let base = y + alpha;
    (base.abs() > 1e-12).then(|| 100.0 * epsilon / base)
}

/// Per-observation errors and the absolute-error moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub alpha: f64,
    pub epsilon: Vec<f64>,
    pub xi: Vec<Option<f64>>,
    pub abs_err: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

impl ErrorStats {
    pub fn summary(&self) -> BandStats {
        BandStats {
            alpha: self.alpha,
            mu: self.mu,
            sigma: self.sigma,
        }
    }

    /// Mean absolute percentage error over the defined `xi`.
    pub fn mean_abs_pct(&self) -> Option<f64> {
        let defined: Vec<f64> = self.xi.iter().flatten().map(|x| x.abs()).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// The part of [`ErrorStats`] that the band needs and the store persists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub alpha: f64,
    pub mu: f64,
    pub sigma: f64,
}

pub fn error_stats(y: &[f64], yhat: &[f64], alpha: f64) -> Result<ErrorStats, BandError> {
    if y.len() != yhat.len() {
        return Err(BandError::LengthMismatch {
            y: y.len(),
            yhat: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(BandError::EmptyInput);
    }
    let epsilon: Vec<f64> = y
        .iter()
        .zip(yhat)
        .map(|(&a, &p)| residual(a, p, alpha))
        .collect();
    let xi = epsilon
        .iter()
        .zip(y)
        .map(|(&e, &a)| pct_error(e, a, alpha))
        .collect();
    let abs_err: Vec<f64> = epsilon.iter().map(|e| e.abs()).collect();
    let (mu, sigma) = mean_and_population_sd(&abs_err);
    Ok(ErrorStats {
        alpha,
        epsilon,
        xi,
        abs_err,
        mu,
        sigma,
    })
}

fn mean_and_population_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    // Identical values: report the value itself and an exact zero spread.
    if lo == hi {
        return (lo, 0.0);
    }
    let mu = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

pub fn half_width(stats: &BandStats, cfg: &BandConfig) -> f64 {
    match cfg.mode {
        BandMode::Literal => stats.mu * cfg.varsigma * stats.sigma,
        BandMode::MuPlus => stats.mu + cfg.varsigma * stats.sigma,
    }
}

/// `(lower, upper)` with the literal half-width `mu * varsigma * sigma`.
pub fn bounds(
    yhat: &[f64],
    mu: f64,
    sigma: f64,
    varsigma: f64,
) -> Result<(Vec<f64>, Vec<f64>), BandError> {
    let cfg = BandConfig {
        alpha: 0.0,
        varsigma,
        mode: BandMode::Literal,
    };
    bounds_with(yhat, &BandStats { alpha: 0.0, mu, sigma }, &cfg).map(|(l, u, _)| (l, u))
}

/// `(lower, upper, half_width)` for any band mode. One half-width is
/// computed and shared by every index.
pub fn bounds_with(
    yhat: &[f64],
    stats: &BandStats,
    cfg: &BandConfig,
) -> Result<(Vec<f64>, Vec<f64>, f64), BandError> {
    if !(cfg.varsigma > 0.0) {
        return Err(BandError::InvalidSensitivity(cfg.varsigma));
    }
    let w = half_width(stats, cfg);
    let lower = yhat.iter().map(|v| v - w).collect();
    let upper = yhat.iter().map(|v| v + w).collect();
    Ok((lower, upper, w))
}

/// Trend values with their band and, where known, the actual minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedForecast {
    pub user_id: String,
    pub times: Vec<f64>,
    pub y: Vec<Option<f64>>,
    pub yhat: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub varsigma: f64,
    pub half_width: f64,
    /// Index of the first period past the training window.
    pub horizon_start: usize,
}

impl BandedForecast {
    pub fn build(
        forecast: &crate::forecast::ForecastSeries,
        y: Vec<Option<f64>>,
        stats: &BandStats,
        cfg: &BandConfig,
    ) -> Result<Self, BandError> {
        if y.len() != forecast.yhat.len() {
            return Err(BandError::LengthMismatch {
                y: y.len(),
                yhat: forecast.yhat.len(),
            });
        }
        let (lower, upper, half_width) = bounds_with(&forecast.yhat, stats, cfg)?;
        Ok(Self {
            user_id: forecast.user_id.clone(),
            times: forecast.times.clone(),
            y,
            yhat: forecast.yhat.clone(),
            lower,
            upper,
            varsigma: cfg.varsigma,
            half_width,
            horizon_start: forecast.horizon_start,
        })
    }

    /// Highest upper bound inside the training window: the access ceiling a
    /// forecast trend is judged against.
    pub fn training_ceiling(&self) -> Option<f64> {
        self.upper[..self.horizon_start.min(self.upper.len())]
            .iter()
            .copied()
            .reduce(f64::max)
    }

    /// Lowest lower bound inside the training window.
    pub fn training_floor(&self) -> Option<f64> {
        self.lower[..self.horizon_start.min(self.lower.len())]
            .iter()
            .copied()
            .reduce(f64::min)
    }
}
