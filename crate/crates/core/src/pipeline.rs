//! Per-user fit → band → decide, and the plottable report rows.

use std::io;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bands::{self, BandConfig, BandError, BandStats, BandedForecast, ErrorStats};
use crate::forecast::{self, LengthMismatch};
use crate::ingest::UserSeries;
use crate::policy::{self, AccessDecision, Action, PolicyError, Thresholds};
use crate::trendfit::{self, FitConfig, FitError, TrendModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Band(#[from] BandError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Length(#[from] LengthMismatch),
}

/// Fits the trend and computes the in-sample error statistics.
pub fn fit_user(
    series: &UserSeries,
    fit: &FitConfig,
    band: &BandConfig,
) -> Result<(TrendModel, ErrorStats), PipelineError> {
    let model = trendfit::fit_trend(series, fit)?;
    let fitted = forecast::predict_in_sample(&model, series)?;
    let stats = bands::error_stats(&series.values, &fitted.yhat, band.alpha)?;
    Ok((model, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAnalysis {
    pub model: TrendModel,
    pub stats: BandStats,
    pub band: BandConfig,
    pub banded: BandedForecast,
    pub decisions: Vec<AccessDecision>,
}

/// Bands and judges a fitted model over its training window plus `horizon`
/// periods. `future_actuals` holds observed minutes for horizon periods
/// where they exist; missing entries are judged on the extrapolated trend.
pub fn assess(
    model: &TrendModel,
    stats: &BandStats,
    band: &BandConfig,
    training: &UserSeries,
    horizon: usize,
    future_actuals: &[Option<f64>],
    thresholds: &Thresholds,
) -> Result<UserAnalysis, PipelineError> {
    let path = forecast::predict_through(model, training, horizon)?;
    let mut y: Vec<Option<f64>> = training.values.iter().copied().map(Some).collect();
    y.extend((0..horizon).map(|h| future_actuals.get(h).copied().flatten()));
    let banded = BandedForecast::build(&path, y, stats, band)?;
    let decisions = policy::evaluate(&banded, thresholds)?;
    Ok(UserAnalysis {
        model: model.clone(),
        stats: *stats,
        band: *band,
        banded,
        decisions,
    })
}

/// Fit and assess in one go, with no actuals past the training window.
pub fn analyze(
    series: &UserSeries,
    fit: &FitConfig,
    band: &BandConfig,
    thresholds: &Thresholds,
    horizon: usize,
) -> Result<UserAnalysis, PipelineError> {
    let (model, stats) = fit_user(series, fit, band)?;
    assess(&model, &stats.summary(), band, series, horizon, &[], thresholds)
}

pub const REPORT_HEADER: &str =
    "user_id,period_index,period_label,y,yhat,lower,upper,epsilon,xi,breach,action";

/// One plottable period of a user's forecast report. `lower`/`upper` are the
/// limits the period was judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub user_id: String,
    pub period_index: usize,
    pub period_label: NaiveDate,
    pub y: Option<f64>,
    pub yhat: f64,
    pub lower: f64,
    pub upper: f64,
    pub epsilon: Option<f64>,
    pub xi: Option<f64>,
    pub breach: bool,
    pub action: Action,
}

impl UserAnalysis {
    pub fn report_rows(&self) -> Vec<ReportRow> {
        let alpha = self.stats.alpha;
        self.decisions
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let y = self.banded.y[i];
                let yhat = self.banded.yhat[i];
                let epsilon = y.map(|v| bands::residual(v, yhat, alpha));
                let xi = match (epsilon, y) {
                    (Some(e), Some(v)) => bands::pct_error(e, v, alpha),
                    _ => None,
                };
                ReportRow {
                    user_id: d.user_id.clone(),
                    period_index: d.period,
                    period_label: self
                        .model
                        .granularity
                        .start_of(self.model.origin, d.period as i64),
                    y,
                    yhat,
                    lower: d.lower,
                    upper: d.upper,
                    epsilon,
                    xi,
                    breach: d.excess > 0.0,
                    action: d.action,
                }
            })
            .collect()
    }

    pub fn worst_action(&self) -> Action {
        self.decisions
            .iter()
            .map(|d| d.action)
            .max()
            .unwrap_or(Action::Allow)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes report rows as LF-terminated CSV with the fixed header.
pub fn write_report<W: io::Write>(rows: &[ReportRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.user_id),
            r.period_index,
            r.period_label.format("%Y-%m-%d"),
            opt(r.y),
            r.yhat,
            r.lower,
            r.upper,
            opt(r.epsilon),
            opt(r.xi),
            r.breach,
            r.action
        )?;
    }
    Ok(())
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
