//! Forecast-driven access control for sensitive data stores.
//!
//! Each user's access log is bucketed into a fixed-granularity series of
//! minutes per period, a continuous piecewise-linear trend is fitted to it,
//! and the in-sample absolute errors define a symmetric access band around
//! the trend. Users whose observed access or extrapolated trend climbs above
//! their band are escalated through an `ALLOW → ALERT → RESTRICT → BLOCK`
//! ladder and ranked as suspects.
//!
//! ```text
//! ingest → trendfit → forecast → bands → policy
//!                 \______ store (records.csv, models/*.json) ______/
//! ```

pub mod bands;
pub mod forecast;
pub mod ingest;
pub mod period;
pub mod pipeline;
pub mod policy;
pub mod store;
pub mod syngen;
pub mod trendfit;

pub use bands::{BandConfig, BandMode, BandStats, BandedForecast, ErrorStats};
pub use forecast::ForecastSeries;
pub use ingest::{AccessRecord, InputFormat, UserSeries};
pub use period::Granularity;
pub use pipeline::{ReportRow, UserAnalysis};
pub use policy::{AccessDecision, Action, PointKind, Thresholds};
pub use store::{Store, StoredModel};
pub use syngen::ScenarioConfig;
pub use trendfit::{FitConfig, TrendModel};
