//! Browser bindings for the static demo page in `www/`.
//!
//! Every entry point takes and returns JSON strings so the page needs no
//! generated type glue. The `*_json` functions are the same operations for
//! native callers and tests.

use accessband::pipeline::{self, UserAnalysis};
use accessband::policy::{self, Suspect};
use accessband::{syngen, BandConfig, FitConfig, Granularity, ScenarioConfig, Thresholds, UserSeries};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct SimulatedUser {
    pub user_id: String,
    pub leaker: bool,
    pub labels: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

/// Period totals for every simulated user.
pub fn simulate_json(config: &str) -> Result<String, String> {
    let cfg: ScenarioConfig = serde_json::from_str(config).map_err(|e| e.to_string())?;
    let totals = syngen::period_totals(&cfg).map_err(|e| e.to_string())?;
    let origin = cfg.granularity.floor(cfg.start);
    let users: Vec<SimulatedUser> = totals
        .into_iter()
        .map(|(user_id, values)| SimulatedUser {
            leaker: cfg.leaker_id.as_deref() == Some(user_id.as_str()),
            labels: (0..values.len()).map(|i| cfg.granularity.start_of(origin, i as i64)).collect(),
            user_id,
            values,
        })
        .collect();
    serde_json::to_string(&users).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct AnalyzeRequest {
    user_id: String,
    values: Vec<f64>,
    granularity: Granularity,
    origin: NaiveDate,
    fit: FitConfig,
    band: BandConfig,
    thresholds: Thresholds,
    horizon: usize,
}

impl Default for AnalyzeRequest {
    fn default() -> Self {
        Self {
            user_id: "user".into(),
            values: Vec::new(),
            granularity: Granularity::Annual,
            origin: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
            fit: FitConfig::default(),
            band: BandConfig::default(),
            thresholds: Thresholds::default(),
            horizon: 1,
        }
    }
}

#[derive(Debug, Serialize)]
struct AnalyzeResponse {
    k: f64,
    final_rate: f64,
    changepoints: Vec<f64>,
    mu: f64,
    sigma: f64,
    half_width: f64,
    horizon_start: usize,
    rows: Vec<pipeline::ReportRow>,
    severity: Vec<f64>,
}

fn analyze(req: &AnalyzeRequest) -> Result<UserAnalysis, String> {
    let series = UserSeries {
        user_id: req.user_id.clone(),
        granularity: req.granularity,
        origin: req.origin,
        values: req.values.clone(),
    };
    pipeline::analyze(&series, &req.fit, &req.band, &req.thresholds, req.horizon).map_err(|e| e.to_string())
}

/// Fits, bands and judges one series; returns plottable rows.
pub fn analyze_json(request: &str) -> Result<String, String> {
    let req: AnalyzeRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let a = analyze(&req)?;
    let resp = AnalyzeResponse {
        k: a.model.k,
        final_rate: a.model.final_rate(),
        changepoints: a.model.changepoints.clone(),
        mu: a.stats.mu,
        sigma: a.stats.sigma,
        half_width: a.banded.half_width,
        horizon_start: a.banded.horizon_start,
        rows: a.report_rows(),
        severity: a.decisions.iter().map(|d| d.severity).collect(),
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RankRequest {
    scenario: ScenarioConfig,
    fit: FitConfig,
    band: BandConfig,
    thresholds: Thresholds,
    horizon: usize,
}

impl Default for RankRequest {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            fit: FitConfig::default(),
            band: BandConfig::default(),
            thresholds: Thresholds::default(),
            horizon: 1,
        }
    }
}

/// Simulates a scenario, analyses every user and ranks them as suspects.
pub fn rank_json(request: &str) -> Result<String, String> {
    let req: RankRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let totals = syngen::period_totals(&req.scenario).map_err(|e| e.to_string())?;
    let origin = req.scenario.granularity.floor(req.scenario.start);
    let mut decisions = Vec::new();
    for (user_id, values) in totals {
        let a = analyze(&AnalyzeRequest {
            user_id,
            values,
            granularity: req.scenario.granularity,
            origin,
            fit: req.fit,
            band: req.band,
            thresholds: req.thresholds,
            horizon: req.horizon,
        })?;
        decisions.extend(a.decisions);
    }
    let ranked: Vec<Suspect> = policy::rank_suspects(&decisions);
    serde_json::to_string(&ranked).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(config: &str) -> Result<String, JsValue> {
    js(simulate_json(config))
}

#[wasm_bindgen(js_name = analyze)]
pub fn analyze_js(request: &str) -> Result<String, JsValue> {
    js(analyze_json(request))
}

#[wasm_bindgen(js_name = rank)]
pub fn rank_js(request: &str) -> Result<String, JsValue> {
    js(rank_json(request))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn simulate_defaults() {
        let v: Value = serde_json::from_str(&simulate_json(r#"{"leaker_id":"user03"}"#).unwrap()).unwrap();
        let users = v.as_array().unwrap();
        assert_eq!(users.len(), 10);
        assert_eq!(users[2]["leaker"], true);
        assert_eq!(users[0]["labels"][4], "2018-01-01");
        assert_eq!(users[0]["values"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn simulate_rejects_bad_config() {
        assert!(simulate_json(r#"{"n_users":0}"#).is_err());
        assert!(simulate_json("not json").is_err());
    }

    #[test]
    fn analyze_flags_a_late_ramp() {
        let out = analyze_json(r#"{"values":[40,40,40,40,55],"horizon":2}"#).unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[5]["period_label"], "2019-01-01");
        assert_eq!(rows[5]["y"], Value::Null);
        assert_eq!(rows[5]["action"], "BLOCK");
        assert_eq!(v["horizon_start"], 5);
    }

    #[test]
    fn analyze_band_follows_the_request() {
        let req = |vs: f64| {
            format!(r#"{{"values":[10,14,9,13,11,15,10],"band":{{"varsigma":{vs},"mode":"mu_plus"}}}}"#)
        };
        let narrow: Value = serde_json::from_str(&analyze_json(&req(0.5)).unwrap()).unwrap();
        let wide: Value = serde_json::from_str(&analyze_json(&req(4.0)).unwrap()).unwrap();
        assert!(wide["half_width"].as_f64().unwrap() > narrow["half_width"].as_f64().unwrap());
        assert!(analyze_json(r#"{"values":[1,2]}"#).is_err());
    }

    #[test]
    fn rank_puts_the_leaker_first() {
        let out = rank_json(r#"{"scenario":{"leaker_id":"user07"}}"#).unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        let ranked = v.as_array().unwrap();
        assert_eq!(ranked[0]["user_id"], "user07");
        assert!(matches!(ranked[0]["action"].as_str().unwrap(), "RESTRICT" | "BLOCK"));
        assert!(ranked[1..].iter().all(|s| s["action"] == "ALLOW"));
    }
}
