//! Reproducible synthetic access logs with an optional ramping leaker.
//!
//! Every user draws a fixed baseline in `[0.3, 0.8) * normal_cap` and adds
//! bounded uniform noise each period. The leaker additionally accrues
//! `leak_slope` minutes per period elapsed since `leak_start`, measured at the
//! end of each period. Randomness is splitmix64 seeded with
//! `seed ^ fnv1a64(user_id)`, so output depends only on the configuration.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::AccessRecord;
use crate::period::Granularity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub granularity: Granularity,
    /// Every normal user's period total stays strictly below this.
    pub normal_cap: f64,
    pub leaker_id: Option<String>,
    pub leak_start: NaiveDate,
    /// Minutes added per elapsed period once the leak starts.
    pub leak_slope: f64,
    /// Half-width of the uniform per-period noise, at most `0.2 * normal_cap`.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_users: 10,
            start: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2018, 12, 31).unwrap(),
            granularity: Granularity::Annual,
            normal_cap: 80.0,
            leaker_id: None,
            leak_start: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            leak_slope: 15.0,
            noise_scale: 0.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid scenario: {0}")]
pub struct InvalidConfig(pub String);

impl ScenarioConfig {
    pub fn user_ids(&self) -> Vec<String> {
        let width = self.n_users.to_string().len().max(2);
        (1..=self.n_users)
            .map(|i| format!("user{i:0width$}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let fail = |m: &str| Err(InvalidConfig(m.to_string()));
        if self.n_users == 0 {
            return fail("n_users must be at least 1");
        }
        if self.end < self.start {
            return fail("end date precedes start date");
        }
        if !(self.normal_cap > 0.0 && self.normal_cap.is_finite()) {
            return fail("normal_cap must be a positive number");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale <= 0.2 * self.normal_cap) {
            return fail("noise_scale must lie in [0, 0.2 * normal_cap]");
        }
        if let Some(leaker) = &self.leaker_id {
            if !self.user_ids().contains(leaker) {
                return Err(InvalidConfig(format!(
                    "leaker {leaker:?} is not one of the generated users {}..{}",
                    self.user_ids()[0],
                    self.user_ids()[self.n_users - 1]
                )));
            }
            if !(self.leak_slope > 0.0 && self.leak_slope.is_finite()) {
                return fail("leak_slope must be positive");
            }
            if self.leak_start < self.start {
                return fail("leak_start precedes the scenario start");
            }
        }
        Ok(())
    }

    /// Number of periods covered by `[start, end]`.
    pub fn periods(&self) -> usize {
        self.granularity.span(self.start, self.end)
    }
}

/// splitmix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Per-user period totals, before they are written out as records.
pub fn period_totals(cfg: &ScenarioConfig) -> Result<BTreeMap<String, Vec<f64>>, InvalidConfig> {
    cfg.validate()?;
    let origin = cfg.granularity.floor(cfg.start);
    let n = cfg.periods();
    let leak_pos = cfg.granularity.position(origin, cfg.leak_start);
    let mut out = BTreeMap::new();
    for user in cfg.user_ids() {
        let mut rng = SplitMix64::new(cfg.seed ^ fnv1a64(user.as_bytes()));
        let baseline = cfg.normal_cap * (0.3 + 0.5 * rng.next_f64());
        let leaking = cfg.leaker_id.as_deref() == Some(user.as_str());
        let totals = (0..n)
            .map(|p| {
                let noise = cfg.noise_scale * (2.0 * rng.next_f64() - 1.0);
                let ramp = if leaking {
                    cfg.leak_slope * ((p + 1) as f64 - leak_pos).max(0.0)
                } else {
                    0.0
                };
                (baseline + noise + ramp).max(0.0)
            })
            .collect();
        out.insert(user, totals);
    }
    Ok(out)
}

/// One record per user per period, dated at the period start, period-major.
pub fn generate(cfg: &ScenarioConfig) -> Result<Vec<AccessRecord>, InvalidConfig> {
    let totals = period_totals(cfg)?;
    let origin = cfg.granularity.floor(cfg.start);
    let mut records = Vec::with_capacity(totals.len() * cfg.periods());
    for p in 0..cfg.periods() {
        let date = cfg.granularity.start_of(origin, p as i64);
        for (user, values) in &totals {
            records.push(AccessRecord {
                user_id: user.clone(),
                date,
                duration: values[p],
            });
        }
    }
    Ok(records)
}
