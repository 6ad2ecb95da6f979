//! Upper-bound breaches, graded enforcement and suspect ranking.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bands::BandedForecast;

/// Smallest half-width used to normalise an excess.
pub const SEVERITY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Allow,
    Alert,
    Restrict,
    Block,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Allow => "ALLOW",
            Action::Alert => "ALERT",
            Action::Restrict => "RESTRICT",
            Action::Block => "BLOCK",
        })
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ALLOW" => Ok(Action::Allow),
            "ALERT" => Ok(Action::Alert),
            "RESTRICT" => Ok(Action::Restrict),
            "BLOCK" => Ok(Action::Block),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

/// Whether a decision judged an actual observation or a trend extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PointKind {
    Observed,
    Forecast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub alert: f64,
    pub restrict: f64,
    pub block: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            alert: 0.0,
            restrict: 1.0,
            block: 3.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if 0.0 <= self.alert && self.alert <= self.restrict && self.restrict <= self.block {
            Ok(())
        } else {
            Err(PolicyError::InvalidThresholds(*self))
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("upper bound {upper} is below lower bound {lower}")]
    InvalidBand { lower: f64, upper: f64 },
    #[error("thresholds must satisfy 0 <= alert <= restrict <= block, got {0:?}")]
    InvalidThresholds(Thresholds),
}

/// `(excess, breach)`: only values strictly above `upper` breach.
pub fn classify_point(value: f64, lower: f64, upper: f64) -> Result<(f64, bool), PolicyError> {
    if !(upper >= lower) {
        return Err(PolicyError::InvalidBand { lower, upper });
    }
    let breach = value > upper;
    Ok((if breach { value - upper } else { 0.0 }, breach))
}

pub fn severity(excess: f64, half_width: f64) -> f64 {
    excess / half_width.max(SEVERITY_FLOOR)
}

pub fn decide_action(severity: f64, thresholds: &Thresholds) -> Result<Action, PolicyError> {
    thresholds.validate()?;
    Ok(if severity <= 0.0 {
        Action::Allow
    } else if severity < thresholds.restrict {
        Action::Alert
    } else if severity < thresholds.block {
        Action::Restrict
    } else {
        Action::Block
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub user_id: String,
    pub period: usize,
    pub kind: PointKind,
    pub value: f64,
    pub upper: f64,
    pub lower: f64,
    pub excess: f64,
    pub severity: f64,
    pub action: Action,
}

impl AccessDecision {
    /// Below-band usage is recorded but never enforced.
    pub fn under_use(&self) -> bool {
        self.value < self.lower
    }
}

#[allow(clippy::too_many_arguments)]
pub fn decide_point(
    user_id: &str,
    period: usize,
    kind: PointKind,
    value: f64,
    lower: f64,
    upper: f64,
    half_width: f64,
    thresholds: &Thresholds,
) -> Result<AccessDecision, PolicyError> {
    let (excess, _) = classify_point(value, lower, upper)?;
    let severity = severity(excess, half_width);
    Ok(AccessDecision {
        user_id: user_id.to_string(),
        period,
        kind,
        value,
        upper,
        lower,
        excess,
        severity,
        action: decide_action(severity, thresholds)?,
    })
}

/// One decision per period of a banded forecast.
///
/// Periods with an actual value compare it against that period's band.
/// Periods without one compare the extrapolated trend against the training
/// window's access ceiling (the highest upper bound, and lowest lower bound,
/// seen while training).
pub fn evaluate(
    banded: &BandedForecast,
    thresholds: &Thresholds,
) -> Result<Vec<AccessDecision>, PolicyError> {
    let ceiling = banded.training_ceiling();
    let floor = banded.training_floor();
    (0..banded.yhat.len())
        .map(|i| {
            let (kind, value, lower, upper) = match banded.y[i] {
                Some(y) => (PointKind::Observed, y, banded.lower[i], banded.upper[i]),
                None => (
                    PointKind::Forecast,
                    banded.yhat[i],
                    floor.unwrap_or(banded.lower[i]),
                    ceiling.unwrap_or(banded.upper[i]),
                ),
            };
            decide_point(
                &banded.user_id,
                banded.times[i] as usize,
                kind,
                value,
                lower,
                upper,
                banded.half_width,
                thresholds,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suspect {
    pub user_id: String,
    pub max_severity: f64,
    /// Most severe action taken against the user.
    pub action: Action,
}

/// Users by descending worst severity, ties by ascending id.
pub fn rank_suspects(decisions: &[AccessDecision]) -> Vec<Suspect> {
    let mut worst: BTreeMap<&str, (f64, Action)> = BTreeMap::new();
    for d in decisions {
        let e = worst.entry(d.user_id.as_str()).or_insert((0.0, Action::Allow));
        e.0 = e.0.max(d.severity);
        e.1 = e.1.max(d.action);
    }
    let mut out: Vec<Suspect> = worst
        .into_iter()
        .map(|(u, (s, a))| Suspect {
            user_id: u.to_string(),
            max_severity: s,
            action: a,
        })
        .collect();
    out.sort_by(|a, b| {
        b.max_severity
            .total_cmp(&a.max_severity)
            .then_with(|| a.user_id.cmp(&b.user_id))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t() -> Thresholds {
        Thresholds::default()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_point(79.0, 0.0, 80.0).unwrap(), (0.0, false));
        assert_eq!(classify_point(80.0, 0.0, 80.0).unwrap(), (0.0, false));
        assert_eq!(classify_point(95.0, 0.0, 80.0).unwrap(), (15.0, true));
        assert_eq!(classify_point(-5.0, 0.0, 80.0).unwrap(), (0.0, false));
        assert!(matches!(classify_point(1.0, 2.0, 1.0), Err(PolicyError::InvalidBand { .. })));
    }

    #[test]
    fn action_ladder() {
        assert_eq!(decide_action(0.0, &t()).unwrap(), Action::Allow);
        assert_eq!(decide_action(0.5, &t()).unwrap(), Action::Alert);
        assert_eq!(decide_action(1.0, &t()).unwrap(), Action::Restrict);
        assert_eq!(decide_action(3.2, &t()).unwrap(), Action::Block);
        let bad = Thresholds { alert: 0.0, restrict: 4.0, block: 3.0 };
        assert!(matches!(decide_action(1.0, &bad), Err(PolicyError::InvalidThresholds(_))));
    }

    #[test]
    fn severity_uses_floor_for_zero_band() {
        assert_eq!(severity(15.0, 5.0), 3.0);
        assert_eq!(severity(1e-9, 0.0), 1.0);
        assert_eq!(severity(0.0, 0.0), 0.0);
    }

    fn decision(user: &str, sev: f64) -> AccessDecision {
        AccessDecision {
            user_id: user.into(),
            period: 0,
            kind: PointKind::Observed,
            value: 0.0,
            upper: 0.0,
            lower: 0.0,
            excess: sev,
            severity: sev,
            action: decide_action(sev, &t()).unwrap(),
        }
    }

    #[test]
    fn ranking() {
        assert_eq!(
            rank_suspects(&[decision("solo", 0.0)]),
            vec![Suspect { user_id: "solo".into(), max_severity: 0.0, action: Action::Allow }]
        );
        let r = rank_suspects(&[decision("b", 0.0), decision("a", 2.0), decision("a", 0.0)]);
        let ids: Vec<_> = r.iter().map(|s| s.user_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(r[0].action, Action::Restrict);
        let r = rank_suspects(&[decision("z", 0.0), decision("c", 0.0), decision("m", 0.0)]);
        let ids: Vec<_> = r.iter().map(|s| s.user_id.as_str()).collect();
        assert_eq!(ids, ["c", "m", "z"]);
    }

    proptest! {
        #[test]
        fn action_monotone_in_severity(a in 0f64..10.0, b in 0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(decide_action(lo, &t()).unwrap() <= decide_action(hi, &t()).unwrap());
        }

        #[test]
        fn raising_value_never_lowers_action(v in -50f64..150.0, dv in 0f64..50.0, w in 0f64..20.0) {
            let a = decide_point("u", 0, PointKind::Observed, v, 50.0 - w, 50.0 + w, w, &t()).unwrap();
            let b = decide_point("u", 0, PointKind::Observed, v + dv, 50.0 - w, 50.0 + w, w, &t()).unwrap();
            prop_assert!(a.action <= b.action);
            prop_assert_eq!(a.action == Action::Allow, a.excess == 0.0);
            prop_assert_eq!(a.severity == 0.0, a.excess == 0.0);
        }

        #[test]
        fn ranking_permutation_invariant(
            sevs in prop::collection::vec((0usize..6, 0f64..5.0), 0..30),
            seed in any::<u64>(),
        ) {
            let ds: Vec<_> = sevs.iter().map(|(u, s)| decision(&format!("u{u}"), *s)).collect();
            let mut shuffled = ds.clone();
            let mut x = seed;
            for i in (1..shuffled.len()).rev() {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (x >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(rank_suspects(&ds), rank_suspects(&shuffled));
        }
    }
}
