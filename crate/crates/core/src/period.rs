//! Calendar periods used to bucket access records.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};

/// Aggregation period. Boundaries: days; first of month; Jan 1 / Jul 1; Jan 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Daily,
    Monthly,
    HalfYearly,
    Annual,
}

impl Granularity {
    /// First day of the period containing `date`.
    pub fn floor(self, date: NaiveDate) -> NaiveDate {
        let ymd = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid period start");
        match self {
            Granularity::Daily => date,
            Granularity::Monthly => ymd(date.year(), date.month(), 1),
            Granularity::HalfYearly => {
                ymd(date.year(), if date.month() <= 6 { 1 } else { 7 }, 1)
            }
            Granularity::Annual => ymd(date.year(), 1, 1),
        }
    }

    fn ordinal(self, date: NaiveDate) -> i64 {
        match self {
            Granularity::Daily => i64::from(date.num_days_from_ce()),
            Granularity::Monthly => i64::from(date.year()) * 12 + i64::from(date.month0()),
            Granularity::HalfYearly => {
                i64::from(date.year()) * 2 + i64::from(date.month0() / 6)
            }
            Granularity::Annual => i64::from(date.year()),
        }
    }

    /// Signed number of whole periods from the period containing `origin`
    /// to the period containing `date`.
    pub fn index(self, origin: NaiveDate, date: NaiveDate) -> i64 {
        self.ordinal(date) - self.ordinal(origin)
    }

    /// Start date of period `index` counted from the period containing `origin`.
    pub fn start_of(self, origin: NaiveDate, index: i64) -> NaiveDate {
        let base = self.floor(origin);
        let shift = |months: i64| {
            if months >= 0 {
                base.checked_add_months(Months::new(months as u32))
            } else {
                base.checked_sub_months(Months::new((-months) as u32))
            }
            .expect("period start in calendar range")
        };
        match self {
            Granularity::Daily => {
                if index >= 0 {
                    base.checked_add_days(Days::new(index as u64))
                } else {
                    base.checked_sub_days(Days::new((-index) as u64))
                }
                .expect("period start in calendar range")
            }
            Granularity::Monthly => shift(index),
            Granularity::HalfYearly => shift(index * 6),
            Granularity::Annual => shift(index * 12),
        }
    }

    /// Fractional period coordinate of `date`: its period index plus the
    /// elapsed fraction of that period.
    pub fn position(self, origin: NaiveDate, date: NaiveDate) -> f64 {
        let idx = self.index(origin, date);
        let start = self.start_of(origin, idx);
        let next = self.start_of(origin, idx + 1);
        let len = (next - start).num_days() as f64;
        let into = (date - start).num_days() as f64;
        idx as f64 + into / len
    }

    /// Number of periods touched by the closed date range `[start, end]`.
    pub fn span(self, start: NaiveDate, end: NaiveDate) -> usize {
        (self.index(start, end) + 1).max(0) as usize
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Daily => "daily",
            Granularity::Monthly => "monthly",
            Granularity::HalfYearly => "half-yearly",
            Granularity::Annual => "annual",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown granularity {0:?} (expected daily, monthly, half-yearly or annual)")]
pub struct ParseGranularityError(String);

impl FromStr for Granularity {
    type Err = ParseGranularityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "daily" | "day" => Ok(Granularity::Daily),
            "monthly" | "month" => Ok(Granularity::Monthly),
            "half-yearly" | "halfyearly" | "half-year" => Ok(Granularity::HalfYearly),
            "annual" | "yearly" | "year" => Ok(Granularity::Annual),
            _ => Err(ParseGranularityError(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn half_year_boundaries() {
        let g = Granularity::HalfYearly;
        assert_eq!(g.floor(d(2014, 6, 30)), d(2014, 1, 1));
        assert_eq!(g.floor(d(2014, 7, 1)), d(2014, 7, 1));
        assert_eq!(g.index(d(2014, 1, 1), d(2016, 8, 9)), 5);
        assert_eq!(g.start_of(d(2014, 3, 3), 5), d(2016, 7, 1));
    }

    #[test]
    fn index_start_roundtrip() {
        let origin = d(2014, 2, 11);
        for g in [
            Granularity::Daily,
            Granularity::Monthly,
            Granularity::HalfYearly,
            Granularity::Annual,
        ] {
            for i in -3..40 {
                let s = g.start_of(origin, i);
                assert_eq!(g.index(origin, s), i, "{g} {i}");
                assert_eq!(g.floor(s), s);
            }
        }
    }

    #[test]
    fn position_is_fractional_index() {
        let g = Granularity::Annual;
        assert_eq!(g.position(d(2014, 1, 1), d(2018, 1, 1)), 4.0);
        let p = g.position(d(2014, 1, 1), d(2018, 7, 2));
        assert!((p - (4.0 + 182.0 / 365.0)).abs() < 1e-12);
    }

    #[test]
    fn parse_names() {
        assert_eq!("half-yearly".parse::<Granularity>().unwrap(), Granularity::HalfYearly);
        assert_eq!("ANNUAL".parse::<Granularity>().unwrap(), Granularity::Annual);
        assert!("weekly".parse::<Granularity>().is_err());
    }
}
