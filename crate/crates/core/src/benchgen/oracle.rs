//! Brute-force answers computed straight from the records.
//!
//! Nothing here calls into the analysis language: periods, missing-value
//! handling and the aggregate conventions are written out again so that a
//! mismatch between the two shows up in the differential tests.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use chrono::{Datelike, Duration, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::datamodel::{ActivityRecord, UserDataset};

/// What a gold program computes, in terms the oracle can evaluate directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuerySemantics {
    /// Aggregate of a daily column over a period (all days when absent).
    DailyAggregate {
        metric: String,
        agg: String,
        #[serde(default)]
        period: Option<String>,
    },
    /// Number of days whose recorded value satisfies the comparison.
    DayCount {
        metric: String,
        op: String,
        number: f64,
        #[serde(default)]
        period: Option<String>,
    },
    /// Matching days as a percentage of days with a recorded value.
    PercentDays {
        metric: String,
        op: String,
        number: f64,
        #[serde(default)]
        period: Option<String>,
    },
    /// Number of sessions, of one type or of any type.
    ActivityCount {
        #[serde(default)]
        activity: Option<String>,
        #[serde(default)]
        period: Option<String>,
    },
    /// Number of distinct days with at least one session of the type.
    ActivityDays {
        activity: String,
        #[serde(default)]
        period: Option<String>,
    },
    /// Aggregate of an activity column, optionally restricted by a second
    /// comparison on the sessions.
    ActivityAggregate {
        activity: String,
        column: String,
        agg: String,
        #[serde(default)]
        period: Option<String>,
        #[serde(default)]
        filter: Option<ColumnFilter>,
    },
    /// Aggregate of an activity column over sessions on days whose daily
    /// value satisfies the comparison.
    CrossTable {
        metric: String,
        op: String,
        number: f64,
        #[serde(default)]
        activity: Option<String>,
        column: String,
        agg: String,
    },
    /// A daily value on the latest day with a session of the type.
    RecentDaily { activity: String, metric: String },
    /// Aggregate over the sessions of the type on the latest day it occurs.
    RecentActivity { activity: String, column: String, agg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnFilter {
    pub column: String,
    pub op: String,
    pub number: f64,
}

/// Result of the oracle: a number, or nothing to aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleAnswer {
    Number(f64),
    NoData,
}

fn last_n_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^last\s+(\d+)\s+days?$").expect("valid regex"))
}

/// Inclusive bounds of a period phrase relative to `today`, or `None` when
/// the phrase is not understood.
pub fn period_bounds(phrase: &str, today: NaiveDate) -> Option<(NaiveDate, NaiveDate)> {
    let p = phrase.trim().to_lowercase();
    let p = p.split_whitespace().collect::<Vec<_>>().join(" ");
    if p == "today" {
        return Some((today, today));
    }
    if p == "yesterday" {
        let y = today.pred_opt()?;
        return Some((y, y));
    }
    if p == "last week" {
        return Some((today - Duration::days(6), today));
    }
    if p == "last month" {
        let (y, m) = if today.month() == 1 { (today.year() - 1, 12) } else { (today.year(), today.month() - 1) };
        let first = NaiveDate::from_ymd_opt(y, m, 1)?;
        let (ny, nm) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
        let last = NaiveDate::from_ymd_opt(ny, nm, 1)?.pred_opt()?;
        return Some((first, last));
    }
    if let Some(c) = last_n_re().captures(&p) {
        let n: i64 = c[1].parse().ok()?;
        if n == 0 || n > 36_500 {
            return None;
        }
        return Some((today - Duration::days(n - 1), today));
    }
    let iso = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().filter(|_| s.len() == 10);
    if let Some((a, b)) = p.split_once("..") {
        let (a, b) = (iso(a)?, iso(b)?);
        return (a <= b).then_some((a, b));
    }
    iso(&p).map(|d| (d, d))
}

fn in_window(d: NaiveDate, window: Option<(NaiveDate, NaiveDate)>) -> bool {
    window.is_none_or(|(a, b)| a <= d && d <= b)
}

fn compare(op: &str, x: f64, n: f64) -> bool {
    match op {
        ">" => x > n,
        ">=" => x >= n,
        "<" => x < n,
        "<=" => x <= n,
        "==" => x == n,
        "!=" => x != n,
        _ => false,
    }
}

/// Aggregate conventions: nothing to aggregate gives no data, the standard
/// deviation needs two values and divides by n-1, an even median averages
/// the middle pair.
pub fn aggregate(agg: &str, xs: &[f64]) -> OracleAnswer {
    let n = xs.len();
    if n == 0 {
        return OracleAnswer::NoData;
    }
    let mut total = 0.0;
    for x in xs {
        total += x;
    }
    let v = match agg {
        "count" => n as f64,
        "sum" => total,
        "mean" => total / n as f64,
        "min" => xs.iter().fold(f64::INFINITY, |a, &b| if b < a { b } else { a }),
        "max" => xs.iter().fold(f64::NEG_INFINITY, |a, &b| if b > a { b } else { a }),
        "median" => {
            let mut s = xs.to_vec();
            s.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            if n % 2 == 1 {
                s[n / 2]
            } else {
                0.5 * (s[n / 2 - 1] + s[n / 2])
            }
        }
        "std" => {
            if n < 2 {
                return OracleAnswer::NoData;
            }
            let m = total / n as f64;
            let mut sq = 0.0;
            for x in xs {
                sq += (x - m) * (x - m);
            }
            (sq / (n as f64 - 1.0)).sqrt()
        }
        _ => return OracleAnswer::NoData,
    };
    OracleAnswer::Number(v)
}

/// `(date, value)` for every day in the window with a recorded value.
fn daily_values(ds: &UserDataset, metric: &str, window: Option<(NaiveDate, NaiveDate)>) -> Vec<(NaiveDate, f64)> {
    ds.daily
        .iter()
        .filter(|r| in_window(r.date, window))
        .filter_map(|r| r.numeric(metric).flatten().map(|v| (r.date, v)))
        .collect()
}

fn activity_values<'a>(rows: impl Iterator<Item = &'a ActivityRecord>, column: &str) -> Vec<f64> {
    rows.filter_map(|a| a.numeric(column).flatten()).collect()
}

fn latest_day_with(ds: &UserDataset, activity: &str) -> Option<NaiveDate> {
    ds.activities
        .iter()
        .filter(|a| a.activity_name == activity && a.date() <= ds.today)
        .map(ActivityRecord::date)
        .max()
}

fn window(period: &Option<String>, today: NaiveDate) -> Option<(NaiveDate, NaiveDate)> {
    period.as_deref().map(|p| period_bounds(p, today).unwrap_or((today, today - Duration::days(1))))
}

/// Answer a query by scanning the dataset directly.
pub fn oracle_answer(q: &QuerySemantics, ds: &UserDataset) -> OracleAnswer {
    let today = ds.today;
    match q {
        QuerySemantics::DailyAggregate { metric, agg, period } => {
            let xs: Vec<f64> = daily_values(ds, metric, window(period, today)).into_iter().map(|p| p.1).collect();
            aggregate(agg, &xs)
        }
        QuerySemantics::DayCount { metric, op, number, period } => {
            let hits = daily_values(ds, metric, window(period, today))
                .into_iter()
                .filter(|&(_, v)| compare(op, v, *number))
                .count();
            OracleAnswer::Number(hits as f64)
        }
        QuerySemantics::PercentDays { metric, op, number, period } => {
            let recorded = daily_values(ds, metric, window(period, today));
            if recorded.is_empty() {
                return OracleAnswer::NoData;
            }
            let hits = recorded.iter().filter(|&&(_, v)| compare(op, v, *number)).count();
            OracleAnswer::Number(hits as f64 / recorded.len() as f64 * 100.0)
        }
        QuerySemantics::ActivityCount { activity, period } => {
            let w = window(period, today);
            let n = ds
                .activities
                .iter()
                .filter(|a| in_window(a.date(), w))
                .filter(|a| activity.as_deref().is_none_or(|name| a.activity_name == name))
                .count();
            OracleAnswer::Number(n as f64)
        }
        QuerySemantics::ActivityDays { activity, period } => {
            let w = window(period, today);
            let days: BTreeSet<NaiveDate> = ds
                .activities
                .iter()
                .filter(|a| a.activity_name == *activity && in_window(a.date(), w))
                .map(ActivityRecord::date)
                .collect();
            OracleAnswer::Number(days.len() as f64)
        }
        QuerySemantics::ActivityAggregate { activity, column, agg, period, filter } => {
            let w = window(period, today);
            let rows = ds.activities.iter().filter(|a| {
                a.activity_name == *activity
                    && in_window(a.date(), w)
                    && filter.as_ref().is_none_or(|f| {
                        a.numeric(&f.column).flatten().is_some_and(|v| compare(&f.op, v, f.number))
                    })
            });
            aggregate(agg, &activity_values(rows, column))
        }
        QuerySemantics::CrossTable { metric, op, number, activity, column, agg } => {
            let days: BTreeSet<NaiveDate> = daily_values(ds, metric, None)
                .into_iter()
                .filter(|&(_, v)| compare(op, v, *number))
                .map(|p| p.0)
                .collect();
            let rows = ds.activities.iter().filter(|a| {
                days.contains(&a.date()) && activity.as_deref().is_none_or(|name| a.activity_name == name)
            });
            aggregate(agg, &activity_values(rows, column))
        }
        QuerySemantics::RecentDaily { activity, metric } => {
            let Some(day) = latest_day_with(ds, activity) else {
                return OracleAnswer::NoData;
            };
            match ds.daily.iter().find(|r| r.date == day).and_then(|r| r.numeric(metric).flatten()) {
                Some(v) => OracleAnswer::Number(v),
                None => OracleAnswer::NoData,
            }
        }
        QuerySemantics::RecentActivity { activity, column, agg } => {
            let Some(day) = latest_day_with(ds, activity) else {
                return OracleAnswer::NoData;
            };
            let rows = ds.activities.iter().filter(|a| a.activity_name == *activity && a.date() == day);
            aggregate(agg, &activity_values(rows, column))
        }
    }
}
