//! Resolution of natural-language period phrases (`during("...")`) to
//! inclusive calendar-date intervals anchored at the dataset's `today`.

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::error::{DslError, ErrorKind};

/// Inclusive `[start, end]` date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateInterval {
    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

fn period_error(phrase: &str) -> DslError {
    DslError::new(
        ErrorKind::PeriodParseError,
        format!("unsupported period '{phrase}'"),
    )
}

fn parse_iso(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    // exact YYYY-MM-DD shape only
    if s.len() != 10 || s.as_bytes()[4] != b'-' || s.as_bytes()[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Accepted phrases (case-insensitive): `today`, `yesterday`,
/// `last N days` (N calendar days ending today), `last week`, `last month`
/// (previous full calendar month), `YYYY-MM-DD`, and
/// `YYYY-MM-DD..YYYY-MM-DD`.
pub fn resolve_period(phrase: &str, today: NaiveDate) -> Result<DateInterval, DslError> {
    let norm = phrase
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase();
    let single = |d: NaiveDate| DateInterval { start: d, end: d };

    match norm.as_str() {
        "" => return Err(period_error(phrase)),
        "today" => return Ok(single(today)),
        "yesterday" => return Ok(single(today - Duration::days(1))),
        "last week" => return resolve_period("last 7 days", today),
        "last month" => {
            let first_of_this = today.with_day(1).expect("day 1 exists");
            let end = first_of_this - Duration::days(1);
            let start = end.with_day(1).expect("day 1 exists");
            return Ok(DateInterval { start, end });
        }
        _ => {}
    }

    if let Some(rest) = norm.strip_prefix("last ") {
        let mut parts = rest.split(' ');
        if let (Some(n), Some("days" | "day"), None) = (parts.next(), parts.next(), parts.next()) {
            let n: i64 = n.parse().map_err(|_| period_error(phrase))?;
            if !(1..=36_500).contains(&n) {
                return Err(period_error(phrase));
            }
            return Ok(DateInterval {
                start: today - Duration::days(n - 1),
                end: today,
            });
        }
        return Err(period_error(phrase));
    }

    if let Some((a, b)) = norm.split_once("..") {
        let (start, end) = parse_iso(a)
            .zip(parse_iso(b))
            .ok_or_else(|| period_error(phrase))?;
        if start > end {
            return Err(period_error(phrase));
        }
        return Ok(DateInterval { start, end });
    }

    parse_iso(&norm).map(single).ok_or_else(|| period_error(phrase))
}
