//! Answer matching, bootstrap intervals and error/recovery rates.

use std::str::FromStr;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use rust_decimal::prelude::FromPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use super::MethodResult;
use crate::agent::trace_stats;
use crate::benchgen::GoldAnswer;
use crate::dsl::NO_DATA;

/// How a parsed number is compared with the gold value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchRule {
    /// Equal after rounding both half away from zero to two decimals.
    #[default]
    Round2,
    /// Absolute difference of at most 0.005.
    AbsTolerance,
}

/// Phrases that declare an answer impossible when no number is given.
pub const CANNOT_ANSWER_PHRASES: [&str; 14] = [
    "no data",
    "not enough data",
    "insufficient data",
    "cannot answer",
    "can't answer",
    "cannot be answered",
    "could not compute",
    "couldn't compute",
    "unable to",
    "not available",
    "no records",
    "not recorded",
    "don't have",
    "do not have",
];

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"-?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|-?\.\d+").expect("valid regex"));

/// The last numeric token of `text`, with thousands separators removed. A
/// minus sign counts only when it does not follow a letter or digit, so
/// dates and ranges such as `2024-03-10` or `7-9` yield positive numbers.
pub fn extract_last_number(text: &str) -> Option<Decimal> {
    let m = NUMBER.find_iter(text).last()?;
    let mut token = m.as_str();
    if token.starts_with('-') {
        let before = text[..m.start()].chars().next_back();
        if before.is_some_and(char::is_alphanumeric) {
            token = &token[1..];
        }
    }
    Decimal::from_str(&token.replace(',', "")).ok()
}

/// Shortest round-trip decimal form of a float, so 0.145 stays 0.145.
pub fn decimal_of(x: f64) -> Option<Decimal> {
    Decimal::from_str(&x.to_string()).ok().or_else(|| Decimal::from_f64(x))
}

pub fn round2(d: Decimal) -> Decimal {
    d.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero)
}

fn declares_no_data(answer: &str) -> bool {
    if answer.contains(NO_DATA) {
        return true;
    }
    if extract_last_number(answer).is_some() {
        return false;
    }
    let lower = answer.to_lowercase().replace('\u{2019}', "'");
    CANNOT_ANSWER_PHRASES.iter().any(|p| lower.contains(p))
}

pub fn exact_match(answer: &str, gold: &GoldAnswer) -> bool {
    match_with(answer, gold, MatchRule::Round2)
}

pub fn match_with(answer: &str, gold: &GoldAnswer, rule: MatchRule) -> bool {
    match gold {
        GoldAnswer::NoData => declares_no_data(answer),
        GoldAnswer::Number(g) => {
            if answer.contains(NO_DATA) {
                return false;
            }
            let (Some(a), Some(g)) = (extract_last_number(answer), decimal_of(*g)) else {
                return false;
            };
            match rule {
                MatchRule::Round2 => round2(a) == round2(g),
                MatchRule::AbsTolerance => (a - g).abs() <= Decimal::new(5, 3),
            }
        }
    }
}

/// Type-7 quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean of `outcomes`. Returns `None`
/// for an empty list. The interval always brackets the point estimate.
pub fn bootstrap_ci(outcomes: &[bool], level: f64, resamples: usize, seed: u64) -> Option<(f64, f64)> {
    if outcomes.is_empty() || resamples == 0 {
        return None;
    }
    let n = outcomes.len();
    let point = outcomes.iter().filter(|&&c| c).count() as f64 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).filter(|_| outcomes[rng.random_range(0..n)]).count() as f64 / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let low = quantile(&means, alpha).min(point);
    let high = quantile(&means, 1.0 - alpha).max(point);
    Some((low, high))
}

/// Traces with a failing analyze observation over traces that used the
/// analyze tool; `None` when no trace used it.
pub fn error_rate(results: &[MethodResult]) -> Option<f64> {
    let stats: Vec<_> = results.iter().map(|r| trace_stats(&r.trace)).collect();
    let used = stats.iter().filter(|s| s.used_code).count();
    (used > 0).then(|| stats.iter().filter(|s| s.had_error).count() as f64 / used as f64)
}

/// Recovered traces over traces with an error; `None` when none erred.
pub fn recovery_rate(results: &[MethodResult]) -> Option<f64> {
    let stats: Vec<_> = results.iter().map(|r| trace_stats(&r.trace)).collect();
    let erred = stats.iter().filter(|s| s.had_error).count();
    (erred > 0).then(|| stats.iter().filter(|s| s.recovered).count() as f64 / erred as f64)
}
