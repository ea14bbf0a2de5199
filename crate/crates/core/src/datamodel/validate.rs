use std::fmt;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{is_activity_name, ActivityRecord, DailyRecord, DemographicContext, UserDataset};

const STAGE_SUM_TOLERANCE: f64 = 1.0;
const PERCENT_TOLERANCE: f64 = 0.5;
const ZONE_SUM_TOLERANCE: i64 = 1;
const SPEED_TOLERANCE: f64 = 0.05;
const MAX_SPAN_DAYS: i64 = 31;

/// A single broken invariant: which record, which field, which rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub record: String,
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(record: impl Into<String>, field: &str, rule: impl Into<String>) -> Self {
        Violation {
            record: record.into(),
            field: field.to_string(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}: {}", self.record, self.field, self.rule)
    }
}

/// Check every schema invariant; an empty list means the dataset is valid.
pub fn validate_dataset(ds: &UserDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    check_context(&ds.context, &mut out);
    for (i, rec) in ds.daily.iter().enumerate() {
        check_daily(&format!("daily[{i}]"), rec, &mut out);
    }
    for (i, act) in ds.activities.iter().enumerate() {
        check_activity(&format!("activities[{i}]"), act, &mut out);
    }
    check_dataset(ds, &mut out);
    out
}

fn check_context(ctx: &DemographicContext, out: &mut Vec<Violation>) {
    if !(18..=80).contains(&ctx.age) {
        out.push(Violation::new("context", "age", "age must be within [18, 80]"));
    }
    if !(ctx.weight_kg > 0.0 && ctx.weight_kg.is_finite()) {
        out.push(Violation::new("context", "weight_kg", "weight must be positive"));
    }
    if let Some(h) = ctx.height_cm {
        if !(100.0..=230.0).contains(&h) {
            out.push(Violation::new("context", "height_cm", "height must be within [100, 230]"));
        }
    }
}

fn check_daily(name: &str, r: &DailyRecord, out: &mut Vec<Violation>) {
    if let (Some(total), Some(deep), Some(rem), Some(light)) = (
        r.sleep_minutes,
        r.deep_sleep_minutes,
        r.rem_sleep_minutes,
        r.light_sleep_minutes,
    ) {
        let stages = deep + rem + light;
        if (stages - total).abs() > STAGE_SUM_TOLERANCE + 1e-9 {
            out.push(Violation::new(
                name,
                "sleep_minutes",
                format!("deep + rem + light ({stages}) must equal sleep_minutes ({total})"),
            ));
        }
    }

    let percents = [
        ("deep_sleep_percent", r.deep_sleep_percent, r.deep_sleep_minutes),
        ("rem_sleep_percent", r.rem_sleep_percent, r.rem_sleep_minutes),
        ("light_sleep_percent", r.light_sleep_percent, r.light_sleep_minutes),
        ("awake_percent", r.awake_percent, r.awake_minutes),
    ];
    for (field, pct, _) in &percents {
        if let Some(p) = pct {
            if !(0.0..=100.0).contains(p) {
                out.push(Violation::new(name, field, "percent must be within [0, 100]"));
            }
        }
    }
    if percents.iter().all(|(_, p, _)| p.is_some()) {
        let sum: f64 = percents.iter().filter_map(|(_, p, _)| *p).sum();
        if (sum - 100.0).abs() > PERCENT_TOLERANCE {
            out.push(Violation::new(
                name,
                "deep_sleep_percent",
                format!("stage percents must sum to 100 (got {sum:.2})"),
            ));
        }
    }
    if let (Some(sleep), Some(awake)) = (r.sleep_minutes, r.awake_minutes) {
        let period = sleep + awake;
        for (field, pct, minutes) in &percents {
            if let (Some(p), Some(m)) = (pct, minutes) {
                let expected = if period > 0.0 { *m / period * 100.0 } else { 0.0 };
                if (p - expected).abs() > PERCENT_TOLERANCE {
                    out.push(Violation::new(
                        name,
                        field,
                        format!("percent {p:.2} inconsistent with minutes (expected {expected:.2})"),
                    ));
                }
            }
        }
    }

    if let (Some(total), Some(fat), Some(cardio), Some(peak)) = (
        r.active_zone_minutes,
        r.fatburn_active_zone_minutes,
        r.cardio_active_zone_minutes,
        r.peak_active_zone_minutes,
    ) {
        let zones = i64::from(fat) + i64::from(cardio) + i64::from(peak);
        if (zones - i64::from(total)).abs() > ZONE_SUM_TOLERANCE {
            out.push(Violation::new(
                name,
                "active_zone_minutes",
                format!("fatburn + cardio + peak ({zones}) must equal active_zone_minutes ({total})"),
            ));
        }
    }

    if let Some(score) = r.stress_management_score {
        if !(1..=100).contains(&score) {
            out.push(Violation::new(
                name,
                "stress_management_score",
                "score must be within [1, 100]",
            ));
        }
    }
    for (field, v) in [
        ("sleep_minutes", r.sleep_minutes),
        ("deep_sleep_minutes", r.deep_sleep_minutes),
        ("rem_sleep_minutes", r.rem_sleep_minutes),
        ("light_sleep_minutes", r.light_sleep_minutes),
        ("awake_minutes", r.awake_minutes),
        ("resting_heart_rate", r.resting_heart_rate),
        ("heart_rate_variability", r.heart_rate_variability),
    ] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(Violation::new(name, field, "must be non-negative"));
            }
        }
    }

    if let (Some(bed), Some(wake)) = (r.bed_time, r.wake_up_time) {
        if bed >= wake {
            out.push(Violation::new(name, "bed_time", "bed_time must precede wake_up_time"));
        }
    }
    if let Some(wake) = r.wake_up_time {
        if wake.date() != r.date {
            out.push(Violation::new(name, "wake_up_time", "wake_up_time must fall on the record date"));
        }
    }
}

fn check_activity(name: &str, a: &ActivityRecord, out: &mut Vec<Violation>) {
    if !is_activity_name(&a.activity_name) {
        out.push(Violation::new(
            name,
            "activityName",
            format!("unknown activity type '{}'", a.activity_name),
        ));
    }
    let elapsed = a.end_time - a.start_time;
    if (elapsed - Duration::minutes(i64::from(a.duration))).num_seconds().abs() > 60 {
        out.push(Violation::new(
            name,
            "duration",
            format!(
                "endTime - startTime ({} min) must equal duration ({} min)",
                elapsed.num_minutes(),
                a.duration
            ),
        ));
    }
    if let Some(speed) = a.speed {
        if !(speed >= 0.0 && speed.is_finite()) {
            out.push(Violation::new(name, "speed", "speed must be non-negative"));
        }
    }
    if let (Some(distance), Some(speed)) = (a.distance, a.speed) {
        if a.duration > 0 {
            let expected = f64::from(distance) / (f64::from(a.duration) * 60.0);
            if (speed - expected).abs() > SPEED_TOLERANCE {
                out.push(Violation::new(
                    name,
                    "speed",
                    format!("speed {speed:.3} inconsistent with distance/duration ({expected:.3})"),
                ));
            }
        }
    }
}

fn check_dataset(ds: &UserDataset, out: &mut Vec<Violation>) {
    for (i, pair) in ds.daily.windows(2).enumerate() {
        if pair[1].date <= pair[0].date {
            out.push(Violation::new(
                format!("daily[{}]", i + 1),
                "datetime",
                "daily dates must be strictly increasing",
            ));
        }
    }
    if let (Some(first), Some(last)) = (ds.daily.first(), ds.daily.last()) {
        if (last.date - first.date).num_days() + 1 > MAX_SPAN_DAYS {
            out.push(Violation::new(
                "dataset",
                "datetime",
                format!("daily records must span at most {MAX_SPAN_DAYS} days"),
            ));
        }
        if ds.today < last.date {
            out.push(Violation::new("dataset", "today", "today must not precede the last daily date"));
        }
    }
    for (i, pair) in ds.activities.windows(2).enumerate() {
        if pair[1].start_time < pair[0].start_time {
            out.push(Violation::new(
                format!("activities[{}]", i + 1),
                "startTime",
                "activities must be sorted by startTime",
            ));
        }
    }
    let first_day = ds.daily.first().map(|r| r.date);
    for (i, a) in ds.activities.iter().enumerate() {
        let d = a.date();
        if first_day.is_some_and(|f| d < f) || d > ds.today {
            out.push(Violation::new(
                format!("activities[{i}]"),
                "startTime",
                "activity date must fall within [first daily date, today]",
            ));
        }
    }
}
