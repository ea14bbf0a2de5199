//! Activity events: Poisson counts per day, weighted type choice,
//! log-normal durations, and dependent fields computed from the type profile.

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};

use super::config::{ActivityProfile, GeneratorConfig};
use super::SynthError;
use crate::datamodel::{ActivityRecord, DemographicContext};

const MIN_DURATION: f64 = 10.0;
const MAX_DURATION: f64 = 180.0;
/// No session starts after 20:30, so every session starts on its own day.
const LAST_START_MINUTE: i64 = 20 * 60 + 30;

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd.max(0.0)).expect("finite parameters")
}

fn build_activity<R: Rng + ?Sized>(
    name: &str,
    p: &ActivityProfile,
    start_minute: i64,
    date: NaiveDate,
    ctx: &DemographicContext,
    rng: &mut R,
) -> ActivityRecord {
    let dur_dist = LogNormal::new(p.log_duration_mean, p.log_duration_sd.max(0.0)).expect("finite parameters");
    let duration = dur_dist.sample(rng).round().clamp(MIN_DURATION, MAX_DURATION) as u32;
    let start = date.and_time(NaiveTime::MIN) + Duration::minutes(start_minute);
    let end = start + Duration::minutes(i64::from(duration));
    let seconds = f64::from(duration) * 60.0;

    let (distance, speed) = match (p.speed_mean, p.speed_sd) {
        (Some(m), Some(sd)) => {
            let v = normal(m, sd).sample(rng).max(0.5);
            let distance = (v * seconds).round() as u32;
            let speed = (f64::from(distance) / seconds * 1000.0).round() / 1000.0;
            (Some(distance), Some(speed))
        }
        _ => (None, None),
    };
    let elevation_gain = match (p.elevation_per_km, distance) {
        (Some(per_km), Some(d)) => {
            let mean = per_km * f64::from(d) / 1000.0;
            Some(normal(mean, mean * 0.3).sample(rng).round().max(0.0) as u32)
        }
        _ => None,
    };
    let steps = p
        .cadence
        .map(|c| (normal(c, c * 0.05).sample(rng).max(0.0) * f64::from(duration)).round() as u32);
    let hr = normal(p.heart_rate_mean, 8.0).sample(rng).round().clamp(60.0, 200.0);
    let calories = (p.kcal_per_minute * f64::from(duration) * ctx.weight_kg / 70.0).round() as u32;
    let intensity = ((hr - 100.0) / 60.0).clamp(0.0, 1.0);
    let azm = (f64::from(duration) * intensity).round() as u32;

    ActivityRecord {
        start_time: start,
        end_time: end,
        activity_name: name.to_string(),
        distance,
        duration,
        elevation_gain,
        average_heart_rate: Some(hr as u32),
        calories: Some(calories),
        steps,
        active_zone_minutes: Some(azm),
        speed,
    }
}

/// Activities for `dates`, sorted by start time. Same-day sessions are laid
/// out sequentially from the morning with gaps between them.
pub fn generate_activities<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    ctx: &DemographicContext,
    dates: &[NaiveDate],
    rng: &mut R,
) -> Result<Vec<ActivityRecord>, SynthError> {
    let names: Vec<&String> = cfg.activity_types.keys().collect();
    let weights: Vec<f64> = cfg.activity_types.values().map(|p| p.weight).collect();
    let chooser = WeightedIndex::new(&weights).map_err(|e| SynthError::Config(format!("activity weights: {e}")))?;
    let counts = if cfg.activity_rate > 0.0 {
        Some(Poisson::new(cfg.activity_rate).map_err(|e| SynthError::Config(format!("activity_rate: {e}")))?)
    } else {
        None
    };

    let mut out = Vec::new();
    for &date in dates {
        let n = counts.as_ref().map_or(0, |p| (p.sample(rng) as usize).min(4));
        let mut minute: i64 = rng.random_range(6 * 60..9 * 60);
        for _ in 0..n {
            if minute > LAST_START_MINUTE {
                break;
            }
            let name = names[chooser.sample(rng)];
            let a = build_activity(name, &cfg.activity_types[name], minute, date, ctx, rng);
            minute += i64::from(a.duration) + rng.random_range(30..150);
            out.push(a);
        }
    }
    Ok(out)
}
