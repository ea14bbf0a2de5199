//! Latent-factor AR(1) simulation of the daily summary table.

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::{GeneratorConfig, MetricSpec, BASE_METRICS};
use crate::datamodel::{DailyRecord, DemographicContext};

/// Steps discarded before the first emitted day so the chains start near
/// their stationary distribution.
const BURN_IN: usize = 30;

/// Innovation variance that gives a standardized metric unit stationary
/// variance: `(1 - ar^2) - loading^2 * (1 + ar*rf) / (1 - ar*rf)`, where
/// `rf` is the latent factor's AR coefficient and the factor itself has unit
/// variance.
pub fn innovation_variance(ar: f64, loading: f64, factor_ar: f64) -> f64 {
    let rr = ar * factor_ar;
    (1.0 - ar * ar) - loading * loading * (1.0 + rr) / (1.0 - rr)
}

fn context_mean(spec: &MetricSpec, ctx: &DemographicContext, cfg: &GeneratorConfig) -> f64 {
    let r = &cfg.context.reference;
    spec.context_effects.iter().fold(spec.mean, |acc, (field, effect)| {
        let reference = match field.as_str() {
            "age" => r.age,
            "weight_kg" => r.weight_kg,
            _ => r.height_cm,
        };
        let value = ctx.numeric_field(field).flatten().unwrap_or(reference);
        acc + effect * (value - reference)
    })
}

fn emit(spec: &MetricSpec, mean: f64, z: f64) -> f64 {
    let v = (mean + spec.std * z).clamp(spec.min, spec.max);
    if spec.integer {
        v.round()
    } else {
        (v * 10.0).round() / 10.0
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Simulated base metrics, one row per day, columns in [`BASE_METRICS`] order.
pub fn simulate_base_metrics<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    ctx: &DemographicContext,
    rng: &mut R,
) -> Vec<[f64; BASE_METRICS.len()]> {
    let specs: Vec<&MetricSpec> = BASE_METRICS.iter().map(|m| &cfg.metrics[*m]).collect();
    let means: Vec<f64> = specs.iter().map(|s| context_mean(s, ctx, cfg)).collect();
    let eta_sd: Vec<f64> = specs
        .iter()
        .map(|s| innovation_variance(s.ar, s.loading, cfg.latent_factor_ar).max(0.0).sqrt())
        .collect();
    let rf = cfg.latent_factor_ar;
    let factor_sd = (1.0 - rf * rf).sqrt();

    let mut f: f64 = StandardNormal.sample(rng);
    let mut z: Vec<f64> = specs.iter().map(|_| StandardNormal.sample(rng)).collect();
    let mut rows = Vec::with_capacity(cfg.days as usize);
    for t in 0..BURN_IN + cfg.days as usize {
        let e: f64 = StandardNormal.sample(rng);
        f = rf * f + factor_sd * e;
        for (i, s) in specs.iter().enumerate() {
            let eta: f64 = StandardNormal.sample(rng);
            z[i] = s.ar * z[i] + s.loading * f + eta_sd[i] * eta;
        }
        if t >= BURN_IN {
            let mut row = [0.0; BASE_METRICS.len()];
            for (i, s) in specs.iter().enumerate() {
                row[i] = emit(s, means[i], z[i]);
            }
            rows.push(row);
        }
    }
    rows
}

fn noisy_fraction<R: Rng + ?Sized>(base: f64, sd: f64, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return base;
    }
    let n = Normal::new(base, sd).expect("finite sd");
    n.sample(rng).clamp(0.02, 0.6)
}

/// Build the daily table: base metrics plus derived sleep-stage minutes,
/// percents, bed and wake times, and the active-zone split.
pub fn generate_daily<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    ctx: &DemographicContext,
    rng: &mut R,
) -> Vec<DailyRecord> {
    let base = simulate_base_metrics(cfg, ctx, rng);
    let first = cfg.end_date - Duration::days(i64::from(cfg.days) - 1);
    let stages = cfg.sleep_stages;
    let zones = cfg.zone_split;
    let wake_dist = Normal::new(stages.wake_minute_mean, stages.wake_minute_sd.max(0.0)).expect("finite sd");

    base.iter()
        .enumerate()
        .map(|(i, row)| {
            let date: NaiveDate = first + Duration::days(i as i64);
            let [steps, sleep, awake, rhr, hrv, azm, stress] = *row;
            let mut r = DailyRecord::empty(date);
            r.steps = Some(steps as u32);
            r.resting_heart_rate = Some(rhr);
            r.heart_rate_variability = Some(hrv);
            r.stress_management_score = Some(stress as u32);

            let deep_f = noisy_fraction(stages.deep_fraction, stages.fraction_sd, rng);
            let rem_f = noisy_fraction(stages.rem_fraction, stages.fraction_sd, rng);
            let deep = (sleep * deep_f).round();
            let rem = (sleep * rem_f).round();
            let light = sleep - deep - rem;
            let period = sleep + awake;
            r.sleep_minutes = Some(sleep);
            r.deep_sleep_minutes = Some(deep);
            r.rem_sleep_minutes = Some(rem);
            r.light_sleep_minutes = Some(light);
            r.awake_minutes = Some(awake);
            r.deep_sleep_percent = Some(round2(deep / period * 100.0));
            r.rem_sleep_percent = Some(round2(rem / period * 100.0));
            r.light_sleep_percent = Some(round2(light / period * 100.0));
            r.awake_percent = Some(round2(awake / period * 100.0));

            let wake_minute = wake_dist.sample(rng).round().clamp(240.0, 660.0) as i64;
            let wake = date.and_time(NaiveTime::MIN) + Duration::minutes(wake_minute);
            r.wake_up_time = Some(wake);
            r.bed_time = Some(wake - Duration::minutes(period as i64));

            let total = azm as u32;
            let fat_f = noisy_fraction(zones.fatburn_fraction, zones.fraction_sd, rng);
            let cardio_f = noisy_fraction(zones.cardio_fraction, zones.fraction_sd, rng);
            let fat = ((f64::from(total) * fat_f).round() as u32).min(total);
            let cardio = ((f64::from(total) * cardio_f).round() as u32).min(total - fat);
            r.active_zone_minutes = Some(total);
            r.fatburn_active_zone_minutes = Some(fat);
            r.cardio_active_zone_minutes = Some(cardio);
            r.peak_active_zone_minutes = Some(total - fat - cardio);
            r
        })
        .collect()
}
