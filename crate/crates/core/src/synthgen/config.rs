use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::datamodel::ACTIVITY_NAMES;

/// Default configuration shipped with the crate.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../data/generator_default.json");

/// Daily metrics simulated directly by the autoregressive model; every
/// other daily column is derived from these.
pub const BASE_METRICS: [&str; 7] = [
    "steps",
    "sleep_minutes",
    "awake_minutes",
    "resting_heart_rate",
    "heart_rate_variability",
    "active_zone_minutes",
    "stress_management_score",
];

/// Missingness groups. Columns inside a group are erased together.
pub const MISSINGNESS_GROUPS: [(&str, &[&str]); 6] = [
    ("sleep", &crate::datamodel::SLEEP_COLUMNS),
    ("steps", &["steps"]),
    ("resting_heart_rate", &["resting_heart_rate"]),
    ("heart_rate_variability", &["heart_rate_variability"]),
    (
        "active_zone_minutes",
        &[
            "active_zone_minutes",
            "fatburn_active_zone_minutes",
            "cardio_active_zone_minutes",
            "peak_active_zone_minutes",
        ],
    ),
    ("stress_management_score", &["stress_management_score"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub version: u32,
    pub days: u32,
    /// Last simulated date; also the dataset's `today`.
    pub end_date: NaiveDate,
    pub seed: u64,
    pub context: ContextConfig,
    /// AR coefficient of the shared daily latent factor.
    pub latent_factor_ar: f64,
    pub metrics: BTreeMap<String, MetricSpec>,
    pub sleep_stages: SleepStageConfig,
    pub zone_split: ZoneSplitConfig,
    /// Mean activities per day.
    pub activity_rate: f64,
    pub activity_types: BTreeMap<String, ActivityProfile>,
    pub missingness: MissingnessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextConfig {
    /// Correlation of the latent normals for (age, weight, height).
    pub correlation: [[f64; 3]; 3],
    pub age: AgeSpec,
    pub weight_kg: TruncatedNormalSpec,
    pub height_cm: TruncatedNormalSpec,
    pub gender_weights: GenderWeights,
    /// Context values at which metric means equal their configured `mean`.
    pub reference: ContextReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeSpec {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormalSpec {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenderWeights {
    pub female: f64,
    pub male: f64,
    pub unspecified: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextReference {
    pub age: f64,
    pub weight_kg: f64,
    pub height_cm: f64,
}

/// Marginal and dynamics of one base metric.
///
/// In standardized units the metric follows
/// `z_t = ar * z_{t-1} + loading * f_t + eta_t`, with the innovation variance
/// chosen so that `z` has unit stationary variance. The emitted value is
/// `clip(mean_ctx + std * z_t)`, rounded when `integer` is set, where
/// `mean_ctx = mean + sum(effect * (context_field - reference))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub integer: bool,
    pub ar: f64,
    pub loading: f64,
    #[serde(default)]
    pub context_effects: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepStageConfig {
    pub deep_fraction: f64,
    pub rem_fraction: f64,
    pub fraction_sd: f64,
    /// Wake-up time as minutes after midnight.
    pub wake_minute_mean: f64,
    pub wake_minute_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneSplitConfig {
    pub fatburn_fraction: f64,
    pub cardio_fraction: f64,
    pub fraction_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub weight: f64,
    pub log_duration_mean: f64,
    pub log_duration_sd: f64,
    /// Metres per second; distance and speed are only logged when set.
    #[serde(default)]
    pub speed_mean: Option<f64>,
    #[serde(default)]
    pub speed_sd: Option<f64>,
    /// Steps per minute; activity steps are only logged when set.
    #[serde(default)]
    pub cadence: Option<f64>,
    pub heart_rate_mean: f64,
    pub kcal_per_minute: f64,
    #[serde(default)]
    pub elevation_per_km: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessConfig {
    pub default_rate: f64,
    pub default_burst: f64,
    /// Per-group overrides keyed by the names in [`MISSINGNESS_GROUPS`].
    #[serde(default)]
    pub overrides: BTreeMap<String, MissingSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingSpec {
    /// Stationary probability that a day is missing.
    pub rate: f64,
    /// Probability that a missing day is followed by another missing day.
    pub burst: f64,
}

impl MissingnessConfig {
    pub fn spec_for(&self, group: &str) -> MissingSpec {
        self.overrides.get(group).copied().unwrap_or(MissingSpec {
            rate: self.default_rate,
            burst: self.default_burst,
        })
    }

    /// Same rate and burst for every group.
    pub fn uniform(rate: f64, burst: f64) -> Self {
        MissingnessConfig {
            default_rate: rate,
            default_burst: burst,
            overrides: BTreeMap::new(),
        }
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG_JSON).expect("shipped generator config is valid JSON")
    }
}

fn cfg_err(msg: impl Into<String>) -> SynthError {
    SynthError::Config(msg.into())
}

fn check_unit(name: &str, v: f64) -> Result<(), SynthError> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(cfg_err(format!("{name} must be in [0, 1), got {v}")))
    }
}

impl GeneratorConfig {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let cfg: GeneratorConfig =
            serde_json::from_str(text).map_err(|e| cfg_err(format!("invalid config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(1..=31).contains(&self.days) {
            return Err(cfg_err(format!("days must be in [1, 31], got {}", self.days)));
        }
        super::context::correlation_factor(&self.context.correlation)?;

        let ctx = &self.context;
        if ctx.age.min < 18 || ctx.age.max > 80 || ctx.age.min > ctx.age.max {
            return Err(cfg_err("age range must lie within [18, 80]"));
        }
        for (name, m) in [("weight_kg", ctx.weight_kg), ("height_cm", ctx.height_cm)] {
            if !(m.std >= 0.0 && m.min <= m.mean && m.mean <= m.max) {
                return Err(cfg_err(format!("{name}: need std >= 0 and min <= mean <= max")));
            }
        }
        if ctx.weight_kg.min <= 0.0 {
            return Err(cfg_err("weight_kg.min must be positive"));
        }
        if ctx.height_cm.min < 100.0 || ctx.height_cm.max > 230.0 {
            return Err(cfg_err("height_cm range must lie within [100, 230]"));
        }
        let g = ctx.gender_weights;
        if g.female < 0.0 || g.male < 0.0 || g.unspecified < 0.0 || g.female + g.male + g.unspecified <= 0.0 {
            return Err(cfg_err("gender weights must be non-negative with a positive sum"));
        }

        check_unit("latent_factor_ar", self.latent_factor_ar)?;
        for name in BASE_METRICS {
            let m = self
                .metrics
                .get(name)
                .ok_or_else(|| cfg_err(format!("missing metric spec '{name}'")))?;
            check_unit(&format!("{name}.ar"), m.ar)?;
            if !(m.std >= 0.0 && m.min <= m.max && m.min >= 0.0) {
                return Err(cfg_err(format!("{name}: need std >= 0 and 0 <= min <= max")));
            }
            if super::daily::innovation_variance(m.ar, m.loading, self.latent_factor_ar) < 0.0 {
                return Err(cfg_err(format!(
                    "{name}: loading {} too large for ar {} (innovation variance would be negative)",
                    m.loading, m.ar
                )));
            }
            for field in m.context_effects.keys() {
                if !crate::datamodel::CONTEXT_NUMERIC_FIELDS.contains(&field.as_str()) {
                    return Err(cfg_err(format!("{name}: unknown context field '{field}'")));
                }
            }
        }
        if let Some(extra) = self.metrics.keys().find(|k| !BASE_METRICS.contains(&k.as_str())) {
            return Err(cfg_err(format!("'{extra}' is not a simulated metric")));
        }
        if self.metrics["stress_management_score"].min < 1.0 || self.metrics["stress_management_score"].max > 100.0 {
            return Err(cfg_err("stress_management_score range must lie within [1, 100]"));
        }
        if self.metrics["sleep_minutes"].min <= 0.0 {
            return Err(cfg_err("sleep_minutes.min must be positive"));
        }

        let s = self.sleep_stages;
        if !(s.deep_fraction > 0.0 && s.rem_fraction > 0.0 && s.deep_fraction + s.rem_fraction < 1.0 && s.fraction_sd >= 0.0) {
            return Err(cfg_err("sleep stage fractions must be positive and sum below 1"));
        }
        let z = self.zone_split;
        if !(z.fatburn_fraction >= 0.0 && z.cardio_fraction >= 0.0 && z.fatburn_fraction + z.cardio_fraction <= 1.0 && z.fraction_sd >= 0.0) {
            return Err(cfg_err("zone fractions must be non-negative and sum to at most 1"));
        }

        if !(self.activity_rate >= 0.0 && self.activity_rate.is_finite()) {
            return Err(cfg_err("activity_rate must be non-negative"));
        }
        if self.activity_types.is_empty() || self.activity_types.values().all(|p| p.weight <= 0.0) {
            return Err(cfg_err("at least one activity type needs a positive weight"));
        }
        for (name, p) in &self.activity_types {
            if !ACTIVITY_NAMES.contains(&name.as_str()) {
                return Err(cfg_err(format!("unknown activity type '{name}'")));
            }
            if p.weight < 0.0 || p.log_duration_sd < 0.0 || p.speed_mean.is_some() != p.speed_sd.is_some() {
                return Err(cfg_err(format!("activity '{name}': invalid profile")));
            }
        }

        for (group, _) in MISSINGNESS_GROUPS {
            let spec = self.missingness.spec_for(group);
            check_unit(&format!("missingness.{group}.rate"), spec.rate)?;
            check_unit(&format!("missingness.{group}.burst"), spec.burst)?;
            if super::missing::entry_probability(spec) > 1.0 {
                return Err(cfg_err(format!(
                    "missingness.{group}: rate {} unreachable with burst {}",
                    spec.rate, spec.burst
                )));
            }
        }
        if let Some(k) = self
            .missingness
            .overrides
            .keys()
            .find(|k| !MISSINGNESS_GROUPS.iter().any(|(g, _)| g == k))
        {
            return Err(cfg_err(format!("unknown missingness group '{k}'")));
        }
        super::missing::check_steps_floor(self.missingness.spec_for("steps").rate, self.days as usize)
    }
}
