//! Wearable data schemas: demographic context, daily summaries, activity
//! events and the per-user dataset container.

mod io;
mod markdown;
mod validate;

pub use io::{
    load_cohort, load_dataset, save_cohort, save_dataset, CohortEntry, CohortManifest, LoadError, ACTIVITIES_FILE,
    CONTEXT_FILE, DAILY_FILE, MANIFEST_FILE,
};
pub use markdown::render_markdown;
pub use validate::{validate_dataset, Violation};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// The nine activity types a device can log.
pub const ACTIVITY_NAMES: [&str; 9] = [
    "Outdoor Bike",
    "Run",
    "Bike",
    "Aerobic Workout",
    "Weights",
    "Elliptical",
    "Yoga",
    "Spinning",
    "Treadmill",
];

/// Daily-summary columns in file order.
pub const DAILY_COLUMNS: [&str; 20] = [
    "datetime",
    "steps",
    "sleep_minutes",
    "bed_time",
    "wake_up_time",
    "resting_heart_rate",
    "heart_rate_variability",
    "active_zone_minutes",
    "deep_sleep_minutes",
    "rem_sleep_minutes",
    "light_sleep_minutes",
    "awake_minutes",
    "deep_sleep_percent",
    "rem_sleep_percent",
    "light_sleep_percent",
    "awake_percent",
    "stress_management_score",
    "fatburn_active_zone_minutes",
    "cardio_active_zone_minutes",
    "peak_active_zone_minutes",
];

/// Activity columns in file order.
pub const ACTIVITY_COLUMNS: [&str; 11] = [
    "startTime",
    "endTime",
    "activityName",
    "distance",
    "duration",
    "elevationGain",
    "averageHeartRate",
    "calories",
    "steps",
    "activeZoneMinutes",
    "speed",
];

/// Daily columns that carry a number (everything except the date and the two
/// timestamps).
pub const DAILY_NUMERIC_COLUMNS: [&str; 17] = [
    "steps",
    "sleep_minutes",
    "resting_heart_rate",
    "heart_rate_variability",
    "active_zone_minutes",
    "deep_sleep_minutes",
    "rem_sleep_minutes",
    "light_sleep_minutes",
    "awake_minutes",
    "deep_sleep_percent",
    "rem_sleep_percent",
    "light_sleep_percent",
    "awake_percent",
    "stress_management_score",
    "fatburn_active_zone_minutes",
    "cardio_active_zone_minutes",
    "peak_active_zone_minutes",
];

/// Activity columns that carry a number.
pub const ACTIVITY_NUMERIC_COLUMNS: [&str; 8] = [
    "distance",
    "duration",
    "elevationGain",
    "averageHeartRate",
    "calories",
    "steps",
    "activeZoneMinutes",
    "speed",
];

/// Numeric context fields addressable as `context["..."]`.
pub const CONTEXT_NUMERIC_FIELDS: [&str; 3] = ["age", "weight_kg", "height_cm"];

/// Sleep columns that share a device-off night.
pub const SLEEP_COLUMNS: [&str; 11] = [
    "sleep_minutes",
    "bed_time",
    "wake_up_time",
    "deep_sleep_minutes",
    "rem_sleep_minutes",
    "light_sleep_minutes",
    "awake_minutes",
    "deep_sleep_percent",
    "rem_sleep_percent",
    "light_sleep_percent",
    "awake_percent",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unspecified,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unspecified => "unspecified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicContext {
    pub age: u32,
    pub gender: Gender,
    pub weight_kg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_cm: Option<f64>,
}

impl DemographicContext {
    /// Numeric lookup used by `context["..."]` in the analysis language.
    /// `None` for unknown fields, `Some(None)` for a known but absent value.
    pub fn numeric_field(&self, name: &str) -> Option<Option<f64>> {
        match name {
            "age" => Some(Some(f64::from(self.age))),
            "weight_kg" => Some(Some(self.weight_kg)),
            "height_cm" => Some(self.height_cm),
            _ => None,
        }
    }
}

/// One day of summary metrics. Every metric is optional so that missing
/// device data can be represented.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub steps: Option<u32>,
    pub sleep_minutes: Option<f64>,
    pub bed_time: Option<NaiveDateTime>,
    pub wake_up_time: Option<NaiveDateTime>,
    pub resting_heart_rate: Option<f64>,
    pub heart_rate_variability: Option<f64>,
    pub active_zone_minutes: Option<u32>,
    pub deep_sleep_minutes: Option<f64>,
    pub rem_sleep_minutes: Option<f64>,
    pub light_sleep_minutes: Option<f64>,
    pub awake_minutes: Option<f64>,
    pub deep_sleep_percent: Option<f64>,
    pub rem_sleep_percent: Option<f64>,
    pub light_sleep_percent: Option<f64>,
    pub awake_percent: Option<f64>,
    pub stress_management_score: Option<u32>,
    pub fatburn_active_zone_minutes: Option<u32>,
    pub cardio_active_zone_minutes: Option<u32>,
    pub peak_active_zone_minutes: Option<u32>,
}

impl DailyRecord {
    pub fn empty(date: NaiveDate) -> Self {
        DailyRecord {
            date,
            ..Default::default()
        }
    }

    /// Numeric value of a column. `None` if the column is not a numeric daily
    /// column, `Some(None)` if the cell is missing.
    pub fn numeric(&self, column: &str) -> Option<Option<f64>> {
        let int = |v: Option<u32>| Some(v.map(f64::from));
        match column {
            "steps" => int(self.steps),
            "sleep_minutes" => Some(self.sleep_minutes),
            "resting_heart_rate" => Some(self.resting_heart_rate),
            "heart_rate_variability" => Some(self.heart_rate_variability),
            "active_zone_minutes" => int(self.active_zone_minutes),
            "deep_sleep_minutes" => Some(self.deep_sleep_minutes),
            "rem_sleep_minutes" => Some(self.rem_sleep_minutes),
            "light_sleep_minutes" => Some(self.light_sleep_minutes),
            "awake_minutes" => Some(self.awake_minutes),
            "deep_sleep_percent" => Some(self.deep_sleep_percent),
            "rem_sleep_percent" => Some(self.rem_sleep_percent),
            "light_sleep_percent" => Some(self.light_sleep_percent),
            "awake_percent" => Some(self.awake_percent),
            "stress_management_score" => int(self.stress_management_score),
            "fatburn_active_zone_minutes" => int(self.fatburn_active_zone_minutes),
            "cardio_active_zone_minutes" => int(self.cardio_active_zone_minutes),
            "peak_active_zone_minutes" => int(self.peak_active_zone_minutes),
            _ => None,
        }
    }

    /// Erase one column's value. Returns false for unknown columns and for
    /// `datetime`, which is never erased.
    pub fn clear(&mut self, column: &str) -> bool {
        match column {
            "steps" => self.steps = None,
            "sleep_minutes" => self.sleep_minutes = None,
            "bed_time" => self.bed_time = None,
            "wake_up_time" => self.wake_up_time = None,
            "resting_heart_rate" => self.resting_heart_rate = None,
            "heart_rate_variability" => self.heart_rate_variability = None,
            "active_zone_minutes" => self.active_zone_minutes = None,
            "deep_sleep_minutes" => self.deep_sleep_minutes = None,
            "rem_sleep_minutes" => self.rem_sleep_minutes = None,
            "light_sleep_minutes" => self.light_sleep_minutes = None,
            "awake_minutes" => self.awake_minutes = None,
            "deep_sleep_percent" => self.deep_sleep_percent = None,
            "rem_sleep_percent" => self.rem_sleep_percent = None,
            "light_sleep_percent" => self.light_sleep_percent = None,
            "awake_percent" => self.awake_percent = None,
            "stress_management_score" => self.stress_management_score = None,
            "fatburn_active_zone_minutes" => self.fatburn_active_zone_minutes = None,
            "cardio_active_zone_minutes" => self.cardio_active_zone_minutes = None,
            "peak_active_zone_minutes" => self.peak_active_zone_minutes = None,
            _ => return false,
        }
        true
    }

    pub fn is_present(&self, column: &str) -> bool {
        match column {
            "datetime" => true,
            "bed_time" => self.bed_time.is_some(),
            "wake_up_time" => self.wake_up_time.is_some(),
            other => matches!(self.numeric(other), Some(Some(_))),
        }
    }
}

/// One logged exercise session. `activity_name` is kept as free text so that
/// out-of-vocabulary names survive loading and surface as violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub activity_name: String,
    pub distance: Option<u32>,
    pub duration: u32,
    pub elevation_gain: Option<u32>,
    pub average_heart_rate: Option<u32>,
    pub calories: Option<u32>,
    pub steps: Option<u32>,
    pub active_zone_minutes: Option<u32>,
    pub speed: Option<f64>,
}

impl ActivityRecord {
    pub fn date(&self) -> NaiveDate {
        self.start_time.date()
    }

    /// Numeric value of a column, same convention as [`DailyRecord::numeric`].
    pub fn numeric(&self, column: &str) -> Option<Option<f64>> {
        let int = |v: Option<u32>| Some(v.map(f64::from));
        match column {
            "distance" => int(self.distance),
            "duration" => Some(Some(f64::from(self.duration))),
            "elevationGain" => int(self.elevation_gain),
            "averageHeartRate" => int(self.average_heart_rate),
            "calories" => int(self.calories),
            "steps" => int(self.steps),
            "activeZoneMinutes" => int(self.active_zone_minutes),
            "speed" => Some(self.speed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDataset {
    pub user_id: String,
    pub context: DemographicContext,
    pub daily: Vec<DailyRecord>,
    pub activities: Vec<ActivityRecord>,
    /// Evaluation anchor: "today" for every relative period.
    pub today: NaiveDate,
}

impl UserDataset {
    pub fn daily_on(&self, date: NaiveDate) -> Option<&DailyRecord> {
        self.daily
            .binary_search_by_key(&date, |r| r.date)
            .ok()
            .map(|i| &self.daily[i])
    }
}

pub fn is_activity_name(name: &str) -> bool {
    ACTIVITY_NAMES.contains(&name)
}
