//! CSV/JSON persistence for user datasets and cohorts.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    validate_dataset, ActivityRecord, DailyRecord, DemographicContext, UserDataset, Violation,
    ACTIVITY_COLUMNS, DAILY_COLUMNS,
};

pub const DAILY_FILE: &str = "daily.csv";
pub const ACTIVITIES_FILE: &str = "activities.csv";
pub const CONTEXT_FILE: &str = "context.json";
pub const MANIFEST_FILE: &str = "manifest.json";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: io error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("dataset {user_id} failed validation with {} violation(s): {}", violations.len(), summarize(violations))]
    Validation {
        user_id: String,
        violations: Vec<Violation>,
    },
}

fn summarize(v: &[Violation]) -> String {
    v.iter().take(3).map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Serialize, Deserialize)]
struct ContextFile {
    user_id: String,
    #[serde(flatten)]
    context: DemographicContext,
}

/// One entry of a cohort directory's manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub user_id: String,
    pub dir: String,
    pub today: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub users: Vec<CohortEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LoadError + '_ {
    move |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_ts(v: Option<NaiveDateTime>) -> String {
    v.map(|t| t.format(TIMESTAMP_FORMAT).to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), LoadError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| LoadError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| LoadError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Write `daily.csv`, `activities.csv` and `context.json` into `dir`.
pub fn save_dataset(ds: &UserDataset, dir: &Path) -> Result<(), LoadError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let daily_rows = ds
        .daily
        .iter()
        .map(|r| {
            vec![
                r.date.to_string(),
                fmt_opt(r.steps),
                fmt_opt(r.sleep_minutes),
                fmt_ts(r.bed_time),
                fmt_ts(r.wake_up_time),
                fmt_opt(r.resting_heart_rate),
                fmt_opt(r.heart_rate_variability),
                fmt_opt(r.active_zone_minutes),
                fmt_opt(r.deep_sleep_minutes),
                fmt_opt(r.rem_sleep_minutes),
                fmt_opt(r.light_sleep_minutes),
                fmt_opt(r.awake_minutes),
                fmt_opt(r.deep_sleep_percent),
                fmt_opt(r.rem_sleep_percent),
                fmt_opt(r.light_sleep_percent),
                fmt_opt(r.awake_percent),
                fmt_opt(r.stress_management_score),
                fmt_opt(r.fatburn_active_zone_minutes),
                fmt_opt(r.cardio_active_zone_minutes),
                fmt_opt(r.peak_active_zone_minutes),
            ]
        })
        .collect();
    write_csv(&dir.join(DAILY_FILE), &DAILY_COLUMNS, daily_rows)?;

    let activity_rows = ds
        .activities
        .iter()
        .map(|a| {
            vec![
                a.start_time.format(TIMESTAMP_FORMAT).to_string(),
                a.end_time.format(TIMESTAMP_FORMAT).to_string(),
                a.activity_name.clone(),
                fmt_opt(a.distance),
                a.duration.to_string(),
                fmt_opt(a.elevation_gain),
                fmt_opt(a.average_heart_rate),
                fmt_opt(a.calories),
                fmt_opt(a.steps),
                fmt_opt(a.active_zone_minutes),
                fmt_opt(a.speed),
            ]
        })
        .collect();
    write_csv(&dir.join(ACTIVITIES_FILE), &ACTIVITY_COLUMNS, activity_rows)?;

    let ctx = ContextFile {
        user_id: ds.user_id.clone(),
        context: ds.context.clone(),
    };
    let ctx_path = dir.join(CONTEXT_FILE);
    let mut json = serde_json::to_string_pretty(&ctx).expect("context serializes");
    json.push('\n');
    fs::write(&ctx_path, json).map_err(io_err(&ctx_path))
}

/// Parsed CSV table keyed by column name.
struct Table {
    path: PathBuf,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, known: &[&str], required: &[&str]) -> Result<Table, LoadError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(bytes.as_slice());
        let parse_err = |e: csv::Error| LoadError::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        };
        let header = rdr.headers().map_err(parse_err)?.clone();
        let mut columns = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            if !known.contains(&name) {
                return Err(LoadError::Schema {
                    path: path.to_path_buf(),
                    message: format!("unknown column '{name}'"),
                });
            }
            if columns.insert(name.to_string(), i).is_some() {
                return Err(LoadError::Schema {
                    path: path.to_path_buf(),
                    message: format!("duplicate column '{name}'"),
                });
            }
        }
        for req in required {
            if !columns.contains_key(*req) {
                return Err(LoadError::Schema {
                    path: path.to_path_buf(),
                    message: format!("missing required column '{req}'"),
                });
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(parse_err)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        Ok(Table {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    fn cell<'a>(&self, rec: &'a csv::StringRecord, column: &str) -> Option<&'a str> {
        let idx = *self.columns.get(column)?;
        rec.get(idx).map(str::trim).filter(|s| !s.is_empty())
    }

    fn parse<T>(
        &self,
        line: u64,
        rec: &csv::StringRecord,
        column: &str,
        f: impl FnOnce(&str) -> Option<T>,
    ) -> Result<Option<T>, LoadError> {
        match self.cell(rec, column) {
            None => Ok(None),
            Some(raw) => f(raw).map(Some).ok_or_else(|| LoadError::Parse {
                path: self.path.clone(),
                line,
                message: format!("invalid value '{raw}' for column '{column}'"),
            }),
        }
    }

    fn required<T>(
        &self,
        line: u64,
        rec: &csv::StringRecord,
        column: &str,
        f: impl FnOnce(&str) -> Option<T>,
    ) -> Result<T, LoadError> {
        self.parse(line, rec, column, f)?.ok_or_else(|| LoadError::Parse {
            path: self.path.clone(),
            line,
            message: format!("empty value for required column '{column}'"),
        })
    }
}

fn p_u32(s: &str) -> Option<u32> {
    s.parse().ok()
}

fn p_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn p_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn p_ts(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
}

fn read_daily(path: &Path) -> Result<Vec<DailyRecord>, LoadError> {
    let t = Table::read(path, &DAILY_COLUMNS, &["datetime"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let l = *line;
        out.push(DailyRecord {
            date: t.required(l, rec, "datetime", p_date)?,
            steps: t.parse(l, rec, "steps", p_u32)?,
            sleep_minutes: t.parse(l, rec, "sleep_minutes", p_f64)?,
            bed_time: t.parse(l, rec, "bed_time", p_ts)?,
            wake_up_time: t.parse(l, rec, "wake_up_time", p_ts)?,
            resting_heart_rate: t.parse(l, rec, "resting_heart_rate", p_f64)?,
            heart_rate_variability: t.parse(l, rec, "heart_rate_variability", p_f64)?,
            active_zone_minutes: t.parse(l, rec, "active_zone_minutes", p_u32)?,
            deep_sleep_minutes: t.parse(l, rec, "deep_sleep_minutes", p_f64)?,
            rem_sleep_minutes: t.parse(l, rec, "rem_sleep_minutes", p_f64)?,
            light_sleep_minutes: t.parse(l, rec, "light_sleep_minutes", p_f64)?,
            awake_minutes: t.parse(l, rec, "awake_minutes", p_f64)?,
            deep_sleep_percent: t.parse(l, rec, "deep_sleep_percent", p_f64)?,
            rem_sleep_percent: t.parse(l, rec, "rem_sleep_percent", p_f64)?,
            light_sleep_percent: t.parse(l, rec, "light_sleep_percent", p_f64)?,
            awake_percent: t.parse(l, rec, "awake_percent", p_f64)?,
            stress_management_score: t.parse(l, rec, "stress_management_score", p_u32)?,
            fatburn_active_zone_minutes: t.parse(l, rec, "fatburn_active_zone_minutes", p_u32)?,
            cardio_active_zone_minutes: t.parse(l, rec, "cardio_active_zone_minutes", p_u32)?,
            peak_active_zone_minutes: t.parse(l, rec, "peak_active_zone_minutes", p_u32)?,
        });
    }
    Ok(out)
}

fn read_activities(path: &Path) -> Result<Vec<ActivityRecord>, LoadError> {
    let t = Table::read(
        path,
        &ACTIVITY_COLUMNS,
        &["startTime", "endTime", "activityName", "duration"],
    )?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let l = *line;
        out.push(ActivityRecord {
            start_time: t.required(l, rec, "startTime", p_ts)?,
            end_time: t.required(l, rec, "endTime", p_ts)?,
            activity_name: t.required(l, rec, "activityName", |s| Some(s.to_string()))?,
            distance: t.parse(l, rec, "distance", p_u32)?,
            duration: t.required(l, rec, "duration", p_u32)?,
            elevation_gain: t.parse(l, rec, "elevationGain", p_u32)?,
            average_heart_rate: t.parse(l, rec, "averageHeartRate", p_u32)?,
            calories: t.parse(l, rec, "calories", p_u32)?,
            steps: t.parse(l, rec, "steps", p_u32)?,
            active_zone_minutes: t.parse(l, rec, "activeZoneMinutes", p_u32)?,
            speed: t.parse(l, rec, "speed", p_f64)?,
        });
    }
    Ok(out)
}

/// Load and validate one user's dataset.
pub fn load_dataset(
    daily_path: &Path,
    activities_path: &Path,
    context_path: &Path,
    today: NaiveDate,
) -> Result<UserDataset, LoadError> {
    let daily = read_daily(daily_path)?;
    let activities = read_activities(activities_path)?;
    let raw = fs::read_to_string(context_path).map_err(io_err(context_path))?;
    let ctx: ContextFile = serde_json::from_str(&raw).map_err(|e| LoadError::Parse {
        path: context_path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let ds = UserDataset {
        user_id: ctx.user_id,
        context: ctx.context,
        daily,
        activities,
        today,
    };
    let violations = validate_dataset(&ds);
    if violations.is_empty() {
        Ok(ds)
    } else {
        Err(LoadError::Validation {
            user_id: ds.user_id,
            violations,
        })
    }
}

/// Write every dataset under `root/<user_id>/` plus `root/manifest.json`.
pub fn save_cohort(cohort: &[UserDataset], root: &Path) -> Result<CohortManifest, LoadError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mut users = Vec::with_capacity(cohort.len());
    for ds in cohort {
        save_dataset(ds, &root.join(&ds.user_id))?;
        users.push(CohortEntry {
            user_id: ds.user_id.clone(),
            dir: ds.user_id.clone(),
            today: ds.today,
        });
    }
    let manifest = CohortManifest { users };
    let path = root.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Load every dataset listed in `root/manifest.json`, in manifest order.
pub fn load_cohort(root: &Path) -> Result<Vec<UserDataset>, LoadError> {
    let path = root.join(MANIFEST_FILE);
    let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: CohortManifest = serde_json::from_str(&raw).map_err(|e| LoadError::Parse {
        path: path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    manifest
        .users
        .iter()
        .map(|e| {
            let dir = root.join(&e.dir);
            load_dataset(
                &dir.join(DAILY_FILE),
                &dir.join(ACTIVITIES_FILE),
                &dir.join(CONTEXT_FILE),
                e.today,
            )
        })
        .collect()
}
