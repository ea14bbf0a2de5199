use chrono::{Duration, NaiveDateTime};

use super::{UserDataset, ACTIVITY_COLUMNS, DAILY_COLUMNS};

fn int(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn dec(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn ts(v: Option<NaiveDateTime>) -> String {
    v.map(|t| t.format("%Y-%m-%d %H:%M").to_string()).unwrap_or_default()
}

fn row(cells: &[String]) -> String {
    format!("|{}|", cells.join("|"))
}

fn header(columns: &[&str]) -> String {
    let names: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    let dashes: Vec<String> = columns.iter().map(|_| "---".to_string()).collect();
    format!("{}\n{}", row(&names), row(&dashes))
}

/// Render the daily table and the activities table as GitHub pipe tables,
/// restricted to the `max_days` calendar days ending at `today`.
pub fn render_markdown(ds: &UserDataset, max_days: u32) -> String {
    let max_days = max_days.max(1);
    let start = ds.today - Duration::days(i64::from(max_days) - 1);
    let in_window = |d: chrono::NaiveDate| d >= start && d <= ds.today;

    let mut out = String::new();
    out.push_str("Daily summary\n\n");
    out.push_str(&header(&DAILY_COLUMNS));
    out.push('\n');
    for r in ds.daily.iter().filter(|r| in_window(r.date)) {
        let cells = [
            r.date.to_string(),
            int(r.steps),
            dec(r.sleep_minutes),
            ts(r.bed_time),
            ts(r.wake_up_time),
            dec(r.resting_heart_rate),
            dec(r.heart_rate_variability),
            int(r.active_zone_minutes),
            dec(r.deep_sleep_minutes),
            dec(r.rem_sleep_minutes),
            dec(r.light_sleep_minutes),
            dec(r.awake_minutes),
            dec(r.deep_sleep_percent),
            dec(r.rem_sleep_percent),
            dec(r.light_sleep_percent),
            dec(r.awake_percent),
            int(r.stress_management_score),
            int(r.fatburn_active_zone_minutes),
            int(r.cardio_active_zone_minutes),
            int(r.peak_active_zone_minutes),
        ];
        out.push_str(&row(&cells));
        out.push('\n');
    }

    out.push_str("\nActivities\n\n");
    out.push_str(&header(&ACTIVITY_COLUMNS));
    out.push('\n');
    for a in ds.activities.iter().filter(|a| in_window(a.date())) {
        let cells = [
            ts(Some(a.start_time)),
            ts(Some(a.end_time)),
            a.activity_name.clone(),
            int(a.distance),
            a.duration.to_string(),
            int(a.elevation_gain),
            int(a.average_heart_rate),
            int(a.calories),
            int(a.steps),
            int(a.active_zone_minutes),
            dec(a.speed),
        ];
        out.push_str(&row(&cells));
        out.push('\n');
    }
    out
}
