use super::ast::TableName;
use super::error::DslError;
use super::value::{SeriesKey, TableView, Value};
use crate::datamodel::{UserDataset, ACTIVITY_NUMERIC_COLUMNS, DAILY_NUMERIC_COLUMNS};

/// Token emitted for an empty or all-missing selection.
pub const NO_DATA: &str = "NO_DATA";
/// Prefix of every error observation.
pub const ERROR_PREFIX: &str = "#ERROR#: ";

const MAX_LISTING_ROWS: usize = 20;

/// Up to six decimals, trailing zeros and a dangling point removed.
pub fn format_number(n: f64) -> String {
    if !n.is_finite() {
        return n.to_string();
    }
    let s = format!("{n:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Render a tool result the way the agent sees it.
pub fn format_observation(result: &Result<Value, DslError>, ds: &UserDataset) -> String {
    match result {
        Ok(v) => format_value(v, ds),
        Err(e) => format_error(e),
    }
}

pub fn format_error(e: &DslError) -> String {
    let msg = e.message.replace(['\n', '\r'], " ");
    format!("{ERROR_PREFIX}{}: {msg}", e.kind)
}

pub fn format_value(v: &Value, ds: &UserDataset) -> String {
    match v {
        Value::Number(n) => format_number(*n),
        Value::Date(d) => d.to_string(),
        Value::NoData => NO_DATA.to_string(),
        Value::Tuple(items) => {
            let parts: Vec<String> = items.iter().map(|i| format_value(i, ds)).collect();
            format!("({})", parts.join(", "))
        }
        Value::DateSet(set) => {
            let shown: Vec<String> = set.iter().take(MAX_LISTING_ROWS).map(|d| d.to_string()).collect();
            let mut out = format!("{} dates: {}", set.len(), shown.join(", "));
            if set.len() > MAX_LISTING_ROWS {
                out.push_str(&format!(", ... ({} more)", set.len() - MAX_LISTING_ROWS));
            }
            out
        }
        Value::Series(s) => {
            let mut lines = vec![format!("{} ({} values)", s.column, s.points.len())];
            for p in s.points.iter().take(MAX_LISTING_ROWS) {
                let key = match p.key {
                    SeriesKey::Date(d) => d.to_string(),
                    SeriesKey::Row(r) => format!("{} #{r}", p.date),
                };
                lines.push(format!("{key}  {}", format_number(p.value)));
            }
            push_elision(&mut lines, s.points.len());
            lines.join("\n")
        }
        Value::Table(view) => format_table(view, ds),
    }
}

fn push_elision(lines: &mut Vec<String>, total: usize) {
    if total > MAX_LISTING_ROWS {
        lines.push(format!("... ({} more rows)", total - MAX_LISTING_ROWS));
    }
}

fn cells<'a>(columns: &'a [&'a str], get: impl Fn(&str) -> Option<Option<f64>> + 'a) -> String {
    columns
        .iter()
        .filter_map(|c| get(c).flatten().map(|v| format!("{c}={}", format_number(v))))
        .collect::<Vec<_>>()
        .join(" ")
}

fn format_table(view: &TableView, ds: &UserDataset) -> String {
    match view.table {
        TableName::Context => {
            let c = &ds.context;
            let mut s = format!("age={} gender={} weight_kg={}", c.age, c.gender.as_str(), format_number(c.weight_kg));
            if let Some(h) = c.height_cm {
                s.push_str(&format!(" height_cm={}", format_number(h)));
            }
            s
        }
        TableName::Daily => {
            let mut lines = vec![format!("daily ({} rows)", view.rows.len())];
            for &r in view.rows.iter().take(MAX_LISTING_ROWS) {
                let rec = &ds.daily[r];
                lines.push(format!("{}  {}", rec.date, cells(&DAILY_NUMERIC_COLUMNS, |c| rec.numeric(c))));
            }
            push_elision(&mut lines, view.rows.len());
            lines.join("\n")
        }
        TableName::Activities => {
            let mut lines = vec![format!("activities ({} rows)", view.rows.len())];
            for &r in view.rows.iter().take(MAX_LISTING_ROWS) {
                let a = &ds.activities[r];
                lines.push(format!(
                    "{}  {}  {}",
                    a.start_time.format("%Y-%m-%d %H:%M"),
                    a.activity_name,
                    cells(&ACTIVITY_NUMERIC_COLUMNS, |c| a.numeric(c))
                ));
            }
            push_elision(&mut lines, view.rows.len());
            lines.join("\n")
        }
    }
}
