//! Template and phrasing data files.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BenchError, Category};

pub const DEFAULT_TEMPLATES_JSON: &str = include_str!("../../data/templates.json");
pub const DEFAULT_PHRASING_JSON: &str = include_str!("../../data/phrasing.json");

/// One slot of a template. Slots are filled in declaration order, so a slot
/// may depend on an earlier one (a threshold on the chosen metric, a column
/// of the chosen activity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    #[serde(flatten)]
    pub kind: SlotKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotKind {
    /// A numeric daily column with at least one recorded value.
    DailyMetric {
        #[serde(default)]
        values: Option<Vec<String>>,
    },
    /// A period phrase from a named set.
    Period { set: String },
    /// An aggregate. With `of` naming an earlier column slot, `sum` is
    /// dropped for columns that do not add up (speeds, heart rates).
    Agg {
        values: Vec<String>,
        #[serde(default)]
        of: Option<String>,
    },
    Op { values: Vec<String> },
    /// A threshold from the phrasing table, keyed by a fixed column or by the
    /// value of an earlier slot.
    Threshold {
        #[serde(default)]
        of: Option<String>,
        #[serde(default)]
        key: Option<String>,
    },
    /// An activity type the user has logged at least once.
    Activity {
        #[serde(default)]
        values: Option<Vec<String>>,
    },
    /// A numeric activity column with at least one recorded value, among the
    /// sessions of the activity chosen for slot `of` (or among all sessions).
    ActivityColumn {
        #[serde(default)]
        of: Option<String>,
        #[serde(default)]
        values: Option<Vec<String>>,
    },
}

impl SlotKind {
    /// Phrase attributes a question may ask for, as in `{metric.name}`.
    fn attributes(&self) -> &'static [&'static str] {
        match self {
            SlotKind::DailyMetric { .. } => &["name", "value"],
            SlotKind::Activity { .. } => &["singular", "plural"],
            _ => &["text"],
        }
    }
}

/// A query template. `question` and `program` reference slots as `{name}`
/// (the raw value, used in programs) or `{name.attr}` (a phrase, used in
/// questions). `semantics` is the same substitution applied to a JSON
/// description the oracle understands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub id: String,
    pub category: Category,
    /// Sample question shapes this template reproduces.
    #[serde(default)]
    pub covers: Vec<String>,
    #[serde(default)]
    pub requires_activity: Option<String>,
    pub slots: Vec<Slot>,
    pub question: String,
    pub program: String,
    pub semantics: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyMetricPhrase {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityPhrase {
    pub singular: String,
    pub plural: String,
}

/// Fixed phrasing for every slot value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phrasing {
    pub number_words: BTreeMap<String, String>,
    pub periods: BTreeMap<String, String>,
    pub daily_metrics: BTreeMap<String, DailyMetricPhrase>,
    pub activity_columns: BTreeMap<String, String>,
    pub activities: BTreeMap<String, ActivityPhrase>,
    pub aggregates: BTreeMap<String, String>,
    pub comparisons: BTreeMap<String, String>,
    #[serde(default)]
    pub non_additive_columns: Vec<String>,
    pub thresholds: BTreeMap<String, Vec<serde_json::Number>>,
}

impl Phrasing {
    /// `"last 7 days"` reads as `"the last seven days"`.
    pub fn period(&self, phrase: &str) -> String {
        if let Some(p) = self.periods.get(phrase) {
            return p.clone();
        }
        if let Some(n) = phrase.strip_prefix("last ").and_then(|r| r.strip_suffix(" days")) {
            let word = self.number_words.get(n).map_or(n, String::as_str);
            return format!("the last {word} days");
        }
        phrase.to_string()
    }

    fn lookup(&self, kind: &SlotKind, value: &str, attr: &str) -> Option<String> {
        match (kind, attr) {
            (SlotKind::DailyMetric { .. }, "name") => self.daily_metrics.get(value).map(|p| p.name.clone()),
            (SlotKind::DailyMetric { .. }, "value") => self.daily_metrics.get(value).map(|p| p.value.clone()),
            (SlotKind::Activity { .. }, "singular") => self.activities.get(value).map(|p| p.singular.clone()),
            (SlotKind::Activity { .. }, "plural") => self.activities.get(value).map(|p| p.plural.clone()),
            (SlotKind::Period { .. }, "text") => Some(self.period(value)),
            (SlotKind::Agg { .. }, "text") => self.aggregates.get(value).cloned(),
            (SlotKind::Op { .. }, "text") => self.comparisons.get(value).cloned(),
            (SlotKind::Threshold { .. }, "text") => Some(group_thousands(value)),
            (SlotKind::ActivityColumn { .. }, "text") => self.activity_columns.get(value).cloned(),
            _ => None,
        }
    }
}

/// `10000` reads as `10,000`; fractional values are left alone.
pub fn group_thousands(raw: &str) -> String {
    let (sign, digits) = raw.strip_prefix('-').map_or(("", raw), |d| ("-", d));
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return raw.to_string();
    }
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    format!("{sign}{out}")
}

#[derive(Debug, Clone, Deserialize)]
struct TemplateFile {
    version: u32,
    period_sets: BTreeMap<String, Vec<String>>,
    templates: Vec<QueryTemplate>,
}

/// Templates plus everything needed to fill them.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateLibrary {
    pub templates: Vec<QueryTemplate>,
    pub period_sets: BTreeMap<String, Vec<String>>,
    pub phrasing: Phrasing,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)(?:\.([a-z]+))?\}").expect("valid regex"))
}

/// A filled slot: its raw value and the kind it came from.
pub(crate) struct Filled<'a> {
    pub name: &'a str,
    pub kind: &'a SlotKind,
    pub value: String,
}

impl TemplateLibrary {
    pub fn from_json(templates: &str, phrasing: &str) -> Result<Self, BenchError> {
        let file: TemplateFile =
            serde_json::from_str(templates).map_err(|e| BenchError::Template(format!("templates: {e}")))?;
        if file.version != 1 {
            return Err(BenchError::Template(format!("unsupported template file version {}", file.version)));
        }
        let phrasing: Phrasing =
            serde_json::from_str(phrasing).map_err(|e| BenchError::Template(format!("phrasing: {e}")))?;
        let lib = TemplateLibrary {
            templates: file.templates,
            period_sets: file.period_sets,
            phrasing,
        };
        lib.check()?;
        Ok(lib)
    }

    pub fn get(&self, id: &str) -> Option<&QueryTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// Static consistency: unique ids, known period sets, placeholders that
    /// name declared slots with attributes their kind supports, and slot
    /// references that point backwards.
    pub fn check(&self) -> Result<(), BenchError> {
        let bad = |t: &QueryTemplate, msg: String| BenchError::Template(format!("template '{}': {msg}", t.id));
        let mut ids = std::collections::BTreeSet::new();
        for t in &self.templates {
            if !ids.insert(t.id.as_str()) {
                return Err(bad(t, "duplicate id".into()));
            }
            for (i, slot) in t.slots.iter().enumerate() {
                let earlier = |n: &str| t.slots[..i].iter().any(|s| s.name == n);
                match &slot.kind {
                    SlotKind::Period { set } if !self.period_sets.contains_key(set) => {
                        return Err(bad(t, format!("unknown period set '{set}'")));
                    }
                    SlotKind::Threshold { of: None, key: None } => {
                        return Err(bad(t, format!("threshold slot '{}' needs `of` or `key`", slot.name)));
                    }
                    SlotKind::Threshold { of: Some(o), .. }
                    | SlotKind::ActivityColumn { of: Some(o), .. }
                    | SlotKind::Agg { of: Some(o), .. }
                        if !earlier(o) =>
                    {
                        return Err(bad(t, format!("slot '{}' refers to '{o}', which is not an earlier slot", slot.name)));
                    }
                    _ => {}
                }
            }
            for (field, text) in [("question", &t.question), ("program", &t.program)] {
                for cap in placeholder_re().captures_iter(text) {
                    let name = &cap[1];
                    let Some(slot) = t.slots.iter().find(|s| s.name == name) else {
                        return Err(bad(t, format!("{field} uses undeclared slot '{name}'")));
                    };
                    if let Some(attr) = cap.get(2) {
                        if !slot.kind.attributes().contains(&attr.as_str()) {
                            return Err(bad(t, format!("slot '{name}' has no attribute '{}'", attr.as_str())));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Substitute slot values into `text`.
    pub(crate) fn render(&self, text: &str, filled: &[Filled<'_>]) -> Result<String, BenchError> {
        let mut err = None;
        let out = placeholder_re().replace_all(text, |cap: &regex::Captures<'_>| {
            let Some(f) = filled.iter().find(|f| f.name == &cap[1]) else {
                err.get_or_insert_with(|| format!("unfilled slot '{}'", &cap[1]));
                return String::new();
            };
            match cap.get(2) {
                None => f.value.clone(),
                Some(attr) => self.phrasing.lookup(f.kind, &f.value, attr.as_str()).unwrap_or_else(|| {
                    err.get_or_insert_with(|| format!("no phrasing for {}.{} = '{}'", f.name, attr.as_str(), f.value));
                    String::new()
                }),
            }
        });
        match err {
            Some(e) => Err(BenchError::Template(e)),
            None => Ok(out.into_owned()),
        }
    }

    /// Substitute into every string of a JSON value. A string that is exactly
    /// one threshold placeholder becomes a JSON number.
    pub(crate) fn render_json(
        &self,
        v: &serde_json::Value,
        filled: &[Filled<'_>],
    ) -> Result<serde_json::Value, BenchError> {
        use serde_json::Value as J;
        Ok(match v {
            J::String(s) => {
                let whole = placeholder_re()
                    .captures(s)
                    .filter(|c| c.get(0).map(|m| m.as_str()) == Some(s.as_str()) && c.get(2).is_none());
                let numeric = whole.and_then(|c| {
                    filled
                        .iter()
                        .find(|f| f.name == &c[1] && matches!(f.kind, SlotKind::Threshold { .. }))
                        .and_then(|f| f.value.parse::<f64>().ok())
                        .and_then(serde_json::Number::from_f64)
                });
                match numeric {
                    Some(n) => J::Number(n),
                    None => J::String(self.render(s, filled)?),
                }
            }
            J::Array(items) => J::Array(items.iter().map(|i| self.render_json(i, filled)).collect::<Result<_, _>>()?),
            J::Object(map) => J::Object(
                map.iter()
                    .map(|(k, i)| Ok((k.clone(), self.render_json(i, filled)?)))
                    .collect::<Result<_, BenchError>>()?,
            ),
            other => other.clone(),
        })
    }
}

impl Default for TemplateLibrary {
    fn default() -> Self {
        TemplateLibrary::from_json(DEFAULT_TEMPLATES_JSON, DEFAULT_PHRASING_JSON).expect("shipped templates are valid")
    }
}
