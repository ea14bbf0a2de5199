//! Filling one template for one user.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::oracle::{oracle_answer, OracleAnswer, QuerySemantics};
use super::templates::{Filled, QueryTemplate, SlotKind, TemplateLibrary};
use super::{BenchError, GoldAnswer, ObjectiveQuery};
use crate::datamodel::{UserDataset, ACTIVITY_NAMES, ACTIVITY_NUMERIC_COLUMNS, DAILY_NUMERIC_COLUMNS};

/// Attempts made before a query whose answer is NO_DATA is accepted.
pub const MAX_ATTEMPTS: usize = 20;

fn exhausted(t: &QueryTemplate, ds: &UserDataset, why: String) -> BenchError {
    BenchError::DomainExhausted(format!("template '{}' for {}: {why}", t.id, ds.user_id))
}

fn restrict(all: &[&str], allowed: &Option<Vec<String>>) -> Vec<String> {
    all.iter()
        .filter(|c| allowed.as_ref().is_none_or(|v| v.iter().any(|a| a == *c)))
        .map(|c| c.to_string())
        .collect()
}

/// In-domain values of `kind` for this dataset, given the slots filled so far.
fn domain(lib: &TemplateLibrary, kind: &SlotKind, filled: &[Filled<'_>], ds: &UserDataset) -> Vec<String> {
    let earlier = |name: &str| filled.iter().find(|f| f.name == name).map(|f| f.value.clone());
    match kind {
        SlotKind::DailyMetric { values } => restrict(&DAILY_NUMERIC_COLUMNS, values)
            .into_iter()
            .filter(|m| ds.daily.iter().any(|r| r.numeric(m).flatten().is_some()))
            .collect(),
        SlotKind::Period { set } => lib.period_sets.get(set).cloned().unwrap_or_default(),
        SlotKind::Agg { values, of } => {
            let column = of.as_deref().and_then(earlier);
            let non_additive = column.is_some_and(|c| lib.phrasing.non_additive_columns.contains(&c));
            values.iter().filter(|a| !(non_additive && *a == "sum")).cloned().collect()
        }
        SlotKind::Op { values } => values.clone(),
        SlotKind::Threshold { of, key } => {
            let key = key.clone().or_else(|| of.as_deref().and_then(earlier));
            key.and_then(|k| lib.phrasing.thresholds.get(&k))
                .map(|ns| ns.iter().map(ToString::to_string).collect())
                .unwrap_or_default()
        }
        SlotKind::Activity { values } => restrict(&ACTIVITY_NAMES, values)
            .into_iter()
            .filter(|a| ds.activities.iter().any(|r| r.activity_name == *a))
            .collect(),
        SlotKind::ActivityColumn { of, values } => {
            let activity = of.as_deref().and_then(earlier);
            restrict(&ACTIVITY_NUMERIC_COLUMNS, values)
                .into_iter()
                .filter(|c| {
                    ds.activities.iter().any(|r| {
                        activity.as_deref().is_none_or(|a| r.activity_name == a) && r.numeric(c).flatten().is_some()
                    })
                })
                .collect()
        }
    }
}

/// One draw of every slot, in order.
fn fill<'t, R: Rng + ?Sized>(
    lib: &TemplateLibrary,
    t: &'t QueryTemplate,
    ds: &UserDataset,
    rng: &mut R,
) -> Result<Vec<Filled<'t>>, BenchError> {
    let mut filled: Vec<Filled<'t>> = Vec::with_capacity(t.slots.len());
    for slot in &t.slots {
        let values = domain(lib, &slot.kind, &filled, ds);
        let Some(value) = values.choose(rng) else {
            return Err(exhausted(t, ds, format!("slot '{}' has no value for this user", slot.name)));
        };
        filled.push(Filled {
            name: &slot.name,
            kind: &slot.kind,
            value: value.clone(),
        });
    }
    Ok(filled)
}

/// Fill `template` with seeded slot values for `ds` and attach the oracle's
/// answer. Draws that answer NO_DATA are redrawn up to [`MAX_ATTEMPTS`]
/// times; after that the last draw is returned flagged `expect_no_data`.
/// The query's `id` is left empty for the caller to assign.
pub fn instantiate<R: Rng + ?Sized>(
    lib: &TemplateLibrary,
    template: &QueryTemplate,
    ds: &UserDataset,
    rng: &mut R,
) -> Result<ObjectiveQuery, BenchError> {
    if let Some(required) = &template.requires_activity {
        if !ds.activities.iter().any(|a| &a.activity_name == required) {
            return Err(exhausted(template, ds, format!("no {required} sessions")));
        }
    }
    let mut last = None;
    for _ in 0..MAX_ATTEMPTS {
        let filled = fill(lib, template, ds, rng)?;
        let semantics: QuerySemantics = serde_json::from_value(lib.render_json(&template.semantics, &filled)?)
            .map_err(|e| BenchError::Template(format!("template '{}': semantics: {e}", template.id)))?;
        let answer = oracle_answer(&semantics, ds);
        let query = ObjectiveQuery {
            id: String::new(),
            user_id: ds.user_id.clone(),
            category: template.category,
            question: lib.render(&template.question, &filled)?,
            gold_program: lib.render(&template.program, &filled)?,
            gold_answer: match answer {
                OracleAnswer::Number(n) => GoldAnswer::Number(n),
                OracleAnswer::NoData => GoldAnswer::NoData,
            },
            expect_no_data: answer == OracleAnswer::NoData,
            template_id: template.id.clone(),
            semantics: Some(semantics),
        };
        if !query.expect_no_data {
            return Ok(query);
        }
        last = Some(query);
    }
    Ok(last.expect("at least one attempt"))
}
