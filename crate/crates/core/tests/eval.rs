use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use insight_core::agent::{
    Agent, AgentConfig, BackendError, ConstBackend, GoldBackend, ModelBackend, ModelSession, SessionKey, StepKind,
    Tool, TraceStep,
};
use insight_core::benchgen::{generate_benchmark, Category, GoldAnswer, ObjectiveQuery, TemplateLibrary};
use insight_core::datamodel::UserDataset;
use insight_core::eval::{
    bootstrap_ci, build_report, codegen_pool, error_rate, exact_match, match_with, numeric_prompt, read_open_ended,
    read_results, recovery_rate, render_report, run_method, run_open_ended, write_results, CategoryScore, EvalError,
    EvalReport, MatchRule, Method, MethodResult, OpenEndedCategory, RunContext, RunOptions, DEFAULT_OPEN_ENDED_JSONL,
};
use insight_core::retrieval::Index;
use insight_core::synthgen::{generate_cohort, CohortSpec, GeneratorConfig};
use proptest::prelude::*;

#[test]
fn worked_matching_examples() {
    assert!(exact_match("The answer is 2.541", &GoldAnswer::Number(2.54)));
    assert!(!exact_match("2.53", &GoldAnswer::Number(2.54)));
    assert!(exact_match("I averaged 62.4400 steps", &GoldAnswer::Number(62.44)));
    assert!(exact_match("NO_DATA", &GoldAnswer::NoData));
    assert!(exact_match("You walked 12,345 steps in total.", &GoldAnswer::Number(12345.0)));
    assert!(exact_match("Between 7 and 9 hours; you got 6.999.", &GoldAnswer::Number(7.0)));
    assert!(!exact_match("I could not compute an answer.", &GoldAnswer::Number(0.0)));
}

#[test]
fn tolerance_rule_differs_only_at_the_edges() {
    let g = GoldAnswer::Number(2.54);
    assert!(match_with("2.545", &g, MatchRule::AbsTolerance));
    assert!(!match_with("2.545", &g, MatchRule::Round2));
    assert!(!match_with("2.546", &g, MatchRule::AbsTolerance));
}

/// Round an integer count of ten-thousandths to hundredths, half away from
/// zero, using only integer arithmetic.
fn oracle_round2(units: i64) -> i64 {
    let r = (units.abs() + 50) / 100;
    if units < 0 {
        -r
    } else {
        r
    }
}

fn show(units: i64) -> String {
    let sign = if units < 0 { "-" } else { "" };
    format!("{sign}{}.{:04}", units.abs() / 10_000, units.abs() % 10_000)
}

proptest! {
    #[test]
    fn matching_depends_only_on_rounded_values(a in -2_000_000i64..2_000_000, g in -2_000_000i64..2_000_000) {
        let gold = GoldAnswer::Number(show(g).parse::<f64>().unwrap());
        let expected = oracle_round2(a) == oracle_round2(g);
        prop_assert_eq!(exact_match(&format!("The value is {}.", show(a)), &gold), expected);
    }

    #[test]
    fn thousands_separators_are_ignored(n in 1_000u64..100_000_000) {
        let plain = n.to_string();
        let mut grouped = String::new();
        for (i, c) in plain.chars().enumerate() {
            if i > 0 && (plain.len() - i) % 3 == 0 {
                grouped.push(',');
            }
            grouped.push(c);
        }
        let answer = format!("about {grouped} steps");
        prop_assert!(exact_match(&answer, &GoldAnswer::Number(n as f64)));
    }

    #[test]
    fn interval_brackets_the_mean(outcomes in prop::collection::vec(any::<bool>(), 1..60), seed in 0u64..1000) {
        let (lo, hi) = bootstrap_ci(&outcomes, 0.95, 500, seed).unwrap();
        let mean = outcomes.iter().filter(|&&c| c).count() as f64 / outcomes.len() as f64;
        prop_assert!(lo <= mean && mean <= hi);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }
}

#[test]
fn bootstrap_degenerate_and_balanced() {
    assert_eq!(bootstrap_ci(&[true; 40], 0.95, 2000, 1), Some((1.0, 1.0)));
    assert_eq!(bootstrap_ci(&[false; 40], 0.95, 2000, 1), Some((0.0, 0.0)));
    assert_eq!(bootstrap_ci(&[], 0.95, 2000, 1), None);

    let half: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
    let (lo, hi) = bootstrap_ci(&half, 0.95, 10_000, 42).unwrap();
    assert!(lo < 0.5 && 0.5 < hi);
    let normal_width = 2.0 * 1.96 * (0.25f64 / 1000.0).sqrt();
    let width = hi - lo;
    assert!((width - normal_width).abs() <= 0.2 * normal_width, "{width} vs {normal_width}");
    assert_eq!(bootstrap_ci(&half, 0.95, 10_000, 42), Some((lo, hi)));
}

fn step(seq: u32, kind: StepKind, tool: Option<Tool>, ok: bool) -> TraceStep {
    TraceStep {
        seq,
        kind,
        tool,
        content: String::new(),
        ok,
    }
}

/// A result whose trace uses code (`code`), errs (`err`) and then succeeds
/// (`fix`) as requested.
fn result_with(code: bool, err: bool, fix: bool) -> MethodResult {
    let a = Some(Tool::Analyze);
    let mut trace = Vec::new();
    if code {
        trace.push(step(trace.len() as u32, StepKind::Act, a, true));
        trace.push(step(trace.len() as u32, StepKind::Observe, a, !err));
        if err && fix {
            trace.push(step(trace.len() as u32, StepKind::Act, a, true));
            trace.push(step(trace.len() as u32, StepKind::Observe, a, true));
        }
    }
    trace.push(step(trace.len() as u32, StepKind::Finish, None, true));
    MethodResult {
        query_id: "q".into(),
        user_id: "u".into(),
        category: Category::MetricAggregate,
        method: Method::Agent,
        gold_answer: GoldAnswer::Number(1.0),
        final_answer: Some("1".into()),
        parsed_number: None,
        correct: true,
        trace,
    }
}

#[test]
fn rate_definitions() {
    let mut rs: Vec<_> = (0..3).map(|_| result_with(true, false, false)).collect();
    rs.push(result_with(true, true, false));
    rs.push(result_with(true, true, true));
    rs.push(result_with(false, false, false));
    assert_eq!(error_rate(&rs), Some(0.4));
    assert_eq!(recovery_rate(&rs), Some(0.5));

    let clean = vec![result_with(false, false, false)];
    assert_eq!(error_rate(&clean), None);
    assert_eq!(recovery_rate(&clean), None);
}

struct Fixture {
    users: Vec<UserDataset>,
    bench: Vec<ObjectiveQuery>,
}

fn fixture(n_users: usize, n_queries: usize) -> Fixture {
    let config = GeneratorConfig {
        seed: 21,
        ..GeneratorConfig::default()
    };
    let users = generate_cohort(&CohortSpec { n_users, config }).unwrap();
    let bench = generate_benchmark(&TemplateLibrary::default(), &users, n_queries, 9).unwrap();
    Fixture { users, bench }
}

fn run(f: &Fixture, method: Method, backend: &dyn ModelBackend, config: AgentConfig) -> Vec<MethodResult> {
    let agent = Agent::new(config).unwrap();
    let shots = codegen_pool(&insight_core::agent::default_pool());
    let index = Index::default_corpus();
    let ctx = RunContext {
        agent: &agent,
        codegen_shots: &shots,
        search: Some(&index),
        schema_card: &agent.schema_card,
    };
    run_method(method, &f.bench, &f.users, backend, &ctx, RunOptions::default()).unwrap()
}

#[test]
fn gold_backend_scores_perfectly() {
    let f = fixture(4, 300);
    for method in [Method::Agent, Method::Codegen] {
        let rs = run(&f, method, &GoldBackend::default(), AgentConfig::default());
        let report = build_report(method, &rs, 1000, 3).unwrap();
        assert_eq!(report.accuracy, 1.0, "{method}");
        assert_eq!(report.error_rate, Some(0.0), "{method}");
        assert_eq!(report.accuracy_ci, (1.0, 1.0));
    }
}

#[test]
fn recovery_is_structural() {
    let f = fixture(2, 60);
    let backend = GoldBackend { recover: true };
    let agent = build_report(Method::Agent, &run(&f, Method::Agent, &backend, AgentConfig::default()), 500, 1).unwrap();
    assert_eq!(agent.recovery_rate, Some(1.0));
    assert_eq!(agent.error_rate, Some(1.0));
    assert_eq!(agent.accuracy, 1.0);
    let codegen =
        build_report(Method::Codegen, &run(&f, Method::Codegen, &backend, AgentConfig::default()), 500, 1).unwrap();
    assert_eq!(codegen.recovery_rate, Some(0.0));
    assert_eq!(codegen.accuracy, 0.0);
}

#[test]
fn constant_answer_scores_the_base_rate() {
    let f = fixture(3, 200);
    let target = f.bench[0].gold_answer.as_number().unwrap();
    for text in ["42".to_string(), format!("Finish: {target}")] {
        let rs = run(&f, Method::Numeric, &ConstBackend { text: text.clone() }, AgentConfig::default());
        let said: f64 = text.trim_start_matches("Finish: ").parse().unwrap();
        // recount with plain float rounding; no gold here sits on a half-cent tie
        let r2 = |x: f64| (x * 100.0).round() as i64;
        let expected = f.bench.iter().filter(|q| q.gold_answer.as_number().is_some_and(|g| r2(g) == r2(said))).count();
        let got = rs.iter().filter(|r| r.correct).count();
        assert_eq!(got, expected, "{text}");
        assert!(expected >= usize::from(text.starts_with("Finish")));
    }
}

#[test]
fn without_analysis_numbers_are_never_right() {
    let f = fixture(2, 80);
    let config = AgentConfig {
        tools_enabled: [Tool::Search].into_iter().collect(),
        ..AgentConfig::default()
    };
    let rs = run(&f, Method::Agent, &GoldBackend::default(), config);
    for r in rs.iter().filter(|r| matches!(r.gold_answer, GoldAnswer::Number(_))) {
        assert!(!r.correct, "{}", r.query_id);
    }
}

/// Counts model calls across all sessions.
struct Counting<B>(B, AtomicUsize);

struct CountingSession<'a>(Box<dyn ModelSession + 'a>, &'a AtomicUsize);

impl ModelSession for CountingSession<'_> {
    fn complete(&mut self, prompt: &str, stop: &[String]) -> Result<String, BackendError> {
        self.1.fetch_add(1, Ordering::SeqCst);
        self.0.complete(prompt, stop)
    }
}

impl<B: ModelBackend> ModelBackend for Counting<B> {
    fn name(&self) -> &str {
        "counting"
    }

    fn open(&self, key: &SessionKey) -> Result<Box<dyn ModelSession + '_>, BackendError> {
        Ok(Box::new(CountingSession(self.0.open(key)?, &self.1)))
    }
}

#[test]
fn codegen_is_single_step() {
    let f = fixture(2, 40);
    let backend = Counting(GoldBackend::default(), AtomicUsize::new(0));
    let rs = run(&f, Method::Codegen, &backend, AgentConfig::default());
    assert_eq!(backend.1.load(Ordering::SeqCst), 2 * rs.len());
    for r in &rs {
        let kinds: Vec<_> = r.trace.iter().map(|s| (s.kind, s.tool)).collect();
        assert_eq!(
            kinds,
            [
                (StepKind::Act, Some(Tool::Analyze)),
                (StepKind::Observe, Some(Tool::Analyze)),
                (StepKind::Finish, None)
            ]
        );
    }
}

#[test]
fn numeric_prompt_carries_the_tables() {
    let f = fixture(1, 5);
    let p = numeric_prompt(&f.users[0], "How many steps?");
    assert!(p.contains("|datetime|steps|"));
    assert!(p.contains(&f.users[0].today.to_string()));
    assert!(p.ends_with("Question: How many steps?\nThought:"));
}

#[test]
fn unknown_users_are_rejected() {
    let f = fixture(1, 5);
    let mut bench = f.bench.clone();
    bench[0].user_id = "nobody".into();
    let agent = Agent::new(AgentConfig::default()).unwrap();
    let ctx = RunContext {
        agent: &agent,
        codegen_shots: &[],
        search: None,
        schema_card: "",
    };
    let err = run_method(Method::Numeric, &bench, &f.users, &ConstBackend { text: "1".into() }, &ctx, RunOptions::default())
        .unwrap_err();
    assert!(matches!(err, EvalError::UnknownUser { .. }));
}

#[test]
fn parallel_runs_match_sequential_runs() {
    let f = fixture(2, 50);
    let agent = Agent::new(AgentConfig::default()).unwrap();
    let index = Index::default_corpus();
    let ctx = RunContext {
        agent: &agent,
        codegen_shots: &[],
        search: Some(&index),
        schema_card: &agent.schema_card,
    };
    let go = |jobs| {
        run_method(Method::Agent, &f.bench, &f.users, &GoldBackend::default(), &ctx, RunOptions { jobs, ..Default::default() })
            .unwrap()
    };
    let one = go(1);
    assert_eq!(one, go(4));
    let ids: Vec<_> = one.iter().map(|r| r.query_id.clone()).collect();
    let expected: Vec<_> = f.bench.iter().map(|q| q.id.clone()).collect();
    assert_eq!(ids, expected);
}

#[test]
fn results_round_trip() {
    let f = fixture(1, 20);
    let rs = run(&f, Method::Agent, &GoldBackend::default(), AgentConfig::default());
    let mut buf = Vec::new();
    write_results(&rs, &mut buf).unwrap();
    assert_eq!(read_results(buf.as_slice()).unwrap(), rs);
}

fn report(method: Method, per_category: BTreeMap<String, CategoryScore>) -> EvalReport {
    EvalReport {
        method,
        n: 10,
        accuracy: 0.5,
        accuracy_ci: (0.2, 0.8),
        error_rate: Some(0.25),
        recovery_rate: None,
        per_category,
    }
}

#[test]
fn report_rendering() {
    let cats: BTreeMap<String, CategoryScore> =
        [("metric-aggregate".to_string(), CategoryScore { n: 10, accuracy: 0.5 })].into_iter().collect();
    let reports: Vec<_> = Method::ALL.into_iter().map(|m| report(m, cats.clone())).collect();
    let (md, json) = render_report(&reports);
    let rows: Vec<_> = md.lines().take_while(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 2 + 3);
    assert!(rows[2].starts_with("| agent | 10 | 0.500 | [0.200, 0.800] | 0.250 | n/a |"));
    assert!(md.contains("Accuracy by category"));
    let back: Vec<EvalReport> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, reports);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v[0]["recovery_rate"].is_null());

    let (md, json) = render_report(&[report(Method::Numeric, BTreeMap::new())]);
    assert!(!md.contains("category"));
    assert!(!json.contains("per_category"));
}

#[test]
fn report_accuracy_is_the_mean() {
    let f = fixture(2, 100);
    let rs = run(&f, Method::Numeric, &ConstBackend { text: "Finish: 0".into() }, AgentConfig::default());
    let r = build_report(Method::Numeric, &rs, 2000, 5).unwrap();
    let mean = rs.iter().filter(|r| r.correct).count() as f64 / rs.len() as f64;
    assert_eq!(r.accuracy, mean);
    assert!(r.accuracy_ci.0 <= mean && mean <= r.accuracy_ci.1);
    assert_eq!(r.per_category.values().map(|c| c.n).sum::<usize>(), rs.len());
    assert_eq!(r.error_rate, None);
}

#[test]
fn open_ended_queries_pass_through() {
    let queries = read_open_ended(DEFAULT_OPEN_ENDED_JSONL.as_bytes()).unwrap();
    let cats: std::collections::BTreeSet<OpenEndedCategory> = queries.iter().map(|q| q.category).collect();
    assert_eq!(cats.len(), 9);
    let f = fixture(2, 1);
    let agent = Agent::new(AgentConfig::default()).unwrap();
    let backend = ConstBackend {
        text: "Thought: general advice\nFinish: Keep a steady routine.".into(),
    };
    let out = run_open_ended(&queries, &f.users, &backend, &agent, None, 2).unwrap();
    assert_eq!(out.len(), queries.len());
    assert_eq!(out[1].user_id, f.users[1].user_id);
    assert!(out.iter().all(|r| r.final_answer.as_deref() == Some("Keep a steady routine.")));
}
