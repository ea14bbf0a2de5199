use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use insight_core::agent::{
    build_prompt, default_pool, parse_step, read_trace, run_session, select_few_shots, select_indices,
    serialize_step, trace_stats, validate_trace, write_trace, Action, Agent, AgentConfig, AgentError, DemoBackend,
    GoldBackend, HashEmbedder, ParsedStep, ScriptedBackend, SessionKey, StepKind, Tool, Toolbox, TraceStep,
    DEMO_QUESTION,
};
use insight_core::datamodel::{DailyRecord, DemographicContext, Gender, UserDataset};
use insight_core::dsl::{run, run_to_observation, ERROR_PREFIX};
use insight_core::retrieval::Index;
use insight_core::synthgen::{generate_cohort, CohortSpec, GeneratorConfig};
use proptest::prelude::*;

/// Ten days, a 66 kg / 156 cm user, and a known active-zone series.
fn fixture() -> UserDataset {
    let today = NaiveDate::from_ymd_opt(2024, 3, 10).unwrap();
    let daily = (0..10)
        .map(|i| {
            let mut r = DailyRecord::empty(today - Duration::days(9 - i));
            r.steps = Some(6000 + 500 * i as u32);
            r.active_zone_minutes = Some(80 + i as u32);
            r
        })
        .collect();
    UserDataset {
        user_id: "fixture".into(),
        context: DemographicContext {
            age: 35,
            gender: Gender::Female,
            weight_kg: 66.0,
            height_cm: Some(156.0),
        },
        daily,
        activities: Vec::new(),
        today,
    }
}

fn agent(config: AgentConfig) -> Agent {
    Agent::with_few_shots(config, Vec::new()).unwrap()
}

fn scripted(outputs: &[&str]) -> ScriptedBackend {
    ScriptedBackend::single(outputs.iter().map(|s| s.to_string()).collect())
}

fn kinds(trace: &[TraceStep]) -> Vec<(StepKind, Option<Tool>)> {
    trace.iter().map(|s| (s.kind, s.tool)).collect()
}

#[test]
fn bmi_demonstration() {
    let ds = fixture();
    let index = Index::default_corpus();
    let tools = Toolbox {
        dataset: &ds,
        search: Some(&index),
    };
    let agent = Agent::new(AgentConfig::default()).unwrap();
    let out = run_session(&agent, DEMO_QUESTION, &tools, &DemoBackend, &SessionKey::new("demo"));
    validate_trace(&out.trace).unwrap();

    let acts: Vec<_> = out.trace.iter().filter(|s| s.kind == StepKind::Act).collect();
    assert_eq!(acts.iter().filter(|s| s.tool == Some(Tool::Analyze)).count(), 2);
    assert_eq!(acts.iter().filter(|s| s.tool == Some(Tool::Search)).count(), 1);

    // 66 / 1.56^2, computed here rather than trusted from the trace
    let bmi = 66.0 / (1.56f64 * 1.56);
    assert_eq!(format!("{bmi:.2}"), "27.12");
    let first_obs = &out.trace.iter().find(|s| s.kind == StepKind::Observe).unwrap().content;
    assert!(first_obs.starts_with("(27.12031"), "{first_obs}");
    assert!(first_obs.ends_with(", 84.5)"), "{first_obs}");

    let answer = out.final_answer.as_deref().unwrap();
    assert!(answer.contains("27.12"), "{answer}");
    let stats = trace_stats(&out.trace);
    assert!(stats.used_code && stats.finished && !stats.had_error && !stats.recovered);
}

#[test]
fn observations_are_the_tool_output_verbatim() {
    let ds = fixture();
    let index = Index::default_corpus();
    let tools = Toolbox {
        dataset: &ds,
        search: Some(&index),
    };
    let out = run_session(&agent(AgentConfig::default()), DEMO_QUESTION, &tools, &DemoBackend, &SessionKey::new("d"));
    for pair in out.trace.windows(2) {
        let (act, obs) = (&pair[0], &pair[1]);
        if act.kind != StepKind::Act {
            continue;
        }
        let expected = match act.tool.unwrap() {
            Tool::Analyze => run_to_observation(&act.content, &ds).0,
            Tool::Search => {
                insight_core::retrieval::format_search_observation(&index.search(&act.content, 3))
            }
        };
        assert_eq!(obs.content, expected);
    }
}

#[test]
fn error_then_correction_is_a_recovery() {
    let ds = fixture();
    let tools = Toolbox {
        dataset: &ds,
        search: None,
    };
    let backend = scripted(&[
        "Thought: Average the steps.\nAct: Analyze(```daily[\"step_count\"].mean()```)",
        "Thought: The column is steps.\nAct: Analyze(```daily[\"steps\"].mean()```)",
        "Thought: Done.\nFinish: You averaged 8250 steps.",
    ]);
    let out = run_session(&agent(AgentConfig::default()), "steps?", &tools, &backend, &SessionKey::new("s"));
    validate_trace(&out.trace).unwrap();
    let observes: Vec<_> = out.trace.iter().filter(|s| s.kind == StepKind::Observe).collect();
    assert!(observes[0].content.starts_with(&format!("{ERROR_PREFIX}UnknownColumn")));
    assert!(!observes[0].ok);
    // 6000 + 500 * (0..10) averages to 8250
    assert_eq!(observes[1].content, "8250");
    let stats = trace_stats(&out.trace);
    assert!(stats.had_error && stats.recovered && stats.finished);
}

#[test]
fn recovering_oracle_recovers() {
    let ds = fixture();
    let tools = Toolbox {
        dataset: &ds,
        search: None,
    };
    let key = SessionKey {
        id: "q".into(),
        gold_program: Some("daily[\"active_zone_minutes\"].max()".into()),
    };
    let out = run_session(&agent(AgentConfig::default()), "max azm?", &tools, &GoldBackend { recover: true }, &key);
    assert_eq!(out.final_answer.as_deref(), Some("The answer is 89."));
    let stats = trace_stats(&out.trace);
    assert!(stats.had_error && stats.recovered);
}

#[test]
fn step_cap_ends_without_answer() {
    let ds = fixture();
    let tools = Toolbox {
        dataset: &ds,
        search: None,
    };
    let backend = ScriptedBackend::repeat("Thought: again\nAct: Analyze(```context[\"age\"]```)", 100);
    let config = AgentConfig {
        max_steps: 3,
        ..AgentConfig::default()
    };
    let out = run_session(&agent(config), "loop", &tools, &backend, &SessionKey::new("cap"));
    assert_eq!(out.final_answer, None);
    assert_eq!(out.model_calls, 3);
    assert_eq!(out.trace.len(), 9);
    validate_trace(&out.trace).unwrap();
    assert!(!trace_stats(&out.trace).finished);
}

#[test]
fn malformed_output_gets_one_retry() {
    let ds = fixture();
    let tools = Toolbox {
        dataset: &ds,
        search: None,
    };
    let a = agent(AgentConfig::default());

    let fixed = scripted(&["Sure! Here's some info.", "Finish: 35"]);
    let out = run_session(&a, "age?", &tools, &fixed, &SessionKey::new("r"));
    assert_eq!(out.final_answer.as_deref(), Some("35"));
    assert_eq!(out.protocol_retries, 1);
    assert_eq!(kinds(&out.trace), [(StepKind::Finish, None)]);

    let chatty = scripted(&["Sure! Here's some info.", "Happy to help!", "Finish: 35"]);
    let out = run_session(&a, "age?", &tools, &chatty, &SessionKey::new("r"));
    assert_eq!(out.final_answer, None);
    let last = out.trace.last().unwrap();
    assert_eq!(last.kind, StepKind::ProtocolError);
    assert!(!last.ok);
    assert!(last.content.starts_with("ProtocolError"));
    validate_trace(&out.trace).unwrap();
}

#[test]
fn backend_failure_is_a_terminal_protocol_error() {
    let ds = fixture();
    let tools = Toolbox {
        dataset: &ds,
        search: None,
    };
    let short = scripted(&["Thought: look\nAct: Analyze(```context[\"age\"]```)"]);
    let out = run_session(&agent(AgentConfig::default()), "age?", &tools, &short, &SessionKey::new("x"));
    let last = out.trace.last().unwrap();
    assert_eq!(last.kind, StepKind::ProtocolError);
    assert!(last.content.starts_with("BackendError"));
    assert_eq!(out.final_answer, None);
    validate_trace(&out.trace).unwrap();
}

#[test]
fn disabled_search_is_never_dispatched() {
    let ds = fixture();
    let index = Index::default_corpus();
    let tools = Toolbox {
        dataset: &ds,
        search: Some(&index),
    };
    let config = AgentConfig {
        tools_enabled: BTreeSet::from([Tool::Analyze]),
        ..AgentConfig::default()
    };
    let out = run_session(&agent(config), DEMO_QUESTION, &tools, &DemoBackend, &SessionKey::new("d"));
    let search_obs: Vec<_> = out
        .trace
        .iter()
        .filter(|s| s.kind == StepKind::Observe && s.tool == Some(Tool::Search))
        .collect();
    assert_eq!(search_obs.len(), 1);
    assert!(search_obs[0].content.starts_with(&format!("{ERROR_PREFIX}ToolDisabled")));
    assert!(!search_obs[0].ok);
    // a refused search is not a code error
    assert!(!trace_stats(&out.trace).had_error);
}

#[test]
fn analysis_disabled_yields_no_numbers() {
    let ds = fixture();
    let tools = Toolbox {
        dataset: &ds,
        search: None,
    };
    let config = AgentConfig {
        tools_enabled: BTreeSet::from([Tool::Search]),
        ..AgentConfig::default()
    };
    let key = SessionKey {
        id: "q".into(),
        gold_program: Some("daily[\"steps\"].mean()".into()),
    };
    let out = run_session(&agent(config), "steps?", &tools, &GoldBackend::default(), &key);
    assert_eq!(out.final_answer.as_deref(), Some("I could not compute an answer."));
}

#[test]
fn scripted_runs_are_byte_identical() {
    let ds = fixture();
    let index = Index::default_corpus();
    let tools = Toolbox {
        dataset: &ds,
        search: Some(&index),
    };
    let a = Agent::new(AgentConfig::default()).unwrap();
    let bytes = || {
        let out = run_session(&a, DEMO_QUESTION, &tools, &DemoBackend, &SessionKey::new("d"));
        let mut buf = Vec::new();
        write_trace(&out.trace, &mut buf).unwrap();
        buf
    };
    let first = bytes();
    assert_eq!(first, bytes());
    let back = read_trace(first.as_slice()).unwrap();
    let mut again = Vec::new();
    write_trace(&back, &mut again).unwrap();
    assert_eq!(first, again);
}

#[test]
fn scripted_jsonl_is_keyed_by_session() {
    let src = r#"{"session":"a","step":1,"output":"Finish: second"}
{"session":"a","step":0,"output":"Thought: first\nAct: Analyze(```context[\"age\"]```)"}
{"session":"b","step":0,"output":"Finish: only"}
"#;
    let backend = ScriptedBackend::from_jsonl(src.as_bytes()).unwrap();
    let ds = fixture();
    let tools = Toolbox {
        dataset: &ds,
        search: None,
    };
    let a = agent(AgentConfig::default());
    let out_a = run_session(&a, "q", &tools, &backend, &SessionKey::new("a"));
    assert_eq!(out_a.final_answer.as_deref(), Some("second"));
    assert_eq!(out_a.trace[2].content, "35");
    let out_b = run_session(&a, "q", &tools, &backend, &SessionKey::new("b"));
    assert_eq!(out_b.final_answer.as_deref(), Some("only"));
    let out_c = run_session(&a, "q", &tools, &backend, &SessionKey::new("c"));
    assert_eq!(out_c.trace.last().unwrap().kind, StepKind::ProtocolError);
}

#[test]
fn prompt_shape() {
    let pool = default_pool();
    let p = build_prompt("CARD", &pool[..2], &[], "How did I sleep?");
    assert!(p.text.ends_with("Question: How did I sleep?\nThought:"));
    assert!(p.text.contains("CARD"));
    assert!(p.text.contains(&format!("Question: {}", pool[1].query)));
    assert_eq!(p.stop, ["\nObserve:"]);
    assert_eq!(p, build_prompt("CARD", &pool[..2], &[], "How did I sleep?"));

    let history = vec![
        TraceStep {
            seq: 0,
            kind: StepKind::Act,
            tool: Some(Tool::Analyze),
            content: "context[\"age\"]".into(),
            ok: true,
        },
        TraceStep {
            seq: 1,
            kind: StepKind::Observe,
            tool: Some(Tool::Analyze),
            content: "35".into(),
            ok: true,
        },
    ];
    let p = build_prompt("CARD", &[], &history, "Age?");
    assert!(p.text.ends_with("Question: Age?\nAct: Analyze(```context[\"age\"]```)\nObserve: 35\nThought:"));
}

#[test]
fn trace_stats_definitions() {
    let step = |seq, kind, tool, ok| TraceStep {
        seq,
        kind,
        tool,
        content: String::new(),
        ok,
    };
    use StepKind::*;
    let a = Some(Tool::Analyze);
    let s = trace_stats(&[step(0, Thought, None, true), step(1, Finish, None, true)]);
    assert!(!s.used_code && !s.had_error && s.finished);

    let base = vec![
        step(0, Thought, None, true),
        step(1, Act, a, true),
        step(2, Observe, a, true),
        step(3, Act, a, true),
        step(4, Observe, a, false),
        step(5, Act, a, true),
        step(6, Observe, a, true),
        step(7, Finish, None, true),
    ];
    validate_trace(&base).unwrap();
    assert!(trace_stats(&base).recovered);

    let no_retry = vec![
        step(0, Act, a, true),
        step(1, Observe, a, false),
        step(2, Thought, None, true),
        step(3, Finish, None, true),
    ];
    let s = trace_stats(&no_retry);
    assert!(s.had_error && !s.recovered);

    let unfinished = &base[..7];
    assert!(!trace_stats(unfinished).recovered);
}

#[test]
fn invalid_traces_are_rejected() {
    let step = |seq, kind, tool| TraceStep {
        seq,
        kind,
        tool,
        content: String::new(),
        ok: true,
    };
    let a = Some(Tool::Analyze);
    let s = Some(Tool::Search);
    assert!(validate_trace(&[step(1, StepKind::Thought, None)]).is_err());
    assert!(validate_trace(&[step(0, StepKind::Act, a), step(1, StepKind::Observe, s)]).is_err());
    assert!(validate_trace(&[step(0, StepKind::Finish, None), step(1, StepKind::Thought, None)]).is_err());
    assert!(validate_trace(&[step(0, StepKind::Act, a), step(1, StepKind::Thought, None)]).is_err());
}

/// Two clouds of five points, far apart.
fn two_clouds() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0],
        vec![1.0, 0.2],
        vec![0.3, 0.9],
        vec![0.6, 0.4],
        vec![-0.2, 0.5],
        vec![10.0, 10.0],
        vec![11.1, 9.7],
        vec![10.4, 11.2],
        vec![9.5, 10.6],
        vec![10.9, 10.8],
    ]
}

/// The member nearest the mean of each cloud, found by exhaustive search.
fn brute_force_representatives(points: &[Vec<f64>], clouds: &[&[usize]]) -> Vec<usize> {
    let mut out: Vec<usize> = clouds
        .iter()
        .map(|members| {
            let n = members.len() as f64;
            let cx = members.iter().map(|&i| points[i][0]).sum::<f64>() / n;
            let cy = members.iter().map(|&i| points[i][1]).sum::<f64>() / n;
            let d = |i: usize| (points[i][0] - cx).powi(2) + (points[i][1] - cy).powi(2);
            let mut best = members[0];
            for &i in members.iter() {
                if d(i) < d(best) {
                    best = i;
                }
            }
            best
        })
        .collect();
    out.sort_unstable();
    out
}

#[test]
fn two_cluster_fixture_matches_brute_force() {
    let pts = two_clouds();
    let expected = brute_force_representatives(&pts, &[&[0, 1, 2, 3, 4], &[5, 6, 7, 8, 9]]);
    assert_eq!(expected, [3, 5]);
    for seed in 0..10 {
        let first = select_indices(&pts, 2, seed).unwrap();
        assert_eq!(first, expected, "seed {seed}");
        for _ in 0..5 {
            assert_eq!(select_indices(&pts, 2, seed).unwrap(), first);
        }
    }
}

#[test]
fn full_k_returns_the_whole_pool() {
    let pool = default_pool();
    let all = select_few_shots(&pool, pool.len(), &HashEmbedder, 11).unwrap();
    assert_eq!(all, pool);
    let err = select_few_shots(&pool, pool.len() + 1, &HashEmbedder, 11).unwrap_err();
    assert!(matches!(err, AgentError::InsufficientPool { .. }));
    assert!(select_few_shots(&pool, 0, &HashEmbedder, 11).unwrap().is_empty());
}

#[test]
fn shipped_pool_selection_is_stable() {
    let pool = default_pool();
    let a = select_few_shots(&pool, 20, &HashEmbedder, 7).unwrap();
    assert_eq!(a.len(), 20);
    let queries: BTreeSet<_> = a.iter().map(|e| e.query.clone()).collect();
    assert_eq!(queries.len(), 20);
    for _ in 0..4 {
        assert_eq!(select_few_shots(&pool, 20, &HashEmbedder, 7).unwrap(), a);
    }
}

#[test]
fn pool_covers_every_shape() {
    let pool = default_pool();
    let has = |f: &dyn Fn(&[TraceStep]) -> bool| pool.iter().any(|e| f(&e.trajectory));
    let n_tool = |t: &[TraceStep], tool| t.iter().filter(|s| s.kind == StepKind::Act && s.tool == Some(tool)).count();
    assert!(has(&|t| n_tool(t, Tool::Analyze) == 1 && n_tool(t, Tool::Search) == 0));
    assert!(has(&|t| n_tool(t, Tool::Analyze) >= 2 && n_tool(t, Tool::Search) == 0));
    assert!(has(&|t| n_tool(t, Tool::Analyze) == 0 && n_tool(t, Tool::Search) == 1));
    assert!(has(&|t| n_tool(t, Tool::Analyze) >= 1 && n_tool(t, Tool::Search) >= 1));
    assert!(has(&|t| t.len() == 2 && t[1].kind == StepKind::Finish));
    assert!(has(&|t| trace_stats(t).recovered));
}

#[test]
fn pool_programs_behave_as_shown() {
    let config = GeneratorConfig {
        seed: 5,
        ..GeneratorConfig::default()
    };
    let users = generate_cohort(&CohortSpec { n_users: 1, config }).unwrap();
    for ex in default_pool() {
        for pair in ex.trajectory.windows(2) {
            if pair[0].kind == StepKind::Act && pair[0].tool == Some(Tool::Analyze) {
                let result = run(&pair[0].content, &users[0]);
                assert_eq!(result.is_ok(), pair[1].ok, "{}: {result:?}", pair[0].content);
            }
            if pair[0].kind == StepKind::Act {
                let step = ParsedStep {
                    thought: None,
                    action: Action::Act {
                        tool: pair[0].tool.unwrap(),
                        payload: pair[0].content.clone(),
                    },
                };
                assert_eq!(parse_step(&serialize_step(&step)).unwrap(), step);
            }
        }
    }
}

fn text_line() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,.?'\"()\\[\\]=<>*/+-]{1,40}"
        .prop_map(|s| s.trim().to_string())
        .prop_filter("non-empty", |s| !s.is_empty())
}

fn step_strategy() -> impl Strategy<Value = ParsedStep> {
    let thought = prop::option::of(prop::collection::vec(text_line(), 1..3).prop_map(|l| l.join("\n")));
    let thought = thought.prop_filter("no action labels", |t| {
        t.as_ref().is_none_or(|t| t.lines().all(|l| !l.starts_with("Act:") && !l.starts_with("Finish:")))
    });
    let action = prop_oneof![
        prop::collection::vec(text_line(), 1..4)
            .prop_map(|l| Action::Act { tool: Tool::Analyze, payload: l.join("\n") }),
        "[A-Za-z0-9 ,.?'\\\\]{1,40}"
            .prop_filter("non-blank", |s| !s.trim().is_empty())
            .prop_map(|p| Action::Act { tool: Tool::Search, payload: p }),
        text_line().prop_map(Action::Finish),
    ];
    (thought, action).prop_map(|(thought, action)| ParsedStep { thought, action })
}

proptest! {
    #[test]
    fn step_grammar_round_trips(step in step_strategy()) {
        prop_assert_eq!(parse_step(&serialize_step(&step)).unwrap(), step);
    }
}
