//! Subcommand implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use insight_core::agent::{
    backend_by_name, default_pool, render_steps, run_session_with, write_trace, Agent, AgentConfig, BackendError,
    ModelBackend, ScriptedBackend, SessionKey, StepKind, Toolbox, TraceStep, DEFAULT_SCHEMA_CARD,
};
use insight_core::benchgen::{self, generate_benchmark, TemplateLibrary};
use insight_core::datamodel::{load_cohort, save_cohort, UserDataset, MANIFEST_FILE};
use insight_core::eval::{
    build_report, codegen_pool, read_open_ended, render_report, run_method, run_open_ended, write_results,
    RunContext, RunOptions, DEFAULT_OPEN_ENDED_JSONL, DEFAULT_RESAMPLES,
};
use insight_core::retrieval::{Index, RemoteSearch, SearchTool};
use insight_core::synthgen::{generate_cohort, select_eval_users, CohortSpec, GeneratorConfig};
use insight_service::{AppState, ServiceConfig};

use crate::args::{AskArgs, BenchCommand, BenchGenArgs, BenchRunArgs, Cli, Command, OpenEndedArgs, ServeArgs, SynthArgs};
use crate::config::FileConfig;
use crate::usage;

const DEFAULT_USERS: usize = 56;
const DEFAULT_DAYS: u32 = 31;
const DEFAULT_QUERIES: usize = 4000;
const DEFAULT_PORT: u16 = 8080;

struct Globals {
    seed: u64,
    out: Option<PathBuf>,
    file: FileConfig,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) if !p.is_file() => return Err(usage(format!("config file {} does not exist", p.display()))),
        Some(p) => FileConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    let g = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli.out,
        file,
    };
    match cli.command {
        Command::Synth(a) => synth(&g, a),
        Command::Bench(BenchCommand::Gen(a)) => bench_gen(&g, a),
        Command::Bench(BenchCommand::Run(a)) => bench_run(&g, a),
        Command::Bench(BenchCommand::OpenEnded(a)) => open_ended(&g, a),
        Command::Ask(a) => ask(&g, a),
        Command::Serve(a) => serve(&g, a),
    }
}

fn agent_config(g: &Globals) -> anyhow::Result<AgentConfig> {
    let config = AgentConfig {
        seed: g.seed,
        ..g.file.agent.clone().unwrap_or_default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn backend(name: &str) -> anyhow::Result<Arc<dyn ModelBackend>> {
    backend_by_name(name).map_err(|e| match e {
        BackendError::Unknown(_) | BackendError::Config(_) => usage(e.to_string()),
        other => other.into(),
    })
}

/// The remote search service when configured, the bundled corpus otherwise.
fn search_tool() -> anyhow::Result<Arc<dyn SearchTool>> {
    match RemoteSearch::from_env() {
        Some(r) => Ok(Arc::new(r.map_err(|e| usage(e.to_string()))?)),
        None => Ok(Arc::new(Index::default_corpus())),
    }
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn load(dir: &Path) -> anyhow::Result<Vec<UserDataset>> {
    require_file(&dir.join(MANIFEST_FILE), "cohort manifest")?;
    load_cohort(dir).with_context(|| format!("cannot load cohort from {}", dir.display()))
}

/// The cohort at `dir`, or the default cohort for `seed` when none is given.
fn cohort_or_default(dir: Option<&Path>, seed: u64) -> anyhow::Result<Vec<UserDataset>> {
    match dir {
        Some(d) => load(d),
        None => {
            let config = GeneratorConfig {
                seed,
                ..GeneratorConfig::default()
            };
            Ok(generate_cohort(&CohortSpec {
                n_users: DEFAULT_USERS,
                config,
            })?)
        }
    }
}

/// A buffered writer on `--out`, or on stdout.
fn output(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
            }
            Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?))
        }
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn synth(g: &Globals, a: SynthArgs) -> anyhow::Result<()> {
    let users = a.users.or(g.file.synth.users).unwrap_or(DEFAULT_USERS);
    let days = a.days.or(g.file.synth.days).unwrap_or(DEFAULT_DAYS);
    if users == 0 {
        return Err(usage("--users must be at least 1"));
    }
    if !(1..=31).contains(&days) {
        return Err(usage(format!("--days must be between 1 and 31, got {days}")));
    }
    let out = g.out.as_deref().ok_or_else(|| usage("synth needs --out DIR"))?;
    let generator = a.generator.or_else(|| g.file.synth.generator.clone());
    let base = match &generator {
        Some(p) => {
            require_file(p, "generator config")?;
            GeneratorConfig::from_file(p)?
        }
        None => GeneratorConfig::default(),
    };
    let config = GeneratorConfig {
        seed: g.seed,
        days,
        ..base
    };
    let cohort = generate_cohort(&CohortSpec { n_users: users, config })?;
    let manifest = save_cohort(&cohort, out)?;
    writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn bench_gen(g: &Globals, a: BenchGenArgs) -> anyhow::Result<()> {
    let n = a.queries.or(g.file.bench.queries).unwrap_or(DEFAULT_QUERIES);
    if n == 0 {
        return Err(usage("--queries must be at least 1"));
    }
    let mut cohort = load(&a.cohort)?;
    if let Some(k) = a.users.or(g.file.bench.users) {
        if k == 0 || k > cohort.len() {
            return Err(usage(format!("--users must be between 1 and {}", cohort.len())));
        }
        let keep = select_eval_users(&cohort, k, g.seed)?;
        cohort.retain(|ds| keep.contains(&ds.user_id));
    }
    let queries = generate_benchmark(&TemplateLibrary::default(), &cohort, n, g.seed)?;
    benchgen::write_jsonl(&queries, output(g.out.as_deref())?)?;
    eprintln!("{} queries over {} users", queries.len(), cohort.len());
    Ok(())
}

fn bench_run(g: &Globals, a: BenchRunArgs) -> anyhow::Result<()> {
    let name = a
        .backend
        .or_else(|| g.file.bench.backend.clone())
        .ok_or_else(|| usage("bench run needs --backend"))?;
    let model = backend(&name)?;
    require_file(&a.bench, "benchmark file")?;
    let agent = Agent::new(agent_config(g)?)?;
    let cohort = load(&a.cohort)?;
    let mut queries = benchgen::read_jsonl(BufReader::new(File::open(&a.bench)?))
        .with_context(|| format!("cannot read {}", a.bench.display()))?;
    if let Some(limit) = a.limit {
        queries.truncate(limit);
    }
    if queries.is_empty() {
        return Err(usage("the benchmark has no queries"));
    }
    let search = search_tool()?;
    let shots = codegen_pool(&default_pool());
    let ctx = RunContext {
        agent: &agent,
        codegen_shots: &shots,
        search: Some(search.as_ref()),
        schema_card: DEFAULT_SCHEMA_CARD,
    };
    let options = RunOptions {
        jobs: a.jobs.or(g.file.bench.jobs).unwrap_or(0),
        rule: g.file.bench.match_rule.unwrap_or_default(),
    };
    let resamples = a.resamples.or(g.file.bench.resamples).unwrap_or(DEFAULT_RESAMPLES);
    if let Some(dir) = &g.out {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }

    let mut reports = Vec::new();
    for method in a.method {
        let results = run_method(method, &queries, &cohort, model.as_ref(), &ctx, options)?;
        if let Some(dir) = &g.out {
            let path = dir.join(format!("results-{method}.jsonl"));
            let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
            write_results(&results, &mut w)?;
            w.flush()?;
        }
        reports.push(build_report(method, &results, resamples, g.seed)?);
    }
    let (md, json) = render_report(&reports);
    if let Some(dir) = &g.out {
        std::fs::write(dir.join("report.md"), &md)?;
        std::fs::write(dir.join("report.json"), &json)?;
    }
    std::io::stdout().write_all(md.as_bytes())?;
    Ok(())
}

fn open_ended(g: &Globals, a: OpenEndedArgs) -> anyhow::Result<()> {
    let name = a
        .backend
        .or_else(|| g.file.bench.backend.clone())
        .ok_or_else(|| usage("bench open-ended needs --backend"))?;
    let model = backend(&name)?;
    let queries = match &a.queries {
        Some(p) => {
            require_file(p, "queries file")?;
            read_open_ended(BufReader::new(File::open(p)?))?
        }
        None => read_open_ended(DEFAULT_OPEN_ENDED_JSONL.as_bytes())?,
    };
    let cohort = load(&a.cohort)?;
    let agent = Agent::new(agent_config(g)?)?;
    let search = search_tool()?;
    let jobs = a.jobs.or(g.file.bench.jobs).unwrap_or(0);
    let results = run_open_ended(&queries, &cohort, model.as_ref(), &agent, Some(search.as_ref()), jobs)?;
    let mut w = output(g.out.as_deref())?;
    for r in &results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let answered = results.iter().filter(|r| r.final_answer.is_some()).count();
    eprintln!("{answered} of {} open-ended queries answered", results.len());
    Ok(())
}

fn print_step(step: &TraceStep, json: bool) {
    if json {
        println!("{}", serde_json::to_string(step).expect("trace step serializes"));
    } else if step.kind == StepKind::ProtocolError {
        println!("Protocol error: {}", step.content);
    } else {
        println!("{}", render_steps(std::slice::from_ref(step)));
    }
}

fn ask(g: &Globals, a: AskArgs) -> anyhow::Result<()> {
    let name = a.backend.unwrap_or_else(|| "demo".to_string());
    let model = backend(&name)?;
    if a.question.trim().is_empty() {
        return Err(usage("--question must not be empty"));
    }
    let agent = Agent::new(agent_config(g)?)?;
    let cohort = cohort_or_default(a.cohort.as_deref(), g.seed)?;
    let ds = cohort
        .iter()
        .find(|d| d.user_id == a.user)
        .ok_or_else(|| usage(format!("unknown user '{}'", a.user)))?;
    let search = search_tool()?;
    let tools = Toolbox {
        dataset: ds,
        search: Some(search.as_ref()),
    };
    let key = SessionKey::new(format!("ask-{}", a.user));
    let outcome = run_session_with(&agent, &a.question, &tools, model.as_ref(), &key, &mut |s| print_step(s, a.json));
    if let Some(path) = &g.out {
        write_trace(&outcome.trace, output(Some(path))?)?;
    }
    match outcome.final_answer {
        Some(_) => Ok(()),
        None => anyhow::bail!("the agent stopped without an answer"),
    }
}

fn serve(g: &Globals, a: ServeArgs) -> anyhow::Result<()> {
    let s = &g.file.serve;
    let host = a.host.or_else(|| s.host.clone()).unwrap_or_else(|| "127.0.0.1".into());
    let port = a.port.or(s.port).unwrap_or(DEFAULT_PORT);
    let addr: std::net::SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|_| usage(format!("invalid listen address {host}:{port}")))?;
    let default_backend = a.backend.or_else(|| s.backend.clone()).unwrap_or_else(|| "demo".into());
    let mut scripts = Vec::new();
    for spec in &a.scripts {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--script expects NAME=PATH, got '{spec}'")))?;
        require_file(Path::new(path), "script")?;
        let b = ScriptedBackend::from_jsonl(BufReader::new(File::open(path)?)).map_err(|e| usage(e.to_string()))?;
        scripts.push((name.to_string(), Arc::new(b.named(name))));
    }
    let config = ServiceConfig {
        data_dir: a.data_dir.or_else(|| s.data_dir.clone()),
        default_backend,
        cors_origin: a.cors_origin.or_else(|| s.cors_origin.clone()),
        agent: agent_config(g)?,
    };
    let cohort = cohort_or_default(a.cohort.as_deref(), g.seed)?;
    let state = Arc::new(AppState::new(cohort, Some(search_tool()?), config)?);
    for (name, b) in scripts {
        state.register_backend(name, b);
    }

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        insight_service::serve(listener, state).await?;
        Ok(())
    })
}
