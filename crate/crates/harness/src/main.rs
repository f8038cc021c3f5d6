use std::net::ToSocketAddrs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use mnemo_core::engine::RetrievalOverrides;
use mnemo_core::{EngineConfig, MemoryEngine};
use mnemo_harness::diff::diff;
use mnemo_harness::report::{diff_table, eval_table, ingest_table, read_json, to_json, write_json};
use mnemo_harness::suites::suite;
use mnemo_harness::{
    evaluate, ingest, parse_queries, parse_transcript, read_file, EvalOptions, EvalReport, HarnessError, Mode,
    ScopeTemplate,
};
use mnemo_service::AppState;

#[derive(Parser)]
#[command(name = "mnemo", version, about = "Conversational memory engine: replay, evaluate, serve")]
struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a JSONL transcript into the configured store.
    Ingest {
        #[arg(long)]
        transcript: PathBuf,
        #[command(flatten)]
        scope: ScopeArgs,
        /// Also write the ingest report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a query set and report recall and token cost.
    Evaluate(EvaluateArgs),
    /// Compare two evaluation reports metric by metric.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Launch the REST service.
    Serve {
        /// Overrides `server.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Args, Clone)]
struct ScopeArgs {
    #[arg(long, default_value = "bench")]
    org_id: String,
    #[arg(long, default_value = "bench")]
    project_id: String,
    #[arg(long, default_value = "user")]
    user_id: String,
    #[arg(long, default_value = "agent")]
    agent_id: String,
}

impl ScopeArgs {
    fn template(&self) -> ScopeTemplate {
        ScopeTemplate {
            org_id: self.org_id.clone(),
            project_id: self.project_id.clone(),
            user_id: self.user_id.clone(),
            agent_id: self.agent_id.clone(),
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Transcript to ingest before evaluating.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// JSON array of query specs.
    #[arg(long, conflicts_with = "suite")]
    queries: Option<PathBuf>,
    /// Built-in suite: planted-fact, adjacency or late-binding.
    #[arg(long, conflicts_with = "transcript")]
    suite: Option<String>,
    #[arg(long, default_value_t = 0, requires = "suite")]
    variant: u64,
    #[arg(long, value_enum, default_value_t = Mode::Memory)]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long)]
    nucleus_k: Option<usize>,
    #[arg(long)]
    cluster_top_k: Option<usize>,
    #[arg(long)]
    neighbors_before: Option<usize>,
    #[arg(long)]
    neighbors_after: Option<usize>,
    /// Score answers against reference answers with the configured chat model.
    #[arg(long)]
    answer: bool,
    #[command(flatten)]
    scope: ScopeArgs,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Print JSON instead of the text table.
    #[arg(long)]
    print_json: bool,
}

impl EvaluateArgs {
    fn overrides(&self) -> RetrievalOverrides {
        RetrievalOverrides {
            nucleus_k: self.nucleus_k,
            cluster_top_k: self.cluster_top_k,
            neighbors_before: self.neighbors_before,
            neighbors_after: self.neighbors_after,
            ..RetrievalOverrides::default()
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<EngineConfig, HarnessError> {
    Ok(match path {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    })
}

fn run_evaluate(config: EngineConfig, args: &EvaluateArgs) -> Result<EvalReport, HarnessError> {
    if let Some(name) = &args.suite {
        let s = suite(name, args.variant)?;
        let engine = s.engine();
        s.ingest_into(&engine)?;
        let opts = EvalOptions {
            mode: Some(args.mode),
            parallel: args.parallel,
            template: s.template.clone(),
            overrides: args.overrides(),
            answer_chat: None,
            suite: Some(s.name.clone()),
        };
        return Ok(evaluate(&engine, &s.queries, &opts));
    }
    let Some(queries_path) = &args.queries else {
        return Err(HarnessError::Queries("either --queries or --suite is required".into()));
    };
    let queries = parse_queries(&read_file(queries_path)?)?;
    let answer_chat = if args.answer {
        let registry = config.build_registry();
        let chat = config.models.chat.as_deref().and_then(|id| registry.chat(id));
        if chat.is_none() {
            eprintln!("warning: --answer needs a configured chat model; answer scoring disabled");
        }
        chat
    } else {
        None
    };
    let engine = MemoryEngine::from_config(config)?;
    let template = args.scope.template();
    if let Some(t) = &args.transcript {
        let report = ingest(&engine, &parse_transcript(&read_file(t)?)?, &template)?;
        eprintln!("ingested {} episodes from {}", report.episodes, t.display());
    }
    let opts = EvalOptions {
        mode: Some(args.mode),
        parallel: args.parallel,
        template,
        overrides: args.overrides(),
        answer_chat,
        suite: None,
    };
    Ok(evaluate(&engine, &queries, &opts))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let config = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Ingest { transcript, scope, json } => {
            let lines = parse_transcript(&read_file(&transcript)?)?;
            let engine = MemoryEngine::from_config(config)?;
            let report = ingest(&engine, &lines, &scope.template())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", ingest_table(&report));
            if let Some(path) = json {
                write_json(&path, &report)?;
            }
        }
        Command::Evaluate(args) => {
            let report = run_evaluate(config, &args)?;
            if args.print_json {
                print!("{}", to_json(&report));
            } else {
                print!("{}", eval_table(&report));
            }
            if let Some(path) = &args.json {
                write_json(path, &report)?;
            }
        }
        Command::Diff { a, b, json } => {
            let ra: EvalReport = read_json(&a)?;
            let rb: EvalReport = read_json(&b)?;
            let d = diff(&ra, &rb)?;
            print!("{}", diff_table(&d));
            if let Some(path) = json {
                write_json(&path, &d)?;
            }
        }
        Command::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| config.server.bind.clone());
            let addr = bind
                .to_socket_addrs()
                .ok()
                .and_then(|mut a| a.next())
                .ok_or_else(|| HarnessError::Report(format!("cannot resolve bind address `{bind}`")))?;
            let engine = Arc::new(MemoryEngine::from_config(config)?);
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| HarnessError::Report(format!("runtime: {e}")))?;
            runtime.block_on(async move {
                let (bound, handle) = mnemo_service::spawn(addr, AppState::new(engine))
                    .await
                    .map_err(|e| HarnessError::Report(format!("bind {addr}: {e}")))?;
                eprintln!("listening on http://{bound}");
                match handle.await {
                    Ok(Ok(())) => Ok(()),
                    Ok(Err(e)) => Err(HarnessError::Report(format!("server: {e}"))),
                    Err(e) => Err(HarnessError::Report(format!("server task: {e}"))),
                }
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
