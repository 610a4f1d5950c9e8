use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use cha_core::engine::TurnRequest;
use cha_core::session::Session;
use cha_core::translation::LanguageTag;
use cha_server::replay::{self, load_transcript};
use cha_server::{api, service_from, EngineConfig};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use uuid::Uuid;

#[derive(Parser)]
#[command(name = "cha", version, about = "Conversational health agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `server.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Interactive conversation on stdin.
    Chat {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        language: Option<String>,
    },
    /// Replay a golden transcript against a scripted fixture.
    Replay {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long)]
        golden: PathBuf,
        /// Base config for health paths and translation.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write a new golden from `--query` instead of comparing.
        #[arg(long)]
        record: bool,
        #[arg(long = "query")]
        queries: Vec<String>,
        #[arg(long = "task")]
        tasks: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Task registry commands.
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
}

#[derive(Subcommand)]
enum TasksCommand {
    /// List enabled tasks.
    List {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(EngineConfig::default().with_env_overrides()),
    }
}

fn serve(config: &Path, bind: Option<String>) -> anyhow::Result<()> {
    let config = load_config(Some(config))?;
    let service = service_from(&config)?;
    let addr = bind.unwrap_or_else(|| config.server.bind.clone());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = api::bind(&addr).await?;
        tracing::info!(addr = %api::local_addr(&listener)?, "listening");
        let router = api::router(service, config.server.auth_token.clone());
        api::serve(listener, router, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn chat(config: &Path, language: Option<String>) -> anyhow::Result<()> {
    let config = load_config(Some(config))?;
    let engine = config.build_engine()?;
    let language = language.as_deref().map(LanguageTag::parse).transpose()?;
    let mut session = Session::new(Uuid::new_v4());
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    write!(out, "> ")?;
    out.flush()?;
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            write!(out, "> ")?;
            out.flush()?;
            continue;
        }
        let request = TurnRequest {
            query: line,
            metadata: vec![],
            language: language.clone(),
        };
        match engine.orchestrate_turn(&mut session, &request) {
            Ok(result) => writeln!(out, "{}\n", result.answer)?,
            Err(e) => writeln!(out, "error: {e}\n")?,
        }
        write!(out, "> ")?;
        out.flush()?;
    }
    Ok(())
}

fn run_replay(
    fixture: &Path,
    golden: &Path,
    config: Option<&Path>,
    record: bool,
    queries: Vec<String>,
    tasks: Vec<String>,
    seed: u64,
) -> anyhow::Result<ExitCode> {
    let base = load_config(config)?;
    if record {
        if queries.is_empty() {
            bail!("--record needs at least one --query");
        }
        let requests: Vec<TurnRequest> = queries.into_iter().map(TurnRequest::new).collect();
        let transcript = replay::record(&base, fixture, seed, &tasks, &base.settings(), &requests)?;
        std::fs::write(golden, serde_json::to_string_pretty(&transcript)? + "\n")?;
        println!("recorded {} turns to {}", transcript.turns.len(), golden.display());
        return Ok(ExitCode::SUCCESS);
    }
    load_transcript(golden)?;
    let report = replay::replay(&base, fixture, golden)?;
    println!("{report}");
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn list_tasks(config: Option<&Path>) -> anyhow::Result<()> {
    let config = load_config(config)?;
    let registry = config.registry()?;
    for spec in registry.specs() {
        println!(
            "{:<24} {:<20} {}",
            spec.name,
            spec.chat_name,
            if spec.output_type { "output" } else { "reference" }
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { config, bind } => serve(&config, bind).map(|_| ExitCode::SUCCESS),
        Command::Chat { config, language } => chat(&config, language).map(|_| ExitCode::SUCCESS),
        Command::Replay {
            fixture,
            golden,
            config,
            record,
            queries,
            tasks,
            seed,
        } => run_replay(&fixture, &golden, config.as_deref(), record, queries, tasks, seed),
        Command::Tasks {
            command: TasksCommand::List { config },
        } => list_tasks(config.as_deref()).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
