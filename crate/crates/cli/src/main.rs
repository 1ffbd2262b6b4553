//! `scenl`: check, format and simulate ScenL scenarios, or run the service.
//!
//! Exit status: 0 on success, 1 when error diagnostics were reported, 2 on
//! usage or I/O errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use scenl::event::{parse_descriptors, parse_rules};
use scenl::interp::LoadError;
use scenl::lang::{has_errors, parse_macro_library};
use scenl::sim::{run_simulation_with, SimError};
use scenl::{format, parse, Diagnostic, Likelihood, MachineConfig, Registry, SensorScript};
use scenl_service::{RegistrySources, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "scenl", version, about = "Event-driven scenarios for sensors and entities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario against a registry.
    Check(CheckArgs),
    /// Print a scenario in canonical form.
    Fmt(FmtArgs),
    /// Run a scenario against a scripted sensor timeline.
    Simulate(SimulateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RegistryArgs {
    /// Sensor and entity descriptor file; repeatable.
    #[arg(short, long = "registry", value_name = "PATH")]
    registries: Vec<PathBuf>,
    /// Symbolic rule file; repeatable.
    #[arg(long = "rules", value_name = "PATH")]
    rules: Vec<PathBuf>,
    /// Macro library file; repeatable.
    #[arg(long = "macros", value_name = "PATH")]
    macros: Vec<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    file: PathBuf,
    #[command(flatten)]
    registry: RegistryArgs,
    /// Print diagnostics as JSON on standard output.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FmtArgs {
    file: PathBuf,
    /// Rewrite the file in place.
    #[arg(long, conflicts_with = "diff")]
    write: bool,
    /// Print a unified diff against the canonical form instead.
    #[arg(long)]
    diff: bool,
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    #[command(flatten)]
    registry: RegistryArgs,
    /// Sensor script (`@<tick> <sensor>.<event>=<value>@<likelihood>` per line).
    #[arg(short, long)]
    script: Option<PathBuf>,
    /// Last tick to simulate; defaults to the last scripted tick.
    #[arg(long)]
    horizon: Option<u64>,
    /// Write the trace here instead of standard output.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "50")]
    threshold: Likelihood,
    /// Scheduling points allowed per step.
    #[arg(long, default_value_t = 100_000)]
    budget: u64,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "SCENL_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "SCENL_BIND", default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, env = "SCENL_DATA_DIR", default_value = "scenl-data")]
    data_dir: PathBuf,
    /// Milliseconds per tick in live mode.
    #[arg(long, env = "SCENL_TICK_MS", default_value_t = 100)]
    tick_ms: u64,
    #[arg(long, env = "SCENL_THRESHOLD", default_value = "50")]
    threshold: Likelihood,
    /// Descriptor file replacing the stored registry; repeatable.
    #[arg(short, long = "registry", value_name = "PATH")]
    registries: Vec<PathBuf>,
    /// Rule file for the replacement registry; repeatable.
    #[arg(long = "rules", value_name = "PATH")]
    rules: Vec<PathBuf>,
    /// Send an entity's commands to a URL, as `entity=url`; repeatable.
    #[arg(long = "webhook", value_name = "ENTITY=URL", value_parser = parse_webhook)]
    webhooks: Vec<(String, String)>,
}

fn parse_webhook(s: &str) -> Result<(String, String), String> {
    let (entity, url) = s.split_once('=').ok_or("expected ENTITY=URL")?;
    if entity.is_empty() || url.is_empty() {
        return Err("expected ENTITY=URL".into());
    }
    Ok((entity.to_string(), url.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(a) => check(a),
        Command::Fmt(a) => fmt(a),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn concat(paths: &[PathBuf]) -> Result<String> {
    let mut out = String::new();
    for p in paths {
        out.push_str(&read(p)?);
        out.push('\n');
    }
    Ok(out)
}

impl RegistryArgs {
    fn load(&self) -> Result<Registry> {
        let mut reg = Registry::new();
        for path in &self.registries {
            for d in parse_descriptors(&read(path)?).with_context(|| path.display().to_string())? {
                reg.add_descriptor(d).with_context(|| path.display().to_string())?;
            }
        }
        for path in &self.rules {
            let rules = parse_rules(&read(path)?).with_context(|| path.display().to_string())?;
            reg.add_rules(rules).with_context(|| path.display().to_string())?;
        }
        for path in &self.macros {
            let lib = parse_macro_library(&read(path)?).with_context(|| path.display().to_string())?;
            reg.macros.extend(lib);
        }
        Ok(reg)
    }
}

fn print_diagnostics(path: &Path, source: &str, diags: &[Diagnostic]) {
    let name = path.display().to_string();
    for d in diags {
        eprintln!("{}", d.render(&name, source));
    }
}

fn check(args: CheckArgs) -> Result<u8> {
    let source = read(&args.file)?;
    let registry = args.registry.load()?;
    let diags = scenl::lang::check(&source, &registry);
    if args.json {
        let items: Vec<_> = diags
            .iter()
            .map(|d| {
                let (line, column) = d.span.line_col(&source);
                json!({
                    "path": args.file.display().to_string(),
                    "line": line,
                    "column": column,
                    "severity": d.severity,
                    "code": d.code,
                    "message": d.message,
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&items)?);
    } else {
        print_diagnostics(&args.file, &source, &diags);
    }
    Ok(u8::from(has_errors(&diags)))
}

fn fmt(args: FmtArgs) -> Result<u8> {
    let source = read(&args.file)?;
    let program = match parse(&source) {
        Ok(p) => p,
        Err(e) => {
            print_diagnostics(&args.file, &source, &[e.to_diagnostic()]);
            return Ok(1);
        }
    };
    let canonical = format!("{}\n", format(&program));
    if args.write {
        if canonical != source {
            fs::write(&args.file, &canonical).with_context(|| format!("cannot write {}", args.file.display()))?;
        }
    } else if args.diff {
        if canonical != source {
            let name = args.file.display().to_string();
            let diff = similar::TextDiff::from_lines(&source, &canonical);
            print!(
                "{}",
                diff.unified_diff().header(&name, &format!("{name} (formatted)"))
            );
        }
    } else {
        print!("{canonical}");
    }
    Ok(0)
}

fn simulate(args: SimulateArgs) -> Result<u8> {
    let source = read(&args.scenario)?;
    let registry = args.registry.load()?;
    let script = match &args.script {
        Some(path) => SensorScript::parse(&read(path)?).with_context(|| path.display().to_string())?,
        None => SensorScript::new(),
    };
    let program = match parse(&source) {
        Ok(p) => p,
        Err(e) => {
            print_diagnostics(&args.scenario, &source, &[e.to_diagnostic()]);
            return Ok(1);
        }
    };
    let horizon = args
        .horizon
        .unwrap_or_else(|| script.entries().last().map_or(0, |(t, _)| *t));
    let config = MachineConfig {
        threshold: args.threshold,
        step_budget: args.budget,
    };
    let report = match run_simulation_with(&program, &registry, &[], &script, horizon, config) {
        Ok(r) => r,
        Err(SimError::Load(LoadError::Invalid(diags))) => {
            print_diagnostics(&args.scenario, &source, &diags);
            return Ok(1);
        }
        Err(SimError::Runtime(e)) => {
            eprintln!("{}: runtime error: {e}", args.scenario.display());
            return Ok(1);
        }
        Err(e) => return Err(anyhow!(e)),
    };

    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else if let Some(path) = &args.trace {
        fs::write(path, report.render()).with_context(|| format!("cannot write {}", path.display()))?;
        println!("{}", report.summary());
    } else {
        let mut out = std::io::stdout().lock();
        out.write_all(report.render().as_bytes())?;
    }
    if report.budget_exhausted {
        eprintln!("warning: step budget of {} exhausted", args.budget);
    }
    Ok(0)
}

fn serve(args: ServeArgs) -> Result<u8> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let mut config = ServiceConfig::new(&args.data_dir);
    config.tick_period = Duration::from_millis(args.tick_ms);
    config.threshold = args.threshold;
    config.webhooks = args.webhooks.into_iter().collect::<BTreeMap<_, _>>();
    if !args.registries.is_empty() || !args.rules.is_empty() {
        let sources = RegistrySources {
            descriptors: concat(&args.registries)?,
            rules: concat(&args.rules)?,
        };
        sources.build().map_err(|e| anyhow!("registry: {e}"))?;
        config.registry = Some(sources);
    }

    let runtime = tokio::runtime::Runtime::new().context("cannot start runtime")?;
    runtime.block_on(async move {
        let addr = SocketAddr::new(args.bind, args.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        let service = Service::open(config).context("cannot open data directory")?;
        let local = listener.local_addr()?;
        eprintln!("listening on http://{local}");
        service.serve(listener, shutdown_signal()).await.context("server error")?;
        eprintln!("shut down");
        Ok(0)
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
