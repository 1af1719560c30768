use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use specfission::expr::SignalValues;
use specfission::planner::{plan, validate_plan};
use specfission::runtime::{serve, Embedded, Endpoint, HttpEndpoint, Loader, ServeConfig};
use specfission::session::{check, evaluate_spec, parse_trace, replay, ReplayOptions};
use specfission::spec::{emit_spec, parse_spec, VisSpec};
use specfission::Value;

#[derive(Parser)]
#[command(name = "specfission", version, about = "Split Vega data pipelines between client and server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the client spec, server spec and communication plan.
    Plan {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the task runtime as an HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 7070)]
        port: u16,
        #[arg(long, default_value_t = 1 << 30)]
        cache_bytes: usize,
        #[arg(long, default_value = ".")]
        data_root: PathBuf,
        #[arg(long, default_value_t = 0)]
        inject_latency_ms: u64,
        #[arg(long)]
        no_url_cache: bool,
        /// Keep cache entries on disk across restarts.
        #[arg(long)]
        persist_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        threads: usize,
    },
    /// Evaluate every dataset directly and print the tables.
    Eval {
        spec: PathBuf,
        /// `name=value`, where value is JSON (bare text is read as a string).
        #[arg(long = "signal")]
        signals: Vec<String>,
        /// Defaults to the spec's directory.
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
    /// Replay an interaction trace and write a report.
    Replay {
        spec: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        report: PathBuf,
        /// Sleep until each event's timestamp.
        #[arg(long)]
        realtime: bool,
    },
    /// Compare the planned pipeline with direct evaluation after every
    /// trace prefix. Exits 0 when they agree.
    Check {
        spec: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        target: Target,
    },
}

#[derive(Args)]
struct Target {
    /// `host:port` of a running service.
    #[arg(long, conflicts_with = "embedded")]
    server: Option<String>,
    /// Run the runtime in-process (the default without --server).
    #[arg(long)]
    embedded: bool,
    /// Data root for in-process loading; defaults to the spec's directory.
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long, default_value_t = 1 << 30)]
    cache_bytes: usize,
    /// Added to each in-process query.
    #[arg(long, default_value_t = 0)]
    inject_latency_ms: u64,
}

type CliResult<T> = Result<T, String>;

fn read_spec(path: &Path) -> CliResult<VisSpec> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_spec(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn spec_dir(spec: &Path) -> PathBuf {
    spec.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_json(path: &Path, doc: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(doc).expect("json serializes");
    fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_signal(arg: &str) -> CliResult<(String, Value)> {
    let (name, text) = arg
        .split_once('=')
        .ok_or_else(|| format!("--signal expects name=value, got `{arg}`"))?;
    let value = match serde_json::from_str::<serde_json::Value>(text) {
        Ok(json) => Value::from_json(&json).map_err(|e| format!("--signal {name}: {e}"))?,
        Err(_) => Value::Str(text.to_string()),
    };
    Ok((name.to_string(), value))
}

fn endpoint(target: &Target, spec: &Path) -> CliResult<(Box<dyn Endpoint>, Loader)> {
    let root = target.data_root.clone().unwrap_or_else(|| spec_dir(spec));
    let loader = Loader::new(&root);
    if let Some(addr) = &target.server {
        return Ok((Box::new(HttpEndpoint::new(addr)), loader));
    }
    let config = ServeConfig {
        cache_bytes: target.cache_bytes,
        data_root: root,
        inject_latency_ms: target.inject_latency_ms,
        ..ServeConfig::default()
    };
    let runtime = config.runtime().map_err(|e| e.to_string())?;
    Ok((Box::new(Embedded(Arc::new(runtime))), loader))
}

fn run(command: Command) -> CliResult<ExitCode> {
    match command {
        Command::Plan { spec, out } => {
            let parsed = read_spec(&spec)?;
            let result = plan(&parsed).map_err(|e| e.to_string())?;
            let report = validate_plan(&parsed, &result);
            if !report.is_valid() {
                return Err(format!("plan failed validation: {:?}", report.violations));
            }
            fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            let client: serde_json::Value = serde_json::from_slice(&emit_spec(&result.client_spec)).expect("emitted specs parse");
            write_json(&out.join("client_spec.json"), &client)?;
            write_json(&out.join("server_spec.json"), &result.server_spec.to_json())?;
            write_json(&out.join("comm_plan.json"), &result.comm_plan.to_json())?;
            for s in &result.splits {
                println!("{}: {}/{} steps on the server ({:?})", s.dataset, s.server_steps, s.total_steps, s.reason);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            host,
            port,
            cache_bytes,
            data_root,
            inject_latency_ms,
            no_url_cache,
            persist_dir,
            threads,
        } => {
            let config = ServeConfig {
                host,
                port,
                cache_bytes,
                data_root,
                inject_latency_ms,
                no_url_cache,
                persist_dir,
                threads,
            };
            let server = serve(&config).map_err(|e| e.to_string())?;
            println!("listening on {}", server.addr());
            server.join();
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { spec, signals, data_root } => {
            let parsed = read_spec(&spec)?;
            let mut values: SignalValues = parsed.initial_signal_values();
            for arg in &signals {
                let (name, value) = parse_signal(arg)?;
                values.insert(name, value);
            }
            parsed.refresh_update_signals(&mut values);
            let loader = Loader::new(data_root.unwrap_or_else(|| spec_dir(&spec)));
            let tables = evaluate_spec(&parsed, &values, &loader).map_err(|e| e.to_string())?;
            for d in &parsed.datasets {
                println!("{}:\n{}", d.name, tables[&d.name]);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            spec,
            trace,
            target,
            report,
            realtime,
        } => {
            let parsed = read_spec(&spec)?;
            let events = parse_trace(&fs::read(&trace).map_err(|e| format!("{}: {e}", trace.display()))?)
                .map_err(|e| e.to_string())?;
            let (endpoint, _) = endpoint(&target, &spec)?;
            let (result, _) = replay(&parsed, &events, endpoint.as_ref(), ReplayOptions { realtime })
                .map_err(|e| e.to_string())?;
            write_json(&report, &result.to_json())?;
            println!(
                "{} events, {} bytes delivered, initial query {:.1} ms",
                result.events.len(),
                result.total_bytes(),
                result.initial.latency_ms
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { spec, trace, target } => {
            let parsed = read_spec(&spec)?;
            let events = parse_trace(&fs::read(&trace).map_err(|e| format!("{}: {e}", trace.display()))?)
                .map_err(|e| e.to_string())?;
            let (endpoint, loader) = endpoint(&target, &spec)?;
            let report = check(&parsed, &events, endpoint.as_ref(), &loader).map_err(|e| e.to_string())?;
            for m in &report.mismatches {
                println!("after {} events, dataset `{}`: {}", m.prefix, m.dataset, m.detail);
            }
            if report.passed() {
                println!("ok: {} datasets agree over {} prefixes", report.datasets.len(), report.prefixes);
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("specfission: {message}");
            ExitCode::from(2)
        }
    }
}
