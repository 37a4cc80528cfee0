//! Command-line front end: run scenarios, render heatmaps and timelines.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use ecaif::scenario::RunMode;
use ecaif::{emit_heatmap, emit_timeline, load_scenario, run, SelectionMode, TraceLog};

#[derive(Parser)]
#[command(
    name = "ecaif",
    version,
    about = "Environment-centric active inference planner and grid-world transport simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and emit its trace
    Run {
        /// Scenario file to execute
        scenario: PathBuf,
        /// Directory for trace.jsonl and summary.json; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the run mode: ecaif or agent:<what>
        #[arg(long)]
        mode: Option<String>,
        /// Override the planning depth
        #[arg(long)]
        horizon: Option<usize>,
        /// Override the policy-posterior precision
        #[arg(long)]
        precision: Option<f64>,
        /// Override action selection: argmax or sample
        #[arg(long)]
        select: Option<String>,
        /// Override the sampling seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of timesteps
        #[arg(long)]
        timesteps: Option<usize>,
    },
    /// Print the observation heatmap of one entity as CSV
    Heatmap {
        /// Trace file produced by `run`
        trace: PathBuf,
        /// Entity to count observations for
        #[arg(long)]
        what: String,
    },
    /// Print a human-readable timeline of a trace
    Timeline {
        /// Trace file produced by `run`
        trace: PathBuf,
    },
}

fn main() {
    if let Err(message) = dispatch(Cli::parse()) {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}

/// Writes to stdout, treating a closed pipe as a normal exit.
fn emit(text: impl std::fmt::Display) -> Result<(), String> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match write!(out, "{text}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(e.to_string()),
    }
}

fn dispatch(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            mode,
            horizon,
            precision,
            select,
            seed,
            timesteps,
        } => {
            let mut config = load_scenario(&scenario).map_err(|e| e.to_string())?;
            if let Some(mode) = mode {
                config.mode = parse_mode(&mode)?;
                if let RunMode::AgentCentric { agent } = &config.mode {
                    match config.env.what_index(agent) {
                        Some(i) if config.env.whats[i].is_controllable() => {}
                        _ => return Err(format!("{agent:?} is not a controllable entity")),
                    }
                }
            }
            if let Some(horizon) = horizon {
                config.horizon = horizon;
            }
            if let Some(precision) = precision {
                config.precision = precision;
            }
            if let Some(select) = select {
                config.selection = match select.as_str() {
                    "argmax" => SelectionMode::Argmax,
                    "sample" => SelectionMode::Sample,
                    other => return Err(format!("expected argmax or sample, got {other:?}")),
                };
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(timesteps) = timesteps {
                config.timesteps = timesteps;
            }

            let trace = run(&config).map_err(|e| e.to_string())?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                    let trace_path = dir.join("trace.jsonl");
                    trace.write_jsonl(&trace_path).map_err(|e| e.to_string())?;
                    let summary_path = dir.join("summary.json");
                    let summary = serde_json::to_string_pretty(&trace.header)
                        .map_err(|e| e.to_string())?;
                    std::fs::write(&summary_path, summary).map_err(|e| e.to_string())?;
                    emit(format!(
                        "wrote {}\nwrote {}\n",
                        trace_path.display(),
                        summary_path.display()
                    ))?;
                }
                None => emit(trace.to_jsonl())?,
            }
            Ok(())
        }
        Command::Heatmap { trace, what } => {
            let trace = TraceLog::read_jsonl(&trace).map_err(|e| e.to_string())?;
            let histogram = emit_heatmap(&trace, &what).map_err(|e| e.to_string())?;
            emit(histogram.to_csv())
        }
        Command::Timeline { trace } => {
            let trace = TraceLog::read_jsonl(&trace).map_err(|e| e.to_string())?;
            for row in emit_timeline(&trace) {
                emit(format!("{row}\n"))?;
            }
            Ok(())
        }
    }
}

fn parse_mode(mode: &str) -> Result<RunMode, String> {
    if mode == "ecaif" {
        return Ok(RunMode::Ecaif);
    }
    if let Some(agent) = mode.strip_prefix("agent:") {
        if agent.is_empty() {
            return Err("agent mode needs an entity: agent:<what>".into());
        }
        return Ok(RunMode::AgentCentric {
            agent: agent.to_string(),
        });
    }
    Err(format!("expected ecaif or agent:<what>, got {mode:?}"))
}
