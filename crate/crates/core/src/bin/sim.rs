use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use mams_sim::orchestrator::{self, Faults, Mode, RunConfig, ServiceKind};
use mams_sim::topology::Topology;
use mams_sim::transport::{HttpServer, HttpTransport};

#[derive(Parser)]
#[command(name = "sim", version, about = "Commute simulation over cooperating REST services")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario to completion and write trips.csv, trajectory.log, summary.txt.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "inprocess")]
        mode: Mode,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long)]
        max_ticks: Option<u64>,
    },
    /// Check a scenario file.
    Validate { scenario: PathBuf },
    /// Print the shortest route between two junctions.
    Route { scenario: PathBuf, from: String, to: String },
    /// Serve one service over HTTP (used by multiprocess runs).
    #[command(hide = true)]
    Serve {
        #[arg(long, value_enum)]
        service: ServiceKind,
        #[arg(long)]
        scenario: PathBuf,
        /// Topology as JSON.
        #[arg(long)]
        topology: String,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        retain_body_after_migration: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Cmd::Run {
            scenario,
            mode,
            out,
            max_ticks,
        } => {
            let mut config = RunConfig::new(mode, out);
            config.max_ticks = max_ticks;
            match orchestrator::run_file(&scenario, &config) {
                Ok(summary) => {
                    print!("{}", summary.summary_text());
                    if let orchestrator::RunOutcome::Failed(reason) = &summary.outcome {
                        eprintln!("error: {reason}");
                    }
                    ExitCode::from(summary.outcome.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Cmd::Validate { scenario } => match orchestrator::validate(&scenario) {
            Ok(report) => {
                println!("{report}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("invalid: {e}");
                ExitCode::from(1)
            }
        },
        Cmd::Route { scenario, from, to } => match orchestrator::route(&scenario, &from, &to) {
            Ok(route) => {
                println!("{}", route.streets.join(" "));
                println!("free-flow: {:.3} s", route.free_flow_seconds);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Cmd::Serve {
            service,
            scenario,
            topology,
            trajectory,
            retain_body_after_migration,
        } => match serve(service, scenario, &topology, trajectory, retain_body_after_migration) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}

fn serve(
    kind: ServiceKind,
    scenario: PathBuf,
    topology: &str,
    trajectory: Option<PathBuf>,
    retain: bool,
) -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Arc::new(mams_sim::load_scenario(scenario)?);
    let topology: Topology = serde_json::from_str(topology)?;
    let log: Option<Box<dyn Write + Send>> = match trajectory {
        Some(path) => Some(Box::new(BufWriter::new(File::create(path)?))),
        None => None,
    };
    let base = url::Url::parse(kind.base_url(&topology))?;
    let addr = format!(
        "{}:{}",
        base.host_str().ok_or("topology URL without host")?,
        base.port().ok_or("topology URL without port")?
    );
    let handler = orchestrator::build_service(
        kind,
        scenario,
        &topology,
        Arc::new(HttpTransport::new()),
        log,
        Faults {
            retain_body_after_migration: retain,
        },
    );
    let server = HttpServer::serve(&addr, handler)?;
    tracing::info!(service = kind.as_str(), %addr, "serving");
    server.join();
    Ok(())
}
