//! Full run of a scenario file with every service in one process.
//!
//!     cargo run --release --example in_process_run -- scenarios/grid3x3.json out/

use mams_sim::orchestrator::{run_file, Mode, RunConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let scenario = args.next().unwrap_or_else(|| "scenarios/grid3x3.json".into());
    let out = args.next().unwrap_or_else(|| "run".into());
    let summary = run_file(&scenario, &RunConfig::new(Mode::Inprocess, &out)).expect("run");
    print!("{}", summary.summary_text());
    for trip in summary.trips.iter().take(6) {
        println!("{}", trip.csv_row());
    }
    std::process::exit(summary.outcome.exit_code());
}
