//! Generates a seeded grid scenario and writes it as JSON.
//!
//!     cargo run --example grid_scenario -- scenarios/grid3x3.json [seed]

use mams_sim::builders::{grid, GridSpec};
use mams_sim::scenario::save_scenario;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "grid3x3.json".into());
    let seed = args.next().map(|s| s.parse().expect("seed is an integer"));
    let spec = GridSpec {
        seed: seed.unwrap_or(GridSpec::default().seed),
        ..GridSpec::default()
    };
    let scenario = grid(&spec);
    save_scenario(&scenario, &path).expect("write scenario");
    let lit: Vec<&str> = scenario
        .junctions
        .iter()
        .filter(|j| j.has_light)
        .map(|j| j.id.as_str())
        .collect();
    println!(
        "{path}: {} junctions, {} streets, {} agents, lit {lit:?}",
        scenario.junctions.len(),
        scenario.streets.len(),
        scenario.population.len()
    );
}
