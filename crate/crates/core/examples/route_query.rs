//! Shortest route and free-flow time between two junctions of a scenario.
//!
//!     cargo run --example route_query -- scenarios/grid3x3.json j00 j22

use mams_sim::load_scenario;
use mams_sim::routing::{free_flow_ticks, free_flow_time, shortest_route};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (path, from, to) = match args.as_slice() {
        [p, f, t] => (p.as_str(), f.as_str(), t.as_str()),
        _ => ("scenarios/grid3x3.json", "j00", "j22"),
    };
    let scenario = load_scenario(path).expect("load scenario");
    match shortest_route(&scenario, from, to) {
        Ok(route) => {
            let seconds = free_flow_time(&scenario, &route).unwrap();
            println!("{from} -> {to}: {}", route.join(", "));
            println!(
                "free flow {seconds:.3} s = {} ticks",
                free_flow_ticks(seconds, scenario.params.tick_seconds)
            );
        }
        Err(e) => println!("{e}"),
    }
}
