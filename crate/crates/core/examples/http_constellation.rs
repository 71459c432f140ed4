//! The same services behind real HTTP listeners; prints the topology and
//! walks the hypermedia links from a workplace to its junction.

use std::sync::Arc;

use mams_sim::builders::commute;
use mams_sim::orchestrator::{drive, Constellation, Faults};

fn main() {
    let scenario = commute(150.0, 12.0, 0, 50, 1000);
    let con = Constellation::http(Arc::new(scenario.clone()), None, Faults::default()).expect("bind listeners");
    println!("{}", serde_json::to_string_pretty(&con.topology).unwrap());

    let t = con.transport.as_ref();
    let place = t.get(&format!("{}/places/w1", con.topology.work)).unwrap().body.unwrap();
    let junction_uri = place["links"]["junction"].as_str().unwrap();
    let junction = t.get(junction_uri).unwrap().body.unwrap();
    println!("w1 -> {junction_uri}");
    println!("{}", serde_json::to_string_pretty(&junction).unwrap());

    let summary = drive(t, &con.topology, &scenario, scenario.params.max_ticks);
    print!("{}", summary.summary_text());
}
