//! One driver's day seen through the census: home, road, work, road, home.

use std::sync::Arc;

use serde_json::Value;

use mams_sim::builders::commute;
use mams_sim::orchestrator::{census_check, Constellation, Faults};

fn main() {
    let scenario = Arc::new(commute(120.0, 10.0, 2, 40, 500));
    let con = Constellation::in_process(scenario, None, Faults::default());
    let (t, topo) = (con.transport.as_ref(), &con.topology);
    for (id, callback) in topo.participants() {
        t.post(&format!("{}/participants", topo.clock), &serde_json::json!({ "id": id, "callback": callback }))
            .unwrap();
    }
    t.post(&format!("{}/bootstrap", topo.drivers), &serde_json::json!({})).unwrap();

    let mut last = String::new();
    for _ in 0..120 {
        let r = t.post(&format!("{}/advance", topo.clock), &serde_json::json!({})).unwrap();
        let tick = r.body.unwrap()["time"].as_u64().unwrap();
        let placement = census_check(t, topo, &["d1".to_string()]).expect("exactly one body");
        let here = placement["d1"].clone();
        if here != last {
            println!("tick {tick:>3}: d1 at {here}");
            last = here;
        }
    }
    let trips: Value = t.get(&format!("{}/trips", topo.road)).unwrap().body.unwrap();
    println!("{}", serde_json::to_string_pretty(&trips).unwrap());
}
