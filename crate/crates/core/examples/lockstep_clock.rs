//! The clock refuses to advance until every participant acked the tick.

use std::sync::{Arc, Mutex};

use serde_json::json;

use mams_sim::clock::{first_lockstep_violation, AdvanceOutcome, ClockService};
use mams_sim::transport::{Handler, InProcessNetwork, Request, Response, Transport};

/// Remembers the last tick it was sent; acks only when told to.
#[derive(Default)]
struct Recorder(Mutex<Option<u64>>);

impl Handler for Recorder {
    fn handle(&self, request: Request) -> Response {
        *self.0.lock().unwrap() = request.body.and_then(|b| b["time"].as_u64());
        Response::ok(json!({}))
    }
}

fn main() {
    let net = InProcessNetwork::new();
    let clock = Arc::new(ClockService::new(net.clone()));
    net.mount("http://clock.sim", clock.clone()).unwrap();
    let names = ["lights", "road"];
    for name in names {
        net.mount(&format!("http://{name}.sim"), Arc::new(Recorder::default())).unwrap();
        net.post(
            "http://clock.sim/participants",
            &json!({ "id": name, "callback": format!("http://{name}.sim/clock") }),
        )
        .unwrap();
    }

    for _ in 0..3 {
        let tick = match clock.advance().unwrap() {
            AdvanceOutcome::Advanced(t) => t,
            other => panic!("{other:?}"),
        };
        println!("tick {tick} broadcast");
        net.post("http://clock.sim/participants/lights/ack", &json!({ "time": tick })).unwrap();
        println!("  advance with road missing: {:?}", clock.advance().unwrap());
        net.post("http://clock.sim/participants/road/ack", &json!({ "time": tick })).unwrap();
    }
    let ids: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    println!("violations: {:?}", first_lockstep_violation(&clock.events(), &ids));
    net.clear();
}
