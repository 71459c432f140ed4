mod common;

use std::sync::Arc;

use mams_sim::orchestrator::{Constellation, Faults};

fn assert_all(checks: Vec<common::Check>) {
    let failed: Vec<_> = checks.iter().filter(|c| !c.ok()).collect();
    assert!(failed.is_empty(), "{failed:#?}");
    assert!(checks.len() >= 3 * 12 + 3);
}

#[test]
fn body_protocol_in_process() {
    let con = Constellation::in_process(Arc::new(common::conformance_scenario()), None, Faults::default());
    assert_all(common::protocol_checks(&con));
}

#[test]
fn body_protocol_over_http() {
    let con = Constellation::http(Arc::new(common::conformance_scenario()), None, Faults::default()).unwrap();
    assert_all(common::protocol_checks(&con));
}

#[test]
fn place_documents_link_to_junctions() {
    let con = Constellation::in_process(Arc::new(common::conformance_scenario()), None, Faults::default());
    let t = con.transport.as_ref();
    let place = t.get(&format!("{}/places/w1", con.topology.work)).unwrap();
    let junction_uri = place.body.unwrap()["links"]["junction"].as_str().unwrap().to_string();
    assert_eq!(junction_uri, format!("{}/junctions/B", con.topology.road));
    let junction = t.get(&junction_uri).unwrap().body.unwrap();
    let places: Vec<&str> = junction["links"]["places"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(places.contains(&format!("{}/places/w1", con.topology.work).as_str()));
}

#[test]
fn route_endpoint() {
    let con = Constellation::in_process(Arc::new(common::conformance_scenario()), None, Faults::default());
    let t = con.transport.as_ref();
    let ok = t.get(&format!("{}/routes?from=A&to=B", con.topology.road)).unwrap();
    assert_eq!(ok.status, 200);
    assert_eq!(ok.body.unwrap()["streets"], serde_json::json!(["A->B"]));
    assert_eq!(t.get(&format!("{}/routes?from=A&to=Z", con.topology.road)).unwrap().status, 404);
    assert_eq!(t.get(&format!("{}/routes?from=A", con.topology.road)).unwrap().status, 400);
}

#[test]
fn light_endpoint_rejects_bad_phases() {
    let con = Constellation::in_process(Arc::new(common::conformance_scenario()), None, Faults::default());
    let t = con.transport.as_ref();
    let body = serde_json::json!({ "green": "A->B" });
    // unlit junction
    assert_eq!(t.put(&format!("{}/junctions/B/light", con.topology.road), &body).unwrap().status, 400);
    assert_eq!(t.put(&format!("{}/junctions/Q/light", con.topology.road), &body).unwrap().status, 404);
}

#[test]
fn unknown_agent_notification_is_404() {
    let con = Constellation::in_process(Arc::new(common::conformance_scenario()), None, Faults::default());
    let payload = serde_json::json!({"type": "home", "time": 0, "webhook": "http://home.sim/bodies/z/action", "activity": "x"});
    let r = con
        .transport
        .put(&format!("{}/nobody/notifications", con.topology.drivers), &payload)
        .unwrap();
    assert_eq!(r.status, 404);
}
