#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::{json, Value};

use mams_sim::builders::commute;
use mams_sim::orchestrator::Constellation;
use mams_sim::scenario::{PlaceKind, Place, Scenario, Tick};
use mams_sim::transport::Transport;

pub fn grid_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/grid3x3.json")
}

/// The single-commuter scenario plus one spare home and work for probing.
pub fn conformance_scenario() -> Scenario {
    let mut s = commute(100.0, 10.0, 2, 60, 2000);
    s.homes.push(Place {
        id: "h2".into(),
        junction: "A".into(),
        activity: "Watch TV".into(),
    });
    s.works.push(Place {
        id: "w2".into(),
        junction: "B".into(),
        activity: "Work".into(),
    });
    s.validate().unwrap();
    s
}

pub fn start(con: &Constellation) {
    let t = con.transport.as_ref();
    for (id, callback) in con.topology.participants() {
        let r = t
            .post(
                &format!("{}/participants", con.topology.clock),
                &json!({ "id": id, "callback": callback }),
            )
            .unwrap();
        assert_eq!(r.status, 201, "{id}: {:?}", r.body);
    }
    let r = t.post(&format!("{}/bootstrap", con.topology.drivers), &json!({})).unwrap();
    assert_eq!(r.status, 200, "{:?}", r.body);
}

pub fn advance(con: &Constellation) -> Tick {
    let r = con
        .transport
        .post(&format!("{}/advance", con.topology.clock), &json!({}))
        .unwrap();
    assert_eq!(r.status, 200, "advance: {:?}", r.body);
    r.body.unwrap()["time"].as_u64().unwrap()
}

#[derive(Debug, Clone)]
pub struct Check {
    pub service: &'static str,
    pub what: &'static str,
    pub expected: u16,
    pub got: u16,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.expected == self.got
    }
}

fn status(t: &dyn Transport, method: &str, url: &str, body: Option<Value>) -> u16 {
    let r = match (method, body) {
        ("GET", _) => t.get(url),
        ("DELETE", _) => t.delete(url),
        ("PUT", Some(b)) => t.put(url, &b),
        ("POST", Some(b)) => t.post(url, &b),
        _ => unreachable!(),
    };
    r.map(|r| r.status).unwrap_or(0)
}

fn census_count(t: &dyn Transport, base: &str, agent: &str) -> usize {
    let r = t.get(&format!("{base}/bodies")).unwrap();
    r.body
        .unwrap()
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["agentId"] == agent)
        .count()
}

/// Walks every body-protocol status code against road, home and work.
pub fn protocol_checks(con: &Constellation) -> Vec<Check> {
    let t = con.transport.as_ref();
    let topo = &con.topology;
    start(con);
    advance(con);
    let now = advance(con);
    assert_eq!(now, 1);

    let mut checks = Vec::new();
    let services: [(&'static str, &str, String, String, &str, Value); 3] = [
        (
            "road",
            &topo.road,
            topo.street_uri("B->A"),
            topo.street_uri("nowhere"),
            "maintain",
            json!({ "route": ["B->A"], "destinationPlace": topo.place_uri(PlaceKind::Home, "h2") }),
        ),
        (
            "home",
            &topo.home,
            topo.place_uri(PlaceKind::Home, "h2"),
            topo.place_uri(PlaceKind::Home, "h9"),
            "continue",
            json!({}),
        ),
        (
            "work",
            &topo.work,
            topo.place_uri(PlaceKind::Work, "w2"),
            topo.place_uri(PlaceKind::Work, "w9"),
            "continue",
            json!({}),
        ),
    ];
    for (service, base, resource, missing, action, migration_attrs) in services {
        let mut check = |what, expected, got| {
            checks.push(Check {
                service,
                what,
                expected,
                got,
            })
        };
        let agent = format!("x-{service}");
        let bodies = format!("{base}/bodies");
        let body_url = format!("{bodies}/{agent}");
        let register = json!({
            "agentId": agent,
            "webhook": topo.notification_url(&agent),
            "resource": resource,
        });
        check("register", 201, status(t, "POST", &bodies, Some(register.clone())));
        check("duplicate register", 409, status(t, "POST", &bodies, Some(register)));
        let stray = json!({
            "agentId": format!("y-{service}"),
            "webhook": topo.notification_url("y"),
            "resource": missing,
        });
        check("unknown resource", 404, status(t, "POST", &bodies, Some(stray)));
        let action_url = format!("{body_url}/action");
        check(
            "bad action",
            400,
            status(t, "PUT", &action_url, Some(json!({ "action": "fly", "forTick": now }))),
        );
        check(
            "stale action",
            409,
            status(t, "PUT", &action_url, Some(json!({ "action": action, "forTick": now - 1 }))),
        );
        check(
            "current action",
            200,
            status(t, "PUT", &action_url, Some(json!({ "action": action, "forTick": now }))),
        );
        check("delete", 200, status(t, "DELETE", &body_url, None));
        check("access after delete", 410, status(t, "GET", &body_url, None));

        let migrant = format!("m-{service}");
        let doc = json!({
            "agentId": migrant,
            "webhook": topo.notification_url(&migrant),
            "attributes": migration_attrs,
            "targetResource": resource,
        });
        check("migration", 201, status(t, "POST", &bodies, Some(doc.clone())));
        check("idempotent duplicate migration", 201, status(t, "POST", &bodies, Some(doc)));
        check(
            "hosted once after duplicate migration",
            1,
            census_count(t, base, &migrant) as u16,
        );
        check("cleanup", 200, status(t, "DELETE", &format!("{bodies}/{migrant}"), None));
    }

    // the real commuter leaves each service by migration
    let hosted = |base: &str| status(t, "GET", &format!("{base}/bodies/d1"), None);
    let mut left_home = None;
    let mut left_road = None;
    let mut left_work = None;
    for _ in 0..500 {
        advance(con);
        if left_home.is_none() && hosted(&topo.home) != 200 {
            left_home = Some(hosted(&topo.home));
        }
        if left_road.is_none() && hosted(&topo.work) == 200 {
            left_road = Some(hosted(&topo.road));
        }
        if left_work.is_none() && left_road.is_some() && hosted(&topo.work) != 200 {
            left_work = Some(hosted(&topo.work));
            break;
        }
    }
    for (service, got) in [("home", left_home), ("road", left_road), ("work", left_work)] {
        checks.push(Check {
            service,
            what: "access after migration",
            expected: 410,
            got: got.unwrap_or(0),
        });
    }
    checks
}
