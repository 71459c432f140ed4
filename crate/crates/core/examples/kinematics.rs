//! A lone vehicle on a 200 m street: accelerate to the limit, stop at the
//! line, cross when the driver says "move".

use std::collections::{BTreeMap, VecDeque};

use mams_sim::road::kinematics::{step, KinematicParams, RoadNet, StreetInfo, Vehicle, VehicleAction};
use mams_sim::scenario::SimParams;
use mams_sim::units::Milli;

fn main() {
    let mut net = RoadNet::default();
    net.streets.insert(
        "main".into(),
        StreetInfo {
            id: "main".into(),
            from: "A".into(),
            to: "B".into(),
            length: Milli::from_f64(200.0),
            speed_limit: Milli::from_f64(14.0),
        },
    );
    net.attached.entry("B".into()).or_default().insert("http://work.sim/places/w1".into());
    let params = KinematicParams::from_params(&SimParams::with_max_ticks(100));

    let mut vehicles = BTreeMap::new();
    vehicles.insert(
        "d1".to_string(),
        Vehicle {
            agent_id: "d1".into(),
            street: "main".into(),
            offset: Milli::ZERO,
            speed: Milli::ZERO,
            route: VecDeque::new(),
            destination: Some("http://work.sim/places/w1".into()),
        },
    );
    for tick in 0.. {
        let at_line = vehicles.get("d1").is_some_and(|v| v.offset == net.streets["main"].length);
        let action = if at_line { VehicleAction::Move } else { VehicleAction::Accelerate };
        let actions = BTreeMap::from([("d1".to_string(), action)]);
        let report = step(&net, &params, &mut vehicles, &actions, &BTreeMap::new(), tick).unwrap();
        for record in &report.records {
            println!("{record}");
        }
        if !report.arrivals.is_empty() {
            break;
        }
    }
}
