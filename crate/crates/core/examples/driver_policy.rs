//! The driver decision table on a handful of observations.

use mams_sim::body::{LightSignal, ObservationPayload, ObservationView, PlaceView, TrafficView};
use mams_sim::driver::{decide, PolicyParams, Schedule};

fn traffic(speed: f64, at_intersection: bool, gap_ahead: Option<f64>) -> ObservationView {
    ObservationView::Traffic(TrafficView {
        vehicle_speed: speed,
        at_intersection,
        gap_ahead,
        speed_limit: 14.0,
        light: LightSignal::None,
        street: "http://road.sim/streets/s1".into(),
        offset: 0.0,
        route_remaining: 1,
    })
}

fn main() {
    let params = PolicyParams {
        tick_seconds: 1.0,
        gap_min: 5.0,
    };
    let schedule = Schedule {
        depart_home_tick: Some(10),
        depart_work_tick: Some(300),
    };
    let cases = [
        ("at the stop line", 5, traffic(0.0, true, None)),
        ("stopped, road clear", 5, traffic(0.0, false, None)),
        ("cruising at the limit", 5, traffic(14.0, false, None)),
        ("closing on a leader", 5, traffic(12.0, false, Some(8.0))),
        ("keeping distance", 5, traffic(6.0, false, Some(9.0))),
        ("home before departure", 4, ObservationView::Home(PlaceView { activity: "Watch TV".into() })),
        ("home at departure", 10, ObservationView::Home(PlaceView { activity: "Watch TV".into() })),
        ("at work", 150, ObservationView::Work(PlaceView { activity: "Work".into() })),
    ];
    for (label, time, view) in cases {
        let payload = ObservationPayload {
            time,
            webhook: "http://road.sim/bodies/d1/action".into(),
            view,
        };
        println!("{label:<26} -> {}", decide(&payload, &schedule, &params));
    }
}
