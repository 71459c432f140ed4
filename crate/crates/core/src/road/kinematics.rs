//! Per-tick vehicle update: discrete constant-acceleration point vehicles with
//! FIFO gap clamping, stop lines at junctions and explicit crossing.
//!
//! Streets are processed in ascending id order and vehicles on a street from
//! front to back, so the outcome of a tick never depends on request timing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::str::FromStr;

use crate::error::SimError;
use crate::road::trajectory::{TrajectoryEvent, TrajectoryRecord};
use crate::scenario::{SimParams, Tick};
use crate::units::Milli;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KinematicParams {
    /// Speed gained by one accelerate action.
    pub accel_step: Milli,
    /// Speed shed by one decelerate action.
    pub decel_step: Milli,
    pub gap_min: Milli,
    pub tick_ms: i64,
}

impl KinematicParams {
    pub fn from_params(params: &SimParams) -> Self {
        KinematicParams {
            accel_step: Milli::from_f64(params.accel * params.tick_seconds),
            decel_step: Milli::from_f64(params.decel * params.tick_seconds),
            gap_min: Milli::from_f64(params.gap_min),
            tick_ms: (params.tick_seconds * 1000.0).round() as i64,
        }
    }

    /// Distance covered in one tick at `speed`.
    pub fn displacement(&self, speed: Milli) -> Milli {
        Milli(speed.0 * self.tick_ms / 1000)
    }

    /// Speed that covers `distance` in one tick, rounded down.
    pub fn speed_for(&self, distance: Milli) -> Milli {
        Milli(distance.0 * 1000 / self.tick_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleAction {
    Accelerate,
    Decelerate,
    Maintain,
    Move,
}

impl VehicleAction {
    pub const LABELS: &'static [&'static str] = &["accelerate", "decelerate", "maintain", "move"];
}

impl FromStr for VehicleAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accelerate" => Ok(VehicleAction::Accelerate),
            "decelerate" => Ok(VehicleAction::Decelerate),
            "maintain" => Ok(VehicleAction::Maintain),
            "move" => Ok(VehicleAction::Move),
            other => Err(format!("unknown vehicle action `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vehicle {
    pub agent_id: String,
    pub street: String,
    pub offset: Milli,
    pub speed: Milli,
    /// Streets still to take after the current one.
    pub route: VecDeque<String>,
    /// Place the vehicle leaves the network into after its final junction.
    pub destination: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreetInfo {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: Milli,
    pub speed_limit: Milli,
}

/// Static road graph in simulation units.
#[derive(Debug, Clone, Default)]
pub struct RoadNet {
    pub streets: BTreeMap<String, StreetInfo>,
    pub lit: BTreeSet<String>,
    /// Place URIs attached to each junction.
    pub attached: BTreeMap<String, BTreeSet<String>>,
}

/// Green approach per lit junction; `None` until a controller sets one.
pub type Lights = BTreeMap<String, Option<String>>;

impl RoadNet {
    pub fn street(&self, id: &str) -> Option<&StreetInfo> {
        self.streets.get(id)
    }

    /// Whether traffic on `street` may enter its end junction now.
    pub fn light_allows(&self, lights: &Lights, street: &str) -> bool {
        let Some(info) = self.streets.get(street) else {
            return false;
        };
        if !self.lit.contains(&info.to) {
            return true;
        }
        lights.get(&info.to).and_then(Option::as_deref) == Some(street)
    }

    pub fn attaches(&self, junction: &str, place_uri: &str) -> bool {
        self.attached.get(junction).is_some_and(|p| p.contains(place_uri))
    }
}

/// True when no vehicle sits within the first `gap_min` metres of `street`.
pub fn entry_free(vehicles: &BTreeMap<String, Vehicle>, street: &str, gap_min: Milli) -> bool {
    vehicles
        .values()
        .all(|v| v.street != street || v.offset >= gap_min)
}

/// Nearest vehicle ahead of `vehicle` on the same street.
pub fn leader_of<'a>(vehicles: &'a BTreeMap<String, Vehicle>, vehicle: &Vehicle) -> Option<&'a Vehicle> {
    vehicles
        .values()
        .filter(|v| v.street == vehicle.street && v.offset > vehicle.offset)
        .min_by_key(|v| v.offset)
}

#[derive(Debug, Default)]
pub struct StepReport {
    /// One record per vehicle processed, in ascending agent id order.
    pub records: Vec<TrajectoryRecord>,
    /// Vehicles that left the network into their destination place.
    pub arrivals: Vec<Vehicle>,
}

fn apply_action(action: VehicleAction, speed: Milli, limit: Milli, params: &KinematicParams) -> Milli {
    match action {
        VehicleAction::Accelerate => (speed + params.accel_step).min(limit),
        VehicleAction::Decelerate => (speed - params.decel_step).max(Milli::ZERO),
        VehicleAction::Maintain | VehicleAction::Move => speed,
    }
}

/// Advances every vehicle by one tick. Vehicles without an action maintain.
pub fn step(
    net: &RoadNet,
    params: &KinematicParams,
    vehicles: &mut BTreeMap<String, Vehicle>,
    actions: &BTreeMap<String, VehicleAction>,
    lights: &Lights,
    tick: Tick,
) -> Result<StepReport, SimError> {
    let mut report = StepReport::default();
    let mut done: BTreeSet<String> = BTreeSet::new();

    for (street_id, info) in &net.streets {
        let mut queue: Vec<(Milli, String)> = vehicles
            .values()
            .filter(|v| &v.street == street_id && !done.contains(&v.agent_id))
            .map(|v| (v.offset, v.agent_id.clone()))
            .collect();
        queue.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

        let mut leader: Option<Milli> = None;
        for (_, id) in queue {
            done.insert(id.clone());
            let action = actions.get(&id).copied().unwrap_or(VehicleAction::Maintain);
            let mut v = vehicles[&id].clone();
            let speed = apply_action(action, v.speed, info.speed_limit, params);

            if v.offset == info.length {
                let may_go = action == VehicleAction::Move && net.light_allows(lights, street_id);
                match v.route.front().cloned() {
                    Some(next) if may_go && entry_free(vehicles, &next, params.gap_min) => {
                        let next_limit = net
                            .street(&next)
                            .ok_or_else(|| SimError::InvariantBreach(format!("{id} routed onto unknown street {next}")))?
                            .speed_limit;
                        v.route.pop_front();
                        v.street = next;
                        v.offset = Milli::ZERO;
                        v.speed = speed.min(next_limit);
                        report.records.push(record(tick, &v, TrajectoryEvent::Crossed));
                        vehicles.insert(id, v);
                        continue;
                    }
                    None if may_go
                        && v
                            .destination
                            .as_deref()
                            .is_some_and(|d| net.attaches(&info.to, d)) =>
                    {
                        v.speed = Milli::ZERO;
                        report.records.push(record(tick, &v, TrajectoryEvent::Arrived));
                        vehicles.remove(&id);
                        report.arrivals.push(v);
                        continue;
                    }
                    _ => {
                        v.speed = Milli::ZERO;
                        leader = Some(v.offset);
                        report.records.push(record(tick, &v, TrajectoryEvent::Blocked));
                        vehicles.insert(id, v);
                        continue;
                    }
                }
            }

            let mut speed = speed;
            let mut offset = v.offset + params.displacement(speed);
            if let Some(front) = leader {
                let cap = front - params.gap_min;
                if offset > cap {
                    if cap < v.offset {
                        return Err(SimError::InvariantBreach(format!(
                            "{id} at {} already inside the gap of its leader at {front}",
                            v.offset
                        )));
                    }
                    offset = cap;
                    speed = speed.min(params.speed_for(offset - v.offset));
                }
            }
            if offset >= info.length {
                offset = info.length;
                speed = Milli::ZERO;
            }
            v.offset = offset;
            v.speed = speed;
            leader = Some(offset);
            report.records.push(record(tick, &v, TrajectoryEvent::Moved));
            vehicles.insert(id, v);
        }
    }

    report.records.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
    check_invariants(net, params, vehicles)?;
    Ok(report)
}

fn record(tick: Tick, v: &Vehicle, event: TrajectoryEvent) -> TrajectoryRecord {
    TrajectoryRecord {
        tick,
        agent_id: v.agent_id.clone(),
        street: v.street.clone(),
        offset: v.offset,
        speed: v.speed,
        event,
    }
}

/// Gap, bounds and speed-limit checks over the whole network.
pub fn check_invariants(
    net: &RoadNet,
    params: &KinematicParams,
    vehicles: &BTreeMap<String, Vehicle>,
) -> Result<(), SimError> {
    let mut per_street: BTreeMap<&str, Vec<&Vehicle>> = BTreeMap::new();
    for v in vehicles.values() {
        let info = net
            .street(&v.street)
            .ok_or_else(|| SimError::InvariantBreach(format!("{} on unknown street {}", v.agent_id, v.street)))?;
        if v.offset < Milli::ZERO || v.offset > info.length {
            return Err(SimError::InvariantBreach(format!("{} offset {} outside {}", v.agent_id, v.offset, v.street)));
        }
        if v.speed < Milli::ZERO || v.speed > info.speed_limit {
            return Err(SimError::InvariantBreach(format!("{} speed {} on {}", v.agent_id, v.speed, v.street)));
        }
        per_street.entry(v.street.as_str()).or_default().push(v);
    }
    for (street, mut list) in per_street {
        list.sort_by_key(|v| v.offset);
        for pair in list.windows(2) {
            if pair[1].offset - pair[0].offset < params.gap_min {
                return Err(SimError::InvariantBreach(format!(
                    "{} and {} closer than gapMin on {street}",
                    pair[0].agent_id, pair[1].agent_id
                )));
            }
        }
    }
    Ok(())
}
