//! Road network service: hosts street and junction resources, runs vehicle
//! kinematics each tick, enforces lights and gaps, answers route queries and
//! hands arriving drivers over to the place services.

pub mod kinematics;
pub mod trajectory;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::body::{
    attrs, migrate_out, push_observation, service_base, AgentBody, Attributes, BodyRegistry, BodyRequest,
    Delivery, LightSignal, MigrationCheck, MigrationDocument, ObservationPayload, ObservationView, TrafficView,
};
use crate::clock::{ClockLink, TimeMessage};
use crate::error::{ProtocolError, RouteError, SimError};
use crate::routing::{free_flow_ticks, free_flow_time, shortest_route};
use crate::scenario::{PlaceKind, Scenario, Tick};
use crate::topology::Topology;
use crate::transport::{local_path, Handler, Method, Request, Response, SharedTransport};
use crate::trip::{Direction, TripRecord};
use crate::units::Milli;

use kinematics::{entry_free, leader_of, KinematicParams, Lights, RoadNet, StreetInfo, Vehicle, VehicleAction};
use trajectory::TrajectoryEvent;

pub const PARTICIPANT_ID: &str = "road";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RouteDocument {
    pub from: String,
    pub to: String,
    pub streets: Vec<String>,
    pub free_flow_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JunctionLinks {
    pub incoming: Vec<String>,
    pub outgoing: Vec<String>,
    pub places: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JunctionDocument {
    pub id: String,
    pub has_light: bool,
    pub green: Option<String>,
    pub links: JunctionLinks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StreetDocument {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub speed_limit: f64,
    pub occupants: Vec<String>,
    pub links: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
struct OpenTrip {
    direction: Direction,
    depart_tick: Tick,
    route: Vec<String>,
}

struct RoadState {
    registry: BodyRegistry,
    vehicles: BTreeMap<String, Vehicle>,
    lights: Lights,
    trips: Vec<TripRecord>,
    open_trips: BTreeMap<String, OpenTrip>,
    trajectory: Option<Box<dyn Write + Send>>,
}

pub struct RoadNetworkService {
    scenario: Arc<Scenario>,
    topology: Topology,
    transport: SharedTransport,
    clock: ClockLink,
    net: RoadNet,
    params: KinematicParams,
    state: Mutex<RoadState>,
}

/// Last path segment of a resource URI.
pub fn last_segment(uri: &str) -> &str {
    uri.rsplit('/').next().unwrap_or(uri)
}

impl RoadNetworkService {
    pub fn new(
        scenario: Arc<Scenario>,
        topology: Topology,
        transport: SharedTransport,
        trajectory: Option<Box<dyn Write + Send>>,
    ) -> Self {
        let mut net = RoadNet::default();
        for s in &scenario.streets {
            net.streets.insert(
                s.id.clone(),
                StreetInfo {
                    id: s.id.clone(),
                    from: s.from.clone(),
                    to: s.to.clone(),
                    length: Milli::from_f64(s.length),
                    speed_limit: Milli::from_f64(s.speed_limit),
                },
            );
        }
        net.lit = scenario
            .junctions
            .iter()
            .filter(|j| j.has_light)
            .map(|j| j.id.clone())
            .collect();
        for kind in [PlaceKind::Home, PlaceKind::Work] {
            for place in scenario.places(kind) {
                net.attached
                    .entry(place.junction.clone())
                    .or_default()
                    .insert(topology.place_uri(kind, &place.id));
            }
        }
        let lights = net.lit.iter().map(|j| (j.clone(), None)).collect();
        let state = RoadState {
            registry: BodyRegistry::new(&topology.road, VehicleAction::LABELS, "maintain"),
            vehicles: BTreeMap::new(),
            lights,
            trips: Vec::new(),
            open_trips: BTreeMap::new(),
            trajectory,
        };
        RoadNetworkService {
            clock: ClockLink::new(Arc::clone(&transport), &topology.clock, PARTICIPANT_ID),
            params: KinematicParams::from_params(&scenario.params),
            scenario,
            topology,
            transport,
            net,
            state: Mutex::new(state),
        }
    }

    pub fn set_retain_after_migration(&self, retain: bool) {
        self.lock().registry.set_retain_after_migration(retain);
    }

    fn lock(&self) -> MutexGuard<'_, RoadState> {
        self.state.lock().expect("road state poisoned")
    }

    pub fn trips(&self) -> Vec<TripRecord> {
        self.lock().trips.clone()
    }

    pub fn vehicles(&self) -> Vec<Vehicle> {
        self.lock().vehicles.values().cloned().collect()
    }

    pub fn route(&self, from: &str, to: &str) -> Result<RouteDocument, RouteError> {
        let streets = shortest_route(&self.scenario, from, to)?;
        let free_flow_seconds = free_flow_time(&self.scenario, &streets)?;
        Ok(RouteDocument {
            from: from.to_string(),
            to: to.to_string(),
            streets,
            free_flow_seconds,
        })
    }

    pub fn set_light(&self, junction: &str, green: &str) -> Result<(), ProtocolError> {
        if self.scenario.junction(junction).is_none() {
            return Err(ProtocolError::NotFound(format!("/junctions/{junction}")));
        }
        if !self.net.lit.contains(junction) {
            return Err(ProtocolError::BadRequest(format!("junction {junction} has no light")));
        }
        if self.net.street(green).map(|s| s.to.as_str()) != Some(junction) {
            return Err(ProtocolError::BadRequest(format!("{green} is not an approach of {junction}")));
        }
        self.lock().lights.insert(junction.to_string(), Some(green.to_string()));
        Ok(())
    }

    fn junction_document(&self, id: &str, lights: &Lights) -> Option<JunctionDocument> {
        let junction = self.scenario.junction(id)?;
        let mut incoming: Vec<&str> = Vec::new();
        let mut outgoing: Vec<&str> = Vec::new();
        for s in &self.scenario.streets {
            if s.to == id {
                incoming.push(&s.id);
            }
            if s.from == id {
                outgoing.push(&s.id);
            }
        }
        incoming.sort_unstable();
        outgoing.sort_unstable();
        Some(JunctionDocument {
            id: id.to_string(),
            has_light: junction.has_light,
            green: lights.get(id).cloned().flatten(),
            links: JunctionLinks {
                incoming: incoming.iter().map(|s| self.topology.street_uri(s)).collect(),
                outgoing: outgoing.iter().map(|s| self.topology.street_uri(s)).collect(),
                places: self
                    .net
                    .attached
                    .get(id)
                    .map(|p| p.iter().cloned().collect())
                    .unwrap_or_default(),
            },
        })
    }

    fn street_document(&self, id: &str, vehicles: &BTreeMap<String, Vehicle>) -> Option<StreetDocument> {
        let s = self.scenario.street(id)?;
        let mut links = BTreeMap::new();
        links.insert("from".to_string(), self.topology.junction_uri(&s.from));
        links.insert("to".to_string(), self.topology.junction_uri(&s.to));
        Some(StreetDocument {
            id: s.id.clone(),
            from: s.from.clone(),
            to: s.to.clone(),
            length: s.length,
            speed_limit: s.speed_limit,
            occupants: vehicles
                .values()
                .filter(|v| v.street == id)
                .map(|v| v.agent_id.clone())
                .collect(),
            links,
        })
    }

    /// Traffic observation for one vehicle at tick `t`.
    fn build_observation(&self, state: &RoadState, agent_id: &str, t: Tick) -> Result<ObservationPayload, ProtocolError> {
        let v = state
            .vehicles
            .get(agent_id)
            .ok_or_else(|| ProtocolError::Internal(format!("no vehicle for {agent_id}")))?;
        let info = self
            .net
            .street(&v.street)
            .ok_or_else(|| ProtocolError::Internal(format!("{agent_id} on unknown street")))?;
        let gap_ahead = leader_of(&state.vehicles, v).map(|l| (l.offset - v.offset - self.params.gap_min).as_f64());
        let light = if !self.net.lit.contains(&info.to) {
            LightSignal::None
        } else if state.lights.get(&info.to).and_then(Option::as_deref) == Some(v.street.as_str()) {
            LightSignal::Green
        } else {
            LightSignal::Red
        };
        Ok(ObservationPayload {
            time: t,
            webhook: state.registry.action_url(agent_id),
            view: ObservationView::Traffic(TrafficView {
                vehicle_speed: v.speed.as_f64(),
                at_intersection: v.offset == info.length,
                gap_ahead,
                speed_limit: info.speed_limit.as_f64(),
                light,
                street: self.topology.street_uri(&v.street),
                offset: v.offset.as_f64(),
                route_remaining: v.route.len(),
            }),
        })
    }

    pub fn observation(&self, agent_id: &str, t: Tick) -> Result<ObservationPayload, ProtocolError> {
        self.build_observation(&self.lock(), agent_id, t)
    }

    /// Places a body on a street: registration (`arrival == None`) or an
    /// incoming migration from a place service.
    fn host_body(
        &self,
        state: &mut RoadState,
        agent_id: &str,
        webhook: &str,
        resource: &str,
        attributes: &Attributes,
        arrival: Option<&MigrationDocument>,
    ) -> Result<(String, AgentBody), ProtocolError> {
        let path = local_path(&self.topology.road, resource);
        let street_id = path
            .strip_prefix("/streets/")
            .filter(|id| self.net.street(id).is_some())
            .ok_or_else(|| ProtocolError::NotFound(resource.to_string()))?;

        let route: Vec<String> = match attributes.get(attrs::ROUTE) {
            Some(value) => serde_json::from_value(value.clone())
                .map_err(|_| ProtocolError::BadRequest("route must be a list of street ids".into()))?,
            None if arrival.is_some() => return Err(ProtocolError::BadRequest("migration without route".into())),
            None => Vec::new(),
        };
        if let Some(first) = route.first() {
            if first != street_id {
                return Err(ProtocolError::BadRequest(format!("route starts at {first}, not {street_id}")));
            }
            free_flow_time(&self.scenario, &route).map_err(|e| ProtocolError::BadRequest(e.to_string()))?;
        }
        let destination = attributes
            .get(attrs::DESTINATION_PLACE)
            .and_then(Value::as_str)
            .map(str::to_string);
        if arrival.is_some() && destination.is_none() {
            return Err(ProtocolError::BadRequest("migration without destinationPlace".into()));
        }
        if let Some(dest) = &destination {
            let last = route.last().map_or(street_id, String::as_str);
            let end = &self.net.street(last).expect("route validated").to;
            if !self.net.attaches(end, dest) {
                return Err(ProtocolError::BadRequest(format!("{dest} is not attached at junction {end}")));
            }
        }
        if !entry_free(&state.vehicles, street_id, self.params.gap_min) {
            let msg = format!("entry of {street_id} occupied");
            return Err(if arrival.is_some() {
                ProtocolError::Unavailable(msg)
            } else {
                ProtocolError::Forbidden(msg)
            });
        }

        let direction = attributes
            .get(attrs::DIRECTION)
            .and_then(|d| serde_json::from_value::<Direction>(d.clone()).ok());
        let depart_tick = attributes.get(attrs::DEPART_TICK).and_then(Value::as_u64);
        if let (Some(direction), Some(depart_tick)) = (direction, depart_tick) {
            state.open_trips.insert(
                agent_id.to_string(),
                OpenTrip {
                    direction,
                    depart_tick,
                    route: route.clone(),
                },
            );
        }
        state.vehicles.insert(
            agent_id.to_string(),
            Vehicle {
                agent_id: agent_id.to_string(),
                street: street_id.to_string(),
                offset: Milli::ZERO,
                speed: Milli::ZERO,
                route: route.iter().skip(1).cloned().collect(),
                destination,
            },
        );
        let canonical = self.topology.street_uri(street_id);
        let body = match arrival {
            Some(doc) => AgentBody::migrated(doc.clone(), canonical),
            None => AgentBody {
                agent_id: agent_id.to_string(),
                webhook: webhook.to_string(),
                resource: canonical,
                pending_action: None,
                attributes: attributes.clone(),
                arrival: None,
            },
        };
        let uri = state.registry.body_uri(agent_id);
        Ok((uri, body))
    }

    pub fn post_body(&self, request: BodyRequest) -> Result<String, ProtocolError> {
        let mut state = self.lock();
        let state = &mut *state;
        let (uri, body) = match &request {
            BodyRequest::Register(r) => {
                state.registry.check_registration(&r.agent_id)?;
                self.host_body(state, &r.agent_id, &r.webhook, &r.resource, &r.attributes, None)?
            }
            BodyRequest::Migrate(doc) => match state.registry.check_migration(doc)? {
                MigrationCheck::AlreadyHosted => return Ok(state.registry.body_uri(&doc.agent_id)),
                MigrationCheck::New => {
                    self.host_body(state, &doc.agent_id, &doc.webhook, &doc.target_resource, &doc.attributes, Some(doc))?
                }
            },
        };
        state.registry.insert(body);
        Ok(uri)
    }

    /// One full tick: observe, collect actions, move, hand over arrivals, ack.
    pub fn run_tick(&self, t: Tick) -> Result<(), SimError> {
        let pushes = {
            let mut state = self.lock();
            state.registry.begin_tick(t);
            state
                .vehicles
                .keys()
                .map(|id| {
                    let payload = self.build_observation(&state, id, t)?;
                    let webhook = state.registry.get(id)?.webhook.clone();
                    Ok((webhook, payload))
                })
                .collect::<Result<Vec<_>, ProtocolError>>()?
        };

        for (webhook, payload) in &pushes {
            if push_observation(self.transport.as_ref(), webhook, payload, t)? == Delivery::Inert {
                tracing::warn!(tick = t, webhook, "driver inert this tick");
            }
        }

        let handovers = {
            let mut guard = self.lock();
            let state = &mut *guard;
            let actions: BTreeMap<String, VehicleAction> = state
                .registry
                .take_actions()
                .into_iter()
                .filter_map(|(id, a)| a.parse().ok().map(|a| (id, a)))
                .collect();
            let report = kinematics::step(&self.net, &self.params, &mut state.vehicles, &actions, &state.lights, t)?;

            for rec in &report.records {
                if rec.event != TrajectoryEvent::Arrived {
                    state
                        .registry
                        .set_resource(&rec.agent_id, self.topology.street_uri(&rec.street));
                }
            }
            if let Some(log) = state.trajectory.as_mut() {
                let io = |e: std::io::Error| SimError::Other(format!("trajectory log: {e}"));
                for rec in &report.records {
                    writeln!(log, "{rec}").map_err(io)?;
                }
                log.flush().map_err(io)?;
            }

            let mut handovers = Vec::new();
            for vehicle in report.arrivals {
                let body = state.registry.get(&vehicle.agent_id)?.clone();
                if let Some(trip) = state.open_trips.remove(&vehicle.agent_id) {
                    let seconds = free_flow_time(&self.scenario, &trip.route)?;
                    state.trips.push(TripRecord {
                        agent_id: vehicle.agent_id.clone(),
                        direction: trip.direction,
                        depart_tick: trip.depart_tick,
                        arrive_tick: t,
                        free_flow_ticks: free_flow_ticks(seconds, self.scenario.params.tick_seconds),
                        route_streets: trip.route,
                    });
                }
                let mut attributes = body.attributes.clone();
                for key in attrs::TRIP_KEYS {
                    attributes.remove(*key);
                }
                handovers.push(MigrationDocument {
                    agent_id: vehicle.agent_id.clone(),
                    webhook: body.webhook.clone(),
                    attributes,
                    target_resource: vehicle.destination.clone().expect("arrivals have a destination"),
                });
            }
            handovers
        };

        for doc in handovers {
            let base = service_base(&doc.target_resource)?;
            migrate_out(self.transport.as_ref(), &base, &doc)?;
            self.lock().registry.release(&doc.agent_id);
        }
        self.clock.ack(t)
    }
}

impl Handler for RoadNetworkService {
    fn handle(&self, request: Request) -> Response {
        match (request.method, request.segments().as_slice()) {
            (Method::Put, ["clock"]) => match request.json::<TimeMessage>() {
                Ok(msg) => match self.run_tick(msg.time) {
                    Ok(()) => Response::ok(json!({})),
                    Err(e) => {
                        tracing::error!(tick = msg.time, "road tick failed: {e}");
                        ProtocolError::Internal(e.to_string()).into()
                    }
                },
                Err(e) => e.into(),
            },
            (Method::Get, ["junctions"]) => {
                let lights = self.lock().lights.clone();
                let docs: Vec<JunctionDocument> = self
                    .scenario
                    .junctions
                    .iter()
                    .filter_map(|j| self.junction_document(&j.id, &lights))
                    .collect();
                Response::ok(docs)
            }
            (Method::Get, ["junctions", id]) => {
                let lights = self.lock().lights.clone();
                match self.junction_document(id, &lights) {
                    Some(doc) => Response::ok(doc),
                    None => Response::not_found(&request.path),
                }
            }
            (Method::Put, ["junctions", id, "light"]) => {
                #[derive(Deserialize)]
                struct Green {
                    green: String,
                }
                request
                    .json::<Green>()
                    .and_then(|g| self.set_light(id, &g.green))
                    .map(|_| json!({}))
                    .into()
            }
            (Method::Get, ["streets"]) => {
                let state = self.lock();
                let docs: Vec<StreetDocument> = self
                    .scenario
                    .streets
                    .iter()
                    .filter_map(|s| self.street_document(&s.id, &state.vehicles))
                    .collect();
                Response::ok(docs)
            }
            (Method::Get, ["streets", id]) => match self.street_document(id, &self.lock().vehicles) {
                Some(doc) => Response::ok(doc),
                None => Response::not_found(&request.path),
            },
            (Method::Get, ["routes"]) => {
                let (Some(from), Some(to)) = (request.query.get("from"), request.query.get("to")) else {
                    return ProtocolError::BadRequest("routes need `from` and `to`".into()).into();
                };
                match self.route(from, to) {
                    Ok(doc) => Response::ok(doc),
                    Err(e) => ProtocolError::NotFound(e.to_string()).into(),
                }
            }
            (Method::Get, ["trips"]) => Response::ok(self.trips()),
            (Method::Post, ["bodies"]) => match BodyRequest::from_request(&request).and_then(|r| self.post_body(r)) {
                Ok(uri) => Response::created(&uri),
                Err(e) => e.into(),
            },
            (Method::Delete, ["bodies", id]) => {
                let mut state = self.lock();
                match state.registry.delete(id) {
                    Ok(_) => {
                        state.vehicles.remove(*id);
                        state.open_trips.remove(*id);
                        Response::ok(json!({}))
                    }
                    Err(e) => e.into(),
                }
            }
            _ => self
                .lock()
                .registry
                .handle(&request)
                .unwrap_or_else(|| Response::not_found(&request.path)),
        }
    }
}

/// Lit junctions and their sorted approaches, as listed by the road network.
pub fn controlled_junctions(docs: &[JunctionDocument]) -> BTreeMap<String, Vec<String>> {
    docs.iter()
        .filter(|d| d.has_light)
        .map(|d| {
            let approaches: BTreeSet<String> = d.links.incoming.iter().map(|u| last_segment(u).to_string()).collect();
            (d.id.clone(), approaches.into_iter().collect())
        })
        .collect()
}
