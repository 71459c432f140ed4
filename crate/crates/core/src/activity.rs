//! Home and work places. One service instance per kind: pushes time plus
//! activity to each occupant and launches departing drivers onto the road
//! network.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::body::{
    attrs, migrate_out, push_observation, AgentBody, Attributes, BodyRegistry, BodyRequest, Delivery,
    MigrationCheck, MigrationDocument, ObservationPayload, ObservationView, PlaceView,
};
use crate::clock::{ClockLink, TimeMessage};
use crate::error::{MigrationError, ProtocolError, SimError};
use crate::road::{last_segment, RouteDocument};
use crate::scenario::{PlaceKind, Scenario, Tick};
use crate::topology::Topology;
use crate::transport::{local_path, Handler, Method, Request, Response, SharedTransport};
use crate::trip::Direction;

pub const VOCABULARY: &[&str] = &["continue", "depart"];
pub const DEFAULT_ACTION: &str = "continue";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Occupancy {
    pub occupant: Option<String>,
    pub planned_route: Option<Vec<String>>,
    pub depart_tick: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceLinks {
    pub junction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceDocument {
    pub id: String,
    pub kind: PlaceKind,
    pub junction: String,
    pub activity: String,
    pub occupant: Option<String>,
    pub links: PlaceLinks,
}

struct PlaceState {
    registry: BodyRegistry,
    occupancy: BTreeMap<String, Occupancy>,
}

pub struct ActivityService {
    kind: PlaceKind,
    scenario: Arc<Scenario>,
    topology: Topology,
    transport: SharedTransport,
    clock: ClockLink,
    state: Mutex<PlaceState>,
}

/// What a departing occupant needs for its migration, copied out of the lock.
struct Departure {
    agent_id: String,
    place_id: String,
    webhook: String,
    attributes: Attributes,
    planned_route: Option<Vec<String>>,
}

impl ActivityService {
    pub fn new(kind: PlaceKind, scenario: Arc<Scenario>, topology: Topology, transport: SharedTransport) -> Self {
        let base = topology.place_base(kind).to_string();
        let occupancy = scenario
            .places(kind)
            .iter()
            .map(|p| (p.id.clone(), Occupancy::default()))
            .collect();
        ActivityService {
            kind,
            clock: ClockLink::new(Arc::clone(&transport), &topology.clock, kind.as_str()),
            scenario,
            topology,
            transport,
            state: Mutex::new(PlaceState {
                registry: BodyRegistry::new(&base, VOCABULARY, DEFAULT_ACTION),
                occupancy,
            }),
        }
    }

    pub fn kind(&self) -> PlaceKind {
        self.kind
    }

    pub fn set_retain_after_migration(&self, retain: bool) {
        self.lock().registry.set_retain_after_migration(retain);
    }

    fn lock(&self) -> MutexGuard<'_, PlaceState> {
        self.state.lock().expect("place state poisoned")
    }

    pub fn occupancy(&self, place_id: &str) -> Option<Occupancy> {
        self.lock().occupancy.get(place_id).cloned()
    }

    fn place_document(&self, id: &str, state: &PlaceState) -> Option<PlaceDocument> {
        let place = self.scenario.place(self.kind, id)?;
        Some(PlaceDocument {
            id: place.id.clone(),
            kind: self.kind,
            junction: place.junction.clone(),
            activity: place.activity.clone(),
            occupant: state.occupancy.get(id).and_then(|o| o.occupant.clone()),
            links: PlaceLinks {
                junction: self.topology.junction_uri(&place.junction),
            },
        })
    }

    pub fn build_place_observation(&self, agent_id: &str, t: Tick) -> Result<ObservationPayload, ProtocolError> {
        Self::observation(&self.lock(), self.kind, &self.scenario, agent_id, t)
    }

    fn observation(
        state: &PlaceState,
        kind: PlaceKind,
        scenario: &Scenario,
        agent_id: &str,
        t: Tick,
    ) -> Result<ObservationPayload, ProtocolError> {
        let place = state
            .occupancy
            .iter()
            .find(|(_, o)| o.occupant.as_deref() == Some(agent_id))
            .and_then(|(id, _)| scenario.place(kind, id))
            .ok_or_else(|| ProtocolError::Internal(format!("{agent_id} occupies no place")))?;
        let view = PlaceView {
            activity: place.activity.clone(),
        };
        Ok(ObservationPayload {
            time: t,
            webhook: state.registry.action_url(agent_id),
            view: match kind {
                PlaceKind::Home => ObservationView::Home(view),
                PlaceKind::Work => ObservationView::Work(view),
            },
        })
    }

    fn host_body(
        &self,
        state: &mut PlaceState,
        agent_id: &str,
        resource: &str,
        migrating: bool,
    ) -> Result<(String, String), ProtocolError> {
        let path = local_path(self.topology.place_base(self.kind), resource);
        let place_id = path
            .strip_prefix("/places/")
            .filter(|id| self.scenario.place(self.kind, id).is_some())
            .ok_or_else(|| ProtocolError::NotFound(resource.to_string()))?;
        let occupancy = state.occupancy.entry(place_id.to_string()).or_default();
        if let Some(other) = &occupancy.occupant {
            let msg = format!("place {place_id} already occupied by {other}");
            return Err(if migrating {
                ProtocolError::Unavailable(msg)
            } else {
                ProtocolError::Forbidden(msg)
            });
        }
        occupancy.occupant = Some(agent_id.to_string());
        occupancy.planned_route = None;
        occupancy.depart_tick = None;
        Ok((place_id.to_string(), self.topology.place_uri(self.kind, place_id)))
    }

    pub fn post_body(&self, request: BodyRequest) -> Result<String, ProtocolError> {
        let mut guard = self.lock();
        let state = &mut *guard;
        let body = match request {
            BodyRequest::Register(r) => {
                state.registry.check_registration(&r.agent_id)?;
                let (_, uri) = self.host_body(state, &r.agent_id, &r.resource, false)?;
                AgentBody::registered(r, uri)
            }
            BodyRequest::Migrate(doc) => match state.registry.check_migration(&doc)? {
                MigrationCheck::AlreadyHosted => return Ok(state.registry.body_uri(&doc.agent_id)),
                MigrationCheck::New => {
                    let (_, uri) = self.host_body(state, &doc.agent_id, &doc.target_resource, true)?;
                    AgentBody::migrated(doc, uri)
                }
            },
        };
        Ok(state.registry.insert(body))
    }

    fn vacate(state: &mut PlaceState, agent_id: &str) {
        for occupancy in state.occupancy.values_mut() {
            if occupancy.occupant.as_deref() == Some(agent_id) {
                *occupancy = Occupancy::default();
            }
        }
    }

    /// Follows hypermedia from the destination place to its junction, then
    /// asks the road network for a route.
    fn plan_route(&self, origin_place: &str, destination_uri: &str) -> Result<Vec<String>, SimError> {
        let origin = self
            .scenario
            .place(self.kind, origin_place)
            .ok_or_else(|| SimError::Other(format!("unknown place {origin_place}")))?;
        let response = self.transport.get(destination_uri)?;
        if response.status != 200 {
            return Err(SimError::UnexpectedStatus {
                url: destination_uri.to_string(),
                status: response.status,
            });
        }
        let doc: PlaceDocument = response.json()?;
        let to = last_segment(&doc.links.junction);
        let url = format!("{}/routes?from={}&to={}", self.topology.road, origin.junction, to);
        let response = self.transport.get(&url)?;
        if response.status != 200 {
            return Err(SimError::UnexpectedStatus {
                url,
                status: response.status,
            });
        }
        let route: RouteDocument = response.json()?;
        if route.streets.is_empty() {
            return Err(SimError::Other(format!(
                "{origin_place} and its destination share junction {to}"
            )));
        }
        Ok(route.streets)
    }

    fn depart(&self, d: &Departure, t: Tick) -> Result<(), SimError> {
        let dest_key = match self.kind {
            PlaceKind::Home => attrs::WORK_PLACE,
            PlaceKind::Work => attrs::HOME_PLACE,
        };
        let destination = d
            .attributes
            .get(dest_key)
            .and_then(Value::as_str)
            .ok_or_else(|| SimError::Other(format!("{} has no {dest_key}", d.agent_id)))?
            .to_string();
        let route = match &d.planned_route {
            Some(route) => route.clone(),
            None => {
                let route = self.plan_route(&d.place_id, &destination)?;
                if let Some(o) = self.lock().occupancy.get_mut(&d.place_id) {
                    o.planned_route = Some(route.clone());
                }
                route
            }
        };
        let mut attributes = d.attributes.clone();
        attributes.insert(attrs::ROUTE.into(), json!(route));
        attributes.insert(attrs::DESTINATION_PLACE.into(), json!(destination));
        attributes.insert(attrs::DIRECTION.into(), json!(Direction::from_origin(self.kind)));
        attributes.insert(attrs::DEPART_TICK.into(), json!(t));
        let doc = MigrationDocument {
            agent_id: d.agent_id.clone(),
            webhook: d.webhook.clone(),
            attributes,
            target_resource: self.topology.street_uri(&route[0]),
        };
        match migrate_out(self.transport.as_ref(), &self.topology.road, &doc) {
            Ok(_) => {
                let mut state = self.lock();
                if state.registry.release(&d.agent_id).is_some() && state.registry.contains(&d.agent_id) {
                    // retained by fault injection: the occupant stays listed
                    return Ok(());
                }
                Self::vacate(&mut state, &d.agent_id);
                Ok(())
            }
            Err(MigrationError::Unavailable { .. }) => {
                tracing::debug!(tick = t, agent = %d.agent_id, "street entry blocked, retrying next tick");
                if let Some(o) = self.lock().occupancy.get_mut(&d.place_id) {
                    o.depart_tick = Some(t);
                }
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn run_tick(&self, t: Tick) -> Result<(), SimError> {
        let pushes = {
            let mut guard = self.lock();
            let state = &mut *guard;
            state.registry.begin_tick(t);
            let ids: Vec<String> = state.registry.bodies().map(|b| b.agent_id.clone()).collect();
            ids.iter()
                .map(|id| {
                    let payload = Self::observation(state, self.kind, &self.scenario, id, t)?;
                    Ok((state.registry.get(id)?.webhook.clone(), payload))
                })
                .collect::<Result<Vec<_>, ProtocolError>>()?
        };

        for (webhook, payload) in &pushes {
            if push_observation(self.transport.as_ref(), webhook, payload, t)? == Delivery::Inert {
                tracing::warn!(tick = t, webhook, "agent inert this tick");
            }
        }

        let departures: Vec<Departure> = {
            let mut guard = self.lock();
            let state = &mut *guard;
            let actions = state.registry.take_actions();
            let mut out = Vec::new();
            for (agent_id, action) in actions {
                if action != "depart" {
                    continue;
                }
                let body = state.registry.get(&agent_id)?;
                let place_id = last_segment(&body.resource).to_string();
                out.push(Departure {
                    planned_route: state.occupancy.get(&place_id).and_then(|o| o.planned_route.clone()),
                    webhook: body.webhook.clone(),
                    attributes: body.attributes.clone(),
                    place_id,
                    agent_id,
                });
            }
            out
        };

        for d in &departures {
            self.depart(d, t)?;
        }
        self.clock.ack(t)
    }
}

impl Handler for ActivityService {
    fn handle(&self, request: Request) -> Response {
        match (request.method, request.segments().as_slice()) {
            (Method::Put, ["clock"]) => match request.json::<TimeMessage>() {
                Ok(msg) => match self.run_tick(msg.time) {
                    Ok(()) => Response::ok(json!({})),
                    Err(e) => {
                        tracing::error!(tick = msg.time, service = self.kind.as_str(), "tick failed: {e}");
                        ProtocolError::Internal(e.to_string()).into()
                    }
                },
                Err(e) => e.into(),
            },
            (Method::Get, ["places"]) => {
                let state = self.lock();
                let docs: Vec<PlaceDocument> = self
                    .scenario
                    .places(self.kind)
                    .iter()
                    .filter_map(|p| self.place_document(&p.id, &state))
                    .collect();
                Response::ok(docs)
            }
            (Method::Get, ["places", id]) => match self.place_document(id, &self.lock()) {
                Some(doc) => Response::ok(doc),
                None => Response::not_found(&request.path),
            },
            (Method::Post, ["bodies"]) => match BodyRequest::from_request(&request).and_then(|r| self.post_body(r)) {
                Ok(uri) => Response::created(&uri),
                Err(e) => e.into(),
            },
            (Method::Delete, ["bodies", id]) => {
                let mut state = self.lock();
                match state.registry.delete(id) {
                    Ok(_) => {
                        Self::vacate(&mut state, id);
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
