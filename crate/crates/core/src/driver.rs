//! Driver agents. Each agent owns a notification resource at
//! `/{agentId}/notifications`; on every observation it decides an action and
//! PUTs it to the webhook named in the payload.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::body::{attrs, ActionRequest, ObservationPayload, ObservationView, RegisterRequest};
use crate::error::{ProtocolError, SimError};
use crate::scenario::{PersonSpec, PlaceKind, SimParams, Tick};
use crate::topology::Topology;
use crate::transport::{Handler, Method, Request, Response, SharedTransport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    pub tick_seconds: f64,
    pub gap_min: f64,
}

impl PolicyParams {
    pub fn from_params(params: &SimParams) -> Self {
        PolicyParams {
            tick_seconds: params.tick_seconds,
            gap_min: params.gap_min,
        }
    }
}

/// Departure ticks still ahead of the agent. A cleared entry never fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Schedule {
    pub depart_home_tick: Option<Tick>,
    pub depart_work_tick: Option<Tick>,
}

impl Schedule {
    pub fn of(person: &PersonSpec) -> Self {
        Schedule {
            depart_home_tick: Some(person.depart_home_tick),
            depart_work_tick: Some(person.depart_work_tick),
        }
    }
}

/// The per-tick policy. Pure: same payload and schedule, same action.
pub fn decide(payload: &ObservationPayload, schedule: &Schedule, params: &PolicyParams) -> &'static str {
    let due = |tick: Option<Tick>| tick.is_some_and(|d| payload.time >= d);
    match &payload.view {
        ObservationView::Traffic(v) => {
            let reach = v.vehicle_speed * params.tick_seconds;
            if v.at_intersection {
                "move"
            } else if v.vehicle_speed < v.speed_limit && v.gap_ahead.is_none_or(|g| g > reach + params.gap_min) {
                "accelerate"
            } else if v.gap_ahead.is_some_and(|g| g < reach) {
                "decelerate"
            } else {
                "maintain"
            }
        }
        ObservationView::Home(_) if due(schedule.depart_home_tick) => "depart",
        ObservationView::Work(_) if due(schedule.depart_work_tick) => "depart",
        ObservationView::Home(_) | ObservationView::Work(_) => "continue",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DriverAgent {
    pub agent_id: String,
    pub schedule: Schedule,
    pub notification_url: String,
    pub last_observation: Option<ObservationPayload>,
    pub last_action: Option<String>,
    pub failure: Option<String>,
}

impl DriverAgent {
    pub fn new(person: &PersonSpec, topology: &Topology) -> Self {
        DriverAgent {
            agent_id: person.agent_id.clone(),
            schedule: Schedule::of(person),
            notification_url: topology.notification_url(&person.agent_id),
            last_observation: None,
            last_action: None,
            failure: None,
        }
    }
}

pub struct DriverService {
    topology: Topology,
    transport: SharedTransport,
    params: PolicyParams,
    population: Vec<PersonSpec>,
    agents: RwLock<BTreeMap<String, Arc<Mutex<DriverAgent>>>>,
}

impl DriverService {
    pub fn new(population: Vec<PersonSpec>, params: PolicyParams, topology: Topology, transport: SharedTransport) -> Self {
        DriverService {
            topology,
            transport,
            params,
            population,
            agents: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn agent(&self, agent_id: &str) -> Option<DriverAgent> {
        let agent = self.agents.read().expect("agents poisoned").get(agent_id).cloned()?;
        let snapshot = agent.lock().expect("agent poisoned").clone();
        Some(snapshot)
    }

    pub fn agent_ids(&self) -> Vec<String> {
        self.agents.read().expect("agents poisoned").keys().cloned().collect()
    }

    /// Creates each agent's notification resource and registers its body at
    /// its home.
    pub fn bootstrap(&self) -> Result<usize, SimError> {
        for person in &self.population {
            self.agents
                .write()
                .expect("agents poisoned")
                .insert(person.agent_id.clone(), Arc::new(Mutex::new(DriverAgent::new(person, &self.topology))));
            let mut attributes = serde_json::Map::new();
            attributes.insert(
                attrs::HOME_PLACE.into(),
                json!(self.topology.place_uri(PlaceKind::Home, &person.home)),
            );
            attributes.insert(
                attrs::WORK_PLACE.into(),
                json!(self.topology.place_uri(PlaceKind::Work, &person.work)),
            );
            let request = RegisterRequest {
                agent_id: person.agent_id.clone(),
                webhook: self.topology.notification_url(&person.agent_id),
                resource: self.topology.place_uri(PlaceKind::Home, &person.home),
                attributes,
            };
            let url = format!("{}/bodies", self.topology.home);
            let response = self
                .transport
                .post(&url, &serde_json::to_value(&request).expect("registration serializes"))?;
            if response.status != 201 {
                return Err(SimError::Other(format!(
                    "home refused {}: {} {}",
                    person.agent_id,
                    response.status,
                    response.message()
                )));
            }
        }
        Ok(self.population.len())
    }

    /// Handles one observation: decide, then submit the action. Per-agent
    /// processing is serialized by the agent's own lock.
    pub fn on_notification(&self, agent_id: &str, payload: ObservationPayload) -> Result<&'static str, ProtocolError> {
        let agent = self
            .agents
            .read()
            .expect("agents poisoned")
            .get(agent_id)
            .cloned()
            .ok_or_else(|| ProtocolError::NotFound(format!("/{agent_id}/notifications")))?;
        let mut agent = agent.lock().expect("agent poisoned");
        if let Some(failure) = &agent.failure {
            return Err(ProtocolError::Internal(format!("{agent_id} failed earlier: {failure}")));
        }
        if matches!(payload.view, ObservationView::Work(_)) {
            // at work: the morning commute is done for good
            agent.schedule.depart_home_tick = None;
        }
        let action = decide(&payload, &agent.schedule, &self.params);
        let submission = ActionRequest {
            action: action.to_string(),
            for_tick: payload.time,
        };
        let result = self
            .transport
            .put(&payload.webhook, &serde_json::to_value(&submission).expect("action serializes"));
        agent.last_observation = Some(payload);
        agent.last_action = Some(action.to_string());
        match result {
            Ok(r) if r.status == 200 => Ok(action),
            Ok(r) => {
                let reason = format!("action {action} rejected with {}: {}", r.status, r.message());
                agent.failure = Some(reason.clone());
                Err(ProtocolError::Internal(reason))
            }
            Err(e) => {
                let reason = format!("action {action} undeliverable: {e}");
                agent.failure = Some(reason.clone());
                Err(ProtocolError::Internal(reason))
            }
        }
    }
}

impl Handler for DriverService {
    fn handle(&self, request: Request) -> Response {
        match (request.method, request.segments().as_slice()) {
            (Method::Get, ["agents"]) => Response::ok(self.agent_ids()),
            (Method::Post, ["bootstrap"]) => match self.bootstrap() {
                Ok(n) => Response::ok(json!({ "registered": n })),
                Err(e) => ProtocolError::Internal(e.to_string()).into(),
            },
            (Method::Put, [agent_id, "notifications"]) => {
                if self.agent(agent_id).is_none() {
                    return Response::not_found(&request.path);
                }
                request
                    .json::<ObservationPayload>()
                    .and_then(|p| self.on_notification(agent_id, p))
                    .map(|action| json!({ "action": action }))
                    .into()
            }
            (Method::Get, [agent_id, "notifications"]) => match self.agent(agent_id) {
                Some(agent) => Response::ok(agent),
                None => Response::not_found(&request.path),
            },
            _ => Response::not_found(&request.path),
        }
    }
}
