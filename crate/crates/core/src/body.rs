//! Agent-body lifecycle shared by every environment service: registration,
//! observation push, action intake and cross-service migration.
//!
//! A body is the environment-side avatar of an agent, bound to exactly one
//! resource of the hosting service. The agent side exposes a notification
//! resource that receives observations; the body exposes an action resource
//! that receives the agent's replies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{MigrationError, ProtocolError, TransportError};
use crate::scenario::Tick;
use crate::transport::{Method, Request, Response, Transport};

pub type Attributes = Map<String, Value>;

/// Attribute keys carried in body documents between services.
pub mod attrs {
    pub const HOME_PLACE: &str = "homePlace";
    pub const WORK_PLACE: &str = "workPlace";
    pub const ROUTE: &str = "route";
    pub const DESTINATION_PLACE: &str = "destinationPlace";
    pub const DIRECTION: &str = "direction";
    pub const DEPART_TICK: &str = "departTick";
    /// Keys that only make sense while a trip is under way.
    pub const TRIP_KEYS: &[&str] = &[ROUTE, DESTINATION_PLACE, DIRECTION, DEPART_TICK];
}

/// Delivery attempts per observation before a body is treated as inert.
pub const PUSH_ATTEMPTS: usize = 3;
/// POST attempts per migration; receivers treat identical re-POSTs as no-ops.
pub const MIGRATION_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ActionRequest {
    pub action: String,
    pub for_tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegisterRequest {
    pub agent_id: String,
    pub webhook: String,
    pub resource: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub attributes: Attributes,
}

/// Everything a receiving service needs to host a body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MigrationDocument {
    pub agent_id: String,
    pub webhook: String,
    #[serde(default)]
    pub attributes: Attributes,
    pub target_resource: String,
}

/// A POST to `/bodies`: a fresh registration, or an incoming migration when
/// the document names a `targetResource`.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyRequest {
    Register(RegisterRequest),
    Migrate(MigrationDocument),
}

impl BodyRequest {
    pub fn from_request(request: &Request) -> Result<Self, ProtocolError> {
        let migrating = request
            .body
            .as_ref()
            .is_some_and(|b| b.get("targetResource").is_some());
        if migrating {
            request.json().map(BodyRequest::Migrate)
        } else {
            request.json().map(BodyRequest::Register)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentBody {
    pub agent_id: String,
    pub webhook: String,
    pub resource: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pending_action: Option<ActionRequest>,
    pub attributes: Attributes,
    /// The document this body arrived with, kept for idempotent re-delivery.
    #[serde(skip)]
    pub arrival: Option<MigrationDocument>,
}

impl AgentBody {
    pub fn registered(req: RegisterRequest, resource: String) -> Self {
        AgentBody {
            agent_id: req.agent_id,
            webhook: req.webhook,
            resource,
            pending_action: None,
            attributes: req.attributes,
            arrival: None,
        }
    }

    pub fn migrated(doc: MigrationDocument, resource: String) -> Self {
        AgentBody {
            agent_id: doc.agent_id.clone(),
            webhook: doc.webhook.clone(),
            resource,
            pending_action: None,
            attributes: doc.attributes.clone(),
            arrival: Some(doc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CensusEntry {
    pub agent_id: String,
    pub resource: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightSignal {
    Green,
    Red,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrafficView {
    pub vehicle_speed: f64,
    pub at_intersection: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_ahead: Option<f64>,
    pub speed_limit: f64,
    pub light: LightSignal,
    pub street: String,
    pub offset: f64,
    pub route_remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceView {
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ObservationView {
    Traffic(TrafficView),
    Home(PlaceView),
    Work(PlaceView),
}

/// Environment state pushed to an agent's notification resource each tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationPayload {
    pub time: Tick,
    /// Where the agent submits its action for this observation.
    pub webhook: String,
    #[serde(flatten)]
    pub view: ObservationView,
}

impl ObservationPayload {
    pub fn kind(&self) -> &'static str {
        match self.view {
            ObservationView::Traffic(_) => "traffic",
            ObservationView::Home(_) => "home",
            ObservationView::Work(_) => "work",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MigrationCheck {
    New,
    /// Same document already accepted; answer 201 again without changes.
    AlreadyHosted,
}

/// Bodies hosted by one service.
#[derive(Debug)]
pub struct BodyRegistry {
    base_url: String,
    vocabulary: &'static [&'static str],
    default_action: &'static str,
    tick: Option<Tick>,
    bodies: BTreeMap<String, AgentBody>,
    departed: BTreeSet<String>,
    retain_after_migration: bool,
}

impl BodyRegistry {
    pub fn new(base_url: &str, vocabulary: &'static [&'static str], default_action: &'static str) -> Self {
        BodyRegistry {
            base_url: base_url.trim_end_matches('/').to_string(),
            vocabulary,
            default_action,
            tick: None,
            bodies: BTreeMap::new(),
            departed: BTreeSet::new(),
            retain_after_migration: false,
        }
    }

    /// Fault injection: keep migrated bodies listed locally.
    pub fn set_retain_after_migration(&mut self, retain: bool) {
        self.retain_after_migration = retain;
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn body_path(agent_id: &str) -> String {
        format!("/bodies/{agent_id}")
    }

    pub fn body_uri(&self, agent_id: &str) -> String {
        format!("{}{}", self.base_url, Self::body_path(agent_id))
    }

    pub fn action_url(&self, agent_id: &str) -> String {
        format!("{}/action", self.body_uri(agent_id))
    }

    pub fn current_tick(&self) -> Option<Tick> {
        self.tick
    }

    pub fn default_action(&self) -> &'static str {
        self.default_action
    }

    /// Opens tick `t` for action intake and drops leftovers from earlier ticks.
    pub fn begin_tick(&mut self, t: Tick) {
        self.tick = Some(t);
        for body in self.bodies.values_mut() {
            body.pending_action = None;
        }
    }

    pub fn get(&self, agent_id: &str) -> Result<&AgentBody, ProtocolError> {
        if let Some(body) = self.bodies.get(agent_id) {
            Ok(body)
        } else if self.departed.contains(agent_id) {
            Err(ProtocolError::Gone(Self::body_path(agent_id)))
        } else {
            Err(ProtocolError::NotFound(Self::body_path(agent_id)))
        }
    }

    pub fn contains(&self, agent_id: &str) -> bool {
        self.bodies.contains_key(agent_id)
    }

    pub fn bodies(&self) -> impl Iterator<Item = &AgentBody> {
        self.bodies.values()
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    pub fn check_registration(&self, agent_id: &str) -> Result<(), ProtocolError> {
        if self.bodies.contains_key(agent_id) {
            return Err(ProtocolError::Conflict(format!("{agent_id} already hosted")));
        }
        Ok(())
    }

    pub fn check_migration(&self, doc: &MigrationDocument) -> Result<MigrationCheck, ProtocolError> {
        match self.bodies.get(&doc.agent_id) {
            None => Ok(MigrationCheck::New),
            Some(body) if body.arrival.as_ref() == Some(doc) => Ok(MigrationCheck::AlreadyHosted),
            Some(_) => Err(ProtocolError::Conflict(format!(
                "{} already hosted with a different document",
                doc.agent_id
            ))),
        }
    }

    pub fn insert(&mut self, body: AgentBody) -> String {
        let uri = self.body_uri(&body.agent_id);
        self.departed.remove(&body.agent_id);
        self.bodies.insert(body.agent_id.clone(), body);
        uri
    }

    pub fn submit_action(&mut self, agent_id: &str, request: ActionRequest) -> Result<(), ProtocolError> {
        self.get(agent_id)?;
        if !self.vocabulary.contains(&request.action.as_str()) {
            return Err(ProtocolError::BadRequest(format!(
                "action `{}` not in {:?}",
                request.action, self.vocabulary
            )));
        }
        if self.tick != Some(request.for_tick) {
            return Err(ProtocolError::Conflict(format!(
                "stale action for tick {} (current {:?})",
                request.for_tick, self.tick
            )));
        }
        let body = self.bodies.get_mut(agent_id).expect("checked above");
        body.pending_action = Some(request);
        Ok(())
    }

    /// Drains this tick's actions, substituting the default for silent bodies.
    pub fn take_actions(&mut self) -> BTreeMap<String, String> {
        let default = self.default_action;
        self.bodies
            .iter_mut()
            .map(|(id, body)| {
                let action = body
                    .pending_action
                    .take()
                    .map_or_else(|| default.to_string(), |a| a.action);
                (id.clone(), action)
            })
            .collect()
    }

    pub fn set_resource(&mut self, agent_id: &str, resource: String) {
        if let Some(body) = self.bodies.get_mut(agent_id) {
            body.resource = resource;
        }
    }

    pub fn census(&self) -> Vec<CensusEntry> {
        self.bodies
            .values()
            .map(|b| CensusEntry {
                agent_id: b.agent_id.clone(),
                resource: b.resource.clone(),
            })
            .collect()
    }

    /// Removes a body after its migration was accepted elsewhere.
    pub fn release(&mut self, agent_id: &str) -> Option<AgentBody> {
        if self.retain_after_migration {
            return self.bodies.get(agent_id).cloned();
        }
        let body = self.bodies.remove(agent_id);
        if body.is_some() {
            self.departed.insert(agent_id.to_string());
        }
        body
    }

    pub fn delete(&mut self, agent_id: &str) -> Result<AgentBody, ProtocolError> {
        self.get(agent_id)?;
        self.departed.insert(agent_id.to_string());
        Ok(self.bodies.remove(agent_id).expect("checked above"))
    }

    /// Serves the body routes every service shares: census listing, body
    /// lookup, action intake and deletion. `POST /bodies` is service-specific
    /// and is not handled here.
    pub fn handle(&mut self, request: &Request) -> Option<Response> {
        let segments = request.segments();
        let response = match (request.method, segments.as_slice()) {
            (Method::Get, ["bodies"]) => Response::ok(self.census()),
            (Method::Get, ["bodies", id]) => self.get(id).cloned().into(),
            (Method::Put, ["bodies", id, "action"]) => {
                match request.json::<ActionRequest>() {
                    Ok(action) => self.submit_action(id, action).map(|_| json!({})).into(),
                    Err(e) => {
                        // unknown bodies answer 404/410 before payload errors
                        if let Err(missing) = self.get(id) {
                            missing.into()
                        } else {
                            e.into()
                        }
                    }
                }
            }
            (Method::Delete, ["bodies", id]) => self.delete(id).map(|_| json!({})).into(),
            _ => return None,
        };
        Some(response)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Delivered,
    /// The agent did not acknowledge; its default action applies this tick.
    Inert,
}

/// PUTs `payload` to the agent's notification resource, retrying up to
/// [`PUSH_ATTEMPTS`] times.
pub fn push_observation(
    transport: &dyn Transport,
    webhook: &str,
    payload: &ObservationPayload,
    current_tick: Tick,
) -> Result<Delivery, ProtocolError> {
    if payload.time != current_tick {
        return Err(ProtocolError::Internal(format!(
            "observation for tick {} built during tick {current_tick}",
            payload.time
        )));
    }
    let body = serde_json::to_value(payload).map_err(|e| ProtocolError::Internal(e.to_string()))?;
    for attempt in 1..=PUSH_ATTEMPTS {
        match transport.put(webhook, &body) {
            Ok(r) if r.status == 200 => return Ok(Delivery::Delivered),
            Ok(r) => tracing::warn!(webhook, attempt, status = r.status, "agent refused observation"),
            Err(e) => tracing::warn!(webhook, attempt, "agent unreachable: {e}"),
        }
    }
    Ok(Delivery::Inert)
}

/// `scheme://authority` of an absolute resource URI.
pub fn service_base(uri: &str) -> Result<String, TransportError> {
    let url = url::Url::parse(uri).map_err(|_| TransportError::InvalidUrl(uri.to_string()))?;
    Ok(url.origin().ascii_serialization())
}

/// POSTs `doc` to the `/bodies` collection of `target_base`. Returns the new
/// body URI on 201.
pub fn migrate_out(
    transport: &dyn Transport,
    target_base: &str,
    doc: &MigrationDocument,
) -> Result<String, MigrationError> {
    let url = format!("{}/bodies", target_base.trim_end_matches('/'));
    let body = serde_json::to_value(doc).expect("migration document serializes");
    let mut last_error = None;
    for _ in 0..MIGRATION_ATTEMPTS {
        match transport.post(&url, &body) {
            Ok(r) => {
                return match r.status {
                    201 => Ok(r
                        .body
                        .as_ref()
                        .and_then(|b| b.get("uri"))
                        .and_then(Value::as_str)
                        .map(str::to_string)
                        .unwrap_or_else(|| format!("{}{}", target_base, BodyRegistry::body_path(&doc.agent_id)))),
                    503 => Err(MigrationError::Unavailable {
                        agent_id: doc.agent_id.clone(),
                    }),
                    409 => Err(MigrationError::Conflict {
                        agent_id: doc.agent_id.clone(),
                    }),
                    status => Err(MigrationError::Rejected {
                        agent_id: doc.agent_id.clone(),
                        status,
                        message: r.message(),
                    }),
                };
            }
            Err(e) => last_error = Some(e),
        }
    }
    Err(last_error.expect("at least one attempt").into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{Handler, InProcessNetwork};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    const VOCAB: &[&str] = &["move", "accelerate", "decelerate", "maintain"];

    fn registry() -> BodyRegistry {
        BodyRegistry::new("http://road.sim", VOCAB, "maintain")
    }

    fn register(reg: &mut BodyRegistry, id: &str) {
        reg.check_registration(id).unwrap();
        let req = RegisterRequest {
            agent_id: id.into(),
            webhook: format!("http://drivers.sim/{id}/notifications"),
            resource: "http://road.sim/streets/s1".into(),
            attributes: Map::new(),
        };
        let resource = req.resource.clone();
        reg.insert(AgentBody::registered(req, resource));
    }

    #[test]
    fn action_intake_rules() {
        let mut reg = registry();
        register(&mut reg, "d1");
        reg.begin_tick(7);
        let act = |a: &str, t| ActionRequest {
            action: a.into(),
            for_tick: t,
        };
        assert_eq!(reg.submit_action("d1", act("move", 7)), Ok(()));
        assert_eq!(reg.submit_action("d1", act("fly", 7)).unwrap_err().status(), 400);
        assert_eq!(reg.submit_action("d1", act("move", 6)).unwrap_err().status(), 409);
        assert_eq!(reg.submit_action("nobody", act("move", 7)).unwrap_err().status(), 404);
        // later submission in the same tick overwrites
        reg.submit_action("d1", act("accelerate", 7)).unwrap();
        assert_eq!(reg.take_actions()["d1"], "accelerate");
        // drained: falls back to default
        assert_eq!(reg.take_actions()["d1"], "maintain");
    }

    #[test]
    fn begin_tick_clears_pending() {
        let mut reg = registry();
        register(&mut reg, "d1");
        reg.begin_tick(1);
        reg.submit_action(
            "d1",
            ActionRequest {
                action: "move".into(),
                for_tick: 1,
            },
        )
        .unwrap();
        reg.begin_tick(2);
        assert!(reg.get("d1").unwrap().pending_action.is_none());
    }

    #[test]
    fn release_then_gone() {
        let mut reg = registry();
        register(&mut reg, "d1");
        assert!(reg.release("d1").is_some());
        assert_eq!(reg.get("d1").unwrap_err().status(), 410);
        assert!(reg.census().is_empty());
        // a body may come back later
        register(&mut reg, "d1");
        assert!(reg.get("d1").is_ok());
    }

    #[test]
    fn retain_fault_keeps_body_listed() {
        let mut reg = registry();
        reg.set_retain_after_migration(true);
        register(&mut reg, "d1");
        reg.release("d1");
        assert_eq!(reg.census().len(), 1);
    }

    #[test]
    fn migration_idempotence() {
        let mut reg = registry();
        let doc = MigrationDocument {
            agent_id: "d1".into(),
            webhook: "http://drivers.sim/d1/notifications".into(),
            attributes: Map::new(),
            target_resource: "http://road.sim/streets/s1".into(),
        };
        assert_eq!(reg.check_migration(&doc), Ok(MigrationCheck::New));
        reg.insert(AgentBody::migrated(doc.clone(), doc.target_resource.clone()));
        assert_eq!(reg.check_migration(&doc), Ok(MigrationCheck::AlreadyHosted));
        let other = MigrationDocument {
            webhook: "http://elsewhere.sim/d1/notifications".into(),
            ..doc
        };
        assert_eq!(reg.check_migration(&other).unwrap_err().status(), 409);
    }

    #[test]
    fn body_request_distinguishes_migration() {
        let reg = Request::new(Method::Post, "/bodies").with_body(json!({
            "agentId": "d1", "webhook": "w", "resource": "/places/h1"
        }));
        assert!(matches!(BodyRequest::from_request(&reg), Ok(BodyRequest::Register(_))));
        let mig = Request::new(Method::Post, "/bodies").with_body(json!({
            "agentId": "d1", "webhook": "w", "attributes": {}, "targetResource": "/places/h1"
        }));
        assert!(matches!(BodyRequest::from_request(&mig), Ok(BodyRequest::Migrate(_))));
    }

    #[test]
    fn action_body_is_exact() {
        let ok: ActionRequest = serde_json::from_str(r#"{"action":"move","forTick":7}"#).unwrap();
        assert_eq!(ok.for_tick, 7);
        assert!(serde_json::from_str::<ActionRequest>(r#"{"action":"move","forTick":7,"x":1}"#).is_err());
        assert!(serde_json::from_str::<ActionRequest>(r#"{"action":"move"}"#).is_err());
    }

    #[test]
    fn traffic_payload_shape() {
        let payload = ObservationPayload {
            time: 3,
            webhook: "http://road.sim/bodies/d1/action".into(),
            view: ObservationView::Traffic(TrafficView {
                vehicle_speed: 2.0,
                at_intersection: false,
                gap_ahead: None,
                speed_limit: 14.0,
                light: LightSignal::None,
                street: "http://road.sim/streets/s1".into(),
                offset: 2.0,
                route_remaining: 1,
            }),
        };
        let v = serde_json::to_value(&payload).unwrap();
        assert_eq!(v["type"], "traffic");
        assert_eq!(v["vehicleSpeed"], 2.0);
        assert_eq!(v["atIntersection"], false);
        assert_eq!(v["light"], "none");
        assert!(v.get("gapAhead").is_none());
        assert!(v.get("activity").is_none());
        let back: ObservationPayload = serde_json::from_value(v).unwrap();
        assert_eq!(back, payload);

        let home = ObservationPayload {
            time: 3,
            webhook: "w".into(),
            view: ObservationView::Home(PlaceView {
                activity: "Watch TV".into(),
            }),
        };
        let v = serde_json::to_value(&home).unwrap();
        assert_eq!(v, json!({"type": "home", "time": 3, "webhook": "w", "activity": "Watch TV"}));
    }

    struct Flaky {
        calls: AtomicUsize,
        status: u16,
    }

    impl Handler for Flaky {
        fn handle(&self, _: Request) -> Response {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Response::empty(self.status)
        }
    }

    fn home_payload(time: Tick) -> ObservationPayload {
        ObservationPayload {
            time,
            webhook: "http://home.sim/bodies/d1/action".into(),
            view: ObservationView::Home(PlaceView {
                activity: "Watch TV".into(),
            }),
        }
    }

    #[test]
    fn push_delivers_to_live_agent() {
        let net = InProcessNetwork::new();
        let agent = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            status: 200,
        });
        net.mount("http://drivers.sim", agent.clone()).unwrap();
        let got = push_observation(net.as_ref(), "http://drivers.sim/d1/notifications", &home_payload(4), 4);
        assert_eq!(got, Ok(Delivery::Delivered));
        assert_eq!(agent.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn push_gives_up_after_three_attempts() {
        let net = InProcessNetwork::new();
        let got = push_observation(net.as_ref(), "http://gone.sim/d1/notifications", &home_payload(4), 4);
        assert_eq!(got, Ok(Delivery::Inert));

        let agent = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            status: 500,
        });
        net.mount("http://drivers.sim", agent.clone()).unwrap();
        let got = push_observation(net.as_ref(), "http://drivers.sim/d1/notifications", &home_payload(4), 4);
        assert_eq!(got, Ok(Delivery::Inert));
        assert_eq!(agent.calls.load(Ordering::SeqCst), PUSH_ATTEMPTS);
    }

    #[test]
    fn push_refuses_wrong_tick() {
        let net = InProcessNetwork::new();
        let agent = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            status: 200,
        });
        net.mount("http://drivers.sim", agent.clone()).unwrap();
        let got = push_observation(net.as_ref(), "http://drivers.sim/d1/notifications", &home_payload(3), 4);
        assert_eq!(got.unwrap_err().status(), 500);
        assert_eq!(agent.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn service_base_of_uri() {
        assert_eq!(service_base("http://work.sim/places/w1").unwrap(), "http://work.sim");
        assert_eq!(service_base("http://127.0.0.1:9000/places/w1").unwrap(), "http://127.0.0.1:9000");
    }
}
