//! Discrete time: a barrier-synchronised tick broadcaster.
//!
//! Participants register a callback before the run starts. Each
//! [`ClockService::advance`] broadcasts the next tick to every participant in
//! registration order, and the following advance only proceeds once every
//! participant has acked the tick it was sent.

use std::collections::BTreeSet;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ProtocolError, SimError};
use crate::scenario::Tick;
use crate::transport::{Handler, Method, Request, Response, SharedTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeMessage {
    pub time: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub callback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum ClockEvent {
    Broadcast { tick: Tick, participant: String },
    Ack { tick: Tick, participant: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdvanceOutcome {
    Advanced(Tick),
    /// Barrier incomplete; the clock stays at `time`.
    Waiting { time: Tick, missing: Vec<String> },
}

#[derive(Debug, Default)]
struct TickBarrier {
    current: Tick,
    started: bool,
    participants: Vec<Participant>,
    acked: BTreeSet<String>,
}

impl TickBarrier {
    fn missing(&self) -> Vec<String> {
        self.participants
            .iter()
            .filter(|p| !self.acked.contains(&p.id))
            .map(|p| p.id.clone())
            .collect()
    }
}

pub struct ClockService {
    transport: SharedTransport,
    barrier: Mutex<TickBarrier>,
    events: Mutex<Vec<ClockEvent>>,
}

impl ClockService {
    pub fn new(transport: SharedTransport) -> Self {
        ClockService {
            transport,
            barrier: Mutex::new(TickBarrier::default()),
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn current_tick(&self) -> Tick {
        self.barrier.lock().expect("clock poisoned").current
    }

    pub fn is_started(&self) -> bool {
        self.barrier.lock().expect("clock poisoned").started
    }

    pub fn participants(&self) -> Vec<Participant> {
        self.barrier.lock().expect("clock poisoned").participants.clone()
    }

    pub fn events(&self) -> Vec<ClockEvent> {
        self.events.lock().expect("clock poisoned").clone()
    }

    pub fn register_participant(&self, participant: Participant) -> Result<String, ProtocolError> {
        let mut barrier = self.barrier.lock().expect("clock poisoned");
        if barrier.started {
            return Err(ProtocolError::Forbidden("simulation already started".into()));
        }
        if barrier.participants.iter().any(|p| p.id == participant.id) {
            return Err(ProtocolError::Conflict(format!("participant {} exists", participant.id)));
        }
        let uri = format!("/participants/{}", participant.id);
        barrier.participants.push(participant);
        Ok(uri)
    }

    pub fn ack(&self, participant: &str, tick: Tick) -> Result<(), ProtocolError> {
        let mut barrier = self.barrier.lock().expect("clock poisoned");
        if !barrier.participants.iter().any(|p| p.id == participant) {
            return Err(ProtocolError::NotFound(format!("/participants/{participant}")));
        }
        if !barrier.started || tick != barrier.current {
            return Err(ProtocolError::Conflict(format!(
                "ack for tick {tick}, current tick is {}",
                barrier.current
            )));
        }
        barrier.acked.insert(participant.to_string());
        self.events.lock().expect("clock poisoned").push(ClockEvent::Ack {
            tick,
            participant: participant.to_string(),
        });
        Ok(())
    }

    /// Starts the run at tick 0 on first call; afterwards moves to the next
    /// tick once the barrier is complete. Broadcasts synchronously, so
    /// participants that ack inside their callback have completed the barrier
    /// by the time this returns.
    pub fn advance(&self) -> Result<AdvanceOutcome, SimError> {
        let (tick, targets) = {
            let mut barrier = self.barrier.lock().expect("clock poisoned");
            if barrier.started {
                let missing = barrier.missing();
                if !missing.is_empty() {
                    return Ok(AdvanceOutcome::Waiting {
                        time: barrier.current,
                        missing,
                    });
                }
                barrier.current += 1;
            } else {
                barrier.started = true;
            }
            barrier.acked.clear();
            (barrier.current, barrier.participants.clone())
        };

        let message = json!({ "time": tick });
        let mut failures = Vec::new();
        for p in targets {
            self.events.lock().expect("clock poisoned").push(ClockEvent::Broadcast {
                tick,
                participant: p.id.clone(),
            });
            match self.transport.put(&p.callback, &message) {
                Ok(r) if r.is_success() => {}
                Ok(r) => failures.push(format!("{} answered {}: {}", p.id, r.status, r.message())),
                Err(e) => failures.push(format!("{}: {e}", p.id)),
            }
        }
        if failures.is_empty() {
            Ok(AdvanceOutcome::Advanced(tick))
        } else {
            Err(SimError::Other(format!("tick {tick} failed: {}", failures.join("; "))))
        }
    }
}

impl Handler for ClockService {
    fn handle(&self, request: Request) -> Response {
        match (request.method, request.segments().as_slice()) {
            (Method::Get, ["time"]) => Response::ok(TimeMessage {
                time: self.current_tick(),
            }),
            (Method::Get, ["events"]) => Response::ok(self.events()),
            (Method::Get, ["participants"]) => Response::ok(self.participants()),
            (Method::Post, ["participants"]) => match request.json::<Participant>() {
                Ok(p) => match self.register_participant(p) {
                    Ok(uri) => Response::created(&uri),
                    Err(e) => e.into(),
                },
                Err(e) => e.into(),
            },
            (Method::Post, ["participants", id, "ack"]) => request
                .json::<TimeMessage>()
                .and_then(|m| self.ack(id, m.time))
                .map(|_| json!({}))
                .into(),
            (Method::Post, ["advance"]) => match self.advance() {
                Ok(AdvanceOutcome::Advanced(time)) => Response::ok(TimeMessage { time }),
                Ok(AdvanceOutcome::Waiting { time, missing }) => {
                    Response::new(409, Some(json!({ "time": time, "waiting": missing })))
                }
                Err(e) => ProtocolError::Internal(e.to_string()).into(),
            },
            _ => Response::not_found(&request.path),
        }
    }
}

/// A participant's handle on the clock.
#[derive(Clone)]
pub struct ClockLink {
    transport: SharedTransport,
    clock_base: String,
    participant_id: String,
}

impl ClockLink {
    pub fn new(transport: SharedTransport, clock_base: &str, participant_id: &str) -> Self {
        ClockLink {
            transport,
            clock_base: clock_base.trim_end_matches('/').to_string(),
            participant_id: participant_id.to_string(),
        }
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn register(&self, callback: &str) -> Result<(), SimError> {
        let url = format!("{}/participants", self.clock_base);
        let body = serde_json::to_value(Participant {
            id: self.participant_id.clone(),
            callback: callback.to_string(),
        })
        .expect("participant serializes");
        let response = self.transport.post(&url, &body)?;
        if response.status != 201 {
            return Err(SimError::UnexpectedStatus {
                url,
                status: response.status,
            });
        }
        Ok(())
    }

    pub fn ack(&self, tick: Tick) -> Result<(), SimError> {
        let url = format!("{}/participants/{}/ack", self.clock_base, self.participant_id);
        let response = self.transport.post(&url, &json!({ "time": tick }))?;
        if response.status != 200 {
            return Err(SimError::UnexpectedStatus {
                url,
                status: response.status,
            });
        }
        Ok(())
    }
}

/// Returns the index of the first event that breaks lockstep: a broadcast of
/// tick `t + 1` emitted before every participant acked tick `t`.
pub fn first_lockstep_violation(events: &[ClockEvent], participants: &[String]) -> Option<usize> {
    let mut acked: BTreeSet<(Tick, &str)> = BTreeSet::new();
    for (i, event) in events.iter().enumerate() {
        match event {
            ClockEvent::Ack { tick, participant } => {
                acked.insert((*tick, participant.as_str()));
            }
            ClockEvent::Broadcast { tick, .. } if *tick > 0 => {
                let prev = tick - 1;
                if participants.iter().any(|p| !acked.contains(&(prev, p.as_str()))) {
                    return Some(i);
                }
            }
            ClockEvent::Broadcast { .. } => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::InProcessNetwork;
    use std::sync::Arc;

    /// Records broadcasts and never acks on its own.
    #[derive(Default)]
    struct Silent {
        seen: Mutex<Vec<Tick>>,
    }

    impl Handler for Silent {
        fn handle(&self, request: Request) -> Response {
            let msg: TimeMessage = request.json().unwrap();
            self.seen.lock().unwrap().push(msg.time);
            Response::ok(json!({}))
        }
    }

    fn clock_with(n: usize) -> (Arc<ClockService>, Vec<Arc<Silent>>) {
        let net = InProcessNetwork::new();
        let clock = Arc::new(ClockService::new(net.clone()));
        let mut parts = Vec::new();
        for i in 0..n {
            let p = Arc::new(Silent::default());
            let base = format!("http://p{i}.sim");
            net.mount(&base, p.clone()).unwrap();
            clock
                .register_participant(Participant {
                    id: format!("p{i}"),
                    callback: format!("{base}/clock"),
                })
                .unwrap();
            parts.push(p);
        }
        (clock, parts)
    }

    fn run_to(clock: &ClockService, ids: &[&str], tick: Tick) {
        loop {
            let t = match clock.advance().unwrap() {
                AdvanceOutcome::Advanced(t) => t,
                other => panic!("stuck: {other:?}"),
            };
            for id in ids {
                clock.ack(id, t).unwrap();
            }
            if t == tick {
                break;
            }
        }
    }

    #[test]
    fn registration_rules() {
        let (clock, _) = clock_with(1);
        let dup = clock.register_participant(Participant {
            id: "p0".into(),
            callback: "http://x.sim/clock".into(),
        });
        assert_eq!(dup.unwrap_err().status(), 409);
        clock.advance().unwrap();
        let late = clock.register_participant(Participant {
            id: "late".into(),
            callback: "http://x.sim/clock".into(),
        });
        assert_eq!(late.unwrap_err().status(), 403);
    }

    #[test]
    fn full_barrier_advances_and_broadcasts() {
        let (clock, parts) = clock_with(3);
        run_to(&clock, &["p0", "p1", "p2"], 5);
        assert_eq!(clock.current_tick(), 5);
        assert_eq!(clock.advance().unwrap(), AdvanceOutcome::Advanced(6));
        for p in &parts {
            assert_eq!(*p.seen.lock().unwrap().last().unwrap(), 6);
            assert_eq!(p.seen.lock().unwrap().len(), 7);
        }
    }

    #[test]
    fn partial_barrier_holds() {
        let (clock, _) = clock_with(3);
        run_to(&clock, &["p0", "p1", "p2"], 5);
        // tick 5 was fully acked by run_to; broadcast 6 and ack only two
        clock.advance().unwrap();
        clock.ack("p0", 6).unwrap();
        clock.ack("p1", 6).unwrap();
        assert_eq!(
            clock.advance().unwrap(),
            AdvanceOutcome::Waiting {
                time: 6,
                missing: vec!["p2".into()]
            }
        );
        assert_eq!(clock.current_tick(), 6);
    }

    #[test]
    fn empty_clock_runs_freely() {
        let (clock, _) = clock_with(0);
        for expected in 0..10 {
            assert_eq!(clock.advance().unwrap(), AdvanceOutcome::Advanced(expected));
        }
    }

    #[test]
    fn ack_errors() {
        let (clock, _) = clock_with(1);
        assert_eq!(clock.ack("p0", 0).unwrap_err().status(), 409, "no tick broadcast yet");
        clock.advance().unwrap();
        assert_eq!(clock.ack("p0", 0), Ok(()));
        clock.advance().unwrap();
        assert_eq!(clock.ack("p0", 0).unwrap_err().status(), 409);
        assert_eq!(clock.ack("ghost", 1).unwrap_err().status(), 404);
    }

    #[test]
    fn violation_detector() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let b = |tick, p: &str| ClockEvent::Broadcast {
            tick,
            participant: p.into(),
        };
        let a = |tick, p: &str| ClockEvent::Ack {
            tick,
            participant: p.into(),
        };
        let good = vec![b(0, "a"), b(0, "b"), a(0, "b"), a(0, "a"), b(1, "a")];
        assert_eq!(first_lockstep_violation(&good, &ids), None);
        let bad = vec![b(0, "a"), b(0, "b"), a(0, "a"), b(1, "a"), a(0, "b")];
        assert_eq!(first_lockstep_violation(&bad, &ids), Some(3));
    }

    #[test]
    fn http_style_routes() {
        let (clock, _) = clock_with(1);
        let resp = clock.handle(Request::new(Method::Post, "/advance"));
        assert_eq!(resp.status, 200);
        let resp = clock.handle(Request::new(Method::Post, "/advance"));
        assert_eq!(resp.status, 409);
        assert_eq!(resp.body.unwrap()["waiting"][0], "p0");
        let resp = clock.handle(Request::new(Method::Post, "/participants/p0/ack").with_body(json!({"time": 0})));
        assert_eq!(resp.status, 200);
        let resp = clock.handle(Request::new(Method::Get, "/time"));
        assert_eq!(resp.body.unwrap()["time"], 0);
    }
}
