//! Traffic light controller: sets one green approach per lit junction each
//! tick through the road network's light resources.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::clock::{ClockLink, TimeMessage};
use crate::error::{ProtocolError, SimError};
use crate::road::{controlled_junctions, JunctionDocument};
use crate::scenario::Tick;
use crate::topology::Topology;
use crate::transport::{Handler, Method, Request, Response, SharedTransport};

pub const PARTICIPANT_ID: &str = "lights";

/// Chooses the green approach of a junction at a tick.
pub trait SignalPlan: Send + Sync {
    fn green(&self, cycle: &CycleState, t: Tick) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CycleState {
    pub junction: String,
    pub approaches: Vec<String>,
    pub green_ticks: u64,
}

/// Round robin over sorted approaches, `green_ticks` each.
pub fn phase_for(approaches: &[String], green_ticks: u64, t: Tick) -> &str {
    let index = (t / green_ticks) % approaches.len() as u64;
    &approaches[index as usize]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FixedCycle;

impl SignalPlan for FixedCycle {
    fn green(&self, cycle: &CycleState, t: Tick) -> String {
        phase_for(&cycle.approaches, cycle.green_ticks, t).to_string()
    }
}

pub struct TrafficLightController {
    topology: Topology,
    transport: SharedTransport,
    clock: ClockLink,
    green_ticks: u64,
    plan: Box<dyn SignalPlan>,
    cycles: Mutex<Option<Vec<CycleState>>>,
}

impl TrafficLightController {
    pub fn new(topology: Topology, transport: SharedTransport, green_ticks: u64) -> Self {
        Self::with_plan(topology, transport, green_ticks, Box::new(FixedCycle))
    }

    pub fn with_plan(topology: Topology, transport: SharedTransport, green_ticks: u64, plan: Box<dyn SignalPlan>) -> Self {
        TrafficLightController {
            clock: ClockLink::new(Arc::clone(&transport), &topology.clock, PARTICIPANT_ID),
            topology,
            transport,
            green_ticks,
            plan,
            cycles: Mutex::new(None),
        }
    }

    /// Lit junctions as listed by the road network, fetched once.
    pub fn cycles(&self) -> Result<Vec<CycleState>, SimError> {
        if let Some(cycles) = self.cycles.lock().expect("cycles poisoned").as_ref() {
            return Ok(cycles.clone());
        }
        let url = format!("{}/junctions", self.topology.road);
        let response = self.transport.get(&url)?;
        if response.status != 200 {
            return Err(SimError::UnexpectedStatus {
                url,
                status: response.status,
            });
        }
        let docs: Vec<JunctionDocument> = response.json()?;
        let cycles: Vec<CycleState> = controlled_junctions(&docs)
            .into_iter()
            .map(|(junction, approaches)| CycleState {
                junction,
                approaches,
                green_ticks: self.green_ticks,
            })
            .collect();
        if let Some(empty) = cycles.iter().find(|c| c.approaches.is_empty()) {
            return Err(SimError::Other(format!("lit junction {} has no approach", empty.junction)));
        }
        *self.cycles.lock().expect("cycles poisoned") = Some(cycles.clone());
        Ok(cycles)
    }

    pub fn phases(&self, t: Tick) -> Result<BTreeMap<String, String>, SimError> {
        Ok(self
            .cycles()?
            .iter()
            .map(|c| (c.junction.clone(), self.plan.green(c, t)))
            .collect())
    }

    pub fn run_tick(&self, t: Tick) -> Result<(), SimError> {
        for (junction, green) in self.phases(t)? {
            let url = format!("{}/light", self.topology.junction_uri(&junction));
            let response = self.transport.put(&url, &json!({ "green": green }))?;
            if response.status != 200 {
                return Err(SimError::UnexpectedStatus {
                    url,
                    status: response.status,
                });
            }
        }
        self.clock.ack(t)
    }
}

impl Handler for TrafficLightController {
    fn handle(&self, request: Request) -> Response {
        match (request.method, request.segments().as_slice()) {
            (Method::Put, ["clock"]) => match request.json::<TimeMessage>() {
                Ok(msg) => match self.run_tick(msg.time) {
                    Ok(()) => Response::ok(json!({})),
                    Err(e) => {
                        tracing::error!(tick = msg.time, "light tick failed: {e}");
                        ProtocolError::Internal(e.to_string()).into()
                    }
                },
                Err(e) => e.into(),
            },
            (Method::Get, ["cycles"]) => match self.cycles() {
                Ok(c) => Response::ok(c),
                Err(e) => ProtocolError::Unavailable(e.to_string()).into(),
            },
            _ => Response::not_found(&request.path),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_approaches_alternate_every_green_period() {
        let a = ids(&["s1", "s2"]);
        for t in 0..10 {
            assert_eq!(phase_for(&a, 10, t), "s1");
        }
        assert_eq!(phase_for(&a, 10, 10), "s2");
        assert_eq!(phase_for(&a, 10, 19), "s2");
        assert_eq!(phase_for(&a, 10, 20), "s1");
    }

    #[test]
    fn single_approach_always_green() {
        let a = ids(&["only"]);
        for t in [0, 7, 10, 999] {
            assert_eq!(phase_for(&a, 10, t), "only");
        }
    }
}
