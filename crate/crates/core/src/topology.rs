use serde::{Deserialize, Serialize};

use crate::scenario::PlaceKind;

/// Base URLs of every service in one constellation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub clock: String,
    pub road: String,
    pub home: String,
    pub work: String,
    pub lights: String,
    pub drivers: String,
}

impl Topology {
    /// Addresses used when every service shares one process.
    pub fn in_process() -> Self {
        Topology {
            clock: "http://clock.sim".into(),
            road: "http://road.sim".into(),
            home: "http://home.sim".into(),
            work: "http://work.sim".into(),
            lights: "http://lights.sim".into(),
            drivers: "http://drivers.sim".into(),
        }
    }

    pub fn place_base(&self, kind: PlaceKind) -> &str {
        match kind {
            PlaceKind::Home => &self.home,
            PlaceKind::Work => &self.work,
        }
    }

    pub fn place_uri(&self, kind: PlaceKind, id: &str) -> String {
        format!("{}/places/{id}", self.place_base(kind))
    }

    pub fn junction_uri(&self, id: &str) -> String {
        format!("{}/junctions/{id}", self.road)
    }

    pub fn street_uri(&self, id: &str) -> String {
        format!("{}/streets/{id}", self.road)
    }

    pub fn notification_url(&self, agent_id: &str) -> String {
        format!("{}/{agent_id}/notifications", self.drivers)
    }

    /// Environment services whose `/bodies` listings make up the census.
    pub fn environment_services(&self) -> [&str; 3] {
        [&self.home, &self.work, &self.road]
    }

    /// Clock participants in broadcast order: lights are set before any
    /// movement, places launch departures before the road network steps.
    pub fn participants(&self) -> [(&'static str, String); 4] {
        [
            ("lights", format!("{}/clock", self.lights)),
            ("home", format!("{}/clock", self.home)),
            ("work", format!("{}/clock", self.work)),
            ("road", format!("{}/clock", self.road)),
        ]
    }
}
