use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scenario::{PlaceKind, Tick};

pub const TRIPS_CSV_HEADER: &str = "agentId,direction,departTick,arriveTick,travelTicks,freeFlowTicks";

/// Ticks a trip may undercut its free-flow time by, from tick rounding.
pub const FREE_FLOW_ROUNDING_TICKS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "home->work")]
    HomeToWork,
    #[serde(rename = "work->home")]
    WorkToHome,
}

impl Direction {
    pub fn from_origin(origin: PlaceKind) -> Self {
        match origin {
            PlaceKind::Home => Direction::HomeToWork,
            PlaceKind::Work => Direction::WorkToHome,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::HomeToWork => "home->work",
            Direction::WorkToHome => "work->home",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TripRecord {
    pub agent_id: String,
    pub direction: Direction,
    pub depart_tick: Tick,
    pub arrive_tick: Tick,
    pub route_streets: Vec<String>,
    pub free_flow_ticks: u64,
}

impl TripRecord {
    pub fn travel_ticks(&self) -> u64 {
        self.arrive_tick - self.depart_tick
    }

    /// Trips never beat free flow beyond the rounding allowance.
    pub fn respects_free_flow(&self) -> bool {
        self.arrive_tick > self.depart_tick
            && self.travel_ticks() + FREE_FLOW_ROUNDING_TICKS >= self.free_flow_ticks
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.agent_id,
            self.direction,
            self.depart_tick,
            self.arrive_tick,
            self.travel_ticks(),
            self.free_flow_ticks
        )
    }
}

pub fn trips_csv(trips: &[TripRecord]) -> String {
    let mut out = String::from(TRIPS_CSV_HEADER);
    out.push('\n');
    for trip in trips {
        out.push_str(&trip.csv_row());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let trip = TripRecord {
            agent_id: "d1".into(),
            direction: Direction::HomeToWork,
            depart_tick: 3,
            arrive_tick: 21,
            route_streets: vec!["s1".into()],
            free_flow_ticks: 15,
        };
        assert_eq!(
            trips_csv(std::slice::from_ref(&trip)),
            "agentId,direction,departTick,arriveTick,travelTicks,freeFlowTicks\nd1,home->work,3,21,18,15\n"
        );
        assert!(trip.respects_free_flow());
        let fast = TripRecord {
            arrive_tick: 10,
            ..trip
        };
        assert!(!fast.respects_free_flow());
    }
}
