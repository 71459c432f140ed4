//! Trajectory log: `tick,agentId,street,offset,speed,event`, one line per
//! vehicle per tick. Offsets and speeds are written with three decimals.

use std::fmt;
use std::str::FromStr;

use crate::scenario::Tick;
use crate::units::Milli;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryEvent {
    Moved,
    Crossed,
    Blocked,
    Arrived,
}

impl TrajectoryEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryEvent::Moved => "moved",
            TrajectoryEvent::Crossed => "crossed",
            TrajectoryEvent::Blocked => "blocked",
            TrajectoryEvent::Arrived => "arrived",
        }
    }
}

impl FromStr for TrajectoryEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moved" => Ok(TrajectoryEvent::Moved),
            "crossed" => Ok(TrajectoryEvent::Crossed),
            "blocked" => Ok(TrajectoryEvent::Blocked),
            "arrived" => Ok(TrajectoryEvent::Arrived),
            other => Err(format!("unknown trajectory event `{other}`")),
        }
    }
}

/// Vehicle state after a tick. For `crossed` the street is the one entered;
/// for `arrived` it is the street the vehicle left the network from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryRecord {
    pub tick: Tick,
    pub agent_id: String,
    pub street: String,
    pub offset: Milli,
    pub speed: Milli,
    pub event: TrajectoryEvent,
}

impl fmt::Display for TrajectoryRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.tick,
            self.agent_id,
            self.street,
            self.offset,
            self.speed,
            self.event.as_str()
        )
    }
}

impl FromStr for TrajectoryRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        let [tick, agent_id, street, offset, speed, event] = fields.as_slice() else {
            return Err(format!("expected 6 fields in `{line}`"));
        };
        Ok(TrajectoryRecord {
            tick: tick.parse().map_err(|_| format!("bad tick in `{line}`"))?,
            agent_id: agent_id.to_string(),
            street: street.to_string(),
            offset: offset.parse().map_err(|e| format!("{e}"))?,
            speed: speed.parse().map_err(|e| format!("{e}"))?,
            event: event.parse()?,
        })
    }
}

/// Parses a whole log, skipping blank lines.
pub fn parse_log(text: &str) -> Result<Vec<TrajectoryRecord>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let r = TrajectoryRecord {
            tick: 12,
            agent_id: "d01".into(),
            street: "s-3".into(),
            offset: Milli(56_000),
            speed: Milli(14_000),
            event: TrajectoryEvent::Moved,
        };
        let line = r.to_string();
        assert_eq!(line, "12,d01,s-3,56.000,14.000,moved");
        assert_eq!(line.parse::<TrajectoryRecord>().unwrap(), r);
        assert!("1,2,3".parse::<TrajectoryRecord>().is_err());
        assert!("1,a,s,1.0,2.0,flew".parse::<TrajectoryRecord>().is_err());
    }
}
