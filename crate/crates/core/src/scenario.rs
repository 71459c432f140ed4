//! World description: road graph, places, population and simulation
//! parameters, plus its on-disk JSON format and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ScenarioError;

pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Junction {
    pub id: String,
    pub has_light: bool,
}

/// A directed road segment between two junctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Street {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Metres.
    pub length: f64,
    /// Metres per second.
    pub speed_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceKind {
    Home,
    Work,
}

impl PlaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlaceKind::Home => "home",
            PlaceKind::Work => "work",
        }
    }

    pub fn other(self) -> PlaceKind {
        match self {
            PlaceKind::Home => PlaceKind::Work,
            PlaceKind::Work => PlaceKind::Home,
        }
    }
}

/// A home or work location attached to a junction. The kind is implied by
/// which list of the scenario the place sits in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub id: String,
    pub junction: String,
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PersonSpec {
    pub agent_id: String,
    pub home: String,
    pub work: String,
    pub depart_home_tick: Tick,
    pub depart_work_tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimParams {
    #[serde(default = "defaults::tick_seconds")]
    pub tick_seconds: f64,
    #[serde(default = "defaults::accel")]
    pub accel: f64,
    #[serde(default = "defaults::decel")]
    pub decel: f64,
    #[serde(default = "defaults::gap_min")]
    pub gap_min: f64,
    #[serde(default = "defaults::green_ticks")]
    pub green_ticks: Tick,
    pub max_ticks: Tick,
    #[serde(default)]
    pub random_seed: u64,
}

mod defaults {
    pub fn tick_seconds() -> f64 {
        1.0
    }
    pub fn accel() -> f64 {
        2.0
    }
    pub fn decel() -> f64 {
        4.0
    }
    pub fn gap_min() -> f64 {
        5.0
    }
    pub fn green_ticks() -> u64 {
        10
    }
}

impl SimParams {
    pub fn with_max_ticks(max_ticks: Tick) -> Self {
        SimParams {
            tick_seconds: defaults::tick_seconds(),
            accel: defaults::accel(),
            decel: defaults::decel(),
            gap_min: defaults::gap_min(),
            green_ticks: defaults::green_ticks(),
            max_ticks,
            random_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub junctions: Vec<Junction>,
    pub streets: Vec<Street>,
    pub homes: Vec<Place>,
    pub works: Vec<Place>,
    pub population: Vec<PersonSpec>,
    pub params: SimParams,
}

const TOP_KEYS: &[&str] = &["junctions", "streets", "homes", "works", "population", "params"];
const JUNCTION_KEYS: &[&str] = &["id", "hasLight"];
const STREET_KEYS: &[&str] = &["id", "from", "to", "length", "speedLimit"];
const PLACE_KEYS: &[&str] = &["id", "junction", "activity"];
const PERSON_KEYS: &[&str] = &["agentId", "home", "work", "departHomeTick", "departWorkTick"];
const PARAM_KEYS: &[&str] = &[
    "tickSeconds",
    "accel",
    "decel",
    "gapMin",
    "greenTicks",
    "maxTicks",
    "randomSeed",
];

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Parses and validates a scenario document held in memory.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    check_keys(&doc)?;
    let scenario: Scenario =
        serde_json::from_value(doc).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    fs::write(path, scenario.to_json()).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn check_keys(doc: &Value) -> Result<(), ScenarioError> {
    let top = doc
        .as_object()
        .ok_or_else(|| ScenarioError::Parse("scenario must be a JSON object".into()))?;
    reject_unknown(top, TOP_KEYS)?;
    for (key, allowed) in [
        ("junctions", JUNCTION_KEYS),
        ("streets", STREET_KEYS),
        ("homes", PLACE_KEYS),
        ("works", PLACE_KEYS),
        ("population", PERSON_KEYS),
    ] {
        if let Some(Value::Array(items)) = top.get(key) {
            for item in items {
                if let Some(obj) = item.as_object() {
                    reject_unknown(obj, allowed)?;
                }
            }
        }
    }
    if let Some(Value::Object(params)) = top.get("params") {
        reject_unknown(params, PARAM_KEYS)?;
    }
    Ok(())
}

fn reject_unknown(obj: &serde_json::Map<String, Value>, allowed: &[&str]) -> Result<(), ScenarioError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ScenarioError::Validation {
            id: k.clone(),
            reason: "unknown key".into(),
        }),
        None => Ok(()),
    }
}

fn invalid(id: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        id: id.to_string(),
        reason: reason.into(),
    }
}

fn unique<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<BTreeSet<&'a str>, ScenarioError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(invalid(id, "duplicate id"));
        }
    }
    Ok(seen)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let p = &self.params;
        for (name, value) in [
            ("tickSeconds", p.tick_seconds),
            ("accel", p.accel),
            ("decel", p.decel),
            ("gapMin", p.gap_min),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(name, "must be strictly positive"));
            }
        }
        if p.green_ticks == 0 {
            return Err(invalid("greenTicks", "must be strictly positive"));
        }
        if p.max_ticks == 0 {
            return Err(invalid("maxTicks", "must be strictly positive"));
        }

        let junctions = unique(self.junctions.iter().map(|j| j.id.as_str()))?;
        unique(self.streets.iter().map(|s| s.id.as_str()))?;
        for s in &self.streets {
            for end in [&s.from, &s.to] {
                if !junctions.contains(end.as_str()) {
                    return Err(invalid(end, format!("street {} references unknown junction", s.id)));
                }
            }
            if s.from == s.to {
                return Err(invalid(&s.id, "street must join two distinct junctions"));
            }
            if !(s.length.is_finite() && s.length > 0.0) {
                return Err(invalid(&s.id, "length must be positive"));
            }
            if s.length < p.gap_min {
                return Err(invalid(&s.id, "length shorter than gapMin"));
            }
            if !(s.speed_limit.is_finite() && s.speed_limit > 0.0) {
                return Err(invalid(&s.id, "speedLimit must be positive"));
            }
        }
        for j in self.junctions.iter().filter(|j| j.has_light) {
            if !self.streets.iter().any(|s| s.to == j.id) {
                return Err(invalid(&j.id, "lit junction has no incoming street"));
            }
        }

        let homes = unique(self.homes.iter().map(|h| h.id.as_str()))?;
        let works = unique(self.works.iter().map(|w| w.id.as_str()))?;
        for place in self.homes.iter().chain(&self.works) {
            if !junctions.contains(place.junction.as_str()) {
                return Err(invalid(&place.junction, format!("place {} attached to unknown junction", place.id)));
            }
        }

        unique(self.population.iter().map(|a| a.agent_id.as_str()))?;
        let mut home_users = BTreeSet::new();
        let mut work_users = BTreeSet::new();
        for person in &self.population {
            if !homes.contains(person.home.as_str()) {
                return Err(invalid(&person.home, format!("{} has unknown home", person.agent_id)));
            }
            if !works.contains(person.work.as_str()) {
                return Err(invalid(&person.work, format!("{} has unknown work", person.agent_id)));
            }
            if person.depart_work_tick <= person.depart_home_tick {
                return Err(invalid(&person.agent_id, "departWorkTick must exceed departHomeTick"));
            }
            // places hold one occupant each
            if !home_users.insert(person.home.as_str()) {
                return Err(invalid(&person.home, "home shared by two people"));
            }
            if !work_users.insert(person.work.as_str()) {
                return Err(invalid(&person.work, "work shared by two people"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn street(&self, id: &str) -> Option<&Street> {
        self.streets.iter().find(|s| s.id == id)
    }

    pub fn junction(&self, id: &str) -> Option<&Junction> {
        self.junctions.iter().find(|j| j.id == id)
    }

    pub fn places(&self, kind: PlaceKind) -> &[Place] {
        match kind {
            PlaceKind::Home => &self.homes,
            PlaceKind::Work => &self.works,
        }
    }

    pub fn place(&self, kind: PlaceKind, id: &str) -> Option<&Place> {
        self.places(kind).iter().find(|p| p.id == id)
    }

    pub fn person(&self, agent_id: &str) -> Option<&PersonSpec> {
        self.population.iter().find(|p| p.agent_id == agent_id)
    }

    /// Sorted incoming street ids per junction.
    pub fn approaches(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for s in &self.streets {
            map.entry(s.to.as_str()).or_default().push(s.id.as_str());
        }
        for list in map.values_mut() {
            list.sort_unstable();
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Value {
        serde_json::json!({
            "junctions": [{"id": "A", "hasLight": false}, {"id": "B", "hasLight": false}],
            "streets": [{"id": "s1", "from": "A", "to": "B", "length": 100.0, "speedLimit": 10.0}],
            "homes": [{"id": "h1", "junction": "A", "activity": "Watch TV"}],
            "works": [{"id": "w1", "junction": "B", "activity": "Work"}],
            "population": [{"agentId": "d1", "home": "h1", "work": "w1", "departHomeTick": 0, "departWorkTick": 50}],
            "params": {"tickSeconds": 1, "accel": 2, "decel": 4, "gapMin": 5, "greenTicks": 10, "maxTicks": 100, "randomSeed": 7}
        })
    }

    fn validation_id(doc: &Value) -> String {
        match parse_scenario(&doc.to_string()) {
            Err(ScenarioError::Validation { id, .. }) => id,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn loads_minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        fs::write(&path, minimal().to_string()).unwrap();
        let s = load_scenario(&path).unwrap();
        assert_eq!(s.junctions.len(), 2);
        assert_eq!(s.streets.len(), 1);
        assert_eq!(s.homes.len(), 1);
        assert_eq!(s.works.len(), 1);
        assert_eq!(s.population.len(), 1);
        assert_eq!(s.params.random_seed, 7);
    }

    #[test]
    fn dangling_junction_reference() {
        let mut doc = minimal();
        doc["streets"][0]["to"] = "Z".into();
        assert_eq!(validation_id(&doc), "Z");
    }

    #[test]
    fn duplicate_street_id() {
        let mut doc = minimal();
        let dup = doc["streets"][0].clone();
        doc["streets"].as_array_mut().unwrap().push(dup);
        assert_eq!(validation_id(&doc), "s1");
    }

    #[test]
    fn non_positive_length() {
        let mut doc = minimal();
        doc["streets"][0]["length"] = 0.0.into();
        assert_eq!(validation_id(&doc), "s1");
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut doc = minimal();
        doc["extra"] = 1.into();
        assert_eq!(validation_id(&doc), "extra");
        let mut doc = minimal();
        doc["streets"][0]["lanes"] = 2.into();
        assert_eq!(validation_id(&doc), "lanes");
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(parse_scenario("{ not json"), Err(ScenarioError::Parse(_))));
        let mut doc = minimal();
        doc["streets"][0]["length"] = "long".into();
        assert!(matches!(parse_scenario(&doc.to_string()), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn schedule_order_and_shared_places() {
        let mut doc = minimal();
        doc["population"][0]["departWorkTick"] = 0.into();
        assert_eq!(validation_id(&doc), "d1");

        let mut doc = minimal();
        let mut second = doc["population"][0].clone();
        second["agentId"] = "d2".into();
        doc["population"].as_array_mut().unwrap().push(second);
        assert_eq!(validation_id(&doc), "h1");
    }

    #[test]
    fn person_home_must_be_a_home() {
        let mut doc = minimal();
        doc["population"][0]["home"] = "w1".into();
        assert_eq!(validation_id(&doc), "w1");
    }

    #[test]
    fn lit_junction_needs_an_approach() {
        let mut doc = minimal();
        doc["junctions"][0]["hasLight"] = true.into();
        assert_eq!(validation_id(&doc), "A");
    }

    #[test]
    fn params_default_when_omitted() {
        let mut doc = minimal();
        doc["params"] = serde_json::json!({"maxTicks": 10});
        let s = parse_scenario(&doc.to_string()).unwrap();
        assert_eq!(s.params.accel, 2.0);
        assert_eq!(s.params.decel, 4.0);
        assert_eq!(s.params.gap_min, 5.0);
        assert_eq!(s.params.green_ticks, 10);
    }
}
