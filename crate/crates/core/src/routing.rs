//! Free-flow routing over the scenario's street graph.
//!
//! Route cost is the sum of `length / speedLimit` over the streets taken,
//! accumulated left to right. Equal-cost routes are ordered by their street-id
//! sequence, so every query has exactly one answer.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::error::RouteError;
use crate::scenario::{Scenario, Street};

#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    path: Vec<String>,
    node: String,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.path.cmp(&other.path))
            .then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn travel_seconds(street: &Street) -> f64 {
    street.length / street.speed_limit
}

/// Cheapest route from junction `from` to junction `to`, as street ids.
pub fn shortest_route(scenario: &Scenario, from: &str, to: &str) -> Result<Vec<String>, RouteError> {
    for id in [from, to] {
        if scenario.junction(id).is_none() {
            return Err(RouteError::UnknownJunction(id.to_string()));
        }
    }
    if from == to {
        return Ok(Vec::new());
    }

    let mut outgoing: BTreeMap<&str, Vec<&Street>> = BTreeMap::new();
    for s in &scenario.streets {
        outgoing.entry(s.from.as_str()).or_default().push(s);
    }

    let mut best: BTreeMap<String, (f64, Vec<String>)> = BTreeMap::new();
    let mut settled: BTreeSet<String> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Label {
        cost: 0.0,
        path: Vec::new(),
        node: from.to_string(),
    }));

    while let Some(Reverse(label)) = heap.pop() {
        if !settled.insert(label.node.clone()) {
            continue;
        }
        if label.node == to {
            return Ok(label.path);
        }
        for street in outgoing.get(label.node.as_str()).into_iter().flatten() {
            if settled.contains(&street.to) {
                continue;
            }
            let cost = label.cost + travel_seconds(street);
            let mut path = label.path.clone();
            path.push(street.id.clone());
            let improves = match best.get(&street.to) {
                None => true,
                Some((c, p)) => cost.total_cmp(c).then_with(|| path.cmp(p)) == Ordering::Less,
            };
            if improves {
                best.insert(street.to.clone(), (cost, path.clone()));
                heap.push(Reverse(Label {
                    cost,
                    path,
                    node: street.to.clone(),
                }));
            }
        }
    }
    Err(RouteError::NoRoute {
        from: from.to_string(),
        to: to.to_string(),
    })
}

/// Seconds needed to drive `route` at every street's speed limit.
pub fn free_flow_time<S: AsRef<str>>(scenario: &Scenario, route: &[S]) -> Result<f64, RouteError> {
    let mut total = 0.0;
    let mut prev: Option<&Street> = None;
    for id in route {
        let id = id.as_ref();
        let street = scenario
            .street(id)
            .ok_or_else(|| RouteError::UnknownStreet(id.to_string()))?;
        if let Some(p) = prev {
            if p.to != street.from {
                return Err(RouteError::BrokenChain {
                    after: p.id.clone(),
                    next: street.id.clone(),
                });
            }
        }
        total += travel_seconds(street);
        prev = Some(street);
    }
    Ok(total)
}

/// Whole ticks needed at free flow, rounding up.
pub fn free_flow_ticks(seconds: f64, tick_seconds: f64) -> u64 {
    let ticks = seconds / tick_seconds;
    // absorb float noise such as 10.000000000000002
    (ticks - 1e-9).ceil().max(0.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Junction, SimParams};

    fn street(id: &str, from: &str, to: &str, length: f64, limit: f64) -> Street {
        Street {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            length,
            speed_limit: limit,
        }
    }

    fn graph(junctions: &[&str], streets: Vec<Street>) -> Scenario {
        Scenario {
            junctions: junctions
                .iter()
                .map(|id| Junction {
                    id: id.to_string(),
                    has_light: false,
                })
                .collect(),
            streets,
            homes: vec![],
            works: vec![],
            population: vec![],
            params: SimParams::with_max_ticks(10),
        }
    }

    fn triangle() -> Scenario {
        graph(
            &["A", "B", "C"],
            vec![
                street("A->B", "A", "B", 10.0, 10.0),
                street("B->C", "B", "C", 10.0, 10.0),
                street("A->C", "A", "C", 50.0, 10.0),
            ],
        )
    }

    #[test]
    fn same_junction_is_empty_route() {
        assert!(shortest_route(&triangle(), "A", "A").unwrap().is_empty());
    }

    #[test]
    fn triangle_prefers_two_hops() {
        assert_eq!(shortest_route(&triangle(), "A", "C").unwrap(), vec!["A->B", "B->C"]);
    }

    #[test]
    fn disconnected_is_no_route() {
        let s = graph(
            &["A", "B", "C", "D"],
            vec![street("ab", "A", "B", 10.0, 10.0), street("cd", "C", "D", 10.0, 10.0)],
        );
        assert!(matches!(shortest_route(&s, "A", "D"), Err(RouteError::NoRoute { .. })));
        // directed: B cannot reach A
        assert!(matches!(shortest_route(&s, "B", "A"), Err(RouteError::NoRoute { .. })));
    }

    #[test]
    fn unknown_junction() {
        assert!(matches!(
            shortest_route(&triangle(), "A", "Q"),
            Err(RouteError::UnknownJunction(j)) if j == "Q"
        ));
    }

    #[test]
    fn equal_cost_breaks_ties_lexicographically() {
        let s = graph(
            &["A", "B", "C", "D"],
            vec![
                street("z1", "A", "B", 10.0, 10.0),
                street("z2", "B", "D", 10.0, 10.0),
                street("a1", "A", "C", 10.0, 10.0),
                street("a2", "C", "D", 10.0, 10.0),
            ],
        );
        assert_eq!(shortest_route(&s, "A", "D").unwrap(), vec!["a1", "a2"]);
    }

    #[test]
    fn free_flow_examples() {
        let s = triangle();
        assert_eq!(free_flow_time::<&str>(&s, &[]).unwrap(), 0.0);
        assert_eq!(free_flow_time(&s, &["A->B"]).unwrap(), 1.0);
        assert_eq!(free_flow_time(&s, &["A->B", "B->C"]).unwrap(), 2.0);
        assert!(matches!(
            free_flow_time(&s, &["A->C", "A->B"]),
            Err(RouteError::BrokenChain { .. })
        ));
        assert!(matches!(free_flow_time(&s, &["nope"]), Err(RouteError::UnknownStreet(_))));
    }

    #[test]
    fn free_flow_ticks_rounds_up() {
        assert_eq!(free_flow_ticks(200.0 / 14.0, 1.0), 15);
        assert_eq!(free_flow_ticks(10.0, 1.0), 10);
        assert_eq!(free_flow_ticks(0.1 + 0.2 + 9.7, 1.0), 10);
        assert_eq!(free_flow_ticks(3.0, 0.5), 6);
    }
}
