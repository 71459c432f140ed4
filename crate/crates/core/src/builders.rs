//! Scenario generators: seeded grids and a minimal two-junction commute.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scenario::{Junction, PersonSpec, Place, Scenario, SimParams, Street, Tick};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub agents: usize,
    pub lit: usize,
    pub seed: u64,
    pub max_ticks: Tick,
}

impl Default for GridSpec {
    /// 3x3, 20 agents, 2 lit junctions.
    fn default() -> Self {
        GridSpec {
            rows: 3,
            cols: 3,
            agents: 20,
            lit: 2,
            seed: 7,
            max_ticks: 5000,
        }
    }
}

const LENGTHS: [f64; 3] = [150.0, 200.0, 250.0];
const LIMITS: [f64; 2] = [10.0, 14.0];

pub fn junction_id(r: usize, c: usize) -> String {
    format!("j{r}{c}")
}

/// Grid of two-way streets between orthogonal neighbours. Each agent gets
/// its own home and work on distinct junctions.
pub fn grid(spec: &GridSpec) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids: Vec<String> = (0..spec.rows)
        .flat_map(|r| (0..spec.cols).map(move |c| junction_id(r, c)))
        .collect();
    let mut lit: Vec<&String> = ids.iter().collect();
    lit.shuffle(&mut rng);
    lit.truncate(spec.lit);
    let junctions = ids
        .iter()
        .map(|id| Junction {
            id: id.clone(),
            has_light: lit.contains(&id),
        })
        .collect();

    let mut streets = Vec::new();
    let mut link = |a: String, b: String, rng: &mut ChaCha8Rng| {
        let length = *LENGTHS.choose(rng).expect("non-empty");
        let speed_limit = *LIMITS.choose(rng).expect("non-empty");
        for (from, to) in [(&a, &b), (&b, &a)] {
            streets.push(Street {
                id: format!("{from}-{to}"),
                from: from.clone(),
                to: to.clone(),
                length,
                speed_limit,
            });
        }
    };
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if c + 1 < spec.cols {
                link(junction_id(r, c), junction_id(r, c + 1), &mut rng);
            }
            if r + 1 < spec.rows {
                link(junction_id(r, c), junction_id(r + 1, c), &mut rng);
            }
        }
    }

    let mut homes = Vec::new();
    let mut works = Vec::new();
    let mut population = Vec::new();
    for i in 1..=spec.agents {
        let home_j = ids.choose(&mut rng).expect("non-empty grid").clone();
        let work_j = loop {
            let j = ids.choose(&mut rng).expect("non-empty grid");
            if *j != home_j || ids.len() == 1 {
                break j.clone();
            }
        };
        let home = format!("h{i:02}");
        let work = format!("w{i:02}");
        homes.push(Place {
            id: home.clone(),
            junction: home_j,
            activity: "Watch TV".into(),
        });
        works.push(Place {
            id: work.clone(),
            junction: work_j,
            activity: "Work".into(),
        });
        let depart_home_tick = rng.gen_range(0..50);
        population.push(PersonSpec {
            agent_id: format!("d{i:02}"),
            home,
            work,
            depart_home_tick,
            depart_work_tick: depart_home_tick + rng.gen_range(200..300),
        });
    }

    Scenario {
        junctions,
        streets,
        homes,
        works,
        population,
        params: SimParams {
            random_seed: spec.seed,
            ..SimParams::with_max_ticks(spec.max_ticks)
        },
    }
}

/// One person commuting between junctions `A` and `B` over a pair of
/// opposing streets of equal length and limit, no lights.
pub fn commute(length: f64, speed_limit: f64, depart_home: Tick, depart_work: Tick, max_ticks: Tick) -> Scenario {
    let junctions = ["A", "B"]
        .iter()
        .map(|id| Junction {
            id: id.to_string(),
            has_light: false,
        })
        .collect();
    let street = |from: &str, to: &str| Street {
        id: format!("{from}->{to}"),
        from: from.into(),
        to: to.into(),
        length,
        speed_limit,
    };
    Scenario {
        junctions,
        streets: vec![street("A", "B"), street("B", "A")],
        homes: vec![Place {
            id: "h1".into(),
            junction: "A".into(),
            activity: "Watch TV".into(),
        }],
        works: vec![Place {
            id: "w1".into(),
            junction: "B".into(),
            activity: "Work".into(),
        }],
        population: vec![PersonSpec {
            agent_id: "d1".into(),
            home: "h1".into(),
            work: "w1".into(),
            depart_home_tick: depart_home,
            depart_work_tick: depart_work,
        }],
        params: SimParams::with_max_ticks(max_ticks),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let s = grid(&GridSpec::default());
        assert_eq!(s.junctions.len(), 9);
        assert_eq!(s.streets.len(), 24);
        assert_eq!(s.population.len(), 20);
        assert_eq!(s.junctions.iter().filter(|j| j.has_light).count(), 2);
        s.validate().unwrap();
        for p in &s.population {
            let h = s.place(crate::scenario::PlaceKind::Home, &p.home).unwrap();
            let w = s.place(crate::scenario::PlaceKind::Work, &p.work).unwrap();
            assert_ne!(h.junction, w.junction);
        }
    }

    #[test]
    fn grid_is_seeded() {
        let spec = GridSpec::default();
        assert_eq!(grid(&spec), grid(&spec));
        assert_ne!(grid(&spec), grid(&GridSpec { seed: 8, ..spec }));
    }

    #[test]
    fn commute_validates() {
        commute(100.0, 10.0, 0, 100, 1000).validate().unwrap();
    }
}
