//! Management: boots a constellation of services, drives the clock until the
//! population has finished both commutes, checks the census every tick and
//! writes the run directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use crate::activity::ActivityService;
use crate::body::CensusEntry;
use crate::clock::{ClockService, Participant};
use crate::driver::{DriverService, PolicyParams};
use crate::error::{ProtocolError, ScenarioError, SimError};
use crate::lights::TrafficLightController;
use crate::road::{RoadNetworkService, RouteDocument};
use crate::routing::shortest_route;
use crate::scenario::{load_scenario, PlaceKind, Scenario, Tick};
use crate::topology::Topology;
use crate::transport::{
    Handler, HttpServer, HttpTransport, InProcessNetwork, Request, Response, SharedTransport, Transport,
};
use crate::trip::{trips_csv, TripRecord};

pub const TRIPS_FILE: &str = "trips.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.log";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    /// Every service in this process, dispatched without sockets.
    Inprocess,
    /// Every service in this process, each behind its own HTTP listener.
    Http,
    /// Every service as a separate `sim serve` child process.
    Multiprocess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum ServiceKind {
    Clock,
    Road,
    Home,
    Work,
    Lights,
    Drivers,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 6] = [
        ServiceKind::Clock,
        ServiceKind::Road,
        ServiceKind::Home,
        ServiceKind::Work,
        ServiceKind::Lights,
        ServiceKind::Drivers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::Clock => "clock",
            ServiceKind::Road => "road",
            ServiceKind::Home => "home",
            ServiceKind::Work => "work",
            ServiceKind::Lights => "lights",
            ServiceKind::Drivers => "drivers",
        }
    }

    pub fn base_url(self, topology: &Topology) -> &str {
        match self {
            ServiceKind::Clock => &topology.clock,
            ServiceKind::Road => &topology.road,
            ServiceKind::Home => &topology.home,
            ServiceKind::Work => &topology.work,
            ServiceKind::Lights => &topology.lights,
            ServiceKind::Drivers => &topology.drivers,
        }
    }
}

/// Test hooks that deliberately break the protocol.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Environment services keep a body listed after handing it over.
    pub retain_body_after_migration: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub max_ticks: Option<Tick>,
    pub faults: Faults,
    /// `sim` executable for multiprocess mode; defaults to the current one.
    pub sim_binary: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(mode: Mode, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            mode,
            out_dir: out_dir.into(),
            max_ticks: None,
            faults: Faults::default(),
            sim_binary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    TickLimit,
    Failed(String),
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunOutcome::Completed => 0,
            RunOutcome::TickLimit => 2,
            RunOutcome::Failed(_) => 1,
        }
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunOutcome::Completed => f.write_str("completed"),
            RunOutcome::TickLimit => f.write_str("tick-limit"),
            RunOutcome::Failed(reason) => write!(f, "failed: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub outcome: RunOutcome,
    pub ticks_simulated: Tick,
    pub census_checks: u64,
    pub trips: Vec<TripRecord>,
    pub agents_completed: usize,
    pub mean_travel_ticks: f64,
}

impl RunSummary {
    pub fn summary_text(&self) -> String {
        format!(
            "agentsCompleted={}\nmeanTravelTicks={:.3}\nticksSimulated={}\ncensusChecks={}\noutcome={}\n",
            self.agents_completed, self.mean_travel_ticks, self.ticks_simulated, self.census_checks, self.outcome
        )
    }
}

/// Handles to every service of an in-process constellation.
#[derive(Clone)]
pub struct Services {
    pub clock: Arc<ClockService>,
    pub road: Arc<RoadNetworkService>,
    pub home: Arc<ActivityService>,
    pub work: Arc<ActivityService>,
    pub lights: Arc<TrafficLightController>,
    pub drivers: Arc<DriverService>,
}

impl Services {
    pub fn build(
        scenario: Arc<Scenario>,
        topology: &Topology,
        transport: SharedTransport,
        trajectory: Option<Box<dyn Write + Send>>,
        faults: Faults,
    ) -> Self {
        let road = RoadNetworkService::new(Arc::clone(&scenario), topology.clone(), Arc::clone(&transport), trajectory);
        let home = ActivityService::new(PlaceKind::Home, Arc::clone(&scenario), topology.clone(), Arc::clone(&transport));
        let work = ActivityService::new(PlaceKind::Work, Arc::clone(&scenario), topology.clone(), Arc::clone(&transport));
        road.set_retain_after_migration(faults.retain_body_after_migration);
        home.set_retain_after_migration(faults.retain_body_after_migration);
        work.set_retain_after_migration(faults.retain_body_after_migration);
        Services {
            clock: Arc::new(ClockService::new(Arc::clone(&transport))),
            road: Arc::new(road),
            home: Arc::new(home),
            work: Arc::new(work),
            lights: Arc::new(TrafficLightController::new(
                topology.clone(),
                Arc::clone(&transport),
                scenario.params.green_ticks,
            )),
            drivers: Arc::new(DriverService::new(
                scenario.population.clone(),
                PolicyParams::from_params(&scenario.params),
                topology.clone(),
                transport,
            )),
        }
    }

    pub fn handler(&self, kind: ServiceKind) -> Arc<dyn Handler> {
        match kind {
            ServiceKind::Clock => self.clock.clone(),
            ServiceKind::Road => self.road.clone(),
            ServiceKind::Home => self.home.clone(),
            ServiceKind::Work => self.work.clone(),
            ServiceKind::Lights => self.lights.clone(),
            ServiceKind::Drivers => self.drivers.clone(),
        }
    }
}

/// Builds the handler for one service kind, as `sim serve` runs it.
pub fn build_service(
    kind: ServiceKind,
    scenario: Arc<Scenario>,
    topology: &Topology,
    transport: SharedTransport,
    trajectory: Option<Box<dyn Write + Send>>,
    faults: Faults,
) -> Arc<dyn Handler> {
    let retain = faults.retain_body_after_migration;
    match kind {
        ServiceKind::Clock => Arc::new(ClockService::new(transport)),
        ServiceKind::Road => {
            let road = RoadNetworkService::new(scenario, topology.clone(), transport, trajectory);
            road.set_retain_after_migration(retain);
            Arc::new(road)
        }
        ServiceKind::Home | ServiceKind::Work => {
            let place = if kind == ServiceKind::Home { PlaceKind::Home } else { PlaceKind::Work };
            let service = ActivityService::new(place, scenario, topology.clone(), transport);
            service.set_retain_after_migration(retain);
            Arc::new(service)
        }
        ServiceKind::Lights => Arc::new(TrafficLightController::new(
            topology.clone(),
            transport,
            scenario.params.green_ticks,
        )),
        ServiceKind::Drivers => Arc::new(DriverService::new(
            scenario.population.clone(),
            PolicyParams::from_params(&scenario.params),
            topology.clone(),
            transport,
        )),
    }
}

/// A handler installed after its listener is already bound.
#[derive(Default)]
struct LateHandler(OnceLock<Arc<dyn Handler>>);

impl Handler for LateHandler {
    fn handle(&self, request: Request) -> Response {
        match self.0.get() {
            Some(h) => h.handle(request),
            None => ProtocolError::Unavailable("service starting".into()).into(),
        }
    }
}

enum Backing {
    InProcess(Arc<InProcessNetwork>),
    Http(#[allow(dead_code)] Vec<HttpServer>),
    Processes(Vec<Child>),
}

/// A running set of services plus the transport to reach them.
pub struct Constellation {
    pub topology: Topology,
    pub transport: SharedTransport,
    /// Direct handles when the services live in this process.
    pub services: Option<Services>,
    backing: Backing,
}

impl Constellation {
    pub fn in_process(scenario: Arc<Scenario>, trajectory: Option<Box<dyn Write + Send>>, faults: Faults) -> Self {
        let network = InProcessNetwork::new();
        let topology = Topology::in_process();
        let transport: SharedTransport = network.clone();
        let services = Services::build(scenario, &topology, Arc::clone(&transport), trajectory, faults);
        for kind in ServiceKind::ALL {
            network
                .mount(kind.base_url(&topology), services.handler(kind))
                .expect("in-process topology URLs are valid");
        }
        Constellation {
            topology,
            transport,
            services: Some(services),
            backing: Backing::InProcess(network),
        }
    }

    /// Same services, each behind a loopback HTTP listener on a free port.
    pub fn http(
        scenario: Arc<Scenario>,
        trajectory: Option<Box<dyn Write + Send>>,
        faults: Faults,
    ) -> Result<Self, SimError> {
        let mut servers = Vec::new();
        let mut slots = Vec::new();
        for _ in ServiceKind::ALL {
            let slot = Arc::new(LateHandler::default());
            servers.push(HttpServer::serve("127.0.0.1:0", slot.clone())?);
            slots.push(slot);
        }
        let urls: Vec<String> = servers.iter().map(HttpServer::base_url).collect();
        let topology = Topology {
            clock: urls[0].clone(),
            road: urls[1].clone(),
            home: urls[2].clone(),
            work: urls[3].clone(),
            lights: urls[4].clone(),
            drivers: urls[5].clone(),
        };
        let transport: SharedTransport = Arc::new(HttpTransport::new());
        let services = Services::build(scenario, &topology, Arc::clone(&transport), trajectory, faults);
        for (kind, slot) in ServiceKind::ALL.into_iter().zip(&slots) {
            let _ = slot.0.set(services.handler(kind));
        }
        Ok(Constellation {
            topology,
            transport,
            services: Some(services),
            backing: Backing::Http(servers),
        })
    }

    /// One `sim serve` child per service. The scenario is written to
    /// `out_dir/scenario.json` for the children to load.
    pub fn processes(
        scenario: &Scenario,
        sim_binary: &Path,
        out_dir: &Path,
        faults: Faults,
    ) -> Result<Self, SimError> {
        let io = |e: std::io::Error| SimError::Other(format!("multiprocess startup: {e}"));
        let scenario_path = out_dir.join("scenario.json");
        fs::write(&scenario_path, scenario.to_json()).map_err(io)?;
        let mut urls = Vec::new();
        for _ in ServiceKind::ALL {
            let port = TcpListener::bind("127.0.0.1:0").and_then(|l| l.local_addr()).map_err(io)?.port();
            urls.push(format!("http://127.0.0.1:{port}"));
        }
        let topology = Topology {
            clock: urls[0].clone(),
            road: urls[1].clone(),
            home: urls[2].clone(),
            work: urls[3].clone(),
            lights: urls[4].clone(),
            drivers: urls[5].clone(),
        };
        let topology_json = serde_json::to_string(&topology).expect("topology serializes");
        let mut constellation = Constellation {
            transport: Arc::new(HttpTransport::new()),
            topology,
            services: None,
            backing: Backing::Processes(Vec::new()),
        };
        for kind in ServiceKind::ALL {
            let mut cmd = Command::new(sim_binary);
            cmd.arg("serve")
                .arg("--service")
                .arg(kind.as_str())
                .arg("--scenario")
                .arg(&scenario_path)
                .arg("--topology")
                .arg(&topology_json)
                .stdin(Stdio::null());
            if kind == ServiceKind::Road {
                cmd.arg("--trajectory").arg(out_dir.join(TRAJECTORY_FILE));
            }
            if faults.retain_body_after_migration {
                cmd.arg("--retain-body-after-migration");
            }
            let child = cmd.spawn().map_err(io)?;
            if let Backing::Processes(children) = &mut constellation.backing {
                children.push(child);
            }
        }
        for kind in ServiceKind::ALL {
            constellation.wait_ready(kind, Duration::from_secs(20))?;
        }
        Ok(constellation)
    }

    fn wait_ready(&self, kind: ServiceKind, timeout: Duration) -> Result<(), SimError> {
        let url = format!("{}/", kind.base_url(&self.topology));
        let start = Instant::now();
        loop {
            if self.transport.get(&url).is_ok() {
                return Ok(());
            }
            if start.elapsed() > timeout {
                return Err(SimError::Other(format!("{} did not come up at {url}", kind.as_str())));
            }
            std::thread::sleep(Duration::from_millis(25));
        }
    }
}

impl Drop for Constellation {
    fn drop(&mut self) {
        match &mut self.backing {
            // services hold the network and the network holds the services
            Backing::InProcess(network) => network.clear(),
            Backing::Http(_) => {}
            Backing::Processes(children) => {
                for child in children.iter_mut() {
                    let _ = child.kill();
                    let _ = child.wait();
                }
            }
        }
    }
}

fn expect_status(response: Response, url: &str, status: u16) -> Result<Response, SimError> {
    if response.status == status {
        Ok(response)
    } else {
        Err(SimError::Other(format!(
            "{url} answered {} (expected {status}): {}",
            response.status,
            response.message()
        )))
    }
}

/// Every agent of the population is hosted exactly once across the
/// environment services.
pub fn census_check(
    transport: &dyn Transport,
    topology: &Topology,
    population: &[String],
) -> Result<BTreeMap<String, String>, String> {
    let mut seen: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for base in topology.environment_services() {
        let url = format!("{base}/bodies");
        let response = transport.get(&url).map_err(|e| format!("{url}: {e}"))?;
        let entries: Vec<CensusEntry> = response.json().map_err(|e| format!("{url}: {e}"))?;
        for entry in entries {
            seen.entry(entry.agent_id).or_default().push(entry.resource);
        }
    }
    let mut placement = BTreeMap::new();
    for agent in population {
        match seen.remove(agent) {
            Some(resources) if resources.len() == 1 => {
                placement.insert(agent.clone(), resources.into_iter().next().expect("one"));
            }
            Some(resources) => return Err(format!("{agent} hosted {} times: {resources:?}", resources.len())),
            None => return Err(format!("{agent} hosted nowhere")),
        }
    }
    if let Some((stranger, _)) = seen.into_iter().next() {
        return Err(format!("unknown agent {stranger} in census"));
    }
    Ok(placement)
}

/// Every person needs a non-empty route in both directions.
pub fn check_commutes(scenario: &Scenario) -> Result<(), SimError> {
    for person in &scenario.population {
        let home = scenario.place(PlaceKind::Home, &person.home).expect("validated");
        let work = scenario.place(PlaceKind::Work, &person.work).expect("validated");
        for (from, to) in [(&home.junction, &work.junction), (&work.junction, &home.junction)] {
            if shortest_route(scenario, from, to)?.is_empty() {
                return Err(SimError::Other(format!(
                    "{}: home and work share junction {from}",
                    person.agent_id
                )));
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct TimeBody {
    time: Tick,
}

/// Registers participants, bootstraps the drivers and advances the clock
/// until every trip is done, the tick budget runs out or something breaks.
pub fn drive(
    transport: &dyn Transport,
    topology: &Topology,
    scenario: &Scenario,
    max_ticks: Tick,
) -> RunSummary {
    let mut ticks: Tick = 0;
    let mut checks = 0;
    let mut trips: Vec<TripRecord> = Vec::new();
    let outcome = (|| -> Result<RunOutcome, SimError> {
        for (id, callback) in topology.participants() {
            let url = format!("{}/participants", topology.clock);
            let body = serde_json::to_value(Participant {
                id: id.to_string(),
                callback,
            })
            .expect("participant serializes");
            let response = transport.post(&url, &body)?;
            expect_status(response, &url, 201)?;
        }
        let url = format!("{}/bootstrap", topology.drivers);
        let response = transport.post(&url, &json!({}))?;
        expect_status(response, &url, 200)?;

        let population: Vec<String> = scenario.population.iter().map(|p| p.agent_id.clone()).collect();
        let expected = 2 * population.len();
        loop {
            if trips.len() >= expected {
                return Ok(RunOutcome::Completed);
            }
            if ticks >= max_ticks {
                return Ok(RunOutcome::TickLimit);
            }
            let url = format!("{}/advance", topology.clock);
            let response = transport.post(&url, &json!({}))?;
            let response = expect_status(response, &url, 200)?;
            let time = response.json::<TimeBody>()?.time;
            ticks = time + 1;
            census_check(transport, topology, &population)
                .map_err(|e| SimError::InvariantBreach(format!("census after tick {time}: {e}")))?;
            checks += 1;
            let url = format!("{}/trips", topology.road);
            let response = transport.get(&url)?;
            trips = expect_status(response, &url, 200)?.json()?;
        }
    })()
    .unwrap_or_else(|e| RunOutcome::Failed(e.to_string()));

    trips.sort_by(|a, b| (&a.agent_id, a.depart_tick).cmp(&(&b.agent_id, b.depart_tick)));
    let mut per_agent: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &trips {
        *per_agent.entry(&t.agent_id).or_default() += 1;
    }
    let mean_travel_ticks = if trips.is_empty() {
        0.0
    } else {
        trips.iter().map(|t| t.travel_ticks() as f64).sum::<f64>() / trips.len() as f64
    };
    RunSummary {
        outcome,
        ticks_simulated: ticks,
        census_checks: checks,
        agents_completed: per_agent.values().filter(|&&n| n >= 2).count(),
        mean_travel_ticks,
        trips,
    }
}

/// Runs `scenario` to completion and writes the run directory.
pub fn run(scenario: &Scenario, config: &RunConfig) -> Result<RunSummary, SimError> {
    let io = |e: std::io::Error| SimError::Other(format!("{}: {e}", config.out_dir.display()));
    scenario.validate().map_err(|e| SimError::Other(e.to_string()))?;
    check_commutes(scenario)?;
    fs::create_dir_all(&config.out_dir).map_err(io)?;
    let max_ticks = config.max_ticks.unwrap_or(scenario.params.max_ticks);
    let shared = Arc::new(scenario.clone());
    let trajectory = || -> Result<Option<Box<dyn Write + Send>>, SimError> {
        let file = File::create(config.out_dir.join(TRAJECTORY_FILE)).map_err(io)?;
        Ok(Some(Box::new(BufWriter::new(file))))
    };

    let constellation = match config.mode {
        Mode::Inprocess => Constellation::in_process(shared, trajectory()?, config.faults),
        Mode::Http => Constellation::http(shared, trajectory()?, config.faults)?,
        Mode::Multiprocess => {
            let binary = match &config.sim_binary {
                Some(path) => path.clone(),
                None => std::env::current_exe().map_err(io)?,
            };
            Constellation::processes(scenario, &binary, &config.out_dir, config.faults)?
        }
    };
    let summary = drive(constellation.transport.as_ref(), &constellation.topology, scenario, max_ticks);
    drop(constellation);

    fs::write(config.out_dir.join(TRIPS_FILE), trips_csv(&summary.trips)).map_err(io)?;
    fs::write(config.out_dir.join(SUMMARY_FILE), summary.summary_text()).map_err(io)?;
    Ok(summary)
}

pub fn run_file(path: impl AsRef<Path>, config: &RunConfig) -> Result<RunSummary, SimError> {
    let scenario = load_scenario(path).map_err(|e| SimError::Other(e.to_string()))?;
    run(&scenario, config)
}

/// One-line description of a valid scenario.
pub fn validate(path: impl AsRef<Path>) -> Result<String, ScenarioError> {
    let s = load_scenario(path)?;
    Ok(format!(
        "ok: {} junctions ({} lit), {} streets, {} homes, {} works, {} agents, maxTicks {}",
        s.junctions.len(),
        s.junctions.iter().filter(|j| j.has_light).count(),
        s.streets.len(),
        s.homes.len(),
        s.works.len(),
        s.population.len(),
        s.params.max_ticks
    ))
}

pub fn route(path: impl AsRef<Path>, from: &str, to: &str) -> Result<RouteDocument, SimError> {
    let scenario = load_scenario(path).map_err(|e| SimError::Other(e.to_string()))?;
    let streets = shortest_route(&scenario, from, to)?;
    let free_flow_seconds = crate::routing::free_flow_time(&scenario, &streets)?;
    Ok(RouteDocument {
        from: from.into(),
        to: to.into(),
        streets,
        free_flow_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::commute;
    use crate::scenario::SimParams;

    fn empty() -> Scenario {
        let mut s = commute(100.0, 10.0, 0, 100, 10);
        s.population.clear();
        s.homes.clear();
        s.works.clear();
        s.params = SimParams::with_max_ticks(10);
        s
    }

    #[test]
    fn empty_population_completes_at_once() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run(&empty(), &RunConfig::new(Mode::Inprocess, dir.path())).unwrap();
        assert_eq!(summary.outcome, RunOutcome::Completed);
        assert!(summary.trips.is_empty());
        let csv = fs::read_to_string(dir.path().join(TRIPS_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn tick_budget_exhaustion() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = RunConfig::new(Mode::Inprocess, dir.path());
        config.max_ticks = Some(5);
        let summary = run(&commute(100.0, 10.0, 0, 100, 1000), &config).unwrap();
        assert_eq!(summary.outcome, RunOutcome::TickLimit);
        assert_eq!(summary.outcome.exit_code(), 2);
        assert_eq!(summary.ticks_simulated, 5);
    }

    #[test]
    fn commute_completes_both_trips() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run(&commute(100.0, 10.0, 0, 40, 1000), &RunConfig::new(Mode::Inprocess, dir.path())).unwrap();
        assert_eq!(summary.outcome, RunOutcome::Completed, "{summary:?}");
        assert_eq!(summary.agents_completed, 1);
        assert_eq!(summary.trips.len(), 2);
        assert!(summary.trips.iter().all(TripRecord::respects_free_flow));
        assert_eq!(summary.census_checks, summary.ticks_simulated);
        // ramp 2+4+6+8+10 = 30 m in 5 ticks, then ceil(70 / 10) = 7 ticks at the limit
        assert!(summary.trips.iter().all(|t| t.travel_ticks() == 12), "{:?}", summary.trips);
    }

    #[test]
    fn retained_bodies_break_the_census() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = RunConfig::new(Mode::Inprocess, dir.path());
        config.faults.retain_body_after_migration = true;
        let summary = run(&commute(100.0, 10.0, 0, 40, 1000), &config).unwrap();
        match summary.outcome {
            RunOutcome::Failed(reason) => assert!(reason.contains("hosted 2 times"), "{reason}"),
            other => panic!("expected census failure, got {other}"),
        }
    }
}
