//! A traffic commute simulation built from cooperating REST services.
//!
//! Streets, junctions, homes and workplaces are addressable resources hosted
//! by environment services. Driver agents inhabit them through bodies, get
//! an observation pushed every tick and answer with an action. A clock keeps
//! every service in lockstep, and an orchestrator wires the constellation
//! together either in one process or as separate HTTP processes.

pub mod activity;
pub mod body;
pub mod builders;
pub mod clock;
pub mod driver;
pub mod error;
pub mod lights;
pub mod orchestrator;
pub mod road;
pub mod routing;
pub mod scenario;
pub mod topology;
pub mod transport;
pub mod trip;
pub mod units;

pub use error::{MigrationError, ProtocolError, RouteError, ScenarioError, SimError, TransportError};
pub use scenario::{load_scenario, parse_scenario, Scenario, Tick};
