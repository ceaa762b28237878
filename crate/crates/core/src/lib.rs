//! Learned demand-response aggregation for thermostatically controlled loads.

pub mod codec;
pub mod dispatch;
pub mod error;
pub mod experiment;
pub mod format;
pub mod fqi;
pub mod mdp;
pub mod oracle;
pub mod ranker;
pub mod regress;
pub mod report;
pub mod seed;
pub mod sim;
pub mod toy;

pub use dispatch::{DispatchTrace, DrEvent, EventSpec, PiConfig};
pub use error::{FlexError, Result};
pub use experiment::{run_experiment, ExperimentConfig, RunOutcome};
pub use fqi::{ActionValues, FqiConfig, QFunction};
pub use ranker::{Direction, HeatmapGrid, RankTable};
pub use report::{consolidate, emit_reports};
pub use mdp::{Action, ExperienceBuffer, HouseId, HouseholdState, Transition};
pub use sim::{Cluster, HouseSim, SetpointSchedule, ThermalParams, WeatherTrace};
