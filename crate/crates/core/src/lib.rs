//! Aggregated thermostatically controlled loads as a stochastic virtual
//! battery, dispatched through priority stacks.

pub mod battery;
pub mod config;
pub mod controller;
pub mod engine;
pub mod fleet;
pub mod format;
pub mod report;
pub mod scenario;
pub mod signal;
pub mod tcl;
pub mod trace;

pub use battery::{BatteryParams, DynamicLimits, RampDownRule, SocSample};
pub use config::{ConfigError, Preset, RunConfig};
pub use controller::{
    dispatch, Command, DispatchOptions, DispatchResult, DispatchStatus, PriorityStacks, TclReport,
};
pub use engine::{SimConfig, SimError, SimOutput, Simulation};
pub use fleet::{sample_fleet, Fleet, FleetError, InitMode, PopulationSpec};
pub use report::RunSummary;
pub use scenario::{run_scenario, Scenario, ScenarioError, ScenarioReport};
pub use signal::{RegulationSignal, SignalError};
pub use tcl::{TclParams, TclState};
pub use trace::{Diagnostic, EventKind, SimTrace, TraceRow};
