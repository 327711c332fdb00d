//! Canned experiments and their file outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::RunConfig;
use crate::engine::{lockout_steps, SimError, SimOutput, Simulation};
use crate::format::sig9;
use crate::report::{RunSummary, SummaryError};
use crate::signal::{
    load_signal, normalize_and_scale, resample, synthetic_signal, RegulationSignal, SignalError,
};
use crate::tcl::{
    tcl_step, CommandOutcome, ModelError, NaturalSwitch, StepEnvironment, TclParams, TclState,
};
use crate::trace::{diagnostics_csv, SimTrace, TraceParseError};

pub const TRACE_FILE: &str = "trace.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SINGLE_TCL_FILE: &str = "single_tcl.csv";

/// Step used by the single-unit lockout scenarios, so that lockouts of a few
/// seconds resolve to distinct step counts.
pub const SINGLE_TCL_STEP_SECONDS: f64 = 1.0;
/// Four hours at one-second resolution: a little over one natural cycle.
pub const SINGLE_TCL_HORIZON: usize = 4 * 3600;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("trace: {0}")]
    Trace(#[from] TraceParseError),
    #[error("summary: {0}")]
    Summary(#[from] SummaryError),
    #[error("summary mismatch:\n--- recorded\n{recorded}--- recomputed\n{recomputed}")]
    Mismatch {
        recorded: String,
        recomputed: String,
    },
}

impl ScenarioError {
    /// True for failures caused by the filesystem rather than the inputs.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            ScenarioError::Io { .. } | ScenarioError::Signal(SignalError::Io { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Tracking,
    SingleTclLockout2s,
    SingleTclLockout6s,
    ZeroSignal,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Tracking,
        Scenario::SingleTclLockout2s,
        Scenario::SingleTclLockout6s,
        Scenario::ZeroSignal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Tracking => "tracking",
            Scenario::SingleTclLockout2s => "single-tcl-lockout-2s",
            Scenario::SingleTclLockout6s => "single-tcl-lockout-6s",
            Scenario::ZeroSignal => "zero-signal",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioReport {
    Fleet {
        files: Vec<PathBuf>,
        summary: RunSummary,
    },
    SingleTcl {
        files: Vec<PathBuf>,
        stats: SingleTclStats,
    },
}

/// The raw signal a tracking run uses before scaling.
pub fn raw_signal(cfg: &RunConfig) -> Result<RegulationSignal, SignalError> {
    match &cfg.signal.path {
        Some(path) => load_signal(path),
        None => {
            let s = &cfg.signal;
            let span = cfg.sim.horizon_steps as f64 * cfg.sim.step_seconds;
            let samples = (span / s.synthetic_sample_seconds).ceil() as usize + 1;
            Ok(synthetic_signal(
                s.synthetic_seed,
                s.synthetic_sample_seconds,
                samples,
                s.synthetic_correlation_seconds,
            ))
        }
    }
}

/// Builds the simulation and the kW reference on its grid.
pub fn prepare_tracking(cfg: &RunConfig) -> Result<(Simulation, Vec<f64>), ScenarioError> {
    let sim = Simulation::new(cfg.sim.clone(), &cfg.population)?;
    let scaled = normalize_and_scale(&raw_signal(cfg)?, sim.battery(), cfg.signal.scale_fraction)?;
    let reference = resample(&scaled, cfg.sim.step_seconds, cfg.sim.horizon_steps)?;
    Ok((sim, reference))
}

pub fn run_tracking(cfg: &RunConfig) -> Result<(SimOutput, usize), ScenarioError> {
    let (mut sim, reference) = prepare_tracking(cfg)?;
    let units = sim.fleet().len();
    Ok((sim.run(&reference)?, units))
}

pub fn run_zero_signal(cfg: &RunConfig) -> Result<(SimOutput, usize), ScenarioError> {
    let mut sim = Simulation::new(cfg.sim.clone(), &cfg.population)?;
    let units = sim.fleet().len();
    let out = sim.run(&vec![0.0; cfg.sim.horizon_steps])?;
    Ok((out, units))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleTclEvent {
    None,
    ForcedOn,
    ForcedOff,
    Ignored,
    NaturalOn,
    NaturalOff,
}

impl SingleTclEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            SingleTclEvent::None => "none",
            SingleTclEvent::ForcedOn => "forced_on",
            SingleTclEvent::ForcedOff => "forced_off",
            SingleTclEvent::Ignored => "ignored_lockout",
            SingleTclEvent::NaturalOn => "natural_on",
            SingleTclEvent::NaturalOff => "natural_off",
        }
    }
}

/// One row per tick: the temperature at the start of the tick, the status
/// in force during it and what changed that status.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleTclRow {
    pub t_seconds: f64,
    pub temperature: f64,
    pub on: bool,
    pub event: SingleTclEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SingleTclStats {
    pub forced: usize,
    pub natural: usize,
    pub ignored: usize,
}

/// Seeded request pattern: occasional bursts during which the unit is asked
/// to toggle on every tick.
fn toggle_requests(seed: u64, horizon: usize) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut requests = vec![false; horizon];
    let mut k = 0;
    while k < horizon {
        if rng.random_bool(1.0 / 600.0) {
            let len = rng.random_range(10..40usize);
            for slot in requests.iter_mut().skip(k).take(len) {
                *slot = true;
            }
            k += len;
        } else {
            k += 1;
        }
    }
    requests
}

pub fn run_single_tcl(
    template: &TclParams,
    ambient: f64,
    lockout_seconds: f64,
    seed: u64,
) -> Result<Vec<SingleTclRow>, ModelError> {
    let params = TclParams {
        lockout_steps: lockout_steps(lockout_seconds, SINGLE_TCL_STEP_SECONDS),
        ..*template
    };
    params.validate()?;
    let env = StepEnvironment {
        ambient_temp: ambient,
        step_hours: SINGLE_TCL_STEP_SECONDS / 3600.0,
        noise: 0.0,
    };
    let requests = toggle_requests(seed, SINGLE_TCL_HORIZON);
    let mut state = TclState::settled(&params, params.setpoint, false);
    let mut pending_natural = None;
    let mut rows = Vec::with_capacity(SINGLE_TCL_HORIZON);
    for (k, &request) in requests.iter().enumerate() {
        let forced = request.then_some(!state.on);
        let out = tcl_step(&state, &params, &env, forced)?;
        let event = match (pending_natural.take(), out.command) {
            (Some(NaturalSwitch::TurnedOn), _) => SingleTclEvent::NaturalOn,
            (Some(NaturalSwitch::TurnedOff), _) => SingleTclEvent::NaturalOff,
            (None, CommandOutcome::Applied { changed: true }) if out.applied_on => {
                SingleTclEvent::ForcedOn
            }
            (None, CommandOutcome::Applied { changed: true }) => SingleTclEvent::ForcedOff,
            (None, CommandOutcome::Ignored) => SingleTclEvent::Ignored,
            (None, _) => SingleTclEvent::None,
        };
        rows.push(SingleTclRow {
            t_seconds: k as f64 * SINGLE_TCL_STEP_SECONDS,
            temperature: state.temperature,
            on: out.applied_on,
            event,
        });
        pending_natural = out.natural;
        state = out.state;
    }
    Ok(rows)
}

pub fn single_tcl_csv(rows: &[SingleTclRow]) -> String {
    let mut out = String::from("t_seconds,temperature,on,event\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            sig9(r.t_seconds),
            sig9(r.temperature),
            u8::from(r.on),
            r.event.as_str()
        );
    }
    out
}

fn single_tcl_stats(rows: &[SingleTclRow]) -> SingleTclStats {
    let mut stats = SingleTclStats::default();
    for r in rows {
        match r.event {
            SingleTclEvent::ForcedOn | SingleTclEvent::ForcedOff => stats.forced += 1,
            SingleTclEvent::NaturalOn | SingleTclEvent::NaturalOff => stats.natural += 1,
            SingleTclEvent::Ignored => stats.ignored += 1,
            SingleTclEvent::None => {}
        }
    }
    stats
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, ScenarioError> {
    fs::write(&path, contents).map_err(|source| ScenarioError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes trace, diagnostics and summary. The summary is computed from the
/// CSV text exactly as written so that `verify` reproduces it bit for bit.
pub fn write_fleet_outputs(
    out_dir: &Path,
    output: &SimOutput,
    units: usize,
) -> Result<(Vec<PathBuf>, RunSummary), ScenarioError> {
    let trace_csv = output.trace.to_csv();
    let summary = RunSummary::from_trace(&SimTrace::from_csv(&trace_csv)?, units);
    let files = vec![
        write(out_dir.join(TRACE_FILE), &trace_csv)?,
        write(
            out_dir.join(DIAGNOSTICS_FILE),
            &diagnostics_csv(&output.diagnostics),
        )?,
        write(out_dir.join(SUMMARY_FILE), &summary.to_text())?,
    ];
    Ok((files, summary))
}

pub fn run_scenario(
    scenario: Scenario,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<ScenarioReport, ScenarioError> {
    fs::create_dir_all(out_dir).map_err(|source| ScenarioError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let single = |lockout_seconds: f64| -> Result<ScenarioReport, ScenarioError> {
        let rows = run_single_tcl(
            &cfg.population.base_params,
            cfg.sim.ambient.at(0),
            lockout_seconds,
            cfg.sim.seed,
        )?;
        let file = write(out_dir.join(SINGLE_TCL_FILE), &single_tcl_csv(&rows))?;
        Ok(ScenarioReport::SingleTcl {
            files: vec![file],
            stats: single_tcl_stats(&rows),
        })
    };
    match scenario {
        Scenario::Tracking | Scenario::ZeroSignal => {
            let (output, units) = if scenario == Scenario::Tracking {
                run_tracking(cfg)?
            } else {
                run_zero_signal(cfg)?
            };
            let (files, summary) = write_fleet_outputs(out_dir, &output, units)?;
            Ok(ScenarioReport::Fleet { files, summary })
        }
        Scenario::SingleTclLockout2s => single(2.0),
        Scenario::SingleTclLockout6s => single(6.0),
    }
}

/// Recomputes the summary from `trace.csv` and compares it with `summary.txt`.
pub fn verify_outputs(dir: &Path) -> Result<RunSummary, ScenarioError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })
    };
    let recorded_text = read(SUMMARY_FILE)?;
    let recorded = RunSummary::from_text(&recorded_text)?;
    let trace = SimTrace::from_csv(&read(TRACE_FILE)?)?;
    let recomputed = RunSummary::from_trace(&trace, recorded.units);
    let recomputed_text = recomputed.to_text();
    if recomputed_text != recorded_text {
        return Err(ScenarioError::Mismatch {
            recorded: recorded_text,
            recomputed: recomputed_text,
        });
    }
    Ok(recomputed)
}
