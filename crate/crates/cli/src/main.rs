//! `tclsim`: run, verify and inspect TCL virtual battery simulations.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tcl_vbat::config::{parse_config, ConfigError, RunConfig};
use tcl_vbat::engine::Simulation;
use tcl_vbat::format::sig9;
use tcl_vbat::scenario::{run_scenario, verify_outputs, Scenario, ScenarioError, ScenarioReport};
use tcl_vbat::signal::synthetic_signal;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tclsim",
    version,
    about = "Virtual battery simulator for fleets of thermostatically controlled loads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file in `key = value` form. Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "TCLSIM_OUT", default_value = "tclsim-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace files and summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// tracking, zero-signal, single-tcl-lockout-2s or single-tcl-lockout-6s
        #[arg(long, default_value = "tracking", value_parser = parse_scenario)]
        scenario: Scenario,
        /// Regulation signal CSV (`t,r`), replacing the configured one.
        #[arg(long)]
        signal: Option<PathBuf>,
    },
    /// Recompute the summary from a trace and compare with the stored one.
    Verify {
        /// Directory holding trace.csv and summary.txt.
        #[arg(long, env = "TCLSIM_OUT", default_value = "tclsim-out")]
        out: PathBuf,
    },
    /// Write the sampled fleet as CSV.
    FleetDump {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic regulation signal as CSV.
    SynthSignal {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 5400)]
        samples: usize,
        #[arg(long, default_value_t = 2.0)]
        sample_seconds: f64,
        #[arg(long, default_value_t = 300.0)]
        correlation_seconds: f64,
        /// Destination file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse()
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Other(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else if matches!(
            e,
            ScenarioError::Mismatch { .. } | ScenarioError::Trace(_) | ScenarioError::Summary(_)
        ) {
            Failure::Other(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path).map_err(|e| match e {
            ConfigError::Io(_) => Failure::Io(format!("{}: {e}", path.display())),
            other => Failure::Config(format!("{}: {other}", path.display())),
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
        cfg.population.seed = seed;
        cfg.signal.synthetic_seed = seed;
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli, log: &mut String) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            common,
            scenario,
            signal,
        } => {
            let mut cfg = load_config(&common)?;
            if signal.is_some() {
                cfg.signal.path = signal;
            }
            match run_scenario(scenario, &cfg, &common.out)? {
                ScenarioReport::Fleet { files, summary } => {
                    log.push_str(&summary.to_text());
                    for f in files {
                        let _ = writeln!(log, "wrote {}", f.display());
                    }
                }
                ScenarioReport::SingleTcl { files, stats } => {
                    let _ = writeln!(log, "forced_transitions = {}", stats.forced);
                    let _ = writeln!(log, "natural_transitions = {}", stats.natural);
                    let _ = writeln!(log, "ignored_commands = {}", stats.ignored);
                    for f in files {
                        let _ = writeln!(log, "wrote {}", f.display());
                    }
                }
            }
        }
        Command::Verify { out } => {
            let summary = verify_outputs(&out)?;
            let _ = writeln!(
                log,
                "summary matches trace ({} ticks, rmse_tracking = {})",
                summary.ticks,
                sig9(summary.rmse_tracking)
            );
        }
        Command::FleetDump { common } => {
            let cfg = load_config(&common)?;
            let sim = Simulation::new(cfg.sim, &cfg.population)
                .map_err(|e| Failure::Config(e.to_string()))?;
            let path = common.out.join("fleet.csv");
            write_file(&path, &sim.fleet().snapshot_csv())?;
            let _ = writeln!(log, "wrote {}", path.display());
        }
        Command::SynthSignal {
            seed,
            samples,
            sample_seconds,
            correlation_seconds,
            out,
        } => {
            if samples < 2
                || sample_seconds.is_nan()
                || sample_seconds <= 0.0
                || correlation_seconds.is_nan()
                || correlation_seconds <= 0.0
            {
                return Err(Failure::Config(
                    "samples must be at least 2 and both durations positive".into(),
                ));
            }
            let signal = synthetic_signal(seed, sample_seconds, samples, correlation_seconds);
            write_file(&out, &signal.to_csv())?;
            let _ = writeln!(log, "wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut log = String::new();
    let result = execute(cli, &mut log);
    let _ = std::io::stdout().write_all(log.as_bytes());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("tclsim: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
