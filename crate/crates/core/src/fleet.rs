//! Heterogeneous TCL population and its aggregate power quantities.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::format::sig9;
use crate::tcl::{ModelError, TclParams, TclState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FleetError {
    #[error("heterogeneity must lie in [0, 1), got {0}")]
    Heterogeneity(f64),
    #[error("population count must be at least 1")]
    EmptyPopulation,
    #[error("invalid template parameters: {0}")]
    Template(#[from] ModelError),
    #[error("duplicate TCL id {0}")]
    DuplicateId(u32),
    #[error("no TCL with id {0}")]
    UnknownId(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// Every unit starts at its setpoint.
    #[default]
    Setpoint,
    /// Temperatures drawn uniformly inside each dead-band.
    UniformInBand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub count: usize,
    pub base_params: TclParams,
    /// Fractional half-width of the sampling band, e.g. 0.3 for ±30 %.
    pub heterogeneity: f64,
    pub seed: u64,
    pub init_mode: InitMode,
    /// Also perturb COP, setpoint and dead-band, not only C, R and P.
    pub sample_all_params: bool,
    /// Ambient temperature used to draw the initial on/off states.
    pub ambient_temp: f64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), FleetError> {
        if self.count == 0 {
            return Err(FleetError::EmptyPopulation);
        }
        if !(0.0..1.0).contains(&self.heterogeneity) {
            return Err(FleetError::Heterogeneity(self.heterogeneity));
        }
        self.base_params.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub params: Vec<TclParams>,
    pub states: Vec<TclState>,
    pub ambient_temp: f64,
}

/// Normal draw centred on `center` whose ±3σ band is `center·(1 ± spread)`,
/// truncated to that band by rejection.
fn sample_truncated<R: Rng>(rng: &mut R, center: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        return center;
    }
    let half = center.abs() * spread;
    let normal = Normal::new(center, half / 3.0).expect("finite, positive std");
    let (lo, hi) = (center - half, center + half);
    for _ in 0..64 {
        let v = normal.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
    center
}

pub fn sample_fleet(spec: &PopulationSpec) -> Result<Fleet, FleetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = spec.base_params;
    let h = spec.heterogeneity;
    let mut params = Vec::with_capacity(spec.count);
    let mut states = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut p = TclParams {
            id: i as u32,
            thermal_capacitance: sample_truncated(&mut rng, base.thermal_capacitance, h),
            thermal_resistance: sample_truncated(&mut rng, base.thermal_resistance, h),
            rated_power: sample_truncated(&mut rng, base.rated_power, h),
            ..base
        };
        if spec.sample_all_params {
            p.cop = sample_truncated(&mut rng, base.cop, h);
            p.setpoint = sample_truncated(&mut rng, base.setpoint, h);
            p.deadband_halfwidth = sample_truncated(&mut rng, base.deadband_halfwidth, h);
        }
        let temperature = match spec.init_mode {
            InitMode::Setpoint => p.setpoint,
            InitMode::UniformInBand => rng.random_range(p.lower_bound()..=p.upper_bound()),
        };
        let duty = steady_state_power(&p, spec.ambient_temp) / p.rated_power;
        let on = rng.random_bool(duty.clamp(0.0, 1.0));
        states.push(TclState::settled(&p, temperature, on));
        params.push(p);
    }
    Ok(Fleet {
        params,
        states,
        ambient_temp: spec.ambient_temp,
    })
}

/// Average power of a unit held at its setpoint, clamped to `[0, rated_power]`.
pub fn steady_state_power(params: &TclParams, ambient: f64) -> f64 {
    let raw = (ambient - params.setpoint) / (params.cop * params.thermal_resistance);
    raw.clamp(0.0, params.rated_power)
}

impl Fleet {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn baseline_power(&self) -> f64 {
        self.params
            .iter()
            .map(|p| steady_state_power(p, self.ambient_temp))
            .sum()
    }

    pub fn aggregate_power(&self) -> f64 {
        self.params
            .iter()
            .zip(&self.states)
            .filter(|(_, s)| s.on)
            .map(|(p, _)| p.rated_power)
            .sum()
    }

    pub fn power_deviation(&self) -> f64 {
        self.aggregate_power() - self.baseline_power()
    }

    pub fn total_rated_power(&self) -> f64 {
        self.params.iter().map(|p| p.rated_power).sum()
    }

    pub fn max_rated_power(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.rated_power)
            .fold(0.0, f64::max)
    }

    pub fn position(&self, id: u32) -> Option<usize> {
        self.params.iter().position(|p| p.id == id)
    }

    /// Enrolls a new unit; ids must stay unique.
    pub fn push(&mut self, params: TclParams, state: TclState) -> Result<(), FleetError> {
        params.validate()?;
        if self.position(params.id).is_some() {
            return Err(FleetError::DuplicateId(params.id));
        }
        self.params.push(params);
        self.states.push(state);
        Ok(())
    }

    pub fn remove(&mut self, id: u32) -> Result<(TclParams, TclState), FleetError> {
        let idx = self.position(id).ok_or(FleetError::UnknownId(id))?;
        Ok((self.params.remove(idx), self.states.remove(idx)))
    }

    /// One CSV row per unit, for debugging and fixtures.
    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from(
            "id,capacitance,resistance,rated_power,cop,setpoint,deadband,lockout_steps,temperature,on,available,switch_distance\n",
        );
        for (p, s) in self.params.iter().zip(&self.states) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                p.id,
                sig9(p.thermal_capacitance),
                sig9(p.thermal_resistance),
                sig9(p.rated_power),
                sig9(p.cop),
                sig9(p.setpoint),
                sig9(p.deadband_halfwidth),
                p.lockout_steps,
                sig9(s.temperature),
                u8::from(s.on),
                u8::from(s.available),
                sig9(s.switch_distance),
            );
        }
        out
    }
}
