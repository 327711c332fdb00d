//! Single thermostatically controlled load: first-order thermal model,
//! dead-band hysteresis, short-cycling lockout and the switching-boundary
//! distance reported to the aggregator.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if !value.is_finite() {
        Err(ModelError::NonFinite { name, value })
    } else if value <= 0.0 {
        Err(ModelError::NonPositive { name, value })
    } else {
        Ok(())
    }
}

/// Static thermal and electrical parameters of one cooling load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TclParams {
    pub id: u32,
    /// kWh/°C
    pub thermal_capacitance: f64,
    /// °C/kW
    pub thermal_resistance: f64,
    /// kW drawn while on.
    pub rated_power: f64,
    pub cop: f64,
    /// °C
    pub setpoint: f64,
    /// Half-width of the dead-band, °C. The band is `setpoint ± deadband_halfwidth`.
    pub deadband_halfwidth: f64,
    /// Minimum number of steps between forced transitions.
    pub lockout_steps: u32,
}

impl TclParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive("thermal_capacitance", self.thermal_capacitance)?;
        positive("thermal_resistance", self.thermal_resistance)?;
        positive("rated_power", self.rated_power)?;
        positive("cop", self.cop)?;
        positive("deadband_halfwidth", self.deadband_halfwidth)?;
        if !self.setpoint.is_finite() {
            return Err(ModelError::NonFinite {
                name: "setpoint",
                value: self.setpoint,
            });
        }
        Ok(())
    }

    pub fn lower_bound(&self) -> f64 {
        self.setpoint - self.deadband_halfwidth
    }

    pub fn upper_bound(&self) -> f64 {
        self.setpoint + self.deadband_halfwidth
    }

    pub fn in_band(&self, temperature: f64) -> bool {
        self.lower_bound() <= temperature && temperature <= self.upper_bound()
    }

    /// Temperature gain of the cooling unit, `R·P·η`.
    pub fn gain_temperature(&self) -> f64 {
        self.thermal_resistance * self.rated_power * self.cop
    }

    /// Thermal time constant `R·C` in hours.
    pub fn time_constant(&self) -> f64 {
        self.thermal_resistance * self.thermal_capacitance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TclState {
    pub temperature: f64,
    pub on: bool,
    pub steps_since_switch: u32,
    pub available: bool,
    pub switch_distance: f64,
}

impl TclState {
    /// A fresh state at `temperature` with the lockout already elapsed.
    pub fn settled(params: &TclParams, temperature: f64, on: bool) -> Self {
        let mut state = TclState {
            temperature,
            on,
            steps_since_switch: params.lockout_steps.saturating_add(1),
            available: false,
            switch_distance: 0.0,
        };
        state.available = availability(&state, params);
        state.switch_distance = switch_distance(temperature, on, params);
        state
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEnvironment {
    /// °C
    pub ambient_temp: f64,
    /// Sampling time in hours.
    pub step_hours: f64,
    /// Additive temperature disturbance for this step, °C.
    pub noise: f64,
}

pub fn decay_factor(params: &TclParams, step_hours: f64) -> Result<f64, ModelError> {
    positive("step_hours", step_hours)?;
    let rc = params.time_constant();
    positive("thermal time constant", rc)?;
    Ok((-step_hours / rc).exp())
}

/// Next temperature from the first-order difference model.
pub fn thermal_step(
    state: &TclState,
    params: &TclParams,
    env: &StepEnvironment,
) -> Result<f64, ModelError> {
    let g = decay_factor(params, env.step_hours)?;
    let drive = if state.on {
        env.ambient_temp - params.gain_temperature()
    } else {
        env.ambient_temp
    };
    Ok(g * state.temperature + (1.0 - g) * drive + env.noise)
}

pub fn hysteresis_transition(next_temp: f64, current_on: bool, params: &TclParams) -> bool {
    if next_temp > params.upper_bound() {
        true
    } else if next_temp < params.lower_bound() {
        false
    } else {
        current_on
    }
}

/// Controllable iff out of lockout and inside the dead-band.
pub fn availability(state: &TclState, params: &TclParams) -> bool {
    state.steps_since_switch > params.lockout_steps && params.in_band(state.temperature)
}

/// Normalized distance to the boundary at which the unit would switch on its
/// own: the lower edge for a running unit, the upper edge for an idle one.
pub fn switch_distance(temperature: f64, on: bool, params: &TclParams) -> f64 {
    if on {
        (temperature - params.lower_bound()) / params.deadband_halfwidth
    } else {
        (params.upper_bound() - temperature) / params.deadband_halfwidth
    }
}

/// What happened to a forced-state command during a local step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandOutcome {
    NoCommand,
    /// Command adopted; `changed` is false when it matched the current state.
    Applied {
        changed: bool,
    },
    /// Command arrived while the unit was not available and was dropped.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaturalSwitch {
    TurnedOn,
    TurnedOff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStep {
    pub state: TclState,
    pub command: CommandOutcome,
    /// On/off status that drove the thermal update of this step.
    pub applied_on: bool,
    pub natural: Option<NaturalSwitch>,
}

/// One step of the local controller.
///
/// Order: accept the forced state if the unit is available (resetting the
/// switch counter), advance the counter, integrate temperature with the
/// adopted status, then let the thermostat flip the unit if it left the
/// dead-band. Availability and switch distance are recomputed from the
/// resulting state.
pub fn tcl_step(
    state: &TclState,
    params: &TclParams,
    env: &StepEnvironment,
    forced: Option<bool>,
) -> Result<LocalStep, ModelError> {
    let mut current = *state;
    let command = match forced {
        None => CommandOutcome::NoCommand,
        Some(target) if availability(state, params) => {
            let changed = target != current.on;
            current.on = target;
            current.steps_since_switch = 0;
            CommandOutcome::Applied { changed }
        }
        Some(_) => CommandOutcome::Ignored,
    };
    let applied_on = current.on;

    let mut steps = current.steps_since_switch.saturating_add(1);
    let temperature = thermal_step(&current, params, env)?;
    let on = hysteresis_transition(temperature, applied_on, params);
    let natural = match (applied_on, on) {
        (false, true) => Some(NaturalSwitch::TurnedOn),
        (true, false) => Some(NaturalSwitch::TurnedOff),
        _ => None,
    };
    if natural.is_some() {
        steps = 0;
    }

    let mut next = TclState {
        temperature,
        on,
        steps_since_switch: steps,
        available: false,
        switch_distance: switch_distance(temperature, on, params),
    };
    next.available = availability(&next, params);
    Ok(LocalStep {
        state: next,
        command,
        applied_on,
        natural,
    })
}

/// Largest temperature change a unit can make in one noise-free step while
/// inside its band: `(1-g)·max|drive - θ|` over both statuses and both edges.
pub fn max_step_drift(
    params: &TclParams,
    ambient: f64,
    step_hours: f64,
) -> Result<f64, ModelError> {
    let g = decay_factor(params, step_hours)?;
    let on_drive = ambient - params.gain_temperature();
    let worst = [params.lower_bound(), params.upper_bound()]
        .into_iter()
        .flat_map(|t| [(ambient - t).abs(), (on_drive - t).abs()])
        .fold(0.0_f64, f64::max);
    Ok((1.0 - g) * worst)
}
