//! Virtual battery view of a TCL fleet: static parameters, availability
//! adjusted limits, state of charge and the reference battery dynamics.

use thiserror::Error;

use crate::fleet::{steady_state_power, Fleet};
use crate::tcl::TclParams;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BatteryError {
    #[error("battery parameters need a non-empty fleet")]
    EmptyFleet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryParams {
    /// kWh
    pub capacity: f64,
    /// kW
    pub ramp_up: f64,
    /// kW
    pub ramp_down: f64,
    /// 1/h, mean inverse time constant.
    pub dissipation: f64,
    /// 1/h, reference rate for the heterogeneity penalty. Equal to `dissipation`.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicLimits {
    pub capacity: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub step_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocSample {
    /// kWh
    pub value: f64,
    pub step_index: u64,
}

/// How unavailable units shift the admissible ramp-down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RampDownRule {
    /// `R'- = R- + Σ(1-λ)P`.
    #[default]
    AddRatedPower,
    /// `R'- = max(0, R- - Σ(1-λ)P_o)`.
    SubtractSteadyPower,
}

/// `a_i = 1/(R_i C_i)`.
fn decay_rate(p: &TclParams) -> f64 {
    1.0 / p.time_constant()
}

/// `b_i = η_i / C_i`.
fn cooling_rate(p: &TclParams) -> f64 {
    p.cop / p.thermal_capacitance
}

/// Energy contribution of one unit: `(1 + |1 - a_i/α|) Δ_i / b_i`.
fn unit_capacity(p: &TclParams, alpha: f64) -> f64 {
    (1.0 + (1.0 - decay_rate(p) / alpha).abs()) * p.deadband_halfwidth / cooling_rate(p)
}

pub fn static_params(fleet: &Fleet) -> Result<BatteryParams, BatteryError> {
    if fleet.is_empty() {
        return Err(BatteryError::EmptyFleet);
    }
    let n = fleet.len() as f64;
    let dissipation = fleet.params.iter().map(decay_rate).sum::<f64>() / n;
    let alpha = dissipation;
    let capacity = fleet.params.iter().map(|p| unit_capacity(p, alpha)).sum();
    let (ramp_up, ramp_down) = fleet.params.iter().fold((0.0, 0.0), |(up, down), p| {
        let p_o = steady_state_power(p, fleet.ambient_temp);
        (up + (p.rated_power - p_o), down + p_o)
    });
    Ok(BatteryParams {
        capacity,
        ramp_up,
        ramp_down,
        dissipation,
        alpha,
    })
}

/// Availability-adjusted limits from the current unit states.
pub fn dynamic_limits(
    fleet: &Fleet,
    battery: &BatteryParams,
    rule: RampDownRule,
    step_index: u64,
) -> DynamicLimits {
    let mut capacity = 0.0;
    let mut unavailable_rated = 0.0;
    let mut unavailable_steady = 0.0;
    for (p, s) in fleet.params.iter().zip(&fleet.states) {
        if s.available {
            capacity += unit_capacity(p, battery.alpha);
        } else {
            unavailable_rated += p.rated_power;
            unavailable_steady += steady_state_power(p, fleet.ambient_temp);
        }
    }
    let ramp_down = match rule {
        RampDownRule::AddRatedPower => battery.ramp_down + unavailable_rated,
        RampDownRule::SubtractSteadyPower => (battery.ramp_down - unavailable_steady).max(0.0),
    };
    DynamicLimits {
        capacity,
        ramp_up: (battery.ramp_up - unavailable_rated).max(0.0),
        ramp_down,
        step_index,
    }
}

/// Stored thermal energy relative to the setpoint; positive when the fleet is
/// colder than its setpoints.
pub fn state_of_charge(fleet: &Fleet, step_index: u64) -> SocSample {
    let value = fleet
        .params
        .iter()
        .zip(&fleet.states)
        .map(|(p, s)| (p.setpoint - s.temperature) / cooling_rate(p))
        .sum();
    SocSample { value, step_index }
}

/// `r` is a signed deviation from baseline; positive means charging.
pub fn ramp_feasible(r: f64, limits: &DynamicLimits) -> bool {
    -limits.ramp_down <= r && r <= limits.ramp_up
}

pub fn soc_feasible(x: &SocSample, limits: &DynamicLimits) -> bool {
    x.value.abs() <= limits.capacity
}

/// Forward-Euler step of `dx/dt = -d·x - p`; negative `power` charges.
pub fn battery_ode_step(x: f64, power: f64, dissipation: f64, step_hours: f64) -> f64 {
    x + step_hours * (-dissipation * x - power)
}
