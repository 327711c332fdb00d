//! Per-tick simulation records and their CSV form.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::controller::DispatchStatus;
use crate::format::sig9;

pub const TRACE_HEADER: &str =
    "k,t_seconds,r,psi,error,x,capacity,ramp_up,ramp_down,n_available,n_on,dispatch_status,n_commands,x_ode";

/// One tick of the closed loop.
///
/// `x`, the limits and `n_available` describe the state the controller saw
/// at the start of the tick. `psi`, `error` and `n_on` describe the on/off
/// pattern in force during the tick, after commands were applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub t_seconds: f64,
    pub r: f64,
    pub psi: f64,
    pub error: f64,
    pub x: f64,
    pub capacity: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub n_available: usize,
    pub n_on: usize,
    pub status: DispatchStatus,
    pub n_commands: usize,
    pub x_ode: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    ForcedOn,
    ForcedOff,
    /// Accepted command that matched the unit's current state.
    ForcedNoChange,
    IgnoredLockout,
    StaleCommand,
    UnknownUnit,
    NaturalOn,
    NaturalOff,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ForcedOn => "forced_on",
            EventKind::ForcedOff => "forced_off",
            EventKind::ForcedNoChange => "forced_no_change",
            EventKind::IgnoredLockout => "ignored_lockout",
            EventKind::StaleCommand => "stale_command",
            EventKind::UnknownUnit => "unknown_unit",
            EventKind::NaturalOn => "natural_on",
            EventKind::NaturalOff => "natural_off",
        }
    }

    pub fn is_forced_transition(self) -> bool {
        matches!(
            self,
            EventKind::ForcedOn | EventKind::ForcedOff | EventKind::ForcedNoChange
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diagnostic {
    pub tick: u64,
    pub id: u32,
    pub event: EventKind,
}

pub fn diagnostics_csv(diagnostics: &[Diagnostic]) -> String {
    let mut out = String::from("tick,id,event\n");
    for d in diagnostics {
        let _ = writeln!(out, "{},{},{}", d.tick, d.id, d.event);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceParseError {
    #[error("trace header does not match `{TRACE_HEADER}`")]
    Header,
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
}

impl SimTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.k,
                sig9(r.t_seconds),
                sig9(r.r),
                sig9(r.psi),
                sig9(r.error),
                sig9(r.x),
                sig9(r.capacity),
                sig9(r.ramp_up),
                sig9(r.ramp_down),
                r.n_available,
                r.n_on,
                r.status,
                r.n_commands,
                sig9(r.x_ode),
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<SimTrace, TraceParseError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(TraceParseError::Header),
        }
        let mut rows = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| TraceParseError::Row {
                line,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 14 {
                return Err(bad("expected 14 columns"));
            }
            let num = |i: usize| {
                f[i].trim()
                    .parse::<f64>()
                    .map_err(|_| bad(&format!("column {} is not numeric", i + 1)))
            };
            let int = |i: usize| {
                f[i].trim()
                    .parse::<u64>()
                    .map_err(|_| bad(&format!("column {} is not an integer", i + 1)))
            };
            rows.push(TraceRow {
                k: int(0)?,
                t_seconds: num(1)?,
                r: num(2)?,
                psi: num(3)?,
                error: num(4)?,
                x: num(5)?,
                capacity: num(6)?,
                ramp_up: num(7)?,
                ramp_down: num(8)?,
                n_available: int(9)? as usize,
                n_on: int(10)? as usize,
                status: DispatchStatus::parse(f[11].trim())
                    .ok_or_else(|| bad("unknown dispatch status"))?,
                n_commands: int(12)? as usize,
                x_ode: num(13)?,
            });
        }
        Ok(SimTrace { rows })
    }
}
