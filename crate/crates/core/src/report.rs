//! Aggregate statistics over a trace.

use std::fmt::Write as _;

use thiserror::Error;

use crate::controller::DispatchStatus;
use crate::format::sig9;
use crate::trace::SimTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub units: usize,
    pub ticks: usize,
    /// kW
    pub rmse_tracking: f64,
    /// kW
    pub max_abs_error: f64,
    pub ticks_infeasible_ramp: usize,
    pub ticks_infeasible_soc: usize,
    /// Mean fraction of units available to the controller.
    pub mean_availability: f64,
    /// kWh, state of charge seen on the last tick.
    pub final_soc: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SummaryError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("summary field `{0}` is missing or malformed")]
    Field(&'static str),
}

impl RunSummary {
    pub fn from_trace(trace: &SimTrace, units: usize) -> RunSummary {
        let rows = &trace.rows;
        let n = rows.len();
        let sq: f64 = rows.iter().map(|r| r.error * r.error).sum();
        let count = |s: DispatchStatus| rows.iter().filter(|r| r.status == s).count();
        let availability: f64 = rows.iter().map(|r| r.n_available as f64).sum();
        RunSummary {
            units,
            ticks: n,
            rmse_tracking: if n == 0 { 0.0 } else { (sq / n as f64).sqrt() },
            max_abs_error: rows.iter().map(|r| r.error.abs()).fold(0.0, f64::max),
            ticks_infeasible_ramp: count(DispatchStatus::InfeasibleRamp),
            ticks_infeasible_soc: count(DispatchStatus::InfeasibleSoc),
            mean_availability: if n == 0 || units == 0 {
                0.0
            } else {
                availability / (n as f64 * units as f64)
            },
            final_soc: rows.last().map_or(0.0, |r| r.x),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "units = {}", self.units);
        let _ = writeln!(out, "ticks = {}", self.ticks);
        let _ = writeln!(out, "rmse_tracking = {}", sig9(self.rmse_tracking));
        let _ = writeln!(out, "max_abs_error = {}", sig9(self.max_abs_error));
        let _ = writeln!(
            out,
            "ticks_infeasible_ramp = {}",
            self.ticks_infeasible_ramp
        );
        let _ = writeln!(out, "ticks_infeasible_soc = {}", self.ticks_infeasible_soc);
        let _ = writeln!(out, "mean_availability = {}", sig9(self.mean_availability));
        let _ = writeln!(out, "final_soc = {}", sig9(self.final_soc));
        out
    }

    pub fn from_text(text: &str) -> Result<RunSummary, SummaryError> {
        let mut fields = std::collections::HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(SummaryError::Syntax { line: idx + 1 })?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: std::str::FromStr>(
            fields: &std::collections::HashMap<String, String>,
            key: &'static str,
        ) -> Result<T, SummaryError> {
            fields
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or(SummaryError::Field(key))
        }
        Ok(RunSummary {
            units: get(&fields, "units")?,
            ticks: get(&fields, "ticks")?,
            rmse_tracking: get(&fields, "rmse_tracking")?,
            max_abs_error: get(&fields, "max_abs_error")?,
            ticks_infeasible_ramp: get(&fields, "ticks_infeasible_ramp")?,
            ticks_infeasible_soc: get(&fields, "ticks_infeasible_soc")?,
            mean_availability: get(&fields, "mean_availability")?,
            final_soc: get(&fields, "final_soc")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceRow;
    use approx::assert_abs_diff_eq;

    fn row(error: f64, status: DispatchStatus, n_available: usize, x: f64) -> TraceRow {
        TraceRow {
            k: 0,
            t_seconds: 0.0,
            r: 0.0,
            psi: error,
            error,
            x,
            capacity: 0.0,
            ramp_up: 0.0,
            ramp_down: 0.0,
            n_available,
            n_on: 0,
            status,
            n_commands: 0,
            x_ode: 0.0,
        }
    }

    #[test]
    fn statistics() {
        let t = SimTrace {
            rows: vec![
                row(3.0, DispatchStatus::Tracked, 10, 1.0),
                row(-4.0, DispatchStatus::InfeasibleRamp, 5, 2.0),
                row(0.0, DispatchStatus::InfeasibleSoc, 0, -1.5),
            ],
        };
        let s = RunSummary::from_trace(&t, 10);
        assert_abs_diff_eq!(s.rmse_tracking, (25.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_eq!(s.max_abs_error, 4.0);
        assert_eq!((s.ticks_infeasible_ramp, s.ticks_infeasible_soc), (1, 1));
        assert_abs_diff_eq!(s.mean_availability, 0.5, epsilon = 1e-12);
        assert_eq!(s.final_soc, -1.5);
        assert!(s.rmse_tracking <= s.max_abs_error);
    }

    #[test]
    fn empty_trace() {
        let s = RunSummary::from_trace(&SimTrace::default(), 5);
        assert_eq!(s.ticks, 0);
        assert_eq!(s.rmse_tracking, 0.0);
    }

    #[test]
    fn text_round_trip() {
        let s = RunSummary {
            units: 1000,
            ticks: 1000,
            rmse_tracking: 2.5,
            max_abs_error: 7.25,
            ticks_infeasible_ramp: 3,
            ticks_infeasible_soc: 0,
            mean_availability: 0.985,
            final_soc: -12.5,
        };
        assert_eq!(RunSummary::from_text(&s.to_text()).unwrap(), s);
        assert_eq!(
            RunSummary::from_text("units = 1"),
            Err(SummaryError::Field("ticks"))
        );
        assert_eq!(
            RunSummary::from_text("garbage"),
            Err(SummaryError::Syntax { line: 1 })
        );
    }
}
