//! Central merit-order dispatch over the units' reported status.
//!
//! Units report `(on, available, switch_distance)` each tick; rated powers
//! come from the enrollment registry rather than from measurements. Available
//! units are kept in two stacks ordered by their distance to the natural
//! switching boundary so that the units about to switch anyway are used first.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::battery::{ramp_feasible, soc_feasible, DynamicLimits, SocSample};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("duplicate report from TCL {0}")]
    DuplicateReport(u32),
    #[error("report from TCL {id} is for tick {got}, expected tick {expected}")]
    StaleReport { id: u32, got: u64, expected: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TclReport {
    pub id: u32,
    pub tick: u64,
    pub on: bool,
    pub available: bool,
    pub switch_distance: f64,
    /// kW, from the enrollment contract.
    pub rated_power: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorityStacks {
    pub tick: u64,
    /// Available running units, closest to switching off first.
    pub on_stack: Vec<TclReport>,
    /// Available idle units, closest to switching on first.
    pub off_stack: Vec<TclReport>,
}

/// Forced-state message for one unit, stamped with the tick of the reports it
/// was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Command {
    pub id: u32,
    pub on: bool,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchStatus {
    Tracked,
    InfeasibleRamp,
    InfeasibleSoc,
}

impl DispatchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DispatchStatus::Tracked => "tracked",
            DispatchStatus::InfeasibleRamp => "infeasible_ramp",
            DispatchStatus::InfeasibleSoc => "infeasible_soc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tracked" => Some(DispatchStatus::Tracked),
            "infeasible_ramp" => Some(DispatchStatus::InfeasibleRamp),
            "infeasible_soc" => Some(DispatchStatus::InfeasibleSoc),
            _ => None,
        }
    }
}

impl fmt::Display for DispatchStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub commands: Vec<Command>,
    pub status: DispatchStatus,
    /// `ξ` minus the dispatched power change, kW.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchOptions {
    /// Also refuse to dispatch when the state of charge is outside `±C'`.
    pub soc_gate: bool,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions { soc_gate: true }
    }
}

fn merit_order(a: &TclReport, b: &TclReport) -> std::cmp::Ordering {
    a.switch_distance
        .total_cmp(&b.switch_distance)
        .then(a.id.cmp(&b.id))
}

pub fn build_stacks(reports: &[TclReport], tick: u64) -> Result<PriorityStacks, ProtocolError> {
    let mut seen = HashSet::with_capacity(reports.len());
    let mut stacks = PriorityStacks {
        tick,
        ..Default::default()
    };
    for r in reports {
        if !seen.insert(r.id) {
            return Err(ProtocolError::DuplicateReport(r.id));
        }
        if r.tick != tick {
            return Err(ProtocolError::StaleReport {
                id: r.id,
                got: r.tick,
                expected: tick,
            });
        }
        if !r.available {
            continue;
        }
        if r.on {
            stacks.on_stack.push(*r);
        } else {
            stacks.off_stack.push(*r);
        }
    }
    stacks.on_stack.sort_by(merit_order);
    stacks.off_stack.sort_by(merit_order);
    Ok(stacks)
}

/// Picks units from the head of `stack` while each one strictly reduces
/// `|remaining|`, where every pick moves `remaining` by `sign·P`.
fn greedy(
    stack: &[TclReport],
    mut remaining: f64,
    sign: f64,
    target_on: bool,
    tick: u64,
) -> (Vec<Command>, f64) {
    let mut commands = Vec::new();
    for unit in stack {
        let next = remaining - sign * unit.rated_power;
        if next.abs() >= remaining.abs() {
            break;
        }
        remaining = next;
        commands.push(Command {
            id: unit.id,
            on: target_on,
            tick,
        });
    }
    (commands, remaining)
}

/// Decides which units to force on or off so that `psi` moves toward `r`.
pub fn dispatch(
    r: f64,
    psi: f64,
    stacks: &PriorityStacks,
    limits: &DynamicLimits,
    soc: &SocSample,
    options: DispatchOptions,
) -> DispatchResult {
    let xi = r - psi;
    let refuse = |status| DispatchResult {
        commands: Vec::new(),
        status,
        residual: xi,
    };
    if !ramp_feasible(r, limits) {
        return refuse(DispatchStatus::InfeasibleRamp);
    }
    if options.soc_gate && !soc_feasible(soc, limits) {
        return refuse(DispatchStatus::InfeasibleSoc);
    }
    let (commands, residual) = if xi > 0.0 {
        greedy(&stacks.off_stack, xi, 1.0, true, stacks.tick)
    } else if xi < 0.0 {
        greedy(&stacks.on_stack, xi, -1.0, false, stacks.tick)
    } else {
        (Vec::new(), 0.0)
    };
    DispatchResult {
        commands,
        status: DispatchStatus::Tracked,
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn report(id: u32, on: bool, available: bool, pi: f64) -> TclReport {
        TclReport {
            id,
            tick: 0,
            on,
            available,
            switch_distance: pi,
            rated_power: 5.6,
        }
    }

    fn wide() -> DynamicLimits {
        DynamicLimits {
            capacity: 100.0,
            ramp_up: 1000.0,
            ramp_down: 1000.0,
            step_index: 0,
        }
    }

    fn soc(v: f64) -> SocSample {
        SocSample {
            value: v,
            step_index: 0,
        }
    }

    #[test]
    fn stacks_sorted_by_distance() {
        let reports = [
            report(0, true, true, 0.4),
            report(1, true, true, 0.1),
            report(2, true, true, 0.9),
        ];
        let s = build_stacks(&reports, 0).unwrap();
        let order: Vec<f64> = s.on_stack.iter().map(|r| r.switch_distance).collect();
        assert_eq!(order, vec![0.1, 0.4, 0.9]);
        assert!(s.off_stack.is_empty());
    }

    #[test]
    fn unavailable_units_excluded() {
        let reports = [report(0, true, false, 0.4), report(1, false, false, 0.1)];
        let s = build_stacks(&reports, 0).unwrap();
        assert!(s.on_stack.is_empty() && s.off_stack.is_empty());
    }

    #[test]
    fn ties_broken_by_id() {
        let reports = [report(7, false, true, 0.2), report(3, false, true, 0.2)];
        let s = build_stacks(&reports, 0).unwrap();
        let ids: Vec<u32> = s.off_stack.iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![3, 7]);
    }

    #[test]
    fn protocol_errors() {
        let reports = [report(1, false, true, 0.2), report(1, true, true, 0.2)];
        assert_eq!(
            build_stacks(&reports, 0),
            Err(ProtocolError::DuplicateReport(1))
        );
        let stale = [report(1, false, true, 0.2)];
        assert_eq!(
            build_stacks(&stale, 4),
            Err(ProtocolError::StaleReport {
                id: 1,
                got: 0,
                expected: 4
            })
        );
    }

    #[test]
    fn zero_error_dispatches_nothing() {
        let s = build_stacks(&[report(0, false, true, 0.1)], 0).unwrap();
        let d = dispatch(5.0, 5.0, &s, &wide(), &soc(0.0), DispatchOptions::default());
        assert!(d.commands.is_empty());
        assert_eq!(d.residual, 0.0);
        assert_eq!(d.status, DispatchStatus::Tracked);
    }

    #[test]
    fn greedy_stop_minimizes_residual() {
        let reports = [
            report(0, false, true, 0.8),
            report(1, false, true, 0.1),
            report(2, false, true, 0.3),
        ];
        let s = build_stacks(&reports, 0).unwrap();
        let d = dispatch(
            10.0,
            0.0,
            &s,
            &wide(),
            &soc(0.0),
            DispatchOptions::default(),
        );
        let ids: Vec<u32> = d.commands.iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![1, 2]);
        assert!(d.commands.iter().all(|c| c.on));
        assert_abs_diff_eq!(d.residual, -1.2, epsilon = 1e-12);
    }

    #[test]
    fn negative_error_turns_units_off() {
        let reports = [
            report(0, true, true, 0.5),
            report(1, true, true, 0.2),
            report(2, false, true, 0.0),
        ];
        let s = build_stacks(&reports, 0).unwrap();
        let d = dispatch(
            -6.0,
            0.0,
            &s,
            &wide(),
            &soc(0.0),
            DispatchOptions::default(),
        );
        assert_eq!(
            d.commands,
            vec![Command {
                id: 1,
                on: false,
                tick: 0
            }]
        );
        assert_abs_diff_eq!(d.residual, -0.4, epsilon = 1e-12);
    }

    #[test]
    fn ramp_gate() {
        let s = build_stacks(&[report(0, false, true, 0.1)], 0).unwrap();
        let tight = DynamicLimits {
            ramp_up: 1.8,
            ramp_down: 9.4,
            ..wide()
        };
        let d = dispatch(2.0, 0.0, &s, &tight, &soc(0.0), DispatchOptions::default());
        assert_eq!(d.status, DispatchStatus::InfeasibleRamp);
        assert!(d.commands.is_empty());
        assert_eq!(d.residual, 2.0);
        let d = dispatch(-9.5, 0.0, &s, &tight, &soc(0.0), DispatchOptions::default());
        assert_eq!(d.status, DispatchStatus::InfeasibleRamp);
    }

    #[test]
    fn soc_gate_can_be_disabled() {
        let s = build_stacks(&[report(0, false, true, 0.1)], 0).unwrap();
        let d = dispatch(
            5.6,
            0.0,
            &s,
            &wide(),
            &soc(200.0),
            DispatchOptions { soc_gate: true },
        );
        assert_eq!(d.status, DispatchStatus::InfeasibleSoc);
        assert!(d.commands.is_empty());
        let d = dispatch(
            5.6,
            0.0,
            &s,
            &wide(),
            &soc(200.0),
            DispatchOptions { soc_gate: false },
        );
        assert_eq!(d.status, DispatchStatus::Tracked);
        assert_eq!(d.commands.len(), 1);
    }

    #[test]
    fn status_names_round_trip() {
        for s in [
            DispatchStatus::Tracked,
            DispatchStatus::InfeasibleRamp,
            DispatchStatus::InfeasibleSoc,
        ] {
            assert_eq!(DispatchStatus::parse(s.as_str()), Some(s));
        }
        assert_eq!(DispatchStatus::parse("nope"), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_reports() -> impl Strategy<Value = Vec<TclReport>> {
            proptest::collection::vec(
                (any::<bool>(), any::<bool>(), 0.0f64..2.0, 3.0f64..8.0),
                0..40,
            )
            .prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (on, available, pi, p))| TclReport {
                        id: i as u32,
                        tick: 0,
                        on,
                        available,
                        switch_distance: pi,
                        rated_power: p,
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn dispatch_invariants(reports in arb_reports(), r in -100.0f64..100.0, psi in -100.0f64..100.0) {
                let stacks = build_stacks(&reports, 0).unwrap();
                let d = dispatch(r, psi, &stacks, &wide(), &soc(0.0), DispatchOptions::default());
                let again = dispatch(r, psi, &stacks, &wide(), &soc(0.0), DispatchOptions::default());
                prop_assert_eq!(&d, &again);

                let xi = r - psi;
                let stack = if xi > 0.0 { &stacks.off_stack } else { &stacks.on_stack };
                let commanded: HashSet<u32> = d.commands.iter().map(|c| c.id).collect();
                for c in &d.commands {
                    let rep = reports.iter().find(|x| x.id == c.id).unwrap();
                    prop_assert!(rep.available);
                    prop_assert_eq!(c.on, xi > 0.0);
                    prop_assert_eq!(rep.on, !c.on);
                }
                // commanded units form a prefix of the merit order
                let k = d.commands.len();
                for (pos, unit) in stack.iter().enumerate() {
                    prop_assert_eq!(commanded.contains(&unit.id), pos < k);
                }
                let moved: f64 = d.commands.iter().map(|c| {
                    let p = reports.iter().find(|x| x.id == c.id).unwrap().rated_power;
                    if c.on { p } else { -p }
                }).sum();
                prop_assert!((d.residual - (xi - moved)).abs() < 1e-9);
                prop_assert!(d.residual.abs() <= xi.abs() + 1e-12);
                let available: f64 = stack.iter().map(|u| u.rated_power).sum();
                if available >= xi.abs() {
                    let pmax = stack.iter().map(|u| u.rated_power).fold(0.0, f64::max);
                    prop_assert!(d.residual.abs() <= pmax + 1e-9);
                }
            }
        }
    }
}
