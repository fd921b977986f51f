//! Battery replay: walks a plan edge by edge with its own battery bookkeeping and
//! return-cost computation, independent of the solver's labels.

use thiserror::Error;

use crate::graph::{DiscretizationGraph, EdgeKind, TIME_EPS};
use crate::interval;
use crate::mission::UavSpec;
use crate::path;
use crate::plan::SingleUavPlan;

const SLACK: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Violation {
    #[error("step {step}: no edge {from} -> {to}")]
    MissingEdge { step: usize, from: usize, to: usize },
    #[error("cannot reach the first vertex {vertex} from the start state")]
    BadStart { vertex: usize },
    #[error("step {step}: battery {battery:.3} below return threshold {needed:.3} at vertex {vertex}")]
    BelowReturnThreshold { step: usize, vertex: usize, battery: f64, needed: f64 },
    #[error("leg from t={from:.3} to t={to:.3} exceeds the available {limit:.3} s of battery")]
    LegTooLong { from: f64, to: f64, limit: f64 },
    #[error("step {step}: left station at t={left:.3} before recharge completed at t={ready:.3}")]
    RechargeSkipped { step: usize, left: f64, ready: f64 },
    #[error("plan ends away from a base station")]
    EndsAirborne,
    #[error("filming time {claimed:.6} differs from covered union {union:.6}")]
    FilmingMismatch { claimed: f64, union: f64 },
    #[error("time goes backwards at step {step}")]
    TimeReversal { step: usize },
}

/// Replays `plan` on `graph` and reports the first violated constraint.
pub fn replay(graph: &DiscretizationGraph, plan: &SingleUavPlan, spec: &UavSpec) -> Result<(), Violation> {
    let covered: Vec<_> = plan.covered.iter().map(|(_, iv)| *iv).collect();
    let union: f64 = {
        let mut total = 0.0;
        let mut ids: Vec<&String> = plan.covered.iter().map(|(id, _)| id).collect();
        ids.dedup();
        for id in ids {
            let per: Vec<_> = plan.covered.iter().filter(|(i, _)| i == id).map(|(_, iv)| *iv).collect();
            total += interval::union_length(&per);
        }
        total
    };
    if (union - plan.filming_time).abs() > SLACK * (1.0 + covered.len() as f64) {
        return Err(Violation::FilmingMismatch { claimed: plan.filming_time, union });
    }
    let Some(&first) = plan.vertex_path.first() else {
        return Ok(());
    };

    let stations = graph.stations();
    let speed = graph.speed();
    let start = &plan.start;
    let needed_at = |v: usize| -> f64 {
        let vx = graph.vertex(v);
        if vx.station().is_some() {
            return 0.0;
        }
        path::return_cost(graph.planner(), vx.waypoint.position, vx.time(), stations, speed)
            .map_or(f64::INFINITY, |(tau, _)| tau)
    };

    let parked = stations.iter().position(|bs| bs.position_at(start.clock).distance(start.position) <= 1e-6);
    let fv = graph.vertex(first);
    if fv.time() + TIME_EPS < start.clock {
        return Err(Violation::BadStart { vertex: first });
    }

    let mut battery = start.battery_remaining;
    let mut ready = f64::NEG_INFINITY;
    // time and battery when the current airborne leg began
    let mut leg_start: Option<(f64, f64)>;
    match parked {
        Some(s) if fv.station() == Some(s) => {
            leg_start = None;
            if battery < spec.battery_endurance {
                // partial charge: either go now or wait out a full recharge
                let full_at = start.clock + stations[s].recharge_delay;
                let next_leave = plan
                    .vertex_path
                    .windows(2)
                    .find(|p| graph.find_edge(p[0], p[1]).is_some_and(|e| e.kind != EdgeKind::Dwell))
                    .map(|p| graph.vertex(p[0]).time());
                if next_leave.is_some_and(|t| t + TIME_EPS >= full_at) {
                    battery = spec.battery_endurance;
                }
            }
        }
        Some(_) => return Err(Violation::BadStart { vertex: first }),
        None => {
            let tt = graph
                .planner()
                .travel_time(start.position, fv.waypoint.position, speed)
                .map_err(|_| Violation::BadStart { vertex: first })?;
            let slack = fv.time() - start.clock;
            if slack + TIME_EPS < tt {
                return Err(Violation::BadStart { vertex: first });
            }
            let need = needed_at(first);
            if battery + 1e-9 < slack.max(0.0) + need {
                return Err(Violation::BelowReturnThreshold { step: 0, vertex: first, battery, needed: slack + need });
            }
            if let Some(s) = fv.station() {
                if slack > battery + 1e-9 {
                    return Err(Violation::LegTooLong { from: start.clock, to: fv.time(), limit: battery });
                }
                battery = spec.battery_endurance;
                ready = fv.time() + stations[s].recharge_delay;
                leg_start = None;
            } else {
                battery = (battery - slack.max(0.0)).max(0.0);
                leg_start = Some((start.clock, start.battery_remaining));
            }
        }
    }

    for (step, pair) in plan.vertex_path.windows(2).enumerate() {
        let step = step + 1;
        let (u, v) = (graph.vertex(pair[0]), graph.vertex(pair[1]));
        let edge =
            graph.find_edge(pair[0], pair[1]).ok_or(Violation::MissingEdge { step, from: pair[0], to: pair[1] })?;
        let dt = v.time() - u.time();
        if dt < -TIME_EPS {
            return Err(Violation::TimeReversal { step });
        }
        if edge.kind == EdgeKind::Dwell {
            if u.station().is_none() || u.station() != v.station() {
                return Err(Violation::MissingEdge { step, from: pair[0], to: pair[1] });
            }
            continue;
        }
        if u.station().is_some() {
            if u.time() + TIME_EPS < ready {
                return Err(Violation::RechargeSkipped { step, left: u.time(), ready });
            }
            leg_start = Some((u.time(), battery));
        }
        let need = needed_at(pair[1]);
        if battery + 1e-9 < dt.max(0.0) + need {
            return Err(Violation::BelowReturnThreshold { step, vertex: pair[1], battery, needed: dt + need });
        }
        battery = (battery - dt.max(0.0)).max(0.0);
        match v.station() {
            Some(s) => {
                if let Some((t0, b0)) = leg_start.take() {
                    if v.time() - t0 > b0.min(spec.battery_endurance) + SLACK {
                        return Err(Violation::LegTooLong { from: t0, to: v.time(), limit: b0 });
                    }
                }
                battery = spec.battery_endurance;
                ready = v.time() + stations[s].recharge_delay;
            }
            None => {
                if battery + 1e-9 < need {
                    return Err(Violation::BelowReturnThreshold { step, vertex: pair[1], battery, needed: need });
                }
            }
        }
    }
    let last = *plan.vertex_path.last().expect("non-empty path");
    if graph.vertex(last).station().is_none() {
        return Err(Violation::EndsAirborne);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::solve_single;
    use crate::testutil::{line_task, mission, parked};

    fn setup() -> (DiscretizationGraph, SingleUavPlan, UavSpec) {
        let m = mission(vec![line_task("a", (20.0, 0.0), (60.0, 0.0), 20.0, 60.0)], 120.0, 3.0, 1);
        let g = DiscretizationGraph::build(&m, 10.0, 3.0).unwrap();
        let (s, spec) = parked(&m, 0);
        let plan = solve_single(&g.view(), &s, &spec);
        (g, plan, spec)
    }

    #[test]
    fn solver_plan_passes() {
        let (g, plan, spec) = setup();
        assert_eq!(plan.filming_time, 40.0);
        assert_eq!(replay(&g, &plan, &spec), Ok(()));
    }

    #[test]
    fn truncated_plan_ends_airborne() {
        let (g, mut plan, spec) = setup();
        plan.vertex_path.pop();
        assert_eq!(replay(&g, &plan, &spec), Err(Violation::EndsAirborne));
    }

    #[test]
    fn inflated_filming_time_is_caught() {
        let (g, mut plan, spec) = setup();
        plan.filming_time += 1.0;
        assert!(matches!(replay(&g, &plan, &spec), Err(Violation::FilmingMismatch { .. })));
    }

    #[test]
    fn smaller_battery_is_caught() {
        let (g, plan, mut spec) = setup();
        spec.battery_endurance = 50.0;
        let mut plan = plan;
        plan.start.battery_remaining = 50.0;
        assert!(matches!(
            replay(&g, &plan, &spec),
            Err(Violation::BelowReturnThreshold { .. } | Violation::LegTooLong { .. })
        ));
    }

    #[test]
    fn skipping_a_vertex_is_caught() {
        let (g, mut plan, spec) = setup();
        let film = plan.vertex_path.iter().position(|&v| g.vertex(v).task().is_some()).unwrap();
        plan.vertex_path.remove(film + 1);
        assert!(matches!(
            replay(&g, &plan, &spec),
            Err(Violation::MissingEdge { .. } | Violation::FilmingMismatch { .. })
        ));
    }
}
