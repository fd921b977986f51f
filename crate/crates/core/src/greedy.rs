//! Fleet assignment: repeated single-UAV solves, each on the filming values left over by
//! the previous ones, plus re-planning from a mid-mission execution state.

use rayon::prelude::*;

use crate::dp::solve_single;
use crate::graph::{DiscretizationGraph, GraphError};
use crate::interval::{self, TimeInterval};
use crate::mission::{subtract_covered, InitialStateDoc, Mission, ShootingTask, UavSpec, UavState};
use crate::plan::SingleUavPlan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyOptions {
    /// Seconds left unfilmed after every covered interval, so a relaying UAV does not
    /// meet the previous one at the handover point.
    pub relay_gap: f64,
    /// Solve once per group of identical UAV states instead of once per UAV.
    pub collapse_identical: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self { relay_gap: 0.0, collapse_identical: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanAssignment {
    /// One plan per UAV state, in input order; unassigned UAVs get empty plans.
    pub plans: Vec<SingleUavPlan>,
    pub total_filming_time: f64,
    pub coverage_ratio: f64,
    /// Filming time added by each assignment step, in order.
    pub gains: Vec<f64>,
    /// Task time credited before planning (re-planning only).
    pub prior_covered: Vec<(String, TimeInterval)>,
    pub total_task_duration: f64,
}

/// Mid-mission snapshot: surviving UAVs and what has been filmed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionState {
    pub clock: f64,
    pub uavs: Vec<UavState>,
    pub covered: Vec<(String, TimeInterval)>,
}

/// Filming time by the union definition and the coverage ratio over `tasks`.
pub fn compute_assignment_metrics(
    plans: &[SingleUavPlan],
    tasks: &[ShootingTask],
    prior: &[(String, TimeInterval)],
) -> (f64, f64) {
    let total: f64 = tasks.iter().map(ShootingTask::duration).fold(0.0, |a, b| a + b);
    let ft: f64 = tasks
        .iter()
        .map(|task| {
            let span = task.span();
            let ivs: Vec<TimeInterval> = plans
                .iter()
                .flat_map(|p| p.covered.iter())
                .chain(prior.iter())
                .filter(|(id, _)| *id == task.id)
                .filter_map(|(_, iv)| iv.intersect(&span))
                .collect();
            interval::union_length(&ivs)
        })
        .fold(0.0, |a, b| a + b);
    let cr = if total > 0.0 { (ft / total).min(1.0) } else { 0.0 };
    (ft, cr)
}

fn state_key(state: &UavState, spec: &UavSpec) -> [u64; 7] {
    [
        state.position.x.to_bits(),
        state.position.y.to_bits(),
        state.position.z.to_bits(),
        state.clock.to_bits(),
        state.battery_remaining.to_bits(),
        spec.battery_endurance.to_bits(),
        spec.cruise_speed.to_bits(),
    ]
}

/// Greedy multi-UAV plan on a prebuilt graph. UAVs missing from `mission` stay put.
pub fn solve_multi(
    mission: &Mission,
    graph: &DiscretizationGraph,
    states: &[UavState],
    options: GreedyOptions,
) -> PlanAssignment {
    let mut plans: Vec<SingleUavPlan> = states.iter().map(SingleUavPlan::empty).collect();
    let specs: Vec<Option<&UavSpec>> = states.iter().map(|s| mission.uav(&s.uav_id)).collect();
    let mut remaining: Vec<usize> = (0..states.len()).filter(|&i| specs[i].is_some()).collect();
    let mut zeroed: Vec<(String, TimeInterval)> = Vec::new();
    let mut gains = Vec::new();
    let cutoff = graph.alpha() / 10.0;

    while !remaining.is_empty() {
        // representatives: the lowest-id UAV of each group of interchangeable states
        let mut reps: Vec<usize> = Vec::new();
        for &i in &remaining {
            let key = state_key(&states[i], specs[i].expect("filtered"));
            let twin = options.collapse_identical
                && reps.iter().any(|&r| state_key(&states[r], specs[r].expect("filtered")) == key);
            if !twin {
                reps.push(i);
            }
        }
        let view = graph.zero_filming(&zeroed);
        let candidates: Vec<(usize, SingleUavPlan)> =
            reps.par_iter().map(|&i| (i, solve_single(&view, &states[i], specs[i].expect("filtered")))).collect();

        let mut best: Option<(usize, SingleUavPlan)> = None;
        for (i, plan) in candidates {
            let better = match &best {
                None => true,
                Some((b, bp)) => {
                    plan.filming_time > bp.filming_time
                        || (plan.filming_time == bp.filming_time && states[i].uav_id < states[*b].uav_id)
                }
            };
            if better {
                best = Some((i, plan));
            }
        }
        let Some((rep, plan)) = best else { break };
        if plan.filming_time < cutoff {
            break;
        }
        // hand the plan to the lowest-id UAV sharing the representative's state
        let key = state_key(&states[rep], specs[rep].expect("filtered"));
        let chosen = remaining
            .iter()
            .copied()
            .filter(|&i| {
                !options.collapse_identical && i == rep
                    || options.collapse_identical && state_key(&states[i], specs[i].expect("filtered")) == key
            })
            .min_by(|&a, &b| states[a].uav_id.cmp(&states[b].uav_id))
            .expect("representative is remaining");
        let mut plan = plan;
        plan.uav_id = states[chosen].uav_id.clone();
        plan.start = states[chosen].clone();

        for (id, iv) in &plan.covered {
            zeroed.push((id.clone(), *iv));
            if options.relay_gap > 0.0 {
                if let Some(task) = graph.task_index(id).map(|t| &graph.tasks()[t]) {
                    let gap = TimeInterval::new(iv.end, (iv.end + options.relay_gap).min(task.end()));
                    if gap.length() > 0.0 {
                        zeroed.push((id.clone(), gap));
                    }
                }
            }
        }
        gains.push(plan.filming_time);
        plans[chosen] = plan;
        remaining.retain(|&i| i != chosen);
    }

    let (ft, cr) = compute_assignment_metrics(&plans, graph.tasks(), &[]);
    PlanAssignment {
        plans,
        total_filming_time: ft,
        coverage_ratio: cr,
        gains,
        prior_covered: Vec::new(),
        total_task_duration: graph.tasks().iter().map(ShootingTask::duration).fold(0.0, |a, b| a + b),
    }
}

/// Slowest cruise speed in the fleet; the graph's reachability must hold for every UAV.
pub fn fleet_speed(mission: &Mission) -> f64 {
    mission.uavs.iter().map(|u| u.cruise_speed).reduce(f64::min).unwrap_or(0.0)
}

/// Builds the graph and runs the greedy planner from the mission's initial states.
pub fn plan_mission(
    mission: &Mission,
    alpha: f64,
    options: GreedyOptions,
) -> Result<(DiscretizationGraph, PlanAssignment), GraphError> {
    let graph = DiscretizationGraph::build(mission, alpha, fleet_speed(mission))?;
    let assignment = solve_multi(mission, &graph, &mission.initial_states(), options);
    Ok((graph, assignment))
}

/// Residual mission left at `exec`: uncovered task time after the clock, flown by the
/// surviving UAVs from their current states. Renamed fragments map back to their parent id.
pub fn residual_mission(mission: &Mission, exec: &ExecutionState, alpha: f64) -> (Mission, Vec<(String, String)>) {
    let mut tasks = Vec::new();
    let mut renames = Vec::new();
    for task in &mission.tasks {
        let mut covered: Vec<TimeInterval> =
            exec.covered.iter().filter(|(id, _)| *id == task.id).map(|(_, iv)| *iv).collect();
        if exec.clock > task.start() {
            covered.push(TimeInterval::new(task.start(), exec.clock));
        }
        let fragments = subtract_covered(task, &covered, alpha / 2.0);
        let untouched = fragments.len() == 1 && fragments[0].span() == task.span();
        for (k, mut frag) in fragments.into_iter().enumerate() {
            if !untouched {
                frag.id = format!("{}#{}", task.id, k + 1);
                renames.push((frag.id.clone(), task.id.clone()));
            }
            tasks.push(frag);
        }
    }
    let uavs = exec
        .uavs
        .iter()
        .filter_map(|s| {
            let spec = mission.uav(&s.uav_id)?;
            let mut spec = spec.clone();
            spec.initial_state = Some(InitialStateDoc {
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                t: s.clock,
                battery: s.battery_remaining,
            });
            Some(spec)
        })
        .collect();
    let residual = Mission {
        epoch: exec.clock.max(mission.epoch),
        tasks,
        base_stations: mission.base_stations.clone(),
        uavs,
        map: mission.map.clone(),
    };
    (residual, renames)
}

/// Plans the rest of the mission from `exec`. Time filmed before the snapshot stays
/// credited; metrics are reported over the original tasks.
pub fn replan(
    mission: &Mission,
    exec: &ExecutionState,
    alpha: f64,
    options: GreedyOptions,
) -> Result<PlanAssignment, GraphError> {
    let prior: Vec<(String, TimeInterval)> = exec
        .covered
        .iter()
        .filter_map(|(id, iv)| {
            let task = mission.tasks.iter().find(|t| t.id == *id)?;
            iv.intersect(&task.span()).map(|iv| (id.clone(), iv))
        })
        .collect();
    let (residual, renames) = residual_mission(mission, exec, alpha);
    let parent = |id: &str| -> String {
        renames.iter().find(|(r, _)| r == id).map_or_else(|| id.to_string(), |(_, p)| p.clone())
    };

    let mut plans: Vec<SingleUavPlan>;
    let gains;
    if residual.uavs.is_empty() || residual.tasks.is_empty() {
        plans = exec.uavs.iter().filter(|s| mission.uav(&s.uav_id).is_some()).map(SingleUavPlan::empty).collect();
        gains = Vec::new();
    } else {
        let graph = DiscretizationGraph::build(&residual, alpha, fleet_speed(&residual))?;
        let states: Vec<UavState> = exec.uavs.iter().filter(|s| mission.uav(&s.uav_id).is_some()).cloned().collect();
        let assignment = solve_multi(&residual, &graph, &states, options);
        plans = assignment.plans;
        gains = assignment.gains;
    }
    for plan in &mut plans {
        for (id, _) in &mut plan.covered {
            *id = parent(id);
        }
        for seg in &mut plan.segments {
            if let Some(id) = &mut seg.task_id {
                *id = parent(id);
            }
        }
    }
    let (ft, cr) = compute_assignment_metrics(&plans, &mission.tasks, &prior);
    Ok(PlanAssignment {
        plans,
        total_filming_time: ft,
        coverage_ratio: cr,
        gains,
        prior_covered: prior,
        total_task_duration: mission.total_task_duration(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::mission::{BaseStation, ShotType, Waypoint};

    fn line_task(id: &str, y: f64, t0: f64, t1: f64) -> ShootingTask {
        ShootingTask {
            id: id.into(),
            shot_type: ShotType::Chase,
            waypoints: vec![
                Waypoint::new(Vec3::new(0.0, y, 5.0), t0),
                Waypoint::new(Vec3::new((t1 - t0) * 1.0, y, 5.0), t1),
            ],
        }
    }

    fn mission(tasks: Vec<ShootingTask>, k: usize, battery: f64) -> Mission {
        Mission {
            epoch: 0.0,
            tasks,
            base_stations: vec![BaseStation::fixed("bs", Vec3::ZERO)],
            uavs: (0..k).map(|i| UavSpec::new(format!("u{i}"), battery, 3.0)).collect(),
            map: None,
        }
    }

    fn plan_with(covered: Vec<(String, TimeInterval)>) -> SingleUavPlan {
        let start = UavState { uav_id: "x".into(), position: Vec3::ZERO, clock: 0.0, battery_remaining: 1.0 };
        SingleUavPlan { covered, ..SingleUavPlan::empty(&start) }
    }

    #[test]
    fn metrics_of_nothing() {
        assert_eq!(compute_assignment_metrics(&[], &[], &[]), (0.0, 0.0));
    }

    #[test]
    fn metrics_count_overlap_once() {
        let tasks = vec![line_task("a", 0.0, 0.0, 30.0)];
        let p1 = plan_with(vec![("a".into(), TimeInterval::new(0.0, 15.0))]);
        let p2 = plan_with(vec![("a".into(), TimeInterval::new(10.0, 25.0))]);
        let (ft, cr) = compute_assignment_metrics(&[p1, p2], &tasks, &[]);
        // sweep: [0,15] and [10,25] share [10,15]
        assert_eq!(ft, 25.0);
        assert!((cr - 25.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn full_cover_metrics() {
        let tasks = vec![line_task("a", 0.0, 0.0, 30.0), line_task("b", 5.0, 0.0, 20.0)];
        let p = plan_with(vec![("a".into(), TimeInterval::new(0.0, 30.0)), ("b".into(), TimeInterval::new(0.0, 20.0))]);
        assert_eq!(compute_assignment_metrics(&[p], &tasks, &[]), (50.0, 1.0));
    }

    #[test]
    fn unreachable_tasks_give_empty_plans() {
        let far = ShootingTask {
            id: "far".into(),
            shot_type: ShotType::Static,
            waypoints: vec![
                Waypoint::new(Vec3::new(5000.0, 0.0, 5.0), 10.0),
                Waypoint::new(Vec3::new(5000.0, 0.0, 5.0), 40.0),
            ],
        };
        let m = mission(vec![far], 2, 60.0);
        let (_, a) = plan_mission(&m, 5.0, GreedyOptions::default()).unwrap();
        assert!(a.plans.iter().all(SingleUavPlan::is_empty));
        assert_eq!(a.coverage_ratio, 0.0);
        assert!(a.gains.is_empty());
    }

    #[test]
    fn gains_do_not_increase_and_covers_are_disjoint() {
        let tasks =
            vec![line_task("a", 0.0, 10.0, 60.0), line_task("b", 40.0, 20.0, 70.0), line_task("c", -40.0, 5.0, 45.0)];
        let m = mission(tasks, 3, 120.0);
        let (_, a) = plan_mission(&m, 5.0, GreedyOptions::default()).unwrap();
        for w in a.gains.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", a.gains);
        }
        let sum: f64 = a.plans.iter().map(|p| p.filming_time).sum();
        assert!((sum - a.total_filming_time).abs() < 1e-6);
        for task in &m.tasks {
            let ivs: Vec<TimeInterval> = a
                .plans
                .iter()
                .flat_map(|p| p.covered.iter())
                .filter(|(id, _)| *id == task.id)
                .map(|(_, iv)| *iv)
                .collect();
            let summed: f64 = ivs.iter().map(TimeInterval::length).sum();
            assert!((summed - interval::union_length(&ivs)).abs() < 1e-9);
        }
    }

    #[test]
    fn more_uavs_never_film_less() {
        let tasks =
            vec![line_task("a", 0.0, 10.0, 60.0), line_task("b", 40.0, 12.0, 70.0), line_task("c", -40.0, 5.0, 45.0)];
        let mut last = 0.0;
        for k in 1..=4 {
            let (_, a) = plan_mission(&mission(tasks.clone(), k, 90.0), 5.0, GreedyOptions::default()).unwrap();
            assert!(a.total_filming_time + 1e-9 >= last);
            last = a.total_filming_time;
        }
    }

    #[test]
    fn collapsing_identical_states_changes_nothing() {
        let tasks = vec![line_task("a", 0.0, 10.0, 60.0), line_task("b", 40.0, 12.0, 70.0)];
        let m = mission(tasks, 3, 80.0);
        let (_, a) = plan_mission(&m, 5.0, GreedyOptions::default()).unwrap();
        let (_, b) = plan_mission(&m, 5.0, GreedyOptions { collapse_identical: false, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replan_at_epoch_matches_plan() {
        let tasks = vec![line_task("a", 0.0, 10.0, 60.0), line_task("b", 40.0, 12.0, 70.0)];
        let m = mission(tasks, 2, 80.0);
        let (_, a) = plan_mission(&m, 5.0, GreedyOptions::default()).unwrap();
        let exec = ExecutionState { clock: 0.0, uavs: m.initial_states(), covered: Vec::new() };
        let b = replan(&m, &exec, 5.0, GreedyOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replan_with_everything_covered() {
        let tasks = vec![line_task("a", 0.0, 10.0, 60.0)];
        let m = mission(tasks, 2, 80.0);
        let exec = ExecutionState {
            clock: 20.0,
            uavs: m.initial_states(),
            covered: vec![("a".into(), TimeInterval::new(10.0, 60.0))],
        };
        let a = replan(&m, &exec, 5.0, GreedyOptions::default()).unwrap();
        assert!(a.plans.iter().all(SingleUavPlan::is_empty));
        assert_eq!(a.coverage_ratio, 1.0);
    }

    #[test]
    fn residual_fragments_are_renamed() {
        let m = mission(vec![line_task("a", 0.0, 0.0, 60.0)], 1, 80.0);
        let exec = ExecutionState {
            clock: 0.0,
            uavs: m.initial_states(),
            covered: vec![("a".into(), TimeInterval::new(20.0, 30.0))],
        };
        let (r, renames) = residual_mission(&m, &exec, 5.0);
        let ids: Vec<&str> = r.tasks.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["a#1", "a#2"]);
        assert_eq!(renames.len(), 2);
        assert_eq!(r.tasks[1].span(), TimeInterval::new(30.0, 60.0));
    }
}
