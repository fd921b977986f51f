//! Exact single-UAV solver: a label-correcting sweep over the graph in topological
//! order, keeping at every vertex the Pareto frontier of (filming time, battery, charge
//! readiness).

use crate::graph::{EdgeId, EdgeKind, FilmingView, VertexId, TIME_EPS};
use crate::mission::{UavSpec, UavState};
use crate::plan::{start_links, SingleUavPlan, StartLinks};

/// Slack on battery comparisons, battery-seconds.
pub const BATTERY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label {
    pub filming_time: f64,
    /// Battery-seconds left.
    pub battery: f64,
    /// Earliest instant the UAV may leave the station it is charging at; `-inf` when free.
    pub ready_at: f64,
    pub vertex: VertexId,
    /// Arena index of the predecessor label.
    pub predecessor: Option<usize>,
}

impl Label {
    fn dominates(&self, other: &Label) -> bool {
        self.filming_time >= other.filming_time && self.battery >= other.battery && self.ready_at <= other.ready_at
    }
}

/// Non-dominated labels at one vertex, as indices into the label arena.
#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    members: Vec<usize>,
}

impl LabelSet {
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Adds `label` unless an existing member dominates it; evicts members it dominates.
    pub fn insert(&mut self, arena: &mut Vec<Label>, label: Label) -> bool {
        if self.members.iter().any(|&m| arena[m].dominates(&label)) {
            return false;
        }
        self.members.retain(|&m| !label.dominates(&arena[m]));
        arena.push(label);
        self.members.push(arena.len() - 1);
        true
    }
}

/// Outcome of following one edge from a label; `None` when the edge is infeasible.
pub(crate) fn extend(view: &FilmingView<'_>, spec: &UavSpec, label: &Label, edge: EdgeId) -> Option<(f64, f64, f64)> {
    let graph = view.graph();
    let e = graph.edge(edge);
    let (u, v) = (graph.vertex(e.from), graph.vertex(e.to));
    if e.kind == EdgeKind::Dwell {
        return Some((label.filming_time, label.battery, normalize_ready(label.ready_at, v.time())));
    }
    if u.station().is_some() && u.time() + TIME_EPS < label.ready_at {
        return None;
    }
    if label.battery + BATTERY_EPS < e.battery_cost + graph.return_time(e.to) {
        return None;
    }
    let filming = label.filming_time + view.filming(edge);
    match v.station() {
        Some(s) => {
            let ready = v.time() + graph.stations()[s].recharge_delay;
            Some((filming, spec.battery_endurance, normalize_ready(ready, v.time())))
        }
        None => Some((filming, (label.battery - e.battery_cost).max(0.0), f64::NEG_INFINITY)),
    }
}

fn normalize_ready(ready: f64, now: f64) -> f64 {
    if ready <= now + TIME_EPS {
        f64::NEG_INFINITY
    } else {
        ready
    }
}

/// Labels the virtual start places on the graph.
pub(crate) fn initial_labels(
    view: &FilmingView<'_>,
    start: &UavState,
    spec: &UavSpec,
    links: &StartLinks,
) -> Vec<Label> {
    let graph = view.graph();
    let mut out = Vec::new();
    for link in &links.links {
        let v = graph.vertex(link.to);
        if link.dwell {
            let s = links.station.expect("dwell link implies a parked UAV");
            out.push(Label {
                filming_time: 0.0,
                battery: start.battery_remaining,
                ready_at: f64::NEG_INFINITY,
                vertex: link.to,
                predecessor: None,
            });
            if start.battery_remaining < spec.battery_endurance {
                let ready = start.clock + graph.stations()[s].recharge_delay;
                out.push(Label {
                    filming_time: 0.0,
                    battery: spec.battery_endurance,
                    ready_at: normalize_ready(ready, v.time()),
                    vertex: link.to,
                    predecessor: None,
                });
            }
            continue;
        }
        if start.battery_remaining + BATTERY_EPS < link.battery_cost + graph.return_time(link.to) {
            continue;
        }
        let (battery, ready_at) = match v.station() {
            Some(s) => {
                (spec.battery_endurance, normalize_ready(v.time() + graph.stations()[s].recharge_delay, v.time()))
            }
            None => ((start.battery_remaining - link.battery_cost).max(0.0), f64::NEG_INFINITY),
        };
        out.push(Label { filming_time: 0.0, battery, ready_at, vertex: link.to, predecessor: None });
    }
    out
}

/// All labels produced by one sweep, plus the frontier at every vertex.
#[derive(Debug, Clone)]
pub struct LabelStore {
    pub arena: Vec<Label>,
    pub frontiers: Vec<LabelSet>,
}

/// Runs the sweep from `start` and returns every surviving label.
pub fn sweep(view: &FilmingView<'_>, start: &UavState, spec: &UavSpec, links: &StartLinks) -> LabelStore {
    let graph = view.graph();
    let mut arena: Vec<Label> = Vec::new();
    let mut frontiers = vec![LabelSet::default(); graph.vertices().len()];
    for label in initial_labels(view, start, spec, links) {
        frontiers[label.vertex].insert(&mut arena, label);
    }
    for &u in graph.topological_order() {
        if frontiers[u].members.is_empty() {
            continue;
        }
        let members = frontiers[u].members.clone();
        for &li in &members {
            let label = arena[li];
            for &e in graph.outgoing(u) {
                if let Some((filming_time, battery, ready_at)) = extend(view, spec, &label, e) {
                    let to = graph.edge(e).to;
                    let next = Label { filming_time, battery, ready_at, vertex: to, predecessor: Some(li) };
                    frontiers[to].insert(&mut arena, next);
                }
            }
        }
    }
    LabelStore { arena, frontiers }
}

/// Best terminal label: a label at a station vertex with maximum filming time, then
/// higher battery, then lower vertex id.
pub fn best_terminal(view: &FilmingView<'_>, store: &LabelStore) -> Option<usize> {
    let graph = view.graph();
    let mut best: Option<usize> = None;
    for (v, set) in store.frontiers.iter().enumerate() {
        if graph.vertex(v).station().is_none() {
            continue;
        }
        for &li in &set.members {
            let (cand, cur) = (&store.arena[li], best.map(|b| &store.arena[b]));
            let better = match cur {
                None => true,
                Some(c) => {
                    cand.filming_time > c.filming_time
                        || (cand.filming_time == c.filming_time
                            && (cand.battery > c.battery
                                || (cand.battery == c.battery && (cand.vertex, li) < (c.vertex, best.unwrap()))))
                }
            };
            if better {
                best = Some(li);
            }
        }
    }
    best
}

/// Follows predecessor links from `best` back to the start and builds the plan.
pub fn reconstruct(
    view: &FilmingView<'_>,
    store: &LabelStore,
    best: usize,
    start: &UavState,
    links: &StartLinks,
) -> SingleUavPlan {
    let mut path = Vec::new();
    let mut cursor = Some(best);
    let mut guard = 0;
    while let Some(li) = cursor {
        let label = &store.arena[li];
        path.push(label.vertex);
        cursor = label.predecessor;
        guard += 1;
        assert!(guard <= store.arena.len(), "broken predecessor chain");
    }
    path.reverse();
    SingleUavPlan::from_path(view, start, links, path, store.arena[best].filming_time)
}

/// Maximum-filming plan for one UAV from `start` over the filming values of `view`.
pub fn solve_single(view: &FilmingView<'_>, start: &UavState, spec: &UavSpec) -> SingleUavPlan {
    let links = start_links(view.graph(), start);
    let store = sweep(view, start, spec, &links);
    match best_terminal(view, &store) {
        Some(best) => reconstruct(view, &store, best, start, &links),
        None => SingleUavPlan::empty(start),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::graph::DiscretizationGraph;
    use crate::oracle::{optimal_single, OracleBudget};
    use crate::plan::SegmentKind;
    use crate::testutil::{line_task, mission, parked, small_mission};
    use crate::validate::replay;

    const WIDE: OracleBudget = OracleBudget { max_vertices: 200, max_plans: 200_000, max_combinations: 1 };

    #[test]
    fn ample_battery_films_whole_task() {
        let m = mission(vec![line_task("a", (10.0, 0.0), (80.0, 0.0), 20.0, 90.0)], 900.0, 3.0, 1);
        let g = DiscretizationGraph::build(&m, 5.0, 3.0).unwrap();
        let (s, spec) = parked(&m, 0);
        let plan = solve_single(&g.view(), &s, &spec);
        assert_eq!(plan.filming_time, 70.0);
        assert_eq!(plan.covered, [("a".to_string(), crate::interval::TimeInterval::new(20.0, 90.0))]);
        replay(&g, &plan, &spec).unwrap();
    }

    #[test]
    fn short_battery_films_prefix_like_oracle() {
        // 48 s chase leaving the station: the UAV must turn back before the end
        let m = mission(vec![line_task("a", (5.0, 0.0), (77.0, 0.0), 10.0, 58.0)], 50.0, 3.0, 1);
        let g = DiscretizationGraph::build(&m, 5.0, 3.0).unwrap();
        let (s, spec) = parked(&m, 0);
        let plan = solve_single(&g.view(), &s, &spec);
        assert!(plan.filming_time > 0.0 && plan.filming_time < 48.0);
        assert_eq!(plan.filming_time, optimal_single(&g.view(), &s, &spec, WIDE).unwrap());
        replay(&g, &plan, &spec).unwrap();
    }

    #[test]
    fn hops_between_tasks_like_oracle() {
        let m = mission(
            vec![
                line_task("a", (10.0, 0.0), (10.0, 30.0), 15.0, 55.0),
                line_task("b", (40.0, 30.0), (40.0, 60.0), 40.0, 80.0),
            ],
            120.0,
            3.0,
            1,
        );
        let g = DiscretizationGraph::build(&m, 10.0, 3.0).unwrap();
        let (s, spec) = parked(&m, 0);
        let plan = solve_single(&g.view(), &s, &spec);
        let tasks: Vec<&str> = plan.covered.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(tasks, ["a", "b"]);
        // either task alone gives at most 40 s
        assert!(plan.filming_time > 40.0);
        assert_eq!(plan.filming_time, optimal_single(&g.view(), &s, &spec, WIDE).unwrap());
    }

    #[test]
    fn single_edge_path_segments() {
        let m = mission(vec![line_task("a", (30.0, 0.0), (30.0, 20.0), 20.0, 40.0)], 900.0, 3.0, 1);
        let g = DiscretizationGraph::build(&m, 20.0, 3.0).unwrap();
        let (s, spec) = parked(&m, 0);
        let plan = solve_single(&g.view(), &s, &spec);
        let kinds: Vec<SegmentKind> =
            plan.segments.iter().map(|s| s.kind).filter(|k| *k != SegmentKind::Dwell).collect();
        assert_eq!(kinds, [SegmentKind::Navigate, SegmentKind::Film, SegmentKind::Navigate]);
        assert_eq!(plan.segments.iter().find(|s| s.kind == SegmentKind::Film).unwrap().duration(), 20.0);
    }

    #[test]
    fn recharge_between_tasks_lasts_the_delay() {
        let mut m = mission(
            vec![
                line_task("a", (20.0, 0.0), (20.0, 30.0), 10.0, 40.0),
                line_task("b", (-20.0, 0.0), (-20.0, -30.0), 80.0, 110.0),
            ],
            50.0,
            3.0,
            1,
        );
        m.base_stations[0].recharge_delay = 15.0;
        let g = DiscretizationGraph::build(&m, 10.0, 3.0).unwrap();
        let (s, spec) = parked(&m, 0);
        let plan = solve_single(&g.view(), &s, &spec);
        assert_eq!(plan.filming_time, 60.0);
        let recharge = plan.segments.iter().find(|s| s.kind == SegmentKind::Recharge).expect("recharge segment");
        assert!(recharge.duration() >= 15.0);
        replay(&g, &plan, &spec).unwrap();
    }

    #[test]
    fn nothing_reachable_gives_empty_plan() {
        let m = mission(vec![line_task("a", (500.0, 0.0), (510.0, 0.0), 10.0, 40.0)], 100.0, 3.0, 1);
        let g = DiscretizationGraph::build(&m, 10.0, 3.0).unwrap();
        let (s, spec) = parked(&m, 0);
        let plan = solve_single(&g.view(), &s, &spec);
        assert!(plan.is_empty());
        assert_eq!(plan.filming_time, 0.0);
    }

    #[test]
    fn airborne_start_with_partial_battery() {
        let m = mission(vec![line_task("a", (30.0, 0.0), (30.0, 60.0), 20.0, 80.0)], 200.0, 3.0, 1);
        let g = DiscretizationGraph::build(&m, 10.0, 3.0).unwrap();
        let spec = m.uavs[0].clone();
        let s = UavState {
            uav_id: "u0".into(),
            position: crate::geom::Vec3::new(30.0, -10.0, 5.0),
            clock: 10.0,
            battery_remaining: 40.0,
        };
        let plan = solve_single(&g.view(), &s, &spec);
        assert!(plan.filming_time > 0.0);
        assert_eq!(plan.filming_time, optimal_single(&g.view(), &s, &spec, WIDE).unwrap());
        replay(&g, &plan, &spec).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_oracle_and_replays(m in small_mission(), alpha in prop_oneof![Just(10.0), Just(20.0)]) {
            let g = DiscretizationGraph::build(&m, alpha, 3.0).unwrap();
            prop_assume!(g.vertices().len() <= 40);
            let (s, spec) = parked(&m, 0);
            let view = g.view();
            let links = start_links(&g, &s);
            let store = sweep(&view, &s, &spec, &links);
            for set in &store.frontiers {
                for &a in set.members() {
                    for &b in set.members() {
                        prop_assert!(a == b || !store.arena[a].dominates(&store.arena[b]));
                    }
                }
            }
            let plan = solve_single(&view, &s, &spec);
            prop_assert_eq!(plan.filming_time, optimal_single(&view, &s, &spec, WIDE).unwrap());
            prop_assert!(replay(&g, &plan, &spec).is_ok(), "{:?}", replay(&g, &plan, &spec));

            let mut bigger = spec.clone();
            bigger.battery_endurance *= 1.5;
            let s2 = UavState { battery_remaining: bigger.battery_endurance, ..s.clone() };
            prop_assert!(solve_single(&view, &s2, &bigger).filming_time >= plan.filming_time);
            prop_assert_eq!(solve_single(&view, &s, &spec), plan);
        }
    }
}
