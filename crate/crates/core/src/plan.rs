//! Single-UAV flight plans and how a UAV state attaches to the planning graph.

use serde::{Deserialize, Serialize};

use crate::graph::{DiscretizationGraph, EdgeId, EdgeKind, FilmingView, VertexId, TIME_EPS};
use crate::interval::{self, TimeInterval};
use crate::mission::{UavState, Waypoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Navigate,
    Film,
    Recharge,
    Dwell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: Waypoint,
    pub end: Waypoint,
    pub task_id: Option<String>,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end.time - self.start.time
    }
}

/// One UAV's station-to-station route through the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleUavPlan {
    pub uav_id: String,
    pub start: UavState,
    /// Graph vertices after the virtual start; empty when the UAV stays put.
    pub vertex_path: Vec<VertexId>,
    pub segments: Vec<Segment>,
    pub filming_time: f64,
    /// Newly filmed task time, merged per task.
    pub covered: Vec<(String, TimeInterval)>,
}

impl SingleUavPlan {
    pub fn empty(start: &UavState) -> Self {
        SingleUavPlan {
            uav_id: start.uav_id.clone(),
            start: start.clone(),
            vertex_path: Vec::new(),
            segments: Vec::new(),
            filming_time: 0.0,
            covered: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_path.is_empty()
    }

    /// Builds segments and covered intervals for a vertex path walked in `view`.
    pub fn from_path(
        view: &FilmingView<'_>,
        start: &UavState,
        link: &StartLinks,
        mut vertex_path: Vec<VertexId>,
        filming_time: f64,
    ) -> Self {
        let graph = view.graph();
        // a plan ends when it reaches its last station; later waiting is not part of it
        while vertex_path.len() >= 2 {
            let (a, b) = (vertex_path[vertex_path.len() - 2], vertex_path[vertex_path.len() - 1]);
            match graph.find_edge(a, b) {
                Some(e) if e.kind == EdgeKind::Dwell => {
                    vertex_path.pop();
                }
                _ => break,
            }
        }
        if filming_time <= 0.0 && link.station.is_some() {
            return SingleUavPlan::empty(start);
        }

        let mut segments: Vec<Segment> = Vec::new();
        let here = Waypoint::new(start.position, start.clock);
        if let Some(&first) = vertex_path.first() {
            let kind = if link.station.is_some() { SegmentKind::Dwell } else { SegmentKind::Navigate };
            push_segment(&mut segments, kind, here, graph.vertex(first).waypoint, None);
        }
        let mut recharging = false;
        let mut covered: Vec<(usize, TimeInterval)> = Vec::new();
        for pair in vertex_path.windows(2) {
            let edge = graph.find_edge(pair[0], pair[1]).expect("plan follows graph edges");
            let (a, b) = (graph.vertex(pair[0]).waypoint, graph.vertex(pair[1]).waypoint);
            match edge.kind {
                EdgeKind::Film => {
                    let task = graph.vertex(pair[0]).task().expect("film edge starts on a task");
                    push_segment(&mut segments, SegmentKind::Film, a, b, Some(graph.tasks()[task].id.clone()));
                    if view.filming(edge.id) > 0.0 {
                        covered.extend(view.newly_covered(edge.id).into_iter().map(|iv| (task, iv)));
                    }
                }
                EdgeKind::Dwell => {
                    let kind = if recharging { SegmentKind::Recharge } else { SegmentKind::Dwell };
                    push_segment(&mut segments, kind, a, b, None);
                }
                EdgeKind::CrossTask | EdgeKind::Departure | EdgeKind::Arrival | EdgeKind::CrossStation => {
                    push_segment(&mut segments, SegmentKind::Navigate, a, b, None);
                }
            }
            if edge.kind != EdgeKind::Dwell {
                recharging = graph.vertex(pair[1]).station().is_some();
            }
        }

        let mut merged: Vec<(String, TimeInterval)> = Vec::new();
        for task in 0..graph.tasks().len() {
            let ivs: Vec<TimeInterval> = covered.iter().filter(|(t, _)| *t == task).map(|(_, iv)| *iv).collect();
            for iv in interval::merge(&ivs) {
                merged.push((graph.tasks()[task].id.clone(), iv));
            }
        }
        SingleUavPlan {
            uav_id: start.uav_id.clone(),
            start: start.clone(),
            vertex_path,
            segments,
            filming_time,
            covered: merged,
        }
    }

    /// Edges traversed by the plan, in order.
    pub fn edges(&self, graph: &DiscretizationGraph) -> Vec<EdgeId> {
        self.vertex_path.windows(2).filter_map(|p| graph.find_edge(p[0], p[1]).map(|e| e.id)).collect()
    }
}

fn push_segment(
    segments: &mut Vec<Segment>,
    kind: SegmentKind,
    start: Waypoint,
    end: Waypoint,
    task_id: Option<String>,
) {
    if end.time - start.time <= TIME_EPS && kind != SegmentKind::Film {
        return;
    }
    if let Some(last) = segments.last_mut() {
        let mergeable = last.kind == kind
            && last.task_id == task_id
            && (last.end.time - start.time).abs() <= TIME_EPS
            && matches!(kind, SegmentKind::Film | SegmentKind::Dwell | SegmentKind::Recharge);
        if mergeable {
            last.end = end;
            return;
        }
    }
    segments.push(Segment { kind, start, end, task_id });
}

/// Edge from the virtual start vertex into the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartLink {
    pub to: VertexId,
    pub battery_cost: f64,
    /// Waiting at the station the UAV is parked on.
    pub dwell: bool,
}

/// How a UAV state attaches to the graph: parked on a station (linked to that station's
/// first vertex at or after its clock) or airborne (linked to every reachable vertex).
#[derive(Debug, Clone, PartialEq)]
pub struct StartLinks {
    pub station: Option<usize>,
    pub links: Vec<StartLink>,
}

/// Distance under which a UAV counts as parked on a station, meters.
pub const PARKED_TOLERANCE: f64 = 1e-6;

pub fn parked_station(graph: &DiscretizationGraph, start: &UavState) -> Option<usize> {
    graph.stations().iter().position(|bs| bs.position_at(start.clock).distance(start.position) <= PARKED_TOLERANCE)
}

pub fn start_links(graph: &DiscretizationGraph, start: &UavState) -> StartLinks {
    if let Some(s) = parked_station(graph, start) {
        let links = graph
            .station_vertices(s)
            .iter()
            .copied()
            .find(|&v| graph.vertex(v).time() >= start.clock - TIME_EPS)
            .map(|to| StartLink { to, battery_cost: 0.0, dwell: true })
            .into_iter()
            .collect();
        return StartLinks { station: Some(s), links };
    }
    let links = graph
        .topological_order()
        .iter()
        .copied()
        .filter_map(|v| {
            let w = graph.vertex(v).waypoint;
            let slack = w.time - start.clock;
            if slack < -TIME_EPS {
                return None;
            }
            let tt = graph.planner().travel_time(start.position, w.position, graph.speed()).ok()?;
            (slack + TIME_EPS >= tt).then_some(StartLink { to: v, battery_cost: slack.max(0.0), dwell: false })
        })
        .collect();
    StartLinks { station: None, links }
}
