//! Time-discretized planning graph: subdivided task waypoints, first-reachable
//! hops between tasks, and base-station departure/arrival vertices.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::interval::{self, TimeInterval};
use crate::mission::{BaseStation, Mission, ShootingTask, Waypoint};
use crate::path::{self, GridMap, PathPlanner};

/// Tolerance for comparing instants, seconds.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("UAV speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("graph contains a cycle")]
    Cyclic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphWarning {
    /// No vertex of the task can be reached from any base station.
    UnreachableTask { task_id: String },
    /// Alpha is coarse relative to the smallest battery endurance.
    CoarseAlpha { alpha: f64, battery: f64 },
}

pub type VertexId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StationRole {
    Departure,
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    /// `index` counts along the augmented task.
    Task { task: usize, index: usize },
    /// `index` is the position in the station's time-ordered dwell chain.
    Station { station: usize, role: StationRole, index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
    pub waypoint: Waypoint,
}

impl Vertex {
    pub fn time(&self) -> f64 {
        self.waypoint.time
    }

    pub fn station(&self) -> Option<usize> {
        match self.kind {
            VertexKind::Station { station, .. } => Some(station),
            VertexKind::Task { .. } => None,
        }
    }

    pub fn task(&self) -> Option<usize> {
        match self.kind {
            VertexKind::Task { task, .. } => Some(task),
            VertexKind::Station { .. } => None,
        }
    }

    fn order_rank(&self) -> u8 {
        match self.kind {
            VertexKind::Station { role: StationRole::Departure, .. } => 0,
            VertexKind::Task { .. } => 1,
            VertexKind::Station { role: StationRole::Arrival, .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    /// Consecutive waypoints of one augmented task.
    Film,
    /// First-reachable hop between two tasks.
    CrossTask,
    /// Station departure into a task vertex.
    Departure,
    /// Task vertex back to a station.
    Arrival,
    /// Waiting at a station between consecutive station vertices; consumes no battery.
    Dwell,
    /// First-reachable hop between two stations.
    CrossStation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: VertexId,
    pub to: VertexId,
    pub kind: EdgeKind,
    /// `t_to − t_from`.
    pub travel_time: f64,
    pub filming_value: f64,
    pub battery_cost: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GraphOptions {
    /// Keep only the latest departure per task vertex across stations.
    pub prune_dominated_departures: bool,
}

#[derive(Debug, Clone)]
pub struct DiscretizationGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<EdgeId>>,
    incoming: Vec<Vec<EdgeId>>,
    order: Vec<VertexId>,
    return_time: Vec<f64>,
    task_vertices: Vec<Vec<VertexId>>,
    station_vertices: Vec<Vec<VertexId>>,
    tasks: Vec<ShootingTask>,
    stations: Vec<BaseStation>,
    alpha: f64,
    speed: f64,
    planner: PathPlanner,
    warnings: Vec<GraphWarning>,
}

/// Subdivides every original segment of `task` into pieces of `alpha` seconds (the last
/// piece of a segment may be shorter). Original waypoints are kept.
pub fn augment_task(task: &ShootingTask, alpha: f64) -> Result<Vec<Waypoint>, GraphError> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(GraphError::NonPositiveAlpha(alpha));
    }
    let mut out = vec![task.waypoints[0]];
    for seg in task.waypoints.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let span = b.time - a.time;
        let mut k = 1.0;
        while a.time + k * alpha < b.time - TIME_EPS {
            let t = a.time + k * alpha;
            out.push(Waypoint::new(a.position.lerp(b.position, (t - a.time) / span), t));
            k += 1.0;
        }
        out.push(b);
    }
    Ok(out)
}

struct Builder<'a> {
    planner: &'a PathPlanner,
    speed: f64,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl Builder<'_> {
    fn add_vertex(&mut self, kind: VertexKind, waypoint: Waypoint) -> VertexId {
        let id = self.vertices.len();
        self.vertices.push(Vertex { id, kind, waypoint });
        id
    }

    fn add_edge(&mut self, from: VertexId, to: VertexId, kind: EdgeKind) {
        let travel_time = (self.vertices[to].time() - self.vertices[from].time()).max(0.0);
        let filming_value = if kind == EdgeKind::Film { travel_time } else { 0.0 };
        let battery_cost = if kind == EdgeKind::Dwell { 0.0 } else { travel_time };
        let id = self.edges.len();
        self.edges.push(Edge { id, from, to, kind, travel_time, filming_value, battery_cost });
    }

    fn reachable(&self, from: VertexId, to: VertexId) -> bool {
        let (u, v) = (&self.vertices[from], &self.vertices[to]);
        match self.planner.travel_time(u.waypoint.position, v.waypoint.position, self.speed) {
            Ok(tt) => v.time() - u.time() + TIME_EPS >= tt,
            Err(_) => false,
        }
    }

    /// First vertex of `targets` (time ordered) strictly later than `from` and reachable from it.
    fn first_reachable(&self, from: VertexId, targets: &[VertexId]) -> Option<VertexId> {
        let t = self.vertices[from].time();
        let begin = targets.partition_point(|&w| self.vertices[w].time() < t - TIME_EPS);
        targets[begin..].iter().copied().find(|&w| {
            let tw = self.vertices[w].time();
            tw > t + TIME_EPS && self.reachable(from, w)
        })
    }
}

impl DiscretizationGraph {
    pub fn build(mission: &Mission, alpha: f64, uav_speed: f64) -> Result<Self, GraphError> {
        Self::build_with(mission, alpha, uav_speed, GraphOptions::default())
    }

    pub fn build_with(
        mission: &Mission,
        alpha: f64,
        uav_speed: f64,
        options: GraphOptions,
    ) -> Result<Self, GraphError> {
        if !uav_speed.is_finite() || uav_speed <= 0.0 {
            return Err(GraphError::NonPositiveSpeed(uav_speed));
        }
        let planner = PathPlanner::new(mission.map.as_ref().map(GridMap::from_spec));
        let mut b = Builder { planner: &planner, speed: uav_speed, vertices: Vec::new(), edges: Vec::new() };
        let mut warnings = Vec::new();
        if let Some(min_b) = mission.uavs.iter().map(|u| u.battery_endurance).reduce(f64::min) {
            if alpha > min_b / 10.0 {
                warnings.push(GraphWarning::CoarseAlpha { alpha, battery: min_b });
            }
        }

        // task vertices and filming edges
        let mut task_vertices = Vec::with_capacity(mission.tasks.len());
        for (ti, task) in mission.tasks.iter().enumerate() {
            let ids: Vec<VertexId> = augment_task(task, alpha)?
                .into_iter()
                .enumerate()
                .map(|(index, w)| b.add_vertex(VertexKind::Task { task: ti, index }, w))
                .collect();
            for pair in ids.windows(2) {
                b.add_edge(pair[0], pair[1], EdgeKind::Film);
            }
            task_vertices.push(ids);
        }
        let task_vertex_count = b.vertices.len();

        // station departure/arrival vertices around every task vertex
        let stations = &mission.base_stations;
        let mut station_members: Vec<Vec<VertexId>> = vec![Vec::new(); stations.len()];
        let mut has_departure = vec![false; mission.tasks.len()];
        for v in 0..task_vertex_count {
            let Waypoint { position, time } = b.vertices[v].waypoint;
            let task = b.vertices[v].task().expect("task vertex");
            let mut departures: Vec<(usize, f64)> = stations
                .iter()
                .enumerate()
                .filter_map(|(si, bs)| {
                    path::departure_lead(&planner, position, time, bs, uav_speed).ok().map(|l| (si, l))
                })
                .collect();
            if options.prune_dominated_departures {
                if let Some(&best) = departures.iter().min_by(|a, c| a.1.total_cmp(&c.1)) {
                    departures = vec![best];
                }
            }
            for (si, lead) in departures {
                let t_dep = time - lead;
                let w = Waypoint::new(stations[si].position_at(t_dep), t_dep);
                let d = b.add_vertex(VertexKind::Station { station: si, role: StationRole::Departure, index: 0 }, w);
                b.add_edge(d, v, EdgeKind::Departure);
                station_members[si].push(d);
                if t_dep >= mission.epoch - TIME_EPS {
                    has_departure[task] = true;
                }
            }
            for (si, bs) in stations.iter().enumerate() {
                if let Ok(tau) = path::interception_time(&planner, position, time, bs, uav_speed) {
                    let w = Waypoint::new(bs.position_at(time + tau), time + tau);
                    let a = b.add_vertex(VertexKind::Station { station: si, role: StationRole::Arrival, index: 0 }, w);
                    b.add_edge(v, a, EdgeKind::Arrival);
                    station_members[si].push(a);
                }
            }
        }
        for (ti, ok) in has_departure.iter().enumerate() {
            if !ok {
                warnings.push(GraphWarning::UnreachableTask { task_id: mission.tasks[ti].id.clone() });
            }
        }

        // dwell chains
        for members in station_members.iter_mut() {
            members.sort_by(|&x, &y| {
                let (vx, vy) = (&b.vertices[x], &b.vertices[y]);
                vx.time().total_cmp(&vy.time()).then(vx.order_rank().cmp(&vy.order_rank())).then(x.cmp(&y))
            });
            for (pos, &id) in members.iter().enumerate() {
                if let VertexKind::Station { index, .. } = &mut b.vertices[id].kind {
                    *index = pos;
                }
            }
            for pair in members.windows(2) {
                b.add_edge(pair[0], pair[1], EdgeKind::Dwell);
            }
        }

        // hops between stations
        for (si, members) in station_members.iter().enumerate() {
            for &u in members {
                for (sj, others) in station_members.iter().enumerate() {
                    if si == sj {
                        continue;
                    }
                    if let Some(w) = b.first_reachable(u, others) {
                        b.add_edge(u, w, EdgeKind::CrossStation);
                    }
                }
            }
        }

        // first-reachable hops between tasks; a task's last vertex may hand over to the
        // first vertex of another task starting at the same instant
        for (ti, from_ids) in task_vertices.iter().enumerate() {
            for (tj, to_ids) in task_vertices.iter().enumerate() {
                if ti == tj {
                    continue;
                }
                for (k, &u) in from_ids.iter().enumerate() {
                    let is_last = k + 1 == from_ids.len();
                    let first = to_ids[0];
                    let handover = is_last
                        && (b.vertices[first].time() - b.vertices[u].time()).abs() <= TIME_EPS
                        && b.reachable(u, first);
                    let target = if handover { Some(first) } else { b.first_reachable(u, to_ids) };
                    if let Some(w) = target {
                        b.add_edge(u, w, EdgeKind::CrossTask);
                    }
                }
            }
        }

        let Builder { vertices, edges, .. } = b;
        let mut outgoing = vec![Vec::new(); vertices.len()];
        let mut incoming = vec![Vec::new(); vertices.len()];
        for e in &edges {
            outgoing[e.from].push(e.id);
            incoming[e.to].push(e.id);
        }
        let order = kahn_order(&vertices, &edges, &outgoing)?;
        let mut rank = vec![0usize; vertices.len()];
        for (i, &v) in order.iter().enumerate() {
            rank[v] = i;
        }
        for out in outgoing.iter_mut() {
            out.sort_by_key(|&e| (rank[edges[e].to], e));
        }

        let return_time = vertices
            .iter()
            .map(|v| match v.kind {
                VertexKind::Station { .. } => 0.0,
                VertexKind::Task { .. } => {
                    path::return_cost(&planner, v.waypoint.position, v.time(), stations, uav_speed)
                        .map_or(f64::INFINITY, |(tau, _)| tau)
                }
            })
            .collect();

        Ok(DiscretizationGraph {
            vertices,
            edges,
            outgoing,
            incoming,
            order,
            return_time,
            task_vertices,
            station_vertices: station_members,
            tasks: mission.tasks.clone(),
            stations: stations.clone(),
            alpha,
            speed: uav_speed,
            planner,
            warnings,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn outgoing(&self, v: VertexId) -> &[EdgeId] {
        &self.outgoing[v]
    }

    pub fn incoming(&self, v: VertexId) -> &[EdgeId] {
        &self.incoming[v]
    }

    pub fn find_edge(&self, from: VertexId, to: VertexId) -> Option<&Edge> {
        self.outgoing[from].iter().map(|&e| &self.edges[e]).find(|e| e.to == to)
    }

    /// Vertices by time; ties by (departure, task, arrival) then id. Every edge points forward.
    pub fn topological_order(&self) -> &[VertexId] {
        &self.order
    }

    /// Battery-seconds needed to intercept the nearest station from this vertex.
    pub fn return_time(&self, v: VertexId) -> f64 {
        self.return_time[v]
    }

    pub fn task_vertices(&self, task: usize) -> &[VertexId] {
        &self.task_vertices[task]
    }

    /// Vertices of one station in dwell-chain order.
    pub fn station_vertices(&self, station: usize) -> &[VertexId] {
        &self.station_vertices[station]
    }

    pub fn tasks(&self) -> &[ShootingTask] {
        &self.tasks
    }

    pub fn stations(&self) -> &[BaseStation] {
        &self.stations
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn planner(&self) -> &PathPlanner {
        &self.planner
    }

    pub fn warnings(&self) -> &[GraphWarning] {
        &self.warnings
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    /// Filming values with nothing covered.
    pub fn view(&self) -> FilmingView<'_> {
        FilmingView {
            graph: self,
            filming: self.edges.iter().map(|e| e.filming_value).collect(),
            covered: vec![Vec::new(); self.tasks.len()],
        }
    }

    /// Filming values after removing `covered` task time: fully covered film edges drop
    /// to zero and partially covered ones keep only their uncovered measure.
    pub fn zero_filming(&self, covered: &[(String, TimeInterval)]) -> FilmingView<'_> {
        let mut per_task = vec![Vec::new(); self.tasks.len()];
        for (id, iv) in covered {
            if let Some(ti) = self.task_index(id) {
                per_task[ti].push(*iv);
            }
        }
        let per_task: Vec<Vec<TimeInterval>> = per_task.iter().map(|c| interval::merge(c)).collect();
        let filming = self
            .edges
            .iter()
            .map(|e| match (e.kind, self.vertices[e.from].task()) {
                (EdgeKind::Film, Some(ti)) if !per_task[ti].is_empty() => {
                    let span = TimeInterval { start: self.vertices[e.from].time(), end: self.vertices[e.to].time() };
                    interval::uncovered_length(&span, &per_task[ti])
                }
                _ => e.filming_value,
            })
            .collect();
        FilmingView { graph: self, filming, covered: per_task }
    }

    /// Plain-text adjacency listing for fixtures and diffing.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# alpha={} speed={} vertices={} edges={}",
            self.alpha,
            self.speed,
            self.vertices.len(),
            self.edges.len()
        );
        for &v in &self.order {
            let vx = &self.vertices[v];
            let kind = match vx.kind {
                VertexKind::Task { task, index } => format!("task:{}[{}]", self.tasks[task].id, index),
                VertexKind::Station { station, role, index } => {
                    let role = match role {
                        StationRole::Departure => "departure",
                        StationRole::Arrival => "arrival",
                    };
                    format!("station:{}:{}[{}]", self.stations[station].id, role, index)
                }
            };
            let p = vx.waypoint.position;
            let _ = writeln!(out, "{v}, {kind}, {:.6}, {:.6}, {:.6}, {:.6}", vx.time(), p.x, p.y, p.z);
            for &e in &self.outgoing[v] {
                let e = &self.edges[e];
                let _ = writeln!(
                    out,
                    "  edges: {}, {:.6}, {:.6}, {:.6}",
                    e.to, e.travel_time, e.filming_value, e.battery_cost
                );
            }
        }
        out
    }
}

fn kahn_order(vertices: &[Vertex], edges: &[Edge], outgoing: &[Vec<EdgeId>]) -> Result<Vec<VertexId>, GraphError> {
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    struct Key(OrdF64, u8, VertexId);
    #[derive(PartialEq)]
    struct OrdF64(f64);
    impl Eq for OrdF64 {}
    impl PartialOrd for OrdF64 {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for OrdF64 {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0)
        }
    }

    let mut indegree = vec![0usize; vertices.len()];
    for e in edges {
        indegree[e.to] += 1;
    }
    let key = |v: VertexId| Reverse(Key(OrdF64(vertices[v].time()), vertices[v].order_rank(), v));
    let mut ready: BinaryHeap<_> = (0..vertices.len()).filter(|&v| indegree[v] == 0).map(key).collect();
    let mut order = Vec::with_capacity(vertices.len());
    while let Some(Reverse(Key(_, _, v))) = ready.pop() {
        order.push(v);
        for &e in &outgoing[v] {
            let to = edges[e].to;
            indegree[to] -= 1;
            if indegree[to] == 0 {
                ready.push(key(to));
            }
        }
    }
    if order.len() != vertices.len() {
        return Err(GraphError::Cyclic);
    }
    Ok(order)
}

/// Per-invocation filming values over an immutable graph.
#[derive(Debug, Clone)]
pub struct FilmingView<'g> {
    graph: &'g DiscretizationGraph,
    filming: Vec<f64>,
    covered: Vec<Vec<TimeInterval>>,
}

impl<'g> FilmingView<'g> {
    pub fn graph(&self) -> &'g DiscretizationGraph {
        self.graph
    }

    pub fn filming(&self, edge: EdgeId) -> f64 {
        self.filming[edge]
    }

    /// Merged covered intervals of one task in this view.
    pub fn covered(&self, task: usize) -> &[TimeInterval] {
        &self.covered[task]
    }

    /// Interval of `task` newly filmed by traversing film edge `edge` in this view.
    pub fn newly_covered(&self, edge: EdgeId) -> Vec<TimeInterval> {
        let e = self.graph.edge(edge);
        let Some(task) = self.graph.vertex(e.from).task() else {
            return Vec::new();
        };
        if e.kind != EdgeKind::Film {
            return Vec::new();
        }
        let span = TimeInterval { start: self.graph.vertex(e.from).time(), end: self.graph.vertex(e.to).time() };
        interval::subtract(&span, &self.covered[task])
    }
}

/// Checks that every edge goes forward in `order`; used by tests and the property suite.
pub fn order_is_topological(graph: &DiscretizationGraph, order: &[VertexId]) -> bool {
    let mut rank = vec![usize::MAX; graph.vertices().len()];
    for (i, &v) in order.iter().enumerate() {
        rank[v] = i;
    }
    order.len() == graph.vertices().len() && graph.edges().iter().all(|e| rank[e.from] < rank[e.to])
}
