//! Grid A* around no-fly zones, travel-time estimates, and base-station interception.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::mission::BaseStation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("point ({x:.2}, {y:.2}) lies outside the map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("point ({x:.2}, {y:.2}) lies inside a no-fly cell")]
    Blocked { x: f64, y: f64 },
    #[error("no path between ({0:.2}, {1:.2}) and ({2:.2}, {3:.2})")]
    Unreachable(f64, f64, f64, f64),
    #[error("no base station can be reached")]
    NoStation,
    #[error("interception search did not converge")]
    NoInterception,
}

/// Map sub-document of the mission file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    /// Polygons as vertex lists in meters.
    #[serde(default)]
    pub no_fly_zones: Vec<Vec<[f64; 2]>>,
}

impl MapSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err("cell_size must be > 0".into());
        }
        if self.width == 0 || self.height == 0 {
            return Err("width and height must be positive".into());
        }
        if let Some(z) = self.no_fly_zones.iter().position(|p| p.len() < 3) {
            return Err(format!("no_fly_zones[{z}] needs at least 3 vertices"));
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let (x1, y1) =
            (self.origin[0] + self.width as f64 * self.cell_size, self.origin[1] + self.height as f64 * self.cell_size);
        p.x >= self.origin[0] && p.x <= x1 && p.y >= self.origin[1] && p.y <= y1
    }
}

pub type Cell = (usize, usize);

/// Occupancy grid with conservatively rasterized no-fly zones.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    blocked: Vec<bool>,
}

impl GridMap {
    pub fn open(origin: [f64; 2], cell_size: f64, width: usize, height: usize) -> Self {
        Self { origin, cell_size, width, height, blocked: vec![false; width * height] }
    }

    pub fn from_spec(spec: &MapSpec) -> Self {
        let mut map = GridMap::open(spec.origin, spec.cell_size, spec.width, spec.height);
        for poly in &spec.no_fly_zones {
            for cy in 0..map.height {
                for cx in 0..map.width {
                    let (x0, y0) = map.cell_corner((cx, cy));
                    let rect = [x0, y0, x0 + map.cell_size, y0 + map.cell_size];
                    if polygon_touches_rect(poly, rect) {
                        map.set_blocked((cx, cy), true);
                    }
                }
            }
        }
        map
    }

    pub fn set_blocked(&mut self, cell: Cell, blocked: bool) {
        let i = cell.1 * self.width + cell.0;
        self.blocked[i] = blocked;
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.blocked[cell.1 * self.width + cell.0]
    }

    pub fn blocked_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| (x, y))).filter(|&c| self.is_blocked(c))
    }

    fn cell_corner(&self, cell: Cell) -> (f64, f64) {
        (self.origin[0] + cell.0 as f64 * self.cell_size, self.origin[1] + cell.1 as f64 * self.cell_size)
    }

    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        let (x, y) = self.cell_corner(cell);
        (x + 0.5 * self.cell_size, y + 0.5 * self.cell_size)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Result<Cell, PathError> {
        let fx = (x - self.origin[0]) / self.cell_size;
        let fy = (y - self.origin[1]) / self.cell_size;
        let inside = fx >= 0.0 && fy >= 0.0 && fx <= self.width as f64 && fy <= self.height as f64;
        if !inside {
            return Err(PathError::OutOfBounds { x, y });
        }
        Ok(((fx as usize).min(self.width - 1), (fy as usize).min(self.height - 1)))
    }

    /// 8-connected neighbours with step costs in cell units. Diagonal moves may not
    /// cut the corner of a blocked cell.
    pub fn neighbours(&self, cell: Cell) -> impl Iterator<Item = (Cell, f64)> + '_ {
        const STEPS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        STEPS.iter().filter_map(move |&(dx, dy)| {
            let nx = cell.0 as i64 + dx;
            let ny = cell.1 as i64 + dy;
            if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
                return None;
            }
            let next = (nx as usize, ny as usize);
            if self.is_blocked(next) {
                return None;
            }
            if dx != 0 && dy != 0 {
                let side_a = ((cell.0 as i64 + dx) as usize, cell.1);
                let side_b = (cell.0, (cell.1 as i64 + dy) as usize);
                if self.is_blocked(side_a) || self.is_blocked(side_b) {
                    return None;
                }
                Some((next, std::f64::consts::SQRT_2))
            } else {
                Some((next, 1.0))
            }
        })
    }
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    seq: u64,
    cell: Cell,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (f, h, insertion order)
        other.f.total_cmp(&self.f).then(other.h.total_cmp(&self.h)).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over the grid; returns the cell sequence and its octile cost in cell units.
pub fn astar(map: &GridMap, start: Cell, goal: Cell) -> Option<(Vec<Cell>, f64)> {
    if map.is_blocked(start) || map.is_blocked(goal) {
        return None;
    }
    let idx = |c: Cell| c.1 * map.width + c.0;
    let mut g = vec![f64::INFINITY; map.width * map.height];
    let mut parent: Vec<Option<Cell>> = vec![None; map.width * map.height];
    let mut closed = vec![false; map.width * map.height];
    let mut open = BinaryHeap::new();
    let mut seq = 0;
    g[idx(start)] = 0.0;
    open.push(Open { f: octile(start, goal), h: octile(start, goal), seq, cell: start });
    while let Some(Open { cell, .. }) = open.pop() {
        if closed[idx(cell)] {
            continue;
        }
        if cell == goal {
            let mut cells = vec![goal];
            let mut cur = goal;
            while let Some(p) = parent[idx(cur)] {
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            return Some((cells, g[idx(goal)]));
        }
        closed[idx(cell)] = true;
        for (next, step) in map.neighbours(cell) {
            let cand = g[idx(cell)] + step;
            if cand < g[idx(next)] {
                g[idx(next)] = cand;
                parent[idx(next)] = Some(cell);
                seq += 1;
                let h = octile(next, goal);
                open.push(Open { f: cand + h, h, seq, cell: next });
            }
        }
    }
    None
}

/// Route estimate between two points.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEstimate {
    /// Exact start, cell centers along the route, exact goal.
    pub waypoints: Vec<Vec3>,
    pub length: f64,
    pub travel_time: f64,
    /// Seconds of flight; consumption is one battery-second per flight-second.
    pub battery_cost: f64,
}

/// Path planner bound to an optional map, caching grid costs per cell pair.
#[derive(Debug, Default)]
pub struct PathPlanner {
    map: Option<GridMap>,
    cache: RwLock<HashMap<(Cell, Cell), Option<f64>>>,
}

impl Clone for PathPlanner {
    fn clone(&self) -> Self {
        PathPlanner::new(self.map.clone())
    }
}

impl PathPlanner {
    pub fn new(map: Option<GridMap>) -> Self {
        Self { map, cache: RwLock::new(HashMap::new()) }
    }

    pub fn straight() -> Self {
        Self::new(None)
    }

    pub fn map(&self) -> Option<&GridMap> {
        self.map.as_ref()
    }

    fn grid_cost(&self, map: &GridMap, a: Cell, b: Cell) -> Option<f64> {
        if let Some(hit) = self.cache.read().expect("path cache poisoned").get(&(a, b)) {
            return *hit;
        }
        let cost = astar(map, a, b).map(|(_, c)| c * map.cell_size);
        self.cache.write().expect("path cache poisoned").insert((a, b), cost);
        cost
    }

    fn endpoint_cells(&self, map: &GridMap, from: Vec3, to: Vec3) -> Result<(Cell, Cell), PathError> {
        let a = map.cell_of(from.x, from.y)?;
        let b = map.cell_of(to.x, to.y)?;
        if map.is_blocked(a) {
            return Err(PathError::Blocked { x: from.x, y: from.y });
        }
        if map.is_blocked(b) {
            return Err(PathError::Blocked { x: to.x, y: to.y });
        }
        Ok((a, b))
    }

    /// Horizontal route length: exact endpoint offsets to their cell centers plus the
    /// octile grid cost between centers (direct segment when both share a cell).
    fn horizontal_length(&self, from: Vec3, to: Vec3) -> Result<f64, PathError> {
        let Some(map) = &self.map else {
            return Ok((to - from).horizontal_norm());
        };
        let (a, b) = self.endpoint_cells(map, from, to)?;
        if a == b {
            return Ok((to - from).horizontal_norm());
        }
        let grid = self.grid_cost(map, a, b).ok_or(PathError::Unreachable(from.x, from.y, to.x, to.y))?;
        let (ax, ay) = map.cell_center(a);
        let (bx, by) = map.cell_center(b);
        Ok((from.x - ax).hypot(from.y - ay) + grid + (to.x - bx).hypot(to.y - by))
    }

    /// Route length in meters (horizontal route combined with altitude change).
    pub fn length(&self, from: Vec3, to: Vec3) -> Result<f64, PathError> {
        Ok(self.horizontal_length(from, to)?.hypot(to.z - from.z))
    }

    pub fn travel_time(&self, from: Vec3, to: Vec3, speed: f64) -> Result<f64, PathError> {
        Ok(self.length(from, to)? / speed)
    }

    /// Full route with waypoints; without a map this is the straight segment.
    pub fn plan_path(&self, from: Vec3, to: Vec3, speed: f64) -> Result<PathEstimate, PathError> {
        let mut waypoints = vec![from];
        if let Some(map) = &self.map {
            let (a, b) = self.endpoint_cells(map, from, to)?;
            if a != b {
                let (cells, _) = astar(map, a, b).ok_or(PathError::Unreachable(from.x, from.y, to.x, to.y))?;
                waypoints.extend(cells.iter().map(|&c| {
                    let (x, y) = map.cell_center(c);
                    Vec3::new(x, y, from.z)
                }));
            }
        }
        waypoints.push(to);
        let length = self.length(from, to)?;
        // spread the altitude change along the route
        let legs: Vec<f64> = waypoints.windows(2).map(|w| (w[1] - w[0]).horizontal_norm()).collect();
        let total: f64 = legs.iter().sum();
        let mut run = 0.0;
        for (i, leg) in legs.iter().enumerate() {
            run += leg;
            if i + 1 < waypoints.len() - 1 {
                let s = if total > 0.0 { run / total } else { 0.0 };
                waypoints[i + 1].z = from.z + (to.z - from.z) * s;
            }
        }
        let travel_time = length / speed;
        Ok(PathEstimate { waypoints, length, travel_time, battery_cost: travel_time })
    }
}

fn solve_fixed_point(mut residual: impl FnMut(f64) -> Result<f64, PathError>) -> Result<f64, PathError> {
    // residual(τ) = travel(τ) − τ; residual(0) ≥ 0 and it eventually turns negative.
    let r0 = residual(0.0)?;
    if r0 <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = r0.max(1.0);
    let mut doublings = 0;
    while residual(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(PathError::NoInterception);
        }
    }
    for _ in 0..200 {
        if hi - lo < 1e-7 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if residual(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Flight time to intercept `station` starting from `position` at `clock`.
pub fn interception_time(
    planner: &PathPlanner,
    position: Vec3,
    clock: f64,
    station: &BaseStation,
    speed: f64,
) -> Result<f64, PathError> {
    if station.is_static() {
        return planner.travel_time(position, station.position_at(clock), speed);
    }
    solve_fixed_point(|tau| Ok(planner.travel_time(position, station.position_at(clock + tau), speed)? - tau))
}

/// How long before `arrival` a UAV must leave `station` to reach `target` exactly at `arrival`.
pub fn departure_lead(
    planner: &PathPlanner,
    target: Vec3,
    arrival: f64,
    station: &BaseStation,
    speed: f64,
) -> Result<f64, PathError> {
    if station.is_static() {
        return planner.travel_time(station.position_at(arrival), target, speed);
    }
    solve_fixed_point(|sigma| Ok(planner.travel_time(station.position_at(arrival - sigma), target, speed)? - sigma))
}

/// Minimum interception time over all stations, with the index of the arg-min station.
pub fn return_cost(
    planner: &PathPlanner,
    position: Vec3,
    clock: f64,
    stations: &[BaseStation],
    speed: f64,
) -> Result<(f64, usize), PathError> {
    let mut best: Option<(f64, usize)> = None;
    for (i, bs) in stations.iter().enumerate() {
        if let Ok(tau) = interception_time(planner, position, clock, bs, speed) {
            if best.is_none_or(|(b, _)| tau < b) {
                best = Some((tau, i));
            }
        }
    }
    best.ok_or(PathError::NoStation)
}

fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segments_touch(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    }
    fn on_segment(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
        c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// True when the polygon overlaps or touches the rectangle `[x0, y0, x1, y1]`.
fn polygon_touches_rect(poly: &[[f64; 2]], rect: [f64; 4]) -> bool {
    let [x0, y0, x1, y1] = rect;
    if poly.iter().any(|p| p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1) {
        return true;
    }
    let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    if corners.iter().any(|c| point_in_polygon(poly, c[0], c[1])) {
        return true;
    }
    let n = poly.len();
    (0..n).any(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        (0..4).any(|k| segments_touch(a, b, corners[k], corners[(k + 1) % 4]))
    })
}
