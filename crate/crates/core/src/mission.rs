//! Mission domain: shooting tasks, base stations, UAVs, and the mission JSON document.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::interval::{self, TimeInterval};
use crate::path::MapSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    #[error("malformed mission document at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid mission at `{path}`: {message}")]
    Invalid { path: String, message: String },
}

impl MissionError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        MissionError::Invalid { path: path.into(), message: message.into() }
    }

    /// Field path the error refers to.
    pub fn path(&self) -> &str {
        match self {
            MissionError::Parse { path, .. } | MissionError::Invalid { path, .. } => path,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("time {t} is outside task `{task}` span [{start}, {end}]")]
pub struct OutOfSpan {
    pub task: String,
    pub t: f64,
    pub start: f64,
    pub end: f64,
}

/// Camera position `position` required at mission time `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "WaypointDoc", into = "WaypointDoc")]
pub struct Waypoint {
    pub position: Vec3,
    pub time: f64,
}

impl Waypoint {
    pub const fn new(position: Vec3, time: f64) -> Self {
        Self { position, time }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointDoc {
    x: f64,
    y: f64,
    z: f64,
    t: f64,
}

impl From<WaypointDoc> for Waypoint {
    fn from(d: WaypointDoc) -> Self {
        Waypoint::new(Vec3::new(d.x, d.y, d.z), d.t)
    }
}

impl From<Waypoint> for WaypointDoc {
    fn from(w: Waypoint) -> Self {
        WaypointDoc { x: w.position.x, y: w.position.y, z: w.position.z, t: w.time }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShotType {
    Static,
    Chase,
    Flyby,
    Orbit,
    Lateral,
    Establish,
}

impl fmt::Display for ShotType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingTask {
    pub id: String,
    pub shot_type: ShotType,
    pub waypoints: Vec<Waypoint>,
}

impl ShootingTask {
    pub fn start(&self) -> f64 {
        self.waypoints[0].time
    }

    pub fn end(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].time
    }

    pub fn span(&self) -> TimeInterval {
        TimeInterval { start: self.start(), end: self.end() }
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    /// Camera position at `t`, linearly interpolated between the bracketing waypoints.
    pub fn position_at(&self, t: f64) -> Result<Vec3, OutOfSpan> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(OutOfSpan { task: self.id.clone(), t, start: self.start(), end: self.end() });
        }
        Ok(interpolate(&self.waypoints, t))
    }

    /// The part of the task between `from` and `to`, with interpolated boundary waypoints.
    pub fn slice(&self, from: f64, to: f64) -> ShootingTask {
        let from = from.max(self.start());
        let to = to.min(self.end());
        let mut waypoints = vec![Waypoint::new(interpolate(&self.waypoints, from), from)];
        waypoints.extend(self.waypoints.iter().filter(|w| w.time > from && w.time < to).copied());
        waypoints.push(Waypoint::new(interpolate(&self.waypoints, to), to));
        ShootingTask { id: self.id.clone(), shot_type: self.shot_type, waypoints }
    }
}

/// Linear interpolation along a time-ordered waypoint list, clamped at both ends.
pub(crate) fn interpolate(waypoints: &[Waypoint], t: f64) -> Vec3 {
    let first = &waypoints[0];
    if t <= first.time || waypoints.len() == 1 {
        return first.position;
    }
    let idx = waypoints.partition_point(|w| w.time <= t);
    if idx >= waypoints.len() {
        return waypoints[waypoints.len() - 1].position;
    }
    let (a, b) = (&waypoints[idx - 1], &waypoints[idx]);
    if t == a.time {
        return a.position;
    }
    let s = (t - a.time) / (b.time - a.time);
    a.position.lerp(b.position, s)
}

/// Residual fragments of `task` after removing `covered`; fragments shorter than
/// `min_duration` are dropped. Fragments keep the parent's id and shot type.
pub fn subtract_covered(task: &ShootingTask, covered: &[TimeInterval], min_duration: f64) -> Vec<ShootingTask> {
    if covered.is_empty() {
        return vec![task.clone()];
    }
    interval::subtract(&task.span(), covered)
        .into_iter()
        .filter(|piece| piece.length() >= min_duration && piece.length() > 0.0)
        .map(|piece| task.slice(piece.start, piece.end))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub id: String,
    /// A single entry denotes a static station.
    pub trajectory: Vec<Waypoint>,
    #[serde(default)]
    pub recharge_delay: f64,
}

impl BaseStation {
    pub fn fixed(id: impl Into<String>, position: Vec3) -> Self {
        Self { id: id.into(), trajectory: vec![Waypoint::new(position, 0.0)], recharge_delay: 0.0 }
    }

    pub fn is_static(&self) -> bool {
        self.trajectory.len() == 1 || self.max_speed() == 0.0
    }

    /// Station position at `t`; before the first and after the last waypoint it holds still.
    pub fn position_at(&self, t: f64) -> Vec3 {
        interpolate(&self.trajectory, t)
    }

    pub fn max_speed(&self) -> f64 {
        self.trajectory
            .windows(2)
            .map(|w| w[0].position.distance(w[1].position) / (w[1].time - w[0].time))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateDoc {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub battery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpec {
    pub id: String,
    /// Seconds of flight on a full charge.
    pub battery_endurance: f64,
    /// Meters per second.
    pub cruise_speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateDoc>,
}

impl UavSpec {
    pub fn new(id: impl Into<String>, battery_endurance: f64, cruise_speed: f64) -> Self {
        Self { id: id.into(), battery_endurance, cruise_speed, initial_state: None }
    }
}

/// Where a UAV is, when, and how many seconds of flight it has left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub uav_id: String,
    pub position: Vec3,
    pub clock: f64,
    pub battery_remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mission {
    #[serde(default)]
    pub epoch: f64,
    pub tasks: Vec<ShootingTask>,
    pub base_stations: Vec<BaseStation>,
    pub uavs: Vec<UavSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
}

impl Mission {
    /// Parses and validates a mission JSON document.
    pub fn load(content: &[u8]) -> Result<Mission, MissionError> {
        let de = &mut serde_json::Deserializer::from_slice(content);
        let mission: Mission = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            MissionError::Parse { path, message: e.into_inner().to_string() }
        })?;
        mission.validate()?;
        Ok(mission)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mission serializes")
    }

    pub fn total_task_duration(&self) -> f64 {
        self.tasks.iter().map(ShootingTask::duration).fold(0.0, |a, b| a + b)
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn uav(&self, id: &str) -> Option<&UavSpec> {
        self.uavs.iter().find(|u| u.id == id)
    }

    /// Start state of every UAV: its declared initial state, or parked at the first
    /// base station at the epoch with a full battery.
    pub fn initial_states(&self) -> Vec<UavState> {
        self.uavs
            .iter()
            .map(|u| match u.initial_state {
                Some(s) => UavState {
                    uav_id: u.id.clone(),
                    position: Vec3::new(s.x, s.y, s.z),
                    clock: s.t,
                    battery_remaining: s.battery,
                },
                None => UavState {
                    uav_id: u.id.clone(),
                    position: self.base_stations[0].position_at(self.epoch),
                    clock: self.epoch,
                    battery_remaining: u.battery_endurance,
                },
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), MissionError> {
        if !self.epoch.is_finite() {
            return Err(MissionError::invalid("epoch", "epoch must be finite"));
        }
        let mut ids = HashSet::new();
        for (i, task) in self.tasks.iter().enumerate() {
            let path = format!("tasks[{i}]");
            if !ids.insert(task.id.as_str()) {
                return Err(MissionError::invalid(format!("{path}.id"), format!("duplicate task id `{}`", task.id)));
            }
            if task.waypoints.len() < 2 {
                return Err(MissionError::invalid(format!("{path}.waypoints"), "a task needs at least 2 waypoints"));
            }
            check_waypoints(&task.waypoints, &format!("{path}.waypoints"))?;
        }

        if self.base_stations.is_empty() {
            return Err(MissionError::invalid("base_stations", "at least one base station is required"));
        }
        let mut ids = HashSet::new();
        for (i, bs) in self.base_stations.iter().enumerate() {
            let path = format!("base_stations[{i}]");
            if !ids.insert(bs.id.as_str()) {
                return Err(MissionError::invalid(
                    format!("{path}.id"),
                    format!("duplicate base station id `{}`", bs.id),
                ));
            }
            if bs.trajectory.is_empty() {
                return Err(MissionError::invalid(format!("{path}.trajectory"), "trajectory is empty"));
            }
            check_waypoints(&bs.trajectory, &format!("{path}.trajectory"))?;
            if !(bs.recharge_delay >= 0.0 && bs.recharge_delay.is_finite()) {
                return Err(MissionError::invalid(format!("{path}.recharge_delay"), "recharge delay must be >= 0"));
            }
        }

        if self.uavs.is_empty() {
            return Err(MissionError::invalid("uavs", "at least one UAV is required"));
        }
        let mut ids = HashSet::new();
        for (i, uav) in self.uavs.iter().enumerate() {
            let path = format!("uavs[{i}]");
            if !ids.insert(uav.id.as_str()) {
                return Err(MissionError::invalid(format!("{path}.id"), format!("duplicate UAV id `{}`", uav.id)));
            }
            if !(uav.battery_endurance > 0.0 && uav.battery_endurance.is_finite()) {
                return Err(MissionError::invalid(format!("{path}.battery_endurance"), "must be > 0"));
            }
            if !(uav.cruise_speed > 0.0 && uav.cruise_speed.is_finite()) {
                return Err(MissionError::invalid(format!("{path}.cruise_speed"), "must be > 0"));
            }
            if let Some(s) = &uav.initial_state {
                if !(s.x.is_finite() && s.y.is_finite() && s.z.is_finite() && s.t.is_finite()) {
                    return Err(MissionError::invalid(format!("{path}.initial_state"), "non-finite initial state"));
                }
                if !(s.battery >= 0.0 && s.battery <= uav.battery_endurance) {
                    return Err(MissionError::invalid(
                        format!("{path}.initial_state.battery"),
                        "battery must lie in [0, battery_endurance]",
                    ));
                }
            }
            for (j, bs) in self.base_stations.iter().enumerate() {
                if bs.max_speed() >= uav.cruise_speed {
                    return Err(MissionError::invalid(
                        format!("base_stations[{j}].trajectory"),
                        format!("station speed {:.3} m/s is not below UAV `{}` cruise speed", bs.max_speed(), uav.id),
                    ));
                }
            }
        }

        if let Some(map) = &self.map {
            map.validate().map_err(|m| MissionError::invalid("map", m))?;
            for (i, task) in self.tasks.iter().enumerate() {
                for (j, w) in task.waypoints.iter().enumerate() {
                    if !map.contains(w.position) {
                        return Err(MissionError::invalid(
                            format!("tasks[{i}].waypoints[{j}]"),
                            "waypoint lies outside the map",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_waypoints(waypoints: &[Waypoint], path: &str) -> Result<(), MissionError> {
    for (j, w) in waypoints.iter().enumerate() {
        if !w.position.is_finite() {
            return Err(MissionError::invalid(format!("{path}[{j}]"), "non-finite position"));
        }
        if !(w.time.is_finite() && w.time >= 0.0) {
            return Err(MissionError::invalid(format!("{path}[{j}].t"), "time must be finite and non-negative"));
        }
        if j > 0 && w.time <= waypoints[j - 1].time {
            return Err(MissionError::invalid(format!("{path}[{j}].t"), "non-increasing waypoint times"));
        }
    }
    Ok(())
}
