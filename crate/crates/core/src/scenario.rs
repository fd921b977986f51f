//! Seeded mission generation: longitudinal task sets along a straight route, mixed shot
//! types around moving targets, and the shot constructors themselves.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::mission::{BaseStation, Mission, ShootingTask, ShotType, UavSpec, Waypoint};

const RETRIES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator parameter `{name}`: {message}")]
    InvalidParams { name: &'static str, message: String },
    #[error("task `{task}` needs {speed:.3} m/s between t={from:.3} and t={to:.3}, above the UAV limit {limit:.3}")]
    TooFast { task: String, from: f64, to: f64, speed: f64, limit: f64 },
    #[error("could not place {n} tasks with at most {x} active")]
    Unsatisfiable { n: usize, x: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub target_speed_range: [f64; 2],
    pub uav_speed: f64,
    pub battery: f64,
    /// Longest target travel during one shot, meters.
    pub shot_length_max: f64,
    pub shot_duration_range: [f64; 2],
    pub route_length: f64,
    /// Tasks start within `[0, horizon]`.
    pub horizon: f64,
    /// Waypoint sampling step of the shot constructors, seconds.
    pub sample_step: f64,
    pub uav_count: usize,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            target_speed_range: [1.0, 2.0],
            uav_speed: 3.0,
            battery: 900.0,
            shot_length_max: 80.0,
            shot_duration_range: [30.0, 70.0],
            route_length: 500.0,
            horizon: 300.0,
            sample_step: 5.0,
            uav_count: 1,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |name, message: &str| Err(GenError::InvalidParams { name, message: message.into() });
        let [s0, s1] = self.target_speed_range;
        if !(s0 > 0.0 && s0 <= s1) {
            return bad("target_speed_range", "needs 0 < min <= max");
        }
        let [d0, d1] = self.shot_duration_range;
        if !(d0 > 0.0 && d0 <= d1) {
            return bad("shot_duration_range", "needs 0 < min <= max");
        }
        for (name, v) in [
            ("uav_speed", self.uav_speed),
            ("battery", self.battery),
            ("shot_length_max", self.shot_length_max),
            ("route_length", self.route_length),
            ("sample_step", self.sample_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, "must be positive");
            }
        }
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return bad("horizon", "must be >= 0");
        }
        if s1 >= self.uav_speed {
            return bad("target_speed_range", "targets must be slower than the UAVs");
        }
        if self.uav_count == 0 {
            return bad("uav_count", "must be >= 1");
        }
        Ok(())
    }
}

/// Target on a straight line with piecewise-constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrack {
    pub start: Vec3,
    /// Heading angle in the horizontal plane, radians.
    pub heading: f64,
    pub t0: f64,
    /// Speed held during each `step` seconds from `t0`.
    pub speeds: Vec<f64>,
    pub step: f64,
}

impl TargetTrack {
    pub fn constant(start: Vec3, heading: f64, t0: f64, speed: f64) -> Self {
        Self { start, heading, t0, speeds: vec![speed], step: f64::INFINITY }
    }

    pub fn direction(&self) -> Vec3 {
        Vec3::new(self.heading.cos(), self.heading.sin(), 0.0)
    }

    /// Horizontal unit vector to the left of the heading.
    pub fn normal(&self) -> Vec3 {
        Vec3::new(-self.heading.sin(), self.heading.cos(), 0.0)
    }

    /// Distance travelled since `t0`.
    pub fn travelled(&self, t: f64) -> f64 {
        let mut left = (t - self.t0).max(0.0);
        let mut d = 0.0;
        for (i, &v) in self.speeds.iter().enumerate() {
            let last = i + 1 == self.speeds.len();
            let span = if last { left } else { left.min(self.step) };
            d += v * span;
            left -= span;
            if left <= 0.0 {
                break;
            }
        }
        d
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        self.start + self.direction() * self.travelled(t)
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds.iter().copied().fold(0.0, f64::max)
    }
}

/// Camera placement relative to the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotGeometry {
    pub height: f64,
    pub behind: f64,
    pub side: f64,
    /// Flyby: distance behind at the start and ahead at the end.
    pub overtake: f64,
    pub orbit_radius: f64,
    pub step: f64,
    pub uav_speed: f64,
}

impl Default for ShotGeometry {
    fn default() -> Self {
        Self { height: 5.0, behind: 8.0, side: 8.0, overtake: 10.0, orbit_radius: 10.0, step: 5.0, uav_speed: 3.0 }
    }
}

fn sample_times(t0: f64, duration: f64, step: f64) -> Vec<f64> {
    let mut out = vec![t0];
    let mut k = 1.0;
    while k * step < duration - 1e-9 {
        out.push(t0 + k * step);
        k += 1.0;
    }
    out.push(t0 + duration);
    out
}

fn build_task(
    id: &str,
    shot_type: ShotType,
    t0: f64,
    duration: f64,
    g: &ShotGeometry,
    place: impl Fn(f64, f64) -> Vec3,
) -> Result<ShootingTask, GenError> {
    if !(duration > 0.0 && g.step > 0.0) {
        return Err(GenError::InvalidParams { name: "duration", message: "duration and step must be positive".into() });
    }
    let waypoints: Vec<Waypoint> = sample_times(t0, duration, g.step)
        .into_iter()
        .map(|t| Waypoint::new(place(t, (t - t0) / duration), t))
        .collect();
    for w in waypoints.windows(2) {
        let speed = w[0].position.distance(w[1].position) / (w[1].time - w[0].time);
        if speed > g.uav_speed + 1e-9 {
            return Err(GenError::TooFast {
                task: id.into(),
                from: w[0].time,
                to: w[1].time,
                speed,
                limit: g.uav_speed,
            });
        }
    }
    Ok(ShootingTask { id: id.into(), shot_type, waypoints })
}

fn lift(p: Vec3, h: f64) -> Vec3 {
    Vec3::new(p.x, p.y, h)
}

/// Hovers at one point beside the target's mid-shot position.
pub fn make_static(
    id: &str,
    track: &TargetTrack,
    t0: f64,
    duration: f64,
    g: &ShotGeometry,
) -> Result<ShootingTask, GenError> {
    let spot = lift(track.position_at(t0 + duration / 2.0) + track.normal() * g.side, g.height);
    build_task(id, ShotType::Static, t0, duration, g, |_, _| spot)
}

/// Follows `behind` meters behind the target at its speed.
pub fn make_chase(
    id: &str,
    track: &TargetTrack,
    t0: f64,
    duration: f64,
    g: &ShotGeometry,
) -> Result<ShootingTask, GenError> {
    let back = track.direction() * -g.behind;
    build_task(id, ShotType::Chase, t0, duration, g, |t, _| lift(track.position_at(t) + back, g.height))
}

/// Moves alongside the target at `side` meters.
pub fn make_lateral(
    id: &str,
    track: &TargetTrack,
    t0: f64,
    duration: f64,
    g: &ShotGeometry,
) -> Result<ShootingTask, GenError> {
    let off = track.normal() * g.side;
    build_task(id, ShotType::Lateral, t0, duration, g, |t, _| lift(track.position_at(t) + off, g.height))
}

/// Overtakes the target: from `overtake` meters behind to `overtake` meters ahead.
pub fn make_flyby(
    id: &str,
    track: &TargetTrack,
    t0: f64,
    duration: f64,
    g: &ShotGeometry,
) -> Result<ShootingTask, GenError> {
    let dir = track.direction();
    build_task(id, ShotType::Flyby, t0, duration, g, |t, s| {
        lift(track.position_at(t) + dir * (g.overtake * (2.0 * s - 1.0)), g.height)
    })
}

/// Semicircle around the target's mid-shot position, from one side of its path to the other.
pub fn make_orbit(
    id: &str,
    track: &TargetTrack,
    t0: f64,
    duration: f64,
    g: &ShotGeometry,
) -> Result<ShootingTask, GenError> {
    let center = track.position_at(t0 + duration / 2.0);
    let (dir, normal) = (track.direction(), track.normal());
    build_task(id, ShotType::Orbit, t0, duration, g, |_, s| {
        let a = PI * s;
        lift(center + normal * (g.orbit_radius * a.cos()) + dir * (g.orbit_radius * a.sin()), g.height)
    })
}

/// Closes in from 15 m behind at 10 m altitude to 5 m behind at 3 m altitude.
pub fn make_establish(
    id: &str,
    track: &TargetTrack,
    t0: f64,
    duration: f64,
    g: &ShotGeometry,
) -> Result<ShootingTask, GenError> {
    let dir = track.direction();
    build_task(id, ShotType::Establish, t0, duration, g, |t, s| {
        let behind = 15.0 + (5.0 - 15.0) * s;
        let height = 10.0 + (3.0 - 10.0) * s;
        lift(track.position_at(t) - dir * behind, height)
    })
}

/// Largest number of tasks whose spans contain a common instant. Spans are half-open,
/// so a task ending exactly when another starts does not overlap it.
pub fn max_active(spans: &[(f64, f64)]) -> usize {
    let mut events: Vec<(f64, i32)> = spans.iter().flat_map(|&(s, e)| [(s, 1), (e, -1)]).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut active = 0i32;
    let mut peak = 0i32;
    for (_, d) in events {
        active += d;
        peak = peak.max(active);
    }
    peak as usize
}

/// Start time for a task of length `duration` keeping at most `x` tasks active: up to
/// `RETRIES` uniform draws, then the earliest admissible start after the last draw.
fn place(rng: &mut ChaCha8Rng, spans: &[(f64, f64)], duration: f64, x: usize, horizon: f64) -> f64 {
    let fits = |s: f64| {
        let mut with: Vec<(f64, f64)> = spans.to_vec();
        with.push((s, s + duration));
        max_active(&with) <= x
    };
    let mut last = 0.0;
    for _ in 0..RETRIES {
        let s = rng.random_range(0.0..=horizon).round();
        if fits(s) {
            return s;
        }
        last = s;
    }
    let mut candidates: Vec<f64> = spans.iter().map(|&(_, e)| e).filter(|&e| e >= last).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.into_iter().find(|&s| fits(s)).unwrap_or_else(|| spans.iter().map(|&(_, e)| e).fold(last, f64::max))
}

fn base_mission(tasks: Vec<ShootingTask>, params: &GenParams) -> Mission {
    Mission {
        epoch: 0.0,
        tasks,
        base_stations: vec![BaseStation::fixed("bs0", Vec3::ZERO)],
        uavs: (0..params.uav_count)
            .map(|i| UavSpec::new(format!("uav{}", i + 1), params.battery, params.uav_speed))
            .collect(),
        map: None,
    }
}

/// `n` straight tasks along a route on the x axis with at most `x` active at once.
pub fn gen_longitudinal(n: usize, x: usize, params: &GenParams) -> Result<Mission, GenError> {
    params.validate()?;
    if n == 0 || x == 0 {
        return Err(GenError::InvalidParams { name: "n/x", message: "n and x must be >= 1".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let [d0, d1] = params.shot_duration_range;
    // time for a UAV to reach the far end of the route before the first shot
    let lead = (params.route_length / params.uav_speed).ceil();
    let max_len = params.shot_length_max.min(params.route_length);
    let mut spans = Vec::with_capacity(n);
    let mut tasks = Vec::with_capacity(n);
    for i in 0..n {
        let duration = rng.random_range(d0..=d1).round().max(1.0);
        let length = rng.random_range((max_len / 8.0)..=max_len).min(params.uav_speed * duration * 0.95);
        let from = rng.random_range(0.0..=(params.route_length - length));
        let forward = rng.random_bool(0.5);
        let (a, b) = if forward { (from, from + length) } else { (from + length, from) };
        let start = place(&mut rng, &spans, duration, x, params.horizon);
        spans.push((start, start + duration));
        tasks.push(ShootingTask {
            id: format!("T{}", i + 1),
            shot_type: ShotType::Chase,
            waypoints: vec![
                Waypoint::new(Vec3::new(a, 0.0, 5.0), lead + start),
                Waypoint::new(Vec3::new(b, 0.0, 5.0), lead + start + duration),
            ],
        });
    }
    if max_active(&spans) > x {
        return Err(GenError::Unsatisfiable { n, x });
    }
    Ok(base_mission(tasks, params))
}

/// `n` tasks of random shot types around randomly moving targets.
pub fn gen_shot_mix(n: usize, max_active: usize, params: &GenParams) -> Result<Mission, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let types: Vec<ShotType> = (0..n)
        .map(|_| [ShotType::Static, ShotType::Chase, ShotType::Flyby, ShotType::Orbit][rng.random_range(0..4)])
        .collect();
    shot_mix_with(&types, max_active, params, &mut rng)
}

/// Like [`gen_shot_mix`] with the shot types fixed in advance.
pub fn gen_shot_mix_forced(types: &[ShotType], max_active: usize, params: &GenParams) -> Result<Mission, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    shot_mix_with(types, max_active, params, &mut rng)
}

fn shot_mix_with(types: &[ShotType], x: usize, params: &GenParams, rng: &mut ChaCha8Rng) -> Result<Mission, GenError> {
    params.validate()?;
    if types.is_empty() || x == 0 {
        return Err(GenError::InvalidParams {
            name: "n/max_active",
            message: "need at least one task and max_active >= 1".into(),
        });
    }
    let [d0, d1] = params.shot_duration_range;
    let [s0, s1] = params.target_speed_range;
    let half = params.route_length / 2.0;
    let lead = (half * 2f64.sqrt() / params.uav_speed).ceil();
    let mut spans = Vec::with_capacity(types.len());
    let mut tasks = Vec::with_capacity(types.len());
    for (i, &shot) in types.iter().enumerate() {
        let duration = rng.random_range(d0..=d1).round().max(1.0);
        // keep the target's travel within the shot length limit
        let top = s1.min(params.shot_length_max / duration).max(s0);
        let pieces = (duration / params.sample_step).ceil() as usize;
        let speeds: Vec<f64> = (0..pieces.max(1)).map(|_| rng.random_range(s0..=top)).collect();
        let origin = Vec3::new(rng.random_range(-half..=half), rng.random_range(-half..=half), 0.0);
        let heading = rng.random_range(0.0..(2.0 * PI));
        let start = place(rng, &spans, duration, x, params.horizon);
        spans.push((start, start + duration));
        let start = lead + start;
        let track = TargetTrack { start: origin, heading, t0: start, speeds, step: params.sample_step };
        let mut g = ShotGeometry { step: params.sample_step, uav_speed: params.uav_speed, ..ShotGeometry::default() };
        if shot == ShotType::Flyby {
            // shrink the overtake until the sampled UAV speed stays below the limit
            let spare = (params.uav_speed - track.max_speed()).max(0.0);
            g.overtake = g.overtake.min(spare * duration / 2.0 * 0.9);
        }
        let id = format!("T{}", i + 1);
        let task = match shot {
            ShotType::Static => make_static(&id, &track, start, duration, &g),
            ShotType::Chase => make_chase(&id, &track, start, duration, &g),
            ShotType::Flyby => make_flyby(&id, &track, start, duration, &g),
            ShotType::Orbit => make_orbit(&id, &track, start, duration, &g),
            ShotType::Lateral => make_lateral(&id, &track, start, duration, &g),
            ShotType::Establish => make_establish(&id, &track, start, duration, &g),
        }?;
        tasks.push(task);
    }
    Ok(base_mission(tasks, params))
}
