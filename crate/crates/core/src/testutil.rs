//! Builders shared by unit tests.

use proptest::prelude::*;

use crate::geom::Vec3;
use crate::mission::{BaseStation, Mission, ShootingTask, ShotType, UavSpec, UavState, Waypoint};

pub fn wp(x: f64, y: f64, z: f64, t: f64) -> Waypoint {
    Waypoint::new(Vec3::new(x, y, z), t)
}

/// Straight task at 5 m altitude from `a` at `t0` to `b` at `t1`.
pub fn line_task(id: &str, a: (f64, f64), b: (f64, f64), t0: f64, t1: f64) -> ShootingTask {
    ShootingTask {
        id: id.into(),
        shot_type: ShotType::Chase,
        waypoints: vec![wp(a.0, a.1, 5.0, t0), wp(b.0, b.1, 5.0, t1)],
    }
}

/// `k` identical UAVs parked at a single station at the origin.
pub fn mission(tasks: Vec<ShootingTask>, battery: f64, speed: f64, k: usize) -> Mission {
    Mission {
        epoch: 0.0,
        tasks,
        base_stations: vec![BaseStation::fixed("bs", Vec3::ZERO)],
        uavs: (0..k).map(|i| UavSpec::new(format!("u{i}"), battery, speed)).collect(),
        map: None,
    }
}

pub fn parked(m: &Mission, i: usize) -> (UavState, UavSpec) {
    (m.initial_states()[i].clone(), m.uavs[i].clone())
}

prop_compose! {
    fn arb_task(i: usize)(
        x0 in -40.0..40.0f64, y0 in -40.0..40.0f64,
        dx in -30.0..30.0f64, dy in -30.0..30.0f64,
        t0 in 0.0..60.0f64, dur in 10.0..40.0f64,
    ) -> ShootingTask {
        line_task(&format!("t{i}"), (x0, y0), (x0 + dx, y0 + dy), t0.round(), (t0 + dur).round())
    }
}

prop_compose! {
    /// 1-3 straight tasks, one or two stations, battery in [0.5, 2]x the longest task.
    pub fn small_mission()(
        tasks in (1usize..=3).prop_flat_map(|n| (0..n).map(arb_task).collect::<Vec<_>>()),
        factor in 0.5..2.0f64,
        second_station in proptest::option::of((-50.0..50.0f64, -50.0..50.0f64)),
        delay in prop_oneof![Just(0.0), 1.0..20.0f64],
    ) -> Mission {
        let longest = tasks.iter().map(ShootingTask::duration).fold(0.0, f64::max);
        let mut m = mission(tasks, (factor * longest).max(1.0), 3.0, 1);
        m.base_stations[0].recharge_delay = delay;
        if let Some((x, y)) = second_station {
            m.base_stations.push(BaseStation::fixed("bs2", Vec3::new(x, y, 0.0)));
        }
        m
    }
}
