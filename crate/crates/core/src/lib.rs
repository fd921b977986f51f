//! Multi-UAV filming mission planner: discretizes timed camera trajectories into a
//! DAG, solves the single-UAV problem exactly, and assigns a fleet greedily.

pub mod dp;
pub mod experiment;
pub mod geom;
pub mod graph;
pub mod greedy;
pub mod interval;
pub mod mission;
pub mod oracle;
pub mod path;
pub mod plan;
pub mod report;
pub mod scenario;
#[cfg(test)]
mod testutil;
pub mod validate;

pub use dp::solve_single;
pub use experiment::{CoverageConfig, OptimalConfig};
pub use geom::Vec3;
pub use graph::{DiscretizationGraph, EdgeKind, FilmingView, GraphError, GraphWarning};
pub use greedy::{
    compute_assignment_metrics, plan_mission, replan, solve_multi, ExecutionState, GreedyOptions, PlanAssignment,
};
pub use interval::TimeInterval;
pub use mission::{BaseStation, Mission, MissionError, ShootingTask, ShotType, UavSpec, UavState, Waypoint};
pub use oracle::{OracleBudget, OracleError};
pub use path::{GridMap, MapSpec, PathError, PathPlanner};
pub use plan::{Segment, SegmentKind, SingleUavPlan};
pub use report::{PlanDoc, StateDoc};
pub use scenario::{GenError, GenParams};
