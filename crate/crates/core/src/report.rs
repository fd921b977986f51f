//! Plan and state documents: plan JSON, gantt CSV rows, and the execution state file.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::greedy::{ExecutionState, PlanAssignment};
use crate::interval::{self, TimeInterval};
use crate::mission::UavState;
use crate::plan::SegmentKind;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed document at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

fn parse<T: serde::de::DeserializeOwned>(content: &[u8]) -> Result<T, ReportError> {
    let de = &mut serde_json::Deserializer::from_slice(content);
    serde_path_to_error::deserialize(de)
        .map_err(|e| ReportError::Parse { path: e.path().to_string(), message: e.into_inner().to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveredDoc {
    pub task_id: String,
    pub start: f64,
    pub end: f64,
}

impl From<&(String, TimeInterval)> for CoveredDoc {
    fn from((id, iv): &(String, TimeInterval)) -> Self {
        Self { task_id: id.clone(), start: iv.start, end: iv.end }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDoc {
    pub kind: SegmentKind,
    pub t_start: f64,
    pub t_end: f64,
    pub from: [f64; 3],
    pub to: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavPlanDoc {
    pub uav_id: String,
    pub filming_time: f64,
    pub segments: Vec<SegmentDoc>,
    pub covered: Vec<CoveredDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub alpha: f64,
    pub relay_gap: f64,
    pub total_task_duration: f64,
    pub total_filming_time: f64,
    pub coverage_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replanned_from: Option<f64>,
    #[serde(default)]
    pub prior_covered: Vec<CoveredDoc>,
    pub plans: Vec<UavPlanDoc>,
}

fn arr(p: Vec3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

pub fn export_plan(assignment: &PlanAssignment, alpha: f64, relay_gap: f64, replanned_from: Option<f64>) -> PlanDoc {
    PlanDoc {
        alpha,
        relay_gap,
        total_task_duration: assignment.total_task_duration,
        total_filming_time: assignment.total_filming_time,
        coverage_ratio: assignment.coverage_ratio,
        replanned_from,
        prior_covered: assignment.prior_covered.iter().map(CoveredDoc::from).collect(),
        plans: assignment
            .plans
            .iter()
            .map(|p| UavPlanDoc {
                uav_id: p.uav_id.clone(),
                filming_time: p.filming_time,
                segments: p
                    .segments
                    .iter()
                    .map(|s| SegmentDoc {
                        kind: s.kind,
                        t_start: s.start.time,
                        t_end: s.end.time,
                        from: arr(s.start.position),
                        to: arr(s.end.position),
                        task_id: s.task_id.clone(),
                    })
                    .collect(),
                covered: p.covered.iter().map(CoveredDoc::from).collect(),
            })
            .collect(),
    }
}

impl PlanDoc {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(content: &[u8]) -> Result<Self, ReportError> {
        parse(content)
    }

    /// Filming time and coverage ratio recomputed from the document's own intervals.
    pub fn recompute_metrics(&self) -> (f64, f64) {
        let all: Vec<&CoveredDoc> =
            self.plans.iter().flat_map(|p| p.covered.iter()).chain(&self.prior_covered).collect();
        let mut ids: Vec<&str> = all.iter().map(|c| c.task_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        let ft: f64 = ids
            .iter()
            .map(|id| {
                let ivs: Vec<TimeInterval> =
                    all.iter().filter(|c| c.task_id == *id).map(|c| TimeInterval::new(c.start, c.end)).collect();
                interval::union_length(&ivs)
            })
            .fold(0.0, |a, b| a + b);
        let cr = if self.total_task_duration > 0.0 { (ft / self.total_task_duration).min(1.0) } else { 0.0 };
        (ft, cr)
    }
}

pub const GANTT_COLUMNS: &str = "uav_id,kind,t_start,t_end,task_id";

/// One row per segment, in plan order.
pub fn write_gantt<W: io::Write>(doc: &PlanDoc, out: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GANTT_COLUMNS.split(','))?;
    for p in &doc.plans {
        for s in &p.segments {
            let kind = serde_json::to_value(s.kind).expect("kind serializes");
            w.write_record([
                p.uav_id.as_str(),
                kind.as_str().unwrap_or_default(),
                &s.t_start.to_string(),
                &s.t_end.to_string(),
                s.task_id.as_deref().unwrap_or(""),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateUavDoc {
    pub uav_id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub battery: f64,
}

/// Execution state file: surviving UAVs at `clock` and the task time filmed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub clock: f64,
    pub uavs: Vec<StateUavDoc>,
    #[serde(default)]
    pub covered: Vec<CoveredDoc>,
}

impl StateDoc {
    pub fn from_json(content: &[u8]) -> Result<Self, ReportError> {
        parse(content)
    }

    pub fn to_execution_state(&self) -> ExecutionState {
        ExecutionState {
            clock: self.clock,
            uavs: self
                .uavs
                .iter()
                .map(|u| UavState {
                    uav_id: u.uav_id.clone(),
                    position: Vec3::new(u.x, u.y, u.z),
                    clock: self.clock,
                    battery_remaining: u.battery,
                })
                .collect(),
            covered: self.covered.iter().map(|c| (c.task_id.clone(), TimeInterval::new(c.start, c.end))).collect(),
        }
    }
}
