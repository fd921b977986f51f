//! Batch experiments over generated missions: coverage against fleet size, and greedy
//! against the exhaustive optimum. Cells run in parallel; output order is by seed, then k.

use std::io;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{DiscretizationGraph, GraphError};
use crate::greedy::{fleet_speed, solve_multi, GreedyOptions};
use crate::oracle::{optimal_multi, OracleBudget};
use crate::scenario::{gen_longitudinal, gen_shot_mix, GenError, GenParams};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid experiment setting: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct CoverageConfig {
    pub n: usize,
    pub x: usize,
    pub repetitions: usize,
    pub k_max: usize,
    pub seed: u64,
    pub alpha: f64,
    pub params: GenParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub seed: u64,
    pub n: usize,
    pub x: usize,
    pub k: usize,
    pub alpha: f64,
    pub cr: f64,
    /// Smallest k reaching full coverage in this run, if any.
    pub full_at_k: Option<usize>,
    pub planning_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    /// Mean coverage ratio for k = 1..=k_max.
    pub mean_cr: Vec<f64>,
}

pub const COVERAGE_COLUMNS: &str = "row,seed,n,x,k,alpha,cr,full_at_k,planning_ms";
pub const OPTIMAL_COLUMNS: &str = "row,seed,n,k,alpha,status,greedy_cr,optimal_cr,ratio,greedy_ms,optimal_ms";

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Coverage ratio for every fleet size up to `k_max` on `repetitions` generated missions.
///
/// UAVs are identical, so the greedy plan for k UAVs is the first k assignments of the
/// k_max run; one run per seed yields the whole curve.
pub fn run_coverage(cfg: &CoverageConfig) -> Result<CoverageReport, ExperimentError> {
    if cfg.k_max == 0 || cfg.repetitions == 0 {
        return Err(ExperimentError::Config("k_max and repetitions must be >= 1".into()));
    }
    let per_seed: Vec<Result<Vec<CoverageRow>, ExperimentError>> = (0..cfg.repetitions as u64)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r);
            let params = GenParams { seed, uav_count: cfg.k_max, ..cfg.params.clone() };
            let mission = gen_longitudinal(cfg.n, cfg.x, &params)?;
            let t = Instant::now();
            let graph = DiscretizationGraph::build(&mission, cfg.alpha, fleet_speed(&mission))?;
            let assignment = solve_multi(&mission, &graph, &mission.initial_states(), GreedyOptions::default());
            let ms = millis(t);
            let total = mission.total_task_duration();
            let mut cumulative = 0.0;
            let crs: Vec<f64> = (0..cfg.k_max)
                .map(|k| {
                    cumulative += assignment.gains.get(k).copied().unwrap_or(0.0);
                    if total > 0.0 {
                        (cumulative / total).min(1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let full = crs.iter().position(|&c| c >= 1.0 - 1e-9).map(|i| i + 1);
            Ok(crs
                .into_iter()
                .enumerate()
                .map(|(i, cr)| CoverageRow {
                    seed,
                    n: cfg.n,
                    x: cfg.x,
                    k: i + 1,
                    alpha: cfg.alpha,
                    cr,
                    full_at_k: full,
                    planning_ms: ms,
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    let mean_cr = (1..=cfg.k_max)
        .map(|k| {
            let v: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.cr).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    Ok(CoverageReport { rows, mean_cr })
}

/// Writes per-run rows and one `mean` row per k. With `timing` off the time column is
/// left empty so repeated runs compare byte for byte.
pub fn write_coverage_csv<W: io::Write>(report: &CoverageReport, out: W, timing: bool) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COVERAGE_COLUMNS.split(','))?;
    for r in &report.rows {
        w.write_record([
            "run".to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.x.to_string(),
            r.k.to_string(),
            r.alpha.to_string(),
            format!("{:.6}", r.cr),
            r.full_at_k.map_or(String::new(), |k| k.to_string()),
            if timing { format!("{:.3}", r.planning_ms) } else { String::new() },
        ])?;
    }
    let (n, x, alpha) = report.rows.first().map_or((0, 0, 0.0), |r| (r.n, r.x, r.alpha));
    for (i, m) in report.mean_cr.iter().enumerate() {
        w.write_record([
            "mean".to_string(),
            String::new(),
            n.to_string(),
            x.to_string(),
            (i + 1).to_string(),
            alpha.to_string(),
            format!("{m:.6}"),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct OptimalConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub alpha: f64,
    pub k: usize,
    pub max_active: usize,
    pub params: GenParams,
    pub budget: OracleBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalRow {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub status: RowStatus,
    pub greedy_cr: f64,
    pub optimal_cr: f64,
    pub ratio: f64,
    /// Median of 5 greedy solves.
    pub greedy_ms: f64,
    pub optimal_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMean {
    pub n: usize,
    pub instances: usize,
    pub greedy_cr: f64,
    pub optimal_cr: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalReport {
    pub rows: Vec<OptimalRow>,
    pub groups: Vec<GroupMean>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn optimal_cell(cfg: &OptimalConfig, n: usize, seed: u64) -> Result<OptimalRow, ExperimentError> {
    let params = GenParams { seed, uav_count: cfg.k, ..cfg.params.clone() };
    let mission = gen_shot_mix(n, cfg.max_active, &params)?;
    let graph = DiscretizationGraph::build(&mission, cfg.alpha, fleet_speed(&mission))?;
    let states = mission.initial_states();
    let mut times = Vec::with_capacity(5);
    let mut greedy = None;
    for _ in 0..5 {
        let t = Instant::now();
        greedy = Some(solve_multi(&mission, &graph, &states, GreedyOptions::default()));
        times.push(millis(t));
    }
    let greedy = greedy.expect("five runs");
    let starts: Vec<_> = states.iter().cloned().zip(mission.uavs.iter().cloned()).collect();
    let t = Instant::now();
    let optimal = optimal_multi(&graph, &starts, cfg.budget);
    let optimal_ms = millis(t);
    let total = mission.total_task_duration();
    let mut row = OptimalRow {
        seed,
        n,
        k: cfg.k,
        alpha: cfg.alpha,
        status: RowStatus::Skipped,
        greedy_cr: greedy.coverage_ratio,
        optimal_cr: f64::NAN,
        ratio: f64::NAN,
        greedy_ms: median(times),
        optimal_ms,
    };
    if let Ok((ft, _)) = optimal {
        row.status = RowStatus::Ok;
        row.optimal_cr = (ft / total).min(1.0);
        row.ratio = if greedy.coverage_ratio > 0.0 { row.optimal_cr / greedy.coverage_ratio } else { 1.0 };
    }
    Ok(row)
}

/// Greedy against exhaustive coverage for task counts `n_min..=n_max`. Instances beyond
/// the oracle budget are kept as skipped rows.
pub fn run_optimal(cfg: &OptimalConfig) -> Result<OptimalReport, ExperimentError> {
    if cfg.n_min == 0 || cfg.n_min > cfg.n_max || cfg.repetitions == 0 || cfg.k == 0 {
        return Err(ExperimentError::Config("need 1 <= n_min <= n_max, repetitions >= 1, k >= 1".into()));
    }
    let cells: Vec<(usize, u64)> =
        (cfg.n_min..=cfg.n_max).flat_map(|n| (0..cfg.repetitions as u64).map(move |r| (n, r))).collect();
    let rows: Vec<OptimalRow> =
        cells.par_iter().map(|&(n, r)| optimal_cell(cfg, n, cfg.seed.wrapping_add(r))).collect::<Result<_, _>>()?;
    let mut rows = rows;
    rows.sort_by_key(|r| (r.seed, r.n));
    let groups = (cfg.n_min..=cfg.n_max)
        .filter_map(|n| {
            let ok: Vec<&OptimalRow> = rows.iter().filter(|r| r.n == n && r.status == RowStatus::Ok).collect();
            if ok.is_empty() {
                return None;
            }
            let mean = |f: fn(&OptimalRow) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64;
            Some(GroupMean {
                n,
                instances: ok.len(),
                greedy_cr: mean(|r| r.greedy_cr),
                optimal_cr: mean(|r| r.optimal_cr),
                ratio: mean(|r| r.ratio),
            })
        })
        .collect();
    Ok(OptimalReport { rows, groups })
}

pub fn write_optimal_csv<W: io::Write>(report: &OptimalReport, out: W, timing: bool) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OPTIMAL_COLUMNS.split(','))?;
    let num = |v: f64| if v.is_nan() { String::new() } else { format!("{v:.6}") };
    let ms = |v: f64| if timing { format!("{v:.3}") } else { String::new() };
    for r in &report.rows {
        let status = match r.status {
            RowStatus::Ok => "ok",
            RowStatus::Skipped => "skipped",
        };
        w.write_record([
            "run".to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.alpha.to_string(),
            status.to_string(),
            num(r.greedy_cr),
            num(r.optimal_cr),
            num(r.ratio),
            ms(r.greedy_ms),
            ms(r.optimal_ms),
        ])?;
    }
    let (k, alpha) = report.rows.first().map_or((0, 0.0), |r| (r.k, r.alpha));
    for g in &report.groups {
        w.write_record([
            "mean".to_string(),
            String::new(),
            g.n.to_string(),
            k.to_string(),
            alpha.to_string(),
            format!("ok={}", g.instances),
            num(g.greedy_cr),
            num(g.optimal_cr),
            num(g.ratio),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_curve_is_monotone_and_deterministic() {
        let cfg = CoverageConfig {
            n: 6,
            x: 2,
            repetitions: 3,
            k_max: 3,
            seed: 11,
            alpha: 10.0,
            params: GenParams { horizon: 150.0, route_length: 150.0, ..GenParams::default() },
        };
        let a = run_coverage(&cfg).unwrap();
        assert_eq!(a.rows.len(), 9);
        assert!(a.mean_cr.windows(2).all(|w| w[1] >= w[0]));
        let b = run_coverage(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_coverage_csv(&a, &mut ca, false).unwrap();
        write_coverage_csv(&b, &mut cb, false).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca).unwrap().starts_with(COVERAGE_COLUMNS));
    }

    #[test]
    fn single_task_groups_match_exactly() {
        let cfg = OptimalConfig {
            n_min: 1,
            n_max: 1,
            repetitions: 3,
            seed: 5,
            alpha: 30.0,
            k: 3,
            max_active: 3,
            params: GenParams { sample_step: 30.0, route_length: 100.0, horizon: 100.0, ..GenParams::default() },
            budget: OracleBudget { max_vertices: 200, ..OracleBudget::default() },
        };
        let report = run_optimal(&cfg).unwrap();
        for r in &report.rows {
            assert_eq!(r.status, RowStatus::Ok);
            assert_eq!(r.greedy_cr, r.optimal_cr);
        }
    }
}
