//! Controllers × cases × seeds comparison.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{run_scenario, standoff_dwells, RunMetrics, ScenarioConfig, SimError};
use crate::aero::Wall;
use crate::mpc::{ControllerMode, ScenarioCase};

/// Walls approached by the standoff protocol, one run each.
pub const STANDOFF_WALLS: [Wall; 3] = [Wall::Floor, Wall::Ceiling, Wall::Left];

/// Standoff-protocol outcome against one wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WallStandoff {
    pub wall: Wall,
    /// Smallest commanded standoff with a stable dwell.
    pub min_stable: Option<f64>,
    /// Mean wall distance held during that dwell.
    pub held_distance: Option<f64>,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub case: ScenarioCase,
    pub controller: ControllerMode,
    pub seed: u64,
    /// Set for collisions and for runs that failed outright.
    pub collided: bool,
    /// For the standoff case, the metrics of the floor run.
    pub metrics: Option<RunMetrics<f64>>,
    /// Standoff case only.
    pub standoffs: Vec<WallStandoff>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; NaN for an empty sample.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// One table row: a metric for one case, one cell per controller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub case: ScenarioCase,
    pub metric: String,
    /// Naive, HC, CBF.
    pub cells: [MeanStd; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
    pub table: Vec<TableRow>,
}

/// Runs the standoff protocol against `wall`.
pub fn standoff_run(config: &ScenarioConfig<f64>, wall: Wall) -> Result<(WallStandoff, RunMetrics<f64>), SimError> {
    let mut config = *config;
    config.trajectory.standoff.wall = wall;
    let run = run_scenario(&config)?;
    let standoffs = config.reference()?.standoffs().map(<[f64]>::to_vec).unwrap_or_default();
    let dwells = standoff_dwells(&run.records, &config, &standoffs);
    let best = dwells.iter().filter(|d| d.stable).min_by(|a, b| a.commanded.total_cmp(&b.commanded));
    let result = WallStandoff {
        wall,
        min_stable: best.map(|d| d.commanded),
        held_distance: best.map(|d| d.mean_distance),
        collided: run.metrics.collided,
    };
    Ok((result, run.metrics))
}

fn run_one(base: &ScenarioConfig<f64>, controller: ControllerMode, seed: u64) -> RunSummary {
    let config = ScenarioConfig { controller, seed, ..*base };
    let case = config.case;
    let failed = |e: SimError| RunSummary {
        case,
        controller,
        seed,
        collided: true,
        metrics: None,
        standoffs: Vec::new(),
        error: Some(e.to_string()),
    };
    if case != ScenarioCase::MinStandoff {
        return match run_scenario(&config) {
            Ok(run) => RunSummary {
                case,
                controller,
                seed,
                collided: run.metrics.collided,
                metrics: Some(run.metrics),
                standoffs: Vec::new(),
                error: None,
            },
            Err(e) => failed(e),
        };
    }
    let mut standoffs = Vec::new();
    let mut metrics = None;
    for wall in STANDOFF_WALLS {
        match standoff_run(&config, wall) {
            Ok((s, m)) => {
                metrics.get_or_insert(m);
                standoffs.push(s);
            }
            Err(e) => return failed(e),
        }
    }
    let collided = standoffs.iter().any(|s| s.collided);
    RunSummary { case, controller, seed, collided, metrics, standoffs, error: None }
}

type Extract = fn(&RunSummary) -> Option<f64>;

fn wall_stat(r: &RunSummary, wall: Wall, f: fn(&WallStandoff) -> Option<f64>) -> Option<f64> {
    r.standoffs.iter().find(|s| s.wall == wall).and_then(f)
}

fn rows_for(case: ScenarioCase) -> Vec<(&'static str, Extract)> {
    let t_e: Extract = |r| r.metrics.map(|m| m.t_e);
    let c_e: Extract = |r| r.metrics.map(|m| m.c_e);
    let c_s: Extract = |r| r.metrics.map(|m| m.c_s);
    match case {
        ScenarioCase::BoundRegion => vec![
            ("safe-sphere violations (steps)", |r| r.metrics.map(|m| m.boundary_violations as f64)),
            ("T_e (m)", t_e),
            ("c_e", c_e),
            ("c_s", c_s),
        ],
        ScenarioCase::MinStandoff => vec![
            ("min stable standoff, floor (m)", |r| wall_stat(r, Wall::Floor, |s| s.min_stable)),
            ("held distance, floor (m)", |r| wall_stat(r, Wall::Floor, |s| s.held_distance)),
            ("min stable standoff, ceiling (m)", |r| wall_stat(r, Wall::Ceiling, |s| s.min_stable)),
            ("held distance, ceiling (m)", |r| wall_stat(r, Wall::Ceiling, |s| s.held_distance)),
            ("min stable standoff, sidewall (m)", |r| wall_stat(r, Wall::Left, |s| s.min_stable)),
            ("held distance, sidewall (m)", |r| wall_stat(r, Wall::Left, |s| s.held_distance)),
            ("collision rate", |r| Some(if r.collided { 1.0 } else { 0.0 })),
        ],
        ScenarioCase::CloseProximity => vec![
            ("collision rate", |r| Some(if r.collided { 1.0 } else { 0.0 })),
            ("T_e (m)", t_e),
            ("c_e", c_e),
            ("c_s", c_s),
        ],
    }
}

/// Aggregates run summaries into per-case metric rows.
pub fn aggregate(runs: &[RunSummary]) -> Vec<TableRow> {
    let mut table = Vec::new();
    for case in ScenarioCase::ALL {
        for (name, f) in rows_for(case) {
            let cells = ControllerMode::ALL.map(|ctl| {
                let xs: Vec<f64> = runs.iter().filter(|r| r.case == case && r.controller == ctl).filter_map(f).collect();
                MeanStd::of(&xs)
            });
            table.push(TableRow { case, metric: name.to_string(), cells });
        }
    }
    table
}

/// Runs every config × controller × seed, on up to `jobs` threads. Each
/// config supplies one case; the controller and seed fields are replaced.
pub fn benchmark_suite(configs: &[ScenarioConfig<f64>], seeds: &[u64], jobs: usize) -> Result<BenchReport, rayon::ThreadPoolBuildError> {
    let mut plan = Vec::new();
    for config in configs {
        for controller in ControllerMode::ALL {
            for &seed in seeds {
                plan.push((config, controller, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let runs: Vec<RunSummary> = pool.install(|| plan.par_iter().map(|&(config, ctl, seed)| run_one(config, ctl, seed)).collect());
    let table = aggregate(&runs);
    Ok(BenchReport { seeds: seeds.to_vec(), runs, table })
}

/// Plain-text comparison table with `mean ± std` cells.
pub fn render_table(report: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:<32} {:>22} {:>22} {:>22}", "case", "metric", "naive", "hc", "cbf");
    let mut last = None;
    for row in &report.table {
        let label = if last == Some(row.case) { "" } else { row.case.name() };
        last = Some(row.case);
        let cells: Vec<String> = row.cells.iter().map(|c| format!("{:.4} ± {:.4}", c.mean, c.std)).collect();
        let _ = writeln!(s, "{:<16} {:<32} {:>22} {:>22} {:>22}", label, row.metric, cells[0], cells[1], cells[2]);
    }
    s
}
