use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Method, Scenario, ScenarioConfig};
use super::instance::{generate_instance, InstanceSpec};
use crate::error::{Error, Result};
use crate::model::{self, ChannelSet, EnergyBreakdown, NetworkInstance};
use crate::optimizer::{
    alternate, derive_seed, local_solution, random_wmmse_baseline, AllocatorKind, Report, RunConfig, Solution,
};

const OPTIMIZER_STREAM: u64 = 3 << 40;
const STATUS_OK: &str = "ok";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub seed: u64,
    pub method: String,
    pub sweep_var: String,
    pub sweep_value: usize,
    #[serde(rename = "E_P_joules")]
    pub total: f64,
    #[serde(rename = "E_M_joules")]
    pub communication: f64,
    #[serde(rename = "E_F_joules")]
    pub computation: f64,
    pub num_links: usize,
    pub alternations: usize,
    pub wall_ms: u64,
    /// `ok`, or `error: <reason>`.
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    pub fn energy(&self) -> EnergyBreakdown {
        EnergyBreakdown {
            total: self.total,
            communication: self.communication,
            computation: self.computation,
        }
    }
}

struct Outcome {
    energy: EnergyBreakdown,
    num_links: usize,
    alternations: usize,
    /// Per-alternation energies for the iterations scenario.
    trajectory: Vec<(EnergyBreakdown, usize)>,
}

fn run_config(cfg: &ScenarioConfig, allocator: AllocatorKind, seed: u64, max_links: Option<usize>) -> RunConfig {
    RunConfig {
        num_restarts: cfg.restarts,
        alternations: cfg.alternations,
        allocator,
        rng_seed: derive_seed(seed, OPTIMIZER_STREAM),
        report: cfg.report,
        max_links,
        wmmse: cfg.wmmse,
        ..RunConfig::default()
    }
}

/// Confirms that a solution's energy is what its configuration evaluates to.
fn revalidate(net: &NetworkInstance, ch: &ChannelSet, s: &Solution) -> Result<()> {
    let e = model::evaluate(net, &s.allocation, &s.beamforming, ch)?;
    let tol = 1e-9 * e.total.abs().max(1.0);
    if (e.total - s.energy.total).abs() > tol {
        return Err(Error::InvalidAllocation(format!(
            "reported energy {} but configuration evaluates to {}",
            s.energy.total, e.total
        )));
    }
    Ok(())
}

fn run_method(
    cfg: &ScenarioConfig,
    method: Method,
    net: &NetworkInstance,
    ch: &ChannelSet,
    seed: u64,
    max_links: Option<usize>,
) -> Result<Outcome> {
    let from_solution = |s: &Solution| Outcome {
        energy: s.energy,
        num_links: s.allocation.len(),
        alternations: s.alternations,
        trajectory: s.trajectory.iter().map(|r| (r.energy, r.num_links)).collect(),
    };
    match method {
        Method::Local => Ok(from_solution(&local_solution(net))),
        Method::Random => {
            let s = random_wmmse_baseline(net, ch, seed, &cfg.wmmse)?;
            revalidate(net, ch, &s)?;
            Ok(from_solution(&s))
        }
        Method::Exact | Method::Greedy => {
            let allocator = if method == Method::Exact {
                AllocatorKind::Exact
            } else {
                AllocatorKind::Greedy
            };
            let rc = run_config(cfg, allocator, seed, max_links);
            let out = alternate(net, ch, &rc)?;
            revalidate(net, ch, &out.best)?;
            let mut o = from_solution(&out.best);
            o.energy = out.reported(cfg.report);
            if cfg.report == Report::Mean {
                let links: Vec<usize> = o.trajectory.iter().map(|t| t.1).collect();
                o.trajectory = out
                    .mean_trajectory
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| (e, links[i.min(links.len() - 1)]))
                    .collect();
            }
            Ok(o)
        }
    }
}

struct Task {
    point: usize,
    seed: u64,
}

fn error_row(cfg: &ScenarioConfig, seed: u64, method: Method, value: usize, err: &Error) -> ResultRow {
    ResultRow {
        scenario: cfg.scenario.name().into(),
        seed,
        method: method.name().into(),
        sweep_var: cfg.scenario.sweep_var().into(),
        sweep_value: value,
        total: f64::NAN,
        communication: f64::NAN,
        computation: f64::NAN,
        num_links: 0,
        alternations: 0,
        wall_ms: 0,
        status: format!("error: {err}"),
    }
}

fn run_task(cfg: &ScenarioConfig, task: &Task) -> Vec<ResultRow> {
    let spec = InstanceSpec::from_config(cfg, cfg.shape_at(task.point));
    let instance = generate_instance(&spec, task.seed);
    let points = match cfg.scenario {
        Scenario::Iterations => cfg.sweep_points(),
        _ => vec![task.point],
    };
    let max_links = match cfg.scenario {
        Scenario::LinksSweep => Some(task.point),
        _ => None,
    };
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let started = Instant::now();
        let result = instance
            .as_ref()
            .map_err(|e| Error::InvalidInstance(e.to_string()))
            .and_then(|(net, ch)| run_method(cfg, method, net, ch, task.seed, max_links));
        let wall_ms = if cfg.timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        match result {
            Err(e) => rows.extend(points.iter().map(|&v| error_row(cfg, task.seed, method, v, &e))),
            Ok(o) => {
                for &value in &points {
                    let (energy, num_links) = match cfg.scenario {
                        Scenario::Iterations => o.trajectory[value.min(o.trajectory.len() - 1)],
                        _ => (o.energy, o.num_links),
                    };
                    rows.push(ResultRow {
                        scenario: cfg.scenario.name().into(),
                        seed: task.seed,
                        method: method.name().into(),
                        sweep_var: cfg.scenario.sweep_var().into(),
                        sweep_value: value,
                        total: energy.total,
                        communication: energy.communication,
                        computation: energy.computation,
                        num_links,
                        alternations: o.alternations,
                        wall_ms,
                        status: STATUS_OK.into(),
                    });
                }
            }
        }
    }
    rows
}

/// Runs every (sweep point, seed, method) combination. Work runs in
/// parallel; rows come back ordered by sweep point, then seed, then method
/// in configuration order. Failures become rows with an `error:` status.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let tasks: Vec<Task> = cfg
        .instance_points()
        .into_iter()
        .flat_map(|point| cfg.seeds.iter().map(move |&seed| Task { point, seed }))
        .collect();
    let chunks: Vec<Vec<ResultRow>> = tasks.par_iter().map(|t| run_task(cfg, t)).collect();
    let mut rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    if cfg.scenario == Scenario::Iterations {
        // Trajectory rows arrive grouped by seed; order them by point first.
        rows.sort_by_key(|r| r.sweep_value);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub method: String,
    pub sweep_var: String,
    pub sweep_value: usize,
    pub count: usize,
    pub failures: usize,
    #[serde(rename = "mean_E_P_joules")]
    pub mean_total: f64,
    #[serde(rename = "best_E_P_joules")]
    pub best_total: f64,
    #[serde(rename = "mean_E_M_joules")]
    pub mean_communication: f64,
    #[serde(rename = "mean_E_F_joules")]
    pub mean_computation: f64,
}

/// Mean and best energies per (scenario, method, sweep point) over the
/// successful rows, in order of first appearance.
pub fn emit_plot_data(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<(AggregateRow, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        let pos = groups.iter().position(|(g, _)| {
            g.scenario == r.scenario && g.method == r.method && g.sweep_var == r.sweep_var && g.sweep_value == r.sweep_value
        });
        let idx = pos.unwrap_or_else(|| {
            groups.push((
                AggregateRow {
                    scenario: r.scenario.clone(),
                    method: r.method.clone(),
                    sweep_var: r.sweep_var.clone(),
                    sweep_value: r.sweep_value,
                    count: 0,
                    failures: 0,
                    mean_total: f64::NAN,
                    best_total: f64::NAN,
                    mean_communication: f64::NAN,
                    mean_computation: f64::NAN,
                },
                Vec::new(),
            ));
            groups.len() - 1
        });
        if r.is_ok() {
            groups[idx].1.push(r);
        } else {
            groups[idx].0.failures += 1;
        }
    }
    groups
        .into_iter()
        .map(|(mut g, members)| {
            if !members.is_empty() {
                let n = members.len() as f64;
                g.count = members.len();
                g.mean_total = members.iter().map(|r| r.total).sum::<f64>() / n;
                g.mean_communication = members.iter().map(|r| r.communication).sum::<f64>() / n;
                g.mean_computation = members.iter().map(|r| r.computation).sum::<f64>() / n;
                g.best_total = members.iter().map(|r| r.total).fold(f64::INFINITY, f64::min);
            }
            g
        })
        .collect()
}
