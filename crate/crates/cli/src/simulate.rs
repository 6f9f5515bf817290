//! `ddrhc simulate`: closed-loop runs, one output directory per seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use ddrhc_core::comm::{check_tv_constraints, plan_schedule, run_closed_loop, ClosedLoopConfig, ClosedLoopReport, TvAdmissibility};
use ddrhc_core::rhc::{DistributedSynthesizer, LinearPlant, Network};
use ddrhc_core::{AgentModel, Digraph, LtiAgent, Mat, Topology};
use ddrhc_leo::geometry::{link_durations, ring_family, synthesis_load};
use ddrhc_leo::scenario::WindowSummary;
use ddrhc_leo::{run_scenario, Anchor, ScenarioConfig, ScenarioRun, EARTH};

use crate::config::{ExperimentConfig, GraphKind, ScenarioKind};
use crate::fixtures::{random_matrix, random_vector, rng};
use crate::output::*;

/// Outcome of the admissibility check that precedes a run.
#[derive(Debug, Clone)]
pub enum Admission {
    /// Fixed topology: only the non-overlap condition applies.
    Static,
    TimeVarying { dt_min: f64, dt_max: f64, check: TvAdmissibility },
}

/// Link-duration extremes of the configured constellation, from the config
/// or measured by backtracking with the given seed. `None` when every
/// sampled link outlasted the backtracking limit.
pub fn link_extremes(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Option<(f64, f64)>> {
    if let Some([lo, hi]) = cfg.simulation.link_durations {
        return Ok(Some((lo, hi)));
    }
    let c = cfg.constellation()?;
    let g = &cfg.geometry;
    let anchor = Anchor { t0: 0.0, u0: 0.0, raan0: 0.0 };
    let samples = link_durations(c, &anchor, g.samples, g.span, g.dt, g.limit, &mut rng(seed), &EARTH);
    if samples.is_empty() || samples.iter().all(|s| s.capped) {
        return Ok(None);
    }
    let lo = samples.iter().map(|s| s.duration).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.duration).fold(0.0, f64::max);
    Ok(Some((lo, hi)))
}

/// Refuses schedules that violate the scheduling inequalities, naming each
/// violated one.
pub fn admit(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Admission> {
    let s = &cfg.schedule;
    let extremes = match cfg.scenario {
        ScenarioKind::GenericNetwork => None,
        ScenarioKind::Constellation => link_extremes(cfg, seed)?,
    };
    match extremes {
        Some((dt_min, dt_max)) if dt_max > dt_min => {
            let check = check_tv_constraints(s, dt_max, dt_min)?;
            if !check.admissible() {
                bail!(
                    "inadmissible schedule (H = {}, d = {}) for link durations in [{dt_min}, {dt_max}] s:\n  {}",
                    s.horizon,
                    s.used,
                    check.violations.join("\n  ")
                );
            }
            Ok(Admission::TimeVarying { dt_min, dt_max, check })
        }
        _ => {
            let plan = plan_schedule(s)?;
            if plan.overlapping {
                bail!(
                    "inadmissible schedule (H = {}, d = {}): d >= (H+2)T_t/T_c fails: {} < {}",
                    s.horizon,
                    s.used,
                    s.used,
                    plan.delta_minus / s.t_c
                );
            }
            Ok(Admission::Static)
        }
    }
}

pub fn scenario_config(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<ScenarioConfig> {
    let sim = &cfg.simulation;
    Ok(ScenarioConfig {
        constellation: *cfg.constellation()?,
        schedule: cfg.schedule,
        periods: sim.periods,
        truth: cfg.truth_mode,
        seed,
        initial: sim.initial,
        distributed: sim.distributed,
        los_gating: sim.los_gating,
        detail_sats: sim.detail_sats.clone(),
        trace_windows: sim.trace_windows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub steps: usize,
    pub initial_z: f64,
    pub final_z: f64,
    /// Constellation runs only.
    pub initial_mae_a: Option<f64>,
    pub final_mae_a: Option<f64>,
    pub initial_z_rel: Option<f64>,
    pub final_z_rel: Option<f64>,
    pub max_applied: Option<f64>,
    pub saturated: Option<usize>,
    pub mass_mismatch: Option<f64>,
}

fn write_trace_and_windows(dir: &Path, report: &ClosedLoopReport, summaries: &[WindowSummary]) -> anyhow::Result<()> {
    write_csv(&dir.join("trace.csv"), TRACE_HEADER, report.trace.iter().map(TraceCsv::from))?;
    let by_k: BTreeMap<usize, &WindowSummary> = summaries.iter().map(|s| (s.k, s)).collect();
    write_csv(
        &dir.join("windows.csv"),
        WINDOW_HEADER,
        report.windows.iter().map(|w| WindowCsv::new(w, by_k.get(&w.k).copied())),
    )
}

/// Runs the constellation scenario for one seed and writes its CSVs.
pub fn simulate_constellation(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> anyhow::Result<(RunSummary, ScenarioRun)> {
    let sc = scenario_config(cfg, seed)?;
    let run = run_scenario(&sc, &EARTH)?;
    write_csv(&dir.join("metrics.csv"), METRICS_HEADER, run.rows.iter().map(MetricsCsv::from))?;
    write_csv(&dir.join("detail.csv"), DETAIL_HEADER, &run.detail)?;
    write_trace_and_windows(dir, &run.report, &run.windows)?;
    let (first, last) = (run.rows[0], *run.rows.last().expect("at least the initial row"));
    let summary = RunSummary {
        seed,
        dir: dir.to_path_buf(),
        steps: run.rows.len() - 1,
        initial_z: first.z_norm,
        final_z: last.z_norm,
        initial_mae_a: Some(first.fleet.mae_a),
        final_mae_a: Some(last.fleet.mae_a),
        initial_z_rel: Some(first.mean_z_rel),
        final_z_rel: Some(last.mean_z_rel),
        max_applied: Some(run.max_applied),
        saturated: Some(run.saturated),
        mass_mismatch: Some(run.mass_mismatch),
    };
    Ok((summary, run))
}

pub fn graph(kind: GraphKind, n: usize) -> Digraph {
    match kind {
        GraphKind::Chain => Digraph::chain(n),
        GraphKind::Ring => Digraph::ring(n),
        GraphKind::Tree => Digraph::binary_tree(n),
        GraphKind::Complete => Digraph::complete(n),
    }
}

/// Two-state LTI agents with random couplings, seeded.
pub fn generic_network(cfg: &ExperimentConfig, seed: u64) -> (Network, Vec<ddrhc_core::Vector>) {
    let net = &cfg.network;
    let g = graph(net.topology, net.agents);
    let mut r = rng(seed);
    let agents = (0..net.agents)
        .map(|i| {
            let h: BTreeMap<usize, Mat> = g.in_neighbors(i).iter().map(|&j| (j, random_matrix(&mut r, 2, 2))).collect();
            Arc::new(LtiAgent {
                a: Mat::identity(2, 2) * net.drift + random_matrix(&mut r, 2, 2) * 0.1,
                b: Mat::identity(2, 2) + random_matrix(&mut r, 2, 2) * 0.2,
                q: Mat::identity(2, 2),
                r: Mat::identity(2, 2),
                h,
            }) as Arc<dyn AgentModel>
        })
        .collect();
    let x0 = (0..net.agents).map(|_| random_vector(&mut r, 2)).collect();
    (Network::new(agents, Topology::fixed(g)), x0)
}

pub fn simulate_generic(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> anyhow::Result<RunSummary> {
    let (network, x0) = generic_network(cfg, seed);
    let mut plant = LinearPlant::new(network.clone(), x0);
    let mut synth = DistributedSynthesizer {
        network,
        schedule: cfg.schedule,
        config: cfg.simulation.distributed,
        link: None,
    };
    let mut loop_cfg = ClosedLoopConfig::new(cfg.schedule, cfg.network.steps);
    loop_cfg.trace_windows = cfg.simulation.trace_windows;
    let mut rows = Vec::new();
    let report = run_closed_loop(&mut plant, &mut synth, &loop_cfg, |k, p| {
        rows.push(NetworkMetricsCsv { step: k, z_norm: p.output_norm(), cost: p.cost });
    })?;
    write_csv(&dir.join("metrics.csv"), NETWORK_METRICS_HEADER, &rows)?;
    write_trace_and_windows(dir, &report, &[])?;
    Ok(RunSummary {
        seed,
        dir: dir.to_path_buf(),
        steps: rows.len() - 1,
        initial_z: rows[0].z_norm,
        final_z: rows.last().expect("initial row").z_norm,
        initial_mae_a: None,
        final_mae_a: None,
        initial_z_rel: None,
        final_z_rel: None,
        max_applied: None,
        saturated: None,
        mass_mismatch: None,
    })
}

/// Per-unit synthesis load on rings of the configured sizes, written to
/// `load_sweep.csv` in `out`.
pub fn load_sweep(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<ddrhc_leo::geometry::LoadPoint>> {
    let Some(sweep) = &cfg.sweep else { return Ok(Vec::new()) };
    let (inc, a) = cfg.constellation.as_ref().map_or((53.0, 6_921e3), |c| (c.inclination_deg, c.semi_major_axis));
    let schedule = ddrhc_core::comm::ScheduleConfig { horizon: sweep.horizon, used: sweep.used, ..cfg.schedule };
    let points = sweep
        .sizes
        .iter()
        .map(|&n| synthesis_load(&ring_family(inc, n, a), &schedule, 0, cfg.simulation.distributed, &EARTH))
        .collect::<Result<Vec<_>, _>>()?;
    write_csv(&out.join("load_sweep.csv"), LOAD_HEADER, &points)?;
    Ok(points)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Every seed of the config, after the admissibility check.
pub fn simulate(cfg: &ExperimentConfig) -> anyhow::Result<Vec<RunSummary>> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        admit(cfg, seed)?;
        let dir = seed_dir(out, seed);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let s = match cfg.scenario {
            ScenarioKind::Constellation => simulate_constellation(cfg, seed, &dir)?.0,
            ScenarioKind::GenericNetwork => simulate_generic(cfg, seed, &dir)?,
        };
        summaries.push(s);
    }
    load_sweep(cfg, out)?;
    Ok(summaries)
}
