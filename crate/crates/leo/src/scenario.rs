//! Closed-loop station keeping of a Walker fleet: window synthesis on the
//! predicted coupling topology, the fleet plant and the run driver.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::sync::Arc;

use ddrhc_core::centralized::GainSchedule;
use ddrhc_core::comm::{
    feasibility_time, run_closed_loop, ClosedLoopConfig, ClosedLoopReport, Feasibility, Harness, Plant, ScheduleConfig,
    WindowSynthesizer,
};
use ddrhc_core::distributed::{restrict_window, synthesize_window_ti, DistributedConfig};
use ddrhc_core::{AgentId, AgentModel, Digraph, SynthesisError, Topology, Vector, WindowProblem};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{clamp_thrust, SatelliteModel, Thrust};
use crate::coupling::{coupling_topology, los_feasible, nominal_positions};
use crate::elements::{absolute_elements, relative_elements, MeanElements};
use crate::error::LeoError;
use crate::metrics::{global_output_norm, mean_relative_output, metrics, tracking_outputs, FleetMetrics};
use crate::orbit::Physics;
use crate::truth::{linear_step, propellant_used, truth_step, TruthMode};
use crate::walker::{compute_anchor, fleet_nominal, walker_nominal, Anchor, ConstellationConfig, SatelliteState};

/// Coupling topology of the nominal fleet at every control step.
pub fn nominal_topology(cfg: &ConstellationConfig, anchor: &Anchor, t_c: f64, phys: &Physics) -> Topology {
    let (cfg, anchor, phys) = (*cfg, *anchor, *phys);
    Topology::dynamic(cfg.sats, move |k| {
        coupling_topology(&nominal_positions(&cfg, &anchor, k as f64 * t_c, &phys), cfg.range, cfg.max_in_degree)
    })
}

/// Line-of-sight feasibility sets of a window, evaluated on the nominal
/// positions at each step's communication time.
pub fn los_feasibility(
    cfg: &ConstellationConfig,
    anchor: &Anchor,
    schedule: &ScheduleConfig,
    k: usize,
    phys: &Physics,
) -> Feasibility {
    let sets = (k..=k + schedule.horizon)
        .map(|tau| {
            let p = nominal_positions(cfg, anchor, feasibility_time(schedule, k, tau), phys);
            (0..cfg.sats)
                .map(|i| {
                    (0..cfg.sats)
                        .filter(|&j| los_feasible(&p[i], &p[j], cfg.semi_major_axis))
                        .collect::<BTreeSet<AgentId>>()
                })
                .collect()
        })
        .collect();
    Feasibility::new(k, sets)
}

/// What the synthesis of one window saw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSummary {
    pub k: usize,
    /// Couplings of the predicted topology over the window, self-loops excluded.
    pub couplings: usize,
    /// Couplings removed for lack of line of sight.
    pub dropped: usize,
    pub masked_pairs: usize,
    pub max_peak_bytes: usize,
}

/// Distributed synthesis of each window for the constellation.
pub struct ConstellationSynthesizer {
    pub cfg: ConstellationConfig,
    pub anchor: Anchor,
    pub schedule: ScheduleConfig,
    pub config: DistributedConfig,
    pub phys: Physics,
    /// Drop couplings without line of sight at communication time.
    pub los_gating: bool,
    pub topology: Topology,
    pub summaries: Vec<WindowSummary>,
}

impl ConstellationSynthesizer {
    pub fn new(
        cfg: &ConstellationConfig,
        anchor: &Anchor,
        schedule: &ScheduleConfig,
        config: DistributedConfig,
        phys: &Physics,
    ) -> Self {
        Self {
            cfg: *cfg,
            anchor: *anchor,
            schedule: *schedule,
            config,
            phys: *phys,
            los_gating: true,
            topology: nominal_topology(cfg, anchor, schedule.t_c, phys),
            summaries: Vec::new(),
        }
    }

    /// The window problem at `k`, restricted to feasible links when gating.
    pub fn window_problem(&self, k: usize) -> Result<(WindowProblem, usize), SynthesisError> {
        let nominal = self.topology.window(k, self.schedule.horizon);
        let window = if self.los_gating {
            let feas = los_feasibility(&self.cfg, &self.anchor, &self.schedule, k, &self.phys);
            restrict_window(&nominal, &feas, self.schedule.used)?
        } else {
            nominal.clone()
        };
        let count = |w: &ddrhc_core::TopologyWindow| w.graphs().map(|(_, g)| g.edge_count() - g.agent_count()).sum::<usize>();
        let dropped = count(&nominal) - count(&window);
        let window = Arc::new(window);
        let agents = (0..self.cfg.sats)
            .map(|i| {
                Arc::new(SatelliteModel::new(i, &self.cfg, &self.anchor, self.schedule.t_c, window.clone(), &self.phys))
                    as Arc<dyn AgentModel>
            })
            .collect();
        Ok((WindowProblem::new(agents, (*window).clone())?, dropped))
    }
}

impl WindowSynthesizer for ConstellationSynthesizer {
    fn synthesize(&mut self, k: usize, harness: &mut Harness) -> Result<GainSchedule, SynthesisError> {
        let (problem, dropped) = self.window_problem(k)?;
        let outcome = synthesize_window_ti(&problem, harness, self.schedule.used, self.config)?;
        self.topology.forget_before(k);
        self.summaries.push(WindowSummary {
            k,
            couplings: problem.topology.graphs().map(|(_, g)| g.edge_count() - g.agent_count()).sum::<usize>() + dropped,
            dropped,
            masked_pairs: outcome.masked_pairs(),
            max_peak_bytes: outcome.max_peak_bytes(),
        });
        Ok(outcome.actuation_gains())
    }
}

/// One row of the per-satellite detail log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetailRow {
    pub step: usize,
    pub t: f64,
    pub sat: usize,
    pub a_error: f64,
    pub e: f64,
    pub i_error: f64,
    pub du: f64,
    pub draan: f64,
    pub thrust_t: f64,
    pub thrust_n: f64,
    pub thrust_w: f64,
    pub mass: f64,
}

/// The fleet under thrust feedback.
pub struct ConstellationPlant {
    pub cfg: ConstellationConfig,
    pub anchor: Anchor,
    pub phys: Physics,
    pub t_c: f64,
    pub mode: TruthMode,
    pub states: Vec<SatelliteState>,
    pub k: usize,
    /// Propellant each satellite should have burnt, summed step by step.
    pub propellant: Vec<f64>,
    /// Commands that hit the per-axis clamp.
    pub saturated: usize,
    /// Largest delivered thrust on any axis (N).
    pub max_applied: f64,
    pub detail_sats: Vec<usize>,
    pub detail: Vec<DetailRow>,
}

impl ConstellationPlant {
    pub fn new(
        cfg: &ConstellationConfig,
        anchor: &Anchor,
        t_c: f64,
        mode: TruthMode,
        states: Vec<SatelliteState>,
        phys: &Physics,
    ) -> Self {
        Self {
            cfg: *cfg,
            anchor: *anchor,
            phys: *phys,
            t_c,
            mode,
            propellant: vec![0.0; states.len()],
            states,
            k: 0,
            saturated: 0,
            max_applied: 0.0,
            detail_sats: Vec::new(),
            detail: Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.t_c
    }

    pub fn elements(&self) -> Vec<MeanElements> {
        self.states.iter().map(|s| s.elements).collect()
    }

    pub fn relative(&self) -> Vec<Vector> {
        let nominal = fleet_nominal(&self.cfg, &self.anchor, self.time(), &self.phys);
        self.states.iter().zip(&nominal).map(|(s, xb)| relative_elements(&s.elements, xb)).collect()
    }

    /// Largest gap between the mass actually lost and the propellant summed
    /// from the delivered thrust.
    pub fn mass_mismatch(&self) -> f64 {
        self.states
            .iter()
            .zip(&self.propellant)
            .map(|(s, p)| ((self.cfg.initial_mass - s.mass) - p).abs())
            .fold(0.0, f64::max)
    }

    fn step_one(&self, i: usize, thrust: &Vector3<f64>) -> Result<SatelliteState, LeoError> {
        let s = &self.states[i];
        match self.mode {
            TruthMode::NonlinearMeanElement => truth_step(s, i, thrust, self.t_c, &self.cfg, &self.phys),
            TruthMode::LinearModel => {
                let t = self.time();
                let now = walker_nominal(&self.cfg, &self.anchor, t, i, &self.phys)?;
                let next = walker_nominal(&self.cfg, &self.anchor, t + self.t_c, i, &self.phys)?;
                linear_step(s, i, &now, &next, thrust, self.t_c, &self.cfg, &self.phys)
            }
        }
    }
}

impl Plant for ConstellationPlant {
    fn agent_count(&self) -> usize {
        self.states.len()
    }

    fn input_dim(&self, _: AgentId) -> usize {
        3
    }

    fn feedback_states(&self) -> Vec<Vector> {
        self.relative()
    }

    /// `commands` are the accelerations `−Σ K δx`; the thrusters deliver
    /// `m` times that, clamped.
    fn apply(&mut self, k: usize, commands: &[Vector]) -> Result<(), String> {
        let thrusts: Vec<Thrust> = commands
            .iter()
            .zip(&self.states)
            .map(|(nu, s)| clamp_thrust(Vector3::new(nu[0], nu[1], nu[2]) * s.mass, self.cfg.max_thrust))
            .collect();
        if !self.detail_sats.is_empty() {
            let dx = self.relative();
            for &sat in &self.detail_sats {
                let (x, u) = (&self.states[sat].elements, thrusts[sat].applied);
                self.detail.push(DetailRow {
                    step: k,
                    t: self.time(),
                    sat,
                    a_error: x.a - self.cfg.semi_major_axis,
                    e: x.eccentricity(),
                    i_error: x.i - self.cfg.inclination(),
                    du: dx[sat][1],
                    draan: dx[sat][5],
                    thrust_t: u[0],
                    thrust_n: u[1],
                    thrust_w: u[2],
                    mass: self.states[sat].mass,
                });
            }
        }
        let next = (0..self.states.len())
            .map(|i| self.step_one(i, &thrusts[i].applied))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        for (i, th) in thrusts.iter().enumerate() {
            self.saturated += usize::from(th.saturated());
            self.max_applied = self.max_applied.max(th.applied.amax());
            self.propellant[i] += propellant_used(&th.applied, self.t_c, &self.cfg, &self.phys);
        }
        self.states = next;
        self.k = k + 1;
        Ok(())
    }
}

/// Bounds of the uniform initial offsets from the nominal slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSpread {
    /// Along-track offset `ā δu` (m).
    pub along_track: f64,
    /// Semi-major axis offset (m).
    pub semi_major_axis: f64,
}

impl Default for InitialSpread {
    fn default() -> Self {
        Self { along_track: 2_000.0, semi_major_axis: 500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub constellation: ConstellationConfig,
    pub schedule: ScheduleConfig,
    /// Duration in nominal orbital periods.
    pub periods: f64,
    pub truth: TruthMode,
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialSpread,
    #[serde(default)]
    pub distributed: DistributedConfig,
    #[serde(default = "yes")]
    pub los_gating: bool,
    /// Satellites whose trajectory is logged step by step.
    #[serde(default)]
    pub detail_sats: Vec<usize>,
    /// Windows whose messages are kept in the trace.
    #[serde(default = "one")]
    pub trace_windows: usize,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

impl ScenarioConfig {
    pub fn steps(&self, phys: &Physics) -> usize {
        let period = TAU / phys.mean_motion(self.constellation.semi_major_axis);
        (self.periods * period / self.schedule.t_c).round() as usize
    }
}

/// Fleet-level record of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    #[serde(flatten)]
    pub fleet: FleetMetrics,
    pub mean_z_rel: f64,
    pub z_norm: f64,
    pub couplings: usize,
}

pub struct ScenarioRun {
    pub rows: Vec<MetricsRow>,
    pub detail: Vec<DetailRow>,
    pub windows: Vec<WindowSummary>,
    pub report: ClosedLoopReport,
    pub final_states: Vec<SatelliteState>,
    pub saturated: usize,
    pub max_applied: f64,
    pub mass_mismatch: f64,
    pub anchor: Anchor,
}

/// Fleet at the nominal slots of a zero anchor, perturbed by uniform offsets,
/// together with the anchor fitted to it.
pub fn initial_fleet(
    cfg: &ConstellationConfig,
    spread: &InitialSpread,
    seed: u64,
    phys: &Physics,
) -> Result<(Vec<SatelliteState>, Anchor), LeoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Anchor { t0: 0.0, u0: 0.0, raan0: 0.0 };
    let a = cfg.semi_major_axis;
    let elements: Vec<MeanElements> = fleet_nominal(cfg, &base, 0.0, phys)
        .iter()
        .map(|xb| {
            let mut dx = Vector::zeros(6);
            dx[0] = spread.semi_major_axis / a * rng.random_range(-1.0..=1.0);
            dx[1] = spread.along_track / a * rng.random_range(-1.0..=1.0);
            absolute_elements(&dx, xb)
        })
        .collect();
    let anchor = compute_anchor(cfg, &elements, 0.0)?;
    let states = elements.into_iter().map(|x| SatelliteState { elements: x, mass: cfg.initial_mass }).collect();
    Ok((states, anchor))
}

fn observe_row(plant: &ConstellationPlant, step: usize, graph: &Digraph) -> Result<MetricsRow, LeoError> {
    let fleet = metrics(&plant.cfg, &plant.elements(), plant.time(), &plant.phys)?;
    let z = tracking_outputs(&plant.cfg, graph, &plant.relative());
    Ok(MetricsRow {
        step,
        fleet,
        mean_z_rel: mean_relative_output(&z),
        z_norm: global_output_norm(&z),
        couplings: graph.edge_count() - graph.agent_count(),
    })
}

pub fn run_scenario(sc: &ScenarioConfig, phys: &Physics) -> Result<ScenarioRun, LeoError> {
    let cfg = &sc.constellation;
    cfg.validate(phys)?;
    sc.schedule.validate()?;
    for &s in &sc.detail_sats {
        if s >= cfg.sats {
            return Err(LeoError::SatelliteOutOfRange { sat: s, count: cfg.sats });
        }
    }
    let (states, anchor) = initial_fleet(cfg, &sc.initial, sc.seed, phys)?;
    let mut plant = ConstellationPlant::new(cfg, &anchor, sc.schedule.t_c, sc.truth, states, phys);
    plant.detail_sats = sc.detail_sats.clone();
    let mut synth = ConstellationSynthesizer::new(cfg, &anchor, &sc.schedule, sc.distributed, phys);
    synth.los_gating = sc.los_gating;

    let mut loop_cfg = ClosedLoopConfig::new(sc.schedule, sc.steps(phys));
    loop_cfg.trace_windows = sc.trace_windows;
    let topology = nominal_topology(cfg, &anchor, sc.schedule.t_c, phys);
    let mut rows = Vec::new();
    let mut observe_err = None;
    let report = run_closed_loop(&mut plant, &mut synth, &loop_cfg, |k, p| {
        match observe_row(p, k, &topology.at(k)) {
            Ok(r) => rows.push(r),
            Err(e) => observe_err = observe_err.take().or(Some(e)),
        }
        topology.forget_before(k);
    })?;
    if let Some(e) = observe_err {
        return Err(e);
    }
    Ok(ScenarioRun {
        rows,
        detail: std::mem::take(&mut plant.detail),
        windows: synth.summaries,
        report,
        saturated: plant.saturated,
        max_applied: plant.max_applied,
        mass_mismatch: plant.mass_mismatch(),
        final_states: plant.states,
        anchor,
    })
}
