use crate::centralized::GainSchedule;
use crate::comm::harness::{CommStats, Harness, TraceRecord};
use crate::comm::schedule::{plan_schedule, ScheduleConfig};
use crate::error::{ScheduleError, SynthesisError};
use crate::linalg::Vector;
use crate::network::AgentId;

/// The system being controlled.
pub trait Plant {
    fn agent_count(&self) -> usize;
    fn input_dim(&self, i: AgentId) -> usize;
    /// States `x_j(k)` used by the feedback law at the current step.
    fn feedback_states(&self) -> Vec<Vector>;
    /// Applies the commanded inputs of step `k` and advances one step.
    fn apply(&mut self, k: usize, commands: &[Vector]) -> Result<(), String>;
}

/// Produces the gains of one window through a harness.
pub trait WindowSynthesizer {
    fn synthesize(&mut self, k: usize, harness: &mut Harness) -> Result<GainSchedule, SynthesisError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig {
    pub schedule: ScheduleConfig,
    pub steps: usize,
    /// Accept `d T_c < Δ⁻` and run interleaved sessions instead of refusing.
    pub allow_overlap: bool,
    /// Number of leading windows whose messages are kept in the trace.
    pub trace_windows: usize,
    /// Rounds granted per session; `None` grants the planned `H + 2`.
    pub round_budget: Option<usize>,
    /// Extra processing delay in rounds before gains become usable.
    pub extra_latency_rounds: usize,
}

impl ClosedLoopConfig {
    pub fn new(schedule: ScheduleConfig, steps: usize) -> Self {
        Self {
            schedule,
            steps,
            allow_overlap: false,
            trace_windows: 1,
            round_budget: None,
            extra_latency_rounds: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub k: usize,
    pub start_time: f64,
    pub ready_time: f64,
    pub messages: usize,
    pub bytes: usize,
    pub max_sent_per_round: usize,
    pub max_received_per_round: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClosedLoopReport {
    pub windows: Vec<WindowRecord>,
    pub trace: Vec<TraceRecord>,
    pub comm: CommStats,
    pub max_concurrent_sessions: usize,
}

/// Receding-horizon loop: every `d` steps a window is synthesized in a
/// session that starts `Δ⁻` before its first actuation, then
/// `u_i(k) = -Σ_{j ∈ D⁻_i(k)} K_{i,j}(k) x_j(k)` is applied each step.
/// `observe` sees the plant before every step and once after the last.
pub fn run_closed_loop<P: Plant, S: WindowSynthesizer>(
    plant: &mut P,
    synth: &mut S,
    cfg: &ClosedLoopConfig,
    mut observe: impl FnMut(usize, &P),
) -> Result<ClosedLoopReport, ScheduleError> {
    let plan = plan_schedule(&cfg.schedule)?;
    if plan.overlapping && !cfg.allow_overlap {
        return Err(ScheduleError::Overlap {
            used_time: cfg.schedule.used as f64 * plan.t_c,
            lead_time: plan.delta_minus,
        });
    }
    let n = plant.agent_count();
    let d = cfg.schedule.used;
    let budget = cfg.round_budget.unwrap_or(plan.rounds);
    let mut report = ClosedLoopReport { comm: CommStats::new(n), ..Default::default() };
    let mut gains: Option<GainSchedule> = None;

    for k in 0..cfg.steps {
        if k % d == 0 {
            let start_time = plan.start_time(k);
            let mut harness = Harness::new(n, budget).with_timing(start_time, plan.t_t);
            if report.windows.len() < cfg.trace_windows {
                harness = harness.with_trace(k);
            }
            let schedule = synth.synthesize(k, &mut harness)?;
            let ready_time = harness.time_of(harness.round() + cfg.extra_latency_rounds);
            let actuation = plan.actuation_time(k);
            if ready_time > actuation + 1e-9 * actuation.abs().max(1.0) {
                return Err(ScheduleError::LateGains { k, ready: ready_time, actuation });
            }
            let (stats, trace) = harness.into_parts();
            let concurrent = 1 + report.windows.iter().filter(|w| w.ready_time > start_time).count();
            report.max_concurrent_sessions = report.max_concurrent_sessions.max(concurrent);
            report.windows.push(WindowRecord {
                k,
                start_time,
                ready_time,
                messages: stats.messages,
                bytes: stats.bytes,
                max_sent_per_round: stats.max_sent(),
                max_received_per_round: stats.max_received(),
            });
            report.comm.merge(&stats);
            report.trace.extend(trace);
            gains = Some(schedule);
        }
        observe(k, plant);
        let states = plant.feedback_states();
        let schedule = gains.as_ref().ok_or(ScheduleError::GainUnavailable { agent: 0, k })?;
        let commands = (0..n)
            .map(|i| {
                schedule
                    .feedback(k, i, plant.input_dim(i), &states)
                    .ok_or(ScheduleError::GainUnavailable { agent: i, k })
            })
            .collect::<Result<Vec<_>, _>>()?;
        plant.apply(k, &commands).map_err(|detail| ScheduleError::Plant { k, detail })?;
    }
    observe(cfg.steps, plant);
    Ok(report)
}
