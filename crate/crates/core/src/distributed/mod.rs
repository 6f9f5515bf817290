//! Decentralized gain synthesis: each unit computes the gain columns of its
//! own agent from neighbor messages, approximating the cost-to-go by the
//! blocks its out-neighbors hold and masking everything else.

mod blocks;
mod unit;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use blocks::{
    empirical_loss, local_gain, masked_pairs, propagate_blocks, psd_repair, select_block, select_with,
    terminal_blocks, Candidate, ColumnData, CostBlockStore, SelectionRule,
};
pub use unit::{Unit, UnitReport};

use crate::centralized::{GainSchedule, Provenance};
use crate::comm::{CommStats, Feasibility, Harness, Message};
use crate::error::SynthesisError;
use crate::model::WindowProblem;
use crate::network::{AgentId, TopologyWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistributedConfig {
    pub selection: SelectionRule,
    /// Repair negative eigenvalues of diagonal blocks before propagation.
    pub psd_repair: bool,
    /// Advance units of a round on the rayon pool instead of in order.
    pub parallel: bool,
}

impl Default for DistributedConfig {
    fn default() -> Self {
        Self { selection: SelectionRule::MinLossAverage, psd_repair: true, parallel: false }
    }
}

/// Everything the units produced in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedOutcome {
    pub start: usize,
    pub horizon: usize,
    pub used: usize,
    pub units: Vec<UnitReport>,
    /// Counters of the session's harness.
    pub comm: CommStats,
}

impl DistributedOutcome {
    /// Every `K_{p,i}(τ)` of the window, assembled from the column owners.
    pub fn window_gains(&self) -> GainSchedule {
        let mut g = GainSchedule::new(self.start, self.horizon, Provenance::ColumnUnits);
        for u in &self.units {
            for (&(tau, p), k) in &u.gains_out {
                g.insert(tau, p, u.id, k.clone());
            }
        }
        g.set_used(self.used);
        g
    }

    /// The gains each unit received for actuation, `K_{i,p}(τ)` over
    /// `[start, start + used - 1]`.
    pub fn actuation_gains(&self) -> GainSchedule {
        let mut g = GainSchedule::new(self.start, self.used, Provenance::ColumnUnits);
        for u in &self.units {
            for (&(tau, p), k) in &u.gains_in {
                g.insert(tau, u.id, p, k.clone());
            }
        }
        g
    }

    pub fn max_peak_bytes(&self) -> usize {
        self.units.iter().map(|u| u.peak_bytes).max().unwrap_or(0)
    }

    pub fn masked_pairs(&self) -> usize {
        self.units.iter().map(|u| u.masked_pairs).sum()
    }

    pub fn max_loss(&self) -> usize {
        self.units.iter().map(|u| u.max_loss).max().unwrap_or(0)
    }
}

/// Rounds the protocol needs for a window of `horizon` steps.
pub fn rounds_required(horizon: usize) -> usize {
    horizon + 2
}

/// Runs the protocol on the window's own topology.
pub fn synthesize_window_ti(
    problem: &WindowProblem,
    harness: &mut Harness,
    used: usize,
    cfg: DistributedConfig,
) -> Result<DistributedOutcome, SynthesisError> {
    run_protocol(problem, harness, used, cfg)
}

/// Drops every coupling `(j, i)` at step τ unless `j ∈ C_i(τ)` and
/// `i ∈ C_j(τ)`. Inside the actuated prefix `[k, k+used-1]` nothing may be
/// dropped.
pub fn restrict_window(
    window: &TopologyWindow,
    feasibility: &Feasibility,
    used: usize,
) -> Result<TopologyWindow, SynthesisError> {
    let k = window.start();
    let mut violation = None;
    let topology = window.restrict(|tau, j, i| {
        let ok = feasibility.contains(tau, i, j) && feasibility.contains(tau, j, i);
        if !ok && tau < k + used && violation.is_none() {
            violation = Some(SynthesisError::Infeasible { unit: i, neighbor: j, tau });
        }
        ok
    });
    match violation {
        Some(err) => Err(err),
        None => Ok(topology),
    }
}

/// [`restrict_window`] applied to a whole problem; the models are kept.
pub fn restrict_to_feasible(
    problem: &WindowProblem,
    feasibility: &Feasibility,
    used: usize,
) -> Result<WindowProblem, SynthesisError> {
    let topology = restrict_window(&problem.topology, feasibility, used)?;
    Ok(WindowProblem { agents: problem.agents.clone(), topology })
}

/// Runs the protocol on the predicted topology restricted to feasible links.
pub fn synthesize_window_tv(
    problem: &WindowProblem,
    feasibility: &Feasibility,
    harness: &mut Harness,
    used: usize,
    cfg: DistributedConfig,
) -> Result<DistributedOutcome, SynthesisError> {
    let restricted = restrict_to_feasible(problem, feasibility, used)?;
    run_protocol(&restricted, harness, used, cfg)
}

fn link_allowed(problem: &WindowProblem, round: usize, used: usize, from: AgentId, to: AgentId) -> bool {
    let (k, h) = (problem.start(), problem.horizon());
    if round <= h {
        problem.topology.at(k + h - round).adjacent(from, to)
    } else {
        (k..k + used).any(|tau| problem.topology.at(tau).adjacent(from, to))
    }
}

fn run_protocol(
    problem: &WindowProblem,
    harness: &mut Harness,
    used: usize,
    cfg: DistributedConfig,
) -> Result<DistributedOutcome, SynthesisError> {
    let h = problem.horizon();
    if h == 0 {
        return Err(SynthesisError::InvalidHorizon(h));
    }
    if used == 0 || used > h {
        return Err(SynthesisError::InvalidUsedSteps { used, horizon: h });
    }
    harness.require_rounds(rounds_required(h))?;
    let n = problem.agent_count();
    let mut units = (0..n).map(|i| Unit::new(problem, i, used, cfg)).collect::<Result<Vec<_>, _>>()?;
    let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
    for round in 0..=rounds_required(h) {
        let outboxes: Vec<Result<Vec<Message>, SynthesisError>> = if cfg.parallel {
            units.par_iter_mut().zip(inboxes.into_par_iter()).map(|(u, inbox)| u.on_round(round, inbox)).collect()
        } else {
            units.iter_mut().zip(inboxes).map(|(u, inbox)| u.on_round(round, inbox)).collect()
        };
        let outboxes = outboxes.into_iter().collect::<Result<Vec<_>, _>>()?;
        if round == rounds_required(h) {
            debug_assert!(outboxes.iter().all(Vec::is_empty));
            break;
        }
        inboxes = harness.exchange(|from, to| link_allowed(problem, round, used, from, to), outboxes)?;
    }
    let units: Vec<UnitReport> = units.into_iter().map(Unit::into_report).collect();
    Ok(DistributedOutcome {
        start: problem.start(),
        horizon: h,
        used,
        units,
        comm: harness.stats().clone(),
    })
}

