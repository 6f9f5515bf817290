//! Adapters that plug the synthesis routines and a model-matched plant into
//! the closed-loop driver.

use std::sync::Arc;

use crate::centralized::{synthesize_window, GainSchedule, Provenance};
use crate::comm::{Feasibility, Harness, Plant, ScheduleConfig, WindowSynthesizer};
use crate::distributed::{synthesize_window_ti, synthesize_window_tv, DistributedConfig};
use crate::error::SynthesisError;
use crate::linalg::Vector;
use crate::model::{AgentModel, WindowProblem};
use crate::network::{AgentId, Topology};

/// Agent models plus their coupling topology over unbounded time.
#[derive(Clone)]
pub struct Network {
    pub agents: Vec<Arc<dyn AgentModel>>,
    pub topology: Topology,
}

impl Network {
    pub fn new(agents: Vec<Arc<dyn AgentModel>>, topology: Topology) -> Self {
        Self { agents, topology }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn window(&self, k: usize, horizon: usize) -> Result<WindowProblem, SynthesisError> {
        Ok(WindowProblem::new(self.agents.clone(), self.topology.window(k, horizon))?)
    }
}

type LinkPredicate = dyn Fn(AgentId, AgentId, f64) -> bool + Send + Sync;

/// Message-passing synthesis of each window. With a link predicate the
/// window topology is restricted to feasible links first.
pub struct DistributedSynthesizer {
    pub network: Network,
    pub schedule: ScheduleConfig,
    pub config: DistributedConfig,
    pub link: Option<Arc<LinkPredicate>>,
}

impl WindowSynthesizer for DistributedSynthesizer {
    fn synthesize(&mut self, k: usize, harness: &mut Harness) -> Result<GainSchedule, SynthesisError> {
        let problem = self.network.window(k, self.schedule.horizon)?;
        let used = self.schedule.used;
        let outcome = match &self.link {
            None => synthesize_window_ti(&problem, harness, used, self.config)?,
            Some(link) => {
                let feas = Feasibility::for_window(link.as_ref(), problem.agent_count(), k, &self.schedule);
                synthesize_window_tv(&problem, &feas, harness, used, self.config)?
            }
        };
        self.network.topology.forget_before(k);
        Ok(outcome.actuation_gains())
    }
}

/// The centralized relaxed synthesis, for comparison runs. It exchanges no
/// messages.
pub struct CentralizedSynthesizer {
    pub network: Network,
    pub schedule: ScheduleConfig,
}

impl WindowSynthesizer for CentralizedSynthesizer {
    fn synthesize(&mut self, k: usize, harness: &mut Harness) -> Result<GainSchedule, SynthesisError> {
        harness.require_rounds(self.schedule.horizon + 2)?;
        let problem = self.network.window(k, self.schedule.horizon)?;
        let (gains, _) = synthesize_window(&problem)?;
        let mut used = GainSchedule::new(k, self.schedule.used, Provenance::Centralized);
        for tau in k..k + self.schedule.used {
            for (&(i, j), g) in gains.blocks(tau) {
                used.insert(tau, i, j, g.clone());
            }
        }
        Ok(used)
    }
}

/// Plant that evolves exactly as the synthesis model, and records the
/// accumulated stage cost `zᵀQz + uᵀRu`.
pub struct LinearPlant {
    pub network: Network,
    pub states: Vec<Vector>,
    pub k: usize,
    pub cost: f64,
}

impl LinearPlant {
    pub fn new(network: Network, x0: Vec<Vector>) -> Self {
        Self { network, states: x0, k: 0, cost: 0.0 }
    }

    /// Tracking outputs `z_i(k)` at the current step.
    pub fn outputs(&self) -> Vec<Vector> {
        let g = self.network.topology.at(self.k);
        (0..self.network.agent_count())
            .map(|i| {
                let agent = &self.network.agents[i];
                let mut z = Vector::zeros(agent.output_dim(self.k));
                for &j in g.in_neighbors(i) {
                    z += agent.h(j, self.k).expect("coupling block for in-neighbor") * &self.states[j];
                }
                z
            })
            .collect()
    }

    pub fn output_norm(&self) -> f64 {
        self.outputs().iter().map(|z| z.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn output_cost(&self) -> f64 {
        self.outputs()
            .iter()
            .enumerate()
            .map(|(i, z)| z.dot(&(self.network.agents[i].q(self.k) * z)))
            .sum()
    }
}

impl Plant for LinearPlant {
    fn agent_count(&self) -> usize {
        self.network.agent_count()
    }

    fn input_dim(&self, i: AgentId) -> usize {
        self.network.agents[i].input_dim()
    }

    fn feedback_states(&self) -> Vec<Vector> {
        self.states.clone()
    }

    fn apply(&mut self, k: usize, commands: &[Vector]) -> Result<(), String> {
        self.cost += self.output_cost();
        for (i, u) in commands.iter().enumerate() {
            let agent = &self.network.agents[i];
            self.cost += u.dot(&(agent.r(k) * u));
            self.states[i] = agent.a(k) * &self.states[i] + agent.b(k) * u;
        }
        self.k = k + 1;
        Ok(())
    }
}
