//! Agent models and the global concatenation used by the reference solver.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::NetworkError;
use crate::linalg::{max_asymmetry, min_eigenvalue, offsets, Mat};
use crate::network::{AgentId, TopologyWindow};

/// Per-agent LTV model `x_i(τ+1) = A_i(τ) x_i(τ) + B_i(τ) u_i(τ)` with the
/// tracking output `z_i(τ) = Σ_{j ∈ D⁻_i(τ)} H_{i,j}(τ) x_j(τ)` and weights
/// `Q_i(τ)`, `R_i(τ)`.
pub trait AgentModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn a(&self, tau: usize) -> Mat;
    fn b(&self, tau: usize) -> Mat;
    fn q(&self, tau: usize) -> Mat;
    fn r(&self, tau: usize) -> Mat;
    /// Coupling block `H_{i,j}(τ)`, `None` when `j` is not coupled.
    fn h(&self, j: AgentId, tau: usize) -> Option<Mat>;

    fn output_dim(&self, tau: usize) -> usize {
        self.q(tau).nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtiAgent {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    pub h: BTreeMap<AgentId, Mat>,
}

impl AgentModel for LtiAgent {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn a(&self, _: usize) -> Mat {
        self.a.clone()
    }
    fn b(&self, _: usize) -> Mat {
        self.b.clone()
    }
    fn q(&self, _: usize) -> Mat {
        self.q.clone()
    }
    fn r(&self, _: usize) -> Mat {
        self.r.clone()
    }
    fn h(&self, j: AgentId, _: usize) -> Option<Mat> {
        self.h.get(&j).cloned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    pub h: BTreeMap<AgentId, Mat>,
}

/// Time-varying model stored step by step. Step `k` of the table applies at
/// `start + k`; queries outside the table use the nearest end.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedAgent {
    pub start: usize,
    pub steps: Vec<AgentStep>,
}

impl TabulatedAgent {
    fn step(&self, tau: usize) -> &AgentStep {
        &self.steps[tau.saturating_sub(self.start).min(self.steps.len() - 1)]
    }
}

impl AgentModel for TabulatedAgent {
    fn state_dim(&self) -> usize {
        self.steps[0].a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.steps[0].b.ncols()
    }
    fn a(&self, tau: usize) -> Mat {
        self.step(tau).a.clone()
    }
    fn b(&self, tau: usize) -> Mat {
        self.step(tau).b.clone()
    }
    fn q(&self, tau: usize) -> Mat {
        self.step(tau).q.clone()
    }
    fn r(&self, tau: usize) -> Mat {
        self.step(tau).r.clone()
    }
    fn h(&self, j: AgentId, tau: usize) -> Option<Mat> {
        self.step(tau).h.get(&j).cloned()
    }
}

/// Global matrices of the network at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMatrices {
    pub a: Mat,
    pub b: Mat,
    pub h: Mat,
    pub q: Mat,
    pub r: Mat,
    pub state_offsets: Vec<usize>,
    pub input_offsets: Vec<usize>,
    pub output_offsets: Vec<usize>,
}

/// The agents and predicted topology of one synthesis window
/// `[k, k + horizon]`.
#[derive(Clone)]
pub struct WindowProblem {
    pub agents: Vec<Arc<dyn AgentModel>>,
    pub topology: TopologyWindow,
}

impl WindowProblem {
    pub fn new(agents: Vec<Arc<dyn AgentModel>>, topology: TopologyWindow) -> Result<Self, NetworkError> {
        if agents.len() != topology.agent_count() {
            return Err(NetworkError::AgentCount { topology: topology.agent_count(), models: agents.len() });
        }
        let problem = Self { agents, topology };
        problem.validate(false)?;
        Ok(problem)
    }

    pub fn start(&self) -> usize {
        self.topology.start()
    }

    pub fn horizon(&self) -> usize {
        self.topology.horizon()
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn state_dims(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.state_dim()).collect()
    }

    /// Checks shapes, weight definiteness and coupling blocks on every step of
    /// the window. With `strict`, coupling blocks for non-neighbors are
    /// rejected too.
    pub fn validate(&self, strict: bool) -> Result<(), NetworkError> {
        let n: Vec<usize> = self.state_dims();
        let end = self.start() + self.horizon();
        for (i, agent) in self.agents.iter().enumerate() {
            let m = agent.input_dim();
            for tau in self.start()..=end {
                let g = self.topology.at(tau);
                let q = agent.q(tau);
                let o = q.nrows();
                check_shape(i, "Q", &q, (o, o))?;
                check_symmetric(i, "Q", &q, tau)?;
                if min_eigenvalue(&q) < -1e-9 * q.amax().max(1.0) {
                    return Err(NetworkError::NotDefinite {
                        agent: i,
                        what: "Q",
                        requirement: "positive semidefinite",
                        tau,
                    });
                }
                for &j in g.in_neighbors(i) {
                    let h = agent
                        .h(j, tau)
                        .ok_or(NetworkError::MissingCoupling { agent: i, neighbor: j, tau })?;
                    check_shape(i, &format!("H[{j}]"), &h, (o, n[j]))?;
                }
                if strict {
                    if let Some(j) = (0..n.len()).find(|&j| !g.contains_edge(j, i) && agent.h(j, tau).is_some()) {
                        return Err(NetworkError::UnexpectedCoupling { agent: i, neighbor: j, tau });
                    }
                }
                if tau == end {
                    continue;
                }
                check_shape(i, "A", &agent.a(tau), (n[i], n[i]))?;
                check_shape(i, "B", &agent.b(tau), (n[i], m))?;
                let r = agent.r(tau);
                check_shape(i, "R", &r, (m, m))?;
                check_symmetric(i, "R", &r, tau)?;
                if r.clone().cholesky().is_none() {
                    return Err(NetworkError::NotDefinite {
                        agent: i,
                        what: "R",
                        requirement: "positive definite",
                        tau,
                    });
                }
            }
        }
        Ok(())
    }

    /// Block-diagonal `A`, `B`, `Q`, `R` and the coupled `H` at step `tau`.
    pub fn assemble_global(&self, tau: usize) -> Result<GlobalMatrices, NetworkError> {
        let g = self.topology.at(tau);
        let ns = offsets(self.agents.iter().map(|a| a.state_dim()));
        let ms = offsets(self.agents.iter().map(|a| a.input_dim()));
        let os = offsets(self.agents.iter().map(|a| a.output_dim(tau)));
        let (nt, mt, ot) = (*ns.last().unwrap(), *ms.last().unwrap(), *os.last().unwrap());
        let mut out = GlobalMatrices {
            a: Mat::zeros(nt, nt),
            b: Mat::zeros(nt, mt),
            h: Mat::zeros(ot, nt),
            q: Mat::zeros(ot, ot),
            r: Mat::zeros(mt, mt),
            state_offsets: ns.clone(),
            input_offsets: ms.clone(),
            output_offsets: os.clone(),
        };
        for (i, agent) in self.agents.iter().enumerate() {
            let (ni, mi, oi) = (ns[i + 1] - ns[i], ms[i + 1] - ms[i], os[i + 1] - os[i]);
            let a = agent.a(tau);
            check_shape(i, "A", &a, (ni, ni))?;
            out.a.view_mut((ns[i], ns[i]), (ni, ni)).copy_from(&a);
            let b = agent.b(tau);
            check_shape(i, "B", &b, (ni, mi))?;
            out.b.view_mut((ns[i], ms[i]), (ni, mi)).copy_from(&b);
            let r = agent.r(tau);
            check_shape(i, "R", &r, (mi, mi))?;
            out.r.view_mut((ms[i], ms[i]), (mi, mi)).copy_from(&r);
            out.q.view_mut((os[i], os[i]), (oi, oi)).copy_from(&agent.q(tau));
            for &j in g.in_neighbors(i) {
                let nj = ns[j + 1] - ns[j];
                let h = agent.h(j, tau).ok_or(NetworkError::MissingCoupling { agent: i, neighbor: j, tau })?;
                check_shape(i, &format!("H[{j}]"), &h, (oi, nj))?;
                out.h.view_mut((os[i], ns[j]), (oi, nj)).copy_from(&h);
            }
        }
        Ok(out)
    }
}

fn check_shape(agent: AgentId, what: &str, m: &Mat, expected: (usize, usize)) -> Result<(), NetworkError> {
    if m.shape() != expected {
        return Err(NetworkError::DimensionMismatch {
            agent,
            what: what.to_string(),
            expected,
            found: m.shape(),
        });
    }
    Ok(())
}

fn check_symmetric(agent: AgentId, what: &'static str, m: &Mat, tau: usize) -> Result<(), NetworkError> {
    if max_asymmetry(m) > 1e-9 * m.amax().max(1.0) {
        return Err(NetworkError::NotSymmetric { agent, what, tau });
    }
    Ok(())
}
