//! Centralized one-step relaxed synthesis on global matrices.
//!
//! For every column agent `i` the gains `K_{p,i}(τ)`, `p ∈ D⁺_i(τ)`, solve
//! `S̃_i K̃_i = P̃_i` with the full cost-to-go `P(τ+1)`; `P(τ)` then follows
//! from the closed-loop Lyapunov-type update with the sparse `K(τ)`.

use std::collections::BTreeMap;

use crate::error::{NetworkError, ScheduleError, SynthesisError};
use crate::linalg::{offsets, solve_spd, sub, symmetrize, Mat, Vector};
use crate::model::WindowProblem;
use crate::network::{AgentId, TopologyWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Centralized,
    /// Block `(i, j)` was computed by unit `j` and delivered to unit `i`.
    ColumnUnits,
}

/// Sparse block gains `K_{i,j}(τ)` over `[start, start + horizon - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    start: usize,
    steps: Vec<BTreeMap<(AgentId, AgentId), Mat>>,
    used: usize,
    provenance: Provenance,
}

/// One scalar entry of a gain block, for CSV export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEntry {
    pub tau: usize,
    pub row_agent: AgentId,
    pub col_agent: AgentId,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl GainSchedule {
    pub fn new(start: usize, horizon: usize, provenance: Provenance) -> Self {
        Self { start, steps: vec![BTreeMap::new(); horizon], used: horizon, provenance }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Number of leading steps meant for actuation.
    pub fn used(&self) -> usize {
        self.used
    }

    pub fn set_used(&mut self, d: usize) {
        self.used = d.min(self.horizon());
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn computed_by(&self, _i: AgentId, j: AgentId) -> Option<AgentId> {
        match self.provenance {
            Provenance::Centralized => None,
            Provenance::ColumnUnits => Some(j),
        }
    }

    pub fn covers(&self, tau: usize) -> bool {
        tau >= self.start && tau < self.start + self.horizon()
    }

    pub fn insert(&mut self, tau: usize, i: AgentId, j: AgentId, k: Mat) {
        assert!(self.covers(tau), "step {tau} outside the gain window");
        self.steps[tau - self.start].insert((i, j), k);
    }

    pub fn get(&self, i: AgentId, j: AgentId, tau: usize) -> Option<&Mat> {
        if !self.covers(tau) {
            return None;
        }
        self.steps[tau - self.start].get(&(i, j))
    }

    pub fn blocks(&self, tau: usize) -> &BTreeMap<(AgentId, AgentId), Mat> {
        &self.steps[tau - self.start]
    }

    /// Whether every stored block lies in the sparsity pattern of its step.
    pub fn respects(&self, topology: &TopologyWindow) -> bool {
        self.steps.iter().enumerate().all(|(off, blocks)| {
            let g = topology.at(self.start + off);
            blocks.keys().all(|&(i, j)| g.contains_edge(j, i))
        })
    }

    /// Dense `K(τ)`; absent blocks are zero.
    pub fn to_global(&self, tau: usize, state_dims: &[usize], input_dims: &[usize]) -> Mat {
        let ns = offsets(state_dims.iter().copied());
        let ms = offsets(input_dims.iter().copied());
        let mut k = Mat::zeros(*ms.last().unwrap(), *ns.last().unwrap());
        for (&(i, j), block) in self.blocks(tau) {
            k.view_mut((ms[i], ns[j]), block.shape()).copy_from(block);
        }
        k
    }

    /// `u_i(τ) = -Σ_j K_{i,j}(τ) x_j(τ)` over the stored blocks of row `i`.
    pub fn feedback(&self, tau: usize, i: AgentId, m: usize, states: &[Vector]) -> Option<Vector> {
        if !self.covers(tau) {
            return None;
        }
        let mut u = Vector::zeros(m);
        let mut any = false;
        for (&(_, j), k) in self.blocks(tau).range((i, 0)..(i + 1, 0)) {
            u -= k * &states[j];
            any = true;
        }
        any.then_some(u)
    }

    pub fn entries(&self) -> Vec<GainEntry> {
        let mut out = Vec::new();
        for (off, blocks) in self.steps.iter().enumerate() {
            for (&(i, j), k) in blocks {
                for r in 0..k.nrows() {
                    for c in 0..k.ncols() {
                        out.push(GainEntry {
                            tau: self.start + off,
                            row_agent: i,
                            col_agent: j,
                            row: r,
                            col: c,
                            value: k[(r, c)],
                        });
                    }
                }
            }
        }
        out
    }
}

/// Cost-to-go matrices `P(τ)` for `τ ∈ [start, start + horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostToGo {
    start: usize,
    p: Vec<Mat>,
}

impl CostToGo {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn at(&self, tau: usize) -> &Mat {
        &self.p[tau - self.start]
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

fn terminal(problem: &WindowProblem) -> Result<Mat, NetworkError> {
    let g = problem.assemble_global(problem.start() + problem.horizon())?;
    Ok(symmetrize(&(g.h.transpose() * &g.q * &g.h)))
}

fn propagate(problem: &WindowProblem, tau: usize, k: &Mat, next: &Mat) -> Result<Mat, NetworkError> {
    let g = problem.assemble_global(tau)?;
    let acl = &g.a - &g.b * k;
    let p = g.h.transpose() * &g.q * &g.h + k.transpose() * &g.r * k + acl.transpose() * next * &acl;
    Ok(symmetrize(&p))
}

/// Backward pass over the window with the full cost-to-go.
pub fn synthesize_window(problem: &WindowProblem) -> Result<(GainSchedule, CostToGo), SynthesisError> {
    let (start, horizon) = (problem.start(), problem.horizon());
    if horizon == 0 {
        return Err(SynthesisError::InvalidHorizon(0));
    }
    let n = problem.agent_count();
    let state_dims = problem.state_dims();
    let input_dims: Vec<usize> = problem.agents.iter().map(|a| a.input_dim()).collect();
    let ns = offsets(state_dims.iter().copied());
    let ms = offsets(input_dims.iter().copied());

    let mut gains = GainSchedule::new(start, horizon, Provenance::Centralized);
    let mut p = vec![Mat::zeros(0, 0); horizon + 1];
    p[horizon] = terminal(problem)?;

    for tau in (start..start + horizon).rev() {
        let g = problem.assemble_global(tau)?;
        let graph = problem.topology.at(tau);
        let next = &p[tau + 1 - start];
        let mut k_global = Mat::zeros(*ms.last().unwrap(), *ns.last().unwrap());
        for i in 0..n {
            let dp = graph.out_neighbors(i);
            let so = offsets(dp.iter().map(|&q| input_dims[q]));
            let total = *so.last().unwrap();
            let mut s = Mat::zeros(total, total);
            let mut rhs = Mat::zeros(total, state_dims[i]);
            for (a, &pa) in dp.iter().enumerate() {
                let bp = sub(&g.b, ns[pa], ms[pa], state_dims[pa], input_dims[pa]);
                for (b, &qb) in dp.iter().enumerate() {
                    let bq = sub(&g.b, ns[qb], ms[qb], state_dims[qb], input_dims[qb]);
                    let pblk = sub(next, ns[pa], ns[qb], state_dims[pa], state_dims[qb]);
                    let mut blk = bp.transpose() * pblk * bq;
                    if a == b {
                        blk += sub(&g.r, ms[pa], ms[pa], input_dims[pa], input_dims[pa]);
                    }
                    s.view_mut((so[a], so[b]), blk.shape()).copy_from(&blk);
                }
                let ai = sub(&g.a, ns[i], ns[i], state_dims[i], state_dims[i]);
                let pblk = sub(next, ns[pa], ns[i], state_dims[pa], state_dims[i]);
                let blk = bp.transpose() * pblk * ai;
                rhs.view_mut((so[a], 0), blk.shape()).copy_from(&blk);
            }
            let kt = solve_spd(&s, &rhs).ok_or(SynthesisError::Singular { agent: i, tau })?;
            for (a, &pa) in dp.iter().enumerate() {
                let blk = sub(&kt, so[a], 0, input_dims[pa], state_dims[i]);
                k_global.view_mut((ms[pa], ns[i]), blk.shape()).copy_from(&blk);
                gains.insert(tau, pa, i, blk);
            }
        }
        p[tau - start] = propagate(problem, tau, &k_global, next)?;
    }
    Ok((gains, CostToGo { start, p }))
}

/// `P(τ)` over the window for an arbitrary gain schedule; missing blocks
/// count as zero.
pub fn cost_to_go(problem: &WindowProblem, gains: &GainSchedule) -> Result<CostToGo, NetworkError> {
    let (start, horizon) = (problem.start(), problem.horizon());
    let state_dims = problem.state_dims();
    let input_dims: Vec<usize> = problem.agents.iter().map(|a| a.input_dim()).collect();
    let mut p = vec![Mat::zeros(0, 0); horizon + 1];
    p[horizon] = terminal(problem)?;
    for tau in (start..start + horizon).rev() {
        let k = if gains.covers(tau) {
            gains.to_global(tau, &state_dims, &input_dims)
        } else {
            Mat::zeros(input_dims.iter().sum(), state_dims.iter().sum())
        };
        p[tau - start] = propagate(problem, tau, &k, &p[tau + 1 - start])?;
    }
    Ok(CostToGo { start, p })
}

/// Finite-window cost of the closed loop `x(τ+1) = (A - BK) x(τ)` from the
/// global state `x0`, including the terminal output term.
pub fn evaluate_cost(problem: &WindowProblem, gains: &GainSchedule, x0: &Vector) -> Result<f64, NetworkError> {
    let (start, horizon) = (problem.start(), problem.horizon());
    let state_dims = problem.state_dims();
    let input_dims: Vec<usize> = problem.agents.iter().map(|a| a.input_dim()).collect();
    let mut x = x0.clone();
    let mut cost = 0.0;
    for tau in start..start + horizon {
        let g = problem.assemble_global(tau)?;
        let k = if gains.covers(tau) {
            gains.to_global(tau, &state_dims, &input_dims)
        } else {
            Mat::zeros(input_dims.iter().sum(), state_dims.iter().sum())
        };
        let z = &g.h * &x;
        let u = -(&k * &x);
        cost += z.dot(&(&g.q * &z)) + u.dot(&(&g.r * &u));
        x = &g.a * &x + &g.b * &u;
    }
    let g = problem.assemble_global(start + horizon)?;
    let z = &g.h * &x;
    Ok(cost + z.dot(&(&g.q * &z)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub outputs: Vec<Vector>,
}

/// Applies `gains` for `steps` steps from the window start. Every step must
/// be covered by the schedule and lie inside the window.
pub fn closed_loop_rollout(
    problem: &WindowProblem,
    gains: &GainSchedule,
    x0: &Vector,
    steps: usize,
) -> Result<Rollout, ScheduleError> {
    let start = problem.start();
    if steps > problem.horizon() {
        return Err(ScheduleError::InvalidConfig(format!(
            "rollout of {steps} steps exceeds the window of {} steps",
            problem.horizon()
        )));
    }
    let state_dims = problem.state_dims();
    let input_dims: Vec<usize> = problem.agents.iter().map(|a| a.input_dim()).collect();
    let mut out = Rollout { states: vec![x0.clone()], inputs: Vec::new(), outputs: Vec::new() };
    let mut x = x0.clone();
    for tau in start..start + steps {
        if !gains.covers(tau) {
            return Err(ScheduleError::GainUnavailable { agent: 0, k: tau });
        }
        let g = problem.assemble_global(tau).map_err(SynthesisError::from)?;
        let k = gains.to_global(tau, &state_dims, &input_dims);
        let u = -(&k * &x);
        out.outputs.push(&g.h * &x);
        x = &g.a * &x + &g.b * &u;
        out.inputs.push(u);
        out.states.push(x.clone());
    }
    let g = problem.assemble_global(start + steps).map_err(SynthesisError::from)?;
    out.outputs.push(&g.h * &x);
    Ok(out)
}
