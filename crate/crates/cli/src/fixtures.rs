//! Seeded random problem instances for the verification suites.

use std::collections::BTreeMap;
use std::sync::Arc;

use ddrhc_core::centralized::{GainSchedule, Provenance};
use ddrhc_core::model::{AgentStep, TabulatedAgent};
use ddrhc_core::{AgentModel, Digraph, Mat, TopologyWindow, Vector, WindowProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn random_psd(rng: &mut impl Rng, n: usize) -> Mat {
    let l = random_matrix(rng, n, n);
    &l * l.transpose()
}

/// LTV agents with 1–3 states, 1–2 inputs and 1–3 outputs on the given
/// per-step graphs.
pub fn random_problem_on(rng: &mut impl Rng, window: TopologyWindow) -> WindowProblem {
    let n = window.agent_count();
    let dims: Vec<(usize, usize, usize)> =
        (0..n).map(|_| (rng.random_range(1..=3), rng.random_range(1..=2), rng.random_range(1..=3))).collect();
    let agents = (0..n)
        .map(|i| {
            let (ni, mi, oi) = dims[i];
            let steps = window
                .graphs()
                .map(|(_, g)| AgentStep {
                    a: random_matrix(rng, ni, ni) * 0.8,
                    b: random_matrix(rng, ni, mi),
                    q: random_psd(rng, oi),
                    r: random_psd(rng, mi) + Mat::identity(mi, mi) * 0.5,
                    h: g.in_neighbors(i).iter().map(|&j| (j, random_matrix(rng, oi, dims[j].0))).collect::<BTreeMap<_, _>>(),
                })
                .collect();
            Arc::new(TabulatedAgent { start: window.start(), steps }) as Arc<dyn AgentModel>
        })
        .collect();
    WindowProblem::new(agents, window).expect("generated models match their window")
}

pub fn random_problem(rng: &mut impl Rng, graph: Digraph, horizon: usize) -> WindowProblem {
    random_problem_on(rng, TopologyWindow::constant(0, horizon, graph))
}

/// Digraph on `n` agents where each non-loop edge is present with
/// probability `density`.
pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> Digraph {
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if i != j && rng.random_bool(density) {
                edges.push((j, i));
            }
        }
    }
    Digraph::new(n, edges).expect("indices in range")
}

/// Arbitrary gains on every admissible block of the window.
pub fn random_sparse_gains(rng: &mut impl Rng, problem: &WindowProblem) -> GainSchedule {
    let (start, h) = (problem.start(), problem.horizon());
    let dims = problem.state_dims();
    let mut gains = GainSchedule::new(start, h, Provenance::Centralized);
    for tau in start..start + h {
        for (j, i) in problem.topology.at(tau).edges() {
            // K_{i,j} is admissible when j couples into i's output.
            let m = problem.agents[i].input_dim();
            gains.insert(tau, i, j, random_matrix(rng, m, dims[j]));
        }
    }
    gains
}

/// Out-star: agent 0 couples into every other output.
pub fn star_out(n: usize) -> Digraph {
    Digraph::new(n, (1..n).map(|i| (0, i))).expect("indices in range")
}

/// Disjoint complete subgraphs of the given sizes.
pub fn cliques(sizes: &[usize]) -> Digraph {
    let mut edges = Vec::new();
    let mut base = 0;
    for &s in sizes {
        for j in base..base + s {
            for i in base..base + s {
                edges.push((j, i));
            }
        }
        base += s;
    }
    Digraph::new(base, edges).expect("indices in range")
}
