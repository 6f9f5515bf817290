#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use ddrhc_core::model::{AgentStep, TabulatedAgent};
use ddrhc_core::{AgentModel, Digraph, Mat, TopologyWindow, WindowProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let l = random_matrix(rng, n, n);
    &l * l.transpose()
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    random_psd(rng, n) + Mat::identity(n, n) * 0.5
}

pub struct Dims {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub o: Vec<usize>,
}

pub fn random_dims(rng: &mut ChaCha8Rng, agents: usize) -> Dims {
    Dims {
        n: (0..agents).map(|_| rng.random_range(1..=3)).collect(),
        m: (0..agents).map(|_| rng.random_range(1..=2)).collect(),
        o: (0..agents).map(|_| rng.random_range(1..=3)).collect(),
    }
}

/// Random time-varying models over `[start, start + horizon]` on the given
/// per-step graphs.
pub fn random_problem_on(rng: &mut ChaCha8Rng, window: TopologyWindow) -> WindowProblem {
    let agents = window.agent_count();
    let dims = random_dims(rng, agents);
    let mut models: Vec<Arc<dyn AgentModel>> = Vec::new();
    for i in 0..agents {
        let mut steps = Vec::new();
        for (_, g) in window.graphs() {
            let mut h = BTreeMap::new();
            for &j in g.in_neighbors(i) {
                h.insert(j, random_matrix(rng, dims.o[i], dims.n[j]));
            }
            steps.push(AgentStep {
                a: random_matrix(rng, dims.n[i], dims.n[i]) * 0.8,
                b: random_matrix(rng, dims.n[i], dims.m[i]),
                q: random_psd(rng, dims.o[i]),
                r: random_pd(rng, dims.m[i]),
                h,
            });
        }
        models.push(Arc::new(TabulatedAgent { start: window.start(), steps }));
    }
    WindowProblem::new(models, window).unwrap()
}

pub fn random_problem(rng: &mut ChaCha8Rng, graph: Digraph, horizon: usize) -> WindowProblem {
    random_problem_on(rng, TopologyWindow::constant(0, horizon, graph))
}

/// Largest per-block relative Frobenius deviation between two schedules
/// over the same support.
pub fn max_block_error(a: &ddrhc_core::centralized::GainSchedule, reference: &ddrhc_core::centralized::GainSchedule) -> f64 {
    let mut worst = 0.0f64;
    for tau in reference.start()..reference.start() + reference.horizon() {
        let ref_blocks = reference.blocks(tau);
        assert_eq!(a.blocks(tau).len(), ref_blocks.len(), "support differs at step {tau}");
        for (&(i, j), k) in ref_blocks {
            let got = a.get(i, j, tau).unwrap_or_else(|| panic!("block ({i},{j}) missing at {tau}"));
            worst = worst.max(ddrhc_core::linalg::rel_error(got, k));
        }
    }
    worst
}
