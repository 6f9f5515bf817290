//! Verification suites behind `ddrhc verify`. Each one checks the library
//! against an independent computation and reports a named outcome.

use std::fmt;

use ddrhc_core::centralized::{cost_to_go, evaluate_cost, synthesize_window, GainSchedule};
use ddrhc_core::comm::{check_tv_constraints, ratio_to_f64, Harness, ScheduleConfig, TvAdmissibility};
use ddrhc_core::distributed::{rounds_required, synthesize_window_ti, DistributedConfig};
use ddrhc_core::linalg::rel_error;
use ddrhc_core::{Digraph, Mat, SynthesisError, WindowProblem};
use num_rational::BigRational;
use rand::Rng;

use crate::fixtures::{cliques, random_graph, random_problem, random_sparse_gains, random_vector, rng, star_out};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub lines: Vec<String>,
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", if self.passed { "ok" } else { "FAILED" }, self.name)?;
        for l in &self.lines {
            writeln!(f, "    {l}")?;
        }
        Ok(())
    }
}

/// Faults that can be planted to check that a suite actually fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Adds a gain block outside the coupling pattern.
    SparsityViolation,
}

/// Message-passing synthesis of a whole window with the default rules.
pub fn distributed_gains(problem: &WindowProblem) -> Result<GainSchedule, SynthesisError> {
    let mut harness = Harness::new(problem.agent_count(), rounds_required(problem.horizon()));
    Ok(synthesize_window_ti(problem, &mut harness, 1, DistributedConfig::default())?.window_gains())
}

/// Largest per-block relative Frobenius deviation of `got` from
/// `reference`; a block missing on either side counts as infinite.
pub fn max_block_error(got: &GainSchedule, reference: &GainSchedule) -> f64 {
    let mut worst = 0.0f64;
    for tau in reference.start()..reference.start() + reference.horizon() {
        if got.blocks(tau).len() != reference.blocks(tau).len() {
            return f64::INFINITY;
        }
        for (&(i, j), k) in reference.blocks(tau) {
            worst = match got.get(i, j, tau) {
                Some(g) => worst.max(rel_error(g, k)),
                None => f64::INFINITY,
            };
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactnessPoint {
    pub graph: String,
    pub seeds: usize,
    pub max_error: f64,
    /// Pairs missing from the neighbors' stored sets, summed over units.
    pub deficit: usize,
}

/// Distributed against centralized gains on random models over `graph`.
pub fn exactness_point(
    name: &str,
    graph: &Digraph,
    seeds: std::ops::Range<u64>,
    horizon: usize,
) -> Result<ExactnessPoint, SynthesisError> {
    let mut max_error = 0.0f64;
    let count = (seeds.end - seeds.start) as usize;
    for seed in seeds {
        let p = random_problem(&mut rng(seed), graph.clone(), horizon);
        let (central, _) = synthesize_window(&p)?;
        max_error = max_error.max(max_block_error(&distributed_gains(&p)?, &central));
    }
    let deficit = (0..graph.agent_count()).map(|i| graph.coverage_deficit(i)).sum();
    Ok(ExactnessPoint { graph: name.to_string(), seeds: count, max_error, deficit })
}

pub const EXACTNESS_TOL: f64 = 1e-9;

/// Exactness where every unit's neighbors store all the pairs it needs;
/// chain, ring and tree deviations are listed for reference.
pub fn exactness_suite(seeds: u64) -> SuiteOutcome {
    let covered = [
        ("complete N=4", Digraph::complete(4)),
        ("out-star N=5", star_out(5)),
        ("cliques 2+3+1", cliques(&[2, 3, 1])),
        ("self-loops N=5", Digraph::self_loops(5)),
    ];
    let reference = [("chain N=5", Digraph::chain(5)), ("ring N=6", Digraph::ring(6)), ("tree N=7", Digraph::binary_tree(7))];
    let mut lines = Vec::new();
    let mut passed = true;
    for (idx, (name, g)) in covered.iter().enumerate() {
        let base = 1000 * idx as u64;
        match exactness_point(name, g, base..base + seeds, 15) {
            Ok(pt) => {
                let ok = pt.deficit == 0 && pt.max_error <= EXACTNESS_TOL;
                passed &= ok;
                lines.push(format!("{name}: max gain deviation {:.3e} over {} seeds (deficit {})", pt.max_error, pt.seeds, pt.deficit));
            }
            Err(e) => {
                passed = false;
                lines.push(format!("{name}: synthesis failed: {e}"));
            }
        }
    }
    for (name, g) in &reference {
        match exactness_point(name, g, 0..seeds.min(5), 15) {
            Ok(pt) => lines.push(format!(
                "{name}: max gain deviation {:.3e} (deficit {}, approximation active; not checked)",
                pt.max_error, pt.deficit
            )),
            Err(e) => {
                passed = false;
                lines.push(format!("{name}: synthesis failed: {e}"));
            }
        }
    }
    SuiteOutcome { name: "exactness", passed, lines }
}

/// Worst `|J − x0ᵀ P x0| / max(J, ε)` over random sparse closed loops.
pub fn cost_identity_error(seeds: std::ops::Range<u64>) -> f64 {
    let mut worst = 0.0f64;
    for seed in seeds {
        let mut r = rng(seed);
        let n = r.random_range(1..=6);
        let h = r.random_range(1..=20);
        let density = r.random_range(0.0..0.6);
        let g = random_graph(&mut r, n, density);
        let p = random_problem(&mut r, g, h);
        let gains = random_sparse_gains(&mut r, &p);
        let x0 = random_vector(&mut r, p.state_dims().iter().sum());
        let j = evaluate_cost(&p, &gains, &x0).expect("consistent problem");
        let cost = cost_to_go(&p, &gains).expect("consistent problem");
        let quad = x0.dot(&(cost.at(p.start()) * &x0));
        worst = worst.max((j - quad).abs() / j.max(1e-12));
    }
    worst
}

pub const COST_TOL: f64 = 1e-9;

pub fn cost_identity_suite(seeds: u64) -> SuiteOutcome {
    let err = cost_identity_error(0..seeds);
    SuiteOutcome {
        name: "cost identity",
        passed: err <= COST_TOL,
        lines: vec![format!("max relative gap {err:.3e} over {seeds} random sparse closed loops")],
    }
}

/// Standard finite-horizon Riccati gains on the global matrices:
/// `K = (R + BᵀPB)⁻¹ BᵀPA`, `P ← HᵀQH + AᵀPA − AᵀPB K`.
pub fn riccati_gains(problem: &WindowProblem) -> Vec<Mat> {
    let (start, h) = (problem.start(), problem.horizon());
    let end = problem.assemble_global(start + h).expect("consistent problem");
    let mut p = end.h.transpose() * &end.q * &end.h;
    let mut gains = vec![Mat::zeros(0, 0); h];
    for tau in (start..start + h).rev() {
        let g = problem.assemble_global(tau).expect("consistent problem");
        let bt_p = g.b.transpose() * &p;
        let s = &g.r + &bt_p * &g.b;
        let k = s.lu().solve(&(&bt_p * &g.a)).expect("R + BᵀPB is nonsingular");
        p = g.h.transpose() * &g.q * &g.h + g.a.transpose() * &p * &g.a - g.a.transpose() * &p * &g.b * &k;
        gains[tau - start] = k;
    }
    gains
}

/// Worst relative deviation of the centralized and the distributed gains
/// from the Riccati gains on complete graphs.
pub fn lqr_equivalence_error(seeds: std::ops::Range<u64>) -> Result<(f64, f64), SynthesisError> {
    let (mut central_err, mut distributed_err) = (0.0f64, 0.0f64);
    for seed in seeds {
        let mut r = rng(seed);
        let n = r.random_range(1..=5);
        let h = r.random_range(1..=15);
        let p = random_problem(&mut r, Digraph::complete(n), h);
        let reference = riccati_gains(&p);
        let (central, _) = synthesize_window(&p)?;
        let distributed = distributed_gains(&p)?;
        let nd = p.state_dims();
        let md: Vec<usize> = p.agents.iter().map(|a| a.input_dim()).collect();
        for (off, kref) in reference.iter().enumerate() {
            let tau = p.start() + off;
            central_err = central_err.max(rel_error(&central.to_global(tau, &nd, &md), kref));
            distributed_err = distributed_err.max(rel_error(&distributed.to_global(tau, &nd, &md), kref));
        }
    }
    Ok((central_err, distributed_err))
}

pub const LQR_TOL: f64 = 1e-10;

pub fn lqr_suite(seeds: u64) -> SuiteOutcome {
    match lqr_equivalence_error(0..seeds) {
        Ok((c, d)) => SuiteOutcome {
            name: "LQR equivalence",
            passed: c <= LQR_TOL && d <= LQR_TOL,
            lines: vec![format!("centralized {c:.3e}, distributed {d:.3e} relative to the Riccati recursion ({seeds} seeds)")],
        },
        Err(e) => SuiteOutcome { name: "LQR equivalence", passed: false, lines: vec![format!("synthesis failed: {e}")] },
    }
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Link-duration figures of the reference shell.
pub const REFERENCE_DT_MAX: f64 = 1320.0;
pub const REFERENCE_DT_MIN: f64 = 360.0;

pub fn reference_schedule(horizon: usize, used: usize) -> ScheduleConfig {
    ScheduleConfig { t_c: 10.0, t_t: 1.0, horizon, used }
}

pub fn reference_admissibility(horizon: usize, used: usize) -> TvAdmissibility {
    check_tv_constraints(&reference_schedule(horizon, used), REFERENCE_DT_MAX, REFERENCE_DT_MIN)
        .expect("reference figures are valid")
}

/// Exact bounds for `T_c = 10`, `T_t = 1`, `Δt_max = 1320`, `Δt_min = 360`
/// written out by hand: `H < 1318/11`, `d < 359/11`, `d ≥ 1/5 + H/10`.
pub fn scheduling_suite() -> SuiteOutcome {
    let adm = reference_admissibility(100, 25);
    let mut lines = Vec::new();
    let checks = [
        ("H bound", &adm.horizon_bound, ratio(1318, 11)),
        ("d upper bound", &adm.used_upper, ratio(359, 11)),
        ("d lower offset", &adm.used_lower_offset, ratio(1, 5)),
        ("d lower slope", &adm.used_lower_slope, ratio(1, 10)),
    ];
    let mut passed = true;
    for (name, got, want) in checks {
        let ok = *got == want;
        passed &= ok;
        lines.push(format!("{name}: {got} = {:.4} ({})", ratio_to_f64(got), if ok { "exact" } else { "MISMATCH" }));
    }
    passed &= adm.admissible();
    lines.push(format!("(H, d) = (100, 25) admissible: {}", adm.admissible()));
    let edge = reference_admissibility(120, 25);
    passed &= !edge.admissible();
    lines.push(format!("(H, d) = (120, 25) admissible: {}", edge.admissible()));
    SuiteOutcome { name: "scheduling arithmetic", passed, lines }
}

/// First gain block, in step order, that lies outside its step's pattern.
pub fn first_pattern_violation(gains: &GainSchedule, problem: &WindowProblem) -> Option<(usize, usize, usize)> {
    (gains.start()..gains.start() + gains.horizon()).find_map(|tau| {
        let g = problem.topology.at(tau);
        gains.blocks(tau).keys().find(|&&(i, j)| !g.contains_edge(j, i)).map(|&(i, j)| (tau, i, j))
    })
}

pub fn sparsity_suite(seeds: u64, fault: Option<Fault>) -> SuiteOutcome {
    let mut lines = Vec::new();
    let mut passed = true;
    for seed in 0..seeds {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 6, 0.3);
        let p = random_problem(&mut r, g.clone(), 8);
        let mut gains = match distributed_gains(&p) {
            Ok(gains) => gains,
            Err(e) => {
                passed = false;
                lines.push(format!("seed {seed}: synthesis failed: {e}"));
                continue;
            }
        };
        if fault == Some(Fault::SparsityViolation) {
            if let Some((j, i)) = (0..6).flat_map(|i| (0..6).map(move |j| (j, i))).find(|&(j, i)| !g.contains_edge(j, i)) {
                let m = p.agents[i].input_dim();
                gains.insert(p.start(), i, j, Mat::from_element(m, p.state_dims()[j], 1e-3));
            }
        }
        if let Some((tau, i, j)) = first_pattern_violation(&gains, &p) {
            passed = false;
            lines.push(format!("seed {seed}: gain block K[{i},{j}] at step {tau} lies outside the coupling pattern"));
        }
    }
    if passed {
        lines.push(format!("{seeds} random topologies: every gain block inside its pattern"));
    }
    SuiteOutcome { name: "sparsity", passed, lines }
}

pub struct VerifyOptions {
    /// Seeds per suite; the exactness suite uses at most this many per graph.
    pub seeds: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seeds: 20, fault: None }
    }
}

pub fn run_verify(opts: &VerifyOptions) -> Vec<SuiteOutcome> {
    vec![
        exactness_suite(opts.seeds),
        cost_identity_suite(opts.seeds.max(1) * 5),
        lqr_suite(opts.seeds),
        scheduling_suite(),
        sparsity_suite(opts.seeds, opts.fault),
    ]
}
