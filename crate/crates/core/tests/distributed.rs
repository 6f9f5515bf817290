mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{max_block_error, random_matrix, random_problem, random_problem_on, rng};
use ddrhc_core::centralized::synthesize_window;
use ddrhc_core::comm::{Feasibility, Harness};
use ddrhc_core::distributed::{
    psd_repair, restrict_to_feasible, rounds_required, synthesize_window_ti, synthesize_window_tv, DistributedConfig,
    DistributedOutcome,
};
use ddrhc_core::linalg::rel_error;
use ddrhc_core::{
    AgentModel, CommError, Digraph, LtiAgent, Mat, SynthesisError, TopologyWindow, WindowProblem,
};
use proptest::prelude::*;

fn run(problem: &WindowProblem, used: usize, cfg: DistributedConfig) -> DistributedOutcome {
    let mut harness = Harness::new(problem.agent_count(), rounds_required(problem.horizon()));
    synthesize_window_ti(problem, &mut harness, used, cfg).unwrap()
}

fn no_repair() -> DistributedConfig {
    DistributedConfig { psd_repair: false, ..Default::default() }
}

fn star_out(n: usize) -> Digraph {
    Digraph::new(n, (1..n).map(|i| (0, i))).unwrap()
}

fn star_in(n: usize) -> Digraph {
    Digraph::new(n, (1..n).map(|i| (i, 0))).unwrap()
}

/// Disjoint complete subgraphs of the given sizes.
fn cliques(sizes: &[usize]) -> Digraph {
    let n = sizes.iter().sum();
    let mut edges = Vec::new();
    let mut first = 0;
    for &s in sizes {
        for j in first..first + s {
            for i in first..first + s {
                edges.push((j, i));
            }
        }
        first += s;
    }
    Digraph::new(n, edges).unwrap()
}

fn total_deficit(g: &Digraph) -> usize {
    (0..g.agent_count()).map(|i| g.coverage_deficit(i)).sum()
}

/// The masked backward pass computed with direct access to every model and
/// every other unit's blocks, written term by term.
struct MaskedOracle {
    gains: BTreeMap<(usize, usize, usize), Mat>,
    total_loss: usize,
}

fn masked_oracle(problem: &WindowProblem, repair: bool) -> MaskedOracle {
    let (k, h, n) = (problem.start(), problem.horizon(), problem.agent_count());
    let ag = &problem.agents;
    let top = &problem.topology;
    let weighted = |r: usize, p: usize, q: usize, t: usize| {
        ag[r].h(p, t).unwrap().transpose() * ag[r].q(t) * ag[r].h(q, t).unwrap()
    };
    type Store = BTreeMap<(usize, usize), (Mat, usize)>;
    let mut gains: BTreeMap<(usize, usize, usize), Mat> = BTreeMap::new();
    let mut stores: Vec<Store> = vec![Store::new(); n];
    let mut total_loss = 0;
    for t in (k + 1..=k + h).rev() {
        let (now, next) = (top.at(t - 1), top.at(t));
        let mut fresh: Vec<Store> = vec![Store::new(); n];
        for i in 0..n {
            for &p in now.out_neighbors(i) {
                for &q in now.out_neighbors(i) {
                    let (op, oq) = (next.out_neighbors(p), next.out_neighbors(q));
                    let mut blk = Mat::zeros(ag[p].state_dim(), ag[q].state_dim());
                    for &r in op.iter().filter(|r| oq.contains(r)) {
                        blk += weighted(r, p, q, t);
                    }
                    let mut loss = 0;
                    if t < k + h {
                        let kg = |r: usize, c: usize| gains[&(t, r, c)].clone();
                        for &r in op.iter().filter(|r| oq.contains(r)) {
                            blk += kg(r, p).transpose() * ag[r].r(t) * kg(r, q);
                        }
                        // Selected next-step blocks, zero where nobody holds them.
                        let mut sel: BTreeMap<(usize, usize), Mat> = BTreeMap::new();
                        for &r in op {
                            for &s in oq {
                                let cands: Vec<&(Mat, usize)> =
                                    now.out_neighbors(i).iter().filter_map(|&j| stores[j].get(&(r, s))).collect();
                                let blk_rs = match cands.iter().map(|c| c.1).min() {
                                    None => {
                                        loss += 1;
                                        Mat::zeros(ag[r].state_dim(), ag[s].state_dim())
                                    }
                                    Some(best) => {
                                        let chosen: Vec<&Mat> =
                                            cands.iter().filter(|c| c.1 == best).map(|c| &c.0).collect();
                                        let mut sum = chosen[0].clone();
                                        for c in &chosen[1..] {
                                            sum += *c;
                                        }
                                        if chosen.len() > 1 {
                                            sum /= chosen.len() as f64;
                                        }
                                        sum
                                    }
                                };
                                sel.insert((r, s), blk_rs);
                            }
                        }
                        if p == q && repair {
                            let sizes: Vec<usize> = op.iter().map(|&r| ag[r].state_dim()).collect();
                            let off = ddrhc_core::linalg::offsets(sizes.clone());
                            let mut stacked = Mat::zeros(off[op.len()], off[op.len()]);
                            for (x, &r) in op.iter().enumerate() {
                                for (y, &s) in op.iter().enumerate() {
                                    stacked.view_mut((off[x], off[y]), (sizes[x], sizes[y])).copy_from(&sel[&(r, s)]);
                                }
                            }
                            let fixed = psd_repair(&ddrhc_core::linalg::symmetrize(&stacked));
                            for (x, &r) in op.iter().enumerate() {
                                for (y, &s) in op.iter().enumerate() {
                                    sel.insert((r, s), ddrhc_core::linalg::sub(&fixed, off[x], off[y], sizes[x], sizes[y]));
                                }
                            }
                        }
                        let (ap, aq) = (ag[p].a(t), ag[q].a(t));
                        // A_pᵀ P_{p,q} A_q
                        blk += ap.transpose() * &sel[&(p, q)] * &aq;
                        // - Σ_r K_{r,p}ᵀ B_rᵀ P_{r,q} A_q
                        for &r in op {
                            blk -= kg(r, p).transpose() * ag[r].b(t).transpose() * &sel[&(r, q)] * &aq;
                        }
                        // - Σ_s A_pᵀ P_{p,s} B_s K_{s,q}
                        for &s in oq {
                            blk -= ap.transpose() * &sel[&(p, s)] * ag[s].b(t) * kg(s, q);
                        }
                        // + Σ_{r,s} K_{r,p}ᵀ B_rᵀ P_{r,s} B_s K_{s,q}
                        for &r in op {
                            for &s in oq {
                                blk += kg(r, p).transpose() * ag[r].b(t).transpose() * &sel[&(r, s)] * ag[s].b(t) * kg(s, q);
                            }
                        }
                    }
                    if p == q {
                        blk = ddrhc_core::linalg::symmetrize(&blk);
                    }
                    fresh[i].insert((p, q), (blk, loss));
                }
            }
        }
        // Compute only p <= q and mirror, as the units do.
        for store in fresh.iter_mut() {
            let keys: Vec<(usize, usize)> = store.keys().copied().filter(|(p, q)| p > q).collect();
            for (p, q) in keys {
                let (m, l) = store[&(q, p)].clone();
                store.insert((p, q), (m.transpose(), l));
            }
        }
        total_loss += fresh.iter().flat_map(|s| s.values()).map(|(_, l)| l).sum::<usize>();
        let tau = t - 1;
        for i in 0..n {
            let dp = now.out_neighbors(i);
            let sizes: Vec<usize> = dp.iter().map(|&p| ag[p].input_dim()).collect();
            let off = ddrhc_core::linalg::offsets(sizes.clone());
            let mut s = Mat::zeros(off[dp.len()], off[dp.len()]);
            let mut rhs = Mat::zeros(off[dp.len()], ag[i].state_dim());
            for (x, &p) in dp.iter().enumerate() {
                for (y, &q) in dp.iter().enumerate() {
                    let mut blk = ag[p].b(tau).transpose() * &fresh[i][&(p, q)].0 * ag[q].b(tau);
                    if x == y {
                        blk += ag[p].r(tau);
                    }
                    s.view_mut((off[x], off[y]), blk.shape()).copy_from(&blk);
                }
                let blk = ag[p].b(tau).transpose() * &fresh[i][&(p, i)].0 * ag[i].a(tau);
                rhs.view_mut((off[x], 0), blk.shape()).copy_from(&blk);
            }
            let kk = s.try_inverse().unwrap() * rhs;
            for (x, &p) in dp.iter().enumerate() {
                gains.insert((tau, p, i), kk.rows(off[x], sizes[x]).into_owned());
            }
        }
        stores = fresh;
    }
    MaskedOracle { gains, total_loss }
}

fn assert_matches_oracle(problem: &WindowProblem, cfg: DistributedConfig, tol: f64) -> Result<(), TestCaseError> {
    let out = run(problem, 1, cfg);
    let oracle = masked_oracle(problem, cfg.psd_repair);
    let gains = out.window_gains();
    let mut count = 0;
    for tau in problem.start()..problem.start() + problem.horizon() {
        for (&(p, i), k) in gains.blocks(tau) {
            let reference = &oracle.gains[&(tau, p, i)];
            prop_assert!(rel_error(k, reference) <= tol, "K[{},{}]({}) off by {}", p, i, tau, rel_error(k, reference));
            count += 1;
        }
    }
    prop_assert_eq!(count, oracle.gains.len());
    prop_assert_eq!(out.masked_pairs(), oracle.total_loss);
    Ok(())
}

#[test]
fn zero_deficit_topologies_are_exact() {
    let graphs = [
        Digraph::complete(4),
        Digraph::self_loops(5),
        star_out(5),
        star_in(5),
        cliques(&[2, 3, 1]),
    ];
    for (idx, g) in graphs.into_iter().enumerate() {
        assert_eq!(total_deficit(&g), 0);
        for seed in 0..5 {
            let mut r = rng(100 * idx as u64 + seed);
            let p = random_problem(&mut r, g.clone(), 15);
            let (central, _) = synthesize_window(&p).unwrap();
            let out = run(&p, 1, DistributedConfig::default());
            let err = max_block_error(&out.window_gains(), &central);
            assert!(err <= 1e-9, "graph {idx} seed {seed}: {err}");
            assert_eq!(out.masked_pairs(), 0);
        }
    }
}

#[test]
fn single_agent_reduces_to_centralized() {
    let mut r = rng(9);
    let p = random_problem(&mut r, Digraph::self_loops(1), 20);
    let (central, _) = synthesize_window(&p).unwrap();
    let out = run(&p, 20, DistributedConfig::default());
    assert!(max_block_error(&out.window_gains(), &central) <= 1e-12);
    assert_eq!(out.comm.messages, 0);
}

#[test]
fn mid_window_switch_between_covered_topologies_is_exact() {
    let mut graphs = vec![cliques(&[2, 2]); 6];
    graphs.extend(vec![Digraph::complete(4); 5]);
    let window = TopologyWindow::new(0, graphs);
    for seed in 0..5 {
        let mut r = rng(seed);
        let p = random_problem_on(&mut r, window.clone());
        let (central, _) = synthesize_window(&p).unwrap();
        let mut harness = Harness::new(4, rounds_required(10));
        let feas = Feasibility::unrestricted(0, 10, 4);
        let out = synthesize_window_tv(&p, &feas, &mut harness, 2, DistributedConfig::default()).unwrap();
        assert!(max_block_error(&out.window_gains(), &central) <= 1e-9);
    }
}

#[test]
fn chain_ring_and_tree_follow_the_masked_recursion() {
    for (seed, g) in [(1, Digraph::chain(5)), (2, Digraph::ring(6)), (3, Digraph::binary_tree(7))] {
        let mut r = rng(seed);
        let p = random_problem(&mut r, g, 15);
        assert_matches_oracle(&p, DistributedConfig::default(), 1e-9).unwrap();
        assert_matches_oracle(&p, no_repair(), 1e-9).unwrap();
    }
}

#[test]
fn sequential_and_parallel_drivers_agree_bitwise() {
    let mut r = rng(21);
    let p = random_problem(&mut r, Digraph::ring(8), 12);
    let seq = run(&p, 4, DistributedConfig::default());
    let par = run(&p, 4, DistributedConfig { parallel: true, ..Default::default() });
    assert_eq!(seq, par);
}

#[test]
fn unrestricted_feasibility_equals_the_static_run() {
    let mut r = rng(22);
    let p = random_problem(&mut r, Digraph::binary_tree(6), 8);
    let ti = run(&p, 3, DistributedConfig::default());
    let mut harness = Harness::new(6, rounds_required(8));
    let tv = synthesize_window_tv(&p, &Feasibility::unrestricted(0, 8, 6), &mut harness, 3, DistributedConfig::default())
        .unwrap();
    assert_eq!(ti, tv);
}

fn feasibility_without(n: usize, h: usize, lost: (usize, usize), from: usize) -> Feasibility {
    let sets = (0..=h)
        .map(|tau| {
            (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| !(tau >= from && (i, j) == lost))
                        .collect()
                })
                .collect()
        })
        .collect();
    Feasibility::new(0, sets)
}

#[test]
fn losing_a_link_inside_the_actuated_prefix_is_an_error() {
    let mut r = rng(23);
    let p = random_problem(&mut r, Digraph::chain(3), 6);
    let feas = feasibility_without(3, 6, (2, 1), 1);
    let mut harness = Harness::new(3, rounds_required(6));
    let err = synthesize_window_tv(&p, &feas, &mut harness, 3, DistributedConfig::default()).unwrap_err();
    assert_eq!(err, SynthesisError::Infeasible { unit: 2, neighbor: 1, tau: 1 });
}

#[test]
fn losing_a_link_after_the_prefix_drops_the_coupling() {
    let mut r = rng(24);
    let p = random_problem(&mut r, Digraph::chain(3), 6);
    // Agent 1 loses sight of agent 0 from step 4 on; only one side needs to.
    let feas = feasibility_without(3, 6, (1, 0), 4);
    let restricted = restrict_to_feasible(&p, &feas, 3).unwrap();
    for tau in 0..=6 {
        assert_eq!(restricted.topology.at(tau).contains_edge(0, 1), tau < 4);
        assert!(restricted.topology.at(tau).contains_edge(1, 2));
    }
    let mut harness = Harness::new(3, rounds_required(6));
    let out = synthesize_window_tv(&p, &feas, &mut harness, 3, DistributedConfig::default()).unwrap();
    assert!(out.window_gains().respects(&restricted.topology));
    let (central, _) = synthesize_window(&restricted).unwrap();
    assert_eq!(central.blocks(5).len(), out.window_gains().blocks(5).len());
}

#[test]
fn too_few_rounds_is_reported() {
    let mut r = rng(25);
    let p = random_problem(&mut r, Digraph::ring(4), 5);
    let mut harness = Harness::new(4, rounds_required(5) - 1);
    let err = synthesize_window_ti(&p, &mut harness, 1, DistributedConfig::default()).unwrap_err();
    assert_eq!(err, SynthesisError::Comm(CommError::RoundUnderflow { available: 6, required: 7 }));
}

#[test]
fn invalid_used_steps_are_rejected() {
    let mut r = rng(26);
    let p = random_problem(&mut r, Digraph::ring(3), 4);
    for used in [0, 5] {
        let mut harness = Harness::new(3, rounds_required(4));
        assert_eq!(
            synthesize_window_ti(&p, &mut harness, used, DistributedConfig::default()).unwrap_err(),
            SynthesisError::InvalidUsedSteps { used, horizon: 4 }
        );
    }
}

#[test]
fn actuation_gains_are_the_delivered_prefix() {
    let mut r = rng(27);
    let p = random_problem(&mut r, Digraph::binary_tree(5), 9);
    let out = run(&p, 4, DistributedConfig::default());
    let window = out.window_gains();
    let act = out.actuation_gains();
    assert_eq!(act.horizon(), 4);
    for tau in 0..4 {
        assert_eq!(act.blocks(tau), window.blocks(tau));
    }
}

fn lti_ring(n: usize) -> WindowProblem {
    let mut r = rng(3);
    let a = random_matrix(&mut r, 2, 2) * 0.8;
    let b = random_matrix(&mut r, 2, 1);
    let hs = [random_matrix(&mut r, 2, 2), random_matrix(&mut r, 2, 2), random_matrix(&mut r, 2, 2)];
    let agents: Vec<Arc<dyn AgentModel>> = (0..n)
        .map(|i| {
            let h = BTreeMap::from([((i + n - 1) % n, hs[0].clone()), (i, hs[1].clone()), ((i + 1) % n, hs[2].clone())]);
            Arc::new(LtiAgent { a: a.clone(), b: b.clone(), q: Mat::identity(2, 2), r: Mat::identity(1, 1), h })
                as Arc<dyn AgentModel>
        })
        .collect();
    let edges = (0..n).flat_map(|i| [((i + n - 1) % n, i), ((i + 1) % n, i)]);
    WindowProblem::new(agents, TopologyWindow::constant(0, 10, Digraph::new(n, edges).unwrap())).unwrap()
}

#[test]
fn per_unit_load_does_not_grow_with_the_network() {
    let small = run(&lti_ring(6), 5, DistributedConfig::default());
    let large = run(&lti_ring(40), 5, DistributedConfig::default());
    assert_eq!(small.max_peak_bytes(), large.max_peak_bytes());
    assert_eq!(small.comm.max_sent(), large.comm.max_sent());
    assert_eq!(small.comm.max_received(), large.comm.max_received());
    assert_eq!(small.comm.max_bytes(), large.comm.max_bytes());
    assert_eq!(large.comm.messages * 6, small.comm.messages * 40);
}

#[test]
fn psd_repair_examples() {
    let m = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
    assert!(rel_error(&psd_repair(&m), &Mat::identity(2, 2)) < 1e-14);
    let spd = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    assert_eq!(psd_repair(&spd), spd);
    let neg = Mat::identity(3, 3) * -2.0;
    assert!(psd_repair(&neg).amax() < 1e-15);
    let tiny = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-14]));
    assert_eq!(psd_repair(&tiny), tiny);
}

#[test]
fn block_selection_examples() {
    use ddrhc_core::distributed::select_block;
    let a = Mat::from_element(1, 1, 1.0);
    let b = Mat::from_element(1, 1, 3.0);
    let c = Mat::from_element(1, 1, 100.0);
    assert_eq!(select_block(&[(a.clone(), 0), (b, 0), (c.clone(), 1)]).unwrap()[(0, 0)], 2.0);
    assert_eq!(select_block(&[(c, 2), (a, 1)]).unwrap()[(0, 0)], 1.0);
    assert!(select_block(&[]).is_none());
}

#[test]
fn scalar_local_gain() {
    use ddrhc_core::distributed::{local_gain, CostBlockStore};
    let one = Mat::from_element(1, 1, 1.0);
    let mut store = CostBlockStore::new(0, 1);
    store.insert(0, 0, one.clone(), 0);
    let inputs = BTreeMap::from([(0, (one.clone(), one.clone()))]);
    let k = local_gain(0, 0, &one, &inputs, &store).unwrap();
    assert!((k[&0][(0, 0)] - 0.5).abs() < 1e-15);
}

#[test]
fn zero_output_weight_gives_zero_gains() {
    let agents: Vec<Arc<dyn AgentModel>> = (0..3)
        .map(|i| {
            let h: BTreeMap<usize, Mat> = (0..3).filter(|&j| j + 1 >= i && j <= i).map(|j| (j, Mat::identity(1, 1))).collect();
            Arc::new(LtiAgent {
                a: Mat::from_element(1, 1, 1.1),
                b: Mat::identity(1, 1),
                q: Mat::zeros(1, 1),
                r: Mat::identity(1, 1),
                h,
            }) as Arc<dyn AgentModel>
        })
        .collect();
    let p = WindowProblem::new(agents, TopologyWindow::constant(0, 6, Digraph::chain(3))).unwrap();
    let out = run(&p, 2, DistributedConfig::default());
    for tau in 0..6 {
        assert!(out.window_gains().blocks(tau).values().all(|k| k.amax() == 0.0));
    }
}

fn arb_window() -> impl Strategy<Value = (u64, TopologyWindow)> {
    (1usize..7, 1usize..8).prop_flat_map(|(n, h)| {
        let graph = proptest::collection::vec((0..n, 0..n), 0..2 * n).prop_map(move |e| Digraph::new(n, e).unwrap());
        (0u64..10_000, proptest::collection::vec(graph, h + 1)).prop_map(|(seed, gs)| (seed, TopologyWindow::new(0, gs)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn protocol_matches_masked_recursion((seed, window) in arb_window(), repair in any::<bool>()) {
        let mut r = rng(seed);
        let p = random_problem_on(&mut r, window);
        assert_matches_oracle(&p, DistributedConfig { psd_repair: repair, ..Default::default() }, 1e-8)?;
    }

    #[test]
    fn losses_vanish_exactly_when_coverage_holds(seed in 0u64..10_000, n in 1usize..9, h in 2usize..5, e in proptest::collection::vec((0usize..8, 0usize..8), 0..16)) {
        let g = Digraph::new(n, e.into_iter().filter(|&(a, b)| a < n && b < n)).unwrap();
        let mut r = rng(seed);
        let p = random_problem(&mut r, g.clone(), h);
        let out = run(&p, 1, DistributedConfig::default());
        prop_assert_eq!(out.masked_pairs() == 0, total_deficit(&g) == 0);
        prop_assert_eq!(out.masked_pairs(), (h - 1) * total_deficit(&g));
    }

    #[test]
    fn messages_stay_within_the_neighborhood_bound((seed, window) in arb_window()) {
        let mut r = rng(seed);
        let p = random_problem_on(&mut r, window.clone());
        let out = run(&p, 1, DistributedConfig::default());
        let bound = window.graphs().map(|(_, g)| g.max_in_degree().max(g.max_out_degree())).max().unwrap() - 1;
        prop_assert!(out.comm.max_sent() <= bound);
        prop_assert!(out.comm.max_received() <= bound);
        prop_assert!(out.window_gains().respects(&window));
    }

    #[test]
    fn psd_repair_keeps_semidefinite_input_and_fixes_the_rest(seed in 0u64..10_000, n in 1usize..12, rank in 0usize..12) {
        let mut r = rng(seed);
        let l = random_matrix(&mut r, n, rank.min(n));
        let psd = &l * l.transpose();
        prop_assert_eq!(psd_repair(&psd), psd.clone());
        let sym = {
            let m = random_matrix(&mut r, n, n);
            (&m + m.transpose()) * 0.5
        };
        let fixed = psd_repair(&sym);
        let lmin = nalgebra::SymmetricEigen::new(fixed.clone()).eigenvalues.min();
        prop_assert!(lmin >= -1e-10 * fixed.amax().max(1.0), "{}", lmin);
    }
}
