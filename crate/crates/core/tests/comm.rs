mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{random_matrix, rng};
use ddrhc_core::centralized::GainSchedule;
use ddrhc_core::comm::{
    check_tv_constraints, feasibility_sets, feasibility_time, plan_schedule, ratio_to_f64, run_closed_loop,
    ClosedLoopConfig, Harness, Message, MessageKind, Payload, ScheduleConfig, WindowSynthesizer, MESSAGE_HEADER_BYTES,
};
use ddrhc_core::distributed::DistributedConfig;
use ddrhc_core::rhc::{CentralizedSynthesizer, DistributedSynthesizer, LinearPlant, Network};
use ddrhc_core::{
    AgentModel, CommError, Digraph, LtiAgent, Mat, ScheduleError, SynthesisError, Topology, Vector,
};
use num_rational::BigRational;

fn cfg(horizon: usize, used: usize) -> ScheduleConfig {
    ScheduleConfig { t_c: 10.0, t_t: 1.0, horizon, used }
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

#[test]
fn plan_examples() {
    let plan = plan_schedule(&cfg(100, 25)).unwrap();
    assert_eq!(plan.rounds, 102);
    assert_eq!(plan.delta_minus, 102.0);
    assert!(!plan.overlapping);
    assert!(plan_schedule(&cfg(100, 5)).unwrap().overlapping);
    for k in [0, 25, 50, 1000] {
        assert_eq!(plan.start_time(k) + plan.rounds as f64 * plan.t_t, plan.actuation_time(k));
        assert_eq!(plan.ready_time(k), plan.actuation_time(k));
    }
    assert!(plan_schedule(&cfg(10, 11)).is_err());
    assert!(plan_schedule(&cfg(10, 0)).is_err());
    assert!(plan_schedule(&ScheduleConfig { t_c: 0.0, ..cfg(10, 5) }).is_err());
}

#[test]
fn time_varying_bounds_are_exact() {
    let adm = check_tv_constraints(&cfg(100, 25), 1320.0, 360.0).unwrap();
    assert_eq!(adm.horizon_bound, ratio(1318, 11));
    assert_eq!(adm.used_upper, ratio(359, 11));
    assert_eq!(adm.used_lower_offset, ratio(1, 5));
    assert_eq!(adm.used_lower_slope, ratio(1, 10));
    assert!(adm.admissible(), "{:?}", adm.violations);
    assert!((ratio_to_f64(&adm.horizon_bound) - 119.8181818).abs() < 1e-6);
}

#[test]
fn time_varying_violations_are_reported() {
    let long = check_tv_constraints(&cfg(130, 25), 1320.0, 360.0).unwrap();
    assert!(!long.horizon_ok && long.used_ok && long.non_overlapping);
    assert_eq!(long.violations.len(), 1);

    let wide = check_tv_constraints(&cfg(100, 33), 1320.0, 360.0).unwrap();
    assert!(wide.horizon_ok && !wide.used_ok);

    let short = check_tv_constraints(&cfg(100, 10), 1320.0, 360.0).unwrap();
    assert!(!short.non_overlapping);

    // Boundary: equality violates the strict inequality.
    let edge = check_tv_constraints(&ScheduleConfig { t_c: 10.0, t_t: 1.0, horizon: 10, used: 10 }, 112.0, 111.0).unwrap();
    assert!(!edge.horizon_ok);
    assert!(!edge.used_ok);
    assert!(check_tv_constraints(&cfg(10, 5), 100.0, 200.0).is_err());
}

#[test]
fn feasibility_is_evaluated_at_session_time() {
    let c = cfg(100, 25);
    let plan = plan_schedule(&c).unwrap();
    assert_eq!(feasibility_time(&c, 50, 150), plan.start_time(50));
    assert_eq!(feasibility_time(&c, 50, 50), 500.0 - 2.0);
    let seen = std::cell::RefCell::new(Vec::new());
    let sets = feasibility_sets(
        |i, j, t| {
            seen.borrow_mut().push(t);
            (i + j) % 2 == 1
        },
        3,
        60,
        50,
        &c,
    );
    assert!(seen.borrow().iter().all(|&t| t == 500.0 - 12.0));
    assert_eq!(sets[0].iter().copied().collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(sets[1].iter().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
}

fn empty_message(from: usize, to: usize) -> Message {
    Message { round: 0, from, to, kind: MessageKind::BackwardExchange, body: vec![] }
}

#[test]
fn harness_rejects_illegal_traffic() {
    let chain = Digraph::chain(3);
    let link = |a: usize, b: usize| chain.adjacent(a, b);
    let mut h = Harness::new(3, 4);
    let err = h.exchange(link, vec![vec![empty_message(0, 2)], vec![], vec![]]).unwrap_err();
    assert_eq!(err, CommError::IllegalLink { round: 0, from: 0, to: 2 });
    let err = h.exchange(link, vec![vec![empty_message(1, 1)], vec![], vec![]]).unwrap_err();
    assert!(matches!(err, CommError::IllegalLink { .. }));
    let err = h.exchange(link, vec![vec![empty_message(0, 7)], vec![], vec![]]).unwrap_err();
    assert_eq!(err, CommError::UnknownUnit { round: 0, unit: 7 });
    assert_eq!(h.round(), 0);
}

#[test]
fn harness_counts_and_traces() {
    let mut h = Harness::new(3, 2).with_timing(-2.0, 1.0).with_trace(7);
    let factor = Mat::zeros(2, 3);
    let msg = Message {
        round: 99,
        from: 1,
        to: 0,
        kind: MessageKind::TerminalOutput,
        body: vec![Payload::OutputFactor { tau: 4, row: 1, col: 0, factor }],
    };
    let size = MESSAGE_HEADER_BYTES + 8 + 6 * 8;
    assert_eq!(msg.bytes(), size);
    let inboxes = h
        .exchange(|_, _| true, vec![vec![], vec![msg, empty_message(1, 2)], vec![empty_message(2, 0)]])
        .unwrap();
    assert_eq!(inboxes[0].iter().map(|m| m.from).collect::<Vec<_>>(), vec![1, 2]);
    assert_eq!(inboxes[0][0].round, 0);
    let stats = h.stats();
    assert_eq!(stats.messages, 3);
    assert_eq!(stats.bytes, size + 2 * MESSAGE_HEADER_BYTES);
    assert_eq!(stats.max_sent(), 2);
    assert_eq!(stats.max_received(), 2);
    assert_eq!(h.trace().len(), 3);
    assert!(h.trace().iter().all(|t| t.window == 7 && t.round == 0));
    assert_eq!(h.time_of(h.round()), -1.0);

    h.exchange(|_, _| true, vec![vec![]; 3]).unwrap();
    assert_eq!(h.exchange(|_, _| true, vec![vec![]; 3]).unwrap_err(), CommError::RoundUnderflow { available: 0, required: 1 });
    assert_eq!(MessageKind::GainDelivery.to_string(), "gain_delivery");
}

fn lti_network(seed: u64, graph: Digraph, drift: f64) -> Network {
    let mut r = rng(seed);
    let n = graph.agent_count();
    let agents: Vec<Arc<dyn AgentModel>> = (0..n)
        .map(|i| {
            let h: BTreeMap<usize, Mat> =
                graph.in_neighbors(i).iter().map(|&j| (j, random_matrix(&mut r, 2, 2))).collect();
            Arc::new(LtiAgent {
                a: Mat::identity(2, 2) * drift + random_matrix(&mut r, 2, 2) * 0.1,
                b: Mat::identity(2, 2) + random_matrix(&mut r, 2, 2) * 0.2,
                q: Mat::identity(2, 2),
                r: Mat::identity(2, 2),
                h,
            }) as Arc<dyn AgentModel>
        })
        .collect();
    Network::new(agents, Topology::fixed(graph))
}

fn x0(seed: u64, n: usize) -> Vec<Vector> {
    let mut r = rng(seed);
    (0..n).map(|_| random_matrix(&mut r, 2, 1).column(0).into_owned()).collect()
}

#[test]
fn closed_loop_drives_outputs_down() {
    let network = lti_network(1, Digraph::ring(6), 1.02);
    let sched = cfg(20, 5);
    let mut plant = LinearPlant::new(network.clone(), x0(2, 6));
    let initial = plant.output_norm();
    let mut synth = DistributedSynthesizer { network, schedule: sched, config: DistributedConfig::default(), link: None };
    let report = run_closed_loop(&mut plant, &mut synth, &ClosedLoopConfig::new(sched, 100), |_, _| {}).unwrap();
    assert!(plant.output_norm() < 0.01 * initial, "{} vs {}", plant.output_norm(), initial);
    assert_eq!(report.windows.len(), 20);
    assert_eq!(report.windows.iter().map(|w| w.k).collect::<Vec<_>>(), (0..100).step_by(5).collect::<Vec<_>>());
    assert!(report.windows.iter().all(|w| w.ready_time == w.k as f64 * 10.0));
    assert_eq!(report.max_concurrent_sessions, 1);
    assert_eq!(report.trace.len(), report.windows[0].messages);
}

#[test]
fn whole_window_cadence_resynthesizes_every_horizon() {
    let network = lti_network(3, Digraph::chain(4), 1.0);
    let sched = cfg(8, 8);
    let mut plant = LinearPlant::new(network.clone(), x0(4, 4));
    let mut synth = CentralizedSynthesizer { network, schedule: sched };
    let mut seen = Vec::new();
    let report = run_closed_loop(&mut plant, &mut synth, &ClosedLoopConfig::new(sched, 40), |k, _| seen.push(k)).unwrap();
    assert_eq!(report.windows.iter().map(|w| w.k).collect::<Vec<_>>(), vec![0, 8, 16, 24, 32]);
    assert_eq!(seen, (0..=40).collect::<Vec<_>>());
}

#[test]
fn processing_delay_past_the_actuation_time_is_refused() {
    let network = lti_network(5, Digraph::ring(3), 1.0);
    let sched = cfg(10, 5);
    let mut plant = LinearPlant::new(network.clone(), x0(6, 3));
    let mut synth = DistributedSynthesizer { network, schedule: sched, config: DistributedConfig::default(), link: None };
    let loop_cfg = ClosedLoopConfig { extra_latency_rounds: 1, ..ClosedLoopConfig::new(sched, 10) };
    let err = run_closed_loop(&mut plant, &mut synth, &loop_cfg, |_, _| {}).unwrap_err();
    assert_eq!(err, ScheduleError::LateGains { k: 0, ready: 1.0, actuation: 0.0 });
}

#[test]
fn overlapping_sessions_need_opt_in() {
    let network = lti_network(7, Digraph::ring(3), 1.0);
    let sched = cfg(30, 2);
    let mut plant = LinearPlant::new(network.clone(), x0(8, 3));
    let mut synth = DistributedSynthesizer {
        network,
        schedule: sched,
        config: DistributedConfig::default(),
        link: None,
    };
    let err = run_closed_loop(&mut plant, &mut synth, &ClosedLoopConfig::new(sched, 10), |_, _| {}).unwrap_err();
    assert_eq!(err, ScheduleError::Overlap { used_time: 20.0, lead_time: 32.0 });
    let allowed = ClosedLoopConfig { allow_overlap: true, ..ClosedLoopConfig::new(sched, 10) };
    let report = run_closed_loop(&mut plant, &mut synth, &allowed, |_, _| {}).unwrap();
    assert_eq!(report.max_concurrent_sessions, 2);
}

#[test]
fn a_short_round_budget_surfaces_as_a_synthesis_error() {
    let network = lti_network(9, Digraph::ring(3), 1.0);
    let sched = cfg(6, 3);
    let mut plant = LinearPlant::new(network.clone(), x0(10, 3));
    let mut synth = DistributedSynthesizer { network, schedule: sched, config: DistributedConfig::default(), link: None };
    let loop_cfg = ClosedLoopConfig { round_budget: Some(7), ..ClosedLoopConfig::new(sched, 6) };
    let err = run_closed_loop(&mut plant, &mut synth, &loop_cfg, |_, _| {}).unwrap_err();
    assert_eq!(
        err,
        ScheduleError::Synthesis(SynthesisError::Comm(CommError::RoundUnderflow { available: 7, required: 8 }))
    );
}

struct Silent;

impl WindowSynthesizer for Silent {
    fn synthesize(&mut self, k: usize, _: &mut Harness) -> Result<GainSchedule, SynthesisError> {
        Ok(GainSchedule::new(k + 1, 3, ddrhc_core::centralized::Provenance::ColumnUnits))
    }
}

#[test]
fn missing_gains_are_an_error() {
    let network = lti_network(11, Digraph::ring(3), 1.0);
    let mut plant = LinearPlant::new(network, x0(12, 3));
    let err = run_closed_loop(&mut plant, &mut Silent, &ClosedLoopConfig::new(cfg(3, 3), 3), |_, _| {}).unwrap_err();
    assert!(matches!(err, ScheduleError::GainUnavailable { k: 0, .. }));
}

#[test]
fn distributed_closed_loop_cost_is_close_to_centralized() {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let network = lti_network(20 + seed, Digraph::ring(6), 1.02);
        let sched = cfg(20, 5);
        let loop_cfg = ClosedLoopConfig::new(sched, 60);

        let mut central = LinearPlant::new(network.clone(), x0(40 + seed, 6));
        let mut synth = CentralizedSynthesizer { network: network.clone(), schedule: sched };
        run_closed_loop(&mut central, &mut synth, &loop_cfg, |_, _| {}).unwrap();

        let mut dist = LinearPlant::new(network.clone(), x0(40 + seed, 6));
        let mut synth = DistributedSynthesizer { network, schedule: sched, config: DistributedConfig::default(), link: None };
        run_closed_loop(&mut dist, &mut synth, &loop_cfg, |_, _| {}).unwrap();
        worst = worst.max(dist.cost / central.cost - 1.0);
    }
    assert!(worst <= 0.05, "relative excess cost {worst}");
}
