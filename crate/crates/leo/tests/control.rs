use std::sync::Arc;

use approx::assert_relative_eq;
use ddrhc_core::{AgentModel, Digraph, Mat, TopologyWindow, Vector, WindowProblem};
use ddrhc_leo::control::{clamp_thrust, h_inertial, h_relative};
use ddrhc_leo::elements::absolute_elements;
use ddrhc_leo::metrics::tracking_outputs;
use ddrhc_leo::walker::fleet_nominal;
use ddrhc_leo::{
    conv_matrix, output_matrices, relative_elements, thrust_feedback, weights, wrap_angle, Anchor,
    ConstellationConfig, OrbitConstants, SatelliteModel, EARTH,
};
use nalgebra::Vector3;
use proptest::prelude::*;

fn walker40() -> ConstellationConfig {
    ConstellationConfig::walker(53.0, 40, 5, 1, 6_921e3)
}

#[test]
fn lone_satellite_has_only_the_inertial_output() {
    let cfg = walker40();
    let blocks = output_matrices(3, &[3], &cfg);
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0].1, h_inertial(cfg.semi_major_axis));
    assert_eq!(weights(1, &cfg).0.nrows(), 4);
}

#[test]
fn relative_rows_undo_the_node_terms() {
    let i = 53f64.to_radians();
    let h = h_relative(i);
    assert_relative_eq!(h[(1, 5)], 1.0 / i.sin());
    assert_relative_eq!(h[(0, 5)], -i.cos() / i.sin());
    assert_eq!(h[(0, 1)], 1.0);
}

#[test]
fn block_layout_for_two_neighbors() {
    let cfg = walker40();
    let rel = h_relative(cfg.inclination());
    let blocks = output_matrices(5, &[2, 5, 9], &cfg);
    let ids: Vec<usize> = blocks.iter().map(|(j, _)| *j).collect();
    assert_eq!(ids, vec![2, 5, 9]);
    let own = &blocks[1].1;
    assert_eq!(own.nrows(), 8);
    assert_eq!(own.rows(0, 2), rel);
    assert_eq!(own.rows(2, 2), rel);
    assert_eq!(own.rows(4, 4), h_inertial(cfg.semi_major_axis));
    // Neighbor 2 owns slot 0, neighbor 9 slot 1.
    assert_eq!(blocks[0].1.rows(0, 2), -&rel);
    assert!(blocks[0].1.rows(2, 6).iter().all(|&x| x == 0.0));
    assert_eq!(blocks[2].1.rows(2, 2), -&rel);
    assert!(blocks[2].1.rows(0, 2).iter().all(|&x| x == 0.0));
}

#[test]
fn weight_values() {
    let cfg = walker40();
    let (q, r) = weights(3, &cfg);
    assert_eq!(q.nrows(), 8);
    for s in 0..4 {
        assert_eq!(q[(s, s)], 1e8);
    }
    assert_relative_eq!(q[(4, 4)], 1.0 / (6_921e3 * 1e-4f64).powi(2));
    assert_relative_eq!(q[(5, 5)], (1.0 / 0.5e-2f64).powi(2));
    assert_relative_eq!(q[(6, 6)], (1.0 / 0.5e-2f64).powi(2));
    assert_relative_eq!(q[(7, 7)], (1.0 / 1e-2f64).powi(2));
    assert_eq!(q.clone() - Mat::from_diagonal(&q.diagonal()), Mat::zeros(8, 8));
    assert_relative_eq!(r, Mat::identity(3, 3) * (1.0 / 0.068f64).powi(2));
    let (q1, _) = weights(1, &cfg);
    assert_eq!(q1, q.view((4, 4), (4, 4)).into_owned());
}

#[test]
fn thrust_examples() {
    let k = Mat::from_fn(3, 6, |i, j| (i + j) as f64 * 1e-4);
    let zero = Vector::zeros(6);
    assert_eq!(thrust_feedback([(&k, &zero)], 260.0, 0.068).applied, Vector3::zeros());

    let t = clamp_thrust(Vector3::new(0.1, 0.0, -0.2), 0.068);
    assert_eq!(t.applied, Vector3::new(0.068, 0.0, -0.068));
    assert!(t.saturated());

    let dx = Vector::from_element(6, 1e-3);
    let u1 = thrust_feedback([(&k, &dx)], 100.0, 1e9).commanded;
    let u2 = thrust_feedback([(&k, &dx)], 200.0, 1e9).commanded;
    assert_relative_eq!(u2, 2.0 * u1, max_relative = 1e-15);
    assert_relative_eq!(u1, -(&k * &dx).fixed_rows::<3>(0) * 100.0, max_relative = 1e-15);
}

#[test]
fn satellite_model_follows_its_window() {
    let cfg = walker40();
    let anchor = Anchor { t0: 0.0, u0: 0.2, raan0: 0.0 };
    let window = Arc::new(TopologyWindow::new(
        4,
        vec![Digraph::new(40, [(1, 0)]).unwrap(), Digraph::self_loops(40), Digraph::new(40, [(1, 0), (2, 0)]).unwrap()],
    ));
    let agents: Vec<Arc<dyn AgentModel>> = (0..40)
        .map(|i| Arc::new(SatelliteModel::new(i, &cfg, &anchor, 10.0, window.clone(), &EARTH)) as Arc<dyn AgentModel>)
        .collect();
    let problem = WindowProblem::new(agents.clone(), (*window).clone()).unwrap();
    assert!(problem.validate(true).is_ok());

    let m = &agents[0];
    assert_eq!(m.output_dim(4), 6);
    assert_eq!(m.output_dim(5), 4);
    assert_eq!(m.output_dim(6), 8);
    assert!(m.h(1, 5).is_none());
    assert_eq!(m.h(2, 6).unwrap(), output_matrices(0, &[0, 1, 2], &cfg)[2].1);
    let oc = OrbitConstants::new(cfg.semi_major_axis, cfg.inclination(), &EARTH);
    let u5 = 0.2 + oc.w * 50.0;
    assert_relative_eq!(m.b(5), conv_matrix(&oc, u5, 10.0), max_relative = 1e-12);
}

#[test]
fn exact_nominal_fleet_has_zero_outputs() {
    let cfg = walker40();
    let g = Digraph::ring(40).union(&Digraph::complete(40).restrict(|j, i| j + 8 == i));
    let z = tracking_outputs(&cfg, &g, &vec![Vector::zeros(6); 40]);
    assert!(z.iter().all(|z| z.iter().all(|&x| x == 0.0)));
}

proptest! {
    /// The relative rows reproduce the direct angle differences
    /// `u_i − u_j − (ū_i − ū_j)` and `Ω_i − Ω_j − (Ω̄_i − Ω̄_j)`.
    #[test]
    fn relative_outputs_are_angle_differences(seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = walker40();
        let anchor = Anchor { t0: 0.0, u0: rng.random_range(-3.0..3.0), raan0: rng.random_range(-3.0..3.0) };
        let nominal = fleet_nominal(&cfg, &anchor, 1234.0, &EARTH);
        let states: Vec<_> = nominal
            .iter()
            .map(|xb| {
                let dx = Vector::from_fn(6, |_, _| rng.random_range(-1e-3..1e-3));
                absolute_elements(&dx, xb)
            })
            .collect();
        let dx: Vec<Vector> = states.iter().zip(&nominal).map(|(x, xb)| relative_elements(x, xb)).collect();
        let g = Digraph::new(40, [(7, 3), (12, 3), (3, 12)]).unwrap();
        let z = tracking_outputs(&cfg, &g, &dx);
        for (i, slots) in [(3usize, vec![7usize, 12]), (12, vec![3])] {
            for (s, &j) in slots.iter().enumerate() {
                let du = wrap_angle(states[i].u - states[j].u - (nominal[i].u - nominal[j].u));
                let dr = wrap_angle(states[i].raan - states[j].raan - (nominal[i].raan - nominal[j].raan));
                prop_assert!((z[i][2 * s] - du).abs() < 1e-12);
                prop_assert!((z[i][2 * s + 1] - dr).abs() < 1e-12);
            }
            let o = z[i].len();
            prop_assert!((z[i][o - 4] - (states[i].a - cfg.semi_major_axis)).abs() < 1e-6);
            prop_assert!((z[i][o - 1] - (states[i].i - cfg.inclination())).abs() < 1e-15);
        }
    }
}
