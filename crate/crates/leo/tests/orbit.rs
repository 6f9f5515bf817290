use approx::assert_relative_eq;
use ddrhc_core::Mat;
use ddrhc_leo::orbit::{conv_matrix, elements_to_position, latitude_rate, secular_rates, stm, OrbitConstants, EARTH};
use ddrhc_leo::MeanElements;
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

const A_BAR: f64 = 6_921e3;

fn inc() -> f64 {
    53f64.to_radians()
}

/// Textbook J2 secular rates written as `−(3/2) n J2 (R/a)² cos i` etc.
fn textbook_rates(a: f64, i: f64) -> (f64, f64, f64) {
    let n = (EARTH.mu / a.powi(3)).sqrt();
    let f = 1.5 * n * EARTH.j2 * (EARTH.earth_radius / a).powi(2);
    let c = i.cos();
    (0.5 * f * (3.0 * c * c - 1.0), 0.5 * f * (5.0 * c * c - 1.0), -f * c)
}

#[test]
fn node_rate_of_the_reference_shell() {
    let r = secular_rates(A_BAR, inc(), &EARTH);
    assert!((r.node - -9.10e-7).abs() < 0.005e-7, "{}", r.node);
}

#[test]
fn polar_orbit_has_no_nodal_drift() {
    assert!(secular_rates(A_BAR, 90f64.to_radians(), &EARTH).node.abs() < 1e-20);
}

#[test]
fn perigee_is_frozen_at_the_critical_inclination() {
    let i = (2.0 / 5f64.sqrt()).asin();
    assert!(secular_rates(A_BAR, i, &EARTH).perigee.abs() < 1e-20);
}

#[test]
fn latitude_rate_is_mean_motion_plus_secular_terms() {
    let n = EARTH.mean_motion(A_BAR);
    let (m, w, _) = textbook_rates(A_BAR, inc());
    assert_relative_eq!(latitude_rate(A_BAR, inc(), &EARTH), n + m + w, max_relative = 1e-14);
    assert_relative_eq!(OrbitConstants::new(A_BAR, inc(), &EARTH).w, n + m + w, max_relative = 1e-14);
}

#[test]
fn stm_is_identity_over_zero_time() {
    let oc = OrbitConstants::new(A_BAR, inc(), &EARTH);
    assert_eq!(stm(&oc, 0.0), Mat::identity(6, 6));
}

#[test]
fn two_body_stm_only_couples_semi_major_axis_into_latitude() {
    let oc = OrbitConstants::new(A_BAR, inc(), &EARTH.two_body());
    let a = stm(&oc, 10.0);
    let mut expected = Mat::identity(6, 6);
    expected[(1, 0)] = -1.5 * oc.n * 10.0;
    assert_relative_eq!(a, expected, epsilon = 1e-15);
}

#[test]
fn stm_node_row_regression() {
    let oc = OrbitConstants::new(A_BAR, inc(), &EARTH);
    let n = (EARTH.mu / A_BAR.powi(3)).sqrt();
    let k = 0.75 * n * EARTH.j2 * (EARTH.earth_radius / A_BAR).powi(2);
    let a = stm(&oc, 10.0);
    assert_relative_eq!(a[(5, 0)], 3.5 * k * 10.0 * (2.0 * inc()).sin(), max_relative = 1e-13);
    // K ≈ 7.56e-7 rad/s for the reference shell.
    assert!((k - 7.56e-7).abs() < 0.01e-7, "{k}");
    assert!((a[(5, 0)] - 2.544e-5).abs() < 0.001e-5, "{}", a[(5, 0)]);
}

#[test]
fn conv_matrix_first_row() {
    let oc = OrbitConstants::new(A_BAR, inc(), &EARTH);
    let b = conv_matrix(&oc, 0.3, 10.0);
    assert_relative_eq!(b[(0, 0)], 2.0 * oc.w * 10.0 / (oc.n * oc.a * oc.w), max_relative = 1e-14);
    assert_eq!(b[(0, 1)], 0.0);
    assert_eq!(b[(0, 2)], 0.0);
}

#[test]
fn cross_track_column_only_drives_out_of_plane_rows() {
    let oc = OrbitConstants::new(A_BAR, inc(), &EARTH);
    for u in [0.0, 0.7, 2.0, -2.5] {
        let b = conv_matrix(&oc, u, 10.0);
        for r in [0, 2, 3] {
            assert_eq!(b[(r, 2)], 0.0);
        }
        assert_eq!(b[(4, 0)], 0.0);
        assert_eq!(b[(4, 1)], 0.0);
        assert_ne!(b[(4, 2)], 0.0);
    }
}

#[test]
fn inclination_response_without_j2() {
    let oc = OrbitConstants::new(A_BAR, inc(), &EARTH.two_body());
    let b = conv_matrix(&oc, 0.0, 10.0);
    assert_relative_eq!(b[(4, 2)] * oc.n * oc.a, (oc.n * 10.0).sin() / oc.n, max_relative = 1e-12);
}

/// Relative-element increment under a constant TNW acceleration over `t`,
/// from the circular-orbit Gauss equations without J2 (N points inward),
/// integrated with classic RK4.
fn gauss_increment(a: f64, u0: f64, t: f64, f: [f64; 3]) -> [f64; 6] {
    let n = (EARTH.mu / a.powi(3)).sqrt();
    let na = n * a;
    let rhs = |s: f64, x: &[f64; 6]| {
        let u = u0 + n * s;
        [
            2.0 * f[0] / na,
            -1.5 * n * x[0] + 2.0 * f[1] / na,
            (2.0 * u.cos() * f[0] - u.sin() * f[1]) / na,
            (2.0 * u.sin() * f[0] + u.cos() * f[1]) / na,
            u.cos() * f[2] / na,
            u.sin() * f[2] / na,
        ]
    };
    let steps = 2000;
    let h = t / steps as f64;
    let mut x = [0.0; 6];
    for k in 0..steps {
        let s = k as f64 * h;
        let add = |x: &[f64; 6], d: &[f64; 6], c: f64| std::array::from_fn::<f64, 6, _>(|j| x[j] + c * d[j]);
        let k1 = rhs(s, &x);
        let k2 = rhs(s + h / 2.0, &add(&x, &k1, h / 2.0));
        let k3 = rhs(s + h / 2.0, &add(&x, &k2, h / 2.0));
        let k4 = rhs(s + h, &add(&x, &k3, h));
        for j in 0..6 {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    x
}

#[test]
fn two_body_conv_matrix_matches_integrated_gauss_equations() {
    let oc = OrbitConstants::new(A_BAR, inc(), &EARTH.two_body());
    for (u0, t) in [(0.0, 10.0), (1.1, 10.0), (-2.4, 60.0), (3.0, 600.0)] {
        let b = conv_matrix(&oc, u0, t);
        for col in 0..3 {
            let mut f = [0.0; 3];
            f[col] = 1.0;
            let x = gauss_increment(A_BAR, u0, t, f);
            let scale = b.column(col).amax();
            for row in 0..6 {
                assert!(
                    (b[(row, col)] - x[row]).abs() <= 1e-9 * scale,
                    "u0 {u0} t {t} entry ({row},{col}): {} vs {}",
                    b[(row, col)],
                    x[row]
                );
            }
        }
    }
}

#[test]
fn position_of_the_reference_direction() {
    let p = elements_to_position(&MeanElements::circular(A_BAR, 0.0, 0.0, 0.0));
    assert_relative_eq!(p, Vector3::new(A_BAR, 0.0, 0.0), epsilon = 1e-6);
}

#[test]
fn radius_stays_near_a_for_small_eccentricity() {
    let x = MeanElements { a: A_BAR, u: 0.4, ex: 1e-4, ey: -2e-4, i: inc(), raan: 1.0 };
    let r = elements_to_position(&x).norm();
    assert!((r / A_BAR - 1.0).abs() <= 3e-4);
}

#[test]
fn in_plane_chord() {
    let du = 0.5;
    let p = elements_to_position(&MeanElements::circular(A_BAR, 0.2, inc(), 0.3));
    let q = elements_to_position(&MeanElements::circular(A_BAR, 0.2 + du, inc(), 0.3));
    assert_relative_eq!((p - q).norm(), 2.0 * A_BAR * (du / 2.0).sin(), max_relative = 1e-12);
}

proptest! {
    #[test]
    fn stm_composes_over_time(t1 in 0.0f64..500.0, t2 in 0.0f64..500.0, i in 0.2f64..2.9) {
        let oc = OrbitConstants::new(A_BAR, i, &EARTH);
        let lhs = stm(&oc, t1 + t2);
        let rhs = stm(&oc, t1) * stm(&oc, t2);
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn circular_position_matches_rotation_sequence(u in -3.1f64..3.1, i in 0.0f64..3.1, raan in -3.1f64..3.1) {
        let p = elements_to_position(&MeanElements::circular(A_BAR, u, i, raan));
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), raan)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), i)
            * Rotation3::from_axis_angle(&Vector3::z_axis(), u);
        let q = rot * Vector3::new(A_BAR, 0.0, 0.0);
        prop_assert!((p - q).norm() < 1e-6);
    }

    #[test]
    fn textbook_and_implemented_rates_agree(a in 6_600e3f64..8_000e3, i in 0.0f64..3.14) {
        let r = secular_rates(a, i, &EARTH);
        let (m, w, o) = textbook_rates(a, i);
        prop_assert!((r.mean_anomaly - m).abs() <= 1e-12 * m.abs().max(1e-9));
        prop_assert!((r.perigee - w).abs() <= 1e-12 * w.abs().max(1e-9));
        prop_assert!((r.node - o).abs() <= 1e-12 * o.abs().max(1e-9));
    }
}
