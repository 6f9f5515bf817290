//! Mean-element orbit model: J2 secular rates, the linearized relative
//! dynamics about a circular orbit and element-to-position geometry.

use ddrhc_core::Mat;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::elements::MeanElements;

/// Physical constants used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    /// Gravitational parameter (m³/s²).
    pub mu: f64,
    /// Equatorial radius (m).
    pub earth_radius: f64,
    pub j2: f64,
    /// Standard gravity (m/s²).
    pub g0: f64,
}

pub const EARTH: Physics = Physics { mu: 3.986004418e14, earth_radius: 6_378_137.0, j2: 1.08262668e-3, g0: 9.80665 };

/// Mean radius used for the line-of-sight grazing sphere (m).
pub const MEAN_EARTH_RADIUS: f64 = 6_371_000.0;
/// Lowest altitude a link may graze (m).
pub const LOS_MIN_ALTITUDE: f64 = 80_000.0;

impl Default for Physics {
    fn default() -> Self {
        EARTH
    }
}

impl Physics {
    /// Same constants with J2 switched off.
    pub fn two_body(self) -> Self {
        Self { j2: 0.0, ..self }
    }

    pub fn mean_motion(&self, a: f64) -> f64 {
        (self.mu / a.powi(3)).sqrt()
    }
}

/// J2 secular drift of mean anomaly (on top of the mean motion), argument of
/// perigee and ascending node (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularRates {
    pub mean_anomaly: f64,
    pub perigee: f64,
    pub node: f64,
}

pub fn secular_rates(a: f64, i: f64, phys: &Physics) -> SecularRates {
    let k = 0.75 * phys.mean_motion(a) * (phys.earth_radius / a).powi(2) * phys.j2;
    let s2 = i.sin().powi(2);
    SecularRates { mean_anomaly: k * (2.0 - 3.0 * s2), perigee: k * (4.0 - 5.0 * s2), node: -2.0 * k * i.cos() }
}

/// Rate of the mean argument of latitude, `n + Ṁ + ω̇`.
pub fn latitude_rate(a: f64, i: f64, phys: &Physics) -> f64 {
    let r = secular_rates(a, i, phys);
    phys.mean_motion(a) + r.mean_anomaly + r.perigee
}

/// Constants of the linearized relative dynamics about a circular orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitConstants {
    pub a: f64,
    pub i: f64,
    pub n: f64,
    pub k: f64,
    pub lambda: f64,
    pub w: f64,
    pub c: f64,
}

impl OrbitConstants {
    pub fn new(a: f64, i: f64, phys: &Physics) -> Self {
        let n = phys.mean_motion(a);
        let k = 0.75 * n * (phys.earth_radius / a).powi(2) * phys.j2;
        let c2 = i.cos().powi(2);
        let w = n + k * (8.0 * c2 - 2.0);
        Self {
            a,
            i,
            n,
            k,
            lambda: 1.5 * n + 3.5 * k * (3.0 * c2 - 1.0),
            w,
            c: k * (5.0 * c2 - 1.0) / w,
        }
    }

    /// Eccentricity-vector rotation over `t_c`.
    pub fn delta_omega(&self, t_c: f64) -> f64 {
        self.k * (5.0 * self.i.cos().powi(2) - 1.0) * t_c
    }
}

/// State transition matrix of the relative elements over one step `t_c`.
pub fn stm(oc: &OrbitConstants, t_c: f64) -> Mat {
    let (s2i, si2) = ((2.0 * oc.i).sin(), oc.i.sin().powi(2));
    let dw = oc.delta_omega(t_c);
    let mut a = Mat::identity(6, 6);
    a[(1, 0)] = -oc.lambda * t_c;
    a[(1, 4)] = -4.0 * oc.k * t_c * s2i;
    a[(2, 2)] = dw.cos();
    a[(2, 3)] = -dw.sin();
    a[(3, 2)] = dw.sin();
    a[(3, 3)] = dw.cos();
    a[(5, 0)] = 3.5 * oc.k * t_c * s2i;
    a[(5, 4)] = 2.0 * oc.k * t_c * si2;
    a
}

/// Convolution matrix mapping a TNW acceleration held over `[k T_c,
/// (k+1) T_c)` to the relative-element increment, for a nominal argument of
/// latitude `u_k` at the start of the step.
pub fn conv_matrix(oc: &OrbitConstants, u_k: f64, t_c: f64) -> Mat {
    let OrbitConstants { a, i, n, k, lambda, w, c } = *oc;
    let du = w * t_c;
    let u1 = u_k + du;
    let (s2i, si2) = ((2.0 * i).sin(), i.sin().powi(2));
    let naw = n * a * w;
    let naw2 = naw * w;
    let psi23 = 4.0 * k * s2i / naw2 * (u1.cos() - u_k.cos() + u_k.sin() * du);
    let psi32 = (u1.cos() - (u_k + c * du).cos()) / (n * a * (1.0 - c) * w);
    let psi42 = (u1.sin() - (u_k + c * du).sin()) / (n * a * (1.0 - c) * w);
    let psi53 = (u1.sin() - u_k.sin()) / naw;
    let psi63 = -(w + 2.0 * k * si2) / naw2 * (u1.cos() - u_k.cos()) - 2.0 * k * si2 * u_k.sin() * du / naw2;

    let mut b = Mat::zeros(6, 3);
    b[(0, 0)] = 2.0 * du / naw;
    b[(1, 0)] = -lambda * du * du / naw2;
    b[(1, 1)] = 2.0 * du / naw;
    b[(1, 2)] = psi23;
    b[(2, 0)] = 2.0 * psi42;
    b[(2, 1)] = psi32;
    b[(3, 0)] = -2.0 * psi32;
    b[(3, 1)] = psi42;
    b[(4, 2)] = psi53;
    b[(5, 0)] = 3.5 * k * du * du * s2i / naw2;
    b[(5, 2)] = psi63;
    b
}

/// Position in the inertial frame, treating the mean elements as osculating
/// and using the first-order near-circular radius and latitude argument.
pub fn elements_to_position(x: &MeanElements) -> Vector3<f64> {
    // Mean to true argument of latitude and radius to first order in e.
    let (su, cu) = x.u.sin_cos();
    let r = x.a * (1.0 - x.ex * cu - x.ey * su);
    let theta = x.u + 2.0 * (x.ex * su - x.ey * cu);
    let (st, ct) = theta.sin_cos();
    let (so, co) = x.raan.sin_cos();
    let (si, ci) = x.i.sin_cos();
    r * Vector3::new(co * ct - so * st * ci, so * ct + co * st * ci, st * si)
}
