//! Near-circular mean elements and the relative elements about a reference.

use std::f64::consts::{PI, TAU};

use ddrhc_core::Vector;
use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x - TAU * ((x + PI) / TAU).floor();
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Mean elements `(a, u, e_x, e_y, i, Ω)` of a near-circular orbit. `u` is
/// the mean argument of latitude and `(e_x, e_y)` the eccentricity vector.
/// Angles are kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanElements {
    pub a: f64,
    pub u: f64,
    pub ex: f64,
    pub ey: f64,
    pub i: f64,
    pub raan: f64,
}

impl MeanElements {
    pub fn circular(a: f64, u: f64, i: f64, raan: f64) -> Self {
        Self { a, u, ex: 0.0, ey: 0.0, i, raan }
    }

    pub fn eccentricity(&self) -> f64 {
        self.ex.hypot(self.ey)
    }
}

/// Relative elements `δx = (δa, δu, δe_x, δe_y, δi, δΩ)` of a satellite
/// about its nominal slot. `δa` is dimensionless, the rest are radians.
pub fn relative_elements(x: &MeanElements, nominal: &MeanElements) -> Vector {
    let d_raan = wrap_angle(x.raan - nominal.raan);
    let (si, ci) = nominal.i.sin_cos();
    Vector::from_vec(vec![
        x.a / nominal.a - 1.0,
        wrap_angle(x.u - nominal.u + d_raan * ci),
        x.ex,
        x.ey,
        x.i - nominal.i,
        d_raan * si,
    ])
}

/// Inverse of [`relative_elements`].
pub fn absolute_elements(dx: &Vector, nominal: &MeanElements) -> MeanElements {
    let (si, ci) = nominal.i.sin_cos();
    let d_raan = dx[5] / si;
    MeanElements {
        a: nominal.a * (1.0 + dx[0]),
        u: wrap_angle(nominal.u + dx[1] - d_raan * ci),
        ex: dx[2],
        ey: dx[3],
        i: nominal.i + dx[4],
        raan: wrap_angle(nominal.raan + d_raan),
    }
}
