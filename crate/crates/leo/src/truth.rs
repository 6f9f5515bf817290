//! Plant propagation: nonlinear mean-element drift with thrust injected
//! through the convolution structure, or the linear synthesis model itself.

use ddrhc_core::Vector;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::elements::{absolute_elements, relative_elements, wrap_angle, MeanElements};
use crate::error::LeoError;
use crate::orbit::{conv_matrix, latitude_rate, secular_rates, stm, OrbitConstants, Physics};
use crate::walker::{ConstellationConfig, SatelliteState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMode {
    /// `δx' = A δx + B u/m` with the synthesis matrices.
    LinearModel,
    /// Kepler plus J2 secular drift at the actual elements.
    #[default]
    NonlinearMeanElement,
}

impl std::str::FromStr for TruthMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear-model" => Ok(Self::LinearModel),
            "nonlinear-mean-element" => Ok(Self::NonlinearMeanElement),
            _ => Err(format!("unknown truth mode {s:?} (expected linear-model or nonlinear-mean-element)")),
        }
    }
}

/// Propellant burnt by `thrust` (N per axis) held over `t_c`.
pub fn propellant_used(thrust: &Vector3<f64>, t_c: f64, cfg: &ConstellationConfig, phys: &Physics) -> f64 {
    thrust.abs().sum() * t_c / (cfg.isp * phys.g0)
}

fn burn(state: &SatelliteState, sat: usize, thrust: &Vector3<f64>, t_c: f64, cfg: &ConstellationConfig, phys: &Physics) -> Result<f64, LeoError> {
    let mass = state.mass - propellant_used(thrust, t_c, cfg, phys);
    if mass <= 0.0 {
        return Err(LeoError::PropellantExhausted { sat, mass });
    }
    Ok(mass)
}

fn acceleration(thrust: &Vector3<f64>, mass: f64) -> Vector {
    Vector::from_column_slice(thrust.as_slice()) / mass
}

/// One step of the nonlinear surrogate. The secular drift uses the actual
/// `a` and `i`; the thrust increment is the convolution matrix evaluated at
/// the actual `a`, `i`, `u`, mapped back from relative to absolute elements.
/// The eccentricity vector has no free drift in this model.
pub fn truth_step(
    state: &SatelliteState,
    sat: usize,
    thrust: &Vector3<f64>,
    t_c: f64,
    cfg: &ConstellationConfig,
    phys: &Physics,
) -> Result<SatelliteState, LeoError> {
    let x = state.elements;
    let b = conv_matrix(&OrbitConstants::new(x.a, x.i, phys), x.u, t_c) * acceleration(thrust, state.mass);
    let d_raan = b[5] / x.i.sin();
    let next = MeanElements {
        a: x.a * (1.0 + b[0]),
        u: wrap_angle(x.u + latitude_rate(x.a, x.i, phys) * t_c + b[1] - d_raan * x.i.cos()),
        ex: x.ex + b[2],
        ey: x.ey + b[3],
        i: x.i + b[4],
        raan: wrap_angle(x.raan + secular_rates(x.a, x.i, phys).node * t_c + d_raan),
    };
    Ok(SatelliteState { elements: next, mass: burn(state, sat, thrust, t_c, cfg, phys)? })
}

/// One step of the linear model about the nominal trajectory: the relative
/// elements about `nominal` advance by `A δx + B u/m` and are re-expressed
/// about `nominal_next`.
#[allow(clippy::too_many_arguments)]
pub fn linear_step(
    state: &SatelliteState,
    sat: usize,
    nominal: &MeanElements,
    nominal_next: &MeanElements,
    thrust: &Vector3<f64>,
    t_c: f64,
    cfg: &ConstellationConfig,
    phys: &Physics,
) -> Result<SatelliteState, LeoError> {
    let oc = OrbitConstants::new(nominal.a, nominal.i, phys);
    let dx = relative_elements(&state.elements, nominal);
    let next = stm(&oc, t_c) * dx + conv_matrix(&oc, nominal.u, t_c) * acceleration(thrust, state.mass);
    Ok(SatelliteState {
        elements: absolute_elements(&next, nominal_next),
        mass: burn(state, sat, thrust, t_c, cfg, phys)?,
    })
}
