//! Fleet error metrics.

use ddrhc_core::{Digraph, Vector};
use serde::Serialize;

use crate::control::output_matrices;
use crate::elements::{relative_elements, wrap_angle, MeanElements};
use crate::error::LeoError;
use crate::orbit::Physics;
use crate::walker::{compute_anchor, fleet_nominal, ConstellationConfig};

/// Mean absolute errors over the fleet. `u` and `raan` are measured against
/// an anchor fitted to the fleet at the same instant, so a common drift of
/// the whole shell does not count as error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FleetMetrics {
    pub t: f64,
    pub mae_a: f64,
    pub mae_e: f64,
    pub mae_i: f64,
    pub mae_u: f64,
    pub mae_raan: f64,
}

pub fn metrics(cfg: &ConstellationConfig, states: &[MeanElements], t: f64, phys: &Physics) -> Result<FleetMetrics, LeoError> {
    if states.len() != cfg.sats {
        return Err(LeoError::FleetSizeMismatch { expected: cfg.sats, got: states.len() });
    }
    let anchor = compute_anchor(cfg, states, t)?;
    let nominal = fleet_nominal(cfg, &anchor, t, phys);
    let n = states.len() as f64;
    let mean = |f: &dyn Fn(&MeanElements, &MeanElements) -> f64| {
        states.iter().zip(&nominal).map(|(x, xb)| f(x, xb)).sum::<f64>() / n
    };
    Ok(FleetMetrics {
        t,
        mae_a: mean(&|x, xb| (x.a - xb.a).abs()),
        mae_e: mean(&|x, _| x.eccentricity()),
        mae_i: mean(&|x, xb| (x.i - xb.i).abs()),
        mae_u: mean(&|x, xb| wrap_angle(x.u - xb.u).abs()),
        mae_raan: mean(&|x, xb| wrap_angle(x.raan - xb.raan).abs()),
    })
}

/// Tracking outputs `z_i = Σ_p H_{i,p} δx_p` for the coupling graph `g`.
pub fn tracking_outputs(cfg: &ConstellationConfig, g: &Digraph, dx: &[Vector]) -> Vec<Vector> {
    (0..g.agent_count())
        .map(|i| {
            let blocks = output_matrices(i, g.in_neighbors(i), cfg);
            let mut z = Vector::zeros(blocks[0].1.nrows());
            for (p, h) in &blocks {
                z += h * &dx[*p];
            }
            z
        })
        .collect()
}

/// Fleet mean of `‖z_rel,i‖`, the relative part of each output.
pub fn mean_relative_output(outputs: &[Vector]) -> f64 {
    outputs.iter().map(|z| z.rows(0, z.len() - 4).norm()).sum::<f64>() / outputs.len() as f64
}

/// `‖z‖` over the whole fleet.
pub fn global_output_norm(outputs: &[Vector]) -> f64 {
    outputs.iter().map(|z| z.norm_squared()).sum::<f64>().sqrt()
}

/// Relative elements of every satellite about its nominal slot.
pub fn fleet_relative(states: &[MeanElements], nominal: &[MeanElements]) -> Vec<Vector> {
    states.iter().zip(nominal).map(|(x, xb)| relative_elements(x, xb)).collect()
}
