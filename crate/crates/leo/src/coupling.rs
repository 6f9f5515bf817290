//! Geometry-driven coupling topology and line-of-sight gating.

use ddrhc_core::Digraph;
use nalgebra::Vector3;

use crate::orbit::{elements_to_position, Physics, LOS_MIN_ALTITUDE, MEAN_EARTH_RADIUS};
use crate::walker::{fleet_nominal, Anchor, ConstellationConfig};

/// Nominal positions of the whole fleet at time `t`.
pub fn nominal_positions(cfg: &ConstellationConfig, anchor: &Anchor, t: f64, phys: &Physics) -> Vec<Vector3<f64>> {
    fleet_nominal(cfg, anchor, t, phys).iter().map(elements_to_position).collect()
}

/// Other satellites within `range` of each satellite, nearest first with ties
/// broken by index. Not truncated, so the relation is symmetric.
pub fn within_range(positions: &[Vector3<f64>], range: f64) -> Vec<Vec<usize>> {
    (0..positions.len())
        .map(|i| {
            let mut near: Vec<(f64, usize)> = positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, p)| ((p - positions[i]).norm(), j))
                .filter(|&(d, _)| d <= range)
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Coupling digraph: satellite `i` tracks the `max_in_degree − 1` nearest
/// satellites within `range`. Edge `(j, i)` means `j ∈ D⁻_i`.
pub fn coupling_topology(positions: &[Vector3<f64>], range: f64, max_in_degree: usize) -> Digraph {
    let cap = max_in_degree.saturating_sub(1);
    let edges: Vec<(usize, usize)> = within_range(positions, range)
        .into_iter()
        .enumerate()
        .flat_map(|(i, near)| near.into_iter().take(cap).map(move |j| (j, i)))
        .collect();
    Digraph::new(positions.len(), edges).expect("indices come from the position list")
}

/// Longest link between two satellites at radius `a` that stays above the
/// grazing altitude.
pub fn los_range(a: f64) -> f64 {
    2.0 * (a * a - (MEAN_EARTH_RADIUS + LOS_MIN_ALTITUDE).powi(2)).max(0.0).sqrt()
}

pub fn los_feasible(p_i: &Vector3<f64>, p_j: &Vector3<f64>, a: f64) -> bool {
    (p_i - p_j).norm() <= los_range(a)
}
