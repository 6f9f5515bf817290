//! Tracking outputs, weights, the thrust law and the per-satellite agent model
//! handed to the gain synthesis.

use std::sync::Arc;

use ddrhc_core::{AgentId, AgentModel, Mat, TopologyWindow, Vector};
use nalgebra::Vector3;

use crate::orbit::{conv_matrix, stm, OrbitConstants, Physics};
use crate::walker::{Anchor, ConstellationConfig};

const Q_REL: f64 = 1e8;
const Q_E: f64 = 4e4;
const Q_I: f64 = 1e4;

/// Rows `(ā δa, δe_x, δe_y, δi)` of the decoupled inertial output.
pub fn h_inertial(a_bar: f64) -> Mat {
    let mut h = Mat::zeros(4, 6);
    h[(0, 0)] = a_bar;
    h[(1, 2)] = 1.0;
    h[(2, 3)] = 1.0;
    h[(3, 4)] = 1.0;
    h
}

/// Rows of the relative output between two satellites: the argument of
/// latitude and node differences, with the node-induced part of `δu` removed.
pub fn h_relative(i_bar: f64) -> Mat {
    let mut h = Mat::zeros(2, 6);
    h[(0, 1)] = 1.0;
    h[(0, 5)] = -1.0 / i_bar.tan();
    h[(1, 5)] = 1.0 / i_bar.sin();
    h
}

pub fn output_dim(in_degree: usize) -> usize {
    2 * (in_degree - 1) + 4
}

/// Coupling blocks `H_{i,p}` for the in-neighborhood `d_minus` of `i`
/// (ascending, `i` included). Relative slots follow the order of the other
/// members.
pub fn output_matrices(i: AgentId, d_minus: &[AgentId], cfg: &ConstellationConfig) -> Vec<(AgentId, Mat)> {
    assert!(d_minus.contains(&i), "in-neighborhood must contain the satellite itself");
    let others: Vec<AgentId> = d_minus.iter().copied().filter(|&j| j != i).collect();
    let o = output_dim(d_minus.len());
    let rel = h_relative(cfg.inclination());
    let mut own = Mat::zeros(o, 6);
    for s in 0..others.len() {
        own.view_mut((2 * s, 0), (2, 6)).copy_from(&rel);
    }
    own.view_mut((o - 4, 0), (4, 6)).copy_from(&h_inertial(cfg.semi_major_axis));
    let mut blocks = vec![(i, own)];
    for (s, &j) in others.iter().enumerate() {
        let mut h = Mat::zeros(o, 6);
        h.view_mut((2 * s, 0), (2, 6)).copy_from(&(-&rel));
        blocks.push((j, h));
    }
    blocks.sort_by_key(|(j, _)| *j);
    blocks
}

/// `Q_i` for an in-neighborhood of `in_degree` satellites, and `R_i`.
pub fn weights(in_degree: usize, cfg: &ConstellationConfig) -> (Mat, Mat) {
    let o = output_dim(in_degree);
    let mut q = Mat::zeros(o, o);
    for s in 0..o - 4 {
        q[(s, s)] = Q_REL;
    }
    q[(o - 4, o - 4)] = 1.0 / (cfg.semi_major_axis * 1e-4).powi(2);
    q[(o - 3, o - 3)] = Q_E;
    q[(o - 2, o - 2)] = Q_E;
    q[(o - 1, o - 1)] = Q_I;
    (q, Mat::identity(3, 3) / cfg.max_thrust.powi(2))
}

/// Thrust command and what the thrusters actually deliver after the per-axis
/// clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thrust {
    pub commanded: Vector3<f64>,
    pub applied: Vector3<f64>,
}

impl Thrust {
    pub fn saturated(&self) -> bool {
        self.commanded != self.applied
    }
}

/// `u = −m Σ_j K_{i,j} δx_j`, clamped per axis to `±max_thrust`.
pub fn thrust_feedback<'a>(
    terms: impl IntoIterator<Item = (&'a Mat, &'a Vector)>,
    mass: f64,
    max_thrust: f64,
) -> Thrust {
    let mut acc = Vector3::zeros();
    for (k, dx) in terms {
        let v = k * dx;
        acc -= Vector3::new(v[0], v[1], v[2]);
    }
    clamp_thrust(acc * mass, max_thrust)
}

pub fn clamp_thrust(commanded: Vector3<f64>, max_thrust: f64) -> Thrust {
    Thrust { commanded, applied: commanded.map(|x| x.clamp(-max_thrust, max_thrust)) }
}

/// Linearized model of one satellite over a window, with the couplings the
/// window prescribes. The input is the TNW acceleration `u/m`.
pub struct SatelliteModel {
    id: AgentId,
    cfg: ConstellationConfig,
    oc: OrbitConstants,
    a: Mat,
    anchor: Anchor,
    t_c: f64,
    u_rate: f64,
    window: Arc<TopologyWindow>,
}

impl SatelliteModel {
    pub fn new(
        id: AgentId,
        cfg: &ConstellationConfig,
        anchor: &Anchor,
        t_c: f64,
        window: Arc<TopologyWindow>,
        phys: &Physics,
    ) -> Self {
        let oc = OrbitConstants::new(cfg.semi_major_axis, cfg.inclination(), phys);
        Self { id, cfg: *cfg, oc, a: stm(&oc, t_c), anchor: *anchor, t_c, u_rate: oc.w, window }
    }

    /// Nominal argument of latitude at step `tau`.
    fn nominal_u(&self, tau: usize) -> f64 {
        let (du, _) = self.cfg.slot_offsets(self.id);
        self.anchor.u0 + du + self.u_rate * (tau as f64 * self.t_c - self.anchor.t0)
    }

    fn in_degree(&self, tau: usize) -> usize {
        self.window.at(tau).in_neighbors(self.id).len()
    }
}

impl AgentModel for SatelliteModel {
    fn state_dim(&self) -> usize {
        6
    }
    fn input_dim(&self) -> usize {
        3
    }
    fn a(&self, _: usize) -> Mat {
        self.a.clone()
    }
    fn b(&self, tau: usize) -> Mat {
        conv_matrix(&self.oc, self.nominal_u(tau), self.t_c)
    }
    fn q(&self, tau: usize) -> Mat {
        weights(self.in_degree(tau), &self.cfg).0
    }
    fn r(&self, _: usize) -> Mat {
        Mat::identity(3, 3) / self.cfg.max_thrust.powi(2)
    }
    fn h(&self, j: AgentId, tau: usize) -> Option<Mat> {
        let d_minus = self.window.at(tau).in_neighbors(self.id);
        if !d_minus.contains(&j) {
            return None;
        }
        output_matrices(self.id, d_minus, &self.cfg).into_iter().find(|(p, _)| *p == j).map(|(_, h)| h)
    }
    fn output_dim(&self, tau: usize) -> usize {
        output_dim(self.in_degree(tau))
    }
}
