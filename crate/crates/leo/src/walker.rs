//! Walker constellation layout, nominal slots and the fleet anchor.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::elements::{wrap_angle, MeanElements};
use crate::error::LeoError;
use crate::orbit::{latitude_rate, secular_rates, Physics};

/// Walker `ī:T/P/F` shell plus the control parameters of every satellite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationConfig {
    pub inclination_deg: f64,
    /// Satellite count T.
    pub sats: usize,
    /// Plane count P.
    pub planes: usize,
    /// Phasing parameter F.
    pub phasing: usize,
    /// Nominal semi-major axis ā (m).
    pub semi_major_axis: f64,
    /// Tracking-output coupling range R (m).
    pub range: f64,
    /// Maximum in-neighborhood size, the satellite itself included.
    pub max_in_degree: usize,
    /// Maximum thrust per axis (N).
    pub max_thrust: f64,
    /// Specific impulse (s).
    pub isp: f64,
    /// Initial wet mass (kg).
    pub initial_mass: f64,
}

impl ConstellationConfig {
    /// A Walker shell with the thruster and mass parameters of the reference
    /// mega-constellation satellites.
    pub fn walker(inclination_deg: f64, sats: usize, planes: usize, phasing: usize, semi_major_axis: f64) -> Self {
        Self {
            inclination_deg,
            sats,
            planes,
            phasing,
            semi_major_axis,
            range: 750e3,
            max_in_degree: 6,
            max_thrust: 0.068,
            isp: 1640.0,
            initial_mass: 260.0,
        }
    }

    /// 53°:1584/72/17 at 6921 km.
    pub fn reference_shell() -> Self {
        Self::walker(53.0, 1584, 72, 17, 6_921e3)
    }

    pub fn inclination(&self) -> f64 {
        self.inclination_deg.to_radians()
    }

    pub fn sats_per_plane(&self) -> usize {
        self.sats / self.planes
    }

    pub fn validate(&self, phys: &Physics) -> Result<(), LeoError> {
        let bad = |m: String| Err(LeoError::InvalidConfig(m));
        if self.sats == 0 || self.planes == 0 || self.sats % self.planes != 0 {
            return bad(format!("T = {} must be a positive multiple of P = {}", self.sats, self.planes));
        }
        if self.phasing >= self.sats {
            return bad(format!("phasing F = {} must be below T = {}", self.phasing, self.sats));
        }
        if !(self.semi_major_axis > phys.earth_radius) {
            return bad(format!("semi-major axis {} m is inside the Earth", self.semi_major_axis));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return bad(format!("inclination {}° out of [0, 180]", self.inclination_deg));
        }
        if self.inclination().sin().abs() < 1e-6 {
            return bad("equatorial shells make the node-relative elements singular".into());
        }
        if !(self.range >= 0.0) {
            return bad(format!("range must be non-negative (got {})", self.range));
        }
        if self.max_in_degree == 0 {
            return bad("max in-degree must be at least 1".into());
        }
        for (name, v) in [("max thrust", self.max_thrust), ("Isp", self.isp), ("initial mass", self.initial_mass)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive (got {v})"));
            }
        }
        Ok(())
    }

    /// Offsets `(Δu, ΔΩ)` of slot `s` relative to slot 0 at the anchor epoch.
    pub fn slot_offsets(&self, s: usize) -> (f64, f64) {
        let (t, p, f) = (self.sats as f64, self.planes as f64, self.phasing as f64);
        let plane = (s * self.planes / self.sats) as f64;
        let in_plane = (s % self.sats_per_plane()) as f64;
        (in_plane * TAU * p / t + plane * TAU * f / t, plane * TAU / p)
    }

    /// Mass flow at full throttle on a single axis (kg/s).
    pub fn full_throttle_mass_rate(&self, phys: &Physics) -> f64 {
        self.max_thrust / (self.isp * phys.g0)
    }
}

/// Argument of latitude and node of slot 0 at epoch `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub t0: f64,
    pub u0: f64,
    pub raan0: f64,
}

/// Nominal mean elements of satellite `sat` at time `t`.
pub fn walker_nominal(
    cfg: &ConstellationConfig,
    anchor: &Anchor,
    t: f64,
    sat: usize,
    phys: &Physics,
) -> Result<MeanElements, LeoError> {
    if sat >= cfg.sats {
        return Err(LeoError::SatelliteOutOfRange { sat, count: cfg.sats });
    }
    Ok(nominal_unchecked(cfg, anchor, t, sat, phys))
}

/// Nominal elements of the whole fleet at time `t`.
pub fn fleet_nominal(cfg: &ConstellationConfig, anchor: &Anchor, t: f64, phys: &Physics) -> Vec<MeanElements> {
    (0..cfg.sats).map(|s| nominal_unchecked(cfg, anchor, t, s, phys)).collect()
}

fn nominal_unchecked(cfg: &ConstellationConfig, anchor: &Anchor, t: f64, sat: usize, phys: &Physics) -> MeanElements {
    let (a, i) = (cfg.semi_major_axis, cfg.inclination());
    let dt = t - anchor.t0;
    let (du, draan) = cfg.slot_offsets(sat);
    MeanElements::circular(
        a,
        wrap_angle(anchor.u0 + du + latitude_rate(a, i, phys) * dt),
        i,
        wrap_angle(anchor.raan0 + draan + secular_rates(a, i, phys).node * dt),
    )
}

/// Least-squares anchor at `t0` from the fleet's elements at `t0`: the mean of
/// the de-slotted residuals. Residuals are wrapped relative to the first one
/// so that a fleet straddling ±π averages correctly.
pub fn compute_anchor(cfg: &ConstellationConfig, states: &[MeanElements], t0: f64) -> Result<Anchor, LeoError> {
    if states.is_empty() || states.len() > cfg.sats {
        return Err(LeoError::FleetSizeMismatch { expected: cfg.sats, got: states.len() });
    }
    let residual = |s: usize, x: &MeanElements| {
        let (du, draan) = cfg.slot_offsets(s);
        (x.u - du, x.raan - draan)
    };
    let (ru0, ro0) = residual(0, &states[0]);
    let (mut su, mut so) = (0.0, 0.0);
    for (s, x) in states.iter().enumerate() {
        let (ru, ro) = residual(s, x);
        su += wrap_angle(ru - ru0);
        so += wrap_angle(ro - ro0);
    }
    let n = states.len() as f64;
    Ok(Anchor { t0, u0: wrap_angle(ru0 + su / n), raan0: wrap_angle(ro0 + so / n) })
}

/// Mean elements plus the current wet mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    pub elements: MeanElements,
    pub mass: f64,
}
