use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;
use crate::network::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Control discretization time (s).
    pub t_c: f64,
    /// Interval between communication rounds (s).
    pub t_t: f64,
    /// Window length H (steps).
    pub horizon: usize,
    /// Gains actuated per window d (steps).
    pub used: usize,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.t_c > 0.0 && self.t_c.is_finite()) {
            return Err(ScheduleError::InvalidConfig(format!("T_c must be positive (got {})", self.t_c)));
        }
        if !(self.t_t > 0.0 && self.t_t.is_finite()) {
            return Err(ScheduleError::InvalidConfig(format!("T_t must be positive (got {})", self.t_t)));
        }
        if self.used == 0 || self.used > self.horizon {
            return Err(ScheduleError::InvalidConfig(format!(
                "need 1 <= d <= H (got d = {}, H = {})",
                self.used, self.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePlan {
    pub t_c: f64,
    pub t_t: f64,
    /// Lead time `(H + 2) T_t` (s).
    pub delta_minus: f64,
    /// Communication rounds per window, `H + 2`.
    pub rounds: usize,
    /// Whether a new window starts before the previous one is consumed.
    pub overlapping: bool,
}

impl SchedulePlan {
    /// Simulated time at which the synthesis of window `k` starts.
    pub fn start_time(&self, k: usize) -> f64 {
        k as f64 * self.t_c - self.delta_minus
    }

    /// Time at which the last round of window `k` completes.
    pub fn ready_time(&self, k: usize) -> f64 {
        self.start_time(k) + self.rounds as f64 * self.t_t
    }

    pub fn actuation_time(&self, k: usize) -> f64 {
        k as f64 * self.t_c
    }
}

pub fn plan_schedule(cfg: &ScheduleConfig) -> Result<SchedulePlan, ScheduleError> {
    cfg.validate()?;
    let rounds = cfg.horizon + 2;
    let delta_minus = rounds as f64 * cfg.t_t;
    Ok(SchedulePlan {
        t_c: cfg.t_c,
        t_t: cfg.t_t,
        delta_minus,
        rounds,
        overlapping: (cfg.used as f64) * cfg.t_c < delta_minus,
    })
}

/// Admissible `(H, d)` region for a time-varying topology whose links last
/// between `Δt_min` and `Δt_max`, evaluated in exact rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct TvAdmissibility {
    /// `H` must stay strictly below this value.
    pub horizon_bound: BigRational,
    /// `d` must stay strictly below this value.
    pub used_upper: BigRational,
    /// `d ≥ used_lower_offset + used_lower_slope · H`.
    pub used_lower_offset: BigRational,
    pub used_lower_slope: BigRational,
    pub horizon_ok: bool,
    pub used_ok: bool,
    pub non_overlapping: bool,
    /// One line per violated inequality, with both sides evaluated.
    pub violations: Vec<String>,
}

impl TvAdmissibility {
    pub fn admissible(&self) -> bool {
        self.horizon_ok && self.used_ok && self.non_overlapping
    }
}

fn exact(x: f64) -> Result<BigRational, ScheduleError> {
    BigRational::from_float(x).ok_or_else(|| ScheduleError::InvalidConfig(format!("{x} is not finite")))
}

pub fn ratio_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Checks `(H+2)T_t + H T_c < Δt_max`, `(d+1)T_t + d T_c < Δt_min` and
/// `d ≥ (H+2)T_t / T_c`.
pub fn check_tv_constraints(
    cfg: &ScheduleConfig,
    dt_max: f64,
    dt_min: f64,
) -> Result<TvAdmissibility, ScheduleError> {
    cfg.validate()?;
    if !(dt_max > dt_min && dt_min > 0.0) {
        return Err(ScheduleError::InvalidConfig(format!(
            "need dt_max > dt_min > 0 (got {dt_max}, {dt_min})"
        )));
    }
    let (tc, tt) = (exact(cfg.t_c)?, exact(cfg.t_t)?);
    let (dmax, dmin) = (exact(dt_max)?, exact(dt_min)?);
    let h = BigRational::from_integer(cfg.horizon.into());
    let d = BigRational::from_integer(cfg.used.into());
    let one = BigRational::from_integer(1.into());
    let two = BigRational::from_integer(2.into());

    let horizon_bound = (&dmax - &two * &tt) / (&tt + &tc);
    let used_upper = (&dmin - &tt) / (&tt + &tc);
    let used_lower_offset = &two * &tt / &tc;
    let used_lower_slope = &tt / &tc;

    let lhs1 = (&h + &two) * &tt + &h * &tc;
    let lhs2 = (&d + &one) * &tt + &d * &tc;
    let rhs3 = (&h + &two) * &tt / &tc;
    let horizon_ok = lhs1 < dmax;
    let used_ok = lhs2 < dmin;
    let non_overlapping = d >= rhs3;

    let mut violations = Vec::new();
    if !horizon_ok {
        violations.push(format!(
            "(H+2)T_t + H T_c < dt_max fails: {} >= {}",
            ratio_to_f64(&lhs1),
            dt_max
        ));
    }
    if !used_ok {
        violations.push(format!(
            "(d+1)T_t + d T_c < dt_min fails: {} >= {}",
            ratio_to_f64(&lhs2),
            dt_min
        ));
    }
    if !non_overlapping {
        violations.push(format!(
            "d >= (H+2)T_t/T_c fails: {} < {}",
            cfg.used,
            ratio_to_f64(&rhs3)
        ));
    }
    Ok(TvAdmissibility {
        horizon_bound,
        used_upper,
        used_lower_offset,
        used_lower_slope,
        horizon_ok,
        used_ok,
        non_overlapping,
        violations,
    })
}

/// Step at which `C_i(τ)` of window `k` is evaluated, as simulated time
/// `k T_c - (τ - k + 2) T_t`.
pub fn feasibility_time(cfg: &ScheduleConfig, k: usize, tau: usize) -> f64 {
    k as f64 * cfg.t_c - (tau - k + 2) as f64 * cfg.t_t
}

/// `C_i(τ)` for every unit: `j` is feasible for `i` when `link(i, j, t)`
/// holds at the evaluation time. Each unit is always feasible to itself.
pub fn feasibility_sets(
    link: impl Fn(AgentId, AgentId, f64) -> bool,
    units: usize,
    tau: usize,
    k: usize,
    cfg: &ScheduleConfig,
) -> Vec<BTreeSet<AgentId>> {
    let t = feasibility_time(cfg, k, tau);
    (0..units)
        .map(|i| (0..units).filter(|&j| j == i || link(i, j, t)).collect())
        .collect()
}

/// Feasibility sets for every step of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    start: usize,
    sets: Vec<Vec<BTreeSet<AgentId>>>,
}

impl Feasibility {
    pub fn new(start: usize, sets: Vec<Vec<BTreeSet<AgentId>>>) -> Self {
        Self { start, sets }
    }

    /// Everything feasible.
    pub fn unrestricted(start: usize, horizon: usize, units: usize) -> Self {
        let all: BTreeSet<AgentId> = (0..units).collect();
        Self { start, sets: vec![vec![all; units]; horizon + 1] }
    }

    pub fn for_window(
        link: impl Fn(AgentId, AgentId, f64) -> bool,
        units: usize,
        k: usize,
        cfg: &ScheduleConfig,
    ) -> Self {
        let sets = (k..=k + cfg.horizon).map(|tau| feasibility_sets(&link, units, tau, k, cfg)).collect();
        Self { start: k, sets }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn set(&self, tau: usize, i: AgentId) -> &BTreeSet<AgentId> {
        &self.sets[tau - self.start][i]
    }

    pub fn contains(&self, tau: usize, i: AgentId, j: AgentId) -> bool {
        i == j || self.set(tau, i).contains(&j)
    }
}
