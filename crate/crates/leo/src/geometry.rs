//! Fleet geometry reports: coupling counts against the tracking range, the
//! line-of-sight duration of coupled pairs, and the per-unit load of the
//! synthesis on scaled fleets.

use ddrhc_core::comm::{Harness, ScheduleConfig, WindowSynthesizer};
use ddrhc_core::distributed::{rounds_required, DistributedConfig};
use rand::Rng;
use serde::Serialize;

use crate::coupling::{coupling_topology, los_feasible, nominal_positions, within_range};
use crate::error::LeoError;
use crate::orbit::Physics;
use crate::scenario::ConstellationSynthesizer;
use crate::walker::{Anchor, ConstellationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeCount {
    pub range: f64,
    /// Statistics of `|D⁻_i| − 1` over the fleet.
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    /// Mean number of satellites within range before the in-degree cap.
    pub mean_within: f64,
}

/// Coupling counts of the nominal fleet at time `t` for each range.
pub fn coupling_counts(
    cfg: &ConstellationConfig,
    anchor: &Anchor,
    t: f64,
    ranges: &[f64],
    phys: &Physics,
) -> Vec<RangeCount> {
    let p = nominal_positions(cfg, anchor, t, phys);
    let n = cfg.sats as f64;
    ranges
        .iter()
        .map(|&range| {
            let near = within_range(&p, range);
            let g = coupling_topology(&p, range, cfg.max_in_degree);
            let counts: Vec<usize> = (0..cfg.sats).map(|i| g.in_neighbors(i).len() - 1).collect();
            RangeCount {
                range,
                min: counts.iter().copied().min().unwrap_or(0),
                max: counts.iter().copied().max().unwrap_or(0),
                mean: counts.iter().sum::<usize>() as f64 / n,
                mean_within: near.iter().map(Vec::len).sum::<usize>() as f64 / n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkDuration {
    pub t: f64,
    pub sat: usize,
    pub neighbor: usize,
    /// How long the pair had been in line of sight at `t` (s).
    pub duration: f64,
    /// The backtracking hit its limit before losing line of sight.
    pub capped: bool,
}

/// Picks coupled pairs at random instants in `[0, span)` and walks their
/// nominal positions back in steps of `dt` until line of sight is lost.
pub fn link_durations(
    cfg: &ConstellationConfig,
    anchor: &Anchor,
    samples: usize,
    span: f64,
    dt: f64,
    limit: f64,
    rng: &mut impl Rng,
    phys: &Physics,
) -> Vec<LinkDuration> {
    let mut out = Vec::with_capacity(samples);
    let mut attempts = 0;
    while out.len() < samples && attempts < 100 * samples.max(1) {
        attempts += 1;
        let t = rng.random_range(0.0..span.max(f64::MIN_POSITIVE));
        let g = coupling_topology(&nominal_positions(cfg, anchor, t, phys), cfg.range, cfg.max_in_degree);
        let edges: Vec<(usize, usize)> = g.edges().into_iter().filter(|(j, i)| i != j).collect();
        if edges.is_empty() {
            continue;
        }
        let (neighbor, sat) = edges[rng.random_range(0..edges.len())];
        let mut back = 0.0;
        let capped = loop {
            if back + dt > limit {
                break true;
            }
            let p = nominal_positions(cfg, anchor, t - back - dt, phys);
            if !los_feasible(&p[sat], &p[neighbor], cfg.semi_major_axis) {
                break false;
            }
            back += dt;
        };
        out.push(LinkDuration { t, sat, neighbor, duration: back, capped });
    }
    out
}

/// Single-plane Walker ring `ī:T/1/0` whose range covers the two nearest
/// satellites on each side.
pub fn ring_family(inclination_deg: f64, sats: usize, semi_major_axis: f64) -> ConstellationConfig {
    let mut cfg = ConstellationConfig::walker(inclination_deg, sats, 1, 0, semi_major_axis);
    cfg.range = 2.0 * semi_major_axis * (2.5 * std::f64::consts::PI / sats as f64).sin();
    cfg
}

/// Per-unit load of one window synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadPoint {
    pub sats: usize,
    pub max_in_degree: usize,
    pub max_sent_per_round: usize,
    pub max_received_per_round: usize,
    pub max_bytes_per_round: usize,
    pub max_peak_bytes: usize,
    pub messages: usize,
}

pub fn synthesis_load(
    cfg: &ConstellationConfig,
    schedule: &ScheduleConfig,
    k: usize,
    config: DistributedConfig,
    phys: &Physics,
) -> Result<LoadPoint, LeoError> {
    cfg.validate(phys)?;
    let anchor = Anchor { t0: 0.0, u0: 0.0, raan0: 0.0 };
    let mut synth = ConstellationSynthesizer::new(cfg, &anchor, schedule, config, phys);
    let mut harness = Harness::new(cfg.sats, rounds_required(schedule.horizon));
    synth.synthesize(k, &mut harness)?;
    let summary = synth.summaries[0];
    let stats = harness.stats();
    let degree = (k..=k + schedule.horizon).map(|tau| synth.topology.at(tau).max_in_degree()).max().unwrap_or(1);
    Ok(LoadPoint {
        sats: cfg.sats,
        max_in_degree: degree,
        max_sent_per_round: stats.max_sent(),
        max_received_per_round: stats.max_received(),
        max_bytes_per_round: stats.max_bytes(),
        max_peak_bytes: summary.max_peak_bytes,
        messages: stats.messages,
    })
}
