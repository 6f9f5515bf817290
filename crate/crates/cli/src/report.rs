//! `ddrhc constellation`: coupling counts against range and the
//! line-of-sight durations of coupled pairs.

use std::path::Path;

use anyhow::Context;
use ddrhc_core::comm::check_tv_constraints;
use ddrhc_leo::geometry::{coupling_counts, link_durations, LinkDuration, RangeCount};
use ddrhc_leo::orbit::secular_rates;
use ddrhc_leo::{los_range, Anchor, OrbitConstants, EARTH};

use crate::config::ExperimentConfig;
use crate::fixtures::rng;
use crate::output::*;

#[derive(Debug, Clone)]
pub struct GeometryReport {
    pub counts: Vec<RangeCount>,
    pub durations: Vec<LinkDuration>,
    pub histogram: Vec<HistogramCsv>,
    /// Extremes over samples that lost line of sight within the limit.
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub lines: Vec<String>,
}

pub fn histogram(durations: &[LinkDuration], bin: f64) -> Vec<HistogramCsv> {
    let finished: Vec<f64> = durations.iter().filter(|d| !d.capped).map(|d| d.duration).collect();
    let Some(max) = finished.iter().copied().reduce(f64::max) else { return Vec::new() };
    let bins = (max / bin).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for d in finished {
        counts[(d / bin).floor() as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramCsv { bin_start: b as f64 * bin, bin_end: (b + 1) as f64 * bin, count })
        .collect()
}

pub fn constellation_report(cfg: &ExperimentConfig, seed: u64, out: &Path) -> anyhow::Result<GeometryReport> {
    let c = cfg.constellation()?;
    let g = &cfg.geometry;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let anchor = Anchor { t0: 0.0, u0: 0.0, raan0: 0.0 };
    let ranges: Vec<f64> = g.ranges_km.iter().map(|r| r * 1e3).collect();
    let counts = coupling_counts(c, &anchor, g.at, &ranges, &EARTH);
    let durations = link_durations(c, &anchor, g.samples, g.span, g.dt, g.limit, &mut rng(seed), &EARTH);
    let hist = histogram(&durations, g.bin);
    write_csv(&out.join("range_counts.csv"), RANGE_HEADER, &counts)?;
    write_csv(&out.join("link_durations.csv"), DURATION_HEADER, &durations)?;
    write_csv(&out.join("link_histogram.csv"), HISTOGRAM_HEADER, &hist)?;

    let finished: Vec<f64> = durations.iter().filter(|d| !d.capped).map(|d| d.duration).collect();
    let dt_min = finished.iter().copied().reduce(f64::min);
    let dt_max = durations.iter().map(|d| d.duration).reduce(f64::max);

    let oc = OrbitConstants::new(c.semi_major_axis, c.inclination(), &EARTH);
    let rates = secular_rates(c.semi_major_axis, c.inclination(), &EARTH);
    let mut lines = vec![
        format!(
            "Walker {}°:{}/{}/{} at a = {:.0} km, range {:.0} km, |D-|max = {}",
            c.inclination_deg,
            c.sats,
            c.planes,
            c.phasing,
            c.semi_major_axis / 1e3,
            c.range / 1e3,
            c.max_in_degree
        ),
        format!("mean motion n = {:.6e} rad/s, period {:.1} s", oc.n, std::f64::consts::TAU / oc.n),
        format!("J2 factor K = {:.4e} rad/s, node drift {:.4e} rad/s", oc.k, rates.node),
        format!("line-of-sight range {:.1} km", los_range(c.semi_major_axis) / 1e3),
        format!("full-throttle mass rate {:.4e} kg/s per axis", c.full_throttle_mass_rate(&EARTH)),
        format!(
            "{} link samples, {} capped at {} s",
            durations.len(),
            durations.len() - finished.len(),
            g.limit
        ),
    ];
    match (dt_min, dt_max) {
        (Some(lo), Some(hi)) if hi > lo => {
            lines.push(format!("link durations in [{lo}, {hi}] s"));
            let check = check_tv_constraints(&cfg.schedule, hi, lo)?;
            lines.push(format!(
                "schedule H = {}, d = {}: {}",
                cfg.schedule.horizon,
                cfg.schedule.used,
                if check.admissible() { "admissible".to_string() } else { check.violations.join("; ") }
            ));
            lines.push(format!(
                "bounds: H < {:.2}, d < {:.2}, d >= {:.2} + {:.2} H",
                ddrhc_core::comm::ratio_to_f64(&check.horizon_bound),
                ddrhc_core::comm::ratio_to_f64(&check.used_upper),
                ddrhc_core::comm::ratio_to_f64(&check.used_lower_offset),
                ddrhc_core::comm::ratio_to_f64(&check.used_lower_slope)
            ));
        }
        _ => lines.push("no link lost line of sight within the limit".to_string()),
    }
    Ok(GeometryReport { counts, durations, histogram: hist, dt_min, dt_max, lines })
}
