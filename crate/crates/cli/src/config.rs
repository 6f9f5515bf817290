use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ddrhc_core::comm::ScheduleConfig;
use ddrhc_core::distributed::DistributedConfig;
use ddrhc_leo::scenario::InitialSpread;
use ddrhc_leo::{ConstellationConfig, TruthMode, EARTH};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    GenericNetwork,
    Constellation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Chain,
    Ring,
    Tree,
    Complete,
}

/// Random LTI agents on a fixed topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub agents: usize,
    pub topology: GraphKind,
    /// Scale of the identity part of every `A_i`; above 1 is open-loop unstable.
    pub drift: f64,
    pub steps: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { agents: 6, topology: GraphKind::Ring, drift: 1.02, steps: 100 }
    }
}

/// Closed-loop constellation run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Duration in nominal orbital periods.
    pub periods: f64,
    pub initial: InitialSpread,
    pub detail_sats: Vec<usize>,
    pub los_gating: bool,
    pub trace_windows: usize,
    pub distributed: DistributedConfig,
    /// Link-duration extremes `[Δt_min, Δt_max]` (s) for the admissibility
    /// check; measured by backtracking when absent.
    pub link_durations: Option<[f64; 2]>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            periods: 12.0,
            initial: InitialSpread::default(),
            detail_sats: vec![0],
            los_gating: true,
            trace_windows: 1,
            distributed: DistributedConfig::default(),
            link_durations: None,
        }
    }
}

/// Coupling-range table and link-duration sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Ranges of the coupling-count table (km).
    pub ranges_km: Vec<f64>,
    /// Instant at which the coupling counts are taken (s).
    pub at: f64,
    pub samples: usize,
    /// Sampled instants are drawn from `[0, span)` (s).
    pub span: f64,
    /// Backtracking step (s).
    pub dt: f64,
    /// Backtracking stops here and marks the sample as capped (s).
    pub limit: f64,
    /// Histogram bin width (s).
    pub bin: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            ranges_km: vec![0.0, 250.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0, 3500.0, 4000.0, 5000.0],
            at: 0.0,
            samples: 400,
            span: 6_000.0,
            dt: 10.0,
            limit: 20_000.0,
            bin: 60.0,
        }
    }
}

/// Per-unit load measured on single-plane rings of growing size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub horizon: usize,
    pub used: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { sizes: vec![24, 96, 384], horizon: 20, used: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub constellation: Option<ConstellationConfig>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub truth_mode: TruthMode,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    /// Walker 53°:40/5/1 at 6921 km, 12 periods.
    pub fn desk_scale() -> Self {
        let mut c = ConstellationConfig::walker(53.0, 40, 5, 1, 6_921e3);
        c.range = 3_500e3;
        Self {
            scenario: ScenarioKind::Constellation,
            schedule: ScheduleConfig { t_c: 10.0, t_t: 1.0, horizon: 100, used: 11 },
            constellation: Some(c),
            seeds: vec![1],
            output_dir: PathBuf::from("out"),
            truth_mode: TruthMode::NonlinearMeanElement,
            simulation: SimulationConfig::default(),
            network: NetworkConfig::default(),
            geometry: GeometryConfig::default(),
            sweep: None,
        }
    }

    pub fn generic() -> Self {
        Self {
            scenario: ScenarioKind::GenericNetwork,
            schedule: ScheduleConfig { t_c: 10.0, t_t: 1.0, horizon: 20, used: 5 },
            constellation: None,
            ..Self::desk_scale()
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        };
        cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match (self.scenario, &self.constellation) {
            (ScenarioKind::Constellation, None) => bail!("scenario `constellation` needs a [constellation] section"),
            (ScenarioKind::GenericNetwork, Some(_)) => bail!("a [constellation] section is only allowed with scenario `constellation`"),
            (_, Some(c)) => c.validate(&EARTH)?,
            _ => {}
        }
        if self.seeds.is_empty() {
            bail!("`seeds` must list at least one seed");
        }
        self.schedule.validate()?;
        if self.scenario == ScenarioKind::GenericNetwork && self.network.agents == 0 {
            bail!("network.agents must be positive");
        }
        if let Some([lo, hi]) = self.simulation.link_durations {
            if !(hi > lo && lo > 0.0) {
                bail!("simulation.link_durations must be [min, max] with max > min > 0");
            }
        }
        let g = &self.geometry;
        if !(g.dt > 0.0 && g.bin > 0.0 && g.limit > 0.0 && g.span > 0.0) {
            bail!("geometry.dt, bin, limit and span must be positive");
        }
        Ok(())
    }

    pub fn constellation(&self) -> anyhow::Result<&ConstellationConfig> {
        self.constellation.as_ref().context("this command needs scenario `constellation`")
    }
}
