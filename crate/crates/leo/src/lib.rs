//! Station keeping of a Walker LEO constellation with the distributed
//! receding-horizon synthesis of `ddrhc-core`.
//!
//! Satellites are modelled by near-circular mean elements relative to
//! nominal slots that drift with the J2 secular rates. Each satellite tracks
//! its own semi-major axis, eccentricity and inclination, and its argument of
//! latitude and node relative to the nearest satellites within a tracking
//! range. Satellite indices are zero based.

pub mod control;
pub mod coupling;
pub mod elements;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod orbit;
pub mod scenario;
pub mod truth;
pub mod walker;

pub use control::{output_matrices, thrust_feedback, weights, SatelliteModel, Thrust};
pub use coupling::{coupling_topology, los_feasible, los_range, nominal_positions};
pub use elements::{relative_elements, wrap_angle, MeanElements};
pub use error::LeoError;
pub use metrics::{metrics, FleetMetrics};
pub use orbit::{conv_matrix, elements_to_position, secular_rates, stm, OrbitConstants, Physics, EARTH};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioRun};
pub use truth::{truth_step, TruthMode};
pub use walker::{compute_anchor, walker_nominal, Anchor, ConstellationConfig, SatelliteState};
