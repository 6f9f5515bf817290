//! Receding-horizon gain synthesis for networks of decoupled LTV agents whose
//! tracking outputs are coupled through a sparse digraph.
//!
//! The crate holds four layers:
//!
//! * [`network`] and [`model`]: topology, neighborhood sets and agent models.
//! * [`centralized`]: the one-step relaxed backward pass on global matrices,
//!   used as the reference solution.
//! * [`distributed`]: per-unit state machines that compute the same gains
//!   through neighbor-to-neighbor messages only.
//! * [`comm`]: the round-based message harness, scheduling arithmetic and the
//!   closed-loop receding-horizon driver.
//!
//! Agent indices are zero based everywhere.

pub mod centralized;
pub mod comm;
pub mod distributed;
pub mod error;
pub mod linalg;
pub mod model;
pub mod network;
pub mod rhc;

pub use error::{CommError, NetworkError, ScheduleError, SynthesisError};
pub use linalg::{Mat, Vector};
pub use model::{AgentModel, LtiAgent, TabulatedAgent, WindowProblem};
pub use network::{AgentId, Digraph, NeighborhoodSets, SparsityPattern, Topology, TopologyWindow};
