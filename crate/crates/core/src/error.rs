use thiserror::Error;

use crate::network::AgentId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("agent {agent} out of range for a network of {count} agents")]
    AgentOutOfRange { agent: AgentId, count: usize },
    #[error("agent {agent}: {what} has shape {found:?}, expected {expected:?}")]
    DimensionMismatch {
        agent: AgentId,
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("agent {agent}: coupling block for neighbor {neighbor} missing at step {tau}")]
    MissingCoupling { agent: AgentId, neighbor: AgentId, tau: usize },
    #[error("agent {agent}: coupling block for non-neighbor {neighbor} supplied at step {tau}")]
    UnexpectedCoupling { agent: AgentId, neighbor: AgentId, tau: usize },
    #[error("agent {agent}: {what} at step {tau} is not symmetric")]
    NotSymmetric { agent: AgentId, what: &'static str, tau: usize },
    #[error("agent {agent}: {what} at step {tau} is not {requirement}")]
    NotDefinite {
        agent: AgentId,
        what: &'static str,
        requirement: &'static str,
        tau: usize,
    },
    #[error("topology has {topology} agents but {models} models were supplied")]
    AgentCount { topology: usize, models: usize },
    #[error("topology timeline is empty")]
    EmptyTimeline,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommError {
    #[error("round {round}: unit {from} may not message unit {to} (not coupled)")]
    IllegalLink { round: usize, from: AgentId, to: AgentId },
    #[error("round budget {available} is below the {required} rounds the protocol needs")]
    RoundUnderflow { available: usize, required: usize },
    #[error("round {round}: unit {unit} out of range")]
    UnknownUnit { round: usize, unit: AgentId },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("horizon must be at least 1 (got {0})")]
    InvalidHorizon(usize),
    #[error("gains used per window must lie in 1..={horizon} (got {used})")]
    InvalidUsedSteps { used: usize, horizon: usize },
    #[error("stacked input weight for agent {agent} at step {tau} is not positive definite")]
    Singular { agent: AgentId, tau: usize },
    #[error("unit {unit}: missing {what} from unit {from} for step {tau}")]
    MissingPayload {
        unit: AgentId,
        from: AgentId,
        what: &'static str,
        tau: usize,
    },
    #[error("unit {unit}: neighbor {neighbor} is not reachable at step {tau}, inside the actuated prefix")]
    Infeasible { unit: AgentId, neighbor: AgentId, tau: usize },
    #[error("unit {unit}: {detail}")]
    Protocol { unit: AgentId, detail: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Comm(#[from] CommError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    InvalidConfig(String),
    #[error("windows overlap: d*T_c = {used_time} s is shorter than the lead time {lead_time} s")]
    Overlap { used_time: f64, lead_time: f64 },
    #[error("no gain available for agent {agent} at step {k}")]
    GainUnavailable { agent: AgentId, k: usize },
    #[error("gains for step {k} ready at t = {ready} s, after actuation at {actuation} s")]
    LateGains { k: usize, ready: f64, actuation: f64 },
    #[error("plant fault at step {k}: {detail}")]
    Plant { k: usize, detail: String },
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}
