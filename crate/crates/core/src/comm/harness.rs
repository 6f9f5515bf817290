use std::fmt;

use serde::Serialize;

use crate::error::CommError;
use crate::linalg::{matrix_bytes, Mat};
use crate::network::AgentId;

/// Fixed per-message overhead in the byte accounting.
pub const MESSAGE_HEADER_BYTES: usize = 32;
/// Overhead per payload item (tag and indices).
pub const ITEM_HEADER_BYTES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MessageKind {
    /// Weighted terminal output blocks sent before the backward pass.
    TerminalOutput,
    /// Per-step exchange during the backward pass.
    BackwardExchange,
    /// Final delivery of the actuated gains to their row owners.
    GainDelivery,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::TerminalOutput => "terminal_output",
            MessageKind::BackwardExchange => "backward_exchange",
            MessageKind::GainDelivery => "gain_delivery",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// `Q_row(τ)^{1/2} H_{row,col}(τ)`.
    OutputFactor { tau: usize, row: AgentId, col: AgentId, factor: Mat },
    /// `B_agent(τ)` and `R_agent(τ)`.
    InputModel { tau: usize, agent: AgentId, b: Mat, r: Mat },
    /// `A_agent(τ)`.
    StateModel { tau: usize, agent: AgentId, a: Mat },
    /// `D⁺_agent(τ)`.
    OutNeighborhood { tau: usize, agent: AgentId, members: Vec<AgentId> },
    /// `K_{row,col}(τ)`.
    Gain { tau: usize, row: AgentId, col: AgentId, gain: Mat },
    /// `P_{holder,(p,q)}(τ)` with its empirical loss.
    CostBlock { tau: usize, holder: AgentId, p: AgentId, q: AgentId, block: Mat, loss: usize },
}

impl Payload {
    pub fn bytes(&self) -> usize {
        ITEM_HEADER_BYTES
            + match self {
                Payload::OutputFactor { factor, .. } => matrix_bytes(factor),
                Payload::InputModel { b, r, .. } => matrix_bytes(b) + matrix_bytes(r),
                Payload::StateModel { a, .. } => matrix_bytes(a),
                Payload::OutNeighborhood { members, .. } => 8 * members.len(),
                Payload::Gain { gain, .. } => matrix_bytes(gain),
                Payload::CostBlock { block, .. } => matrix_bytes(block) + 8,
            }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub round: usize,
    pub from: AgentId,
    pub to: AgentId,
    pub kind: MessageKind,
    pub body: Vec<Payload>,
}

impl Message {
    pub fn bytes(&self) -> usize {
        MESSAGE_HEADER_BYTES + self.body.iter().map(Payload::bytes).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub window: usize,
    pub round: usize,
    pub from: AgentId,
    pub to: AgentId,
    pub kind: MessageKind,
    pub bytes: usize,
}

/// Counters accumulated by a harness.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommStats {
    pub rounds: usize,
    pub messages: usize,
    pub bytes: usize,
    /// Per unit, the largest number of messages sent in one round.
    pub max_sent_per_round: Vec<usize>,
    /// Per unit, the largest number of messages received in one round.
    pub max_received_per_round: Vec<usize>,
    /// Per unit, the largest number of bytes sent in one round.
    pub max_bytes_per_round: Vec<usize>,
}

impl CommStats {
    pub fn new(units: usize) -> Self {
        Self {
            max_sent_per_round: vec![0; units],
            max_received_per_round: vec![0; units],
            max_bytes_per_round: vec![0; units],
            ..Self::default()
        }
    }

    pub fn max_sent(&self) -> usize {
        self.max_sent_per_round.iter().copied().max().unwrap_or(0)
    }

    pub fn max_received(&self) -> usize {
        self.max_received_per_round.iter().copied().max().unwrap_or(0)
    }

    pub fn max_bytes(&self) -> usize {
        self.max_bytes_per_round.iter().copied().max().unwrap_or(0)
    }

    /// Folds another session's counters into these, keeping per-unit maxima.
    pub fn merge(&mut self, other: &CommStats) {
        self.rounds += other.rounds;
        self.messages += other.messages;
        self.bytes += other.bytes;
        for (dst, src) in [
            (&mut self.max_sent_per_round, &other.max_sent_per_round),
            (&mut self.max_received_per_round, &other.max_received_per_round),
            (&mut self.max_bytes_per_round, &other.max_bytes_per_round),
        ] {
            if dst.len() < src.len() {
                dst.resize(src.len(), 0);
            }
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (*d).max(*s);
            }
        }
    }
}

/// Lockstep message exchange between units. Messages handed over in round
/// `r` are returned as the inboxes of round `r + 1`.
#[derive(Debug, Clone)]
pub struct Harness {
    units: usize,
    round_budget: usize,
    round: usize,
    start_time: f64,
    round_interval: f64,
    window: usize,
    trace: Option<Vec<TraceRecord>>,
    stats: CommStats,
}

impl Harness {
    pub fn new(units: usize, round_budget: usize) -> Self {
        Self {
            units,
            round_budget,
            round: 0,
            start_time: 0.0,
            round_interval: 1.0,
            window: 0,
            trace: None,
            stats: CommStats::new(units),
        }
    }

    /// Maps round `r` to the simulated time `start + r * interval`.
    pub fn with_timing(mut self, start_time: f64, round_interval: f64) -> Self {
        self.start_time = start_time;
        self.round_interval = round_interval;
        self
    }

    /// Records one trace line per message, tagged with `window`.
    pub fn with_trace(mut self, window: usize) -> Self {
        self.window = window;
        self.trace = Some(Vec::new());
        self
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn round_budget(&self) -> usize {
        self.round_budget
    }

    pub fn time_of(&self, round: usize) -> f64 {
        self.start_time + round as f64 * self.round_interval
    }

    pub fn require_rounds(&self, required: usize) -> Result<(), CommError> {
        if self.round_budget < self.round + required {
            return Err(CommError::RoundUnderflow {
                available: self.round_budget.saturating_sub(self.round),
                required,
            });
        }
        Ok(())
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn into_parts(self) -> (CommStats, Vec<TraceRecord>) {
        (self.stats, self.trace.unwrap_or_default())
    }

    /// Delivers one round of messages. `outboxes[u]` holds what unit `u`
    /// sends; `link(from, to)` says whether the pair may communicate in this
    /// round. Inboxes come back ordered by sender.
    pub fn exchange(
        &mut self,
        link: impl Fn(AgentId, AgentId) -> bool,
        outboxes: Vec<Vec<Message>>,
    ) -> Result<Vec<Vec<Message>>, CommError> {
        let round = self.round;
        if round >= self.round_budget {
            return Err(CommError::RoundUnderflow { available: 0, required: 1 });
        }
        if outboxes.len() > self.units {
            return Err(CommError::UnknownUnit { round, unit: outboxes.len() - 1 });
        }
        for (from, outbox) in outboxes.iter().enumerate() {
            for msg in outbox {
                if msg.to >= self.units {
                    return Err(CommError::UnknownUnit { round, unit: msg.to });
                }
                if msg.from != from || msg.to == from || !link(from, msg.to) {
                    return Err(CommError::IllegalLink { round, from: msg.from, to: msg.to });
                }
            }
        }
        let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); self.units];
        let mut received = vec![0usize; self.units];
        for (from, outbox) in outboxes.into_iter().enumerate() {
            let sent = outbox.len();
            let mut bytes = 0;
            for mut msg in outbox {
                msg.round = round;
                let size = msg.bytes();
                bytes += size;
                self.stats.bytes += size;
                self.stats.messages += 1;
                received[msg.to] += 1;
                if let Some(trace) = &mut self.trace {
                    trace.push(TraceRecord {
                        window: self.window,
                        round,
                        from,
                        to: msg.to,
                        kind: msg.kind,
                        bytes: size,
                    });
                }
                inboxes[msg.to].push(msg);
            }
            self.stats.max_sent_per_round[from] = self.stats.max_sent_per_round[from].max(sent);
            self.stats.max_bytes_per_round[from] = self.stats.max_bytes_per_round[from].max(bytes);
        }
        for (u, &r) in received.iter().enumerate() {
            self.stats.max_received_per_round[u] = self.stats.max_received_per_round[u].max(r);
        }
        self.stats.rounds += 1;
        self.round += 1;
        Ok(inboxes)
    }
}
