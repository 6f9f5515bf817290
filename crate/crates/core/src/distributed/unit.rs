//! The per-unit state machine. A unit only ever sees its own model window
//! and the messages in its inbox.

use std::collections::BTreeMap;

use crate::comm::{Message, MessageKind, Payload};
use crate::distributed::blocks::{local_gain, propagate_blocks, terminal_blocks, ColumnData, CostBlockStore};
use crate::distributed::DistributedConfig;
use crate::error::{NetworkError, SynthesisError};
use crate::linalg::{matrix_bytes, psd_sqrt, Mat};
use crate::model::WindowProblem;
use crate::network::AgentId;

/// The unit's own model over `[start, start + horizon]`.
#[derive(Debug, Clone)]
struct LocalWindow {
    start: usize,
    horizon: usize,
    a: Vec<Mat>,
    b: Vec<Mat>,
    r: Vec<Mat>,
    /// `Q_i^{1/2} H_{i,p}` for `p ∈ D⁻_i`.
    factors: Vec<BTreeMap<AgentId, Mat>>,
    d_minus: Vec<Vec<AgentId>>,
    d_plus: Vec<Vec<AgentId>>,
}

impl LocalWindow {
    fn new(problem: &WindowProblem, i: AgentId) -> Result<Self, NetworkError> {
        let (start, horizon) = (problem.start(), problem.horizon());
        let agent = &problem.agents[i];
        let mut w = LocalWindow {
            start,
            horizon,
            a: Vec::with_capacity(horizon),
            b: Vec::with_capacity(horizon),
            r: Vec::with_capacity(horizon),
            factors: Vec::with_capacity(horizon + 1),
            d_minus: Vec::with_capacity(horizon + 1),
            d_plus: Vec::with_capacity(horizon + 1),
        };
        for tau in start..=start + horizon {
            let g = problem.topology.at(tau);
            let root = psd_sqrt(&agent.q(tau));
            let mut factors = BTreeMap::new();
            for &p in g.in_neighbors(i) {
                let h = agent.h(p, tau).ok_or(NetworkError::MissingCoupling { agent: i, neighbor: p, tau })?;
                factors.insert(p, &root * h);
            }
            w.factors.push(factors);
            w.d_minus.push(g.in_neighbors(i).to_vec());
            w.d_plus.push(g.out_neighbors(i).to_vec());
            if tau < start + horizon {
                w.a.push(agent.a(tau));
                w.b.push(agent.b(tau));
                w.r.push(agent.r(tau));
            }
        }
        Ok(w)
    }

    fn end(&self) -> usize {
        self.start + self.horizon
    }

    fn idx(&self, tau: usize) -> usize {
        tau - self.start
    }

    fn bytes(&self) -> usize {
        let mats = self.a.iter().chain(&self.b).chain(&self.r).map(matrix_bytes).sum::<usize>();
        let factors = self.factors.iter().flat_map(|f| f.values()).map(matrix_bytes).sum::<usize>();
        let sets = self.d_minus.iter().chain(&self.d_plus).map(|s| 8 * s.len()).sum::<usize>();
        mats + factors + sets
    }
}

/// Data received from neighbors, keyed by the identity of the quantity
/// rather than by who forwarded it.
#[derive(Debug, Clone, Default)]
struct Knowledge {
    inputs: BTreeMap<(usize, AgentId), (Mat, Mat)>,
    dynamics: BTreeMap<(usize, AgentId), Mat>,
    out_sets: BTreeMap<(usize, AgentId), Vec<AgentId>>,
    factors: BTreeMap<(usize, AgentId, AgentId), Mat>,
    gains: BTreeMap<(usize, AgentId, AgentId), Mat>,
    held: BTreeMap<AgentId, CostBlockStore>,
}

impl Knowledge {
    fn forget_after(&mut self, tau: usize) {
        self.inputs.retain(|k, _| k.0 <= tau);
        self.dynamics.retain(|k, _| k.0 <= tau);
        self.out_sets.retain(|k, _| k.0 <= tau);
        self.factors.retain(|k, _| k.0 <= tau);
        self.gains.retain(|k, _| k.0 <= tau);
    }

    fn bytes(&self) -> usize {
        self.inputs.values().map(|(b, r)| matrix_bytes(b) + matrix_bytes(r)).sum::<usize>()
            + self.dynamics.values().map(matrix_bytes).sum::<usize>()
            + self.out_sets.values().map(|s| 8 * s.len()).sum::<usize>()
            + self.factors.values().map(matrix_bytes).sum::<usize>()
            + self.gains.values().map(matrix_bytes).sum::<usize>()
            + self.held.values().map(CostBlockStore::bytes).sum::<usize>()
    }
}

/// Result of one unit after the protocol completes.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitReport {
    pub id: AgentId,
    /// `K_{p,i}(τ)` for `p ∈ D⁺_i(τ)` over the whole window, keyed `(τ, p)`.
    pub gains_out: BTreeMap<(usize, AgentId), Mat>,
    /// `K_{i,p}(τ)` for `p ∈ D⁻_i(τ)` over the actuated prefix, keyed `(τ, p)`.
    pub gains_in: BTreeMap<(usize, AgentId), Mat>,
    pub peak_bytes: usize,
    /// Sum of the empirical losses of every block the unit computed.
    pub masked_pairs: usize,
    /// Largest single-block loss the unit produced.
    pub max_loss: usize,
}

#[derive(Debug, Clone)]
pub struct Unit {
    id: AgentId,
    used: usize,
    cfg: DistributedConfig,
    w: LocalWindow,
    known: Knowledge,
    store: Option<CostBlockStore>,
    gains_out: BTreeMap<(usize, AgentId), Mat>,
    gains_in: BTreeMap<(usize, AgentId), Mat>,
    peak_bytes: usize,
    masked_pairs: usize,
    max_loss: usize,
}

impl Unit {
    pub fn new(problem: &WindowProblem, id: AgentId, used: usize, cfg: DistributedConfig) -> Result<Self, SynthesisError> {
        let w = LocalWindow::new(problem, id)?;
        let mut unit = Unit {
            id,
            used,
            cfg,
            w,
            known: Knowledge::default(),
            store: None,
            gains_out: BTreeMap::new(),
            gains_in: BTreeMap::new(),
            peak_bytes: 0,
            masked_pairs: 0,
            max_loss: 0,
        };
        unit.peak_bytes = unit.stored_bytes();
        Ok(unit)
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    /// Bytes of matrix and index data currently held.
    pub fn stored_bytes(&self) -> usize {
        self.w.bytes()
            + self.known.bytes()
            + self.store.as_ref().map_or(0, CostBlockStore::bytes)
            + self.gains_out.values().map(matrix_bytes).sum::<usize>()
            + self.gains_in.values().map(matrix_bytes).sum::<usize>()
    }

    pub fn peak_bytes(&self) -> usize {
        self.peak_bytes
    }

    /// Rounds of the protocol, numbered from 0. Round 0 sends the terminal
    /// output factors, rounds `1..=H` the backward exchange for steps
    /// `k+H-1` down to `k`, round `H+1` the gain delivery, and round `H+2`
    /// only absorbs.
    pub fn on_round(&mut self, round: usize, inbox: Vec<Message>) -> Result<Vec<Message>, SynthesisError> {
        self.absorb(inbox)?;
        let h = self.w.horizon;
        if (2..=h + 1).contains(&round) {
            let tau = self.w.end() + 1 - round;
            self.compute(tau)?;
        }
        let out = self.emit(round)?;
        self.peak_bytes = self.peak_bytes.max(self.stored_bytes());
        if (2..=h + 1).contains(&round) {
            self.known.forget_after(self.w.end() + 1 - round);
        }
        Ok(out)
    }

    pub fn into_report(self) -> UnitReport {
        UnitReport {
            id: self.id,
            gains_out: self.gains_out,
            gains_in: self.gains_in,
            peak_bytes: self.peak_bytes,
            masked_pairs: self.masked_pairs,
            max_loss: self.max_loss,
        }
    }

    fn absorb(&mut self, inbox: Vec<Message>) -> Result<(), SynthesisError> {
        for msg in inbox {
            if msg.to != self.id {
                return Err(SynthesisError::Protocol {
                    unit: self.id,
                    detail: format!("received a message addressed to {}", msg.to),
                });
            }
            let from = msg.from;
            for item in msg.body {
                match item {
                    Payload::OutputFactor { tau, row, col, factor } => {
                        self.known.factors.insert((tau, row, col), factor);
                    }
                    Payload::InputModel { tau, agent, b, r } => {
                        self.known.inputs.insert((tau, agent), (b, r));
                    }
                    Payload::StateModel { tau, agent, a } => {
                        self.known.dynamics.insert((tau, agent), a);
                    }
                    Payload::OutNeighborhood { tau, agent, members } => {
                        self.known.out_sets.insert((tau, agent), members);
                    }
                    Payload::Gain { tau, row, col, gain } => {
                        if msg.kind == MessageKind::GainDelivery {
                            if row != self.id || col != from {
                                return Err(SynthesisError::Protocol {
                                    unit: self.id,
                                    detail: format!("unit {from} delivered gain ({row},{col})"),
                                });
                            }
                            self.gains_in.insert((tau, col), gain);
                        } else {
                            self.known.gains.insert((tau, row, col), gain);
                        }
                    }
                    Payload::CostBlock { tau, holder, p, q, block, loss } => {
                        if holder != from {
                            return Err(SynthesisError::Protocol {
                                unit: self.id,
                                detail: format!("unit {from} forwarded blocks held by {holder}"),
                            });
                        }
                        let store = self.known.held.entry(holder).or_insert_with(|| CostBlockStore::new(holder, tau));
                        store.insert(p, q, block, loss);
                    }
                }
            }
        }
        Ok(())
    }

    fn out_set(&self, tau: usize, p: AgentId) -> Result<Vec<AgentId>, SynthesisError> {
        if p == self.id {
            return Ok(self.w.d_plus[self.w.idx(tau)].clone());
        }
        self.known.out_sets.get(&(tau, p)).cloned().ok_or(SynthesisError::MissingPayload {
            unit: self.id,
            from: p,
            what: "out-neighborhood",
            tau,
        })
    }

    fn factor(&self, tau: usize, row: AgentId, col: AgentId) -> Result<Mat, SynthesisError> {
        let found = if row == self.id {
            self.w.factors[self.w.idx(tau)].get(&col)
        } else {
            self.known.factors.get(&(tau, row, col))
        };
        found.cloned().ok_or(SynthesisError::MissingPayload {
            unit: self.id,
            from: if col == self.id { row } else { col },
            what: "output factor",
            tau,
        })
    }

    fn input(&self, tau: usize, agent: AgentId, via: AgentId) -> Result<(Mat, Mat), SynthesisError> {
        if agent == self.id {
            let x = self.w.idx(tau);
            return Ok((self.w.b[x].clone(), self.w.r[x].clone()));
        }
        self.known.inputs.get(&(tau, agent)).cloned().ok_or(SynthesisError::MissingPayload {
            unit: self.id,
            from: via,
            what: "input model",
            tau,
        })
    }

    fn column(&self, tau: usize, p: AgentId, with_dynamics: bool) -> Result<ColumnData, SynthesisError> {
        let out = self.out_set(tau, p)?;
        let mut col = ColumnData { out: out.clone(), ..ColumnData::default() };
        for &r in &out {
            col.factors.insert(r, self.factor(tau, r, p)?);
        }
        if !with_dynamics {
            return Ok(col);
        }
        col.a = Some(if p == self.id {
            self.w.a[self.w.idx(tau)].clone()
        } else {
            self.known.dynamics.get(&(tau, p)).cloned().ok_or(SynthesisError::MissingPayload {
                unit: self.id,
                from: p,
                what: "dynamics",
                tau,
            })?
        });
        for &r in &out {
            col.inputs.insert(r, self.input(tau, r, p)?);
            let gain = if p == self.id {
                self.gains_out.get(&(tau, r))
            } else {
                self.known.gains.get(&(tau, r, p))
            };
            col.gains.insert(
                r,
                gain.cloned().ok_or(SynthesisError::MissingPayload { unit: self.id, from: p, what: "gain", tau })?,
            );
        }
        Ok(col)
    }

    /// Backward iteration for step `tau`: blocks `P_{i,·}(τ+1)` over φ_i(τ)
    /// and the gains `K_{p,i}(τ)`.
    fn compute(&mut self, tau: usize) -> Result<(), SynthesisError> {
        let t = tau + 1;
        let dp = self.w.d_plus[self.w.idx(tau)].clone();
        let terminal = t == self.w.end();
        let mut columns = BTreeMap::new();
        for &p in &dp {
            columns.insert(p, self.column(t, p, !terminal)?);
        }
        let store = if terminal {
            terminal_blocks(self.id, t, &columns)?
        } else {
            let own = self.store.take().ok_or(SynthesisError::Protocol {
                unit: self.id,
                detail: format!("no own cost blocks for step {}", t + 1),
            })?;
            let mut holders: Vec<&CostBlockStore> = Vec::with_capacity(dp.len());
            for &j in &dp {
                if j == self.id {
                    holders.push(&own);
                    continue;
                }
                let held = self.known.held.get(&j).ok_or(SynthesisError::MissingPayload {
                    unit: self.id,
                    from: j,
                    what: "cost blocks",
                    tau: t + 1,
                })?;
                let expected = columns[&j].out.len().pow(2);
                if held.tau != t + 1 || held.blocks.len() != expected {
                    return Err(SynthesisError::Protocol {
                        unit: self.id,
                        detail: format!(
                            "unit {j} sent {} blocks for step {}, expected {expected} for step {}",
                            held.blocks.len(),
                            held.tau,
                            t + 1
                        ),
                    });
                }
                holders.push(held);
            }
            propagate_blocks(self.id, t, &columns, &holders, self.cfg.selection, self.cfg.psd_repair)?
        };
        self.known.held.clear();
        if store.keys().count() != dp.len() * dp.len() {
            return Err(SynthesisError::Protocol {
                unit: self.id,
                detail: format!("stored {} blocks at step {t}, expected φ of size {}", store.blocks.len(), dp.len().pow(2)),
            });
        }
        self.masked_pairs += store.total_loss();
        self.max_loss = self.max_loss.max(store.loss.values().copied().max().unwrap_or(0));

        let mut inputs = BTreeMap::new();
        for &p in &dp {
            inputs.insert(p, self.input(tau, p, p)?);
        }
        let a_i = self.w.a[self.w.idx(tau)].clone();
        for (p, k) in local_gain(self.id, tau, &a_i, &inputs, &store)? {
            self.gains_out.insert((tau, p), k);
        }
        self.store = Some(store);
        Ok(())
    }

    fn emit(&mut self, round: usize) -> Result<Vec<Message>, SynthesisError> {
        let h = self.w.horizon;
        let k = self.w.start;
        let from = self.id;
        let message = move |to: AgentId, kind: MessageKind, body: Vec<Payload>| Message { round, from, to, kind, body };
        if round == 0 {
            let tau = self.w.end();
            let x = self.w.idx(tau);
            return Ok(self.w.d_minus[x]
                .iter()
                .filter(|&&p| p != self.id)
                .map(|&p| {
                    let factor = self.w.factors[x][&p].clone();
                    message(p, MessageKind::TerminalOutput, vec![Payload::OutputFactor { tau, row: self.id, col: p, factor }])
                })
                .collect());
        }
        if round <= h {
            let tau = self.w.end() - round;
            let t = tau + 1;
            let x = self.w.idx(tau);
            let dynamics = t < self.w.end();
            let col = self.column(t, self.id, dynamics)?;
            let mut common = vec![
                Payload::InputModel { tau, agent: self.id, b: self.w.b[x].clone(), r: self.w.r[x].clone() },
                Payload::OutNeighborhood { tau: t, agent: self.id, members: col.out.clone() },
            ];
            for (r, factor) in col.factors {
                common.push(Payload::OutputFactor { tau: t, row: r, col: self.id, factor });
            }
            if dynamics {
                for (r, (b, rw)) in col.inputs {
                    common.push(Payload::InputModel { tau: t, agent: r, b, r: rw });
                }
                common.push(Payload::StateModel { tau: t, agent: self.id, a: col.a.expect("dynamics requested") });
                for (r, gain) in col.gains {
                    common.push(Payload::Gain { tau: t, row: r, col: self.id, gain });
                }
                let store = self.store.as_ref().ok_or(SynthesisError::Protocol {
                    unit: self.id,
                    detail: format!("no cost blocks to share for step {}", t + 1),
                })?;
                for ((p, q), block) in &store.blocks {
                    common.push(Payload::CostBlock {
                        tau: store.tau,
                        holder: self.id,
                        p: *p,
                        q: *q,
                        block: block.clone(),
                        loss: store.loss[&(*p, *q)],
                    });
                }
            }
            return Ok(self.w.d_minus[x]
                .iter()
                .filter(|&&q| q != self.id)
                .map(|&q| {
                    let mut body = common.clone();
                    if tau != k {
                        body.push(Payload::OutputFactor {
                            tau,
                            row: self.id,
                            col: q,
                            factor: self.w.factors[x][&q].clone(),
                        });
                    }
                    message(q, MessageKind::BackwardExchange, body)
                })
                .collect());
        }
        if round == h + 1 {
            let mut per_target: BTreeMap<AgentId, Vec<Payload>> = BTreeMap::new();
            for tau in k..k + self.used {
                for &p in &self.w.d_plus[self.w.idx(tau)] {
                    let gain = self.gains_out[&(tau, p)].clone();
                    if p == self.id {
                        self.gains_in.insert((tau, p), gain);
                    } else {
                        per_target.entry(p).or_default().push(Payload::Gain { tau, row: p, col: self.id, gain });
                    }
                }
            }
            return Ok(per_target
                .into_iter()
                .map(|(p, body)| message(p, MessageKind::GainDelivery, body))
                .collect());
        }
        Ok(Vec::new())
    }
}
