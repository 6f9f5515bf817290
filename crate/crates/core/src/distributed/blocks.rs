//! Block-level operations of the decoupled backward pass: terminal blocks,
//! masked propagation, PSD repair, candidate selection and the local gain
//! solve.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::SynthesisError;
use crate::linalg::{matrix_bytes, offsets, solve_spd, sub, symmetrize, Mat};
use crate::network::{AgentId, TopologyWindow};

/// Approximations `P_{i,(p,q)}(τ)` held by unit `owner` for `(p, q) ∈ φ_i`,
/// with the number of masked contributions behind each block.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBlockStore {
    pub owner: AgentId,
    /// Time index of the stored cost-to-go blocks.
    pub tau: usize,
    pub blocks: BTreeMap<(AgentId, AgentId), Mat>,
    pub loss: BTreeMap<(AgentId, AgentId), usize>,
}

impl CostBlockStore {
    pub fn new(owner: AgentId, tau: usize) -> Self {
        Self { owner, tau, blocks: BTreeMap::new(), loss: BTreeMap::new() }
    }

    pub fn insert(&mut self, p: AgentId, q: AgentId, block: Mat, loss: usize) {
        self.blocks.insert((p, q), block);
        self.loss.insert((p, q), loss);
    }

    pub fn get(&self, p: AgentId, q: AgentId) -> Option<(&Mat, usize)> {
        self.blocks.get(&(p, q)).map(|b| (b, self.loss[&(p, q)]))
    }

    pub fn keys(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.blocks.keys().copied()
    }

    pub fn total_loss(&self) -> usize {
        self.loss.values().sum()
    }

    pub fn bytes(&self) -> usize {
        self.blocks.values().map(matrix_bytes).sum::<usize>() + 8 * self.loss.len()
    }
}

/// What a unit knows about column agent `p` at one time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnData {
    /// `D⁺_p`, ascending.
    pub out: Vec<AgentId>,
    /// `A_p`; absent at the terminal step.
    pub a: Option<Mat>,
    /// `(B_r, R_r)` for `r ∈ D⁺_p`.
    pub inputs: BTreeMap<AgentId, (Mat, Mat)>,
    /// `K_{r,p}` for `r ∈ D⁺_p`.
    pub gains: BTreeMap<AgentId, Mat>,
    /// `Q_r^{1/2} H_{r,p}` for `r ∈ D⁺_p`.
    pub factors: BTreeMap<AgentId, Mat>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Average of every candidate with the minimum loss.
    #[default]
    MinLossAverage,
    /// The unit's own block when it has the minimum loss, otherwise the
    /// minimum-loss average.
    PreferOwn,
}

#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub holder: AgentId,
    pub block: &'a Mat,
    pub loss: usize,
}

/// Average of the minimum-loss candidates; `None` for an empty list, which
/// the propagation treats as a masked block.
pub fn select_block(candidates: &[(Mat, usize)]) -> Option<Mat> {
    let cands: Vec<Candidate> =
        candidates.iter().enumerate().map(|(h, (b, l))| Candidate { holder: h, block: b, loss: *l }).collect();
    select_with(SelectionRule::MinLossAverage, usize::MAX, &cands).map(|(m, _)| m)
}

/// Applies `rule` for unit `owner`; returns the block and its loss.
pub fn select_with(rule: SelectionRule, owner: AgentId, candidates: &[Candidate]) -> Option<(Mat, usize)> {
    let best = candidates.iter().map(|c| c.loss).min()?;
    if rule == SelectionRule::PreferOwn {
        if let Some(own) = candidates.iter().find(|c| c.holder == owner && c.loss == best) {
            return Some((own.block.clone(), best));
        }
    }
    let mut chosen = candidates.iter().filter(|c| c.loss == best);
    let first = chosen.next()?;
    let mut sum = first.block.clone();
    let mut count = 1.0;
    for c in chosen {
        sum += c.block;
        count += 1.0;
    }
    if count > 1.0 {
        sum /= count;
    }
    Some((sum, best))
}

/// Replaces negative eigenvalues of a symmetric matrix by the smallest
/// positive one, or by zero when none is positive. Eigenvalues within
/// `1e-12` of the spectral radius are treated as zero, and a matrix with
/// nothing to repair is returned untouched.
pub fn psd_repair(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return m.clone();
    }
    let sym = symmetrize(m);
    // ‖m‖_F / √n bounds the spectral radius from below, so a Cholesky
    // factor of m + shift·I proves every eigenvalue is above -1e-12·scale.
    let n = sym.nrows();
    let shift = 1e-12 * sym.norm() / (n as f64).sqrt();
    if (&sym + Mat::identity(n, n) * shift).cholesky().is_some() {
        return m.clone();
    }
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax();
    let tol = 1e-12 * scale;
    if eig.eigenvalues.iter().all(|&l| l >= -tol) {
        return m.clone();
    }
    let floor = eig.eigenvalues.iter().copied().filter(|&l| l > tol).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    let repaired = eig.eigenvalues.map(|l| if l < -tol { floor } else { l });
    symmetrize(&(&eig.eigenvectors * Mat::from_diagonal(&repaired) * eig.eigenvectors.transpose()))
}

/// `|(D⁺_p × D⁺_q) \ ψ|`.
pub fn masked_pairs(psi: &BTreeSet<(AgentId, AgentId)>, out_p: &[AgentId], out_q: &[AgentId]) -> usize {
    out_p.iter().flat_map(|&r| out_q.iter().map(move |&s| (r, s))).filter(|pair| !psi.contains(pair)).count()
}

/// Empirical loss of block `(p, q)` stored by unit `i` at step `tau` of a
/// window: the pairs of `D⁺_p(τ+1) × D⁺_q(τ+1)` that no holder
/// `j ∈ D⁺_i(τ)` keeps in `φ_j(τ+1)`. Zero at the last step of the window.
pub fn empirical_loss(window: &TopologyWindow, i: AgentId, p: AgentId, q: AgentId, tau: usize) -> usize {
    if tau + 1 > window.start() + window.horizon() {
        return 0;
    }
    let now = window.at(tau);
    let next = window.at(tau + 1);
    let psi: BTreeSet<_> = now.out_neighbors(i).iter().flat_map(|&j| next.phi(j)).collect();
    masked_pairs(&psi, next.out_neighbors(p), next.out_neighbors(q))
}

fn column<'a>(columns: &'a BTreeMap<AgentId, ColumnData>, p: AgentId) -> Result<&'a ColumnData, SynthesisError> {
    columns.get(&p).ok_or(SynthesisError::Protocol { unit: p, detail: format!("no column data for agent {p}") })
}

fn intersect<'a>(a: &'a [AgentId], b: &'a [AgentId]) -> impl Iterator<Item = AgentId> + 'a {
    a.iter().copied().filter(move |r| b.binary_search(r).is_ok())
}

/// `P_{i,(p,q)}(k+H) = Σ_{r ∈ D⁺_p ∩ D⁺_q} (Q_r^{1/2}H_{r,p})ᵀ (Q_r^{1/2}H_{r,q})`
/// for all `p, q` among the columns.
pub fn terminal_blocks(
    owner: AgentId,
    tau: usize,
    columns: &BTreeMap<AgentId, ColumnData>,
) -> Result<CostBlockStore, SynthesisError> {
    let mut store = CostBlockStore::new(owner, tau);
    let dp: Vec<AgentId> = columns.keys().copied().collect();
    for (a, &p) in dp.iter().enumerate() {
        for &q in &dp[a..] {
            let (cp, cq) = (column(columns, p)?, column(columns, q)?);
            let np = missing(cp.factors.get(&p), owner, p, "output factor", tau)?.ncols();
            let nq = missing(cq.factors.get(&q), owner, q, "output factor", tau)?.ncols();
            let mut blk = Mat::zeros(np, nq);
            for r in intersect(&cp.out, &cq.out) {
                blk += missing(cp.factors.get(&r), owner, p, "output factor", tau)?.transpose()
                    * missing(cq.factors.get(&r), owner, q, "output factor", tau)?;
            }
            store_pair(&mut store, p, q, blk, 0);
        }
    }
    Ok(store)
}

fn missing<'a, T>(
    v: Option<&'a T>,
    unit: AgentId,
    from: AgentId,
    what: &'static str,
    tau: usize,
) -> Result<&'a T, SynthesisError> {
    v.ok_or(SynthesisError::MissingPayload { unit, from, what, tau })
}

fn store_pair(store: &mut CostBlockStore, p: AgentId, q: AgentId, blk: Mat, loss: usize) {
    if p == q {
        store.insert(p, p, symmetrize(&blk), loss);
    } else {
        store.insert(q, p, blk.transpose(), loss);
        store.insert(p, q, blk, loss);
    }
}

/// `W̃_p = [(δ_{p,r} A_p - B_r K_{r,p})ᵀ]_{r ∈ D⁺_p}`, of size `n_p × Σ n_r`.
fn closed_loop_factor(p: AgentId, col: &ColumnData, unit: AgentId, tau: usize) -> Result<Mat, SynthesisError> {
    let a = missing(col.a.as_ref(), unit, p, "dynamics", tau)?;
    let np = a.nrows();
    let mut sizes = Vec::with_capacity(col.out.len());
    for r in &col.out {
        sizes.push(missing(col.inputs.get(r), unit, p, "input model", tau)?.0.nrows());
    }
    let off = offsets(sizes.iter().copied());
    let mut w = Mat::zeros(np, *off.last().unwrap());
    for (idx, &r) in col.out.iter().enumerate() {
        let b = &col.inputs[&r].0;
        let k = missing(col.gains.get(&r), unit, p, "gain", tau)?;
        let mut blk = -(b * k);
        if r == p {
            blk += a;
        }
        w.view_mut((0, off[idx]), (np, sizes[idx])).copy_from(&blk.transpose());
    }
    Ok(w)
}

/// One masked backward step of the cost-to-go blocks. `columns` carries the
/// step-`τ+1` data of every `p ∈ D⁺_i(τ)`; `holders` are the stores
/// `P_{j,·}(τ+2)` received from those same agents (the unit's own included).
/// Pairs no holder keeps enter as zero and are counted in the loss.
pub fn propagate_blocks(
    owner: AgentId,
    tau: usize,
    columns: &BTreeMap<AgentId, ColumnData>,
    holders: &[&CostBlockStore],
    rule: SelectionRule,
    repair: bool,
) -> Result<CostBlockStore, SynthesisError> {
    let psi: BTreeSet<(AgentId, AgentId)> = holders.iter().flat_map(|h| h.keys()).collect();
    let mut store = CostBlockStore::new(owner, tau);
    let dp: Vec<AgentId> = columns.keys().copied().collect();
    let mut factors = BTreeMap::new();
    for &p in &dp {
        factors.insert(p, closed_loop_factor(p, column(columns, p)?, owner, tau)?);
    }
    for (a, &p) in dp.iter().enumerate() {
        let cp = column(columns, p)?;
        for &q in &dp[a..] {
            let cq = column(columns, q)?;
            let np = factors[&p].nrows();
            let nq = factors[&q].nrows();
            let mut blk = Mat::zeros(np, nq);
            for r in intersect(&cp.out, &cq.out) {
                let fp = missing(cp.factors.get(&r), owner, p, "output factor", tau)?;
                let fq = missing(cq.factors.get(&r), owner, q, "output factor", tau)?;
                let kp = &cp.gains[&r];
                let kq = missing(cq.gains.get(&r), owner, q, "gain", tau)?;
                let rw = &cp.inputs[&r].1;
                blk += fp.transpose() * fq + kp.transpose() * rw * kq;
            }
            let rows: Vec<usize> = cp.out.iter().map(|r| cp.inputs[r].0.nrows()).collect();
            let cols: Vec<usize> = cq.out.iter().map(|s| cq.inputs[s].0.nrows()).collect();
            let (ro, co) = (offsets(rows.iter().copied()), offsets(cols.iter().copied()));
            let mut pt = Mat::zeros(*ro.last().unwrap(), *co.last().unwrap());
            let mut loss = 0;
            for (x, &r) in cp.out.iter().enumerate() {
                for (y, &s) in cq.out.iter().enumerate() {
                    if !psi.contains(&(r, s)) {
                        loss += 1;
                        continue;
                    }
                    let cands: Vec<Candidate> = holders
                        .iter()
                        .filter_map(|h| h.get(r, s).map(|(block, loss)| Candidate { holder: h.owner, block, loss }))
                        .collect();
                    let (sel, _) = select_with(rule, owner, &cands).expect("pair in psi has a holder");
                    if sel.shape() != (rows[x], cols[y]) {
                        return Err(SynthesisError::Protocol {
                            unit: owner,
                            detail: format!("block ({r},{s}) has shape {:?}", sel.shape()),
                        });
                    }
                    pt.view_mut((ro[x], co[y]), sel.shape()).copy_from(&sel);
                }
            }
            if p == q && repair {
                pt = psd_repair(&symmetrize(&pt));
            }
            blk += &factors[&p] * pt * factors[&q].transpose();
            store_pair(&mut store, p, q, blk, loss);
        }
    }
    Ok(store)
}

/// Solves `S̃_i K̃_i = P̃_i` for the stacked gains `K_{p,i}(τ)`,
/// `p ∈ D⁺_i(τ)` ascending, from blocks `P_{i,(p,q)}(τ+1)`.
pub fn local_gain(
    owner: AgentId,
    tau: usize,
    a_i: &Mat,
    inputs: &BTreeMap<AgentId, (Mat, Mat)>,
    store: &CostBlockStore,
) -> Result<BTreeMap<AgentId, Mat>, SynthesisError> {
    let dp: Vec<AgentId> = inputs.keys().copied().collect();
    let sizes: Vec<usize> = dp.iter().map(|p| inputs[p].0.ncols()).collect();
    let off = offsets(sizes.iter().copied());
    let total = *off.last().unwrap();
    let ni = a_i.nrows();
    let mut s = Mat::zeros(total, total);
    let mut rhs = Mat::zeros(total, ni);
    let block = |p: AgentId, q: AgentId| {
        store.blocks.get(&(p, q)).ok_or(SynthesisError::Protocol {
            unit: owner,
            detail: format!("cost block ({p},{q}) missing at step {}", store.tau),
        })
    };
    for (x, &p) in dp.iter().enumerate() {
        let bp = &inputs[&p].0;
        for (y, &q) in dp.iter().enumerate() {
            let mut blk = bp.transpose() * block(p, q)? * &inputs[&q].0;
            if x == y {
                blk += &inputs[&p].1;
            }
            s.view_mut((off[x], off[y]), blk.shape()).copy_from(&blk);
        }
        let blk = bp.transpose() * block(p, owner)? * a_i;
        rhs.view_mut((off[x], 0), blk.shape()).copy_from(&blk);
    }
    let k = solve_spd(&s, &rhs).ok_or(SynthesisError::Singular { agent: owner, tau })?;
    Ok(dp.iter().enumerate().map(|(x, &p)| (p, sub(&k, off[x], 0, sizes[x], ni))).collect())
}
