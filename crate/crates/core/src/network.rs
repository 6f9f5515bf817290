//! Coupling digraphs and the neighborhood sets derived from them.
//!
//! An edge `(j, i)` means the tracking output of agent `i` depends on the
//! state of agent `j`. Every vertex carries a self-loop.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::NetworkError;

pub type AgentId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    d_minus: Vec<Vec<AgentId>>,
    d_plus: Vec<Vec<AgentId>>,
}

impl Digraph {
    /// Builds a digraph from `(j, i)` pairs. Self-loops are added and
    /// duplicates removed.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
    ) -> Result<Self, NetworkError> {
        let mut d_minus: Vec<BTreeSet<AgentId>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for (j, i) in edges {
            for a in [j, i] {
                if a >= n {
                    return Err(NetworkError::AgentOutOfRange { agent: a, count: n });
                }
            }
            d_minus[i].insert(j);
        }
        let mut d_plus = vec![Vec::new(); n];
        for (i, set) in d_minus.iter().enumerate() {
            for &j in set {
                d_plus[j].push(i);
            }
        }
        Ok(Self {
            d_minus: d_minus.into_iter().map(|s| s.into_iter().collect()).collect(),
            d_plus,
        })
    }

    pub fn self_loops(n: usize) -> Self {
        Self::new(n, []).expect("self loops are always valid")
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|j| (0..n).map(move |i| (j, i)));
        Self::new(n, edges).expect("complete graph is valid")
    }

    /// Directed chain `0 -> 1 -> ... -> n-1`.
    pub fn chain(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("chain is valid")
    }

    /// Directed ring where agent `i` is coupled to `i-1 mod n`.
    pub fn ring(n: usize) -> Self {
        Self::new(n, (0..n).map(|i| ((i + n - 1) % n, i))).expect("ring is valid")
    }

    /// Binary tree rooted at 0 with edges pointing from parent to child.
    pub fn binary_tree(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| ((i - 1) / 2, i))).expect("tree is valid")
    }

    pub fn agent_count(&self) -> usize {
        self.d_minus.len()
    }

    /// D⁻_i, ascending.
    pub fn in_neighbors(&self, i: AgentId) -> &[AgentId] {
        &self.d_minus[i]
    }

    /// D⁺_i, ascending.
    pub fn out_neighbors(&self, i: AgentId) -> &[AgentId] {
        &self.d_plus[i]
    }

    pub fn contains_edge(&self, j: AgentId, i: AgentId) -> bool {
        self.d_minus[i].binary_search(&j).is_ok()
    }

    /// Whether the two agents share an edge in either direction.
    pub fn adjacent(&self, a: AgentId, b: AgentId) -> bool {
        self.contains_edge(a, b) || self.contains_edge(b, a)
    }

    /// All `(j, i)` pairs including self-loops, sorted by `i` then `j`.
    pub fn edges(&self) -> Vec<(AgentId, AgentId)> {
        self.d_minus
            .iter()
            .enumerate()
            .flat_map(|(i, set)| set.iter().map(move |&j| (j, i)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.d_minus.iter().map(Vec::len).sum()
    }

    /// φ_i = D⁺_i × D⁺_i.
    pub fn phi(&self, i: AgentId) -> Vec<(AgentId, AgentId)> {
        let dp = self.out_neighbors(i);
        dp.iter().flat_map(|&p| dp.iter().map(move |&q| (p, q))).collect()
    }

    /// ψ_i = ∪_{j ∈ D⁺_i} φ_j.
    pub fn psi(&self, i: AgentId) -> BTreeSet<(AgentId, AgentId)> {
        self.out_neighbors(i).iter().flat_map(|&j| self.phi(j)).collect()
    }

    pub fn neighborhoods(&self, i: AgentId) -> NeighborhoodSets {
        NeighborhoodSets {
            d_minus: self.d_minus[i].clone(),
            d_plus: self.d_plus[i].clone(),
            phi: self.phi(i),
            psi: self.psi(i),
        }
    }

    pub fn sparsity_pattern(&self) -> SparsityPattern {
        let n = self.agent_count();
        let mut mask = vec![false; n * n];
        for (j, i) in self.edges() {
            mask[i * n + j] = true;
        }
        SparsityPattern { n, mask }
    }

    /// Removes every non-loop edge `(j, i)` for which `keep(j, i)` is false.
    pub fn restrict(&self, mut keep: impl FnMut(AgentId, AgentId) -> bool) -> Self {
        let kept: Vec<_> = self.edges().into_iter().filter(|&(j, i)| j == i || keep(j, i)).collect();
        Self::new(self.agent_count(), kept).expect("restriction keeps endpoints in range")
    }

    /// Union of the edge sets of two graphs over the same agents.
    pub fn union(&self, other: &Self) -> Self {
        let edges = self.edges().into_iter().chain(other.edges());
        Self::new(self.agent_count().max(other.agent_count()), edges).expect("union is valid")
    }

    /// Whether some root reaches every agent along edge directions. Only
    /// reported as a diagnostic; synthesis does not require it.
    pub fn has_directed_spanning_tree(&self) -> bool {
        let n = self.agent_count();
        (0..n).any(|root| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([root]);
            seen[root] = true;
            let mut count = 1;
            while let Some(v) = queue.pop_front() {
                for &w in self.out_neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        queue.push_back(w);
                    }
                }
            }
            count == n
        })
    }

    /// Number of pairs in `D⁺_p × D⁺_q` missing from ψ_i, summed over
    /// `(p, q) ∈ φ_i`. Zero for every unit means masking never drops a block
    /// on a static graph.
    pub fn coverage_deficit(&self, i: AgentId) -> usize {
        let psi = self.psi(i);
        self.phi(i)
            .into_iter()
            .map(|(p, q)| {
                self.out_neighbors(p)
                    .iter()
                    .flat_map(|&r| self.out_neighbors(q).iter().map(move |&s| (r, s)))
                    .filter(|pair| !psi.contains(pair))
                    .count()
            })
            .sum()
    }

    pub fn max_in_degree(&self) -> usize {
        self.d_minus.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_out_degree(&self) -> usize {
        self.d_plus.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSets {
    pub d_minus: Vec<AgentId>,
    pub d_plus: Vec<AgentId>,
    pub phi: Vec<(AgentId, AgentId)>,
    pub psi: BTreeSet<(AgentId, AgentId)>,
}

/// Block mask of admissible gain blocks: `(i, j)` allowed iff `j ∈ D⁻_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    mask: Vec<bool>,
}

impl SparsityPattern {
    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn allowed(&self, i: AgentId, j: AgentId) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    pub fn is_block_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.allowed(i, j) == (i == j)))
    }

    pub fn allowed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for SparsityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: String = (0..self.n).map(|j| if self.allowed(i, j) { '1' } else { '0' }).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

type Provider = dyn Fn(usize) -> Digraph + Send + Sync;

/// A coupling topology over discrete time.
#[derive(Clone)]
pub enum Topology {
    Static(Arc<Digraph>),
    /// Graph `k` of the list applies at step `start + k`; steps outside the
    /// list use the nearest end.
    Timeline { start: usize, graphs: Vec<Arc<Digraph>> },
    /// Graphs produced on demand and memoized per step.
    Dynamic {
        agents: usize,
        provider: Arc<Provider>,
        cache: Arc<Mutex<BTreeMap<usize, Arc<Digraph>>>>,
    },
}

impl fmt::Debug for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Static(g) => f.debug_tuple("Static").field(g).finish(),
            Topology::Timeline { start, graphs } => {
                f.debug_struct("Timeline").field("start", start).field("len", &graphs.len()).finish()
            }
            Topology::Dynamic { agents, .. } => f.debug_struct("Dynamic").field("agents", agents).finish(),
        }
    }
}

impl Topology {
    pub fn fixed(graph: Digraph) -> Self {
        Topology::Static(Arc::new(graph))
    }

    pub fn timeline(start: usize, graphs: Vec<Digraph>) -> Result<Self, NetworkError> {
        let Some(first) = graphs.first() else {
            return Err(NetworkError::EmptyTimeline);
        };
        let n = first.agent_count();
        if let Some(g) = graphs.iter().find(|g| g.agent_count() != n) {
            return Err(NetworkError::AgentCount { topology: n, models: g.agent_count() });
        }
        Ok(Topology::Timeline { start, graphs: graphs.into_iter().map(Arc::new).collect() })
    }

    pub fn dynamic(agents: usize, provider: impl Fn(usize) -> Digraph + Send + Sync + 'static) -> Self {
        Topology::Dynamic {
            agents,
            provider: Arc::new(provider),
            cache: Arc::new(Mutex::new(BTreeMap::new())),
        }
    }

    pub fn agent_count(&self) -> usize {
        match self {
            Topology::Static(g) => g.agent_count(),
            Topology::Timeline { graphs, .. } => graphs[0].agent_count(),
            Topology::Dynamic { agents, .. } => *agents,
        }
    }

    pub fn at(&self, k: usize) -> Arc<Digraph> {
        match self {
            Topology::Static(g) => Arc::clone(g),
            Topology::Timeline { start, graphs } => {
                let idx = k.saturating_sub(*start).min(graphs.len() - 1);
                Arc::clone(&graphs[idx])
            }
            Topology::Dynamic { provider, cache, .. } => {
                if let Some(g) = cache.lock().expect("topology cache poisoned").get(&k) {
                    return Arc::clone(g);
                }
                let g = Arc::new(provider(k));
                cache.lock().expect("topology cache poisoned").insert(k, Arc::clone(&g));
                g
            }
        }
    }

    /// Drops memoized graphs for steps before `k`.
    pub fn forget_before(&self, k: usize) {
        if let Topology::Dynamic { cache, .. } = self {
            let mut cache = cache.lock().expect("topology cache poisoned");
            *cache = cache.split_off(&k);
        }
    }

    pub fn neighborhoods(&self, i: AgentId, k: usize) -> NeighborhoodSets {
        self.at(k).neighborhoods(i)
    }

    pub fn sparsity_pattern(&self, k: usize) -> SparsityPattern {
        self.at(k).sparsity_pattern()
    }

    /// Graphs for steps `k..=k+horizon`.
    pub fn window(&self, k: usize, horizon: usize) -> TopologyWindow {
        TopologyWindow { start: k, graphs: (k..=k + horizon).map(|t| self.at(t)).collect() }
    }
}

/// Snapshot of a topology over `[start, start + len - 1]`.
#[derive(Debug, Clone)]
pub struct TopologyWindow {
    start: usize,
    graphs: Vec<Arc<Digraph>>,
}

impl TopologyWindow {
    pub fn new(start: usize, graphs: Vec<Digraph>) -> Self {
        assert!(!graphs.is_empty(), "a window holds at least one graph");
        Self { start, graphs: graphs.into_iter().map(Arc::new).collect() }
    }

    pub fn constant(start: usize, horizon: usize, graph: Digraph) -> Self {
        let g = Arc::new(graph);
        Self { start, graphs: vec![g; horizon + 1] }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Number of steps after the start covered by the window.
    pub fn horizon(&self) -> usize {
        self.graphs.len() - 1
    }

    pub fn agent_count(&self) -> usize {
        self.graphs[0].agent_count()
    }

    pub fn at(&self, tau: usize) -> &Digraph {
        assert!(
            tau >= self.start && tau <= self.start + self.horizon(),
            "step {tau} outside window [{}, {}]",
            self.start,
            self.start + self.horizon()
        );
        &self.graphs[tau - self.start]
    }

    pub fn graphs(&self) -> impl Iterator<Item = (usize, &Digraph)> {
        self.graphs.iter().enumerate().map(|(k, g)| (self.start + k, g.as_ref()))
    }

    /// Applies `restrict` to each graph; `keep(tau, j, i)` decides whether
    /// edge `(j, i)` survives at step `tau`.
    pub fn restrict(&self, mut keep: impl FnMut(usize, AgentId, AgentId) -> bool) -> Self {
        let graphs = self
            .graphs()
            .map(|(tau, g)| Arc::new(g.restrict(|j, i| keep(tau, j, i))))
            .collect();
        Self { start: self.start, graphs }
    }

    pub fn is_static(&self) -> bool {
        self.graphs.windows(2).all(|w| w[0] == w[1])
    }
}
