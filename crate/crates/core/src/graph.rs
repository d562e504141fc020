//! Acyclic mixed graphs and their combinatorial data.
//!
//! Nodes are labelled `1..=p`. Directed edges `u -> v` carry the direct causal
//! effects, bidirected edges `u <-> v` the latent confounding. All derived data
//! here (longest paths, trek weights, Tian components) is computed from the
//! graph alone and feeds the variable weighting of the polynomial ring.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("self-loop at node {node} in the {kind} part")]
    SelfLoop { node: usize, kind: &'static str },
    #[error("directed cycle {}", format_cycle(.cycle))]
    DirectedCycle { cycle: Vec<usize> },
    #[error("duplicate {kind} edge {u}-{v}")]
    DuplicateEdge { u: usize, v: usize, kind: &'static str },
    #[error("node {node} outside 1..={p}")]
    NodeOutOfRange { node: usize, p: usize },
    #[error("enumeration would produce {count} graphs, above the cap of {cap}")]
    BudgetExceeded { count: u128, cap: u128 },
    #[error("enumeration supports at most 5 nodes, got {0}")]
    TooManyNodes(usize),
    #[error("edge probability {0} is not in [0, 1]")]
    InvalidProbability(String),
    #[error("graph JSON: {0}")]
    Parse(String),
}

fn format_cycle(cycle: &[usize]) -> String {
    let mut s: Vec<String> = cycle.iter().map(|v| v.to_string()).collect();
    if let Some(first) = cycle.first() {
        s.push(first.to_string());
    }
    s.join(" -> ")
}

/// The on-disk graph description: `{"p": 3, "directed": [[1,2]], "bidirected": [[2,3]]}`.
///
/// Node indices are 1-based. Bidirected pairs may be given in either
/// orientation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub p: usize,
    #[serde(default)]
    pub directed: Vec<[usize; 2]>,
    #[serde(default)]
    pub bidirected: Vec<[usize; 2]>,
}

/// Checks the structural assumptions on a graph description: nodes in range,
/// no self-loops, no repeated edges and an acyclic directed part.
pub fn validate(spec: &GraphSpec) -> Result<(), GraphError> {
    let p = spec.p;
    let mut seen_d = HashSet::new();
    for &[u, v] in &spec.directed {
        for node in [u, v] {
            if node == 0 || node > p {
                return Err(GraphError::NodeOutOfRange { node, p });
            }
        }
        if u == v {
            return Err(GraphError::SelfLoop { node: u, kind: "directed" });
        }
        if !seen_d.insert((u, v)) {
            return Err(GraphError::DuplicateEdge { u, v, kind: "directed" });
        }
    }
    let mut seen_b = HashSet::new();
    for &[u, v] in &spec.bidirected {
        for node in [u, v] {
            if node == 0 || node > p {
                return Err(GraphError::NodeOutOfRange { node, p });
            }
        }
        if u == v {
            return Err(GraphError::SelfLoop { node: u, kind: "bidirected" });
        }
        if !seen_b.insert((u.min(v), u.max(v))) {
            return Err(GraphError::DuplicateEdge { u: u.min(v), v: u.max(v), kind: "bidirected" });
        }
    }
    let mut children = vec![Vec::new(); p + 1];
    for &(u, v) in &seen_d {
        children[u].push(v);
    }
    for c in children.iter_mut() {
        c.sort_unstable();
    }
    if let Some(cycle) = find_cycle(p, &children) {
        return Err(GraphError::DirectedCycle { cycle });
    }
    Ok(())
}

fn find_cycle(p: usize, children: &[Vec<usize>]) -> Option<Vec<usize>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; p + 1];
    let mut stack_path: Vec<usize> = Vec::new();
    fn dfs(
        v: usize,
        children: &[Vec<usize>],
        state: &mut [u8],
        path: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[v] = 1;
        path.push(v);
        for &c in &children[v] {
            if state[c] == 1 {
                let start = path.iter().position(|&x| x == c).unwrap();
                return Some(path[start..].to_vec());
            }
            if state[c] == 0 {
                if let Some(cyc) = dfs(c, children, state, path) {
                    return Some(cyc);
                }
            }
        }
        path.pop();
        state[v] = 2;
        None
    }
    for v in 1..=p {
        if state[v] == 0 {
            if let Some(cyc) = dfs(v, children, &mut state, &mut stack_path) {
                return Some(cyc);
            }
        }
    }
    None
}

/// A validated acyclic mixed graph `G = (V, D, B)` on nodes `1..=p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MixedGraph {
    p: usize,
    directed: BTreeSet<(usize, usize)>,
    bidirected: BTreeSet<(usize, usize)>,
}

impl MixedGraph {
    pub fn new(
        p: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let spec = GraphSpec {
            p,
            directed: directed.into_iter().map(|(u, v)| [u, v]).collect(),
            bidirected: bidirected.into_iter().map(|(u, v)| [u, v]).collect(),
        };
        Self::from_spec(&spec)
    }

    pub fn from_spec(spec: &GraphSpec) -> Result<Self, GraphError> {
        validate(spec)?;
        Ok(MixedGraph {
            p: spec.p,
            directed: spec.directed.iter().map(|&[u, v]| (u, v)).collect(),
            bidirected: spec.bidirected.iter().map(|&[u, v]| (u.min(v), u.max(v))).collect(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let spec: GraphSpec =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn empty(p: usize) -> Self {
        MixedGraph { p, directed: BTreeSet::new(), bidirected: BTreeSet::new() }
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            p: self.p,
            directed: self.directed.iter().map(|&(u, v)| [u, v]).collect(),
            bidirected: self.bidirected.iter().map(|&(u, v)| [u, v]).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("graph spec serializes")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> {
        1..=self.p
    }

    /// Directed edges in lexicographic order.
    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    /// Bidirected edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn bidirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.bidirected
    }

    pub fn has_directed(&self, u: usize, v: usize) -> bool {
        self.directed.contains(&(u, v))
    }

    pub fn has_bidirected(&self, u: usize, v: usize) -> bool {
        self.bidirected.contains(&(u.min(v), u.max(v)))
    }

    pub fn edge_count(&self) -> usize {
        self.directed.len() + self.bidirected.len()
    }

    /// Number of free parameters `|D| + |B| + p`.
    pub fn parameter_count(&self) -> usize {
        self.edge_count() + self.p
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.directed.iter().filter(|&&(_, c)| c == v).map(|&(u, _)| u).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.directed.iter().filter(|&&(u, _)| u == v).map(|&(_, c)| c).collect()
    }

    /// Nodes in a topological order of the directed part (ties broken by label).
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indeg = vec![0usize; self.p + 1];
        for &(_, v) in &self.directed {
            indeg[v] += 1;
        }
        let mut ready: BTreeSet<usize> = (1..=self.p).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.p);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        debug_assert_eq!(order.len(), self.p, "validated graphs are acyclic");
        order
    }

    /// Compact one-line encoding used in CSV output, e.g. `p4;D:1>2,3>4;B:2-3`.
    pub fn encode(&self) -> String {
        let d: Vec<String> = self.directed.iter().map(|(u, v)| format!("{u}>{v}")).collect();
        let b: Vec<String> = self.bidirected.iter().map(|(u, v)| format!("{u}-{v}")).collect();
        format!("p{};D:{};B:{}", self.p, d.join(","), b.join(","))
    }

    /// Isomorphism-invariant key: the lexicographically smallest relabelled
    /// edge list over all node permutations. Only meant for small `p`.
    pub fn canonical_key(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let mut perm: Vec<usize> = (0..=self.p).collect();
        let mut best: Option<(Vec<(usize, usize)>, Vec<(usize, usize)>)> = None;
        permute(&mut perm, 1, &mut |perm| {
            let mut d: Vec<(usize, usize)> =
                self.directed.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
            let mut b: Vec<(usize, usize)> = self
                .bidirected
                .iter()
                .map(|&(u, v)| (perm[u].min(perm[v]), perm[u].max(perm[v])))
                .collect();
            d.sort_unstable();
            b.sort_unstable();
            let key = (d, b);
            if best.as_ref().is_none_or(|cur| key < *cur) {
                best = Some(key);
            }
        });
        best.unwrap_or_default()
    }
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k >= perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

impl fmt::Display for MixedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Longest directed path lengths, `get(s, u)` = number of edges on the longest
/// directed path from `s` to `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongestPaths {
    p: usize,
    table: Vec<Option<u32>>,
}

impl LongestPaths {
    pub fn get(&self, s: usize, u: usize) -> Option<u32> {
        self.table[(s - 1) * self.p + (u - 1)]
    }
}

/// Dynamic program over a topological order: `L[s][s] = 0` and
/// `L[s][v] = max over parents u of L[s][u] + 1`.
pub fn longest_path_lengths(graph: &MixedGraph) -> LongestPaths {
    let p = graph.p;
    let mut table = vec![None; p * p];
    let order = graph.topological_order();
    let parents: Vec<Vec<usize>> = (0..=p).map(|v| if v == 0 { vec![] } else { graph.parents(v) }).collect();
    for s in 1..=p {
        let row = (s - 1) * p;
        table[row + s - 1] = Some(0);
        for &v in &order {
            if v == s {
                continue;
            }
            let best = parents[v]
                .iter()
                .filter_map(|&u| table[row + u - 1].map(|l| l + 1))
                .max();
            table[row + v - 1] = best;
        }
    }
    LongestPaths { p, table }
}

/// The trek weighting of the covariance variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrekWeights {
    p: usize,
    weights: Vec<u32>,
    has_trek: Vec<bool>,
    w_trek: u32,
}

impl TrekWeights {
    /// `w(σ_uv)`, symmetric in `u` and `v`.
    pub fn weight(&self, u: usize, v: usize) -> u32 {
        self.weights[(u - 1) * self.p + (v - 1)]
    }

    pub fn has_trek(&self, u: usize, v: usize) -> bool {
        self.has_trek[(u - 1) * self.p + (v - 1)]
    }

    /// Length of the longest trek in the graph.
    pub fn w_trek(&self) -> u32 {
        self.w_trek
    }

    /// `(u, v, w(σ_uv))` for all `u <= v`.
    pub fn entries(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for u in 1..=self.p {
            for v in u..=self.p {
                out.push((u, v, self.weight(u, v)));
            }
        }
        out
    }
}

/// Maximal trek length between every pair of nodes.
///
/// A trek with top `(s, t)` (either `s = t` or `s <-> t`) between `u` and `v`
/// has length `L[s][u] + L[t][v] + 1`, the `+1` being the ω factor. Pairs with
/// no trek get weight 1.
pub fn trek_weights(graph: &MixedGraph) -> TrekWeights {
    let p = graph.p;
    let paths = longest_path_lengths(graph);
    let mut tops: Vec<(usize, usize)> = (1..=p).map(|v| (v, v)).collect();
    for &(s, t) in &graph.bidirected {
        tops.push((s, t));
        tops.push((t, s));
    }
    let mut weights = vec![1u32; p * p];
    let mut has_trek = vec![false; p * p];
    let mut w_trek = 1;
    for u in 1..=p {
        for v in u..=p {
            let best = tops
                .iter()
                .filter_map(|&(s, t)| {
                    let a = paths.get(s, u)?;
                    let b = paths.get(t, v)?;
                    Some(a + b + 1)
                })
                .max();
            if let Some(w) = best {
                for (x, y) in [(u, v), (v, u)] {
                    weights[(x - 1) * p + (y - 1)] = w;
                    has_trek[(x - 1) * p + (y - 1)] = true;
                }
                w_trek = w_trek.max(w);
            }
        }
    }
    TrekWeights { p, weights, has_trek, w_trek }
}

/// One mixed component of the Tian decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TianComponent {
    /// `C_j`: one connected component of the bidirected part.
    pub district: Vec<usize>,
    /// `V_j = C_j ∪ pa(C_j)`, sorted.
    pub nodes: Vec<usize>,
    /// `D_j = D ∩ (V_j × C_j)`.
    pub directed: Vec<(usize, usize)>,
    /// Bidirected edges inside `C_j`.
    pub bidirected: Vec<(usize, usize)>,
}

impl TianComponent {
    /// The component as a standalone graph on `1..=|V_j|`, relabelled in
    /// increasing label order, together with the map back to original labels.
    pub fn to_graph(&self) -> (MixedGraph, Vec<usize>) {
        let index = |v: usize| self.nodes.binary_search(&v).expect("edge endpoint in V_j") + 1;
        let d: BTreeSet<_> = self.directed.iter().map(|&(u, v)| (index(u), index(v))).collect();
        let b: BTreeSet<_> = self
            .bidirected
            .iter()
            .map(|&(u, v)| (index(u).min(index(v)), index(u).max(index(v))))
            .collect();
        let graph = MixedGraph { p: self.nodes.len(), directed: d, bidirected: b };
        (graph, self.nodes.clone())
    }
}

/// Splits the graph into its mixed components, one per connected component
/// of `(V, B)`, ordered by the smallest node of the district.
pub fn tian_decompose(graph: &MixedGraph) -> Vec<TianComponent> {
    let p = graph.p;
    let mut parent: Vec<usize> = (0..=p).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for &(u, v) in &graph.bidirected {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut districts: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; p + 1];
    for v in 1..=p {
        let r = find(&mut parent, v);
        if slot[r] == usize::MAX {
            slot[r] = districts.len();
            districts.push(Vec::new());
        }
        districts[slot[r]].push(v);
    }
    districts
        .into_iter()
        .map(|district| {
            let inside: HashSet<usize> = district.iter().copied().collect();
            let directed: Vec<(usize, usize)> =
                graph.directed.iter().copied().filter(|(_, v)| inside.contains(v)).collect();
            let mut nodes: BTreeSet<usize> = district.iter().copied().collect();
            nodes.extend(directed.iter().map(|&(u, _)| u));
            let bidirected: Vec<(usize, usize)> =
                graph.bidirected.iter().copied().filter(|(u, _)| inside.contains(u)).collect();
            TianComponent { district, nodes: nodes.into_iter().collect(), directed, bidirected }
        })
        .collect()
}

/// Default cap on the number of graphs an enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: u128 = 50_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Exhaustive enumeration of mixed graphs whose directed edges respect the
/// label order (`u -> v` only for `u < v`) and with `|D| + |B| <= max_edges`.
///
/// Candidate edges are listed as all directed pairs followed by all
/// bidirected pairs, each block in lexicographic order; graphs are produced by
/// increasing edge count and, within a count, in lexicographic order of the
/// chosen candidate indices.
#[derive(Debug, Clone)]
pub struct GraphEnumeration {
    p: usize,
    candidates: Vec<(bool, usize, usize)>,
    max_edges: usize,
    current: Option<Vec<usize>>,
    size: usize,
}

pub fn enumerate_graphs(p: usize, max_edges: usize) -> Result<GraphEnumeration, GraphError> {
    enumerate_graphs_capped(p, max_edges, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_graphs_capped(
    p: usize,
    max_edges: usize,
    cap: u128,
) -> Result<GraphEnumeration, GraphError> {
    if p > 5 {
        return Err(GraphError::TooManyNodes(p));
    }
    let mut candidates = Vec::new();
    for u in 1..=p {
        for v in (u + 1)..=p {
            candidates.push((true, u, v));
        }
    }
    for u in 1..=p {
        for v in (u + 1)..=p {
            candidates.push((false, u, v));
        }
    }
    let m = candidates.len();
    let max_edges = max_edges.min(m);
    let count: u128 = (0..=max_edges).map(|k| binomial(m as u128, k as u128)).sum();
    if count > cap {
        return Err(GraphError::BudgetExceeded { count, cap });
    }
    Ok(GraphEnumeration { p, candidates, max_edges, current: Some(Vec::new()), size: 0 })
}

impl GraphEnumeration {
    fn build(&self, chosen: &[usize]) -> MixedGraph {
        let mut g = MixedGraph::empty(self.p);
        for &i in chosen {
            let (dir, u, v) = self.candidates[i];
            if dir {
                g.directed.insert((u, v));
            } else {
                g.bidirected.insert((u, v));
            }
        }
        g
    }

    fn advance(&mut self) {
        let m = self.candidates.len();
        let Some(cur) = self.current.as_mut() else { return };
        let k = cur.len();
        // next k-combination of 0..m in lexicographic order
        let mut i = k;
        while i > 0 {
            i -= 1;
            if cur[i] < m - k + i {
                cur[i] += 1;
                for j in (i + 1)..k {
                    cur[j] = cur[j - 1] + 1;
                }
                return;
            }
        }
        self.size += 1;
        if self.size > self.max_edges {
            self.current = None;
        } else {
            *cur = (0..self.size).collect();
        }
    }
}

impl Iterator for GraphEnumeration {
    type Item = MixedGraph;

    fn next(&mut self) -> Option<MixedGraph> {
        let graph = self.build(self.current.as_ref()?);
        self.advance();
        Some(graph)
    }
}

/// Enumeration filtered to one representative per isomorphism class (the
/// first one met in enumeration order).
pub fn enumerate_unique_graphs(p: usize, max_edges: usize) -> Result<Vec<MixedGraph>, GraphError> {
    let mut seen = HashSet::new();
    Ok(enumerate_graphs(p, max_edges)?.filter(|g| seen.insert(g.canonical_key())).collect())
}

/// Edge probability in `[0, 1]`, kept exact so sampling is reproducible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeProbability {
    num: u64,
    den: u64,
}

impl EdgeProbability {
    pub fn new(value: &Rational) -> Result<Self, GraphError> {
        let bad = || GraphError::InvalidProbability(value.to_string());
        if value.is_negative() || *value > Rational::one() {
            return Err(bad());
        }
        let num = u64::try_from(value.numer()).map_err(|_| bad())?;
        let den = u64::try_from(value.denom()).map_err(|_| bad())?;
        Ok(EdgeProbability { num, den })
    }

    pub fn as_rational(&self) -> Rational {
        Rational::from(num_rational::BigRational::new(self.num.into(), self.den.into()))
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> bool {
        rng.gen_range(0..self.den) < self.num
    }
}

impl std::fmt::Display for EdgeProbability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_rational())
    }
}

impl std::str::FromStr for EdgeProbability {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let r: Rational = s.parse().map_err(|_| GraphError::InvalidProbability(s.to_string()))?;
        Self::new(&r)
    }
}

/// Erdős–Rényi mixed graph: every directed pair `u -> v` with `u < v` and
/// every bidirected pair is included independently with probability
/// `edge_prob`. Directed pairs are drawn first, both blocks in lexicographic
/// order.
pub fn random_graph(p: usize, edge_prob: &EdgeProbability, seed: u64) -> MixedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = MixedGraph::empty(p);
    for u in 1..=p {
        for v in (u + 1)..=p {
            if edge_prob.draw(&mut rng) {
                g.directed.insert((u, v));
            }
        }
    }
    for u in 1..=p {
        for v in (u + 1)..=p {
            if edge_prob.draw(&mut rng) {
                g.bidirected.insert((u, v));
            }
        }
    }
    g
}

/// Graphs used throughout the tests and documentation.
pub mod examples {
    use super::MixedGraph;

    /// Instrumental variable model: `1 -> 2 -> 3`, `2 <-> 3`.
    pub fn instrumental_variable() -> MixedGraph {
        MixedGraph::new(3, [(1, 2), (2, 3)], [(2, 3)]).unwrap()
    }

    /// Randomized trial with imperfect adherence, nodes `L=1, T=2, A=3, Y=4`:
    /// `L -> T, L -> Y, T -> A, A -> Y, A <-> Y`.
    pub fn adherence_trial() -> MixedGraph {
        MixedGraph::new(4, [(1, 2), (1, 4), (2, 3), (3, 4)], [(3, 4)]).unwrap()
    }

    /// `1 -> 2, 1 -> 4, 3 -> 4, 2 <-> 3, 3 <-> 4`.
    pub fn four_node() -> MixedGraph {
        MixedGraph::new(4, [(1, 2), (1, 4), (3, 4)], [(2, 3), (3, 4)]).unwrap()
    }

    /// The bow: `1 -> 2` together with `1 <-> 2`.
    pub fn bow() -> MixedGraph {
        MixedGraph::new(2, [(1, 2)], [(1, 2)]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::examples::*;
    use super::*;

    fn spec(p: usize, d: &[[usize; 2]], b: &[[usize; 2]]) -> GraphSpec {
        GraphSpec { p, directed: d.to_vec(), bidirected: b.to_vec() }
    }

    #[test]
    fn validate_accepts_iv_graph() {
        assert_eq!(validate(&spec(3, &[[1, 2], [2, 3]], &[[2, 3]])), Ok(()));
    }

    #[test]
    fn validate_rejects_two_cycle() {
        let err = validate(&spec(2, &[[1, 2], [2, 1]], &[])).unwrap_err();
        match err {
            GraphError::DirectedCycle { cycle } => {
                let mut c = cycle.clone();
                c.sort();
                assert_eq!(c, vec![1, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_reports_cycle_witness() {
        let err = validate(&spec(4, &[[1, 2], [2, 3], [3, 4], [4, 2]], &[])).unwrap_err();
        let GraphError::DirectedCycle { cycle } = err else { panic!() };
        assert_eq!(cycle.len(), 3);
        for w in 0..cycle.len() {
            let (u, v) = (cycle[w], cycle[(w + 1) % cycle.len()]);
            assert!([[2, 3], [3, 4], [4, 2]].contains(&[u, v]));
        }
    }

    #[test]
    fn validate_rejects_self_loops_and_duplicates() {
        assert!(matches!(
            validate(&spec(1, &[[1, 1]], &[])),
            Err(GraphError::SelfLoop { node: 1, .. })
        ));
        assert!(matches!(
            validate(&spec(2, &[], &[[2, 2]])),
            Err(GraphError::SelfLoop { node: 2, .. })
        ));
        assert!(matches!(
            validate(&spec(2, &[[1, 2], [1, 2]], &[])),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            validate(&spec(2, &[], &[[1, 2], [2, 1]])),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            validate(&spec(2, &[[1, 3]], &[])),
            Err(GraphError::NodeOutOfRange { node: 3, p: 2 })
        ));
    }

    #[test]
    fn bidirected_pairs_are_canonicalized() {
        let g = MixedGraph::from_json(r#"{"p":3,"directed":[[1,2]],"bidirected":[[3,2]]}"#).unwrap();
        assert!(g.bidirected().contains(&(2, 3)));
        assert!(g.has_bidirected(3, 2));
    }

    #[test]
    fn longest_paths_on_chain() {
        let g = MixedGraph::new(3, [(1, 2), (2, 3)], []).unwrap();
        let l = longest_path_lengths(&g);
        assert_eq!(l.get(1, 3), Some(2));
        assert_eq!(l.get(3, 1), None);
        assert_eq!(l.get(2, 2), Some(0));
    }

    #[test]
    fn longest_paths_prefer_longer_route() {
        let g = MixedGraph::new(3, [(1, 2), (2, 3), (1, 3)], []).unwrap();
        assert_eq!(longest_path_lengths(&g).get(1, 3), Some(2));
    }

    #[test]
    fn trek_weights_iv_graph() {
        let w = trek_weights(&instrumental_variable());
        assert_eq!(w.weight(2, 3), 4);
        assert_eq!(w.weight(3, 2), 4);
        assert_eq!(w.weight(1, 3), 3);
        assert_eq!(w.weight(1, 2), 2);
        assert_eq!(w.weight(1, 1), 1);
        // 3 <- 2 <- 1 -> 2 -> 3
        assert_eq!(w.weight(3, 3), 5);
        assert_eq!(w.w_trek(), 5);
    }

    #[test]
    fn isolated_nodes_weigh_one() {
        let g = MixedGraph::new(3, [(1, 2)], []).unwrap();
        let w = trek_weights(&g);
        assert_eq!(w.weight(3, 3), 1);
        assert!(!w.has_trek(1, 3));
        assert_eq!(w.weight(1, 3), 1);
    }

    #[test]
    fn tian_on_four_node_graph() {
        let comps = tian_decompose(&four_node());
        assert_eq!(comps.len(), 2);
        let c1 = comps.iter().find(|c| c.district == vec![2, 3, 4]).unwrap();
        assert_eq!(c1.nodes, vec![1, 2, 3, 4]);
        assert_eq!(c1.directed, vec![(1, 2), (1, 4), (3, 4)]);
        assert_eq!(c1.bidirected, vec![(2, 3), (3, 4)]);
        let c2 = comps.iter().find(|c| c.district == vec![1]).unwrap();
        assert_eq!(c2.nodes, vec![1]);
        assert!(c2.directed.is_empty() && c2.bidirected.is_empty());
    }

    #[test]
    fn tian_without_bidirected_edges() {
        let g = MixedGraph::new(3, [(1, 2), (1, 3), (2, 3)], []).unwrap();
        let comps = tian_decompose(&g);
        assert_eq!(comps.len(), 3);
        for c in &comps {
            let v = c.district[0];
            assert_eq!(c.district.len(), 1);
            let into: Vec<_> = g.directed().iter().copied().filter(|e| e.1 == v).collect();
            assert_eq!(c.directed, into);
        }
    }

    #[test]
    fn tian_connected_bidirected_part() {
        let g = MixedGraph::new(3, [(1, 2), (2, 3)], [(1, 2), (2, 3)]).unwrap();
        let comps = tian_decompose(&g);
        assert_eq!(comps.len(), 1);
        let (sub, map) = comps[0].to_graph();
        assert_eq!(sub, g);
        assert_eq!(map, vec![1, 2, 3]);
    }

    #[test]
    fn enumerate_two_nodes() {
        let all: Vec<_> = enumerate_graphs(2, 2).unwrap().collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0], MixedGraph::empty(2));
        assert!(all.contains(&MixedGraph::new(2, [(1, 2)], []).unwrap()));
        assert!(all.contains(&MixedGraph::new(2, [], [(1, 2)]).unwrap()));
        assert!(all.contains(&bow()));
    }

    #[test]
    fn enumerate_empty_budget() {
        assert_eq!(enumerate_graphs(3, 0).unwrap().count(), 1);
    }

    #[test]
    fn enumerate_guards() {
        assert!(matches!(enumerate_graphs(6, 1), Err(GraphError::TooManyNodes(6))));
        assert!(matches!(
            enumerate_graphs_capped(4, 6, 100),
            Err(GraphError::BudgetExceeded { count: 2510, cap: 100 })
        ));
    }

    #[test]
    fn four_node_census_counts() {
        let raw: Vec<_> = enumerate_graphs(4, 6).unwrap().collect();
        assert_eq!(raw.len(), 2510);
        let distinct: HashSet<_> = raw.iter().cloned().collect();
        assert_eq!(distinct.len(), raw.len());
        assert_eq!(enumerate_unique_graphs(4, 6).unwrap().len(), 715);
    }

    #[test]
    fn random_graph_extremes() {
        let zero = EdgeProbability::new(&Rational::zero()).unwrap();
        assert_eq!(random_graph(5, &zero, 7), MixedGraph::empty(5));
        let one = EdgeProbability::new(&Rational::one()).unwrap();
        let g = random_graph(3, &one, 7);
        assert_eq!(g.directed().len(), 3);
        assert_eq!(g.bidirected().len(), 3);
    }

    #[test]
    fn random_graph_is_reproducible() {
        let prob: EdgeProbability = "1/5".parse().unwrap();
        assert_eq!(random_graph(10, &prob, 42), random_graph(10, &prob, 42));
        assert!(MixedGraph::from_spec(&random_graph(10, &prob, 42).to_spec()).is_ok());
    }

    #[test]
    fn random_graph_mean_directed_edges() {
        // Binomial(45, 1/5): mean 9, sd sqrt(7.2); standard error of the mean
        // over n = 1000 samples is sqrt(7.2 / 1000).
        let prob: EdgeProbability = "1/5".parse().unwrap();
        let n = 1000;
        let total: usize = (0..n).map(|s| random_graph(10, &prob, s).directed().len()).sum();
        let mean = total as f64 / n as f64;
        let se = (45.0 * 0.2 * 0.8 / n as f64).sqrt();
        assert!((mean - 9.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn edge_probability_rejects_out_of_range() {
        assert!("3/2".parse::<EdgeProbability>().is_err());
        assert!("-0.1".parse::<EdgeProbability>().is_err());
        assert!("0.2".parse::<EdgeProbability>().is_ok());
    }
}
