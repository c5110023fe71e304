//! Graphs in ±1 encoding, null/planted sampling, Fourier characters, clique
//! enumeration, and minimum vertex separators via vertex-split max-flow.
//!
//! A [`Graph`] assigns every unordered pair a sign: `+1` means the edge is
//! present, `-1` absent. Fourier characters are products of these signs, so
//! the empty character is `+1` and the characters form an orthonormal basis
//! under the null distribution.

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::Rat;
use num_traits::{Signed, ToPrimitive};
use rand::Rng;
use std::collections::BTreeSet;
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

/// Undirected graph on `[n]` with a ±1 sign for every unordered pair.
///
/// Stored as row bitsets; bit `j` of row `i` is set iff `{i,j}` is an edge
/// (sign `+1`). No self-loops: bit `i` of row `i` is never set.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    words: usize,
    adj: Vec<u64>,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Graph(n={}, edges={})", self.n, self.edge_count())
    }
}

impl Graph {
    /// Graph with all signs `-1` (no edges).
    pub fn empty(n: usize) -> Graph {
        let words = n.div_ceil(64).max(1);
        Graph {
            n,
            words,
            adj: vec![0; n.max(1) * words],
        }
    }

    /// Complete graph: all signs `+1`.
    pub fn complete(n: usize) -> Graph {
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.set_edge(i, j, true);
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Graph {
        let mut g = Graph::empty(n);
        for &(i, j) in edges {
            g.set_edge(i, j, true);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        debug_assert!(i != j && i < self.n && j < self.n);
        self.adj[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Sign of the pair `{i,j}`: `+1` for an edge, `-1` for a non-edge.
    #[inline]
    pub fn sign(&self, i: usize, j: usize) -> i32 {
        if self.is_edge(i, j) {
            1
        } else {
            -1
        }
    }

    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        assert!(i != j && i < self.n && j < self.n, "bad pair ({i},{j})");
        let (wi, wj) = (i * self.words + j / 64, j * self.words + i / 64);
        if present {
            self.adj[wi] |= 1 << (j % 64);
            self.adj[wj] |= 1 << (i % 64);
        } else {
            self.adj[wi] &= !(1 << (j % 64));
            self.adj[wj] &= !(1 << (i % 64));
        }
    }

    /// Neighbor-row bitset of vertex `i` (`words` u64 blocks).
    pub fn row(&self, i: usize) -> &[u64] {
        &self.adj[i * self.words..(i + 1) * self.words]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (w, &bits) in self.row(i).iter().enumerate() {
            let mut b = bits;
            while b != 0 {
                let t = b.trailing_zeros() as usize;
                out.push(w * 64 + t);
                b &= b - 1;
            }
        }
        out
    }

    /// True iff every pair inside `set` is an edge. Empty sets and singletons
    /// count as cliques.
    pub fn is_clique(&self, set: &[usize]) -> bool {
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                if !self.is_edge(i, j) {
                    return false;
                }
            }
        }
        true
    }

    /// Textual serialization: header, vertex count, one `+1` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pcl-graph v1");
        let _ = writeln!(s, "n {}", self.n);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.is_edge(i, j) {
                    let _ = writeln!(s, "{i} {j}");
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Graph> {
        let mut lines = text.lines();
        match lines.next() {
            Some("pcl-graph v1") => {}
            _ => return Err(Error::invalid("missing graph header")),
        }
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("n "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid("missing vertex count"))?;
        let mut g = Graph::empty(n);
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::invalid("bad edge line"))?;
            let j: usize = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::invalid("bad edge line"))?;
            if i == j || i >= n || j >= n {
                return Err(Error::invalid(format!("bad pair ({i},{j})")));
            }
            g.set_edge(i, j, true);
        }
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// Edge sets and characters
// ---------------------------------------------------------------------------

/// A finite set of unordered vertex pairs; the index set of a Fourier character.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeSet {
    pairs: BTreeSet<(u32, u32)>,
}

impl EdgeSet {
    pub fn new() -> EdgeSet {
        EdgeSet::default()
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> EdgeSet {
        let mut e = EdgeSet::new();
        for &(i, j) in pairs {
            e.insert(i, j);
        }
        e
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        assert_ne!(i, j, "self-loop");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pairs.insert((a as u32, b as u32));
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pairs.contains(&(a as u32, b as u32))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(a, b)| (a as usize, b as usize))
    }

    /// The support `V(T)`: vertices incident to at least one pair.
    pub fn support(&self) -> Vec<usize> {
        let mut vs = BTreeSet::new();
        for &(a, b) in &self.pairs {
            vs.insert(a as usize);
            vs.insert(b as usize);
        }
        vs.into_iter().collect()
    }

    pub fn is_disjoint(&self, other: &EdgeSet) -> bool {
        self.pairs.is_disjoint(&other.pairs)
    }

    /// Symmetric difference (character multiplication on index sets).
    pub fn symmetric_difference(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet {
            pairs: self.pairs.symmetric_difference(&other.pairs).copied().collect(),
        }
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet {
            pairs: self.pairs.union(&other.pairs).copied().collect(),
        }
    }
}

/// Fourier character `chi_T(G) = prod_{e in T} G_e`; `+1` on the empty set.
pub fn character(g: &Graph, t: &EdgeSet) -> i32 {
    let mut negatives = 0usize;
    for (i, j) in t.iter() {
        if !g.is_edge(i, j) {
            negatives += 1;
        }
    }
    if negatives % 2 == 0 {
        1
    } else {
        -1
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Draw `G(n, 1/2)`: every pair's sign i.i.d. uniform on ±1.
pub fn sample_null(n: usize, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = rng_from(seed);
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<bool>() {
                g.set_edge(i, j, true);
            }
        }
    }
    Ok(g)
}

/// A planted sample: the graph together with the 0/1 clique membership vector.
#[derive(Clone, Debug)]
pub struct PlantedSample {
    pub graph: Graph,
    pub membership: Vec<bool>,
}

impl PlantedSample {
    pub fn clique_vertices(&self) -> Vec<usize> {
        (0..self.graph.n()).filter(|&i| self.membership[i]).collect()
    }
}

/// Draw from the planted distribution: each vertex joins the clique
/// independently with probability `omega/n` (exact rational Bernoulli),
/// pairs inside the clique are forced to `+1`, all other pairs are i.i.d.
/// uniform ±1.
///
/// Independent membership is the model under which
/// `E[chi_T * x_S] = (omega/n)^{|V(T) ∪ S|}` holds exactly.
pub fn sample_planted(n: usize, omega: &Rat, seed: u64) -> Result<PlantedSample> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !omega.is_positive() || *omega > Rat::from_integer(n.into()) {
        return Err(Error::invalid(format!("omega must lie in (0, n], got {omega}")));
    }
    // membership probability omega/n = p / (q*n) with exact integer arithmetic
    let p = omega
        .numer()
        .to_u64()
        .ok_or_else(|| Error::invalid("omega numerator too large"))?;
    let q = omega
        .denom()
        .to_u64()
        .ok_or_else(|| Error::invalid("omega denominator too large"))?;
    let qn = q
        .checked_mul(n as u64)
        .ok_or_else(|| Error::invalid("omega denominator times n overflows"))?;

    let mut rng = rng_from(seed);
    let membership: Vec<bool> = (0..n).map(|_| rng.random_range(0..qn) < p).collect();
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let forced = membership[i] && membership[j];
            if forced || rng.random::<bool>() {
                g.set_edge(i, j, true);
            }
        }
    }
    Ok(PlantedSample { graph: g, membership })
}

// ---------------------------------------------------------------------------
// Clique enumeration
// ---------------------------------------------------------------------------

/// Streaming enumeration of all cliques `K` with `base ⊆ K`, `|K| ≤ max_size`.
///
/// The empty set and singletons count as cliques. Output order is
/// lexicographic in the extension sequence, each clique exactly once.
/// If `base` itself is not a clique the stream is empty.
pub fn enumerate_cliques<'a>(g: &'a Graph, base: &[usize], max_size: usize) -> CliqueIter<'a> {
    let base_sorted: Vec<usize> = {
        let mut b = base.to_vec();
        b.sort_unstable();
        b.dedup();
        b
    };
    let ok = base_sorted.len() <= max_size && g.is_clique(&base_sorted);
    let mut stack = Vec::new();
    if ok {
        // candidates: common neighbors of the base (all of [n] when base = ∅)
        let cands: Vec<usize> = (0..g.n())
            .filter(|&v| !base_sorted.contains(&v) && base_sorted.iter().all(|&b| g.is_edge(b, v)))
            .collect();
        stack.push(Frame {
            clique: base_sorted,
            cands,
        });
    }
    CliqueIter { g, max_size, stack }
}

struct Frame {
    clique: Vec<usize>,
    cands: Vec<usize>,
}

pub struct CliqueIter<'a> {
    g: &'a Graph,
    max_size: usize,
    stack: Vec<Frame>,
}

impl Iterator for CliqueIter<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let frame = self.stack.pop()?;
        if frame.clique.len() < self.max_size {
            // push children in reverse so the smallest extension pops first
            for (idx, &v) in frame.cands.iter().enumerate().rev() {
                let mut clique = frame.clique.clone();
                clique.push(v);
                let cands: Vec<usize> = frame.cands[idx + 1..]
                    .iter()
                    .copied()
                    .filter(|&u| self.g.is_edge(u, v))
                    .collect();
                self.stack.push(Frame { clique, cands });
            }
        }
        let mut out = frame.clique;
        out.sort_unstable();
        Some(out)
    }
}

// ---------------------------------------------------------------------------
// Minimum vertex separators (Menger via vertex-split max-flow)
// ---------------------------------------------------------------------------

/// Result of a separator computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Separator {
    /// Size of a minimum separator = max number of vertex-disjoint I–J paths.
    pub size: usize,
    /// A minimum-size witness containing `I ∩ J`, sorted.
    pub witness: Vec<usize>,
}

/// Unit-capacity Dinic on the vertex-split digraph.
///
/// Node `2v` is `v_in`, `2v+1` is `v_out`; source and sink are appended.
/// Splitting arcs carry capacity 1 (or "infinite" for uncuttable vertices);
/// all other arcs are infinite.
struct FlowNet {
    head: Vec<u32>,
    next: Vec<u32>,
    to: Vec<u32>,
    cap: Vec<u32>,
    nodes: usize,
}

const INF: u32 = u32::MAX / 2;

impl FlowNet {
    fn new(nodes: usize) -> FlowNet {
        FlowNet {
            head: vec![u32::MAX; nodes],
            next: Vec::new(),
            to: Vec::new(),
            cap: Vec::new(),
            nodes,
        }
    }

    fn arc(&mut self, u: usize, v: usize, c: u32) {
        for (a, b, cc) in [(u, v, c), (v, u, 0)] {
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() as u32;
            self.to.push(b as u32);
            self.cap.push(cc);
        }
    }

    fn bfs_levels(&self, s: usize, t: usize) -> Option<Vec<u32>> {
        let mut level = vec![u32::MAX; self.nodes];
        let mut queue = std::collections::VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut e = self.head[u];
            while e != u32::MAX {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && level[v] == u32::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
                e = self.next[e as usize];
            }
        }
        if level[t] == u32::MAX {
            None
        } else {
            Some(level)
        }
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: u32, level: &[u32], it: &mut [u32]) -> u32 {
        if u == t {
            return pushed;
        }
        while it[u] != u32::MAX {
            let e = it[u] as usize;
            let v = self.to[e] as usize;
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let d = self.dfs(v, t, pushed.min(self.cap[e]), level, it);
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            it[u] = self.next[e];
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> u32 {
        let mut flow = 0;
        while let Some(level) = self.bfs_levels(s, t) {
            let mut it = self.head.clone();
            loop {
                let d = self.dfs(s, t, INF, &level, &mut it);
                if d == 0 {
                    break;
                }
                flow += d;
            }
        }
        flow
    }

    /// Residual-reachable node set from `s` after max flow.
    fn residual_reach(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.nodes];
        let mut queue = std::collections::VecDeque::new();
        seen[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut e = self.head[u];
            while e != u32::MAX {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
                e = self.next[e as usize];
            }
        }
        seen
    }
}

/// Adjacency view used by separator routines: vertex count plus an edge test.
pub trait AdjacencyView {
    fn vertex_count(&self) -> usize;
    fn has_edge(&self, i: usize, j: usize) -> bool;
}

impl AdjacencyView for Graph {
    fn vertex_count(&self) -> usize {
        self.n()
    }
    fn has_edge(&self, i: usize, j: usize) -> bool {
        self.is_edge(i, j)
    }
}

/// Adjacency given by an explicit pair list over `0..m`.
pub struct PairListView {
    pub m: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl AdjacencyView for PairListView {
    fn vertex_count(&self) -> usize {
        self.m
    }
    fn has_edge(&self, i: usize, j: usize) -> bool {
        self.pairs.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
    }
}

fn build_net<A: AdjacencyView>(
    adj: &A,
    sources: &[usize],
    sinks: &[usize],
    removed: &[bool],
    uncuttable_sources: bool,
) -> (FlowNet, usize, usize) {
    let m = adj.vertex_count();
    let s = 2 * m;
    let t = 2 * m + 1;
    let mut net = FlowNet::new(2 * m + 2);
    let is_source = {
        let mut v = vec![false; m];
        for &i in sources {
            v[i] = true;
        }
        v
    };
    for v in 0..m {
        if removed[v] {
            continue;
        }
        let c = if uncuttable_sources && is_source[v] { INF } else { 1 };
        net.arc(2 * v, 2 * v + 1, c);
    }
    for i in 0..m {
        if removed[i] {
            continue;
        }
        for j in (i + 1)..m {
            if removed[j] || !adj.has_edge(i, j) {
                continue;
            }
            net.arc(2 * i + 1, 2 * j, INF);
            net.arc(2 * j + 1, 2 * i, INF);
        }
    }
    for &i in sources {
        if !removed[i] {
            net.arc(s, 2 * i, INF);
        }
    }
    for &j in sinks {
        if !removed[j] {
            net.arc(2 * j + 1, t, INF);
        }
    }
    (net, s, t)
}

/// Max vertex-disjoint path count and the source-closest minimum cut,
/// with `I ∩ J` removed beforehand (the caller adds it back).
fn flow_and_source_cut<A: AdjacencyView>(
    adj: &A,
    sources: &[usize],
    sinks: &[usize],
    removed: &[bool],
) -> (usize, Vec<usize>) {
    let (mut net, s, t) = build_net(adj, sources, sinks, removed, false);
    let flow = net.max_flow(s, t) as usize;
    let reach = net.residual_reach(s);
    let cut: Vec<usize> = (0..adj.vertex_count())
        .filter(|&v| !removed[v] && reach[2 * v] && !reach[2 * v + 1])
        .collect();
    debug_assert_eq!(cut.len(), flow, "cut size must equal flow");
    (flow, cut)
}

/// Minimum vertex separator between `I` and `J`.
///
/// The size always equals the maximum number of vertex-disjoint I–J paths
/// (Menger), and the witness always contains `I ∩ J`. When a minimum
/// separator disjoint from `I \ J` exists, the witness is chosen among those
/// (so on the path 1–2–3 with I={1}, J={3} the witness is {2}, not {1}).
pub fn min_vertex_separator<A: AdjacencyView>(adj: &A, i_set: &[usize], j_set: &[usize]) -> Separator {
    let m = adj.vertex_count();
    let forced: Vec<usize> = i_set
        .iter()
        .copied()
        .filter(|v| j_set.contains(v))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut removed = vec![false; m];
    for &v in &forced {
        removed[v] = true;
    }
    let srcs: Vec<usize> = i_set.iter().copied().filter(|v| !removed[*v]).collect::<BTreeSet<_>>().into_iter().collect();
    let snks: Vec<usize> = j_set.iter().copied().filter(|v| !removed[*v]).collect::<BTreeSet<_>>().into_iter().collect();

    let (flow, left_cut) = flow_and_source_cut(adj, &srcs, &snks, &removed);

    // Prefer a witness avoiding I-vertices when one of minimum size exists.
    let (mut net2, s2, t2) = build_net(adj, &srcs, &snks, &removed, true);
    let flow2 = net2.max_flow(s2, t2) as usize;
    let cut = if flow2 == flow {
        let reach = net2.residual_reach(s2);
        (0..m)
            .filter(|&v| !removed[v] && reach[2 * v] && !reach[2 * v + 1])
            .collect()
    } else {
        left_cut
    };

    let mut witness: Vec<usize> = forced;
    witness.extend(cut);
    witness.sort_unstable();
    witness.dedup();
    Separator {
        size: witness.len(),
        witness,
    }
}

/// The minimum separator closest to `I`: the unique minimum separator that
/// separates `I` from every other minimum separator. `I ∩ J` is always
/// contained.
pub fn leftmost_min_separator<A: AdjacencyView>(adj: &A, i_set: &[usize], j_set: &[usize]) -> Vec<usize> {
    let m = adj.vertex_count();
    let forced: Vec<usize> = i_set
        .iter()
        .copied()
        .filter(|v| j_set.contains(v))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut removed = vec![false; m];
    for &v in &forced {
        removed[v] = true;
    }
    let srcs: Vec<usize> = i_set.iter().copied().filter(|v| !removed[*v]).collect::<BTreeSet<_>>().into_iter().collect();
    let snks: Vec<usize> = j_set.iter().copied().filter(|v| !removed[*v]).collect::<BTreeSet<_>>().into_iter().collect();
    let (_, cut) = flow_and_source_cut(adj, &srcs, &snks, &removed);
    let mut out = forced;
    out.extend(cut);
    out.sort_unstable();
    out.dedup();
    out
}

/// Mirror image of [`leftmost_min_separator`].
pub fn rightmost_min_separator<A: AdjacencyView>(adj: &A, i_set: &[usize], j_set: &[usize]) -> Vec<usize> {
    leftmost_min_separator(adj, j_set, i_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_seed;

    #[test]
    fn sample_null_rejects_zero() {
        assert!(sample_null(0, 1).is_err());
    }

    #[test]
    fn single_vertex_graph_has_no_pairs() {
        let g = sample_null(1, 99).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_null(4, 7).unwrap();
        let b = sample_null(4, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn null_density_is_half() {
        // mean edge density 0.5 ± 0.02 over seeds at n=200
        let n = 200;
        let trials = 60;
        let mut total = 0usize;
        for t in 0..trials {
            let g = sample_null(n, trial_seed(1000, t)).unwrap();
            total += g.edge_count();
        }
        let density = total as f64 / (trials as f64 * (n * (n - 1) / 2) as f64);
        assert!((density - 0.5).abs() < 0.02, "density {density}");
    }

    #[test]
    fn planted_full_omega_is_complete() {
        let s = sample_planted(5, &crate::rat(5, 1), 3).unwrap();
        assert!(s.membership.iter().all(|&m| m));
        assert_eq!(s.graph.edge_count(), 10);
    }

    #[test]
    fn planted_membership_marginals() {
        // E[sum x_i] = 5/2 ± 0.05 and Pr[x_1 = x_2 = 1] = 1/4 ± 0.02 at n=5
        let omega = crate::rat(5, 2);
        let trials = 40_000u64;
        let mut sum = 0usize;
        let mut both = 0usize;
        for t in 0..trials {
            let s = sample_planted(5, &omega, trial_seed(2024, t)).unwrap();
            sum += s.membership.iter().filter(|&&m| m).count();
            if s.membership[0] && s.membership[1] {
                both += 1;
            }
        }
        let mean = sum as f64 / trials as f64;
        let pr = both as f64 / trials as f64;
        assert!((mean - 2.5).abs() < 0.05, "mean {mean}");
        assert!((pr - 0.25).abs() < 0.02, "pr {pr}");
    }

    #[test]
    fn planted_clique_edges_forced() {
        let s = sample_planted(40, &crate::rat(10, 1), 5).unwrap();
        let members = s.clique_vertices();
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                assert!(s.graph.is_edge(i, j));
            }
        }
    }

    #[test]
    fn character_basics() {
        let g = sample_null(6, 11).unwrap();
        assert_eq!(character(&g, &EdgeSet::new()), 1);
        let complete = Graph::complete(4);
        let t = EdgeSet::from_pairs(&[(0, 1), (2, 3)]);
        assert_eq!(character(&complete, &t), 1);
        let mut g2 = Graph::complete(3);
        g2.set_edge(0, 1, false);
        assert_eq!(character(&g2, &EdgeSet::from_pairs(&[(0, 1)])), -1);
    }

    #[test]
    fn character_multiplies_over_disjoint_sets() {
        let g = sample_null(7, 13).unwrap();
        let t1 = EdgeSet::from_pairs(&[(0, 1), (2, 3)]);
        let t2 = EdgeSet::from_pairs(&[(4, 5), (1, 6)]);
        assert!(t1.is_disjoint(&t2));
        assert_eq!(
            character(&g, &t1.union(&t2)),
            character(&g, &t1) * character(&g, &t2)
        );
    }

    /// Fourier AND identity: sum over all T within S of chi_T is
    /// 2^(|S| choose 2) when S is a clique and 0 otherwise.
    #[test]
    fn fourier_and_identity() {
        for seed in 0..10u64 {
            let g = sample_null(6, trial_seed(31, seed)).unwrap();
            for s in [vec![0, 1], vec![0, 1, 2], vec![1, 3, 4, 5]] {
                let pairs: Vec<(usize, usize)> = (0..s.len())
                    .flat_map(|a| ((a + 1)..s.len()).map(move |b| (a, b)))
                    .map(|(a, b)| (s[a], s[b]))
                    .collect();
                let mut total = 0i64;
                for mask in 0u32..(1 << pairs.len()) {
                    let mut t = EdgeSet::new();
                    for (b, &(i, j)) in pairs.iter().enumerate() {
                        if mask >> b & 1 == 1 {
                            t.insert(i, j);
                        }
                    }
                    total += character(&g, &t) as i64;
                }
                let expect = if g.is_clique(&s) {
                    1i64 << (s.len() * (s.len() - 1) / 2)
                } else {
                    0
                };
                assert_eq!(total, expect, "S = {s:?}");
            }
        }
    }

    #[test]
    fn cliques_of_empty_graph() {
        let g = Graph::empty(3);
        let all: Vec<_> = enumerate_cliques(&g, &[], 3).collect();
        assert_eq!(all, vec![vec![], vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn cliques_of_complete_graph_are_all_subsets() {
        let g = Graph::complete(4);
        let all: Vec<_> = enumerate_cliques(&g, &[], 4).collect();
        assert_eq!(all.len(), 16);
    }

    #[test]
    fn cliques_match_bruteforce_scan() {
        let g = sample_null(8, 5150).unwrap();
        let base = vec![2usize];
        let mut expect: Vec<Vec<usize>> = Vec::new();
        for mask in 0u32..256 {
            let set: Vec<usize> = (0..8).filter(|&v| mask >> v & 1 == 1).collect();
            if set.contains(&2) && g.is_clique(&set) {
                expect.push(set);
            }
        }
        let mut got: Vec<Vec<usize>> = enumerate_cliques(&g, &base, 8).collect();
        got.sort();
        expect.sort();
        assert_eq!(got, expect);
    }

    #[test]
    fn non_clique_base_yields_empty_stream() {
        let mut g = Graph::complete(4);
        g.set_edge(0, 1, false);
        assert_eq!(enumerate_cliques(&g, &[0, 1], 4).count(), 0);
    }

    #[test]
    fn separator_on_path() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]);
        let sep = min_vertex_separator(&g, &[0], &[2]);
        assert_eq!(sep.size, 1);
        assert_eq!(sep.witness, vec![1]);
    }

    #[test]
    fn separator_with_equal_ends_is_forced() {
        let g = sample_null(6, 77).unwrap();
        let sep = min_vertex_separator(&g, &[1, 3], &[1, 3]);
        assert_eq!(sep.witness, vec![1, 3]);
        assert_eq!(sep.size, 2);
    }

    /// Exhaustive oracle: minimum over all vertex subsets that meet every
    /// I–J path (path existence checked by BFS after deleting the subset).
    fn bruteforce_min_separator(g: &Graph, i_set: &[usize], j_set: &[usize]) -> usize {
        let n = g.n();
        let mut best = usize::MAX;
        'outer: for mask in 0u32..(1 << n) {
            let removed: Vec<bool> = (0..n).map(|v| mask >> v & 1 == 1).collect();
            // every I-J path must be blocked
            for &v in i_set {
                if removed[v] {
                    continue;
                }
                // BFS from v avoiding removed
                let mut seen = vec![false; n];
                seen[v] = true;
                let mut queue = vec![v];
                while let Some(u) = queue.pop() {
                    if j_set.contains(&u) {
                        continue 'outer; // unblocked path found
                    }
                    for w in g.neighbors(u) {
                        if !removed[w] && !seen[w] {
                            seen[w] = true;
                            queue.push(w);
                        }
                    }
                }
            }
            best = best.min(mask.count_ones() as usize);
        }
        best
    }

    #[test]
    fn separator_matches_bruteforce_on_random_graphs() {
        for seed in 0..40u64 {
            let g = sample_null(8, trial_seed(400, seed)).unwrap();
            let mut r = rng_from(trial_seed(401, seed));
            let i_set: Vec<usize> = (0..8).filter(|_| r.random::<bool>()).take(3).collect();
            let j_set: Vec<usize> = (0..8).filter(|_| r.random::<bool>()).take(3).collect();
            if i_set.is_empty() || j_set.is_empty() {
                continue;
            }
            let sep = min_vertex_separator(&g, &i_set, &j_set);
            let brute = bruteforce_min_separator(&g, &i_set, &j_set);
            assert_eq!(sep.size, brute, "I={i_set:?} J={j_set:?}");
            // witness validity: removing it blocks every path
            let mut removed = vec![false; 8];
            for &v in &sep.witness {
                removed[v] = true;
            }
            for &v in &i_set {
                if removed[v] {
                    continue;
                }
                let mut seen = vec![false; 8];
                seen[v] = true;
                let mut queue = vec![v];
                while let Some(u) = queue.pop() {
                    assert!(!j_set.contains(&u), "witness fails to separate");
                    for w in g.neighbors(u) {
                        if !removed[w] && !seen[w] {
                            seen[w] = true;
                            queue.push(w);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn graph_text_roundtrip() {
        let g = sample_null(9, 12345).unwrap();
        let text = g.to_text();
        let back = Graph::from_text(&text).unwrap();
        assert_eq!(g, back);
    }
}
