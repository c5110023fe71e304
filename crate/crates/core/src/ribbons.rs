//! Ribbons, leftmost/rightmost minimum vertex separators, canonical and
//! separating factorizations.
//!
//! A ribbon is a graph with two designated endpoint sets `I` and `J`; it is
//! the combinatorial carrier of one Fourier term of a moment-matrix entry.
//! Improper ribbons additionally track a set `Z` of degree-0 vertices that
//! arose from edge cancellation; keeping them is what makes the recursion's
//! coefficient function well-defined.
//!
//! Conventions used throughout (fixed once, tested against oracles):
//! - "reachable from `I` avoiding `S`" means a path whose every vertex,
//!   including the start, lies outside `S`; a vertex of `I \ S` is reachable
//!   via its trivial path.
//! - edges with both endpoints inside a separator go to the middle piece.

use crate::error::{Error, Result};
use crate::graphcore::{leftmost_min_separator, min_vertex_separator, AdjacencyView, EdgeSet};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Ribbon
// ---------------------------------------------------------------------------

/// An `(I, J)`-ribbon: endpoint sets, vertex set, edge set, and the tracked
/// degree-0 set `Z` (empty for proper ribbons).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Ribbon {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub verts: Vec<usize>,
    pub edges: EdgeSet,
    /// Tracked isolated vertices; always disjoint from edge supports and ends.
    pub isolated: Vec<usize>,
}

pub(crate) fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

impl Ribbon {
    /// Well-formedness: `V(W) ∪ I ∪ J ⊆ V`, `Z ⊆ V`, `Z` disjoint from edge
    /// supports and from the ends.
    pub fn new(
        left: Vec<usize>,
        right: Vec<usize>,
        verts: Vec<usize>,
        edges: EdgeSet,
        isolated: Vec<usize>,
    ) -> Result<Ribbon> {
        let left = sorted(left);
        let right = sorted(right);
        let verts = sorted(verts);
        let isolated = sorted(isolated);
        let vset: BTreeSet<usize> = verts.iter().copied().collect();
        for v in edges.support() {
            if !vset.contains(&v) {
                return Err(Error::invalid(format!("edge vertex {v} outside V")));
            }
        }
        for v in left.iter().chain(right.iter()) {
            if !vset.contains(v) {
                return Err(Error::invalid(format!("end vertex {v} outside V")));
            }
        }
        let support: BTreeSet<usize> = edges.support().into_iter().collect();
        for &z in &isolated {
            if !vset.contains(&z) {
                return Err(Error::invalid(format!("isolated vertex {z} outside V")));
            }
            if support.contains(&z) {
                return Err(Error::invalid(format!("isolated vertex {z} has an edge")));
            }
            if left.contains(&z) || right.contains(&z) {
                return Err(Error::invalid(format!("isolated vertex {z} lies in an end")));
            }
        }
        Ok(Ribbon { left, right, verts, edges, isolated })
    }

    /// Proper ribbon on exactly the vertices needed: `V = V(W) ∪ I ∪ J`.
    pub fn proper(left: Vec<usize>, right: Vec<usize>, edges: EdgeSet) -> Result<Ribbon> {
        let mut verts = edges.support();
        verts.extend(left.iter().copied());
        verts.extend(right.iter().copied());
        Ribbon::new(left, right, verts, edges, vec![])
    }

    pub fn size(&self) -> usize {
        self.verts.len()
    }

    /// Proper iff `Z = ∅` and every vertex outside `I ∪ J` has degree ≥ 1.
    pub fn is_proper(&self) -> bool {
        if !self.isolated.is_empty() {
            return false;
        }
        let support: BTreeSet<usize> = self.edges.support().into_iter().collect();
        self.verts
            .iter()
            .all(|v| support.contains(v) || self.left.contains(v) || self.right.contains(v))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&(a, b)| a == v || b == v).count()
    }

    /// Local adjacency view over `0..|V|` in sorted-vertex order.
    pub(crate) fn local(&self) -> (LocalGraph, BTreeMap<usize, usize>) {
        let map: BTreeMap<usize, usize> = self.verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut lg = LocalGraph::new(self.verts.len());
        for (a, b) in self.edges.iter() {
            lg.add_edge(map[&a], map[&b]);
        }
        (lg, map)
    }

    /// Serialization: `(I, J, V, Z, pair list)` with canonical set ordering.
    pub fn to_text(&self) -> String {
        let fmt = |s: &[usize]| {
            let v: Vec<String> = s.iter().map(|x| x.to_string()).collect();
            format!("{{{}}}", v.join(","))
        };
        let mut out = String::new();
        let _ = write!(
            out,
            "ribbon I={} J={} V={} Z={} W=[",
            fmt(&self.left),
            fmt(&self.right),
            fmt(&self.verts),
            fmt(&self.isolated)
        );
        let pairs: Vec<String> = self.edges.iter().map(|(a, b)| format!("({a},{b})")).collect();
        let _ = write!(out, "{}]", pairs.join(","));
        out
    }
}

/// Small local graph with bitmask rows; supports up to 64 vertices.
pub(crate) struct LocalGraph {
    m: usize,
    adj: Vec<u64>,
}

impl LocalGraph {
    pub fn new(m: usize) -> LocalGraph {
        assert!(m <= 64, "local graphs hold at most 64 vertices");
        LocalGraph { m, adj: vec![0; m] }
    }
    pub fn add_edge(&mut self, a: usize, b: usize) {
        self.adj[a] |= 1 << b;
        self.adj[b] |= 1 << a;
    }
}

impl AdjacencyView for LocalGraph {
    fn vertex_count(&self) -> usize {
        self.m
    }
    fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i] >> j & 1 == 1
    }
}

// ---------------------------------------------------------------------------
// Separators on ribbons
// ---------------------------------------------------------------------------

fn to_local(map: &BTreeMap<usize, usize>, s: &[usize]) -> Vec<usize> {
    s.iter().map(|v| map[v]).collect()
}

fn from_local(verts: &[usize], s: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = s.iter().map(|&i| verts[i]).collect();
    out.sort_unstable();
    out
}

/// The unique minimum separator closest to `I` (it separates `I` from every
/// minimum separator under the separation partial order).
pub fn leftmost_separator(r: &Ribbon) -> Vec<usize> {
    let (lg, map) = r.local();
    let cut = leftmost_min_separator(&lg, &to_local(&map, &r.left), &to_local(&map, &r.right));
    from_local(&r.verts, &cut)
}

/// Mirror image of [`leftmost_separator`].
pub fn rightmost_separator(r: &Ribbon) -> Vec<usize> {
    let (lg, map) = r.local();
    let cut = leftmost_min_separator(&lg, &to_local(&map, &r.right), &to_local(&map, &r.left));
    from_local(&r.verts, &cut)
}

/// Separator size = max vertex-disjoint `I`–`J` path count inside the ribbon.
pub fn separator_size(r: &Ribbon) -> usize {
    let (lg, map) = r.local();
    min_vertex_separator(&lg, &to_local(&map, &r.left), &to_local(&map, &r.right)).size
}

/// Vertices reachable from `starts` by paths avoiding `avoid` entirely
/// (the start vertex included: a start inside `avoid` reaches nothing).
fn reachable_avoiding(r: &Ribbon, starts: &[usize], avoid: &[usize]) -> BTreeSet<usize> {
    let avoid: BTreeSet<usize> = avoid.iter().copied().collect();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut queue: Vec<usize> = Vec::new();
    for &s in starts {
        if !avoid.contains(&s) && seen.insert(s) {
            queue.push(s);
        }
    }
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (a, b) in r.edges.iter() {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    while let Some(u) = queue.pop() {
        if let Some(nbrs) = adj.get(&u) {
            for &w in nbrs {
                if !avoid.contains(&w) && seen.insert(w) {
                    queue.push(w);
                }
            }
        }
    }
    seen
}

// ---------------------------------------------------------------------------
// Factor triples and the condition report
// ---------------------------------------------------------------------------

/// A triple of ribbons `(left, middle, right)` with the separator sets the
/// pieces are glued along.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorTriple {
    pub left: Ribbon,
    pub middle: Ribbon,
    pub right: Ribbon,
    pub s_l: Vec<usize>,
    pub s_r: Vec<usize>,
}

/// Which of the factorization conditions hold for a triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConditionReport {
    /// Left piece: `(I, S_l)`-ribbon whose unique minimum separator is `S_l`,
    /// all vertices reachable from `I` (or in `I ∪ S_l`), no edges inside `S_l`.
    pub c1: bool,
    /// Right piece, mirror image of `c1`.
    pub c2: bool,
    /// Middle: `(S_l, S_r)`-ribbon with leftmost separator `S_l`, rightmost
    /// `S_r`, and minimum degree 1 outside the ends (proper).
    pub c3: bool,
    /// Relaxed middle: any well-formed improper `(S_l, S_r)`-ribbon.
    pub c3star: bool,
    /// Disjointness: edge sets pairwise disjoint, vertex overlaps exactly the
    /// separators.
    pub c4: bool,
}

impl ConditionReport {
    pub fn all_strict(&self) -> bool {
        self.c1 && self.c2 && self.c3 && self.c4
    }
}

fn no_edges_inside(r: &Ribbon, s: &[usize]) -> bool {
    !r.edges.iter().any(|(a, b)| s.contains(&a) && s.contains(&b))
}

/// Condition 1 for a candidate left piece `(I, S_l)`.
pub fn condition_left(r: &Ribbon, s_l: &[usize]) -> bool {
    if r.right != sorted(s_l.to_vec()) || !r.isolated.is_empty() {
        return false;
    }
    if !no_edges_inside(r, s_l) {
        return false;
    }
    // every vertex is in I ∪ S_l or reachable from I avoiding S_l
    let reach = reachable_avoiding(r, &r.left, s_l);
    for &v in &r.verts {
        if !r.left.contains(&v) && !s_l.contains(&v) && !reach.contains(&v) {
            return false;
        }
    }
    leftmost_separator(r) == sorted(s_l.to_vec()) && rightmost_separator(r) == sorted(s_l.to_vec())
}

/// Condition 2 for a candidate right piece `(S_r, J)`: mirror of condition 1.
pub fn condition_right(r: &Ribbon, s_r: &[usize]) -> bool {
    let mirrored = Ribbon {
        left: r.right.clone(),
        right: r.left.clone(),
        verts: r.verts.clone(),
        edges: r.edges.clone(),
        isolated: r.isolated.clone(),
    };
    condition_left(&mirrored, s_r)
}

/// Condition 3 for a candidate middle `(S_l, S_r)`.
pub fn condition_middle(r: &Ribbon, s_l: &[usize], s_r: &[usize]) -> bool {
    if r.left != sorted(s_l.to_vec()) || r.right != sorted(s_r.to_vec()) {
        return false;
    }
    if !r.isolated.is_empty() {
        return false;
    }
    // min degree 1 outside the ends
    let support: BTreeSet<usize> = r.edges.support().into_iter().collect();
    for &v in &r.verts {
        if !r.left.contains(&v) && !r.right.contains(&v) && !support.contains(&v) {
            return false;
        }
    }
    leftmost_separator(r) == sorted(s_l.to_vec()) && rightmost_separator(r) == sorted(s_r.to_vec())
}

/// Evaluate all factorization conditions for a triple.
pub fn check_conditions(t: &FactorTriple) -> ConditionReport {
    let c1 = condition_left(&t.left, &t.s_l);
    let c2 = condition_right(&t.right, &t.s_r);
    let c3 = condition_middle(&t.middle, &t.s_l, &t.s_r);
    let c3star = t.middle.left == sorted(t.s_l.to_vec()) && t.middle.right == sorted(t.s_r.to_vec());

    let vl: BTreeSet<usize> = t.left.verts.iter().copied().collect();
    let vm: BTreeSet<usize> = t.middle.verts.iter().copied().collect();
    let vr: BTreeSet<usize> = t.right.verts.iter().copied().collect();
    let sl: BTreeSet<usize> = t.s_l.iter().copied().collect();
    let sr: BTreeSet<usize> = t.s_r.iter().copied().collect();
    let edges_disjoint = t.left.edges.is_disjoint(&t.middle.edges)
        && t.middle.edges.is_disjoint(&t.right.edges)
        && t.left.edges.is_disjoint(&t.right.edges);
    let c4 = edges_disjoint
        && vl.intersection(&vm).copied().collect::<BTreeSet<_>>() == sl
        && vm.intersection(&vr).copied().collect::<BTreeSet<_>>() == sr
        && vl.intersection(&vr).copied().collect::<BTreeSet<_>>()
            == sl.intersection(&sr).copied().collect::<BTreeSet<_>>();

    ConditionReport { c1, c2, c3, c3star, c4 }
}

// ---------------------------------------------------------------------------
// Canonical factorization
// ---------------------------------------------------------------------------

fn split_edges(
    edges: &EdgeSet,
    v_l: &BTreeSet<usize>,
    s_l: &[usize],
    v_r: &BTreeSet<usize>,
    s_r: &[usize],
) -> (EdgeSet, EdgeSet, EdgeSet) {
    let in_l = |v: usize| v_l.contains(&v);
    let in_lc = |v: usize| v_l.contains(&v) || s_l.contains(&v);
    let in_r = |v: usize| v_r.contains(&v);
    let in_rc = |v: usize| v_r.contains(&v) || s_r.contains(&v);
    let mut w_l = EdgeSet::new();
    let mut w_m = EdgeSet::new();
    let mut w_r = EdgeSet::new();
    for (a, b) in edges.iter() {
        if (in_l(a) && in_lc(b)) || (in_l(b) && in_lc(a)) {
            w_l.insert(a, b);
        } else if (in_r(a) && in_rc(b)) || (in_r(b) && in_rc(a)) {
            w_r.insert(a, b);
        } else {
            w_m.insert(a, b);
        }
    }
    (w_l, w_m, w_r)
}

/// Split a proper ribbon at its leftmost and rightmost separators.
///
/// Edges within `S_L` or within `S_R` land in the middle. The output
/// satisfies conditions 1–4.
pub fn canonical_factorization(r: &Ribbon) -> Result<FactorTriple> {
    if !r.is_proper() {
        return Err(Error::invalid("canonical factorization needs a proper ribbon"));
    }
    let s_l = leftmost_separator(r);
    let s_r = rightmost_separator(r);
    let v_l = reachable_avoiding(r, &r.left, &s_l);
    let v_r = reachable_avoiding(r, &r.right, &s_r);
    if v_l.intersection(&v_r).next().is_some() {
        return Err(Error::Invariant(
            "left and right reachable regions overlap".into(),
        ));
    }
    let (w_l, w_m, w_r) = split_edges(&r.edges, &v_l, &s_l, &v_r, &s_r);
    let v_m: Vec<usize> = r
        .verts
        .iter()
        .copied()
        .filter(|v| !v_l.contains(v) && !v_r.contains(v))
        .collect();

    let left = Ribbon::new(
        r.left.clone(),
        s_l.clone(),
        v_l.iter().copied().chain(s_l.iter().copied()).collect(),
        w_l,
        vec![],
    )?;
    let middle = Ribbon::new(s_l.clone(), s_r.clone(), v_m, w_m, vec![])?;
    let right = Ribbon::new(
        s_r.clone(),
        r.right.clone(),
        v_r.iter().copied().chain(s_r.iter().copied()).collect(),
        w_r,
        vec![],
    )?;
    Ok(FactorTriple { left, middle, right, s_l, s_r })
}

/// Recompose a triple into the `(I, J)`-ribbon with XOR'd edges and the union
/// of the vertex sets. Vertices isolated by cancellation become tracked.
pub fn recompose(t: &FactorTriple) -> Result<Ribbon> {
    let edges = t
        .left
        .edges
        .symmetric_difference(&t.middle.edges)
        .symmetric_difference(&t.right.edges);
    let mut verts: Vec<usize> = t.left.verts.clone();
    verts.extend(t.middle.verts.iter().copied());
    verts.extend(t.right.verts.iter().copied());
    let verts = sorted(verts);
    let support: BTreeSet<usize> = edges.support().into_iter().collect();
    let ends: BTreeSet<usize> = t.left.left.iter().chain(t.right.right.iter()).copied().collect();
    let isolated: Vec<usize> = verts
        .iter()
        .copied()
        .filter(|v| !support.contains(v) && !ends.contains(v))
        .collect();
    Ribbon::new(
        t.left.left.clone(),
        t.right.right.clone(),
        verts,
        edges,
        isolated,
    )
}

// ---------------------------------------------------------------------------
// Separating factorization
// ---------------------------------------------------------------------------

/// Vertices appearing in more than one of the triple's vertex sets.
pub fn repeated_vertices(t: &FactorTriple) -> Vec<usize> {
    let mut count: BTreeMap<usize, usize> = BTreeMap::new();
    let mut bump = |vs: &[usize]| {
        let set: BTreeSet<usize> = vs.iter().copied().collect();
        for v in set {
            *count.entry(v).or_insert(0) += 1;
        }
    };
    bump(&t.left.verts);
    bump(&t.middle.verts);
    bump(&t.right.verts);
    count.into_iter().filter(|&(_, c)| c > 1).map(|(v, _)| v).collect()
}

/// Re-split a non-disjoint triple at separators that shield `I` and `J` from
/// each other and from every repeated vertex. The new middle keeps newly
/// isolated vertices in `Z`.
pub fn separating_factorization(t: &FactorTriple) -> Result<FactorTriple> {
    let rep = check_conditions(t);
    if !(rep.c1 && rep.c3star && rep.c2) || rep.c4 {
        return Err(Error::invalid(
            "separating factorization needs conditions 1, 3*, 2 and a violation of 4",
        ));
    }
    separating_factorization_unchecked(t)
}

/// The re-split itself; the caller vouches for the precondition.
pub(crate) fn separating_factorization_unchecked(t: &FactorTriple) -> Result<FactorTriple> {
    let composite = recompose(t)?;
    let i_set = composite.left.clone();
    let j_set = composite.right.clone();
    let u = repeated_vertices(t);

    let (lg, map) = composite.local();
    let mut left_targets: Vec<usize> = j_set.clone();
    left_targets.extend(u.iter().copied());
    let left_targets = sorted(left_targets);
    let mut right_targets: Vec<usize> = i_set.clone();
    right_targets.extend(u.iter().copied());
    let right_targets = sorted(right_targets);

    let s_l = from_local(
        &composite.verts,
        &leftmost_min_separator(&lg, &to_local(&map, &i_set), &to_local(&map, &left_targets)),
    );
    let s_r = from_local(
        &composite.verts,
        &leftmost_min_separator(&lg, &to_local(&map, &j_set), &to_local(&map, &right_targets)),
    );

    let v_l = reachable_avoiding(&composite, &i_set, &s_l);
    let v_r = reachable_avoiding(&composite, &j_set, &s_r);
    if v_l.intersection(&v_r).next().is_some() {
        return Err(Error::Invariant(
            "separating factorization produced overlapping end regions".into(),
        ));
    }
    let (w_l, w_m, w_r) = split_edges(&composite.edges, &v_l, &s_l, &v_r, &s_r);

    let left = Ribbon::new(
        i_set,
        s_l.clone(),
        v_l.iter().copied().chain(s_l.iter().copied()).collect(),
        w_l,
        vec![],
    )?;
    let right = Ribbon::new(
        s_r.clone(),
        j_set,
        v_r.iter().copied().chain(s_r.iter().copied()).collect(),
        w_r,
        vec![],
    )?;

    let vm: Vec<usize> = composite
        .verts
        .iter()
        .copied()
        .filter(|v| !v_l.contains(v) && !v_r.contains(v))
        .chain(s_l.iter().copied())
        .chain(s_r.iter().copied())
        .collect();
    let vm = sorted(vm);
    let support: BTreeSet<usize> = w_m.support().into_iter().collect();
    let z: Vec<usize> = vm
        .iter()
        .copied()
        .filter(|v| !support.contains(v) && !s_l.contains(v) && !s_r.contains(v))
        .collect();
    let middle = Ribbon::new(s_l.clone(), s_r.clone(), vm, w_m, z)?;

    Ok(FactorTriple { left, middle, right, s_l, s_r })
}

/// Quantities compared by the separator/intersection tradeoff inequality.
#[derive(Clone, Copy, Debug)]
pub struct Tradeoff {
    /// `|S'_l| + |S'_r| - |S_l| - |S_r|`
    pub sep_increase: i64,
    /// `p - p'`: vertex-disjoint path counts between the middles' ends.
    pub lost_paths: i64,
    /// `|Z(R'_m) \ Z(R_m)|`
    pub new_isolated: i64,
    /// `r`: the number of intersections among the triple.
    pub intersections: i64,
}

fn middle_paths(r: &Ribbon) -> usize {
    let (lg, map) = r.local();
    min_vertex_separator(&lg, &to_local(&map, &r.left), &to_local(&map, &r.right)).size
}

/// Compute the tradeoff quantities for a triple and its separating
/// factorization.
pub fn tradeoff_quantities(t: &FactorTriple, t_primed: &FactorTriple) -> Tradeoff {
    let sums = |x: &FactorTriple| {
        (x.left.size() + x.middle.size() + x.right.size()) as i64
            - x.s_l.len() as i64
            - x.s_r.len() as i64
    };
    let sep_increase =
        (t_primed.s_l.len() + t_primed.s_r.len()) as i64 - (t.s_l.len() + t.s_r.len()) as i64;
    let p = middle_paths(&t.middle) as i64;
    let p_primed = middle_paths(&t_primed.middle) as i64;
    let z_old: BTreeSet<usize> = t.middle.isolated.iter().copied().collect();
    let new_isolated = t_primed
        .middle
        .isolated
        .iter()
        .filter(|z| !z_old.contains(z))
        .count() as i64;
    Tradeoff {
        sep_increase,
        lost_paths: p - p_primed,
        new_isolated,
        intersections: sums(t) - sums(t_primed),
    }
}

// ---------------------------------------------------------------------------
// Brute-force oracles (small ribbons)
// ---------------------------------------------------------------------------

/// All minimum separators of a ribbon by exhaustive subset scan. Guarded to
/// at most 16 vertices.
pub fn all_min_separators_bruteforce(r: &Ribbon) -> Result<Vec<Vec<usize>>> {
    let m = r.verts.len();
    if m > 16 {
        return Err(Error::guard("exhaustive separator scan needs |V| <= 16"));
    }
    let mut best = usize::MAX;
    let mut out: Vec<Vec<usize>> = Vec::new();
    for mask in 0u32..(1 << m) {
        let subset: Vec<usize> = (0..m).filter(|&b| mask >> b & 1 == 1).map(|b| r.verts[b]).collect();
        if separates(r, &r.left, &r.right, &subset) {
            let k = subset.len();
            if k < best {
                best = k;
                out.clear();
            }
            if k == best {
                out.push(subset);
            }
        }
    }
    Ok(out)
}

/// Does `q` meet every path between `a_set` and `b_set` (endpoints included)?
pub fn separates(r: &Ribbon, a_set: &[usize], b_set: &[usize], q: &[usize]) -> bool {
    // a shared endpoint is itself a path
    for v in a_set {
        if b_set.contains(v) && !q.contains(v) {
            return false;
        }
    }
    let reach = reachable_avoiding(r, a_set, q);
    !b_set.iter().any(|v| reach.contains(v))
}

/// Partial order on separators: `q1 <= q2` iff `q1` separates `I` from `q2`.
pub fn separator_leq(r: &Ribbon, q1: &[usize], q2: &[usize]) -> bool {
    separates(r, &r.left, q2, q1)
}

/// Leftmost separator by the partial-order oracle: the minimum separator
/// `L` with `L <= Q` for every minimum separator `Q`.
pub fn leftmost_separator_bruteforce(r: &Ribbon) -> Result<Vec<usize>> {
    let mins = all_min_separators_bruteforce(r)?;
    let mut found: Option<Vec<usize>> = None;
    for cand in &mins {
        if mins.iter().all(|q| separator_leq(r, cand, q)) {
            if let Some(prev) = &found {
                if prev != cand {
                    return Err(Error::Invariant("two distinct leftmost separators".into()));
                }
            }
            found = Some(cand.clone());
        }
    }
    found.ok_or_else(|| Error::Invariant("no leftmost separator found".into()))
}

// ---------------------------------------------------------------------------
// Random generators for property tests
// ---------------------------------------------------------------------------

/// Seeded random proper ribbon: vertex budget, edge density, and endpoint
/// size controls.
pub fn random_proper_ribbon<R: Rng>(
    rng: &mut R,
    universe: usize,
    max_verts: usize,
    max_end: usize,
    edge_prob: f64,
) -> Ribbon {
    loop {
        let nv = rng.random_range(1..=max_verts.min(universe));
        let mut verts: Vec<usize> = (0..universe).collect();
        for i in (1..verts.len()).rev() {
            let j = rng.random_range(0..=i);
            verts.swap(i, j);
        }
        verts.truncate(nv);
        verts.sort_unstable();
        let pick_end = |rng: &mut R, verts: &[usize]| -> Vec<usize> {
            let k = rng.random_range(0..=max_end.min(verts.len()));
            let mut vs = verts.to_vec();
            for i in (1..vs.len()).rev() {
                let j = rng.random_range(0..=i);
                vs.swap(i, j);
            }
            vs.truncate(k);
            vs
        };
        let left = pick_end(rng, &verts);
        let right = pick_end(rng, &verts);
        let mut edges = EdgeSet::new();
        for (a, &u) in verts.iter().enumerate() {
            for &v in &verts[a + 1..] {
                if rng.random::<f64>() < edge_prob {
                    edges.insert(u, v);
                }
            }
        }
        // keep only vertices that are ends or touched by an edge
        let support: BTreeSet<usize> = edges.support().into_iter().collect();
        let kept: Vec<usize> = verts
            .iter()
            .copied()
            .filter(|v| support.contains(v) || left.contains(v) || right.contains(v))
            .collect();
        let mut ef = EdgeSet::new();
        for (a, b) in edges.iter() {
            if kept.contains(&a) && kept.contains(&b) {
                ef.insert(a, b);
            }
        }
        if let Ok(r) = Ribbon::new(left, right, kept, ef, vec![]) {
            if r.size() >= 1 {
                return r;
            }
        }
    }
}

/// Seeded random triple satisfying conditions 1, 3*, 2 but not 4, built by
/// rejection over small universes. Returns `None` when the draw fails.
pub fn random_nondisjoint_triple<R: Rng>(rng: &mut R, universe: usize) -> Option<FactorTriple> {
    let pick_set = |rng: &mut R, max: usize| -> Vec<usize> {
        let k = rng.random_range(0..=max);
        let mut vs: Vec<usize> = (0..universe).collect();
        for i in (1..vs.len()).rev() {
            let j = rng.random_range(0..=i);
            vs.swap(i, j);
        }
        vs.truncate(k);
        vs.sort_unstable();
        vs
    };
    let s_l = pick_set(rng, 2);
    let s_r = pick_set(rng, 2);
    let i_set = pick_set(rng, 2);
    let j_set = pick_set(rng, 2);

    let left = random_condition_left(rng, universe, &i_set, &s_l, 40)?;
    let right_mirror = random_condition_left(rng, universe, &j_set, &s_r, 40)?;
    let right = Ribbon {
        left: right_mirror.right.clone(),
        right: right_mirror.left.clone(),
        verts: right_mirror.verts.clone(),
        edges: right_mirror.edges.clone(),
        isolated: vec![],
    };
    // middle: any improper (S_l, S_r)-ribbon
    let mut verts: Vec<usize> = s_l.iter().chain(s_r.iter()).copied().collect();
    for v in 0..universe {
        if rng.random::<f64>() < 0.3 {
            verts.push(v);
        }
    }
    let verts = sorted(verts);
    let mut edges = EdgeSet::new();
    for (a, &u) in verts.iter().enumerate() {
        for &v in &verts[a + 1..] {
            if rng.random::<f64>() < 0.4 {
                edges.insert(u, v);
            }
        }
    }
    let support: BTreeSet<usize> = edges.support().into_iter().collect();
    let z: Vec<usize> = verts
        .iter()
        .copied()
        .filter(|v| !support.contains(v) && !s_l.contains(v) && !s_r.contains(v))
        .collect();
    let middle = Ribbon::new(s_l.clone(), s_r.clone(), verts, edges, z).ok()?;

    let t = FactorTriple { left, middle, right, s_l, s_r };
    let rep = check_conditions(&t);
    if rep.c1 && rep.c2 && rep.c3star && !rep.c4 {
        Some(t)
    } else {
        None
    }
}

/// Rejection-sample a condition-1 piece for given `(I, S_l)`.
pub fn random_condition_left<R: Rng>(
    rng: &mut R,
    universe: usize,
    i_set: &[usize],
    s_l: &[usize],
    attempts: usize,
) -> Option<Ribbon> {
    for _ in 0..attempts {
        let mut verts: Vec<usize> = i_set.iter().chain(s_l.iter()).copied().collect();
        for v in 0..universe {
            if rng.random::<f64>() < 0.25 {
                verts.push(v);
            }
        }
        let verts = sorted(verts);
        let mut edges = EdgeSet::new();
        for (a, &u) in verts.iter().enumerate() {
            for &v in &verts[a + 1..] {
                if s_l.contains(&u) && s_l.contains(&v) {
                    continue;
                }
                if rng.random::<f64>() < 0.45 {
                    edges.insert(u, v);
                }
            }
        }
        // drop unreachable non-end vertices instead of rejecting outright
        let Ok(cand) = Ribbon::new(i_set.to_vec(), s_l.to_vec(), verts, edges, vec![]) else {
            continue;
        };
        let reach = reachable_avoiding(&cand, i_set, s_l);
        let kept: Vec<usize> = cand
            .verts
            .iter()
            .copied()
            .filter(|v| i_set.contains(v) || s_l.contains(v) || reach.contains(v))
            .collect();
        let mut ef = EdgeSet::new();
        for (a, b) in cand.edges.iter() {
            if kept.contains(&a) && kept.contains(&b) {
                ef.insert(a, b);
            }
        }
        let Ok(r) = Ribbon::new(i_set.to_vec(), s_l.to_vec(), kept, ef, vec![]) else {
            continue;
        };
        if condition_left(&r, s_l) {
            return Some(r);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from, trial_seed};

    fn ribbon(left: &[usize], right: &[usize], pairs: &[(usize, usize)]) -> Ribbon {
        Ribbon::proper(left.to_vec(), right.to_vec(), EdgeSet::from_pairs(pairs)).unwrap()
    }

    #[test]
    fn leftmost_equal_ends() {
        let r = ribbon(&[1, 2], &[1, 2], &[]);
        assert_eq!(leftmost_separator(&r), vec![1, 2]);
        assert_eq!(rightmost_separator(&r), vec![1, 2]);
    }

    /// Worked example: I = {a,b,c}, J = {c,x,y,z}, two disjoint paths {c} and
    /// {b,h,i,j,z}; leftmost is {c,i}, rightmost {c,j}. Vertices are labeled
    /// a,b,c,h,i,j,x,y,z as 0..8 and the graph realizes the stated structure.
    #[test]
    fn leftmost_rightmost_worked_example() {
        let (a, b, c, h, i, j, x, y, z) = (0, 1, 2, 3, 4, 5, 6, 7, 8);
        let edges = [(b, h), (a, h), (h, i), (b, i), (i, j), (j, z), (j, x)];
        let r = Ribbon::new(
            vec![a, b, c],
            vec![c, x, y, z],
            (0..9).collect(),
            EdgeSet::from_pairs(&edges),
            vec![],
        )
        .unwrap();
        assert_eq!(separator_size(&r), 2);
        assert_eq!(leftmost_separator(&r), vec![c, i]);
        assert_eq!(rightmost_separator(&r), vec![c, j]);
    }

    #[test]
    fn leftmost_matches_bruteforce_on_random_ribbons() {
        for seed in 0..300u64 {
            let mut rng = rng_from(trial_seed(700, seed));
            let r = random_proper_ribbon(&mut rng, 9, 9, 3, 0.35);
            let fast_l = leftmost_separator(&r);
            let fast_r = rightmost_separator(&r);
            let oracle_l = leftmost_separator_bruteforce(&r).unwrap();
            let mirrored = Ribbon {
                left: r.right.clone(),
                right: r.left.clone(),
                ..r.clone()
            };
            let oracle_r = leftmost_separator_bruteforce(&mirrored).unwrap();
            assert_eq!(fast_l, oracle_l, "ribbon {}", r.to_text());
            assert_eq!(fast_r, oracle_r, "ribbon {}", r.to_text());
        }
    }

    #[test]
    fn partial_order_laws_on_minimum_separators() {
        for seed in 0..120u64 {
            let mut rng = rng_from(trial_seed(701, seed));
            let r = random_proper_ribbon(&mut rng, 8, 8, 3, 0.4);
            let mins = all_min_separators_bruteforce(&r).unwrap();
            for q1 in &mins {
                assert!(separator_leq(&r, q1, q1));
                for q2 in &mins {
                    for q3 in &mins {
                        if separator_leq(&r, q1, q2) && separator_leq(&r, q2, q3) {
                            assert!(separator_leq(&r, q1, q3), "transitivity");
                        }
                    }
                    if separator_leq(&r, q1, q2) && separator_leq(&r, q2, q1) {
                        assert_eq!(q1, q2, "antisymmetry");
                    }
                }
            }
        }
    }

    #[test]
    fn canonical_factorization_single_edge() {
        let r = ribbon(&[1], &[2], &[(1, 2)]);
        let t = canonical_factorization(&r).unwrap();
        assert_eq!(t.s_l, vec![1]);
        assert_eq!(t.s_r, vec![2]);
        assert_eq!(t.middle.edges.len(), 1);
        assert!(t.left.edges.is_empty() && t.right.edges.is_empty());
        let rep = check_conditions(&t);
        assert!(rep.all_strict(), "{rep:?}");
    }

    #[test]
    fn canonical_factorization_trivial_equal_ends() {
        let r = ribbon(&[1, 4], &[1, 4], &[]);
        let t = canonical_factorization(&r).unwrap();
        assert_eq!(t.left.verts, vec![1, 4]);
        assert_eq!(t.middle.verts, vec![1, 4]);
        assert_eq!(t.right.verts, vec![1, 4]);
    }

    #[test]
    fn canonical_factorization_satisfies_conditions_and_counts() {
        for seed in 0..1000u64 {
            let mut rng = rng_from(trial_seed(702, seed));
            let r = random_proper_ribbon(&mut rng, 9, 9, 3, 0.35);
            let t = canonical_factorization(&r).unwrap();
            let rep = check_conditions(&t);
            assert!(rep.all_strict(), "ribbon {} report {rep:?}", r.to_text());
            // vertex-count identity
            assert_eq!(
                r.size(),
                t.left.size() + t.middle.size() + t.right.size() - t.s_l.len() - t.s_r.len(),
                "ribbon {}",
                r.to_text()
            );
        }
    }

    #[test]
    fn condition_triples_recompose_to_their_factorization() {
        for seed in 0..500u64 {
            let mut rng = rng_from(trial_seed(703, seed));
            let r = random_proper_ribbon(&mut rng, 9, 9, 3, 0.35);
            let t = canonical_factorization(&r).unwrap();
            let back = recompose(&t).unwrap();
            assert_eq!(back, r, "recomposition changed the ribbon");
            let t2 = canonical_factorization(&back).unwrap();
            assert_eq!(t2, t, "refactoring changed the triple");
        }
    }

    #[test]
    fn violating_triple_reported() {
        // shared interior vertex breaks condition 4
        let left = ribbon(&[1], &[2], &[(1, 2), (1, 5)]);
        let middle = ribbon(&[2], &[3], &[(2, 5), (5, 3)]);
        let right = ribbon(&[3], &[4], &[(3, 4)]);
        let t = FactorTriple {
            left,
            middle,
            right,
            s_l: vec![2],
            s_r: vec![3],
        };
        let rep = check_conditions(&t);
        assert!(!rep.c4);
    }

    #[test]
    fn separating_factorization_preserves_characters_and_grows_separators() {
        use crate::graphcore::{character, Graph};
        let mut produced = 0;
        for seed in 0..20000u64 {
            if produced >= 300 {
                break;
            }
            let mut rng = rng_from(trial_seed(704, seed));
            let Some(t) = random_nondisjoint_triple(&mut rng, 8) else {
                continue;
            };
            let tp = separating_factorization(&t).unwrap();
            produced += 1;

            // character preservation on random graphs over the 8-vertex support
            for gseed in 0..4u64 {
                let g = crate::graphcore::sample_null(8, trial_seed(705, gseed)).unwrap();
                let chi = |r: &Ribbon, g: &Graph| character(g, &r.edges);
                let lhs = chi(&t.left, &g) * chi(&t.middle, &g) * chi(&t.right, &g);
                let rhs = chi(&tp.left, &g) * chi(&tp.middle, &g) * chi(&tp.right, &g);
                assert_eq!(lhs, rhs);
            }

            let tr = tradeoff_quantities(&t, &tp);
            assert!(tr.sep_increase >= 1, "separators must grow: {tr:?}");
            assert!(
                tr.sep_increase + tr.lost_paths + tr.new_isolated <= tr.intersections,
                "tradeoff violated: {tr:?}"
            );
            // new isolated vertices are repeated vertices
            let u = repeated_vertices(&t);
            let z_old: BTreeSet<usize> = t.middle.isolated.iter().copied().collect();
            for z in &tp.middle.isolated {
                if !z_old.contains(z) {
                    assert!(u.contains(z), "newly isolated {z} not repeated");
                }
            }
        }
        assert!(produced >= 300, "only {produced} triples generated");
    }

    #[test]
    fn separating_factorization_output_is_disjoint() {
        let mut produced = 0;
        for seed in 0..8000u64 {
            if produced >= 150 {
                break;
            }
            let mut rng = rng_from(trial_seed(706, seed));
            let Some(t) = random_nondisjoint_triple(&mut rng, 7) else {
                continue;
            };
            let tp = separating_factorization(&t).unwrap();
            produced += 1;
            let rep = check_conditions(&tp);
            assert!(rep.c4, "separating factorization output must satisfy 4");
            assert!(rep.c3star, "{rep:?}");
        }
        assert!(produced >= 150);
    }

    #[test]
    fn ribbon_text_describes_sets() {
        let r = ribbon(&[0], &[2], &[(0, 1), (1, 2)]);
        let text = r.to_text();
        assert!(text.contains("I={0}") && text.contains("J={2}"));
    }
}
