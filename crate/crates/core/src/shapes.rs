//! Ribbon shapes, graphical matrices, and the shape-parameterized spectral
//! norm law.
//!
//! The shape of a ribbon is its order-preserving relabeling onto `[t]` with
//! the end sets marked; two ribbons related by an order-preserving vertex
//! relabeling have equal shapes. A graphical matrix sums, per entry `(I, J)`,
//! the characters of all `(I, J)`-ribbons realizing a given shape, where
//! "realizing" allows any end-respecting relabeling (so the single-edge shape
//! assembles to the full ±1 adjacency matrix).
//!
//! The norm law under test: the spectral norm of a shape's graphical matrix
//! scales like `n^((t - p - r)/2)` up to polylog factors, where `p` counts
//! vertex-disjoint `A\B -> B\A` paths and `r = |A ∩ B|`.

use crate::error::{Error, Result};
use crate::graphcore::{min_vertex_separator, sample_null, Graph};
use crate::ribbons::{LocalGraph, Ribbon};
use crate::rng::trial_seed;
use nalgebra::DMatrix;
use std::collections::BTreeSet;
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

/// Canonical form of a ribbon: vertex count `t`, edges over `[t]`, and the
/// distinguished position sets `A` (left) and `B` (right).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Shape {
    pub t: usize,
    pub edges: Vec<(usize, usize)>,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl Shape {
    pub fn new(t: usize, edges: &[(usize, usize)], a: &[usize], b: &[usize]) -> Result<Shape> {
        let mut es: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(x, y)| if x < y { (x, y) } else { (y, x) })
            .collect();
        es.sort_unstable();
        es.dedup();
        for &(x, y) in &es {
            if x == y || y >= t {
                return Err(Error::invalid(format!("bad shape edge ({x},{y})")));
            }
        }
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_unstable();
        a.dedup();
        b.sort_unstable();
        b.dedup();
        if a.iter().chain(b.iter()).any(|&v| v >= t) {
            return Err(Error::invalid("end position outside [t]"));
        }
        Ok(Shape { t, edges: es, a, b })
    }

    /// The single edge with `A = {0}`, `B = {1}`; assembles to the adjacency
    /// matrix. `(t, p, r) = (2, 1, 0)`.
    pub fn single_edge() -> Shape {
        Shape::new(2, &[(0, 1)], &[0], &[1]).unwrap()
    }

    /// The length-2 path `A - c - B`. `(t, p, r) = (3, 1, 0)`.
    pub fn path2() -> Shape {
        Shape::new(3, &[(0, 1), (1, 2)], &[0], &[2]).unwrap()
    }

    /// Two vertices with `A = B` and one edge: a diagonal-like shape with
    /// `(t, p, r) = (2, 0, 2)`.
    pub fn loop2() -> Shape {
        Shape::new(2, &[(0, 1)], &[0, 1], &[0, 1]).unwrap()
    }

    /// `r = |A ∩ B|`.
    pub fn r_overlap(&self) -> usize {
        self.a.iter().filter(|v| self.b.contains(v)).count()
    }

    /// `p`: maximum number of vertex-disjoint paths from `A \ B` to `B \ A`.
    pub fn p_paths(&self) -> usize {
        let a_only: Vec<usize> = self.a.iter().copied().filter(|v| !self.b.contains(v)).collect();
        let b_only: Vec<usize> = self.b.iter().copied().filter(|v| !self.a.contains(v)).collect();
        if a_only.is_empty() || b_only.is_empty() {
            return 0;
        }
        let mut lg = LocalGraph::new(self.t);
        for &(x, y) in &self.edges {
            lg.add_edge(x, y);
        }
        min_vertex_separator(&lg, &a_only, &b_only).size
    }

    /// Predicted log-log slope of the norm law: `(t - p - r) / 2`.
    pub fn predicted_slope(&self) -> f64 {
        (self.t as f64 - self.p_paths() as f64 - self.r_overlap() as f64) / 2.0
    }

    /// Smallest degree among positions outside `A ∪ B` (`None` if there are
    /// no such positions).
    pub fn min_degree_outside(&self) -> Option<usize> {
        let outside: Vec<usize> = (0..self.t)
            .filter(|v| !self.a.contains(v) && !self.b.contains(v))
            .collect();
        if outside.is_empty() {
            return None;
        }
        Some(
            outside
                .iter()
                .map(|&v| self.edges.iter().filter(|&&(x, y)| x == v || y == v).count())
                .min()
                .unwrap(),
        )
    }

    /// Serialization: `(t, A, B, edge list)`.
    pub fn to_text(&self) -> String {
        let fmt = |s: &[usize]| {
            let v: Vec<String> = s.iter().map(|x| x.to_string()).collect();
            format!("{{{}}}", v.join(","))
        };
        let mut out = String::new();
        let _ = write!(out, "shape t={} A={} B={} E=[", self.t, fmt(&self.a), fmt(&self.b));
        let pairs: Vec<String> = self.edges.iter().map(|(a, b)| format!("({a},{b})")).collect();
        let _ = write!(out, "{}]", pairs.join(","));
        out
    }
}

/// Canonical shape of a ribbon: relabel its sorted vertex list onto `[t]`.
/// Tracked isolated vertices become degree-0 positions.
pub fn shape_of(r: &Ribbon) -> Shape {
    let pos = |v: usize| r.verts.binary_search(&v).expect("vertex in V");
    let edges: Vec<(usize, usize)> = r.edges.iter().map(|(a, b)| (pos(a), pos(b))).collect();
    let a: Vec<usize> = r.left.iter().map(|&v| pos(v)).collect();
    let b: Vec<usize> = r.right.iter().map(|&v| pos(v)).collect();
    Shape::new(r.verts.len(), &edges, &a, &b).expect("ribbon produces a valid shape")
}

// ---------------------------------------------------------------------------
// Graphical matrices
// ---------------------------------------------------------------------------

/// Dense graphical matrix of one shape over a concrete graph, indexed by
/// `|A|`-subsets (rows) and `|B|`-subsets (columns) of `[n]`.
pub struct GraphicalMatrix {
    pub shape: Shape,
    pub n: usize,
    pub row_index: Vec<Vec<usize>>,
    pub col_index: Vec<Vec<usize>>,
    pub data: DMatrix<f64>,
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 {
        return vec![vec![]];
    }
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // advance lexicographically
        let mut i = k;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if cur[i] != i + n - k {
                cur[i] += 1;
                for j in (i + 1)..k {
                    cur[j] = cur[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            return out;
        }
    }
}

/// The entry value at `(I, J)`: sum of characters of all distinct ribbons on
/// any vertex superset realizing the shape with ends `I`, `J`.
fn entry_value(u: &Shape, g: &Graph, i_set: &[usize], j_set: &[usize]) -> f64 {
    let i_cap_j: Vec<usize> = i_set.iter().copied().filter(|v| j_set.contains(v)).collect();
    let a_cap_b: Vec<usize> = u.a.iter().copied().filter(|v| u.b.contains(v)).collect();
    if i_cap_j.len() != a_cap_b.len() {
        return 0.0;
    }
    let base: BTreeSet<usize> = i_set.iter().chain(j_set.iter()).copied().collect();
    let free_positions: Vec<usize> = (0..u.t)
        .filter(|v| !u.a.contains(v) && !u.b.contains(v))
        .collect();
    let f = free_positions.len();
    let candidates: Vec<usize> = (0..g.n()).filter(|v| !base.contains(v)).collect();
    if f > candidates.len() {
        return 0.0;
    }

    let a_only: Vec<usize> = u.a.iter().copied().filter(|v| !u.b.contains(v)).collect();
    let b_only: Vec<usize> = u.b.iter().copied().filter(|v| !u.a.contains(v)).collect();
    let i_only: Vec<usize> = i_set.iter().copied().filter(|v| !j_set.contains(v)).collect();
    let j_only: Vec<usize> = j_set.iter().copied().filter(|v| !i_set.contains(v)).collect();
    if a_only.len() != i_only.len() || b_only.len() != j_only.len() {
        return 0.0;
    }

    let mut total = 0f64;
    for combo in k_subsets(candidates.len(), f) {
        let free: Vec<usize> = combo.iter().map(|&ix| candidates[ix]).collect();
        // distinct realized edge sets over all end-respecting bijections
        let mut seen: BTreeSet<Vec<(usize, usize)>> = BTreeSet::new();
        let mut phi = vec![usize::MAX; u.t];
        let groups: Vec<(Vec<usize>, Vec<usize>)> = vec![
            (a_cap_b.clone(), i_cap_j.clone()),
            (a_only.clone(), i_only.clone()),
            (b_only.clone(), j_only.clone()),
            (free_positions.clone(), free),
        ];
        assign_groups(&groups, 0, &mut phi, &mut |phi| {
            let mut w: Vec<(usize, usize)> = u
                .edges
                .iter()
                .map(|&(x, y)| {
                    let (p, q) = (phi[x], phi[y]);
                    if p < q {
                        (p, q)
                    } else {
                        (q, p)
                    }
                })
                .collect();
            w.sort_unstable();
            seen.insert(w);
        });
        for w in &seen {
            let mut sign = 1f64;
            for &(p, q) in w {
                if !g.is_edge(p, q) {
                    sign = -sign;
                }
            }
            total += sign;
        }
    }
    total
}

/// Enumerate all maps sending each position group bijectively onto its image
/// group, invoking `emit` for every complete assignment.
fn assign_groups(
    groups: &[(Vec<usize>, Vec<usize>)],
    gi: usize,
    phi: &mut Vec<usize>,
    emit: &mut impl FnMut(&Vec<usize>),
) {
    if gi == groups.len() {
        emit(phi);
        return;
    }
    let (positions, images) = &groups[gi];
    let mut used = vec![false; images.len()];
    permute_into(positions, images, 0, &mut used, phi, &mut |phi| {
        assign_groups(groups, gi + 1, phi, emit)
    });
}

fn permute_into(
    positions: &[usize],
    images: &[usize],
    k: usize,
    used: &mut Vec<bool>,
    phi: &mut Vec<usize>,
    cont: &mut impl FnMut(&mut Vec<usize>),
) {
    if k == positions.len() {
        cont(phi);
        return;
    }
    for ix in 0..images.len() {
        if !used[ix] {
            used[ix] = true;
            phi[positions[k]] = images[ix];
            permute_into(positions, images, k + 1, used, phi, cont);
            used[ix] = false;
        }
    }
    phi[positions[k]] = usize::MAX;
}

/// Assemble the dense graphical matrix of `u` over `g`.
pub fn assemble_graphical(u: &Shape, g: &Graph) -> Result<GraphicalMatrix> {
    if u.t > 6 {
        return Err(Error::guard("dense assembly supports t <= 6"));
    }
    let n = g.n();
    let rows = k_subsets(n, u.a.len());
    let cols = k_subsets(n, u.b.len());
    let cells = rows.len().checked_mul(cols.len()).unwrap_or(usize::MAX);
    if cells > 20_000_000 {
        return Err(Error::guard(format!(
            "graphical matrix would hold {cells} cells; guard is 2e7"
        )));
    }
    let mut data = DMatrix::zeros(rows.len(), cols.len());
    for (ri, i_set) in rows.iter().enumerate() {
        for (ci, j_set) in cols.iter().enumerate() {
            data[(ri, ci)] = entry_value(u, g, i_set, j_set);
        }
    }
    Ok(GraphicalMatrix {
        shape: u.clone(),
        n,
        row_index: rows,
        col_index: cols,
        data,
    })
}

// ---------------------------------------------------------------------------
// Spectral norms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMethod {
    /// Full symmetric eigensolve of the Gram matrix.
    Eigensolve,
    /// Power iteration on `M^T M` to 1e-8 relative accuracy.
    Power,
    /// `(Tr (M^T M)^l)^(1/2l)`: sandwiches the norm from above within a
    /// factor `dim^(1/2l)`.
    Trace(usize),
}

/// Largest singular value of a rectangular matrix by the chosen method.
pub fn spectral_norm(m: &DMatrix<f64>, method: NormMethod) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entries".into()));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    match method {
        NormMethod::Eigensolve => {
            let top = gram
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(top.max(0.0).sqrt())
        }
        NormMethod::Power => {
            let dim = gram.nrows();
            let mut v = DMatrix::from_fn(dim, 1, |i, _| 1.0 + (i as f64 * 0.7).sin());
            v /= v.norm();
            let mut lambda = 0f64;
            for _ in 0..20_000 {
                let w = &gram * &v;
                let norm = w.norm();
                if norm == 0.0 {
                    return Ok(0.0);
                }
                let next = w / norm;
                let new_lambda = (next.transpose() * &gram * &next)[(0, 0)];
                let rel = (new_lambda - lambda).abs() / new_lambda.abs().max(1e-300);
                v = next;
                lambda = new_lambda;
                if rel < 1e-12 {
                    break;
                }
            }
            Ok(lambda.max(0.0).sqrt())
        }
        NormMethod::Trace(l) => {
            if l == 0 {
                return Err(Error::invalid("trace exponent must be positive"));
            }
            let mut pw = gram.clone();
            for _ in 1..l {
                pw = &pw * &gram;
            }
            Ok(pw.trace().max(0.0).powf(1.0 / (2 * l) as f64))
        }
    }
}

// ---------------------------------------------------------------------------
// Norm-scaling experiment
// ---------------------------------------------------------------------------

/// One measured point of the scaling experiment.
#[derive(Clone, Debug, serde::Serialize)]
pub struct NormPoint {
    pub n: usize,
    pub seed: u64,
    pub norm: f64,
}

/// Log-log regression summary of measured norms against `n`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct NormScaling {
    pub slope: f64,
    pub intercept: f64,
    pub predicted_slope: f64,
    pub points: Vec<NormPoint>,
    /// Medians per grid value, in grid order.
    pub medians: Vec<f64>,
}

/// Measure the graphical-matrix norm over a grid of `n` and regress
/// `log(median norm)` on `log n`.
pub fn norm_scaling_experiment(
    u: &Shape,
    n_grid: &[usize],
    seeds: usize,
    master_seed: u64,
    method: NormMethod,
) -> Result<NormScaling> {
    if n_grid.len() < 4 {
        return Err(Error::invalid("norm scaling needs a grid of at least 4 sizes"));
    }
    let mut distinct = n_grid.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("degenerate grid"));
    }
    let mut points = Vec::new();
    let mut medians = Vec::new();
    for (gi, &n) in n_grid.iter().enumerate() {
        let mut norms = Vec::new();
        for s in 0..seeds {
            let seed = trial_seed(master_seed, (gi * seeds + s) as u64);
            let g = sample_null(n, seed)?;
            let gm = assemble_graphical(u, &g)?;
            let norm = spectral_norm(&gm.data, method)?;
            norms.push(norm);
            points.push(NormPoint { n, seed, norm });
        }
        norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(norms[norms.len() / 2]);
    }
    if medians.iter().any(|&m| m <= 0.0) {
        return Err(Error::Numeric("zero median norm; cannot take logs".into()));
    }
    let xs: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|&m| m.ln()).collect();
    let (slope, intercept) = linear_fit(&xs, &ys)?;
    Ok(NormScaling {
        slope,
        intercept,
        predicted_slope: u.predicted_slope(),
        points,
        medians,
    })
}

/// Least-squares line through `(xs, ys)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let m = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::Numeric("degenerate regression grid".into()));
    }
    let slope = (m * sxy - sx * sy) / denom;
    Ok((slope, (sy - slope * sx) / m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphcore::EdgeSet;
    use crate::rng::rng_from;
    use rand::Rng;

    #[test]
    fn shape_of_examples() {
        let r = Ribbon::proper(vec![3], vec![7], EdgeSet::from_pairs(&[(3, 7)])).unwrap();
        assert_eq!(shape_of(&r), Shape::single_edge());
        let r2 = Ribbon::proper(vec![5], vec![5], EdgeSet::new()).unwrap();
        assert_eq!(shape_of(&r2), Shape::new(1, &[], &[0], &[0]).unwrap());
    }

    #[test]
    fn shape_invariant_under_order_preserving_relabeling() {
        let mut rng = rng_from(99);
        for _ in 0..100 {
            let r = crate::ribbons::random_proper_ribbon(&mut rng, 8, 8, 3, 0.4);
            // order-preserving injection v -> 2v + 3
            let f = |v: usize| 2 * v + 3;
            let mut edges = EdgeSet::new();
            for (a, b) in r.edges.iter() {
                edges.insert(f(a), f(b));
            }
            let shifted = Ribbon::new(
                r.left.iter().map(|&v| f(v)).collect(),
                r.right.iter().map(|&v| f(v)).collect(),
                r.verts.iter().map(|&v| f(v)).collect(),
                edges,
                r.isolated.iter().map(|&v| f(v)).collect(),
            )
            .unwrap();
            assert_eq!(shape_of(&r), shape_of(&shifted));
        }
    }

    #[test]
    fn shape_stats() {
        assert_eq!(Shape::single_edge().p_paths(), 1);
        assert_eq!(Shape::single_edge().r_overlap(), 0);
        assert_eq!(Shape::single_edge().predicted_slope(), 0.5);
        assert_eq!(Shape::path2().p_paths(), 1);
        assert_eq!(Shape::path2().predicted_slope(), 1.0);
        assert_eq!(Shape::loop2().r_overlap(), 2);
        assert_eq!(Shape::loop2().p_paths(), 0);
        assert_eq!(Shape::loop2().predicted_slope(), 0.0);
    }

    #[test]
    fn single_edge_assembles_to_adjacency() {
        let g = sample_null(9, 2718).unwrap();
        let gm = assemble_graphical(&Shape::single_edge(), &g).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let expect = if i == j { 0.0 } else { g.sign(i, j) as f64 };
                assert_eq!(gm.data[(i, j)], expect, "({i},{j})");
            }
        }
    }

    #[test]
    fn loop_shape_is_diagonal_of_signs() {
        let g = sample_null(7, 5).unwrap();
        let gm = assemble_graphical(&Shape::loop2(), &g).unwrap();
        for (ri, i_set) in gm.row_index.iter().enumerate() {
            for (ci, j_set) in gm.col_index.iter().enumerate() {
                let v = gm.data[(ri, ci)];
                if i_set == j_set {
                    assert_eq!(v, g.sign(i_set[0], i_set[1]) as f64);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    /// Oracle: enumerate every injection of the shape's positions into [n],
    /// keep those whose end images match, dedupe the realized ribbons, and
    /// sum characters.
    fn entry_oracle(u: &Shape, g: &Graph, i_set: &[usize], j_set: &[usize]) -> f64 {
        let n = g.n();
        let mut total = 0.0;
        let mut seen: BTreeSet<(Vec<usize>, Vec<(usize, usize)>)> = BTreeSet::new();
        let mut stack: Vec<Vec<usize>> = vec![vec![]];
        while let Some(phi) = stack.pop() {
            if phi.len() == u.t {
                let im_a: BTreeSet<usize> = u.a.iter().map(|&p| phi[p]).collect();
                let im_b: BTreeSet<usize> = u.b.iter().map(|&p| phi[p]).collect();
                if im_a != i_set.iter().copied().collect::<BTreeSet<_>>()
                    || im_b != j_set.iter().copied().collect::<BTreeSet<_>>()
                {
                    continue;
                }
                let verts: Vec<usize> = {
                    let mut v = phi.clone();
                    v.sort_unstable();
                    v
                };
                let mut w: Vec<(usize, usize)> = u
                    .edges
                    .iter()
                    .map(|&(x, y)| {
                        let (p, q) = (phi[x], phi[y]);
                        if p < q {
                            (p, q)
                        } else {
                            (q, p)
                        }
                    })
                    .collect();
                w.sort_unstable();
                if seen.insert((verts, w.clone())) {
                    let mut sign = 1.0;
                    for &(p, q) in &w {
                        if !g.is_edge(p, q) {
                            sign = -sign;
                        }
                    }
                    total += sign;
                }
                continue;
            }
            for v in 0..n {
                if !phi.contains(&v) {
                    let mut phi2 = phi.clone();
                    phi2.push(v);
                    stack.push(phi2);
                }
            }
        }
        total
    }

    #[test]
    fn assembly_matches_injection_oracle() {
        let g = sample_null(7, 424242).unwrap();
        let mut rng = rng_from(31);
        let shapes = vec![
            Shape::single_edge(),
            Shape::path2(),
            Shape::loop2(),
            Shape::new(3, &[(0, 1)], &[0], &[2]).unwrap(),
            Shape::new(4, &[(0, 1), (1, 2), (2, 3)], &[0], &[3]).unwrap(),
            Shape::new(3, &[(0, 1), (0, 2), (1, 2)], &[0, 1], &[2]).unwrap(),
            Shape::new(4, &[(0, 2), (1, 3)], &[0, 1], &[2, 3]).unwrap(),
            Shape::new(4, &[(0, 2), (2, 3)], &[0, 1], &[1, 3]).unwrap(),
        ];
        for u in &shapes {
            for _ in 0..4 {
                let pick = |rng: &mut rand_chacha::ChaCha8Rng, k: usize| -> Vec<usize> {
                    let mut vs: Vec<usize> = (0..7).collect();
                    for i in (1..vs.len()).rev() {
                        let j = rng.random_range(0..=i);
                        vs.swap(i, j);
                    }
                    vs.truncate(k);
                    vs.sort_unstable();
                    vs
                };
                let i_set = pick(&mut rng, u.a.len());
                let j_set = if u.a == u.b {
                    i_set.clone()
                } else {
                    pick(&mut rng, u.b.len())
                };
                let fast = entry_value(u, &g, &i_set, &j_set);
                let slow = entry_oracle(u, &g, &i_set, &j_set);
                assert_eq!(fast, slow, "shape {} I={i_set:?} J={j_set:?}", u.to_text());
            }
        }
    }

    #[test]
    fn norms_on_reference_matrices() {
        let id = DMatrix::<f64>::identity(10, 10);
        assert!((spectral_norm(&id, NormMethod::Eigensolve).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_norm(&id, NormMethod::Power).unwrap() - 1.0).abs() < 1e-8);
        let ones = DMatrix::<f64>::from_element(12, 12, 1.0);
        assert!((spectral_norm(&ones, NormMethod::Eigensolve).unwrap() - 12.0).abs() < 1e-9);
        assert!((spectral_norm(&ones, NormMethod::Power).unwrap() - 12.0).abs() < 1e-6);
    }

    #[test]
    fn trace_estimator_brackets_the_norm() {
        let g = sample_null(40, 808).unwrap();
        let gm = assemble_graphical(&Shape::single_edge(), &g).unwrap();
        let exact = spectral_norm(&gm.data, NormMethod::Eigensolve).unwrap();
        for l in [1usize, 2, 3] {
            let tr = spectral_norm(&gm.data, NormMethod::Trace(l)).unwrap();
            let dim = gm.data.nrows() as f64;
            // Tr((M^T M)^l) >= ||M||^(2l), so the estimator sits above the
            // norm and within a dim^(1/2l) factor of it.
            assert!(exact <= tr * (1.0 + 1e-9), "trace({l}) = {tr} < {exact}");
            assert!(
                tr <= exact * dim.powf(1.0 / (2 * l) as f64) * (1.0 + 1e-9),
                "bracket failed at l={l}: {tr} vs {exact}"
            );
        }
    }

    #[test]
    fn adjacency_norm_scales_like_sqrt_n() {
        // norm / sqrt(n) stays within [1, 3] for ±1 adjacency matrices
        for (seed, n) in [(11u64, 120usize), (12, 240)] {
            let g = sample_null(n, seed).unwrap();
            let gm = assemble_graphical(&Shape::single_edge(), &g).unwrap();
            let norm = spectral_norm(&gm.data, NormMethod::Power).unwrap();
            let ratio = norm / (n as f64).sqrt();
            assert!((1.0..3.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn power_matches_eigensolve() {
        let g = sample_null(30, 3).unwrap();
        let gm = assemble_graphical(&Shape::path2(), &g).unwrap();
        let a = spectral_norm(&gm.data, NormMethod::Eigensolve).unwrap();
        let b = spectral_norm(&gm.data, NormMethod::Power).unwrap();
        assert!((a - b).abs() / a < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn scaling_experiment_guards() {
        let u = Shape::single_edge();
        assert!(norm_scaling_experiment(&u, &[10, 20], 2, 1, NormMethod::Power).is_err());
    }

    #[test]
    fn nonfinite_rejected() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 0)] = f64::NAN;
        assert!(spectral_norm(&m, NormMethod::Eigensolve).is_err());
    }
}
