//! The pseudo-calibrated pseudoexpectation and the Feige–Krauthgamer baseline.
//!
//! The calibrated moment of a vertex set `S` is
//!
//! ```text
//!   E~[x_S] = sum over T with |V(T) ∪ S| <= tau of (omega/n)^{|V(T) ∪ S|} chi_T(G)
//! ```
//!
//! Summing characters per support and applying inclusion–exclusion collapses
//! this to a sum over cliques `K ⊇ S` of `G`:
//!
//! ```text
//!   E~[x_S] = sum_{K clique ⊇ S, |K| <= tau} 2^(|K| choose 2) * w(|K|)
//!   w(k)    = sum_{m=k}^{tau} (-1)^{m-k} C(n-k, m-k) (omega/n)^m
//! ```
//!
//! The collapse is a derived identity, so [`evaluate_calibrated_bruteforce`]
//! keeps the literal double sum as an independent oracle; the two must agree
//! exactly wherever the oracle's guard admits.

use crate::error::{Error, Result};
use crate::graphcore::{enumerate_cliques, EdgeSet, Graph};
use crate::{binomial, Rat};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Parameters of the pseudoexpectation: `(n, omega, d, tau)` plus the
/// informational exponent `epsilon` with `omega ≈ n^(1/2 - epsilon)`.
#[derive(Clone, Debug)]
pub struct PEParams {
    pub n: usize,
    pub omega: Rat,
    pub d: usize,
    pub tau: usize,
    /// Exponent bookkeeping only; all arithmetic uses `omega`.
    pub epsilon: f64,
}

impl PEParams {
    pub fn new(n: usize, omega: Rat, d: usize, tau: usize) -> Result<PEParams> {
        if n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if d == 0 || d > tau || tau > n {
            return Err(Error::invalid(format!(
                "need 1 <= d <= tau <= n, got d={d} tau={tau} n={n}"
            )));
        }
        if !omega.is_positive() || omega >= Rat::from_integer(n.into()) {
            return Err(Error::invalid(format!("need 0 < omega < n, got {omega}")));
        }
        let w = omega.to_f64().unwrap_or(f64::NAN);
        let epsilon = 0.5 - w.ln() / (n as f64).ln();
        Ok(PEParams { n, omega, d, tau, epsilon })
    }

    /// `omega = n^alpha` rounded to the given denominator.
    pub fn with_exponent(n: usize, alpha: f64, denom: u32, d: usize, tau: usize) -> Result<PEParams> {
        let w = (n as f64).powf(alpha);
        let num = (w * denom as f64).round() as i64;
        if num <= 0 {
            return Err(Error::invalid("omega rounded to zero"));
        }
        PEParams::new(n, crate::rat(num, denom as i64), d, tau)
    }

    /// `omega / n` as an exact rational.
    pub fn theta(&self) -> Rat {
        &self.omega / Rat::from_integer(self.n.into())
    }

    /// Whether the asymptotic regime `C d / eps <= tau <= (eps/C) log n`
    /// holds for the given constant. Informational; desk-scale runs usually
    /// sit outside it.
    pub fn in_recommended_regime(&self, c: f64) -> bool {
        let eps = self.epsilon;
        if eps <= 0.0 {
            return false;
        }
        let lo = c * self.d as f64 / eps;
        let hi = (eps / c) * (self.n as f64).ln();
        lo <= self.tau as f64 && (self.tau as f64) <= hi
    }
}

// ---------------------------------------------------------------------------
// Truncated Fourier coefficient and clique weights
// ---------------------------------------------------------------------------

/// The Fourier coefficient of `E~[x_S]` at character `T`:
/// `(omega/n)^{|V(T) ∪ S|}` when `|V(T) ∪ S| <= tau`, else 0.
pub fn calibrated_coefficient(s: &[usize], t: &EdgeSet, p: &PEParams) -> Rat {
    let mut verts: Vec<usize> = t.support();
    for &v in s {
        if !verts.contains(&v) {
            verts.push(v);
        }
    }
    let size = verts.len();
    if size > p.tau {
        return Rat::zero();
    }
    pow_rat(&p.theta(), size)
}

pub(crate) fn pow_rat(x: &Rat, k: usize) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..k {
        acc *= x;
    }
    acc
}

/// Precomputed clique weights `w(k)` for `k = 0..=tau`, shared across all
/// moment evaluations at fixed `(n, tau, omega)`.
#[derive(Clone, Debug)]
pub struct CliqueWeights {
    pub w: Vec<Rat>,
    /// `2^(k choose 2) * w(k)`, the per-clique contribution.
    pub contrib: Vec<Rat>,
}

impl CliqueWeights {
    pub fn new(p: &PEParams) -> CliqueWeights {
        let theta = p.theta();
        let mut theta_pow = vec![Rat::one()];
        for _ in 0..p.tau {
            let last = theta_pow.last().unwrap().clone();
            theta_pow.push(last * &theta);
        }
        let mut w = Vec::with_capacity(p.tau + 1);
        for k in 0..=p.tau {
            let mut acc = Rat::zero();
            for m in k..=p.tau {
                let c = binomial((p.n - k) as u64, (m - k) as u64);
                let term = Rat::from_integer(c) * &theta_pow[m];
                if (m - k) % 2 == 0 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            w.push(acc);
        }
        let contrib = w
            .iter()
            .enumerate()
            .map(|(k, wk)| Rat::from_integer(BigInt::one() << (k * (k.saturating_sub(1)) / 2)) * wk)
            .collect();
        CliqueWeights { w, contrib }
    }
}

// ---------------------------------------------------------------------------
// Moment evaluation
// ---------------------------------------------------------------------------

/// `E~[x_S]` by the clique-sum closed form.
pub fn evaluate_calibrated(s: &[usize], g: &Graph, p: &PEParams) -> Result<Rat> {
    let weights = CliqueWeights::new(p);
    evaluate_calibrated_with(&weights, s, g, p)
}

/// Closed-form evaluation against a shared weight table.
pub fn evaluate_calibrated_with(weights: &CliqueWeights, s: &[usize], g: &Graph, p: &PEParams) -> Result<Rat> {
    if s.len() > p.tau {
        return Err(Error::invalid(format!(
            "|S| = {} exceeds truncation tau = {}",
            s.len(),
            p.tau
        )));
    }
    let mut total = Rat::zero();
    for k in enumerate_cliques(g, s, p.tau) {
        total += &weights.contrib[k.len()];
    }
    Ok(total)
}

/// Independent oracle for [`evaluate_calibrated`]: the literal double sum over
/// vertex supersets `W ⊇ S` and edge subsets on `W` whose support joins with
/// `S` to exactly `W`. Exponential; guarded to `tau <= 5`, `n <= 8`.
pub fn evaluate_calibrated_bruteforce(s: &[usize], g: &Graph, p: &PEParams) -> Result<Rat> {
    if p.tau > 5 || p.n > 8 {
        return Err(Error::guard(format!(
            "bruteforce moment needs tau <= 5 and n <= 8, got tau={} n={}",
            p.tau, p.n
        )));
    }
    if s.len() > p.tau {
        return Err(Error::invalid("|S| exceeds tau"));
    }
    let theta = p.theta();
    let n = p.n;
    let mut total = Rat::zero();
    // enumerate supersets W of S with |W| <= tau
    let extra: Vec<usize> = (0..n).filter(|v| !s.contains(v)).collect();
    for mask in 0u32..(1 << extra.len()) {
        let mut w: Vec<usize> = s.to_vec();
        for (b, &v) in extra.iter().enumerate() {
            if mask >> b & 1 == 1 {
                w.push(v);
            }
        }
        if w.len() > p.tau {
            continue;
        }
        w.sort_unstable();
        // all edge subsets on W whose support, together with S, covers W
        let pairs: Vec<(usize, usize)> = (0..w.len())
            .flat_map(|a| ((a + 1)..w.len()).map(move |b| (a, b)))
            .collect();
        let mut signed_count = BigInt::zero();
        for emask in 0u64..(1u64 << pairs.len()) {
            let mut covered: Vec<bool> = w.iter().map(|v| s.contains(v)).collect();
            let mut sign = 1i64;
            for (b, &(a, c)) in pairs.iter().enumerate() {
                if emask >> b & 1 == 1 {
                    covered[a] = true;
                    covered[c] = true;
                    if !g.is_edge(w[a], w[c]) {
                        sign = -sign;
                    }
                }
            }
            if covered.iter().all(|&c| c) {
                signed_count += sign;
            }
        }
        total += Rat::from_integer(signed_count) * pow_rat(&theta, w.len());
    }
    Ok(total)
}

/// Feige–Krauthgamer moment: `2^(|S| choose 2) (omega/n)^{|S|}` on cliques,
/// `0` otherwise.
pub fn evaluate_fk(s: &[usize], g: &Graph, p: &PEParams) -> Rat {
    if !g.is_clique(s) {
        return Rat::zero();
    }
    let k = s.len();
    Rat::from_integer(BigInt::one() << (k * k.saturating_sub(1) / 2)) * pow_rat(&p.theta(), k)
}

// ---------------------------------------------------------------------------
// Multilinear polynomials
// ---------------------------------------------------------------------------

/// Which pseudoexpectation evaluates moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Calibrated,
    Fk,
}

/// A multilinear polynomial: a finite map from vertex sets to rational
/// coefficients. Multilinearity (`x_i^2 = x_i`) is structural: keys are sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MultilinearPoly {
    terms: BTreeMap<Vec<u32>, Rat>,
}

impl MultilinearPoly {
    pub fn zero() -> MultilinearPoly {
        MultilinearPoly::default()
    }

    pub fn constant(c: Rat) -> MultilinearPoly {
        let mut p = MultilinearPoly::zero();
        p.add_term(&[], c);
        p
    }

    pub fn variable(i: usize) -> MultilinearPoly {
        let mut p = MultilinearPoly::zero();
        p.add_term(&[i], Rat::one());
        p
    }

    pub fn add_term(&mut self, set: &[usize], coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let mut key: Vec<u32> = set.iter().map(|&v| v as u32).collect();
        key.sort_unstable();
        key.dedup();
        let entry = self.terms.entry(key.clone()).or_insert_with(Rat::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add(&self, other: &MultilinearPoly) -> MultilinearPoly {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            let set: Vec<usize> = k.iter().map(|&v| v as usize).collect();
            out.add_term(&set, c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Rat) -> MultilinearPoly {
        let mut out = MultilinearPoly::zero();
        for (k, v) in &self.terms {
            let set: Vec<usize> = k.iter().map(|&x| x as usize).collect();
            out.add_term(&set, v * c);
        }
        out
    }

    /// Product with multilinear reduction: monomial sets take unions.
    pub fn mul(&self, other: &MultilinearPoly) -> MultilinearPoly {
        let mut out = MultilinearPoly::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let mut set: Vec<usize> = ka.iter().map(|&v| v as usize).collect();
                set.extend(kb.iter().map(|&v| v as usize));
                out.add_term(&set, ca * cb);
            }
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (Vec<usize>, &Rat)> {
        self.terms
            .iter()
            .map(|(k, c)| (k.iter().map(|&v| v as usize).collect(), c))
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|k| k.len()).max().unwrap_or(0)
    }

    /// `sum_i x_i` over all of `[n]`.
    pub fn sum_of_vertices(n: usize) -> MultilinearPoly {
        let mut p = MultilinearPoly::zero();
        for i in 0..n {
            p.add_term(&[i], Rat::one());
        }
        p
    }
}

/// Apply the pseudoexpectation to a multilinear polynomial by linearity.
pub fn pe_apply(f: &MultilinearPoly, g: &Graph, p: &PEParams, backend: Backend) -> Result<Rat> {
    if f.degree() > 2 * p.d {
        return Err(Error::invalid(format!(
            "polynomial degree {} exceeds 2d = {}",
            f.degree(),
            2 * p.d
        )));
    }
    let weights = CliqueWeights::new(p);
    let mut acc = Rat::zero();
    for (set, coeff) in f.terms() {
        let m = match backend {
            Backend::Calibrated => evaluate_calibrated_with(&weights, &set, g, p)?,
            Backend::Fk => evaluate_fk(&set, g, p),
        };
        acc += coeff * m;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Moment matrix
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixMode {
    Exact,
    Float,
}

/// Entries of the moment matrix, in one of the two numeric modes.
#[derive(Clone, Debug)]
pub enum MomentEntries {
    Exact(Vec<Rat>),
    Float(Vec<f64>),
}

/// The symmetric matrix `M(I, J) = E~[x_{I ∪ J}]` indexed by all subsets of
/// `[n]` with size at most `d`, ordered by size then lexicographically.
#[derive(Clone, Debug)]
pub struct MomentMatrix {
    pub index: Vec<Vec<u32>>,
    pub entries: MomentEntries,
    pub n: usize,
    pub d: usize,
}

/// All subsets of `[n]` with size `<= d`, ordered by size then lexicographic.
pub fn subsets_up_to(n: usize, d: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![vec![]];
    let mut layer: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for s in &layer {
            let start = s.last().map(|&v| v + 1).unwrap_or(0);
            for v in start..n as u32 {
                let mut t = s.clone();
                t.push(v);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn set_mask(s: &[u32]) -> u128 {
    s.iter().fold(0u128, |m, &v| m | (1u128 << v))
}

/// Clique-indexed moment table: `E~[x_U]` for every clique `U` of size up to
/// `max_subset`, accumulated by walking all cliques of size up to `tau` once.
pub struct MomentTable {
    values: HashMap<u128, Rat>,
    pub e1: Rat,
}

impl MomentTable {
    pub fn build(g: &Graph, p: &PEParams, max_subset: usize) -> Result<MomentTable> {
        if p.n > 128 {
            return Err(Error::guard("moment table requires n <= 128"));
        }
        let weights = CliqueWeights::new(p);
        let mut values: HashMap<u128, Rat> = HashMap::new();
        for k in enumerate_cliques(g, &[], p.tau) {
            let contrib = &weights.contrib[k.len()];
            let kl = k.len();
            for mask in 0u32..(1 << kl) {
                if (mask.count_ones() as usize) > max_subset {
                    continue;
                }
                let mut sub = 0u128;
                for (b, &v) in k.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        sub |= 1u128 << v;
                    }
                }
                *values.entry(sub).or_insert_with(Rat::zero) += contrib;
            }
        }
        let e1 = values.get(&0).cloned().unwrap_or_else(Rat::zero);
        Ok(MomentTable { values, e1 })
    }

    /// `E~[x_U]`; exactly zero when `U` is not a clique.
    pub fn moment(&self, u_mask: u128) -> Rat {
        self.values.get(&u_mask).cloned().unwrap_or_else(Rat::zero)
    }
}

/// Assemble the moment matrix. Requires `2d <= tau` so every `|I ∪ J|` stays
/// within the truncation.
pub fn build_moment_matrix(g: &Graph, p: &PEParams, backend: Backend, mode: MatrixMode) -> Result<MomentMatrix> {
    let index = subsets_up_to(p.n, p.d);
    let dim = index.len();
    if dim > 6200 {
        return Err(Error::guard(format!(
            "moment matrix dimension {dim} exceeds guard (6200)"
        )));
    }
    if 2 * p.d > p.tau {
        return Err(Error::invalid(format!(
            "need 2d <= tau so every union stays within truncation, got d={} tau={}",
            p.d, p.tau
        )));
    }
    let masks: Vec<u128> = index.iter().map(|s| set_mask(s)).collect();

    let table = match backend {
        Backend::Calibrated => Some(MomentTable::build(g, p, 2 * p.d)?),
        Backend::Fk => None,
    };

    let value_of = |u: u128| -> Rat {
        match backend {
            Backend::Calibrated => table.as_ref().unwrap().moment(u),
            Backend::Fk => {
                let set: Vec<usize> = (0..p.n).filter(|&v| u >> v & 1 == 1).collect();
                evaluate_fk(&set, g, p)
            }
        }
    };

    match mode {
        MatrixMode::Exact => {
            let mut entries = vec![Rat::zero(); dim * dim];
            for i in 0..dim {
                for j in i..dim {
                    let v = value_of(masks[i] | masks[j]);
                    entries[i * dim + j] = v.clone();
                    entries[j * dim + i] = v;
                }
            }
            Ok(MomentMatrix {
                index,
                entries: MomentEntries::Exact(entries),
                n: p.n,
                d: p.d,
            })
        }
        MatrixMode::Float => {
            // cache per-union f64 values to avoid repeated BigRational work
            let mut cache: HashMap<u128, f64> = HashMap::new();
            let mut entries = vec![0f64; dim * dim];
            for i in 0..dim {
                for j in i..dim {
                    let u = masks[i] | masks[j];
                    let v = *cache
                        .entry(u)
                        .or_insert_with(|| value_of(u).to_f64().unwrap_or(f64::NAN));
                    entries[i * dim + j] = v;
                    entries[j * dim + i] = v;
                }
            }
            Ok(MomentMatrix {
                index,
                entries: MomentEntries::Float(entries),
                n: p.n,
                d: p.d,
            })
        }
    }
}

impl MomentMatrix {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        let dim = self.dim();
        match &self.entries {
            MomentEntries::Float(v) => nalgebra::DMatrix::from_row_slice(dim, dim, v),
            MomentEntries::Exact(v) => {
                let data: Vec<f64> = v.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect();
                nalgebra::DMatrix::from_row_slice(dim, dim, &data)
            }
        }
    }

    pub fn exact_entry(&self, i: usize, j: usize) -> Option<&Rat> {
        match &self.entries {
            MomentEntries::Exact(v) => Some(&v[i * self.dim() + j]),
            MomentEntries::Float(_) => None,
        }
    }

    /// Dense textual serialization with index-set labels; rationals as `p/q`.
    pub fn to_text(&self) -> String {
        let dim = self.dim();
        let mut s = String::new();
        let _ = writeln!(s, "pcl-moment-matrix v1");
        let _ = writeln!(s, "n {} d {} dim {}", self.n, self.d, dim);
        for set in &self.index {
            let lbl: Vec<String> = set.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "index {{{}}}", lbl.join(","));
        }
        for i in 0..dim {
            let row: Vec<String> = (0..dim)
                .map(|j| match &self.entries {
                    MomentEntries::Exact(v) => {
                        let r = &v[i * dim + j];
                        format!("{}/{}", r.numer(), r.denom())
                    }
                    MomentEntries::Float(v) => format!("{}", v[i * dim + j]),
                })
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphcore::sample_null;
    use crate::rat;
    use crate::rng::trial_seed;

    fn params(n: usize, omega: Rat, d: usize, tau: usize) -> PEParams {
        PEParams::new(n, omega, d, tau).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let p = params(10, rat(3, 2), 2, 4);
        assert_eq!(calibrated_coefficient(&[], &EdgeSet::new(), &p), rat(1, 1));
        let theta = p.theta();
        assert_eq!(
            calibrated_coefficient(&[1, 2], &EdgeSet::new(), &p),
            &theta * &theta
        );
        let p2 = params(10, rat(3, 2), 2, 2);
        let t = EdgeSet::from_pairs(&[(2, 3)]);
        assert_eq!(calibrated_coefficient(&[1], &t, &p2), Rat::zero());
    }

    #[test]
    fn closed_form_matches_bruteforce() {
        // the derived clique-sum form must equal the literal double sum
        let p = params(6, rat(5, 3), 2, 4);
        for seed in 0..50u64 {
            let g = sample_null(6, trial_seed(88, seed)).unwrap();
            for s in [vec![], vec![0], vec![2, 5], vec![1, 3]] {
                let fast = evaluate_calibrated(&s, &g, &p).unwrap();
                let slow = evaluate_calibrated_bruteforce(&s, &g, &p).unwrap();
                assert_eq!(fast, slow, "seed {seed} S={s:?}");
            }
        }
    }

    #[test]
    fn bruteforce_singleton_tau_one() {
        // only K = {v} contributes and w(1) = omega/n
        let p = params(5, rat(2, 1), 1, 1);
        let g = sample_null(5, 4242).unwrap();
        let v = evaluate_calibrated_bruteforce(&[1], &g, &p).unwrap();
        assert_eq!(v, p.theta());
        assert_eq!(v, evaluate_calibrated(&[1], &g, &p).unwrap());
    }

    #[test]
    fn bruteforce_guard_refuses() {
        let p = params(20, rat(2, 1), 2, 4);
        let g = sample_null(20, 1).unwrap();
        assert!(matches!(
            evaluate_calibrated_bruteforce(&[0], &g, &p),
            Err(Error::GuardExceeded(_))
        ));
    }

    #[test]
    fn clique_vanishing_is_exact() {
        let p = params(8, rat(9, 4), 2, 4);
        for seed in 0..20u64 {
            let g = sample_null(8, trial_seed(91, seed)).unwrap();
            for i in 0..8 {
                for j in (i + 1)..8 {
                    if !g.is_edge(i, j) {
                        let v = evaluate_calibrated(&[i, j], &g, &p).unwrap();
                        assert!(v.is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn fk_examples() {
        let p = params(10, rat(3, 1), 2, 4);
        let g = sample_null(10, 5).unwrap();
        assert_eq!(evaluate_fk(&[], &g, &p), Rat::one());
        let theta = p.theta();
        for i in 0..10 {
            for j in (i + 1)..10 {
                let v = evaluate_fk(&[i, j], &g, &p);
                if g.is_edge(i, j) {
                    assert_eq!(v, rat(2, 1) * &theta * &theta);
                } else {
                    assert!(v.is_zero());
                }
            }
        }
    }

    #[test]
    fn fk_equals_calibrated_at_tau_equal_set_size() {
        // warm-up reduction: truncating at tau = |S| gives the FK value on cliques
        let g = sample_null(7, 31337).unwrap();
        for s in [vec![0usize, 1], vec![2, 4]] {
            if !g.is_clique(&s) {
                continue;
            }
            let p = params(7, rat(5, 2), 1, s.len());
            let cal = evaluate_calibrated(&s, &g, &p).unwrap();
            let fk = evaluate_fk(&s, &g, &p);
            assert_eq!(cal, fk);
        }
    }

    #[test]
    fn booleanity_through_multiplication() {
        let p = params(6, rat(2, 1), 2, 4);
        let g = sample_null(6, 7).unwrap();
        let xi = MultilinearPoly::variable(3);
        let sq = xi.mul(&xi);
        assert_eq!(sq, xi);
        assert_eq!(
            pe_apply(&sq, &g, &p, Backend::Calibrated).unwrap(),
            pe_apply(&xi, &g, &p, Backend::Calibrated).unwrap()
        );
    }

    #[test]
    fn pe_apply_linearity_and_degree_guard() {
        let p = params(6, rat(2, 1), 1, 3);
        let g = sample_null(6, 17).unwrap();
        let one = MultilinearPoly::constant(Rat::one());
        let e1 = pe_apply(&one, &g, &p, Backend::Calibrated).unwrap();
        assert_eq!(e1, evaluate_calibrated(&[], &g, &p).unwrap());
        // degree 3 > 2d = 2 must be rejected
        let mut f = MultilinearPoly::zero();
        f.add_term(&[0, 1, 2], Rat::one());
        assert!(pe_apply(&f, &g, &p, Backend::Calibrated).is_err());
    }

    #[test]
    fn exhaustive_calibration_small() {
        // mean over all graphs on n=4 of E~[x_S] equals (omega/n)^{|S|} exactly
        let n = 4;
        let p = params(n, rat(2, 1), 1, n);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        for s in [vec![], vec![1], vec![0, 2]] {
            let mut total = Rat::zero();
            for mask in 0u64..(1 << pairs.len()) {
                let mut g = Graph::empty(n);
                for (b, &(x, y)) in pairs.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        g.set_edge(x, y, true);
                    }
                }
                total += evaluate_calibrated(&s, &g, &p).unwrap();
            }
            let mean = total / Rat::from_integer(BigInt::one() << pairs.len());
            assert_eq!(mean, pow_rat(&p.theta(), s.len()), "S = {s:?}");
        }
    }

    #[test]
    fn moment_matrix_structure() {
        let n = 3;
        let p = params(n, rat(3, 2), 1, 2);
        let g = Graph::complete(n);
        let m = build_moment_matrix(&g, &p, Backend::Calibrated, MatrixMode::Exact).unwrap();
        assert_eq!(m.dim(), 4);
        assert_eq!(m.index[0], Vec::<u32>::new());
        // M(∅,∅) = E~[1], M({i},{j}) = E~[x_{ij}]
        let e1 = evaluate_calibrated(&[], &g, &p).unwrap();
        assert_eq!(m.exact_entry(0, 0).unwrap(), &e1);
        let e01 = evaluate_calibrated(&[0, 1], &g, &p).unwrap();
        assert_eq!(m.exact_entry(1, 2).unwrap(), &e01);
        assert_eq!(m.exact_entry(2, 1).unwrap(), &e01);
    }

    #[test]
    fn moment_matrix_nonclique_rows_vanish() {
        let p = params(6, rat(2, 1), 2, 4);
        let g = sample_null(6, 23).unwrap();
        let m = build_moment_matrix(&g, &p, Backend::Calibrated, MatrixMode::Exact).unwrap();
        for (i, set) in m.index.iter().enumerate() {
            let set_usize: Vec<usize> = set.iter().map(|&v| v as usize).collect();
            if !g.is_clique(&set_usize) {
                for j in 0..m.dim() {
                    assert!(m.exact_entry(i, j).unwrap().is_zero());
                }
            }
        }
    }

    #[test]
    fn moment_matrix_entry_depends_only_on_union() {
        let p = params(6, rat(2, 1), 2, 4);
        let g = sample_null(6, 29).unwrap();
        let m = build_moment_matrix(&g, &p, Backend::Calibrated, MatrixMode::Exact).unwrap();
        let pos = |s: &[u32]| m.index.iter().position(|t| t == s).unwrap();
        let a = m.exact_entry(pos(&[0, 1]), pos(&[2])).unwrap();
        let b = m.exact_entry(pos(&[0, 2]), pos(&[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn moment_table_matches_direct_evaluation() {
        let p = params(7, rat(5, 2), 2, 4);
        let g = sample_null(7, 3141).unwrap();
        let table = MomentTable::build(&g, &p, 4).unwrap();
        for s in [vec![], vec![3], vec![0, 1], vec![2, 4, 6]] {
            let mask = s.iter().fold(0u128, |m, &v| m | (1u128 << v));
            assert_eq!(
                table.moment(mask),
                evaluate_calibrated(&s, &g, &p).unwrap(),
                "S = {s:?}"
            );
        }
    }
}
