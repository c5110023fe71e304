//! Desk-scale laboratory for pseudo-calibrated planted-clique pseudoexpectations.
//!
//! The crate builds the degree-`d` pseudoexpectation whose Fourier coefficients
//! are `(omega/n)^{|V(T) ∪ S|}` truncated at `tau` vertices, together with the
//! combinatorial machinery used to analyze its moment matrix: ribbons, minimum
//! vertex separators, canonical and separating factorizations, ribbon shapes,
//! graphical matrices, and the exact matrix factorization
//! `M = L·Q0·L^T − xi0 − E0` with its recursion step.
//!
//! Everything is organized around two numeric modes: exact rational arithmetic
//! for identities that hold bit-exactly (clique vanishing, calibration, the
//! factorization identities) and `f64` for spectral measurements.
//!
//! Modules mirror the subsystems:
//! - [`graphcore`]: ±1 graphs, sampling, characters, cliques, vertex separators;
//! - [`pseudomoments`]: the calibrated and Feige–Krauthgamer pseudoexpectations
//!   and their moment matrices;
//! - [`ribbons`]: ribbons and their factorizations;
//! - [`shapes`]: ribbon shapes, graphical matrices, norm-scaling experiments;
//! - [`factorlab`]: brute-force verification of the factorization identities;
//! - [`verify`]: end-to-end constraint checks and calibration-failure
//!   experiments for the FK moments.

pub mod error;
pub mod factorlab;
pub mod graphcore;
pub mod pseudomoments;
pub mod ribbons;
pub mod rng;
pub mod shapes;
pub mod verify;

pub use error::{Error, Result};

/// Exact rational scalar used whenever an identity must hold bit-exactly.
pub type Rat = num_rational::BigRational;

/// Convenience constructor for small rationals.
pub fn rat(num: i64, den: i64) -> Rat {
    use num_bigint::BigInt;
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// `n choose k` as an exact big integer.
pub fn binomial(n: u64, k: u64) -> num_bigint::BigInt {
    use num_bigint::BigInt;
    use num_traits::One;
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}
