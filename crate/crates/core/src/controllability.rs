//! Dynamical Lie algebra `Lie(iH₀, iH_c)` and the full-controllability test.
//!
//! The algebra is real, so anti-Hermitian matrices are handled as real vectors
//! of length 2d² (real parts then imaginary parts) under the Hilbert–Schmidt
//! inner product `Re Tr{A† B}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, commutator, ensure_hermitian, max_abs, ComplexMatrix, I};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LieClosureResult {
    pub dim: usize,
    pub dimension: usize,
    /// Orthonormal anti-Hermitian basis of the algebra.
    pub basis: Vec<ComplexMatrix>,
    pub is_fully_controllable: bool,
    /// Commutator generations needed before no new direction appeared.
    pub depth: usize,
}

/// Summary emitted by the `controllability` subcommand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ControllabilityReport {
    pub dimension: usize,
    pub full: bool,
    pub depth: usize,
    pub d: usize,
}

impl LieClosureResult {
    pub fn report(&self) -> ControllabilityReport {
        ControllabilityReport {
            dimension: self.dimension,
            full: self.is_fully_controllable,
            depth: self.depth,
            d: self.dim,
        }
    }
}

fn to_vec(m: &ComplexMatrix) -> Vec<f64> {
    m.iter().map(|z| z.re).chain(m.iter().map(|z| z.im)).collect()
}

fn from_vec(v: &[f64], dim: usize) -> ComplexMatrix {
    let n = dim * dim;
    // nalgebra storage is column-major, matching the order used by `to_vec`.
    ComplexMatrix::from_iterator(dim, dim, (0..n).map(|k| c(v[k], v[n + k])))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal real span with a scale-aware rank decision.
struct Span {
    vectors: Vec<Vec<f64>>,
    largest_norm: f64,
    tol: f64,
}

impl Span {
    /// Adds the component of `v` orthogonal to the span if its norm exceeds
    /// `tol` times the largest norm seen so far. Returns the new unit vector.
    fn try_add(&mut self, mut v: Vec<f64>) -> Option<Vec<f64>> {
        let raw = norm(&v);
        self.largest_norm = self.largest_norm.max(raw);
        if raw == 0.0 {
            return None;
        }
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for b in &self.vectors {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let residual = norm(&v);
        if residual <= self.tol * self.largest_norm {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= residual);
        self.vectors.push(v.clone());
        Some(v)
    }
}

pub fn lie_closure(h0: &ComplexMatrix, hc: &ComplexMatrix, tol: f64) -> Result<LieClosureResult> {
    lie_closure_of(&[h0.clone(), hc.clone()], tol)
}

/// Lie algebra generated by `i·H_k` for each Hermitian generator.
pub fn lie_closure_of(generators: &[ComplexMatrix], tol: f64) -> Result<LieClosureResult> {
    if generators.is_empty() {
        return Err(Error::InvalidArgument("at least one generator is required".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let dim = ensure_hermitian(&generators[0], 1e-10)?;
    for g in generators {
        let n = ensure_hermitian(g, 1e-10)?;
        if n != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: n });
        }
    }

    // Overall scale does not change the algebra; normalizing keeps nested
    // commutators of order one.
    let gens: Vec<ComplexMatrix> = generators
        .iter()
        .filter(|g| max_abs(g) > 0.0)
        .map(|g| {
            let n = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            g * (I / c(n, 0.0))
        })
        .collect();
    let traceless = gens.iter().all(|g| g.trace().norm() < 1e-12 * dim as f64);
    let full_dimension = if traceless { dim * dim - 1 } else { dim * dim };

    let mut span = Span { vectors: Vec::new(), largest_norm: 0.0, tol };
    let mut frontier: Vec<ComplexMatrix> = gens
        .iter()
        .filter_map(|g| span.try_add(to_vec(g)).map(|v| from_vec(&v, dim)))
        .collect();

    let max_depth = dim * dim;
    let mut depth = 0;
    while !frontier.is_empty() {
        if depth >= max_depth {
            return Err(Error::ClosureUnconverged(max_depth));
        }
        let mut next = Vec::new();
        for x in &frontier {
            for g in &gens {
                if let Some(v) = span.try_add(to_vec(&commutator(g, x))) {
                    next.push(from_vec(&v, dim));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        depth += 1;
        frontier = next;
    }

    let basis: Vec<ComplexMatrix> = span.vectors.iter().map(|v| from_vec(v, dim)).collect();
    let dimension = basis.len();
    Ok(LieClosureResult {
        dim,
        dimension,
        basis,
        is_fully_controllable: dimension >= full_dimension,
        depth,
    })
}
