//! Density matrices, Bloch vectors, and state metrics.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::OperatorBasis;
use crate::codec::MatrixJson;
use crate::error::{Error, Result};
use crate::linalg::{
    c, eigh, eigvalsh, ensure_square, from_spectrum, hermitian_deviation, hermitian_part, kron,
    r, sigma_y, sqrt_psd, ComplexMatrix, NEGATIVE_EIGENVALUE_TOL,
};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

/// A validated quantum state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        ensure_square(&matrix)?;
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let min = eigvalsh(&matrix)[0];
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(DensityMatrix { matrix })
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) nonzero vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let v = DVector::from_column_slice(psi);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument("state vector must be nonzero and finite".into()));
        }
        let v = v / r(norm);
        Self::new(&v * v.adjoint())
    }

    /// Computational basis state `|index⟩`.
    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidArgument(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut psi = vec![c(0.0, 0.0); dim];
        psi[index] = c(1.0, 0.0);
        Self::pure(&psi)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix { matrix: ComplexMatrix::identity(dim, dim) * r(1.0 / dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// `U ρ U†`.
    pub fn evolve(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.nrows() });
        }
        Self::new(hermitian_part(&(u * &self.matrix * u.adjoint())))
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::encode(&self.matrix)
    }

    pub fn from_json(json: &MatrixJson) -> Result<Self> {
        Self::new(json.decode()?)
    }
}

/// Euclidean-norm bound of the Bloch vector of any state, sqrt((d-1)/d),
/// attained by pure states.
pub fn pure_state_bound(dim: usize) -> f64 {
    ((dim as f64 - 1.0) / dim as f64).sqrt()
}

/// Real coefficients `r_m = Tr{ρ B_m}` in an orthonormal traceless basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    dim: usize,
    components: Vec<f64>,
}

impl BlochVector {
    /// Validated vector: correct length and within the pure-state bound.
    pub fn new(dim: usize, components: Vec<f64>) -> Result<Self> {
        let v = Self::raw(dim, components)?;
        let bound = pure_state_bound(dim);
        let norm = v.norm();
        if norm > bound + 1e-9 {
            return Err(Error::BlochNormExceeded { norm, bound });
        }
        Ok(v)
    }

    /// Length-checked vector that may lie outside the state space, e.g. an
    /// unconstrained linear-inversion estimate.
    pub fn raw(dim: usize, components: Vec<f64>) -> Result<Self> {
        if components.len() + 1 != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim - 1, found: components.len() });
        }
        if components.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(BlochVector { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_within_pure_bound(&self) -> bool {
        self.norm() <= pure_state_bound(self.dim) + 1e-9
    }
}

pub fn to_bloch(rho: &DensityMatrix, basis: &OperatorBasis) -> Result<BlochVector> {
    if rho.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: rho.dim() });
    }
    let (comps, imag) = basis.components(rho.matrix())?;
    if imag > 1e-10 {
        return Err(Error::NotHermitian(imag));
    }
    BlochVector::raw(rho.dim(), comps)
}

/// Output of [`from_bloch`]: always Hermitian with unit trace, positive only
/// when `is_physical` holds.
#[derive(Debug, Clone)]
pub struct BlochReconstruction {
    pub matrix: ComplexMatrix,
    pub min_eigenvalue: f64,
    pub is_physical: bool,
}

impl BlochReconstruction {
    pub fn into_density(self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.matrix)
    }
}

/// `𝟙/d + Σ r_m B_m`.
pub fn from_bloch(bloch: &BlochVector, basis: &OperatorBasis) -> Result<BlochReconstruction> {
    if bloch.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: bloch.dim() });
    }
    let d = basis.dim();
    let matrix = ComplexMatrix::identity(d, d) * r(1.0 / d as f64) + basis.combine(bloch.components())?;
    let min_eigenvalue = eigvalsh(&matrix)[0];
    Ok(BlochReconstruction { matrix, min_eigenvalue, is_physical: min_eigenvalue >= -PSD_TOL })
}

/// Uhlmann fidelity `(Tr sqrt(√ρ σ √ρ))²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    let s = sqrt_psd(rho.matrix())?;
    let inner = hermitian_part(&(&s * sigma.matrix() * &s));
    let root_trace: f64 = eigvalsh(&inner)
        .into_iter()
        .map(|v| {
            if v < -NEGATIVE_EIGENVALUE_TOL {
                Err(Error::NotPositive(v))
            } else {
                Ok(v.max(0.0).sqrt())
            }
        })
        .sum::<Result<f64>>()?;
    let f = root_trace * root_trace;
    if f > 1.0 + 1e-9 {
        log::warn!("fidelity {f} exceeds 1 beyond tolerance");
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Wootters concurrence of a two-qubit state.
///
/// The λ_i are the square roots of the eigenvalues of `ρ ρ̃` with
/// `ρ̃ = (σy⊗σy) ρ* (σy⊗σy)`. They are computed from the Hermitian
/// `√ρ ρ̃ √ρ`, which has the same spectrum.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: rho.dim() });
    }
    let yy = kron(&sigma_y(), &sigma_y());
    let tilde = &yy * rho.matrix().map(|z| z.conj()) * &yy;
    let s = sqrt_psd(rho.matrix())?;
    let mut lambdas: Vec<f64> = eigvalsh(&hermitian_part(&(&s * tilde * &s)))
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0))
}

/// Population of the +1 eigenspace of a ±1-valued observable given its
/// expectation value.
pub fn population_from_expectation(expectation: f64) -> f64 {
    (1.0 + expectation) / 2.0
}

/// Haar-random pure state from a normalized complex Gaussian vector.
pub fn random_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let psi: Vec<Complex64> = (0..dim)
        .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    DensityMatrix::pure(&psi).expect("gaussian vector is nonzero")
}

/// Full-rank random state `G G† / Tr{G G†}` with G a complex Ginibre matrix.
pub fn random_mixed_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let a = hermitian_part(&(&g * g.adjoint()));
    let tr = a.trace().re;
    DensityMatrix::new(a * r(1.0 / tr)).expect("Ginibre state is physical")
}

/// Haar-random unitary via QR of a Ginibre matrix with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..dim {
        let d = rr[(j, j)];
        let phase = if d.norm() > 0.0 { d / r(d.norm()) } else { c(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Nearest unit-trace positive semidefinite matrix in Frobenius norm.
///
/// The Hermitian part is diagonalized and its spectrum projected onto the
/// probability simplex: negative weight is clipped and the deficit shared
/// equally among the remaining eigenvalues until none is negative.
pub fn project_to_physical(matrix: &ComplexMatrix) -> Result<DensityMatrix> {
    ensure_square(matrix)?;
    let (values, vectors) = eigh(&hermitian_part(matrix));
    let projected = project_to_simplex(&values);
    DensityMatrix::new(hermitian_part(&from_spectrum(&projected, &vectors)))
}

/// Euclidean projection of `values` onto `{x ≥ 0, Σx = 1}`.
pub fn project_to_simplex(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    let mut active: Vec<bool> = vec![true; values.len()];
    loop {
        let count = active.iter().filter(|&&a| a).count();
        let sum: f64 = out.iter().zip(&active).filter(|(_, &a)| a).map(|(v, _)| v).sum();
        let shift = (1.0 - sum) / count as f64;
        for (v, &a) in out.iter_mut().zip(&active) {
            if a {
                *v += shift;
            }
        }
        let mut clipped = false;
        for (v, a) in out.iter_mut().zip(active.iter_mut()) {
            if *a && *v < 0.0 {
                *v = 0.0;
                *a = false;
                clipped = true;
            }
        }
        if !clipped {
            return out;
        }
    }
}
