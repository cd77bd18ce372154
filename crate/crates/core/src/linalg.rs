//! Dense complex matrix helpers built on `nalgebra`.
//!
//! Everything here works on small square matrices (d ≤ 64). Matrix functions
//! of Hermitian arguments go through the eigendecomposition.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[r(0.0), r(1.0), r(1.0), r(0.0)])
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[r(0.0), c(0.0, -1.0), c(0.0, 1.0), r(0.0)])
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[r(1.0), r(0.0), r(0.0), r(-1.0)])
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(identity(1), |acc, f| kron(&acc, f))
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

/// Hilbert–Schmidt inner product `Tr{a† b}`.
pub fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `Tr{a b}` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest `|m_ij - conj(m_ji)|`.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn ensure_square(m: &ComplexMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(m.nrows())
}

/// Checks Hermiticity with tolerance `tol` relative to `max(1, max|m_ij|)`.
///
/// Hamiltonians are stored in rad/s, so entries of order 1e7 are routine and
/// an absolute tolerance would be meaningless for them.
pub fn ensure_hermitian(m: &ComplexMatrix, tol: f64) -> Result<usize> {
    let n = ensure_square(m)?;
    let dev = hermitian_deviation(m);
    if dev > tol * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(n)
}

/// Hermitian part `(m + m†)/2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * r(0.5)
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues (ascending) and the
/// unitary whose columns are the matching eigenvectors.
pub fn eigh(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(m.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    (values, vectors)
}

pub fn eigvalsh(m: &ComplexMatrix) -> Vec<f64> {
    eigh(m).0
}

/// `V diag(values) V†`.
pub fn from_spectrum(values: &[f64], vectors: &ComplexMatrix) -> ComplexMatrix {
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| r(v)),
    ));
    vectors * diag * vectors.adjoint()
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let (values, vectors) = eigh(m);
    let mapped: Vec<f64> = values.into_iter().map(f).collect();
    from_spectrum(&mapped, &vectors)
}

/// Eigenvalues in [-1e-9, 0) are treated as round-off and clamped to zero;
/// anything more negative is rejected.
pub const NEGATIVE_EIGENVALUE_TOL: f64 = 1e-9;

/// Square root of a positive semidefinite matrix.
pub fn sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (values, vectors) = eigh(m);
    if let Some(&min) = values.first() {
        if min < -NEGATIVE_EIGENVALUE_TOL {
            return Err(Error::NotPositive(min));
        }
    }
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    Ok(from_spectrum(&roots, &vectors))
}

/// `exp(-i·scale·h)` for Hermitian `h`, through the eigendecomposition.
pub fn expm_hermitian(h: &ComplexMatrix, scale: f64) -> Result<ComplexMatrix> {
    ensure_hermitian(h, 1e-10)?;
    Ok(expm_hermitian_unchecked(h, scale))
}

/// Same as [`expm_hermitian`] without the input validation. The caller
/// guarantees `h` is Hermitian.
pub fn expm_hermitian_unchecked(h: &ComplexMatrix, scale: f64) -> ComplexMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let n = h.nrows();
    let mut scaled = v.clone();
    for j in 0..n {
        let phase = Complex64::from_polar(1.0, -scale * eig.eigenvalues[j]);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    scaled * v.adjoint()
}

/// Largest deviation of `u†u` from the identity.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity(n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = ComplexMatrix::from_fn(n, n, |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        hermitian_part(&a)
    }

    /// Scaling-and-squaring Taylor series, independent of the eigensolver.
    fn expm_taylor(a: &ComplexMatrix) -> ComplexMatrix {
        let n = a.nrows();
        let norm = max_abs(a) * n as f64;
        let squarings = (norm.log2().ceil().max(0.0) as i32) + 4;
        let scaled = a * r(0.5f64.powi(squarings));
        let mut term = identity(n);
        let mut sum = identity(n);
        for k in 1..40 {
            term = &term * &scaled * r(1.0 / k as f64);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn kron_examples() {
        let zi = kron(&sigma_z(), &identity(2));
        let expected = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![
            r(1.0),
            r(1.0),
            r(-1.0),
            r(-1.0),
        ]));
        assert_eq!(zi, expected);
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));

        let xx = kron(&sigma_x(), &sigma_x());
        let up_up = DVector::from_vec(vec![r(1.0), r(0.0), r(0.0), r(0.0)]);
        let down_down = DVector::from_vec(vec![r(0.0), r(0.0), r(0.0), r(1.0)]);
        assert_eq!(xx * up_up, down_down);
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let u = expm_hermitian(&ComplexMatrix::zeros(3, 3), 17.0).unwrap();
        assert!(max_abs(&(u - identity(3))) < 1e-15);
    }

    #[test]
    fn expm_half_pi_sigma_x() {
        let u = expm_hermitian(&sigma_x(), PI / 2.0).unwrap();
        let expected = sigma_x() * c(0.0, -1.0);
        assert!(max_abs(&(u - expected)) < 1e-14);
    }

    #[test]
    fn expm_matches_taylor_oracle() {
        for seed in 0..5 {
            let h = random_hermitian(4, seed);
            let u = expm_hermitian(&h, 0.3).unwrap();
            let oracle = expm_taylor(&(&h * c(0.0, -0.3)));
            assert!(max_abs(&(u - oracle)) < 1e-10);
        }
    }

    #[test]
    fn expm_inverse_and_unitary() {
        for seed in 10..20 {
            let h = random_hermitian(5, seed);
            let u = expm_hermitian(&h, 1.7).unwrap();
            let v = expm_hermitian(&h, -1.7).unwrap();
            assert!(max_abs(&(&u * &v - identity(5))) < 1e-10);
            assert!(unitarity_defect(&u) < 1e-10);
        }
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[r(0.0), r(1.0), r(0.0), r(0.0)]);
        assert!(matches!(expm_hermitian(&m, 1.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn sqrt_psd_clamps_round_off() {
        let m = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![r(4.0), r(-1e-12)]));
        let s = sqrt_psd(&m).unwrap();
        assert!((s[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!(s[(1, 1)].norm() < 1e-14);
        let bad = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![r(1.0), r(-1e-6)]));
        assert!(matches!(sqrt_psd(&bad), Err(Error::NotPositive(_))));
    }

    #[test]
    fn eigh_is_sorted_and_reconstructs() {
        let h = random_hermitian(6, 3);
        let (vals, vecs) = eigh(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        assert!(max_abs(&(from_spectrum(&vals, &vecs) - &h)) < 1e-12);
    }
}
