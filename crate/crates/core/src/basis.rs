//! Hilbert–Schmidt orthonormal operator bases for traceless Hermitian
//! operators.

use crate::error::{Error, Result};
use crate::linalg::{identity, kron_all, r, sigma_x, sigma_y, sigma_z, trace_product, ComplexMatrix};

/// Largest number of qubits the dense representation supports (d = 64).
pub const MAX_QUBITS: u32 = 6;

/// A complete orthonormal basis `{B_m}` of the d²−1 dimensional real space of
/// traceless Hermitian d×d operators, with `Tr{B_i B_j} = δ_ij`.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    dim: usize,
    elements: Vec<ComplexMatrix>,
    labels: Vec<String>,
}

impl OperatorBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of elements, d²−1.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Real components `Tr{op B_m}` together with the largest discarded
    /// imaginary part.
    pub fn components(&self, op: &ComplexMatrix) -> Result<(Vec<f64>, f64)> {
        if op.nrows() != self.dim || op.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: op.nrows() });
        }
        let mut imag = 0.0_f64;
        let comps = self
            .elements
            .iter()
            .map(|b| {
                let z = trace_product(op, b);
                imag = imag.max(z.im.abs());
                z.re
            })
            .collect();
        Ok((comps, imag))
    }

    /// `Σ_m coeffs_m B_m`.
    pub fn combine(&self, coeffs: &[f64]) -> Result<ComplexMatrix> {
        if coeffs.len() != self.elements.len() {
            return Err(Error::DimensionMismatch {
                expected: self.elements.len(),
                found: coeffs.len(),
            });
        }
        let mut acc = ComplexMatrix::zeros(self.dim, self.dim);
        for (c, b) in coeffs.iter().zip(&self.elements) {
            acc += b * r(*c);
        }
        Ok(acc)
    }
}

/// Normalized Pauli strings on `num_qubits` qubits, identity string excluded.
///
/// Ordering is lexicographic in (I, x, y, z) per qubit with the first qubit
/// most significant, so for two qubits the order is Ix, Iy, Iz, xI, xx, ...,
/// zz. Each string is divided by sqrt(d) so that `Tr{B_m²} = 1`.
pub fn pauli_basis(num_qubits: u32) -> Result<OperatorBasis> {
    if num_qubits == 0 {
        return Err(Error::InvalidArgument("num_qubits must be at least 1".into()));
    }
    let count = 4usize
        .checked_pow(num_qubits)
        .ok_or(Error::BasisTooLarge { num_qubits })?;
    if num_qubits > MAX_QUBITS {
        return Err(Error::BasisTooLarge { num_qubits });
    }
    let dim = 1usize << num_qubits;
    let paulis = [identity(2), sigma_x(), sigma_y(), sigma_z()];
    let names = ['I', 'x', 'y', 'z'];
    let norm = r(1.0 / (dim as f64).sqrt());

    let n = num_qubits as usize;
    let mut elements = Vec::with_capacity(count - 1);
    let mut labels = Vec::with_capacity(count - 1);
    for index in 1..count {
        let digits: Vec<usize> = (0..n).map(|q| (index >> (2 * (n - 1 - q))) & 3).collect();
        elements.push(kron_all(digits.iter().map(|&k| &paulis[k])) * norm);
        labels.push(digits.iter().map(|&k| names[k]).collect());
    }
    Ok(OperatorBasis { dim, elements, labels })
}
