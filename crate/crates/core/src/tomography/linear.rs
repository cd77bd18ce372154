use nalgebra::DVector;

use super::{residual_norm_sq, stack, MeasurementRecord, ReconstructionMethod, TomographyResult};
use crate::basis::OperatorBasis;
use crate::error::{Error, Result};
use crate::state::{from_bloch, project_to_physical, to_bloch, BlochVector};

/// Relative singular-value cutoff for the stacked least-squares system.
const RANK_TOL: f64 = 1e-10;

/// Unconstrained least-squares Bloch vector and the spectrum of the stacked
/// matrix it came from.
#[derive(Debug, Clone)]
pub struct LinearEstimate {
    pub bloch: BlochVector,
    /// Singular values of the stacked matrix, descending.
    pub singular_values: Vec<f64>,
    pub residual: f64,
}

pub fn linear_estimate(records: &[MeasurementRecord], basis: &OperatorBasis) -> Result<LinearEstimate> {
    let n = basis.len();
    let (a, y) = stack(records, n)?;
    if a.nrows() < n {
        return Err(Error::InformationallyIncomplete { rank: a.nrows(), columns: n, null_dim: n - a.nrows() });
    }
    let svd = a.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let cutoff = RANK_TOL * largest;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < n {
        return Err(Error::InformationallyIncomplete { rank, columns: n, null_dim: n - rank });
    }
    let r = svd
        .solve(&DVector::from_column_slice(&y), cutoff)
        .map_err(|e| crate::error::invalid(e.to_string()))?;
    let r: Vec<f64> = r.iter().copied().collect();
    let residual = residual_norm_sq(&a, &y, &r);
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|p, q| q.total_cmp(p));
    Ok(LinearEstimate { bloch: BlochVector::raw(basis.dim(), r)?, singular_values, residual })
}

/// Pseudoinverse solution followed by projection onto the state space.
pub fn reconstruct_linear(records: &[MeasurementRecord], basis: &OperatorBasis) -> Result<TomographyResult> {
    let estimate = linear_estimate(records, basis)?;
    let raw = from_bloch(&estimate.bloch, basis)?;
    let rho = project_to_physical(&raw.matrix)?;
    let bloch = to_bloch(&rho, basis)?;
    let (a, y) = stack(records, basis.len())?;
    let residual = residual_norm_sq(&a, &y, bloch.components());
    Ok(TomographyResult {
        rho,
        bloch,
        residual,
        iterations: 0,
        method: ReconstructionMethod::LinearInversionProjected,
        converged: true,
    })
}
