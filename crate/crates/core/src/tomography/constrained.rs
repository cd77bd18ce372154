//! Least squares over physical states, `ρ = T†T / Tr{T†T}` with `T` complex
//! lower triangular.
//!
//! Parameter layout (d² reals): the d real diagonal entries of `T`, then the
//! strictly lower entries row by row as `(re, im)` pairs.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::reconstruct_linear;
use super::{stack, MeasurementRecord, ReconstructionMethod, TomographyResult};
use crate::basis::OperatorBasis;
use crate::error::{invalid, Error, Result};
use crate::linalg::{c, hermitian_part, r, trace_product, ComplexMatrix};
use crate::state::{to_bloch, DensityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop once the gradient norm falls below this.
    pub gtol: f64,
    pub max_iters: usize,
    /// Weight of `𝟙/d` mixed into the starting state so that its factor is
    /// nonsingular.
    pub init_mixing: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { gtol: 1e-9, max_iters: 20_000, init_mixing: 1e-12 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gtol > 0.0) || self.max_iters == 0 || !(0.0..=1.0).contains(&self.init_mixing) || self.init_mixing == 0.0 {
            return Err(invalid("solver options need gtol > 0, max_iters ≥ 1 and 0 < init_mixing ≤ 1"));
        }
        Ok(())
    }
}

fn lower_index(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..d).flat_map(|i| (0..i).map(move |j| (i, j)))
}

fn factor_from_params(params: &[f64], d: usize) -> ComplexMatrix {
    let mut t = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        t[(i, i)] = r(params[i]);
    }
    for (k, (i, j)) in lower_index(d).enumerate() {
        t[(i, j)] = c(params[d + 2 * k], params[d + 2 * k + 1]);
    }
    t
}

fn params_from_factor(t: &ComplexMatrix) -> Vec<f64> {
    let d = t.nrows();
    let mut p: Vec<f64> = (0..d).map(|i| t[(i, i)].re).collect();
    for (i, j) in lower_index(d) {
        p.push(t[(i, j)].re);
        p.push(t[(i, j)].im);
    }
    p
}

/// Unit-trace state for a parameter vector of length d².
pub fn state_from_params(params: &[f64], dim: usize) -> Result<ComplexMatrix> {
    if params.len() != dim * dim {
        return Err(Error::DimensionMismatch { expected: dim * dim, found: params.len() });
    }
    let t = factor_from_params(params, dim);
    let s = hermitian_part(&(t.adjoint() * &t));
    let tau = s.trace().re;
    if !(tau > 0.0) {
        return Err(invalid("factor parameters must not all vanish"));
    }
    Ok(s / r(tau))
}

/// Lower-triangular factor parameters of a positive definite state.
///
/// With `J` the exchange matrix, `JρJ = LL†` gives `T = J L† J`, which is
/// lower triangular and satisfies `T†T = ρ`.
pub fn params_from_state(rho: &ComplexMatrix) -> Result<Vec<f64>> {
    let d = rho.nrows();
    let flipped = DMatrix::from_fn(d, d, |i, j| rho[(d - 1 - i, d - 1 - j)]);
    let chol = Cholesky::new(hermitian_part(&flipped)).ok_or(Error::NotPositive(0.0))?;
    let la = chol.l().adjoint();
    let t = DMatrix::from_fn(d, d, |i, j| la[(d - 1 - i, d - 1 - j)]);
    Ok(params_from_factor(&t))
}

struct Problem<'a> {
    a: DMatrix<f64>,
    y: DVector<f64>,
    basis: &'a OperatorBasis,
}

impl Problem<'_> {
    fn bloch(&self, rho: &ComplexMatrix) -> DVector<f64> {
        DVector::from_iterator(self.basis.len(), self.basis.elements().iter().map(|b| trace_product(rho, b).re))
    }

    fn objective(&self, params: &[f64]) -> Result<f64> {
        let rho = state_from_params(params, self.basis.dim())?;
        Ok((&self.a * self.bloch(&rho) - &self.y).norm_squared())
    }

    fn objective_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.basis.dim();
        let t = factor_from_params(params, d);
        let s = hermitian_part(&(t.adjoint() * &t));
        let tau = s.trace().re;
        if !(tau > 0.0) {
            return Err(invalid("factor parameters must not all vanish"));
        }
        let rho = &s / r(tau);
        let resid = &self.a * self.bloch(&rho) - &self.y;
        let g = self.a.tr_mul(&resid) * 2.0;
        let gmat = self.basis.combine(g.as_slice())?;
        let shift = trace_product(&gmat, &rho).re;
        let gprime = (gmat - ComplexMatrix::identity(d, d) * r(shift)) / r(tau);
        let w = (gprime * t.adjoint()).transpose();
        let mut grad: Vec<f64> = (0..d).map(|i| 2.0 * w[(i, i)].re).collect();
        for (i, j) in lower_index(d) {
            grad.push(2.0 * w[(i, j)].re);
            grad.push(-2.0 * w[(i, j)].im);
        }
        Ok((resid.norm_squared(), grad))
    }
}

/// Stacked objective `Σ_j ‖ỹ⁽ʲ⁾ − ℳ⁽ʲ⁾ r(T)‖²` and its gradient with respect
/// to the factor parameters.
pub fn objective_and_gradient(records: &[MeasurementRecord], basis: &OperatorBasis, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (a, y) = stack(records, basis.len())?;
    Problem { a, y: DVector::from_vec(y), basis }.objective_and_gradient(params)
}

const NONMONOTONE_MEMORY: usize = 10;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescale so that `Tr{T†T} = 1`; the state and objective are unchanged.
fn normalize(params: &mut [f64]) {
    let n = norm(params);
    if n > 0.0 {
        params.iter_mut().for_each(|p| *p /= n);
    }
}

pub fn reconstruct_constrained(records: &[MeasurementRecord], basis: &OperatorBasis, opts: &SolverOptions) -> Result<TomographyResult> {
    opts.validate()?;
    let d = basis.dim();
    let (a, y) = stack(records, basis.len())?;
    let problem = Problem { a, y: DVector::from_vec(y), basis };

    let mixed = ComplexMatrix::identity(d, d) * r(1.0 / d as f64);
    let start = match reconstruct_linear(records, basis) {
        Ok(lin) => lin.rho.matrix() * r(1.0 - opts.init_mixing) + &mixed * r(opts.init_mixing),
        Err(e) => {
            log::debug!("linear initialization unavailable ({e}), starting from the maximally mixed state");
            mixed.clone()
        }
    };
    let mut x = params_from_state(&start)?;
    normalize(&mut x);
    let (mut f, mut g) = problem.objective_and_gradient(&x)?;
    let mut step = 1.0 / norm(&g).max(1.0);
    let mut converged = false;
    let mut iterations = 0;
    // Nonmonotone acceptance against the worst of the recent objectives, which
    // lets Barzilai–Borwein steps through.
    let mut recent = std::collections::VecDeque::from([f]);

    while iterations < opts.max_iters {
        let gnorm = norm(&g);
        if gnorm < opts.gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let gg = gnorm * gnorm;
        let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
            let ft = problem.objective(&trial)?;
            if ft <= reference - 1e-4 * alpha * gg {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let Some(mut next) = accepted else {
            log::debug!("line search stalled at iteration {iterations}, objective {f:e}, gradient {gnorm:e}");
            break;
        };
        normalize(&mut next);
        let (fn_, gn) = problem.objective_and_gradient(&next)?;
        // Barzilai–Borwein step for the next iteration.
        let (mut sy, mut ss) = (0.0, 0.0);
        for k in 0..x.len() {
            let s = next[k] - x[k];
            sy += s * (gn[k] - g[k]);
            ss += s * s;
        }
        step = if sy > 0.0 { ss / sy } else { alpha * 2.0 };
        x = next;
        f = fn_;
        g = gn;
        if recent.len() == NONMONOTONE_MEMORY {
            recent.pop_front();
        }
        recent.push_back(f);
    }
    if !converged {
        log::warn!("constrained reconstruction stopped after {iterations} iterations with gradient norm {:e}", norm(&g));
    }

    let rho = DensityMatrix::new(state_from_params(&x, d)?)?;
    let bloch = to_bloch(&rho, basis)?;
    Ok(TomographyResult {
        rho,
        bloch,
        residual: f,
        iterations,
        method: ReconstructionMethod::FactorParametrized,
        converged,
    })
}
