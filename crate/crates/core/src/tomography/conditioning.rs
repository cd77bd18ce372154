use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_matrix, MeasurementMatrix, RecordDesign};
use crate::basis::OperatorBasis;
use crate::error::{invalid, Result};
use crate::model::ControlledSystem;
use crate::propagator::PropagationSpec;
use crate::pulse::{derive_seed, sample_pulse_set, PulseSamplingSpec};

/// Norms at or above this count as singular.
pub const SINGULAR_CAP: f64 = 1e12;

/// Spectral norm `‖ℳ⁻¹‖ = 1/σ_min`, or `None` when ℳ is singular or the norm
/// reaches [`SINGULAR_CAP`].
pub fn inverse_norm(matrix: &MeasurementMatrix) -> Option<f64> {
    if matrix.nrows() != matrix.ncols() {
        return None;
    }
    let s = matrix.singular_values();
    let smin = *s.last()?;
    if !(smin > 0.0) || s[0] * 1e-15 >= smin {
        return None;
    }
    let n = 1.0 / smin;
    (n < SINGULAR_CAP).then_some(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRow {
    pub duration_s: f64,
    pub mean_inv_norm: f64,
    pub std_inv_norm: f64,
    pub mean_log_inv_norm: f64,
    pub std_log_inv_norm: f64,
    /// Realizations with a finite norm; the statistics above cover only these.
    pub finite_count: usize,
    pub singular_count: usize,
}

impl ConditioningRow {
    pub fn std_error_log(&self) -> f64 {
        if self.finite_count == 0 {
            f64::NAN
        } else {
            self.std_log_inv_norm / (self.finite_count as f64).sqrt()
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Seed of realization `k` at duration index `i`.
fn realization_seed(base: u64, duration_index: usize, k: usize) -> u64 {
    derive_seed(derive_seed(base, duration_index as u64), k as u64)
}

/// Statistics of `‖ℳ⁻¹‖` over fresh pulse sets, with ℳ built at the final
/// time of each set.
pub fn conditioning_study(
    system: &ControlledSystem,
    pulse_spec: &PulseSamplingSpec,
    durations: &[f64],
    realizations: usize,
    basis: &OperatorBasis,
    step: &PropagationSpec,
) -> Result<Vec<ConditioningRow>> {
    if realizations == 0 {
        return Err(invalid("realizations must be at least 1"));
    }
    pulse_spec.validate()?;
    durations
        .iter()
        .enumerate()
        .map(|(i, &duration)| {
            let norms: Vec<Option<f64>> = (0..realizations)
                .into_par_iter()
                .map(|k| {
                    let spec = pulse_spec.with_seed(realization_seed(pulse_spec.seed, i, k));
                    let pulses = sample_pulse_set(&spec, duration, basis.len())?;
                    let design = RecordDesign::new(pulses, vec![duration], *step)?;
                    Ok(inverse_norm(&build_matrix(system, &design, basis, 0)?))
                })
                .collect::<Result<_>>()?;
            let finite: Vec<f64> = norms.iter().flatten().copied().collect();
            let logs: Vec<f64> = finite.iter().map(|v| v.ln()).collect();
            let (mean_inv_norm, std_inv_norm) = mean_std(&finite);
            let (mean_log_inv_norm, std_log_inv_norm) = mean_std(&logs);
            Ok(ConditioningRow {
                duration_s: duration,
                mean_inv_norm,
                std_inv_norm,
                mean_log_inv_norm,
                std_log_inv_norm,
                finite_count: finite.len(),
                singular_count: realizations - finite.len(),
            })
        })
        .collect()
}

/// CSV with columns `duration_s,mean_log_inv_norm,std,singular_count`.
pub fn conditioning_csv(rows: &[ConditioningRow], header_lines: &[String]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for line in header_lines {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("duration_s,mean_log_inv_norm,std,singular_count\n");
    for row in rows {
        let _ = writeln!(out, "{:e},{:.17e},{:.17e},{}", row.duration_s, row.mean_log_inv_norm, row.std_log_inv_norm, row.singular_count);
    }
    out
}
