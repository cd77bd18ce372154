//! Measurement records `y = ℳ r` and state reconstruction.
//!
//! Row `n` of a measurement matrix holds the Bloch components of the
//! Heisenberg-picture observable `U_n† M U_n`, so that `y_n = Σ_m ℳ_{n,m} r_m`
//! is the expectation of `M` after the n-th evolution.

mod conditioning;
mod constrained;
mod linear;
mod protocol;

pub use conditioning::{conditioning_csv, conditioning_study, inverse_norm, ConditioningRow, SINGULAR_CAP};
pub use constrained::{
    objective_and_gradient, params_from_state, reconstruct_constrained, state_from_params, SolverOptions,
};
pub use linear::{linear_estimate, reconstruct_linear, LinearEstimate};
pub use protocol::{experiment_protocol, ProtocolOutcome, ProtocolSpec};

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::OperatorBasis;
use crate::error::{invalid, Error, Result};
use crate::linalg::{eigvalsh, max_abs, trace_product, ComplexMatrix};
use crate::model::ControlledSystem;
use crate::propagator::{heisenberg, propagate_many, PropagationSpec};
use crate::pulse::{derive_seed, rng_from_seed, FourierPulse};
use crate::state::{BlochVector, DensityMatrix};

/// How pulses and sample times map onto matrix rows and records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordLayout {
    /// One pulse per row; one record per sample time, shared by all pulses.
    PulsePerRow,
    /// A single pulse sampled at d²−1 times; one record.
    TimePerRow,
}

#[derive(Debug, Clone)]
pub struct RecordDesign {
    pulses: Vec<FourierPulse>,
    sample_times: Vec<f64>,
    step: PropagationSpec,
    layout: RecordLayout,
}

fn check_times(times: &[f64], pulses: &[FourierPulse]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("sample times must not be empty"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("sample times must be strictly increasing"));
    }
    if times[0] < 0.0 {
        return Err(invalid("sample times must be non-negative"));
    }
    let last = times[times.len() - 1];
    for p in pulses {
        if last > p.duration() * (1.0 + 1e-9) {
            return Err(invalid(format!("sample time {last} exceeds pulse duration {}", p.duration())));
        }
    }
    Ok(())
}

impl RecordDesign {
    /// Separate pulses, one per matrix row.
    pub fn new(pulses: Vec<FourierPulse>, sample_times: Vec<f64>, step: PropagationSpec) -> Result<Self> {
        if pulses.is_empty() {
            return Err(invalid("record design needs at least one pulse"));
        }
        step.validate()?;
        check_times(&sample_times, &pulses)?;
        Ok(RecordDesign { pulses, sample_times, step, layout: RecordLayout::PulsePerRow })
    }

    /// One long pulse measured at successive times, one time per row.
    pub fn single_pulse(pulse: FourierPulse, sample_times: Vec<f64>, step: PropagationSpec) -> Result<Self> {
        step.validate()?;
        check_times(&sample_times, std::slice::from_ref(&pulse))?;
        Ok(RecordDesign { pulses: vec![pulse], sample_times, step, layout: RecordLayout::TimePerRow })
    }

    pub fn pulses(&self) -> &[FourierPulse] {
        &self.pulses
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.sample_times
    }

    pub fn step(&self) -> &PropagationSpec {
        &self.step
    }

    pub fn layout(&self) -> RecordLayout {
        self.layout
    }

    pub fn num_rows(&self) -> usize {
        match self.layout {
            RecordLayout::PulsePerRow => self.pulses.len(),
            RecordLayout::TimePerRow => self.sample_times.len(),
        }
    }

    pub fn num_records(&self) -> usize {
        match self.layout {
            RecordLayout::PulsePerRow => self.sample_times.len(),
            RecordLayout::TimePerRow => 1,
        }
    }

    fn check_against(&self, system: &ControlledSystem, basis: &OperatorBasis) -> Result<()> {
        if system.dim() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: system.dim() });
        }
        if self.num_rows() != basis.len() {
            return Err(invalid(format!(
                "record design has {} rows, the d = {} system needs {}",
                self.num_rows(),
                basis.dim(),
                basis.len()
            )));
        }
        Ok(())
    }

    fn check_index(&self, sample_index: usize) -> Result<()> {
        if sample_index >= self.num_records() {
            return Err(invalid(format!(
                "sample index {sample_index} out of range for {} records",
                self.num_records()
            )));
        }
        Ok(())
    }

    /// Heisenberg observables indexed `[record][row]`, for the requested
    /// records only (`None` = all).
    fn heisenberg_observables(&self, system: &ControlledSystem, only: Option<usize>) -> Result<Vec<Vec<ComplexMatrix>>> {
        let m = system.observable();
        match self.layout {
            RecordLayout::PulsePerRow => {
                let times: Vec<f64> = match only {
                    Some(j) => vec![self.sample_times[j]],
                    None => self.sample_times.clone(),
                };
                let per_pulse: Vec<Vec<ComplexMatrix>> = self
                    .pulses
                    .par_iter()
                    .map(|p| {
                        propagate_many(system, p, &times, &self.step)
                            .map(|us| us.iter().map(|u| heisenberg(m, u)).collect())
                    })
                    .collect::<Result<_>>()?;
                Ok((0..times.len())
                    .map(|j| per_pulse.iter().map(|ops| ops[j].clone()).collect())
                    .collect())
            }
            RecordLayout::TimePerRow => {
                let us = propagate_many(system, &self.pulses[0], &self.sample_times, &self.step)?;
                Ok(vec![us.iter().map(|u| heisenberg(m, u)).collect()])
            }
        }
    }
}

/// Real (d²−1)×(d²−1) matrix ℳ for one sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    entries: DMatrix<f64>,
    sample_index: usize,
}

/// Largest tolerated imaginary residue of `Tr{U†MU B_m}`.
const IMAG_TOL: f64 = 1e-9;

impl MeasurementMatrix {
    pub fn new(entries: DMatrix<f64>, sample_index: usize) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(MeasurementMatrix { entries, sample_index })
    }

    fn from_observables(ops: &[ComplexMatrix], basis: &OperatorBasis, observable: &ComplexMatrix, sample_index: usize) -> Result<Self> {
        let n = basis.len();
        let mut entries = DMatrix::zeros(ops.len(), n);
        // |Tr{U†MU B}| ≤ ‖U†MU‖_HS ‖B‖_HS = sqrt(Tr M²).
        let bound = trace_product(observable, observable).re.sqrt() * (1.0 + 1e-9);
        for (row, op) in ops.iter().enumerate() {
            let (comps, imag) = basis.components(op)?;
            if imag > IMAG_TOL * max_abs(observable).max(1.0) {
                return Err(Error::NotHermitian(imag));
            }
            for (col, v) in comps.into_iter().enumerate() {
                debug_assert!(v.abs() <= bound, "entry {v} exceeds bound {bound}");
                entries[(row, col)] = v;
            }
        }
        Ok(MeasurementMatrix { entries, sample_index })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn sample_index(&self) -> usize {
        self.sample_index
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.entries.clone().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// `ℳ r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let v = &self.entries * nalgebra::DVector::from_column_slice(r);
        v.iter().copied().collect()
    }
}

/// Rows of ℳ for one sample index.
pub fn build_matrix(
    system: &ControlledSystem,
    design: &RecordDesign,
    basis: &OperatorBasis,
    sample_index: usize,
) -> Result<MeasurementMatrix> {
    design.check_against(system, basis)?;
    design.check_index(sample_index)?;
    let only = match design.layout {
        RecordLayout::PulsePerRow => Some(sample_index),
        RecordLayout::TimePerRow => None,
    };
    let ops = design.heisenberg_observables(system, only)?;
    MeasurementMatrix::from_observables(&ops[0], basis, system.observable(), sample_index)
}

/// ℳ for every sample index, propagating each pulse once.
pub fn build_matrices(system: &ControlledSystem, design: &RecordDesign, basis: &OperatorBasis) -> Result<Vec<MeasurementMatrix>> {
    design.check_against(system, basis)?;
    design
        .heisenberg_observables(system, None)?
        .iter()
        .enumerate()
        .map(|(j, ops)| MeasurementMatrix::from_observables(ops, basis, system.observable(), j))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSpec {
    None,
    /// Additive i.i.d. Gaussian noise with standard deviation `sigma`.
    Gaussian { sigma: f64, seed: u64 },
    /// Expectation estimated from `shots` projective ±1 outcomes.
    Shots { shots: u64, seed: u64 },
}

impl NoiseSpec {
    /// Same kind of noise with an independent seed for record `index`.
    pub fn for_record(&self, index: usize) -> NoiseSpec {
        match *self {
            NoiseSpec::None => NoiseSpec::None,
            NoiseSpec::Gaussian { sigma, seed } => NoiseSpec::Gaussian { sigma, seed: derive_seed(seed, index as u64) },
            NoiseSpec::Shots { shots, seed } => NoiseSpec::Shots { shots, seed: derive_seed(seed, index as u64) },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(invalid(format!("noise sigma must be non-negative, got {sigma}")))
            }
            NoiseSpec::Shots { shots: 0, .. } => Err(invalid("shot count must be positive")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub y: Vec<f64>,
    pub matrix: MeasurementMatrix,
    pub noise: NoiseSpec,
}

impl MeasurementRecord {
    pub fn new(y: Vec<f64>, matrix: MeasurementMatrix, noise: NoiseSpec) -> Result<Self> {
        if y.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(MeasurementRecord { y, matrix, noise })
    }

    pub fn to_json(&self) -> RecordJson {
        let m = self.matrix.entries();
        RecordJson {
            sample_index: self.matrix.sample_index(),
            y: self.y.clone(),
            matrix: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
            noise: self.noise,
        }
    }

    pub fn from_json(json: &RecordJson) -> Result<Self> {
        let rows = json.matrix.len();
        let cols = json.matrix.first().map_or(0, Vec::len);
        if rows == 0 || json.matrix.iter().any(|r| r.len() != cols) {
            return Err(invalid("record matrix must be a non-empty rectangular array"));
        }
        let entries = DMatrix::from_fn(rows, cols, |i, j| json.matrix[i][j]);
        Self::new(json.y.clone(), MeasurementMatrix::new(entries, json.sample_index)?, json.noise)
    }

    /// Row-major CSV: `row,y,m_1,...,m_n`, preceded by `#` metadata lines.
    pub fn to_csv(&self, header_lines: &[String]) -> String {
        let mut out = String::new();
        for line in header_lines {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# sample_index={} noise={}", self.matrix.sample_index(), serde_json::to_string(&self.noise).unwrap_or_default());
        let cols: Vec<String> = (1..=self.matrix.ncols()).map(|m| format!("m_{m}")).collect();
        let _ = writeln!(out, "row,y,{}", cols.join(","));
        for (i, y) in self.y.iter().enumerate() {
            let row: Vec<String> = self.matrix.entries().row(i).iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(out, "{},{y:.17e},{}", i + 1, row.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordJson {
    pub sample_index: usize,
    pub y: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub noise: NoiseSpec,
}

fn has_unit_spectrum(observable: &ComplexMatrix) -> bool {
    eigvalsh(observable).iter().all(|v| (v.abs() - 1.0).abs() < 1e-9)
}

fn apply_noise(ideal: &[f64], noise: &NoiseSpec) -> Result<Vec<f64>> {
    noise.validate()?;
    match *noise {
        NoiseSpec::None => Ok(ideal.to_vec()),
        NoiseSpec::Gaussian { sigma, seed } => {
            let mut rng = rng_from_seed(seed);
            Ok(ideal.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect())
        }
        NoiseSpec::Shots { shots, seed } => {
            let mut rng = rng_from_seed(seed);
            ideal
                .iter()
                .map(|v| {
                    let p = ((1.0 + v) / 2.0).clamp(0.0, 1.0);
                    let dist = Binomial::new(shots, p).map_err(|e| invalid(e.to_string()))?;
                    let k = dist.sample(&mut rng);
                    Ok(2.0 * k as f64 / shots as f64 - 1.0)
                })
                .collect()
        }
    }
}

fn record_from_observables(
    ops: &[ComplexMatrix],
    system: &ControlledSystem,
    rho: &DensityMatrix,
    basis: &OperatorBasis,
    sample_index: usize,
    noise: &NoiseSpec,
) -> Result<MeasurementRecord> {
    let matrix = MeasurementMatrix::from_observables(ops, basis, system.observable(), sample_index)?;
    let ideal: Vec<f64> = ops.iter().map(|op| trace_product(op, rho.matrix()).re).collect();
    MeasurementRecord::new(apply_noise(&ideal, noise)?, matrix, *noise)
}

fn check_noise(system: &ControlledSystem, noise: &NoiseSpec) -> Result<()> {
    if matches!(noise, NoiseSpec::Shots { .. }) && !has_unit_spectrum(system.observable()) {
        return Err(Error::ShotNoiseUnsupported);
    }
    noise.validate()
}

/// `y_n = Tr{U_n† M U_n ρ}` plus the requested noise.
pub fn simulate_record(
    system: &ControlledSystem,
    design: &RecordDesign,
    rho: &DensityMatrix,
    basis: &OperatorBasis,
    sample_index: usize,
    noise: &NoiseSpec,
) -> Result<MeasurementRecord> {
    design.check_against(system, basis)?;
    design.check_index(sample_index)?;
    check_noise(system, noise)?;
    if rho.dim() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), found: rho.dim() });
    }
    let only = match design.layout {
        RecordLayout::PulsePerRow => Some(sample_index),
        RecordLayout::TimePerRow => None,
    };
    let ops = design.heisenberg_observables(system, only)?;
    record_from_observables(&ops[0], system, rho, basis, sample_index, noise)
}

/// Every record of the design; record `j` uses `noise.for_record(j)`.
pub fn simulate_records(
    system: &ControlledSystem,
    design: &RecordDesign,
    rho: &DensityMatrix,
    basis: &OperatorBasis,
    noise: &NoiseSpec,
) -> Result<Vec<MeasurementRecord>> {
    design.check_against(system, basis)?;
    check_noise(system, noise)?;
    if rho.dim() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), found: rho.dim() });
    }
    design
        .heisenberg_observables(system, None)?
        .iter()
        .enumerate()
        .map(|(j, ops)| record_from_observables(ops, system, rho, basis, j, &noise.for_record(j)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconstructionMethod {
    LinearInversionProjected,
    FactorParametrized,
}

#[derive(Debug, Clone)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub bloch: BlochVector,
    /// Sum over records of `‖y − ℳ r‖²` at the returned state.
    pub residual: f64,
    pub iterations: usize,
    pub method: ReconstructionMethod,
    pub converged: bool,
}

/// Stacked `(A, y)` over all records.
pub(crate) fn stack(records: &[MeasurementRecord], columns: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if records.is_empty() {
        return Err(invalid("at least one measurement record is required"));
    }
    let rows: usize = records.iter().map(|r| r.matrix.nrows()).sum();
    let mut a = DMatrix::zeros(rows, columns);
    let mut y = Vec::with_capacity(rows);
    let mut offset = 0;
    for rec in records {
        if rec.matrix.ncols() != columns {
            return Err(Error::DimensionMismatch { expected: columns, found: rec.matrix.ncols() });
        }
        a.view_mut((offset, 0), (rec.matrix.nrows(), columns)).copy_from(rec.matrix.entries());
        y.extend_from_slice(&rec.y);
        offset += rec.matrix.nrows();
    }
    Ok((a, y))
}

pub(crate) fn residual_norm_sq(a: &DMatrix<f64>, y: &[f64], r: &[f64]) -> f64 {
    let pred = a * nalgebra::DVector::from_column_slice(r);
    pred.iter().zip(y).map(|(p, v)| (p - v) * (p - v)).sum()
}

#[cfg(test)]
mod tests;
