//! Time-ordered evolution under `H(t) = H₀ + f(t) H_c`.
//!
//! The propagator is a product of exact slice exponentials
//! `exp(−i h H(t_mid))`, with the pulse sampled at each slice midpoint. Slices
//! start at t = 0 and have width `step`; a requested time that falls inside a
//! slice is reached by one extra partial slice of exact width, after which
//! stepping resumes from the grid, so any set of requested times sees the same
//! slice grid.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::linalg::{expm_hermitian_unchecked, identity, trace_product, ComplexMatrix};
use crate::model::ControlledSystem;
use crate::pulse::FourierPulse;
use crate::state::DensityMatrix;

pub const DEFAULT_STEP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Piecewise-constant midpoint sampling, second order in the step.
    #[default]
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSpec {
    pub step: f64,
    pub scheme: Scheme,
}

impl Default for PropagationSpec {
    fn default() -> Self {
        PropagationSpec { step: DEFAULT_STEP, scheme: Scheme::Midpoint }
    }
}

impl PropagationSpec {
    pub fn with_step(step: f64) -> Result<Self> {
        let spec = PropagationSpec { step, scheme: Scheme::Midpoint };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid(format!("propagation step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

/// Relative slack for treating `t/step` as an integer and for times just past
/// the pulse end.
const GRID_SNAP: f64 = 1e-9;

/// Incremental propagator over one pulse.
pub struct Stepper<'a> {
    system: &'a ControlledSystem,
    pulse: &'a FourierPulse,
    step: f64,
    slices: u64,
    grid_unitary: ComplexMatrix,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a ControlledSystem, pulse: &'a FourierPulse, spec: &PropagationSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Stepper {
            system,
            pulse,
            step: spec.step,
            slices: 0,
            grid_unitary: identity(system.dim()),
        })
    }

    /// Time of the last slice boundary reached.
    pub fn grid_time(&self) -> f64 {
        self.slices as f64 * self.step
    }

    fn slice(&self, start: f64, width: f64) -> ComplexMatrix {
        let f = self.pulse.eval(start + width / 2.0);
        expm_hermitian_unchecked(&self.system.hamiltonian(f), width)
    }

    /// Returns `U_t`. Times must be requested in non-decreasing order.
    pub fn advance_to(&mut self, t: f64) -> Result<ComplexMatrix> {
        if !t.is_finite() || t < 0.0 {
            return Err(invalid(format!("propagation time must be non-negative, got {t}")));
        }
        if t > self.pulse.duration() * (1.0 + GRID_SNAP) {
            return Err(invalid(format!(
                "propagation time {t} exceeds pulse duration {}",
                self.pulse.duration()
            )));
        }
        let ratio = t / self.step;
        let nearest = ratio.round();
        let (target, exact) = if (ratio - nearest).abs() <= GRID_SNAP * ratio.max(1.0) {
            (nearest as u64, true)
        } else {
            (ratio.floor() as u64, false)
        };
        if target < self.slices {
            return Err(invalid(format!(
                "time {t} precedes the current propagation time {}",
                self.grid_time()
            )));
        }
        while self.slices < target {
            let u = self.slice(self.slices as f64 * self.step, self.step);
            self.grid_unitary = u * &self.grid_unitary;
            self.slices += 1;
        }
        let remainder = t - self.grid_time();
        if exact || remainder <= 0.0 {
            return Ok(self.grid_unitary.clone());
        }
        Ok(self.slice(self.grid_time(), remainder) * &self.grid_unitary)
    }
}

/// `U_t = T exp{−i ∫₀ᵗ H(t′) dt′}`.
pub fn propagate(system: &ControlledSystem, pulse: &FourierPulse, t: f64, spec: &PropagationSpec) -> Result<ComplexMatrix> {
    Stepper::new(system, pulse, spec)?.advance_to(t)
}

/// Propagators at each of the (non-decreasing) `times`.
pub fn propagate_many(
    system: &ControlledSystem,
    pulse: &FourierPulse,
    times: &[f64],
    spec: &PropagationSpec,
) -> Result<Vec<ComplexMatrix>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times must be sorted"));
    }
    let mut stepper = Stepper::new(system, pulse, spec)?;
    times.iter().map(|&t| stepper.advance_to(t)).collect()
}

/// `⟨M⟩_t = Tr{U_t† M U_t ρ}` sampled at given times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,expectation\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:e},{v:.17e}");
        }
        out
    }
}

/// Heisenberg-picture observable `U† M U`.
pub fn heisenberg(observable: &ComplexMatrix, u: &ComplexMatrix) -> ComplexMatrix {
    u.adjoint() * observable * u
}

pub fn expectation_trace(
    system: &ControlledSystem,
    pulse: &FourierPulse,
    rho: &DensityMatrix,
    times: &[f64],
    spec: &PropagationSpec,
) -> Result<TimeTrace> {
    if rho.dim() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), found: rho.dim() });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("trace times must be strictly increasing"));
    }
    let unitaries = propagate_many(system, pulse, times, spec)?;
    let values = unitaries
        .iter()
        .map(|u| {
            let z = trace_product(&heisenberg(system.observable(), u), rho.matrix());
            if z.im.abs() > 1e-9 {
                return Err(Error::NotHermitian(z.im.abs()));
            }
            Ok(z.re)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TimeTrace { times: times.to_vec(), values })
}

/// `[start, start + spacing, ...]` up to and including `end` (within slack).
pub fn uniform_times(start: f64, end: f64, spacing: f64) -> Result<Vec<f64>> {
    if !(spacing > 0.0) || end < start {
        return Err(invalid("invalid uniform time grid"));
    }
    let count = ((end - start) / spacing * (1.0 + 1e-12)).floor() as usize;
    Ok((0..=count).map(|n| start + n as f64 * spacing).collect())
}
