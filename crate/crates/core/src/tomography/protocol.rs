use serde::{Deserialize, Serialize};

use super::constrained::{reconstruct_constrained, SolverOptions};
use super::{simulate_records, MeasurementRecord, NoiseSpec, RecordDesign, TomographyResult};
use crate::basis::OperatorBasis;
use crate::error::{invalid, Result};
use crate::model::ControlledSystem;
use crate::propagator::PropagationSpec;
use crate::pulse::{sample_pulse_set, PulseSamplingSpec};
use crate::state::DensityMatrix;

/// Multi-pulse record layout: `num_pulses` pulses of equal `duration`, each
/// sampled every `spacing`, keeping the last `last_k` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    pub num_pulses: usize,
    pub duration_us: f64,
    pub spacing_ns: f64,
    pub last_k: usize,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec { num_pulses: 15, duration_us: 0.7, spacing_ns: 20.0, last_k: 10 }
    }
}

impl ProtocolSpec {
    pub fn duration(&self) -> f64 {
        self.duration_us * 1e-6
    }

    pub fn spacing(&self) -> f64 {
        self.spacing_ns * 1e-9
    }

    /// The `last_k` sample times ending at the pulse duration, ascending.
    pub fn sample_times(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let (t, dt) = (self.duration(), self.spacing());
        Ok((0..self.last_k).map(|j| t - (self.last_k - 1 - j) as f64 * dt).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_pulses == 0 || self.last_k == 0 {
            return Err(invalid("protocol needs at least one pulse and one sample"));
        }
        if !(self.duration_us > 0.0 && self.spacing_ns > 0.0) {
            return Err(invalid("protocol duration and spacing must be positive"));
        }
        if self.duration() - (self.last_k - 1) as f64 * self.spacing() < -1e-15 {
            return Err(invalid(format!(
                "{} samples spaced {} ns do not fit in {} us",
                self.last_k, self.spacing_ns, self.duration_us
            )));
        }
        Ok(())
    }

    pub fn design(&self, pulse_spec: &PulseSamplingSpec, step: PropagationSpec) -> Result<RecordDesign> {
        let pulses = sample_pulse_set(pulse_spec, self.duration(), self.num_pulses)?;
        RecordDesign::new(pulses, self.sample_times()?, step)
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub design: RecordDesign,
    pub records: Vec<MeasurementRecord>,
    pub result: TomographyResult,
}

/// Sample the pulse set, simulate one record per retained sample time and
/// reconstruct with the constrained solver.
#[allow(clippy::too_many_arguments)]
pub fn experiment_protocol(
    system: &ControlledSystem,
    rho: &DensityMatrix,
    basis: &OperatorBasis,
    pulse_spec: &PulseSamplingSpec,
    protocol: &ProtocolSpec,
    noise: &NoiseSpec,
    step: PropagationSpec,
    solver: &SolverOptions,
) -> Result<ProtocolOutcome> {
    if protocol.num_pulses != basis.len() {
        return Err(invalid(format!(
            "protocol uses {} pulses, the d = {} system needs {}",
            protocol.num_pulses,
            basis.dim(),
            basis.len()
        )));
    }
    let design = protocol.design(pulse_spec, step)?;
    let records = simulate_records(system, &design, rho, basis, noise)?;
    let result = reconstruct_constrained(&records, basis, solver)?;
    Ok(ProtocolOutcome { design, records, result })
}
