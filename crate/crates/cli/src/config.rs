//! Experiment configuration. Frequencies are linear MHz and times µs (or ns
//! where the field name says so); everything is converted to rad/s and
//! seconds before it reaches the library.

use std::path::{Path, PathBuf};

use randtomo::basis::{pauli_basis, OperatorBasis};
use randtomo::codec::MatrixJson;
use randtomo::model::{custom_system, mhz_to_rad, nv_params_from_physical, nv_system, ControlledSystem, NvParamsJson, NvPhysicalParams};
use randtomo::optimizer::{Objective, OptimizationSpec};
use randtomo::propagator::PropagationSpec;
use randtomo::pulse::{derive_seed, rng_from_seed, PulseSamplingSpec};
use randtomo::state::{random_mixed_state, random_pure_state, DensityMatrix};
use randtomo::tomography::{NoiseSpec, ProtocolSpec, SolverOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Independent streams derived from the top-level seed.
pub mod stream {
    pub const PULSES: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const STATE: u64 = 3;
    pub const CONDITIONING: u64 = 4;
    pub const OPTIMIZER: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default)]
    pub conditioning: ConditioningConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Nv(NvParamsJson),
    NvPhysical(NvPhysicalConfig),
    Custom(CustomSystemConfig),
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::Nv(NvParamsJson::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvPhysicalConfig {
    pub zero_field_mhz: f64,
    pub gamma_e_mhz_per_gauss: f64,
    pub gamma_c_mhz_per_gauss: f64,
    pub field_gauss: f64,
    pub nitrogen_shift_mhz: f64,
    pub a_zz_mhz: f64,
    pub a_zx_mhz: f64,
    pub microwave_mhz: f64,
    pub rabi1_mhz: f64,
}

/// Hamiltonians in linear MHz; the observable is dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSystemConfig {
    pub h0_mhz: MatrixJson,
    pub hc_mhz: MatrixJson,
    pub observable: MatrixJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub k: usize,
    pub freq_min_mhz: f64,
    pub freq_max_mhz: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig { k: 10, freq_min_mhz: 0.0, freq_max_mhz: 4.0 }
    }
}

impl PulseConfig {
    fn range(&self) -> (f64, f64) {
        (mhz_to_rad(self.freq_min_mhz), mhz_to_rad(self.freq_max_mhz))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub step_ns: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig { step_ns: 1.0 }
    }
}

/// Noise without a seed; the seed comes from the top-level one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    Gaussian { sigma: f64 },
    Shots { shots: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    /// Computational basis state `|index⟩`.
    Basis { index: usize },
    Matrix { matrix: MatrixJson },
    RandomPure,
    RandomMixed,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig::Basis { index: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningConfig {
    pub durations_us: Vec<f64>,
    pub realizations: usize,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        ConditioningConfig { durations_us: (1..=14).map(|n| n as f64 / 10.0).collect(), realizations: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub objective: Objective,
    pub duration_us: f64,
    pub restarts: usize,
    pub max_evals: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { objective: Objective::MaxConcurrence, duration_us: 1.8, restarts: 20, max_evals: 2000 }
    }
}

/// Library-ready values built from a validated config.
pub struct Resolved {
    pub system: ControlledSystem,
    pub basis: OperatorBasis,
    pub pulse_spec: PulseSamplingSpec,
    pub step: PropagationSpec,
    pub noise: NoiseSpec,
    pub state: DensityMatrix,
    pub optimizer: OptimizationSpec,
}

fn cfg<T>(r: randtomo::Result<T>, section: &str) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(format!("{section}: {e}")))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output directory
    /// is left out so that identical runs into different places agree.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn stream_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, stream)
    }

    pub fn system(&self) -> Result<ControlledSystem, CliError> {
        match &self.system {
            SystemConfig::Nv(p) => cfg(p.to_params().and_then(|p| nv_system(&p)), "system.nv"),
            SystemConfig::NvPhysical(p) => {
                let phys = NvPhysicalParams {
                    zero_field: mhz_to_rad(p.zero_field_mhz),
                    gamma_e: mhz_to_rad(p.gamma_e_mhz_per_gauss),
                    gamma_c: mhz_to_rad(p.gamma_c_mhz_per_gauss),
                    field_gauss: p.field_gauss,
                    nitrogen_shift: mhz_to_rad(p.nitrogen_shift_mhz),
                    a_zz: mhz_to_rad(p.a_zz_mhz),
                    a_zx: mhz_to_rad(p.a_zx_mhz),
                    microwave: mhz_to_rad(p.microwave_mhz),
                };
                cfg(nv_params_from_physical(&phys, mhz_to_rad(p.rabi1_mhz)).and_then(|p| nv_system(&p)), "system.nv_physical")
            }
            SystemConfig::Custom(c) => {
                let scale = randtomo::linalg::r(mhz_to_rad(1.0));
                let built = (|| custom_system(c.h0_mhz.decode()? * scale, c.hc_mhz.decode()? * scale, c.observable.decode()?))();
                cfg(built, "system.custom")
            }
        }
    }

    /// Builds and validates every section; nothing is simulated.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let system = self.system()?;
        let d = system.dim();
        let qubits = d.trailing_zeros();
        if !d.is_power_of_two() || qubits == 0 {
            return Err(CliError::Config(format!("system dimension {d} is not a power of two ≥ 2")));
        }
        let basis = cfg(pauli_basis(qubits), "system")?;

        let pulse_spec = cfg(PulseSamplingSpec::new(self.pulse.k, self.pulse.range(), self.stream_seed(stream::PULSES)), "pulse")?;
        let step = cfg(PropagationSpec::with_step(self.propagation.step_ns * 1e-9), "propagation")?;
        cfg(self.protocol.validate(), "protocol")?;
        if self.protocol.num_pulses != basis.len() {
            return Err(CliError::Config(format!(
                "protocol.num_pulses is {} but a d = {d} system needs {}",
                self.protocol.num_pulses,
                basis.len()
            )));
        }
        let noise_seed = self.stream_seed(stream::NOISE);
        let noise = match self.noise {
            NoiseConfig::None => NoiseSpec::None,
            NoiseConfig::Gaussian { sigma } => NoiseSpec::Gaussian { sigma, seed: noise_seed },
            NoiseConfig::Shots { shots } => NoiseSpec::Shots { shots, seed: noise_seed },
        };
        cfg(noise.validate(), "noise")?;
        cfg(self.solver.validate(), "solver")?;
        if self.conditioning.realizations == 0 || self.conditioning.durations_us.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(CliError::Config("conditioning needs realizations ≥ 1 and positive durations".into()));
        }

        let mut rng = rng_from_seed(self.stream_seed(stream::STATE));
        let state = match &self.state {
            StateConfig::Basis { index } => cfg(DensityMatrix::basis_state(d, *index), "state")?,
            StateConfig::Matrix { matrix } => cfg(matrix.decode().and_then(DensityMatrix::new), "state")?,
            StateConfig::RandomPure => random_pure_state(d, &mut rng),
            StateConfig::RandomMixed => random_mixed_state(d, &mut rng),
        };
        if state.dim() != d {
            return Err(CliError::Config(format!("state has dimension {}, system has {d}", state.dim())));
        }

        let o = &self.optimizer;
        let optimizer = OptimizationSpec {
            objective: o.objective,
            k: self.pulse.k,
            duration: o.duration_us * 1e-6,
            freq_range: self.pulse.range(),
            restarts: o.restarts,
            max_evals: o.max_evals,
            seed: self.stream_seed(stream::OPTIMIZER),
            step,
        };
        cfg(optimizer.validate(), "optimizer")?;
        Ok(Resolved { system, basis, pulse_spec, step, noise, state, optimizer })
    }
}
