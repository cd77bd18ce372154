//! Truncated-Fourier control pulses `f(t) = Σ_j F_j cos(ν_j t + φ_j)`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Seedable generator used for every random draw in the crate: ChaCha8 with
/// `seed_from_u64`.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and an index
/// (SplitMix64 finalizer), so parallel shards stay reproducible.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierComponent {
    pub amplitude: f64,
    /// Angular frequency in rad/s.
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierPulse {
    components: Vec<FourierComponent>,
    duration: f64,
}

const NORMALIZATION_TOL: f64 = 1e-12;

impl FourierPulse {
    pub fn new(components: Vec<FourierComponent>, duration: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("pulse needs at least one Fourier component"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid(format!("pulse duration must be positive, got {duration}")));
        }
        let finite = components
            .iter()
            .all(|c| c.amplitude.is_finite() && c.frequency.is_finite() && c.phase.is_finite());
        if !finite {
            return Err(invalid("pulse components must be finite"));
        }
        let total: f64 = components.iter().map(|c| c.amplitude).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!("pulse amplitudes must sum to 1, got {total}")));
        }
        Ok(FourierPulse { components, duration })
    }

    pub fn components(&self) -> &[FourierComponent] {
        &self.components
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Same components, different length.
    pub fn with_duration(&self, duration: f64) -> Result<Self> {
        Self::new(self.components.clone(), duration)
    }

    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(
            t >= -1e-15 && t <= self.duration * (1.0 + 1e-12),
            "pulse evaluated at t = {t} outside [0, {}]",
            self.duration
        );
        self.components
            .iter()
            .map(|c| c.amplitude * (c.frequency * t + c.phase).cos())
            .sum()
    }

    pub fn to_json(&self) -> PulseJson {
        PulseJson {
            duration_s: self.duration,
            components: self
                .components
                .iter()
                .map(|c| ComponentJson {
                    amplitude: c.amplitude,
                    nu_hz_linear: c.frequency / TAU,
                    phi_rad: c.phase,
                })
                .collect(),
            seed: None,
        }
    }

    pub fn from_json(json: &PulseJson) -> Result<Self> {
        let comps = json
            .components
            .iter()
            .map(|c| FourierComponent {
                amplitude: c.amplitude,
                frequency: c.nu_hz_linear * TAU,
                phase: c.phi_rad,
            })
            .collect();
        Self::new(comps, json.duration_s)
    }
}

/// `f(t) ≡ 1`: a single zero-frequency component.
pub fn constant_pulse(duration: f64) -> Result<FourierPulse> {
    FourierPulse::new(vec![FourierComponent { amplitude: 1.0, frequency: 0.0, phase: 0.0 }], duration)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentJson {
    #[serde(rename = "F")]
    pub amplitude: f64,
    pub nu_hz_linear: f64,
    pub phi_rad: f64,
}

/// On-disk pulse: frequencies in linear Hz, optional generating seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseJson {
    pub duration_s: f64,
    pub components: Vec<ComponentJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeLaw {
    /// Uniform on the standard simplex {F_j ≥ 0, Σ F_j = 1}.
    UniformSimplex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSamplingSpec {
    pub k: usize,
    /// Angular frequency range in rad/s.
    pub freq_range: (f64, f64),
    pub amplitude_law: AmplitudeLaw,
    pub seed: u64,
}

impl PulseSamplingSpec {
    pub fn new(k: usize, freq_range: (f64, f64), seed: u64) -> Result<Self> {
        let spec = PulseSamplingSpec { k, freq_range, amplitude_law: AmplitudeLaw::UniformSimplex, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// K = 10 components with ν_j/2π ∈ [0, 4] MHz.
    pub fn experimental(seed: u64) -> Self {
        Self::new(10, (0.0, TAU * 4e6), seed).expect("valid constants")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PulseSamplingSpec { seed, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.freq_range;
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(invalid(format!("invalid frequency range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// Draws amplitudes uniformly on the simplex (normalized exponential gaps),
/// frequencies uniformly on the range, and phases uniformly on [0, 2π).
pub fn sample_pulse(spec: &PulseSamplingSpec, duration: f64) -> Result<FourierPulse> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    sample_pulse_with(spec, duration, &mut rng)
}

pub fn sample_pulse_with<R: Rng + ?Sized>(spec: &PulseSamplingSpec, duration: f64, rng: &mut R) -> Result<FourierPulse> {
    let (lo, hi) = spec.freq_range;
    let gaps: Vec<f64> = (0..spec.k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = gaps.iter().sum();
    let components = gaps
        .iter()
        .map(|g| FourierComponent {
            amplitude: g / total,
            frequency: rng.random_range(lo..hi),
            phase: rng.random_range(0.0..TAU),
        })
        .collect();
    FourierPulse::new(components, duration)
}

/// `count` pulses, pulse `n` drawn with seed `derive_seed(spec.seed, n)`.
pub fn sample_pulse_set(spec: &PulseSamplingSpec, duration: f64, count: usize) -> Result<Vec<FourierPulse>> {
    (0..count)
        .map(|n| sample_pulse(&spec.with_seed(derive_seed(spec.seed, n as u64)), duration))
        .collect()
}
