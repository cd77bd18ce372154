//! Controlled systems `H(t) = H₀ + f(t) H_c` with a measured observable, and
//! the NV-center electron / 13C nuclear spin model.
//!
//! All Hamiltonians are stored in angular frequency (rad/s). Constructors
//! that take "MHz" expect linear frequency and multiply by 2π·10⁶.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::codec::MatrixJson;
use crate::error::{Error, Result};
use crate::linalg::{ensure_hermitian, identity, kron, max_abs, r, sigma_x, sigma_z, ComplexMatrix};

/// Linear MHz to rad/s.
pub fn mhz_to_rad(mhz: f64) -> f64 {
    mhz * TAU * 1e6
}

pub fn rad_to_mhz(rad: f64) -> f64 {
    rad / (TAU * 1e6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledSystem {
    dim: usize,
    h0: ComplexMatrix,
    hc: ComplexMatrix,
    observable: ComplexMatrix,
}

impl ControlledSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn control(&self) -> &ComplexMatrix {
        &self.hc
    }

    pub fn observable(&self) -> &ComplexMatrix {
        &self.observable
    }

    /// `H₀ + f H_c`.
    pub fn hamiltonian(&self, f: f64) -> ComplexMatrix {
        &self.h0 + &self.hc * r(f)
    }

    pub fn to_json(&self) -> SystemJson {
        SystemJson {
            dim: self.dim,
            h0: MatrixJson::encode(&self.h0),
            hc: MatrixJson::encode(&self.hc),
            observable: MatrixJson::encode(&self.observable),
        }
    }

    pub fn from_json(json: &SystemJson) -> Result<Self> {
        let sys = custom_system(json.h0.decode()?, json.hc.decode()?, json.observable.decode()?)?;
        if sys.dim != json.dim {
            return Err(Error::DimensionMismatch { expected: json.dim, found: sys.dim });
        }
        Ok(sys)
    }
}

/// Serialized [`ControlledSystem`], matrices in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub dim: usize,
    pub h0: MatrixJson,
    pub hc: MatrixJson,
    pub observable: MatrixJson,
}

/// Validates `(H₀, H_c, M)`. A non-traceless observable is replaced by its
/// traceless part; an observable proportional to the identity is rejected.
pub fn custom_system(h0: ComplexMatrix, hc: ComplexMatrix, observable: ComplexMatrix) -> Result<ControlledSystem> {
    let dim = ensure_hermitian(&h0, 1e-10)?;
    for m in [&hc, &observable] {
        let n = ensure_hermitian(m, 1e-10)?;
        if n != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: n });
        }
    }
    let tr = observable.trace();
    let scale = max_abs(&observable).max(f64::MIN_POSITIVE);
    let observable = if tr.norm() > 1e-10 * scale {
        log::warn!("observable has trace {tr}; using its traceless part");
        let traceless = &observable - identity(dim) * (tr / r(dim as f64));
        if max_abs(&traceless) <= 1e-10 * scale {
            return Err(Error::ZeroObservable);
        }
        traceless
    } else {
        observable
    };
    Ok(ControlledSystem { dim, h0, hc, observable })
}

/// Rotating-frame parameters of the two-qubit NV model, in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvParams {
    pub omega1: f64,
    pub omega2: f64,
    pub rabi1: f64,
    pub rabi2: f64,
    pub gz: f64,
    pub gx: f64,
}

impl NvParams {
    /// Parameters given as linear frequencies in MHz.
    pub fn from_mhz(omega1: f64, omega2: f64, rabi1: f64, rabi2: f64, gz: f64, gx: f64) -> Result<Self> {
        let p = NvParams {
            omega1: mhz_to_rad(omega1),
            omega2: mhz_to_rad(omega2),
            rabi1: mhz_to_rad(rabi1),
            rabi2: mhz_to_rad(rabi2),
            gz: mhz_to_rad(gz),
            gx: mhz_to_rad(gx),
        };
        p.validate()?;
        Ok(p)
    }

    /// The measured parameter set {ω₁, ω₂, Ω₁, Ω₂, g_z, g_x}/2π =
    /// {−2.97, −6.46, 7.91, −1.39, 5.92, 1.39} MHz.
    pub fn experimental() -> Self {
        Self::from_mhz(-2.97, -6.46, 7.91, -1.39, 5.92, 1.39).expect("valid constants")
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega1, self.omega2, self.rabi1, self.rabi2, self.gz, self.gx];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.rabi1 == 0.0 {
            return Err(Error::InvalidArgument("drive amplitude Ω₁ must be nonzero".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> NvParamsJson {
        NvParamsJson {
            omega1_mhz: rad_to_mhz(self.omega1),
            omega2_mhz: rad_to_mhz(self.omega2),
            rabi1_mhz: rad_to_mhz(self.rabi1),
            rabi2_mhz: rad_to_mhz(self.rabi2),
            gz_mhz: rad_to_mhz(self.gz),
            gx_mhz: rad_to_mhz(self.gx),
        }
    }
}

/// [`NvParams`] with values in linear MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvParamsJson {
    pub omega1_mhz: f64,
    pub omega2_mhz: f64,
    pub rabi1_mhz: f64,
    pub rabi2_mhz: f64,
    pub gz_mhz: f64,
    pub gx_mhz: f64,
}

impl NvParamsJson {
    pub fn to_params(&self) -> Result<NvParams> {
        NvParams::from_mhz(self.omega1_mhz, self.omega2_mhz, self.rabi1_mhz, self.rabi2_mhz, self.gz_mhz, self.gx_mhz)
    }
}

impl Default for NvParamsJson {
    fn default() -> Self {
        NvParams::experimental().to_json()
    }
}

/// Lab-frame constants of the NV ground state and the coupled 13C spin.
///
/// Frequencies (`zero_field`, `nitrogen_shift`, `a_zz`, `a_zx`,
/// `microwave`) are in rad/s, gyromagnetic ratios in rad/s per gauss and the
/// field in gauss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvPhysicalParams {
    pub zero_field: f64,
    pub gamma_e: f64,
    pub gamma_c: f64,
    pub field_gauss: f64,
    pub nitrogen_shift: f64,
    pub a_zz: f64,
    pub a_zx: f64,
    pub microwave: f64,
}

impl NvPhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.zero_field,
            self.gamma_e,
            self.gamma_c,
            self.field_gauss,
            self.nitrogen_shift,
            self.a_zz,
            self.a_zx,
            self.microwave,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

/// Rotating-frame parameters from lab-frame constants:
///
/// ```text
/// ω₁ = ω_mw − D + γ_e B + A_N    ω₂ = γ_C B − A_zz/2
/// Ω₂ = −A_zx/2    g_z = A_zz/2    g_x = A_zx/2
/// ```
///
/// The drive amplitude Ω₁ (rad/s) is calibrated separately and passed through.
pub fn nv_params_from_physical(p: &NvPhysicalParams, rabi1: f64) -> Result<NvParams> {
    p.validate()?;
    let out = NvParams {
        omega1: p.microwave - p.zero_field + p.gamma_e * p.field_gauss + p.nitrogen_shift,
        omega2: p.gamma_c * p.field_gauss - p.a_zz / 2.0,
        rabi1,
        rabi2: -p.a_zx / 2.0,
        gz: p.a_zz / 2.0,
        gx: p.a_zx / 2.0,
    };
    out.validate()?;
    Ok(out)
}

/// Two-qubit NV system, electron spin first:
///
/// ```text
/// H₀  = ω₁/2 σ₁ᶻ + ω₂/2 σ₂ᶻ + Ω₂/2 σ₂ˣ + g_z/2 σ₁ᶻσ₂ᶻ + g_x/2 σ₁ᶻσ₂ˣ
/// H_c = Ω₁/2 σ₁ˣ,    M = σ₁ᶻ
/// ```
pub fn nv_system(p: &NvParams) -> Result<ControlledSystem> {
    p.validate()?;
    let i2 = identity(2);
    let (x, z) = (sigma_x(), sigma_z());
    let h0 = kron(&z, &i2) * r(p.omega1 / 2.0)
        + kron(&i2, &z) * r(p.omega2 / 2.0)
        + kron(&i2, &x) * r(p.rabi2 / 2.0)
        + kron(&z, &z) * r(p.gz / 2.0)
        + kron(&z, &x) * r(p.gx / 2.0);
    let hc = kron(&x, &i2) * r(p.rabi1 / 2.0);
    let observable = kron(&z, &i2);
    custom_system(h0, hc, observable)
}
