//! Physical parameters, unit conventions and experimental-feasibility numbers.
//!
//! Every rate inside [`SystemParams`] is a multiple of the mechanical
//! frequency `nu`. SI quantities only appear in [`FeasibilityInput`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Default `g0/nu` below which the linearized description is used.
pub const DEFAULT_LINEAR_THRESHOLD: f64 = 0.01;

/// Dimensionless system parameters, all rates in units of `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Mechanical angular frequency. The reference unit, normally 1.
    pub nu: f64,
    /// Cavity amplitude decay rate.
    pub kappa: f64,
    /// Single-photon optomechanical coupling.
    pub g0: f64,
    /// Laser detuning `ω_l − ω`.
    pub delta: f64,
    /// Mechanical damping rate.
    pub gamma_m: f64,
    /// Thermal occupation of the mechanical environment.
    pub nbar_env: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Linear,
    Nonlinear,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            nu: 1.0,
            kappa: 0.0,
            g0: 0.0,
            delta: 1.0,
            gamma_m: 0.0,
            nbar_env: 0.0,
        }
    }
}

impl SystemParams {
    pub fn new(nu: f64, kappa: f64, g0: f64, delta: f64, gamma_m: f64, nbar_env: f64) -> Result<Self> {
        let p = Self {
            nu,
            kappa,
            g0,
            delta,
            gamma_m,
            nbar_env,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.nu, self.kappa, self.g0, self.delta, self.gamma_m, self.nbar_env]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("system parameters must be finite".into()));
        }
        if self.nu <= 0.0 {
            return Err(Error::Domain(format!("nu must be positive, got {}", self.nu)));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("gamma_m", self.gamma_m),
            ("nbar_env", self.nbar_env),
        ] {
            if v < 0.0 {
                return Err(Error::Domain(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn regime(&self) -> Regime {
        self.regime_with_threshold(DEFAULT_LINEAR_THRESHOLD)
    }

    /// Linear iff `|g0| < threshold · nu`.
    pub fn regime_with_threshold(&self, threshold: f64) -> Regime {
        if self.g0.abs() < threshold * self.nu {
            Regime::Linear
        } else {
            Regime::Nonlinear
        }
    }

    /// Dimensionless parameters for an experimental configuration.
    /// The detuning is not fixed by the hardware description and is passed in.
    pub fn from_feasibility(input: &FeasibilityInput, delta: f64) -> Result<Self> {
        input.validate()?;
        let g0 = derive_g0(input)? / input.nu_si;
        Self::new(
            1.0,
            input.kappa_si / input.nu_si,
            g0,
            delta,
            1.0 / input.q_factor,
            input.thermal_occupation(),
        )
    }
}

/// SI description of an experimental setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityInput {
    /// Mechanical angular frequency, rad/s.
    pub nu_si: f64,
    /// Effective mass, kg.
    pub m_eff: f64,
    /// Cavity length, m.
    pub cavity_length: f64,
    /// Pump wavelength, m.
    pub wavelength: f64,
    /// Cavity decay rate, rad/s.
    pub kappa_si: f64,
    /// Mechanical quality factor.
    pub q_factor: f64,
    /// Environment temperature, K.
    #[serde(rename = "T_env", alias = "t_env")]
    pub t_env: f64,
}

impl FeasibilityInput {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("nu_si", self.nu_si),
            ("m_eff", self.m_eff),
            ("cavity_length", self.cavity_length),
            ("wavelength", self.wavelength),
            ("kappa_si", self.kappa_si),
            ("q_factor", self.q_factor),
            ("T_env", self.t_env),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Optical angular frequency `2πc/λ`, rad/s.
    pub fn optical_frequency(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / self.wavelength
    }

    /// Zero-point amplitude `√(ħ / 2 m ν)`, m.
    pub fn zero_point_amplitude(&self) -> f64 {
        (HBAR / (2.0 * self.m_eff * self.nu_si)).sqrt()
    }

    /// Mechanical damping `ν/Q`, rad/s.
    pub fn mechanical_damping(&self) -> f64 {
        self.nu_si / self.q_factor
    }

    /// Bose occupation of the mechanical mode at `T_env`.
    pub fn thermal_occupation(&self) -> f64 {
        let x = HBAR * self.nu_si / (BOLTZMANN * self.t_env);
        1.0 / x.exp_m1()
    }
}

/// Single-photon coupling of a Fabry-Perot cavity, `g0 = (ω_c/L)·x_zpf`.
///
/// Returned as an angular rate (rad/s); this is the number quoted as "Hz"
/// in the optomechanics literature.
pub fn derive_g0(input: &FeasibilityInput) -> Result<f64> {
    input.validate()?;
    Ok(input.optical_frequency() / input.cavity_length * input.zero_point_amplitude())
}

/// Minimum drive strength (units of `nu`) needed by the analytical pulse
/// sequences: `10 ν²/g0` in the linear regime and `10² ν²/g0` for the
/// double-cavity nonlinear sequence.
pub fn pulse_power_requirement(params: &SystemParams, regime: Regime) -> Result<f64> {
    if !(params.g0 > 0.0) {
        return Err(Error::Precondition(format!(
            "pulse power requirement needs g0 > 0, got {}",
            params.g0
        )));
    }
    let prefactor = match regime {
        Regime::Linear => 10.0,
        Regime::Nonlinear => 100.0,
    };
    Ok(prefactor * params.nu * params.nu / params.g0)
}
