//! Reservoir temperature relations for the monitored oscillator.
//!
//! A bath at temperature `T` that both damps (`gamma = lambda omega`) and
//! diffuses the momentum fixes the ratio of the two measurement strengths:
//! `lambda = 4 kappa hbar coth(hbar omega / 2 k_B T)`. The diffusion
//! coefficient `D` is defined so that `d<P^2>/dt` contains `2 D`; with the
//! moment equations' source `lambda^2 omega^2/(4 kappa)` this gives
//! `D = lambda^2 omega^2 / (8 kappa)`.

use crate::error::{require_nonnegative, require_positive, Error, Result};

/// Above this `hbar omega / k_B T` the occupation is reported as zero.
const OCCUPATION_EXPONENT_MAX: f64 = 700.0;

/// Relative width of the classical/quantum boundary.
const BOUNDARY_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalSpec {
    pub temperature: f64,
    pub omega: f64,
    pub hbar: f64,
    pub kb: f64,
}

impl ThermalSpec {
    /// `k_B = 1`.
    pub fn new(temperature: f64, omega: f64, hbar: f64) -> Result<Self> {
        Self::with_kb(temperature, omega, hbar, 1.0)
    }

    pub fn with_kb(temperature: f64, omega: f64, hbar: f64, kb: f64) -> Result<Self> {
        require_positive("temperature", temperature)?;
        require_positive("omega", omega)?;
        require_positive("hbar", hbar)?;
        require_positive("kB", kb)?;
        Ok(ThermalSpec {
            temperature,
            omega,
            hbar,
            kb,
        })
    }

    /// `hbar omega / (k_B T)`
    pub fn reduced_energy(&self) -> f64 {
        self.hbar * self.omega / (self.kb * self.temperature)
    }
}

fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// Bose-Einstein occupation `1 / (exp(hbar omega / k_B T) - 1)`.
pub fn nbar(spec: &ThermalSpec) -> f64 {
    let x = spec.reduced_energy();
    if x > OCCUPATION_EXPONENT_MAX {
        log::debug!("occupation underflows at hbar omega / kT = {x}; reporting 0");
        return 0.0;
    }
    1.0 / x.exp_m1()
}

/// `D = (gamma hbar omega / 2) coth(hbar omega / 2 k_B T)`
pub fn diffusion_coefficient(gamma: f64, spec: &ThermalSpec) -> Result<f64> {
    require_nonnegative("gamma", gamma)?;
    Ok(gamma * spec.hbar * spec.omega / 2.0 * coth(spec.reduced_energy() / 2.0))
}

/// `lambda = 4 kappa hbar coth(hbar omega / 2 k_B T)`
pub fn lambda_from_temperature(kappa: f64, spec: &ThermalSpec) -> Result<f64> {
    require_positive("kappa", kappa)?;
    Ok(4.0 * kappa * spec.hbar * coth(spec.reduced_energy() / 2.0))
}

/// Inverse of [`lambda_from_temperature`]:
/// `T = (hbar omega / 2 k_B) / arccoth(lambda / 4 kappa hbar)`.
///
/// Only `lambda > 4 kappa hbar` corresponds to a bath temperature; smaller
/// values (the quantum regime) admit no thermal equilibrium.
pub fn temperature_from_lambda(lambda: f64, kappa: f64, omega: f64, hbar: f64, kb: f64) -> Result<f64> {
    require_positive("kappa", kappa)?;
    require_positive("omega", omega)?;
    require_positive("hbar", hbar)?;
    require_positive("kB", kb)?;
    require_nonnegative("lambda", lambda)?;
    let bound = 4.0 * kappa * hbar;
    if lambda <= bound {
        return Err(Error::NoEquilibrium { lambda, bound });
    }
    // arccoth(y) = atanh(1/y)
    let x = (bound / lambda).atanh();
    Ok(hbar * omega / (2.0 * kb) / x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `lambda > 4 hbar kappa`: thermal equilibrium with the bath is possible.
    Classical,
    /// `lambda < 4 hbar kappa`
    Quantum,
    Boundary,
}

pub fn regime_classify(lambda: f64, kappa: f64, hbar: f64) -> Result<Regime> {
    require_positive("kappa", kappa)?;
    require_positive("hbar", hbar)?;
    let bound = 4.0 * hbar * kappa;
    Ok(if (lambda - bound).abs() <= BOUNDARY_REL * bound {
        Regime::Boundary
    } else if lambda > bound {
        Regime::Classical
    } else {
        Regime::Quantum
    })
}
