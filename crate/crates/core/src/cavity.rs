//! Single-mode length-gauge cavity coupling for a classical photon
//! coordinate.
//!
//! The photon is a unit-mass oscillator `q` with
//! `H = ½p² + ½ω²q² + ω q λ(ε·μ) + ½λ²(ε·μ)²`; the last two terms are the
//! bilinear coupling and the self-polarization (dipole self-energy).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    /// Angular frequency, Hartree.
    pub omega_c: f64,
    /// Coupling strength λ, atomic units.
    pub lambda: f64,
    pub polarization: Vector3<f64>,
    pub self_polarization: bool,
    pub bilinear: bool,
}

impl CavityMode {
    pub fn new(omega_c: f64, lambda: f64, polarization: Vector3<f64>) -> Result<Self> {
        if !(omega_c > 0.0) || !omega_c.is_finite() {
            return Err(Error::arg("cavity frequency must be positive"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::arg("coupling strength must be non-negative"));
        }
        if (polarization.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::arg("polarization must be a unit vector"));
        }
        Ok(CavityMode {
            omega_c,
            lambda,
            polarization,
            self_polarization: true,
            bilinear: true,
        })
    }

    /// A decoupled mode (λ = 0).
    pub fn free(omega_c: f64, polarization: Vector3<f64>) -> Result<Self> {
        Self::new(omega_c, 0.0, polarization)
    }

    pub fn with_terms(mut self, bilinear: bool, self_polarization: bool) -> Self {
        self.bilinear = bilinear;
        self.self_polarization = self_polarization;
        self
    }

    /// True when the mode exerts no force on the nuclei and feels none.
    pub fn is_decoupled(&self) -> bool {
        self.lambda == 0.0 || (!self.bilinear && !self.self_polarization)
    }

    /// g₀/ħω_c for this mode.
    pub fn ratio(&self) -> f64 {
        self.lambda / (2.0 * self.omega_c).sqrt()
    }

    fn projected(&self, mu: &Vector3<f64>) -> f64 {
        self.polarization.dot(mu)
    }

    /// Photon state with vanishing initial electric field.
    pub fn zero_field_init(&self, mu: &Vector3<f64>) -> PhotonState {
        PhotonState {
            q: -self.lambda * self.projected(mu) / self.omega_c,
            p: 0.0,
        }
    }

    /// Acceleration of the photon coordinate.
    pub fn photon_force(&self, photon: &PhotonState, mu: &Vector3<f64>) -> f64 {
        let mut a = -self.omega_c * self.omega_c * photon.q;
        if self.bilinear {
            a -= self.omega_c * self.lambda * self.projected(mu);
        }
        a
    }

    /// Scalar prefactor `s` such that the nuclear cavity force is `-s · Dᵀε`.
    pub(crate) fn force_prefactor(&self, photon: &PhotonState, mu: &Vector3<f64>) -> f64 {
        let mut s = 0.0;
        if self.bilinear {
            s += self.omega_c * photon.q;
        }
        if self.self_polarization {
            s += self.lambda * self.projected(mu);
        }
        s * self.lambda
    }

    /// Force on the nuclei from the bilinear and self-polarization terms.
    pub fn nuclear_cavity_force(
        &self,
        photon: &PhotonState,
        system: &ModelSystem,
        positions: &[f64],
    ) -> Result<Vec<f64>> {
        let mu = system.dipole(positions)?;
        let n = system.n_dof();
        if self.is_decoupled() {
            return Ok(vec![0.0; n]);
        }
        let s = self.force_prefactor(photon, &mu);
        Ok(projected_dipole_gradient(system, &self.polarization)
            .into_iter()
            .map(|g| -s * g)
            .collect())
    }

    /// Photon plus interaction energy.
    pub fn cavity_energy(&self, photon: &PhotonState, mu: &Vector3<f64>) -> f64 {
        let w = self.omega_c;
        let mut e = 0.5 * photon.p * photon.p + 0.5 * w * w * photon.q * photon.q;
        let em = self.lambda * self.projected(mu);
        if self.bilinear {
            e += w * photon.q * em;
        }
        if self.self_polarization {
            e += 0.5 * em * em;
        }
        e
    }

    /// q·√(2ω_c), the dimensionless displacement ⟨a† + a⟩.
    pub fn dimensionless_displacement(&self, q: f64) -> f64 {
        q * (2.0 * self.omega_c).sqrt()
    }
}

/// Dᵀε: gradient of ε·μ with respect to all coordinates.
pub fn projected_dipole_gradient(system: &ModelSystem, polarization: &Vector3<f64>) -> Vec<f64> {
    let d = system.dipole_gradient();
    (0..system.n_dof())
        .map(|k| (0..3).map(|a| polarization[a] * d[(a, k)]).sum())
        .collect()
}

/// g₀/ħω_c = λ/√(2ω_c).
pub fn coupling_ratio(lambda: f64, omega_c: f64) -> Result<f64> {
    if !(omega_c > 0.0) {
        return Err(Error::arg("cavity frequency must be positive"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::arg("coupling strength must be non-negative"));
    }
    Ok(lambda / (2.0 * omega_c).sqrt())
}

/// Inverse of [`coupling_ratio`].
pub fn lambda_for_ratio(ratio: f64, omega_c: f64) -> Result<f64> {
    if !(omega_c > 0.0) {
        return Err(Error::arg("cavity frequency must be positive"));
    }
    if !(ratio >= 0.0) {
        return Err(Error::arg("coupling ratio must be non-negative"));
    }
    Ok(ratio * (2.0 * omega_c).sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhotonState {
    pub q: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub photon: PhotonState,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub potential: f64,
    pub kinetic: f64,
    pub cavity: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(potential: f64, kinetic: f64, cavity: f64) -> Self {
        EnergyBreakdown {
            potential,
            kinetic,
            cavity,
            total: potential + kinetic + cavity,
        }
    }
}

pub fn kinetic_energy(masses: &[f64], velocities: &[f64]) -> f64 {
    velocities
        .iter()
        .enumerate()
        .map(|(k, v)| 0.5 * masses[k / 3] * v * v)
        .sum()
}

/// Potential, kinetic and cavity energy of a full state.
pub fn total_energy(system: &ModelSystem, mode: &CavityMode, state: &FullState) -> Result<EnergyBreakdown> {
    let v = system.potential_energy(&state.positions)?;
    if state.velocities.len() != system.n_dof() {
        return Err(Error::arg("velocity dimension mismatch"));
    }
    let t = kinetic_energy(&system.masses(), &state.velocities);
    let mu = system.dipole(&state.positions)?;
    Ok(EnergyBreakdown::new(v, t, mode.cavity_energy(&state.photon, &mu)))
}
