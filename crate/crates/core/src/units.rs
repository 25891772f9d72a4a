//! Unit conversions between atomic units (used internally) and the
//! laboratory units written to files.

use serde::Serialize;

pub const HARTREE_TO_WAVENUMBER: f64 = 219474.6313632;
pub const HARTREE_TO_EV: f64 = 27.211386245988;
pub const AMU_TO_ELECTRON_MASS: f64 = 1822.888486209;
/// Boltzmann constant in Hartree per kelvin.
pub const BOLTZMANN_HARTREE: f64 = 3.166811563e-6;
/// Atomic time units per femtosecond.
pub const FS_TO_AU: f64 = 41.341373335;
pub const BOHR_TO_ANGSTROM: f64 = 0.529177210903;

pub fn wavenumber_to_hartree(cm: f64) -> f64 {
    cm / HARTREE_TO_WAVENUMBER
}

pub fn hartree_to_wavenumber(ha: f64) -> f64 {
    ha * HARTREE_TO_WAVENUMBER
}

pub fn ev_to_hartree(ev: f64) -> f64 {
    ev / HARTREE_TO_EV
}

pub fn hartree_to_ev(ha: f64) -> f64 {
    ha * HARTREE_TO_EV
}

pub fn fs_to_au(fs: f64) -> f64 {
    fs * FS_TO_AU
}

pub fn au_to_fs(t: f64) -> f64 {
    t / FS_TO_AU
}

pub fn angstrom_to_bohr(a: f64) -> f64 {
    a / BOHR_TO_ANGSTROM
}

pub fn bohr_to_angstrom(b: f64) -> f64 {
    b * BOHR_TO_ANGSTROM
}

/// Conversion table written into every run manifest.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct UnitTable {
    pub hartree_to_wavenumber: f64,
    pub hartree_to_ev: f64,
    pub amu_to_electron_mass: f64,
    pub boltzmann_hartree_per_kelvin: f64,
    pub fs_to_au_time: f64,
    pub bohr_to_angstrom: f64,
}

impl Default for UnitTable {
    fn default() -> Self {
        UnitTable {
            hartree_to_wavenumber: HARTREE_TO_WAVENUMBER,
            hartree_to_ev: HARTREE_TO_EV,
            amu_to_electron_mass: AMU_TO_ELECTRON_MASS,
            boltzmann_hartree_per_kelvin: BOLTZMANN_HARTREE,
            fs_to_au_time: FS_TO_AU,
            bohr_to_angstrom: BOHR_TO_ANGSTROM,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert!((hartree_to_wavenumber(wavenumber_to_hartree(856.0)) - 856.0).abs() < 1e-12);
        assert!((au_to_fs(fs_to_au(0.25)) - 0.25).abs() < 1e-15);
        assert!((ev_to_hartree(0.35) - 0.0128622).abs() < 1e-7);
    }
}
