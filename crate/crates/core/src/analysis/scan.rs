//! Cavity-frequency and coupling-strength scans over a paired ensemble.
//!
//! Every row propagates the same initial conditions, so row differences
//! come from the cavity and not from sampling. A λ = 0 baseline row is
//! always first.

use nalgebra::Vector3;
use serde::Serialize;

use crate::cavity::{coupling_ratio, lambda_for_ratio, CavityMode};
use crate::ensemble::{run_ensemble, EnsembleResult, InitialCondition, Propagation, ReactionStatistics, Window};
use crate::error::{Error, Result};
use crate::model::ModelSystem;
use crate::units::wavenumber_to_hartree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub propagation: Propagation,
    pub window: Window,
    pub polarization: Vector3<f64>,
    pub self_polarization: bool,
    pub bilinear: bool,
    pub keep_trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub label: String,
    pub omega_c_cm: f64,
    pub ratio: f64,
    pub lambda: f64,
    pub statistics: ReactionStatistics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub row: ScanRow,
    #[serde(skip)]
    pub ensemble: EnsembleResult,
}

fn point(
    system: &ModelSystem,
    initial: &[InitialCondition],
    settings: &ScanSettings,
    label: String,
    omega_cm: f64,
    lambda: f64,
) -> Result<ScanPoint> {
    let omega = wavenumber_to_hartree(omega_cm);
    let mode = CavityMode::new(omega, lambda, settings.polarization)?.with_terms(settings.bilinear, settings.self_polarization);
    let ensemble = run_ensemble(
        system,
        &mode,
        initial,
        &settings.propagation,
        settings.window,
        settings.keep_trajectories,
    )?;
    Ok(ScanPoint {
        row: ScanRow {
            label,
            omega_c_cm: omega_cm,
            ratio: coupling_ratio(lambda, omega)?,
            lambda,
            statistics: ensemble.statistics,
        },
        ensemble,
    })
}

fn baseline(system: &ModelSystem, initial: &[InitialCondition], settings: &ScanSettings, omega_cm: f64) -> Result<ScanPoint> {
    point(system, initial, settings, "baseline".into(), omega_cm, 0.0)
}

/// One row per cavity frequency (cm⁻¹) at fixed `g₀/ħω_c`.
pub fn resonance_scan(
    system: &ModelSystem,
    initial: &[InitialCondition],
    settings: &ScanSettings,
    omegas_cm: &[f64],
    ratio: f64,
) -> Result<Vec<ScanPoint>> {
    let first = *omegas_cm.first().ok_or_else(|| Error::arg("resonance scan needs at least one frequency"))?;
    let mut out = vec![baseline(system, initial, settings, first)?];
    for &w in omegas_cm {
        let lambda = lambda_for_ratio(ratio, wavenumber_to_hartree(w))?;
        out.push(point(system, initial, settings, format!("omega_c={w}"), w, lambda)?);
    }
    Ok(out)
}

/// One row per coupling ratio at fixed cavity frequency (cm⁻¹).
pub fn coupling_scan(
    system: &ModelSystem,
    initial: &[InitialCondition],
    settings: &ScanSettings,
    omega_cm: f64,
    ratios: &[f64],
) -> Result<Vec<ScanPoint>> {
    if ratios.is_empty() {
        return Err(Error::arg("coupling scan needs at least one ratio"));
    }
    let omega = wavenumber_to_hartree(omega_cm);
    let mut out = vec![baseline(system, initial, settings, omega_cm)?];
    for &r in ratios {
        let lambda = lambda_for_ratio(r, omega)?;
        out.push(point(system, initial, settings, format!("ratio={r}"), omega_cm, lambda)?);
    }
    Ok(out)
}
