//! Six-bead surrogate of the fluoride / silane complex.
//!
//! Beads: F, Si, Me (lumped SiMe₃ methyls), C1, C2 (the ethynyl carbons) and
//! Ph (lumped phenyl). Only distance terms: five chain bonds, one reactive
//! Si–C1 bond, and cross springs that make the framework rigid.

use serde::{Deserialize, Serialize};

use crate::analysis::modes::{sic_weighted_spectrum, NormalModes};
use crate::analysis::transition_state::{find_transition_state, TsResult, TsScan};
use crate::error::{Error, Result};
use crate::model::{BondTerm, CouplingTerm, DipoleModel, ModelSystem, Particle};
use crate::reactive::{calibrate_reactive_bond, ReactiveTargets};
use crate::units::{ev_to_hartree, wavenumber_to_hartree, AMU_TO_ELECTRON_MASS};

pub const F: usize = 0;
pub const SI: usize = 1;
pub const ME: usize = 2;
pub const C1: usize = 3;
pub const C2: usize = 4;
pub const PH: usize = 5;

/// Bond order used by [`build_surrogate`]; indices into `ModelSystem::bonds`.
pub const BOND_F_SI: usize = 0;
pub const BOND_SI_ME: usize = 1;
pub const BOND_F_ME: usize = 2;
pub const BOND_C_C: usize = 3;
pub const BOND_C_PH: usize = 4;
pub const BOND_C1_PH: usize = 5;
pub const BOND_SI_C: usize = 6;

const LABELS: [&str; 6] = ["F", "Si", "Me", "C1", "C2", "Ph"];
const MASSES: [f64; 6] = [19.0, 28.0, 45.0, 12.0, 12.0, 77.0];

/// Bent, non-planar reference geometry (bohr) with Si at the origin and the
/// Si–C1 bond along x.
const GEOMETRY: [[f64; 3]; 6] = [
    [-2.522, 2.050, 0.0],
    [0.0, 0.0, 0.0],
    [0.967, 2.075, 2.714],
    [3.6, 0.0, 0.0],
    [4.454, -1.052, 1.821],
    [6.710, -5.879, 1.918],
];

/// Tunable construction parameters. Force constants in Hartree/bohr².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateParams {
    pub charges: [f64; 6],
    pub k_f_si: f64,
    pub k_si_me: f64,
    pub k_f_me: f64,
    pub k_c_c: f64,
    pub k_c1_ph: f64,
    pub k_c_ph: f64,
    /// Cross springs F–C1, Me–C1, Si–C2, Me–C2, Si–Ph.
    pub k_cross: f64,
    /// Starting guess for the reactive bond curvature at the minimum;
    /// tuned to place the bright mode.
    pub k_si_c: f64,
    /// Reactive bond barrier distance, bohr.
    pub r_ts: f64,
    /// Relaxed barrier, eV.
    pub barrier_ev: f64,
    /// Relaxed barrier frequency, cm⁻¹.
    pub omega_b_cm: f64,
    /// Depth of the outer inflection point below the barrier top, eV.
    pub outer_drop_ev: f64,
    /// Target frequency of the Si–C dominated bright mode, cm⁻¹.
    pub bright_mode_cm: f64,
    /// Cubic couplings `(bond_a, bond_b, g3)`.
    pub couplings: Vec<(usize, usize, f64)>,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            charges: [-0.7, 1.0, -0.2, -0.6, -0.2, -0.3],
            k_f_si: 0.15,
            k_si_me: 0.16,
            k_f_me: 0.02,
            k_c_c: 1.05,
            k_c1_ph: 0.05,
            k_c_ph: 0.5,
            k_cross: 0.03,
            k_si_c: 0.21,
            r_ts: 4.9,
            barrier_ev: 0.35,
            omega_b_cm: 86.0,
            outer_drop_ev: 0.1,
            bright_mode_cm: 856.0,
            couplings: vec![(BOND_F_SI, BOND_C_C, 0.01), (BOND_C_C, BOND_C_PH, 0.01)],
        }
    }
}

/// The surrogate together with its calibration record.
#[derive(Debug, Clone, Serialize)]
pub struct Surrogate {
    pub system: ModelSystem,
    pub params: SurrogateParams,
    /// Tuned Si–C curvature at the minimum, Hartree/bohr².
    pub k_si_c: f64,
    /// Index of the bright mode among the reference normal modes.
    pub bright_mode: usize,
    pub bright_frequency: f64,
    pub bright_weight: f64,
    pub transition_state: TsResult,
}

fn reference() -> Vec<f64> {
    GEOMETRY.iter().flatten().copied().collect()
}

fn distance(x: &[f64], i: usize, j: usize) -> f64 {
    (0..3).map(|a| (x[3 * j + a] - x[3 * i + a]).powi(2)).sum::<f64>().sqrt()
}

fn assemble(p: &SurrogateParams, targets: &ReactiveTargets) -> Result<ModelSystem> {
    let x = reference();
    let particles = (0..6)
        .map(|k| Particle::new(LABELS[k], MASSES[k], p.charges[k]))
        .collect();
    let spring = |i: usize, j: usize, k: f64| BondTerm::harmonic(i, j, k, distance(&x, i, j));
    let mut bonds = vec![
        spring(F, SI, p.k_f_si),
        spring(SI, ME, p.k_si_me),
        spring(F, ME, p.k_f_me),
        spring(C1, C2, p.k_c_c),
        spring(C2, PH, p.k_c_ph),
        spring(C1, PH, p.k_c1_ph),
        BondTerm::reactive(SI, C1, calibrate_reactive_bond(targets)?),
    ];
    for (i, j) in [(F, C1), (ME, C1), (SI, C2), (ME, C2), (SI, PH)] {
        bonds.push(spring(i, j, p.k_cross));
    }
    let couplings = p
        .couplings
        .iter()
        .map(|&(a, b, g3)| CouplingTerm { bond_a: a, bond_b: b, g3 })
        .collect();
    ModelSystem::new(particles, bonds, couplings, DipoleModel::default(), BOND_SI_C, x)
}

/// Mode with the largest Si–C stretch weight among vibrations and its
/// `(index, frequency cm⁻¹, weight)`.
pub fn bright_mode(system: &ModelSystem) -> Result<(usize, f64, f64)> {
    let modes = NormalModes::of(system, &system.reference)?;
    let w = sic_weighted_spectrum(&modes, system, &system.reference, system.reactive_pair())?;
    let j = (0..modes.len())
        .filter(|&j| !modes.near_zero[j])
        .max_by(|&a, &b| w[a].total_cmp(&w[b]))
        .ok_or_else(|| Error::arg("surrogate has no vibrational modes"))?;
    Ok((j, modes.frequencies[j], w[j]))
}

fn reactive_mass() -> f64 {
    let (a, b) = (MASSES[SI] * AMU_TO_ELECTRON_MASS, MASSES[C1] * AMU_TO_ELECTRON_MASS);
    a * b / (a + b)
}

/// Build the surrogate: tune the Si–C curvature so the bright mode sits at
/// the target frequency, then adjust the bond calibration so that the
/// relaxed barrier and barrier frequency hit their targets.
pub fn build_surrogate(p: &SurrogateParams) -> Result<Surrogate> {
    let r0 = distance(&reference(), SI, C1);
    let barrier = ev_to_hartree(p.barrier_ev);
    let curvature_ts = -reactive_mass() * wavenumber_to_hartree(p.omega_b_cm).powi(2);
    let mut targets = ReactiveTargets {
        barrier,
        r0,
        r_ts: p.r_ts,
        curvature_min: p.k_si_c,
        curvature_ts,
        outer_drop: ev_to_hartree(p.outer_drop_ev),
    };

    let freq = |k: f64| -> Result<f64> {
        let t = ReactiveTargets { curvature_min: k, ..targets };
        Ok(bright_mode(&assemble(p, &t)?)?.1 - p.bright_mode_cm)
    };
    let (mut k0, mut k1) = (p.k_si_c, p.k_si_c * 1.05);
    let (mut f0, mut f1) = (freq(k0)?, freq(k1)?);
    for _ in 0..50 {
        if f1.abs() < 1e-6 {
            break;
        }
        let k2 = k1 - f1 * (k1 - k0) / (f1 - f0);
        if !(k2 > 0.0) || !k2.is_finite() {
            return Err(Error::Calibration {
                message: "bright-mode tuning left the positive range".into(),
                residuals: vec![f1],
            });
        }
        (k0, f0) = (k1, f1);
        k1 = k2;
        f1 = freq(k1)?;
    }
    if f1.abs() > 1e-3 {
        return Err(Error::Calibration {
            message: "bright-mode frequency tuning did not converge".into(),
            residuals: vec![f1],
        });
    }
    targets.curvature_min = k1;

    let mut system = assemble(p, &targets)?;
    let mut ts = find_transition_state(&system, &TsScan::for_system(&system))?;
    for _ in 0..60 {
        let db = barrier - ts.barrier;
        let dk = curvature_ts - ts.curvature;
        let dr = p.r_ts - ts.bond_length;
        if db.abs() < 1e-11 && dk.abs() < 1e-11 && dr.abs() < 1e-9 {
            break;
        }
        targets.barrier += db;
        targets.curvature_ts += dk;
        targets.r_ts += dr;
        system = assemble(p, &targets)?;
        ts = find_transition_state(&system, &TsScan::for_system(&system))?;
    }
    let residuals = vec![ts.barrier - barrier, ts.curvature - curvature_ts];
    if residuals[0].abs() > 1e-9 || residuals[1].abs() > 1e-9 {
        return Err(Error::Calibration {
            message: "relaxed barrier calibration did not converge".into(),
            residuals,
        });
    }
    let (bright, bright_frequency, bright_weight) = bright_mode(&system)?;
    Ok(Surrogate {
        system,
        params: p.clone(),
        k_si_c: targets.curvature_min,
        bright_mode: bright,
        bright_frequency,
        bright_weight,
        transition_state: ts,
    })
}

/// Reference geometry with F pulled `offset` bohr outward along Si→F,
/// the starting point of the approach trajectories.
pub fn approach_geometry(system: &ModelSystem, offset: f64) -> Result<Vec<f64>> {
    if !offset.is_finite() {
        return Err(Error::arg("approach offset must be finite"));
    }
    let mut x = system.reference.clone();
    let r = distance(&x, SI, F);
    for a in 0..3 {
        x[3 * F + a] += offset * (x[3 * F + a] - x[3 * SI + a]) / r;
    }
    system.check_positions(&x)?;
    Ok(x)
}

/// The default surrogate.
pub fn build_pta_surrogate() -> Result<ModelSystem> {
    Ok(build_surrogate(&SurrogateParams::default())?.system)
}
