//! Hessians, normal modes and their polaritonic extension.

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::cavity::CavityMode;
use crate::error::{Error, Result};
use crate::model::ModelSystem;
use crate::units::hartree_to_wavenumber;

/// Modes below this magnitude (cm⁻¹) are flagged as near-zero.
pub const NEAR_ZERO_CM: f64 = 1.0;

/// Central finite-difference Hessian of the potential energy, before
/// symmetrization.
pub fn finite_difference_hessian_raw(system: &ModelSystem, positions: &[f64], h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    system.check_positions(positions)?;
    let n = positions.len();
    let mut x = positions.to_vec();
    let energy = |x: &[f64]| -> Result<f64> {
        let e = system.potential_energy(x)?;
        if e.is_finite() {
            Ok(e)
        } else {
            Err(Error::arg("non-finite energy in Hessian evaluation"))
        }
    };
    let e0 = energy(&x)?;
    let mut hess = DMatrix::zeros(n, n);
    for a in 0..n {
        let xa = x[a];
        x[a] = xa + h;
        let ep = energy(&x)?;
        x[a] = xa - h;
        let em = energy(&x)?;
        x[a] = xa;
        hess[(a, a)] = (ep - 2.0 * e0 + em) / (h * h);
        for b in 0..n {
            if b == a {
                continue;
            }
            let xb = x[b];
            let corner = |sa: f64, sb: f64, x: &mut Vec<f64>| -> Result<f64> {
                x[a] = xa + sa * h;
                x[b] = xb + sb * h;
                let e = energy(x);
                x[a] = xa;
                x[b] = xb;
                e
            };
            let pp = corner(1.0, 1.0, &mut x)?;
            let pm = corner(1.0, -1.0, &mut x)?;
            let mp = corner(-1.0, 1.0, &mut x)?;
            let mm = corner(-1.0, -1.0, &mut x)?;
            hess[(a, b)] = (pp - pm - mp + mm) / (4.0 * h * h);
        }
    }
    Ok(hess)
}

/// Symmetrized central-difference Hessian, `(H + Hᵀ)/2`.
pub fn hessian(system: &ModelSystem, positions: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let raw = finite_difference_hessian_raw(system, positions, h)?;
    Ok((&raw + raw.transpose()) * 0.5)
}

/// Mass-weighted normal modes.
#[derive(Debug, Clone, Serialize)]
pub struct NormalModes {
    /// ω² in atomic units, ascending.
    pub eigenvalues: Vec<f64>,
    /// Signed frequencies in cm⁻¹; imaginary modes are negative.
    pub frequencies: Vec<f64>,
    /// Mass-weighted orthonormal eigenvectors, one per column.
    #[serde(skip)]
    pub vectors: DMatrix<f64>,
    /// ∂μ/∂Q_j.
    pub mode_dipole: Vec<Vector3<f64>>,
    /// Mass per coordinate (1 for a photon coordinate).
    pub masses: Vec<f64>,
    pub near_zero: Vec<bool>,
}

fn signed_sqrt(v: f64) -> f64 {
    v.signum() * v.abs().sqrt()
}

impl NormalModes {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Signed angular frequency in atomic units.
    pub fn omega(&self, j: usize) -> f64 {
        signed_sqrt(self.eigenvalues[j])
    }

    pub fn vector(&self, j: usize) -> nalgebra::DVectorView<'_, f64> {
        self.vectors.column(j)
    }

    /// Build from eigen-pairs already in hand. Sorts ascending.
    pub fn from_parts(
        eigenvalues: Vec<f64>,
        vectors: DMatrix<f64>,
        mode_dipole: Vec<Vector3<f64>>,
        masses: Vec<f64>,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if vectors.ncols() != n || mode_dipole.len() != n || vectors.nrows() != masses.len() {
            return Err(Error::arg("inconsistent normal-mode dimensions"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let eig: Vec<f64> = order.iter().map(|&k| eigenvalues[k]).collect();
        let vecs = DMatrix::from_fn(vectors.nrows(), n, |r, c| vectors[(r, order[c])]);
        let dips = order.iter().map(|&k| mode_dipole[k]).collect();
        let frequencies: Vec<f64> = eig.iter().map(|&v| hartree_to_wavenumber(signed_sqrt(v))).collect();
        let near_zero = frequencies.iter().map(|f| f.abs() < NEAR_ZERO_CM).collect();
        Ok(NormalModes {
            eigenvalues: eig,
            frequencies,
            vectors: vecs,
            mode_dipole: dips,
            masses,
            near_zero,
        })
    }

    /// Normal modes of `system` at `positions` from the analytic Hessian.
    pub fn of(system: &ModelSystem, positions: &[f64]) -> Result<Self> {
        let h = system.analytic_hessian(positions)?;
        normal_modes(&h, &system.dof_masses(), &system.dipole_gradient())
    }

    /// Mass-weighted stiffness matrix `M^{-1/2} H M^{-1/2}` reassembled
    /// from the eigen-pairs.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues.clone()));
        &self.vectors * d * self.vectors.transpose()
    }

    /// Index of the vibrational mode closest to `cm`.
    pub fn closest(&self, cm: f64) -> usize {
        (0..self.len())
            .filter(|&j| !self.near_zero[j])
            .min_by(|&a, &b| {
                (self.frequencies[a] - cm)
                    .abs()
                    .total_cmp(&(self.frequencies[b] - cm).abs())
            })
            .unwrap_or(0)
    }
}

/// Diagonalize `M^{-1/2} H M^{-1/2}`.
pub fn normal_modes(hessian: &DMatrix<f64>, masses: &[f64], dipole_gradient: &DMatrix<f64>) -> Result<NormalModes> {
    let n = hessian.nrows();
    if hessian.ncols() != n || masses.len() != n {
        return Err(Error::arg("Hessian and mass dimensions disagree"));
    }
    if dipole_gradient.nrows() != 3 || dipole_gradient.ncols() != n {
        return Err(Error::arg("dipole gradient must be 3 x 3N"));
    }
    if masses.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::arg("masses must be positive"));
    }
    let scale = hessian.amax().max(f64::MIN_POSITIVE);
    if (hessian - hessian.transpose()).amax() > 1e-10 * scale {
        return Err(Error::arg("Hessian is not symmetric"));
    }
    let inv_sqrt: Vec<f64> = masses.iter().map(|m| 1.0 / m.sqrt()).collect();
    let k = DMatrix::from_fn(n, n, |a, b| hessian[(a, b)] * inv_sqrt[a] * inv_sqrt[b]);
    let k = (&k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::new(k);
    let mode_dipole = (0..n)
        .map(|j| {
            let mut d = Vector3::zeros();
            for c in 0..n {
                let disp = eig.eigenvectors[(c, j)] * inv_sqrt[c];
                for a in 0..3 {
                    d[a] += dipole_gradient[(a, c)] * disp;
                }
            }
            d
        })
        .collect();
    NormalModes::from_parts(
        eig.eigenvalues.iter().copied().collect(),
        eig.eigenvectors,
        mode_dipole,
        masses.to_vec(),
    )
}

/// Coupled vibration–photon modes in the harmonic approximation.
///
/// Stiffness in the (normal coordinate, photon) basis:
/// `ω_j² δ_jk + d̃_j d̃_k` (self-polarization), `ω_c²` on the photon
/// diagonal and `ω_c d̃_j` off-diagonal (bilinear), with `d̃_j = λ ε·∂μ/∂Q_j`.
pub fn polariton_modes(modes: &NormalModes, mode: &CavityMode) -> Result<NormalModes> {
    let n = modes.len();
    let rows = modes.vectors.nrows();
    let mut vectors = DMatrix::zeros(rows + 1, n + 1);
    vectors.view_mut((0, 0), (rows, n)).copy_from(&modes.vectors);
    vectors[(rows, n)] = 1.0;
    let mut masses = modes.masses.clone();
    masses.push(1.0);
    let mut dipoles = modes.mode_dipole.clone();
    dipoles.push(Vector3::zeros());
    let w2 = mode.omega_c * mode.omega_c;

    if mode.is_decoupled() {
        let mut eig = modes.eigenvalues.clone();
        eig.push(w2);
        return NormalModes::from_parts(eig, vectors, dipoles, masses);
    }

    let dt: Vec<f64> = modes
        .mode_dipole
        .iter()
        .map(|d| mode.lambda * mode.polarization.dot(d))
        .collect();
    let mut k = DMatrix::zeros(n + 1, n + 1);
    for a in 0..n {
        k[(a, a)] = modes.eigenvalues[a];
        if mode.self_polarization {
            for b in 0..n {
                k[(a, b)] += dt[a] * dt[b];
            }
        }
        if mode.bilinear {
            k[(a, n)] = mode.omega_c * dt[a];
            k[(n, a)] = mode.omega_c * dt[a];
        }
    }
    k[(n, n)] = w2;
    let eig = SymmetricEigen::new(k);
    let coupled = &vectors * &eig.eigenvectors;
    let coupled_dipoles = (0..=n)
        .map(|c| (0..n).fold(Vector3::zeros(), |acc, j| acc + modes.mode_dipole[j] * eig.eigenvectors[(j, c)]))
        .collect();
    NormalModes::from_parts(
        eig.eigenvalues.iter().copied().collect(),
        coupled,
        coupled_dipoles,
        masses,
    )
}

/// |⟨mode_j|s⟩| where `s` is the normalized mass-weighted stretch of the
/// `(i, j)` pair along its axis. Squares sum to one over a complete basis.
pub fn sic_weighted_spectrum(modes: &NormalModes, system: &ModelSystem, positions: &[f64], bond: (usize, usize)) -> Result<Vec<f64>> {
    let grad = system.bond_gradient(positions, bond.0, bond.1)?;
    let rows = modes.vectors.nrows();
    if rows < grad.len() {
        return Err(Error::arg("mode basis smaller than the system"));
    }
    let mut s = nalgebra::DVector::zeros(rows);
    for (k, g) in grad.iter().enumerate() {
        s[k] = g / modes.masses[k].sqrt();
    }
    let norm = s.norm();
    s /= norm;
    Ok((0..modes.len()).map(|j| modes.vector(j).dot(&s).abs()).collect())
}
