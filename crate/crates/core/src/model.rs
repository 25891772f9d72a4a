//! Molecular model: particles, bonded distance terms, cubic mode couplings
//! and a fixed-charge dipole.
//!
//! Positions are flat `3N` slices in bohr, `[x0, y0, z0, x1, ...]`.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reactive::ReactivePotential;
use crate::units::AMU_TO_ELECTRON_MASS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub label: String,
    /// Atomic mass units.
    pub mass_amu: f64,
    /// Partial charge, elementary charges.
    pub charge: f64,
}

impl Particle {
    pub fn new(label: &str, mass_amu: f64, charge: f64) -> Self {
        Particle {
            label: label.to_string(),
            mass_amu,
            charge,
        }
    }

    /// Mass in electron masses.
    pub fn mass(&self) -> f64 {
        self.mass_amu * AMU_TO_ELECTRON_MASS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BondKind {
    /// ½ k (r - r0)², k in Hartree/bohr², r0 in bohr.
    Harmonic { k: f64, r0: f64 },
    ReactiveDoubleWell(ReactivePotential),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondTerm {
    pub i: usize,
    pub j: usize,
    pub kind: BondKind,
}

impl BondTerm {
    pub fn harmonic(i: usize, j: usize, k: f64, r0: f64) -> Self {
        BondTerm {
            i,
            j,
            kind: BondKind::Harmonic { k, r0 },
        }
    }

    pub fn reactive(i: usize, j: usize, potential: ReactivePotential) -> Self {
        BondTerm {
            i,
            j,
            kind: BondKind::ReactiveDoubleWell(potential),
        }
    }

    /// Reference length used by coupling terms.
    pub fn rest_length(&self) -> f64 {
        match &self.kind {
            BondKind::Harmonic { r0, .. } => *r0,
            BondKind::ReactiveDoubleWell(p) => p.r0,
        }
    }

    /// Energy and its first two derivatives with respect to r.
    pub fn evaluate(&self, r: f64) -> (f64, f64, f64) {
        match &self.kind {
            BondKind::Harmonic { k, r0 } => {
                let dr = r - r0;
                (0.5 * k * dr * dr, k * dr, *k)
            }
            BondKind::ReactiveDoubleWell(p) => p.evaluate(r),
        }
    }

    fn is_zero_length_spring(&self) -> bool {
        matches!(self.kind, BondKind::Harmonic { r0, .. } if r0 == 0.0)
    }
}

/// Cubic coupling `g3 [ΔA ΔB² + ΔB ΔA²]` between the deviations of two bonds
/// from their rest lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTerm {
    pub bond_a: usize,
    pub bond_b: usize,
    pub g3: f64,
}

impl CouplingTerm {
    /// Energy, gradient (∂/∂ΔA, ∂/∂ΔB) and Hessian (AA, BB, AB).
    fn evaluate(&self, da: f64, db: f64) -> (f64, [f64; 2], [f64; 3]) {
        let g = self.g3;
        let e = g * (da * db * db + db * da * da);
        let grad = [g * (db * db + 2.0 * da * db), g * (2.0 * da * db + da * da)];
        let hess = [2.0 * g * db, 2.0 * g * da, 2.0 * g * (da + db)];
        (e, grad, hess)
    }
}

/// Dipole μ(R) = Σ qᵢ Rᵢ + D_extra · R.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DipoleModel {
    /// Optional constant 3×3N augmentation, row-major.
    pub extra: Option<Vec<f64>>,
}

/// Per-bond geometry and energy derivatives at one configuration.
#[derive(Debug, Clone, Copy)]
struct BondEval {
    r: f64,
    unit: Vector3<f64>,
    delta: f64,
    d_e: f64,
    d2_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSystem {
    pub particles: Vec<Particle>,
    pub bonds: Vec<BondTerm>,
    pub couplings: Vec<CouplingTerm>,
    pub dipole: DipoleModel,
    pub reactive_bond: usize,
    /// Reference geometry (a potential-energy minimum), bohr.
    pub reference: Vec<f64>,
}

fn particle(x: &[f64], i: usize) -> Vector3<f64> {
    Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])
}

impl ModelSystem {
    pub fn new(
        particles: Vec<Particle>,
        bonds: Vec<BondTerm>,
        couplings: Vec<CouplingTerm>,
        dipole: DipoleModel,
        reactive_bond: usize,
        reference: Vec<f64>,
    ) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::arg("system has no particles"));
        }
        for (k, p) in particles.iter().enumerate() {
            if !(p.mass_amu > 0.0) || !p.charge.is_finite() {
                return Err(Error::arg(format!("particle {k} ({}) invalid", p.label)));
            }
            if particles[..k].iter().any(|q| q.label == p.label) {
                return Err(Error::arg(format!("duplicate particle label {}", p.label)));
            }
        }
        for (k, b) in bonds.iter().enumerate() {
            if b.i >= n || b.j >= n || b.i == b.j {
                return Err(Error::arg(format!("bond {k} has invalid particle indices")));
            }
            if let BondKind::Harmonic { k: kk, r0 } = b.kind {
                if !(kk > 0.0) || !(r0 >= 0.0) {
                    return Err(Error::arg(format!("bond {k}: need k > 0 and r0 >= 0")));
                }
            }
        }
        for (k, c) in couplings.iter().enumerate() {
            if c.bond_a >= bonds.len() || c.bond_b >= bonds.len() || c.bond_a == c.bond_b {
                return Err(Error::arg(format!("coupling {k} has invalid bond indices")));
            }
            if !c.g3.is_finite() {
                return Err(Error::arg(format!("coupling {k} is not finite")));
            }
        }
        let reactive = bonds
            .iter()
            .filter(|b| matches!(b.kind, BondKind::ReactiveDoubleWell(_)))
            .count();
        if reactive != 1
            || !matches!(
                bonds.get(reactive_bond).map(|b| &b.kind),
                Some(BondKind::ReactiveDoubleWell(_))
            )
        {
            return Err(Error::arg(
                "exactly one reactive double-well bond must be designated",
            ));
        }
        if let Some(extra) = &dipole.extra {
            if extra.len() != 9 * n || extra.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("dipole augmentation must be a finite 3x3N matrix"));
            }
        }
        if reference.len() != 3 * n || reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("reference geometry must be 3N finite values"));
        }
        Ok(ModelSystem {
            particles,
            bonds,
            couplings,
            dipole,
            reactive_bond,
            reference,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn n_dof(&self) -> usize {
        3 * self.particles.len()
    }

    /// Particle masses in electron masses.
    pub fn masses(&self) -> Vec<f64> {
        self.particles.iter().map(Particle::mass).collect()
    }

    /// Masses repeated per Cartesian coordinate (length 3N).
    pub fn dof_masses(&self) -> Vec<f64> {
        self.particles
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.mass(), 3))
            .collect()
    }

    pub fn total_charge(&self) -> f64 {
        self.particles.iter().map(|p| p.charge).sum()
    }

    pub fn reactive_potential(&self) -> &ReactivePotential {
        match &self.bonds[self.reactive_bond].kind {
            BondKind::ReactiveDoubleWell(p) => p,
            BondKind::Harmonic { .. } => unreachable!("validated at construction"),
        }
    }

    /// Particle indices of the reactive bond.
    pub fn reactive_pair(&self) -> (usize, usize) {
        let b = &self.bonds[self.reactive_bond];
        (b.i, b.j)
    }

    /// Reduced mass of the reactive pair, electron masses.
    pub fn reactive_reduced_mass(&self) -> f64 {
        let (i, j) = self.reactive_pair();
        let (mi, mj) = (self.particles[i].mass(), self.particles[j].mass());
        mi * mj / (mi + mj)
    }

    pub fn distance(&self, positions: &[f64], i: usize, j: usize) -> f64 {
        (particle(positions, j) - particle(positions, i)).norm()
    }

    pub fn check_positions(&self, positions: &[f64]) -> Result<()> {
        if positions.len() != self.n_dof() {
            return Err(Error::arg(format!(
                "expected {} coordinates, got {}",
                self.n_dof(),
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite coordinate"));
        }
        Ok(())
    }

    fn bond_evals(&self, x: &[f64]) -> (f64, Vec<BondEval>) {
        let mut energy = 0.0;
        let mut evals: Vec<BondEval> = self
            .bonds
            .iter()
            .map(|b| {
                let d = particle(x, b.j) - particle(x, b.i);
                let r = d.norm();
                let unit = if r > 0.0 { d / r } else { Vector3::zeros() };
                let (e, de, d2e) = b.evaluate(r);
                energy += e;
                BondEval {
                    r,
                    unit,
                    delta: r - b.rest_length(),
                    d_e: de,
                    d2_e: d2e,
                }
            })
            .collect();
        for c in &self.couplings {
            let (e, g, _) = c.evaluate(evals[c.bond_a].delta, evals[c.bond_b].delta);
            energy += e;
            evals[c.bond_a].d_e += g[0];
            evals[c.bond_b].d_e += g[1];
        }
        (energy, evals)
    }

    /// Potential energy (Hartree).
    pub fn potential_energy(&self, positions: &[f64]) -> Result<f64> {
        self.check_positions(positions)?;
        Ok(self.bond_evals(positions).0)
    }

    /// Energy and forces without argument validation; used by the propagator.
    /// Non-finite results are reported by the caller.
    pub(crate) fn energy_forces_into(&self, x: &[f64], forces: &mut [f64]) -> f64 {
        forces.iter_mut().for_each(|f| *f = 0.0);
        let (energy, evals) = self.bond_evals(x);
        for (b, ev) in self.bonds.iter().zip(&evals) {
            let f = if ev.r > 0.0 {
                ev.unit * ev.d_e
            } else if b.is_zero_length_spring() && ev.d_e == 0.0 {
                Vector3::zeros()
            } else {
                Vector3::repeat(f64::NAN)
            };
            // dr/dx_i = -u, dr/dx_j = +u
            for a in 0..3 {
                forces[3 * b.i + a] += f[a];
                forces[3 * b.j + a] -= f[a];
            }
        }
        energy
    }

    /// Forces −∇V (Hartree/bohr).
    pub fn forces(&self, positions: &[f64]) -> Result<Vec<f64>> {
        self.check_positions(positions)?;
        let mut f = vec![0.0; self.n_dof()];
        self.energy_forces_into(positions, &mut f);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("forces are not finite (coincident particles?)"));
        }
        Ok(f)
    }

    /// Name of the first term whose energy is not finite at `x`, if any.
    pub(crate) fn offending_term(&self, x: &[f64]) -> Option<String> {
        for (k, b) in self.bonds.iter().enumerate() {
            let r = self.distance(x, b.i, b.j);
            let (e, de, _) = b.evaluate(r);
            if !e.is_finite() || !de.is_finite() || r == 0.0 && !b.is_zero_length_spring() {
                return Some(format!(
                    "bond {k} ({}-{})",
                    self.particles[b.i].label, self.particles[b.j].label
                ));
            }
        }
        None
    }

    /// Analytic Hessian of the potential energy.
    pub fn analytic_hessian(&self, positions: &[f64]) -> Result<DMatrix<f64>> {
        self.check_positions(positions)?;
        let n = self.n_dof();
        let (_, evals) = self.bond_evals(positions);
        let mut d2 = DMatrix::<f64>::zeros(self.bonds.len(), self.bonds.len());
        for (k, ev) in evals.iter().enumerate() {
            d2[(k, k)] = ev.d2_e;
        }
        for c in &self.couplings {
            let (_, _, h) = c.evaluate(evals[c.bond_a].delta, evals[c.bond_b].delta);
            d2[(c.bond_a, c.bond_a)] += h[0];
            d2[(c.bond_b, c.bond_b)] += h[1];
            d2[(c.bond_a, c.bond_b)] += h[2];
            d2[(c.bond_b, c.bond_a)] += h[2];
        }
        let mut hess = DMatrix::<f64>::zeros(n, n);
        // first-derivative part: (dE/dr) ∇²r
        for (b, ev) in self.bonds.iter().zip(&evals) {
            let block = if ev.r > 0.0 {
                (nalgebra::Matrix3::identity() - ev.unit * ev.unit.transpose()) * (ev.d_e / ev.r)
            } else if b.is_zero_length_spring() {
                // ∇²(½k r²) has no separate first-derivative part
                nalgebra::Matrix3::zeros()
            } else {
                return Err(Error::arg("coincident particles in bonded pair"));
            };
            add_pair_block(&mut hess, b.i, b.j, &block);
        }
        // second-derivative part: Σ ∂²E/∂r_a∂r_b ∇r_a ∇r_bᵀ
        for (a, ba) in self.bonds.iter().enumerate() {
            for (c, bc) in self.bonds.iter().enumerate() {
                let w = d2[(a, c)];
                if w == 0.0 {
                    continue;
                }
                if ba.is_zero_length_spring() && evals[a].r == 0.0 {
                    continue;
                }
                let outer = evals[a].unit * evals[c].unit.transpose() * w;
                for (pa, sa) in [(ba.i, -1.0), (ba.j, 1.0)] {
                    for (pc, sc) in [(bc.i, -1.0), (bc.j, 1.0)] {
                        for r in 0..3 {
                            for s in 0..3 {
                                hess[(3 * pa + r, 3 * pc + s)] += sa * sc * outer[(r, s)];
                            }
                        }
                    }
                }
            }
        }
        // zero-length springs: ∇²(½k|d|²) = k [[I, -I], [-I, I]]
        for b in &self.bonds {
            if let BondKind::Harmonic { k, r0 } = b.kind {
                // away from r = 0 this is already counted as k uuᵀ + k(I - uuᵀ)
                if r0 == 0.0 && self.distance(positions, b.i, b.j) == 0.0 {
                    add_pair_block(&mut hess, b.i, b.j, &(nalgebra::Matrix3::identity() * k));
                }
            }
        }
        Ok(hess)
    }

    /// Molecular dipole (e·bohr).
    pub fn dipole(&self, positions: &[f64]) -> Result<Vector3<f64>> {
        self.check_positions(positions)?;
        Ok(self.dipole_unchecked(positions))
    }

    pub(crate) fn dipole_unchecked(&self, x: &[f64]) -> Vector3<f64> {
        let mut mu = Vector3::zeros();
        for (i, p) in self.particles.iter().enumerate() {
            mu += particle(x, i) * p.charge;
        }
        if let Some(extra) = &self.dipole.extra {
            let n = x.len();
            for a in 0..3 {
                mu[a] += extra[a * n..(a + 1) * n]
                    .iter()
                    .zip(x)
                    .map(|(d, v)| d * v)
                    .sum::<f64>();
            }
        }
        mu
    }

    /// Constant dipole gradient ∂μ/∂R, a 3×3N matrix.
    pub fn dipole_gradient(&self) -> DMatrix<f64> {
        let n = self.n_dof();
        let mut d = DMatrix::<f64>::zeros(3, n);
        for (i, p) in self.particles.iter().enumerate() {
            for a in 0..3 {
                d[(a, 3 * i + a)] = p.charge;
            }
        }
        if let Some(extra) = &self.dipole.extra {
            for a in 0..3 {
                for k in 0..n {
                    d[(a, k)] += extra[a * n + k];
                }
            }
        }
        d
    }

    /// Gradient of a bond length with respect to all coordinates.
    pub fn bond_gradient(&self, positions: &[f64], i: usize, j: usize) -> Result<Vec<f64>> {
        self.check_positions(positions)?;
        if i >= self.n_particles() || j >= self.n_particles() || i == j {
            return Err(Error::arg("invalid bond particle indices"));
        }
        let d = particle(positions, j) - particle(positions, i);
        let r = d.norm();
        if r == 0.0 {
            return Err(Error::arg("coincident particles"));
        }
        let u = d / r;
        let mut g = vec![0.0; self.n_dof()];
        for a in 0..3 {
            g[3 * i + a] = -u[a];
            g[3 * j + a] = u[a];
        }
        Ok(g)
    }
}

fn add_pair_block(hess: &mut DMatrix<f64>, i: usize, j: usize, block: &nalgebra::Matrix3<f64>) {
    for r in 0..3 {
        for s in 0..3 {
            let v = block[(r, s)];
            hess[(3 * i + r, 3 * i + s)] += v;
            hess[(3 * j + r, 3 * j + s)] += v;
            hess[(3 * i + r, 3 * j + s)] -= v;
            hess[(3 * j + r, 3 * i + s)] -= v;
        }
    }
}

/// Central finite-difference gradient of the potential, used as a
/// verification oracle.
pub fn finite_difference_forces(system: &ModelSystem, positions: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut x = positions.to_vec();
    let mut out = vec![0.0; x.len()];
    for k in 0..x.len() {
        let x0 = x[k];
        x[k] = x0 + h;
        let ep = system.potential_energy(&x)?;
        x[k] = x0 - h;
        let em = system.potential_energy(&x)?;
        x[k] = x0;
        out[k] = -(ep - em) / (2.0 * h);
    }
    Ok(out)
}
