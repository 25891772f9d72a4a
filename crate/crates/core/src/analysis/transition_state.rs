//! Relaxed bond scans and saddle-point refinement.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::analysis::modes::NormalModes;
use crate::error::{Error, Result};
use crate::model::ModelSystem;
use crate::units::{hartree_to_ev, hartree_to_wavenumber};

/// Scan of one bond length used to bracket the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TsScan {
    pub bond: (usize, usize),
    pub r_min: f64,
    pub r_max: f64,
    pub n_points: usize,
}

impl TsScan {
    /// Reactive bond from its minimum out to twice the barrier distance.
    pub fn for_system(system: &ModelSystem) -> Self {
        let p = system.reactive_potential();
        TsScan {
            bond: system.reactive_pair(),
            r_min: p.r0,
            r_max: p.r0 + 2.0 * (p.r_ts - p.r0),
            n_points: 33,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TsResult {
    /// Saddle geometry, bohr.
    pub geometry: Vec<f64>,
    /// Bond length at the saddle, bohr.
    pub bond_length: f64,
    /// Barrier relative to the reactant minimum, Hartree.
    pub barrier: f64,
    pub barrier_ev: f64,
    /// Second derivative of the relaxed profile at the saddle, Hartree/bohr².
    pub curvature: f64,
    /// Reduced mass of the bond pair, electron masses.
    pub reduced_mass: f64,
    /// |imaginary frequency| of the reactive coordinate, cm⁻¹.
    pub omega_b: f64,
    pub gradient_norm: f64,
    /// Number of imaginary normal modes at the saddle.
    pub negative_modes: usize,
    /// Relaxed profile `(r, E - E_min)`, bohr and Hartree.
    pub profile: Vec<(f64, f64)>,
}

const MAX_STEP: f64 = 0.3;

fn gradient(system: &ModelSystem, x: &[f64]) -> Result<DVector<f64>> {
    Ok(-DVector::from_vec(system.forces(x)?))
}

fn rigid_vectors(x: &[f64]) -> Vec<DVector<f64>> {
    let n = x.len() / 3;
    let mut com = [0.0; 3];
    for k in 0..n {
        for a in 0..3 {
            com[a] += x[3 * k + a] / n as f64;
        }
    }
    let mut out = Vec::with_capacity(6);
    for a in 0..3 {
        out.push(DVector::from_fn(3 * n, |c, _| if c % 3 == a { 1.0 } else { 0.0 }));
    }
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let mut v = DVector::zeros(3 * n);
        for k in 0..n {
            // e_a × (x_k - com)
            v[3 * k + c] = x[3 * k + b] - com[b];
            v[3 * k + b] = -(x[3 * k + c] - com[c]);
        }
        out.push(v);
    }
    out
}

/// Orthonormal basis of the span of `vectors`, dropping dependent ones.
fn orthonormalize(vectors: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for mut v in vectors {
        let scale = v.norm();
        for q in &basis {
            let c = q.dot(&v);
            v -= q * c;
        }
        for q in &basis {
            let c = q.dot(&v);
            v -= q * c;
        }
        let norm = v.norm();
        if norm > 1e-8 * scale.max(1e-300) {
            basis.push(v / norm);
        }
    }
    basis
}

fn project(v: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut out = v.clone();
    for q in basis {
        out -= q * q.dot(v);
    }
    out
}

fn projector(n: usize, basis: &[DVector<f64>]) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n);
    for q in basis {
        p -= q * q.transpose();
    }
    p
}

/// Eigen-pairs of `P H P` outside the excluded span.
fn projected_eigen(h: &DMatrix<f64>, basis: &[DVector<f64>]) -> Vec<(f64, DVector<f64>)> {
    let p = projector(h.nrows(), basis);
    let k = &p * h * &p;
    let k = (&k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::new(k);
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    (0..h.nrows())
        .filter_map(|c| {
            let v = eig.eigenvectors.column(c).into_owned();
            let leak: f64 = basis.iter().map(|q| q.dot(&v).powi(2)).sum();
            let lam = eig.eigenvalues[c];
            (leak < 1e-6 && lam.abs() > 1e-12 * scale).then_some((lam, v))
        })
        .collect()
}

fn capped(mut step: DVector<f64>) -> DVector<f64> {
    let n = step.norm();
    if n > MAX_STEP {
        step *= MAX_STEP / n;
    }
    step
}

fn bond_axis(x: &[f64], i: usize, j: usize) -> ([f64; 3], f64) {
    let d = [x[3 * j] - x[3 * i], x[3 * j + 1] - x[3 * i + 1], x[3 * j + 2] - x[3 * i + 2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    ([d[0] / r, d[1] / r, d[2] / r], r)
}

/// Move particles `i` and `j` symmetrically along their axis to length `r`.
fn set_bond_length(x: &mut [f64], i: usize, j: usize, r: f64) {
    let (u, r_cur) = bond_axis(x, i, j);
    let s = 0.5 * (r - r_cur);
    for a in 0..3 {
        x[3 * i + a] -= s * u[a];
        x[3 * j + a] += s * u[a];
    }
}

fn bond_vector(x: &[f64], i: usize, j: usize) -> DVector<f64> {
    let (u, _) = bond_axis(x, i, j);
    let mut b = DVector::zeros(x.len());
    for a in 0..3 {
        b[3 * i + a] = -u[a];
        b[3 * j + a] = u[a];
    }
    b
}

/// Minimize all coordinates other than the `(i, j)` distance, held at `r`.
pub fn constrained_minimum(system: &ModelSystem, start: &[f64], bond: (usize, usize), r: f64, tol: f64) -> Result<Vec<f64>> {
    let (i, j) = bond;
    let mut x = start.to_vec();
    set_bond_length(&mut x, i, j, r);
    let mut energy = system.potential_energy(&x)?;
    for _ in 0..200 {
        let g = gradient(system, &x)?;
        let b = bond_vector(&x, i, j);
        let mut excluded = rigid_vectors(&x);
        excluded.push(b.clone());
        let basis = orthonormalize(excluded);
        let pg = project(&g, &basis);
        if pg.norm() < tol {
            return Ok(x);
        }
        // Hessian of the Lagrangian: H - λ ∇²r with λ = g·b / b·b
        let mut h = system.analytic_hessian(&x)?;
        let lambda = g.dot(&b) / b.dot(&b);
        let (u, rr) = bond_axis(&x, i, j);
        for p in 0..3 {
            for q in 0..3 {
                let m = ((p == q) as u8 as f64 - u[p] * u[q]) / rr * lambda;
                h[(3 * i + p, 3 * i + q)] -= m;
                h[(3 * j + p, 3 * j + q)] -= m;
                h[(3 * i + p, 3 * j + q)] += m;
                h[(3 * j + p, 3 * i + q)] += m;
            }
        }
        let mut step = DVector::zeros(x.len());
        for (lam, v) in projected_eigen(&h, &basis) {
            step -= &v * (v.dot(&pg) / lam.abs());
        }
        let step = capped(step);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            set_bond_length(&mut trial, i, j, r);
            let e = system.potential_energy(&trial)?;
            if e <= energy + 1e-13 * (1.0 + energy.abs()) {
                x = trial;
                energy = e;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let g = project(&gradient(system, &x)?, &orthonormalize({
        let mut v = rigid_vectors(&x);
        v.push(bond_vector(&x, i, j));
        v
    }));
    if g.norm() < tol.max(1e-7) {
        Ok(x)
    } else {
        Err(Error::Search(format!(
            "constrained minimization at r = {r:.4} did not converge (|g| = {:.2e})",
            g.norm()
        )))
    }
}

/// Newton iteration on the full gradient with rigid-body motion projected out.
/// Converges to the stationary point in whose basin `start` lies.
pub fn newton_stationary(system: &ModelSystem, start: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut x = start.to_vec();
    for _ in 0..100 {
        let g = gradient(system, &x)?;
        if g.norm() < tol {
            return Ok(x);
        }
        let basis = orthonormalize(rigid_vectors(&x));
        let h = system.analytic_hessian(&x)?;
        let mut step = DVector::zeros(x.len());
        for (lam, v) in projected_eigen(&h, &basis) {
            step -= &v * (v.dot(&g) / lam);
        }
        let step = capped(step);
        for (a, s) in x.iter_mut().zip(step.iter()) {
            *a += s;
        }
    }
    let g = gradient(system, &x)?.norm();
    Err(Error::Search(format!("Newton iteration did not converge (|g| = {g:.2e})")))
}

/// Second derivative of the relaxed profile along the `(i, j)` distance at
/// a stationary point: `1 / (bᵀ H⁺ b)` with rigid motion excluded.
pub fn profile_curvature(system: &ModelSystem, x: &[f64], bond: (usize, usize)) -> Result<f64> {
    let h = system.analytic_hessian(x)?;
    let basis = orthonormalize(rigid_vectors(x));
    let b = bond_vector(x, bond.0, bond.1);
    let s: f64 = projected_eigen(&h, &basis)
        .iter()
        .map(|(lam, v)| v.dot(&b).powi(2) / lam)
        .sum();
    Ok(1.0 / s)
}

/// Relaxed scan of `scan.bond`, quadratic refinement of the interior
/// maximum and Newton refinement to the saddle point.
pub fn find_transition_state(system: &ModelSystem, scan: &TsScan) -> Result<TsResult> {
    let (i, j) = scan.bond;
    let n = system.n_particles();
    if i >= n || j >= n || i == j {
        return Err(Error::arg("invalid scan bond"));
    }
    if scan.n_points < 3 || !(scan.r_max > scan.r_min) || !(scan.r_min > 0.0) {
        return Err(Error::arg("scan needs at least 3 points on a positive, increasing range"));
    }
    let reactant = newton_stationary(system, &system.reference, 1e-10)?;
    let e_min = system.potential_energy(&reactant)?;

    let mut geoms = Vec::with_capacity(scan.n_points);
    let mut profile = Vec::with_capacity(scan.n_points);
    let mut x = reactant.clone();
    for k in 0..scan.n_points {
        let r = scan.r_min + (scan.r_max - scan.r_min) * k as f64 / (scan.n_points - 1) as f64;
        x = constrained_minimum(system, &x, scan.bond, r, 1e-9)?;
        profile.push((r, system.potential_energy(&x)? - e_min));
        geoms.push(x.clone());
    }
    let k = (1..scan.n_points - 1)
        .filter(|&k| profile[k].1 >= profile[k - 1].1 && profile[k].1 >= profile[k + 1].1)
        .max_by(|&a, &b| profile[a].1.total_cmp(&profile[b].1))
        .ok_or_else(|| Error::Search("no interior maximum in the relaxed scan".into()))?;

    let (r0, e0) = profile[k - 1];
    let (r1, e1) = profile[k];
    let (_, e2) = profile[k + 1];
    let h = r1 - r0;
    let denom = e0 - 2.0 * e1 + e2;
    let r_star = if denom < 0.0 { r1 + 0.5 * h * (e0 - e2) / denom } else { r1 };
    let guess = constrained_minimum(system, &geoms[k], scan.bond, r_star, 1e-9)?;
    let ts = newton_stationary(system, &guess, 1e-10)?;

    let gradient_norm = gradient(system, &ts)?.norm();
    let barrier = system.potential_energy(&ts)? - e_min;
    let curvature = profile_curvature(system, &ts, scan.bond)?;
    let (mi, mj) = (system.particles[i].mass(), system.particles[j].mass());
    let reduced_mass = mi * mj / (mi + mj);
    let omega_b = if curvature < 0.0 {
        hartree_to_wavenumber((-curvature / reduced_mass).sqrt())
    } else {
        return Err(Error::Search("stationary point is not a maximum along the scanned bond".into()));
    };
    let modes = NormalModes::of(system, &ts)?;
    let negative_modes = (0..modes.len())
        .filter(|&m| !modes.near_zero[m] && modes.eigenvalues[m] < 0.0)
        .count();
    Ok(TsResult {
        bond_length: system.distance(&ts, i, j),
        geometry: ts,
        barrier,
        barrier_ev: hartree_to_ev(barrier),
        curvature,
        reduced_mass,
        omega_b,
        gradient_norm,
        negative_modes,
        profile,
    })
}
