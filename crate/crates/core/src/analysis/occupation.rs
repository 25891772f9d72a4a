//! Harmonic mode-energy projection of trajectories onto a frozen
//! normal-mode basis.

use serde::Serialize;

use crate::analysis::modes::NormalModes;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationMap {
    /// Atomic units.
    pub times: Vec<f64>,
    /// Mode frequencies, cm⁻¹.
    pub frequencies: Vec<f64>,
    /// `energies[frame][mode]`, Hartree, all 3N modes.
    pub energies: Vec<Vec<f64>>,
    /// Energy fraction per vibrational mode; zero for near-zero modes.
    pub normalized: Vec<Vec<f64>>,
    pub vibrational: Vec<bool>,
    pub photon_q: Vec<f64>,
}

impl OccupationMap {
    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }
}

/// Project every frame on `modes` about `reference`:
/// `Q = vᵀM^{1/2}(R − R_ref)`, `E = ½(Q̇² + ω²Q²)`.
pub fn mode_occupation(trajectory: &Trajectory, modes: &NormalModes, reference: &[f64]) -> Result<OccupationMap> {
    let n = reference.len();
    if modes.vectors.nrows() != n || modes.masses.len() != n {
        return Err(Error::arg("mode basis does not match the reference geometry"));
    }
    if trajectory.positions.iter().chain(&trajectory.velocities).any(|x| x.len() != n)
        || trajectory.velocities.len() != trajectory.len()
        || trajectory.positions.len() != trajectory.len()
    {
        return Err(Error::arg("trajectory frames do not match the mode basis"));
    }
    let sqrt_m: Vec<f64> = modes.masses.iter().map(|m| m.sqrt()).collect();
    let vibrational: Vec<bool> = modes.near_zero.iter().map(|z| !z).collect();
    let omega2: Vec<f64> = modes
        .eigenvalues
        .iter()
        .zip(&vibrational)
        .map(|(&l, &vib)| if vib { l.max(0.0) } else { 0.0 })
        .collect();
    let mut energies = Vec::with_capacity(trajectory.len());
    let mut normalized = Vec::with_capacity(trajectory.len());
    let mut dx = vec![0.0; n];
    let mut mv = vec![0.0; n];
    for (x, v) in trajectory.positions.iter().zip(&trajectory.velocities) {
        for k in 0..n {
            dx[k] = sqrt_m[k] * (x[k] - reference[k]);
            mv[k] = sqrt_m[k] * v[k];
        }
        let e: Vec<f64> = (0..modes.len())
            .map(|j| {
                let col = modes.vectors.column(j);
                let q: f64 = col.iter().zip(&dx).map(|(a, b)| a * b).sum();
                let qd: f64 = col.iter().zip(&mv).map(|(a, b)| a * b).sum();
                0.5 * (qd * qd + omega2[j] * q * q)
            })
            .collect();
        let total: f64 = e.iter().zip(&vibrational).filter(|(_, v)| **v).map(|(e, _)| e).sum();
        normalized.push(
            e.iter()
                .zip(&vibrational)
                .map(|(e, &vib)| if vib && total > 0.0 { e / total } else { 0.0 })
                .collect(),
        );
        energies.push(e);
    }
    Ok(OccupationMap {
        times: trajectory.times.clone(),
        frequencies: modes.frequencies.clone(),
        energies,
        normalized,
        vibrational,
        photon_q: trajectory.photon_q.clone(),
    })
}

/// Frame-wise mean of several maps on a common grid.
pub fn average_occupation(maps: &[OccupationMap]) -> Result<OccupationMap> {
    let first = maps.first().ok_or_else(|| Error::arg("no occupation maps to average"))?;
    for m in maps {
        check_compatible(first, m)?;
    }
    let k = maps.len() as f64;
    let mean = |get: &dyn Fn(&OccupationMap) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..first.times.len())
            .map(|f| {
                (0..first.n_modes())
                    .map(|j| maps.iter().map(|m| get(m)[f][j]).sum::<f64>() / k)
                    .collect()
            })
            .collect()
    };
    Ok(OccupationMap {
        times: first.times.clone(),
        frequencies: first.frequencies.clone(),
        energies: mean(&|m| &m.energies),
        normalized: mean(&|m| &m.normalized),
        vibrational: first.vibrational.clone(),
        photon_q: (0..first.times.len())
            .map(|f| maps.iter().map(|m| m.photon_q.get(f).copied().unwrap_or(0.0)).sum::<f64>() / k)
            .collect(),
    })
}

fn check_compatible(a: &OccupationMap, b: &OccupationMap) -> Result<()> {
    if a.n_modes() != b.n_modes() || a.times.len() != b.times.len() {
        return Err(Error::arg("occupation maps have different shapes"));
    }
    let scale = a.times.last().copied().unwrap_or(0.0).abs().max(1.0);
    if a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-9 * scale)
        || a.frequencies.iter().zip(&b.frequencies).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0))
    {
        return Err(Error::arg("occupation maps use different time grids or mode bases"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationDifference {
    pub times: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// `a − b` of the normalized occupations, per frame and mode.
    pub difference: Vec<Vec<f64>>,
    /// Trapezoid time integral of `difference` per mode, atomic time units.
    pub accumulated: Vec<f64>,
    pub photon_difference: Vec<f64>,
    pub accumulated_photon: f64,
    pub vibrational: Vec<bool>,
}

impl OccupationDifference {
    /// Vibrational mode with the largest |accumulated| difference.
    pub fn dominant_mode(&self) -> Option<usize> {
        (0..self.accumulated.len())
            .filter(|&j| self.vibrational[j])
            .max_by(|&a, &b| self.accumulated[a].abs().total_cmp(&self.accumulated[b].abs()))
    }
}

fn trapezoid(times: &[f64], values: impl Fn(usize) -> f64) -> f64 {
    (1..times.len())
        .map(|k| 0.5 * (times[k] - times[k - 1]) * (values(k) + values(k - 1)))
        .sum()
}

/// Pointwise difference of normalized occupations and its time integral.
pub fn occupation_difference(a: &OccupationMap, b: &OccupationMap) -> Result<OccupationDifference> {
    check_compatible(a, b)?;
    let difference: Vec<Vec<f64>> = a
        .normalized
        .iter()
        .zip(&b.normalized)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect();
    let accumulated = (0..a.n_modes())
        .map(|j| trapezoid(&a.times, |k| difference[k][j]))
        .collect();
    let photon_difference: Vec<f64> = a.photon_q.iter().zip(&b.photon_q).map(|(p, q)| p - q).collect();
    let accumulated_photon = trapezoid(&a.times, |k| photon_difference.get(k).copied().unwrap_or(0.0));
    Ok(OccupationDifference {
        times: a.times.clone(),
        frequencies: a.frequencies.clone(),
        difference,
        accumulated,
        photon_difference,
        accumulated_photon,
        vibrational: a.vibrational.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: Vec<Vec<f64>>, dt: f64) -> OccupationMap {
        let n = values[0].len();
        OccupationMap {
            times: (0..values.len()).map(|k| k as f64 * dt).collect(),
            frequencies: (0..n).map(|j| 100.0 * (j + 1) as f64).collect(),
            energies: values.clone(),
            photon_q: vec![0.0; values.len()],
            normalized: values,
            vibrational: vec![true; n],
        }
    }

    #[test]
    fn identical_maps_cancel() {
        let m = map(vec![vec![0.2, 0.8]; 10], 1.0);
        let d = occupation_difference(&m, &m).unwrap();
        assert!(d.accumulated.iter().all(|v| *v == 0.0));
        assert!(d.difference.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn offset_in_one_mode_accumulates_linearly() {
        let x = 0.05;
        let a = map(vec![vec![0.2 + x, 0.5, 0.3]; 11], 2.0);
        let b = map(vec![vec![0.2, 0.5, 0.3]; 11], 2.0);
        let d = occupation_difference(&a, &b).unwrap();
        assert!((d.accumulated[0] - x * 20.0).abs() < 1e-12);
        assert_eq!(d.accumulated[1], 0.0);
        assert_eq!(d.dominant_mode(), Some(0));
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = map(vec![vec![0.5, 0.5]; 10], 1.0);
        let b = map(vec![vec![0.5, 0.5]; 10], 2.0);
        assert!(occupation_difference(&a, &b).is_err());
        let c = map(vec![vec![0.5, 0.5]; 9], 1.0);
        assert!(occupation_difference(&a, &c).is_err());
    }
}
