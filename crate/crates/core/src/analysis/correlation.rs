//! Sliding-window correlation of forces projected on two bonds.

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondCorrelation {
    /// Time of each window's first frame, atomic units.
    pub times: Vec<f64>,
    /// |⟨f_A f_B⟩| / √(⟨f_A²⟩⟨f_B²⟩) per window.
    pub correlation: Vec<f64>,
    /// Windows in which one of the forces vanished identically.
    pub degenerate: Vec<bool>,
    /// Mean over windows.
    pub integrated: f64,
}

/// `(F_i − F_j)·û_ij` in every frame, with û pointing from j to i.
pub fn bond_force_series(trajectory: &Trajectory, bond: (usize, usize)) -> Result<Vec<f64>> {
    let (i, j) = bond;
    let n = trajectory.positions.first().map_or(0, |x| x.len() / 3);
    if i >= n || j >= n || i == j {
        return Err(Error::arg("invalid bond particle indices"));
    }
    if trajectory.forces.len() != trajectory.len() {
        return Err(Error::arg("trajectory carries no forces"));
    }
    trajectory
        .positions
        .iter()
        .zip(&trajectory.forces)
        .map(|(x, f)| {
            let d: Vec<f64> = (0..3).map(|a| x[3 * i + a] - x[3 * j + a]).collect();
            let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r == 0.0 {
                return Err(Error::arg("coincident bond particles"));
            }
            Ok((0..3).map(|a| (f[3 * i + a] - f[3 * j + a]) * d[a] / r).sum())
        })
        .collect()
}

/// Normalized, uncentered inner product of two series over sliding windows.
pub fn windowed_correlation(times: &[f64], fa: &[f64], fb: &[f64], window: usize) -> Result<BondCorrelation> {
    if window < 2 {
        return Err(Error::arg("correlation window must span at least 2 frames"));
    }
    if fa.len() != fb.len() || fa.len() != times.len() {
        return Err(Error::arg("force series lengths differ"));
    }
    if fa.len() < window {
        return Err(Error::arg("trajectory shorter than the correlation window"));
    }
    let mut out = BondCorrelation {
        times: Vec::new(),
        correlation: Vec::new(),
        degenerate: Vec::new(),
        integrated: 0.0,
    };
    for start in 0..=fa.len() - window {
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for k in start..start + window {
            ab += fa[k] * fb[k];
            aa += fa[k] * fa[k];
            bb += fb[k] * fb[k];
        }
        let degenerate = aa == 0.0 || bb == 0.0;
        out.times.push(times[start]);
        out.correlation.push(if degenerate { 0.0 } else { (ab.abs() / (aa * bb).sqrt()).min(1.0) });
        out.degenerate.push(degenerate);
    }
    out.integrated = out.correlation.iter().sum::<f64>() / out.correlation.len() as f64;
    Ok(out)
}

/// Correlation of the forces acting along two bonds.
pub fn bond_force_correlation(
    trajectory: &Trajectory,
    bond_a: (usize, usize),
    bond_b: (usize, usize),
    window: usize,
) -> Result<BondCorrelation> {
    let fa = bond_force_series(trajectory, bond_a)?;
    let fb = bond_force_series(trajectory, bond_b)?;
    windowed_correlation(&trajectory.times, &fa, &fb, window)
}
