//! Polarization-resolved line spectra and dipole power spectra.

use nalgebra::Vector3;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::analysis::modes::NormalModes;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::units::hartree_to_wavenumber;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumLine {
    /// cm⁻¹.
    pub frequency: f64,
    /// 2ω|ε·∂μ/∂Q|², atomic units.
    pub strength: f64,
    pub si_c_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineShape {
    #[default]
    Lorentzian,
    Gaussian,
}

/// Unit-area line shape with full width at half maximum `fwhm` (cm⁻¹).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Broadening {
    pub shape: LineShape,
    pub fwhm: f64,
}

impl Broadening {
    pub fn lorentzian(fwhm: f64) -> Self {
        Broadening {
            shape: LineShape::Lorentzian,
            fwhm,
        }
    }

    pub fn profile(&self, x: f64) -> f64 {
        match self.shape {
            LineShape::Lorentzian => {
                let g = 0.5 * self.fwhm;
                g / std::f64::consts::PI / (x * x + g * g)
            }
            LineShape::Gaussian => {
                let s = self.fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
                (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }
}

/// Line spectrum `S(ω) = 2ω Σ_j |ε·∂μ/∂Q_j|² δ(ω − ω_j)`. Near-zero and
/// imaginary modes are skipped. `weights` supplies a per-mode Si–C weight.
pub fn ir_spectrum(modes: &NormalModes, polarization: &Vector3<f64>, weights: Option<&[f64]>) -> Result<Vec<SpectrumLine>> {
    if (polarization.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::arg("polarization must be a unit vector"));
    }
    if let Some(w) = weights {
        if w.len() != modes.len() {
            return Err(Error::arg("one weight per mode required"));
        }
    }
    Ok((0..modes.len())
        .filter(|&j| !modes.near_zero[j] && modes.eigenvalues[j] > 0.0)
        .map(|j| {
            let proj = polarization.dot(&modes.mode_dipole[j]);
            SpectrumLine {
                frequency: modes.frequencies[j],
                strength: 2.0 * modes.omega(j) * proj * proj,
                si_c_weight: weights.map_or(0.0, |w| w[j]),
            }
        })
        .collect())
}

/// Sum of unit-area profiles scaled by line strength on `grid` (cm⁻¹).
pub fn broadened(lines: &[SpectrumLine], broadening: Broadening, grid: &[f64]) -> Result<Vec<f64>> {
    if !(broadening.fwhm > 0.0) {
        return Err(Error::arg("broadening must be positive"));
    }
    Ok(grid
        .iter()
        .map(|&x| {
            lines
                .iter()
                .map(|l| l.strength * broadening.profile(x - l.frequency))
                .sum()
        })
        .collect())
}

/// Uniform grid `[start, end]` with spacing `step`.
pub fn frequency_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step).round() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFunction {
    #[default]
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSpectrum {
    /// cm⁻¹.
    pub frequencies: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Bin spacing, cm⁻¹.
    pub resolution: f64,
}

impl PowerSpectrum {
    /// Frequencies of local maxima, strongest first, ignoring peaks below
    /// `rel` times the global maximum.
    pub fn peaks(&self, rel: f64) -> Vec<f64> {
        let top = self.intensity.iter().cloned().fold(0.0, f64::max);
        let mut found: Vec<(f64, f64)> = (1..self.intensity.len().saturating_sub(1))
            .filter(|&k| {
                let v = self.intensity[k];
                v > self.intensity[k - 1] && v >= self.intensity[k + 1] && v > rel * top
            })
            .map(|k| (self.intensity[k], self.frequencies[k]))
            .collect();
        found.sort_by(|a, b| b.0.total_cmp(&a.0));
        found.into_iter().map(|(_, f)| f).collect()
    }
}

/// Power spectrum of the windowed, mean-removed projection ε·μ(t).
pub fn td_spectrum(trajectory: &Trajectory, polarization: &Vector3<f64>, window: WindowFunction) -> Result<PowerSpectrum> {
    let n = trajectory.len();
    if n < 256 {
        return Err(Error::arg("need at least 256 frames for a spectrum"));
    }
    let dt = trajectory.times[1] - trajectory.times[0];
    let signal: Vec<f64> = trajectory
        .dipole
        .iter()
        .map(|m| polarization.dot(&Vector3::new(m[0], m[1], m[2])))
        .collect();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let w = match window {
                WindowFunction::Hann => 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos(),
                WindowFunction::Rectangular => 1.0,
            };
            Complex::new((s - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let d_omega = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let half = n / 2 + 1;
    Ok(PowerSpectrum {
        frequencies: (0..half).map(|k| hartree_to_wavenumber(k as f64 * d_omega)).collect(),
        intensity: buf[..half].iter().map(|c| c.norm_sqr() / n as f64).collect(),
        resolution: hartree_to_wavenumber(d_omega),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::wavenumber_to_hartree;
    use nalgebra::DMatrix;

    fn one_mode(omega: f64, d: Vector3<f64>) -> NormalModes {
        NormalModes::from_parts(vec![omega * omega], DMatrix::identity(1, 1), vec![d], vec![1.0]).unwrap()
    }

    #[test]
    fn strength_formula() {
        let m = one_mode(0.004, Vector3::new(0.5, 0.2, 0.0));
        let lines = ir_spectrum(&m, &Vector3::x(), None).unwrap();
        assert!((lines[0].strength - 2.0e-3).abs() < 1e-15);
        let lines = ir_spectrum(&m, &Vector3::z(), None).unwrap();
        assert_eq!(lines[0].strength, 0.0);
        assert!(ir_spectrum(&m, &Vector3::new(1.0, 1.0, 0.0), None).is_err());
    }

    #[test]
    fn broadened_area_equals_total_strength() {
        let lines = [
            SpectrumLine { frequency: 850.0, strength: 2e-3, si_c_weight: 0.0 },
            SpectrumLine { frequency: 1200.0, strength: 5e-4, si_c_weight: 0.0 },
        ];
        // the Lorentzian tails need a wide grid to hold 99.9 % of the area
        let grid = frequency_grid(-40000.0, 40000.0, 0.5);
        for b in [Broadening::lorentzian(30.0), Broadening { shape: LineShape::Gaussian, fwhm: 30.0 }] {
            let curve = broadened(&lines, b, &grid).unwrap();
            let area: f64 = curve.iter().sum::<f64>() * 0.5;
            assert!((area / 2.5e-3 - 1.0).abs() < 1e-3, "{area}");
        }
    }

    #[test]
    fn zero_modes_are_skipped() {
        let m = NormalModes::from_parts(
            vec![0.0, 1e-6],
            DMatrix::identity(2, 2),
            vec![Vector3::x(), Vector3::x()],
            vec![1.0, 1.0],
        )
        .unwrap();
        let lines = ir_spectrum(&m, &Vector3::x(), None).unwrap();
        assert_eq!(lines.len(), 1);
    }

    fn synthetic(signal: impl Fn(f64) -> f64, n: usize, dt: f64) -> Trajectory {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        Trajectory {
            dt,
            stride: 1,
            dipole: times.iter().map(|&t| [signal(t), 0.0, 0.0]).collect(),
            times,
            ..Default::default()
        }
    }

    #[test]
    fn constant_dipole_is_silent() {
        let t = synthetic(|_| 1.7, 512, 10.0);
        let s = td_spectrum(&t, &Vector3::x(), WindowFunction::Hann).unwrap();
        assert!(s.intensity.iter().all(|v| *v < 1e-25));
        assert!(td_spectrum(&synthetic(|_| 0.0, 100, 1.0), &Vector3::x(), WindowFunction::Hann).is_err());
    }

    #[test]
    fn cosine_peak_within_one_bin() {
        let w = wavenumber_to_hartree(856.0);
        let dt = crate::units::fs_to_au(1.0);
        let n = 3000;
        let s = td_spectrum(&synthetic(|t| (w * t).cos(), n, dt), &Vector3::x(), WindowFunction::Hann).unwrap();
        assert!((s.resolution - 11.12).abs() < 0.05, "{}", s.resolution);
        assert!((s.peaks(0.1)[0] - 856.0).abs() <= s.resolution);
    }
}
