//! TOML run configuration.
//!
//! ```toml
//! [system]
//! builtin = "pta_surrogate"      # or an inline [system.surrogate] table
//!
//! [cavity]
//! omega_c = 856.0                # cm⁻¹; defaults to the surrogate's bright mode
//! ratio = 1.132                  # or lambda_au, not both
//! polarization = [1.0, 0.0, 0.0]
//!
//! [dynamics]
//! duration_fs = 1000.0
//!
//! [ensemble]
//! seed = 1
//! ```
//!
//! Only `[system]` is required. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::analysis::spectrum::LineShape;
use crate::cavity::{lambda_for_ratio, CavityMode};
use crate::ensemble::{Aim, Propagation, Protocol, Window};
use crate::error::{Error, Result};
use crate::surrogate::{self, Surrogate, SurrogateParams};
use crate::units::{fs_to_au, wavenumber_to_hartree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub cavity: Option<CavityConfig>,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub analyze: Option<AnalyzeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub builtin: Option<String>,
    pub surrogate: Option<SurrogateParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    /// cm⁻¹.
    pub omega_c: Option<f64>,
    pub ratio: Option<f64>,
    pub lambda_au: Option<f64>,
    #[serde(default = "default_polarization")]
    pub polarization: [f64; 3],
    #[serde(default = "yes")]
    pub self_polarization: bool,
    #[serde(default = "yes")]
    pub bilinear: bool,
}

fn default_polarization() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub dt_fs: f64,
    pub duration_fs: f64,
    pub stride: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            dt_fs: 0.25,
            duration_fs: 1000.0,
            stride: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingProtocol {
    /// Independent draws at `temperature_K`.
    Direct,
    /// Resampling at `resample_T_K` around the first reactive free-space draw.
    TwoStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub protocol: SamplingProtocol,
    #[serde(rename = "resample_T_K")]
    pub resample_t_k: f64,
    /// First-stage draws of the two-stage protocol.
    pub n_base: usize,
    /// Outward displacement of F along Si→F in the starting geometry, bohr.
    pub approach_offset: f64,
    /// Point the F velocity at Si.
    pub aim: bool,
    pub window_fs: [f64; 2],
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            temperature_k: 300.0,
            n_trajectories: 16,
            seed: 1,
            protocol: SamplingProtocol::TwoStage,
            resample_t_k: 20.0,
            n_base: 30,
            approach_offset: 0.8,
            aim: true,
            window_fs: [0.0, 700.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConfig {
    pub directory: String,
    pub formats: Vec<Format>,
    /// Write one CSV per trajectory for `ensemble` and `scan`.
    pub trajectories: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            directory: "vsc-output".into(),
            formats: vec![Format::Csv, Format::Json],
            trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub broadening_cm: f64,
    pub shape: LineShape,
    pub lambda_list: Vec<f64>,
    /// `[start, end, step]`, cm⁻¹.
    pub grid_cm: [f64; 3],
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            broadening_cm: 30.0,
            shape: LineShape::Lorentzian,
            lambda_list: vec![0.0, 0.05, 0.1],
            grid_cm: [0.0, 2500.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    Resonance,
    Coupling,
}

/// Resonance scans use `omega_list` at the cavity ratio; coupling scans use
/// `ratio_list` at the cavity frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub kind: ScanKind,
    #[serde(default)]
    pub omega_list: Vec<f64>,
    #[serde(default)]
    pub ratio_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Directory of trajectory CSVs (the resonant run).
    pub trajectories: String,
    /// Directory of trajectory CSVs to subtract (the off-resonant run).
    pub reference: Option<String>,
    /// Bond pairs by particle label; the first two are correlated.
    #[serde(default = "default_bonds")]
    pub bonds: Vec<[String; 2]>,
    #[serde(default = "default_corr_window")]
    pub correlation_window: usize,
}

fn default_bonds() -> Vec<[String; 2]> {
    vec![["Si".into(), "C1".into()], ["Si".into(), "F".into()]]
}

fn default_corr_window() -> usize {
    64
}

/// Parse and validate; every default is filled in on the returned value.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.to_string()))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        check(
            s.builtin.is_some() != s.surrogate.is_some(),
            "[system] needs exactly one of `builtin` or `surrogate`",
        )?;
        if let Some(b) = &s.builtin {
            check(b == "pta_surrogate", "unknown builtin system (expected \"pta_surrogate\")")?;
        }
        if let Some(c) = &self.cavity {
            check(
                c.ratio.is_some() != c.lambda_au.is_some(),
                "[cavity] needs exactly one of `ratio` or `lambda_au`",
            )?;
            check(c.omega_c.is_none_or(|w| w > 0.0 && w.is_finite()), "omega_c must be positive")?;
            check(c.ratio.is_none_or(|r| r >= 0.0 && r.is_finite()), "ratio must be non-negative")?;
            check(c.lambda_au.is_none_or(|l| l >= 0.0 && l.is_finite()), "lambda_au must be non-negative")?;
            let n = c.polarization.iter().map(|v| v * v).sum::<f64>().sqrt();
            check(n > 0.0 && n.is_finite(), "polarization must be a non-zero vector")?;
        }
        let d = &self.dynamics;
        check(d.dt_fs > 0.0 && d.dt_fs.is_finite(), "dt_fs must be positive")?;
        check(d.duration_fs >= d.dt_fs, "duration_fs must be at least dt_fs")?;
        check(d.stride >= 1, "stride must be at least 1")?;
        let e = &self.ensemble;
        check(e.temperature_k >= 0.0, "temperature_K must be non-negative")?;
        check(e.resample_t_k >= 0.0, "resample_T_K must be non-negative")?;
        check(e.n_trajectories >= 1, "n_trajectories must be at least 1")?;
        check(e.n_base >= 1, "n_base must be at least 1")?;
        check(e.approach_offset.is_finite(), "approach_offset must be finite")?;
        check(
            e.window_fs[1] > e.window_fs[0] && e.window_fs[0] >= 0.0,
            "window_fs must be an increasing pair starting at or after 0",
        )?;
        check(e.window_fs[1] <= d.duration_fs + 1e-9, "window_fs ends after the run")?;
        check(!self.outputs.formats.is_empty(), "outputs.formats must not be empty")?;
        let sp = &self.spectrum;
        check(sp.broadening_cm > 0.0, "broadening_cm must be positive")?;
        check(sp.lambda_list.iter().all(|l| *l >= 0.0), "lambda_list entries must be non-negative")?;
        check(
            sp.grid_cm[2] > 0.0 && sp.grid_cm[1] > sp.grid_cm[0],
            "grid_cm must be [start, end, step] with end > start and step > 0",
        )?;
        if let Some(scan) = &self.scan {
            match scan.kind {
                ScanKind::Resonance => {
                    check(!scan.omega_list.is_empty(), "resonance scan needs omega_list")?;
                    check(scan.omega_list.iter().all(|w| *w > 0.0), "omega_list entries must be positive")?;
                }
                ScanKind::Coupling => {
                    check(!scan.ratio_list.is_empty(), "coupling scan needs ratio_list")?;
                    check(scan.ratio_list.iter().all(|r| *r >= 0.0), "ratio_list entries must be non-negative")?;
                }
            }
        }
        if let Some(a) = &self.analyze {
            check(a.bonds.len() >= 2, "analyze.bonds needs at least two pairs")?;
            check(a.correlation_window >= 2, "correlation_window must be at least 2")?;
        }
        Ok(())
    }

    pub fn surrogate_params(&self) -> SurrogateParams {
        self.system.surrogate.clone().unwrap_or_default()
    }

    pub fn build_system(&self) -> Result<Surrogate> {
        surrogate::build_surrogate(&self.surrogate_params())
    }

    pub fn propagation(&self) -> Propagation {
        let d = &self.dynamics;
        Propagation {
            dt: fs_to_au(d.dt_fs),
            n_steps: (d.duration_fs / d.dt_fs).round() as usize,
            stride: d.stride,
        }
    }

    pub fn window(&self) -> Window {
        Window {
            start: fs_to_au(self.ensemble.window_fs[0]),
            end: fs_to_au(self.ensemble.window_fs[1]),
        }
    }

    pub fn protocol(&self, start: Vec<f64>) -> Protocol {
        let e = &self.ensemble;
        Protocol {
            start,
            temperature: e.temperature_k,
            seed: e.seed,
            aim: e.aim.then_some(Aim {
                projectile: surrogate::F,
                target: surrogate::SI,
            }),
            n_base: e.n_base,
            resample_temperature: e.resample_t_k,
            count: e.n_trajectories,
        }
    }

    /// Cavity resolved against the built surrogate.
    pub fn resolve_cavity(&self, s: &Surrogate) -> Result<ResolvedCavity> {
        let c = self.cavity.clone().unwrap_or(CavityConfig {
            omega_c: None,
            ratio: Some(0.0),
            lambda_au: None,
            polarization: default_polarization(),
            self_polarization: true,
            bilinear: true,
        });
        let omega_c_cm = c.omega_c.unwrap_or(s.bright_frequency);
        let omega = wavenumber_to_hartree(omega_c_cm);
        let lambda = match (c.lambda_au, c.ratio) {
            (Some(l), _) => l,
            (None, Some(r)) => lambda_for_ratio(r, omega)?,
            (None, None) => unreachable!("validated"),
        };
        let p = nalgebra::Vector3::from(c.polarization).normalize();
        let mode = CavityMode::new(omega, lambda, p)?.with_terms(c.bilinear, c.self_polarization);
        Ok(ResolvedCavity {
            omega_c_cm,
            lambda_au: lambda,
            ratio: crate::cavity::coupling_ratio(lambda, omega)?,
            polarization: [p.x, p.y, p.z],
            self_polarization: c.self_polarization,
            bilinear: c.bilinear,
            mode,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedCavity {
    pub omega_c_cm: f64,
    pub lambda_au: f64,
    pub ratio: f64,
    pub polarization: [f64; 3],
    pub self_polarization: bool,
    pub bilinear: bool,
    #[serde(skip)]
    pub mode: CavityMode,
}
