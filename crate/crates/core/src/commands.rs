//! Command implementations behind the `vsc` binary. Each command writes its
//! tables, summaries and a manifest into one output directory.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::analysis::correlation::bond_force_correlation;
use crate::analysis::modes::{polariton_modes, sic_weighted_spectrum, NormalModes};
use crate::analysis::occupation::{average_occupation, mode_occupation, occupation_difference};
use crate::analysis::scan::{coupling_scan, resonance_scan, ScanPoint, ScanSettings};
use crate::analysis::spectrum::{broadened, frequency_grid, ir_spectrum, Broadening};
use crate::cavity::{lambda_for_ratio, total_energy, CavityMode, FullState};
use crate::config::{AnalyzeConfig, RunConfig, SamplingProtocol, ScanKind};
use crate::dynamics::{propagate, ReactionEvent, ReactionMonitor, Trajectory};
use crate::ensemble::{
    run_ensemble, run_trajectory, sample_velocities, two_stage_initial_conditions, EnsembleResult, InitialCondition,
    ReactionStatistics, SamplingSpec, Window,
};
use crate::error::{Error, Result};
use crate::model::{finite_difference_forces, ModelSystem};
use crate::output::{read_trajectory_dir, trajectory_table, Cell, OutputDir, Table};
use crate::surrogate::{approach_geometry, Surrogate};
use crate::units::{au_to_fs, bohr_to_angstrom, hartree_to_ev};

/// A parsed configuration together with its source text (hashed into every
/// manifest) and the output directory.
pub struct Invocation {
    pub config: RunConfig,
    pub text: String,
    pub out: PathBuf,
}

impl Invocation {
    fn open(&self, command: &str) -> Result<OutputDir> {
        OutputDir::create(
            &self.out,
            command,
            &self.text,
            &self.config,
            self.config.ensemble.seed,
            &self.config.outputs.formats,
        )
    }
}

fn labels(system: &ModelSystem) -> Vec<String> {
    system.particles.iter().map(|p| p.label.clone()).collect()
}

fn crossing_fs(event: Option<ReactionEvent>) -> Cell {
    event.and_then(|e| e.crossing_time).map(au_to_fs).into()
}

#[derive(Serialize)]
struct StatisticsRecord {
    n: usize,
    n_failed: usize,
    n_reacted: usize,
    reaction_fraction: f64,
    mean_bond_length_angstrom: f64,
    standard_error_angstrom: Option<f64>,
}

impl From<&ReactionStatistics> for StatisticsRecord {
    fn from(s: &ReactionStatistics) -> Self {
        StatisticsRecord {
            n: s.n,
            n_failed: s.n_failed,
            n_reacted: s.n_reacted,
            reaction_fraction: s.reaction_fraction,
            mean_bond_length_angstrom: bohr_to_angstrom(s.mean_bond_length),
            standard_error_angstrom: s.standard_error.map(bohr_to_angstrom),
        }
    }
}

/// Initial conditions for `ensemble` and `scan` per the configured protocol.
pub fn initial_conditions(
    config: &RunConfig,
    s: &Surrogate,
    probe: &CavityMode,
) -> Result<(Vec<InitialCondition>, Option<(usize, bool)>)> {
    let start = approach_geometry(&s.system, config.ensemble.approach_offset)?;
    let protocol = config.protocol(start.clone());
    match config.ensemble.protocol {
        SamplingProtocol::TwoStage => {
            let po = two_stage_initial_conditions(&s.system, probe, &protocol, &config.propagation(), config.window())?;
            Ok((po.initial, Some((po.base, po.base_reacted))))
        }
        SamplingProtocol::Direct => {
            let spec = SamplingSpec {
                temperature: protocol.temperature,
                seed: protocol.seed,
                aim: protocol.aim,
                resample: None,
            };
            let ics = (0..protocol.count)
                .map(|k| {
                    Ok(InitialCondition {
                        id: k,
                        velocities: sample_velocities(&s.system, &start, &spec, k as u64)?,
                        positions: start.clone(),
                    })
                })
                .collect::<Result<_>>()?;
            Ok((ics, None))
        }
    }
}

fn record_protocol(out: &mut OutputDir, base: Option<(usize, bool)>) {
    if let Some((b, reacted)) = base {
        out.resolve("two_stage_base_trajectory", b);
        out.resolve("two_stage_base_reacted", reacted);
    }
}

fn ensemble_table(result: &EnsembleResult, window: Window) -> Table {
    let mut t = Table::new([
        "trajectory",
        "reacted",
        "crossing_time_fs",
        "dissociated",
        "mean_bond_length_angstrom",
        "error",
    ]);
    for o in &result.outcomes {
        let reacted = o
            .event
            .is_some_and(|e| e.occurred && e.crossing_time.is_some_and(|c| c <= window.end));
        t.push(vec![
            o.id.into(),
            reacted.into(),
            crossing_fs(o.event),
            o.event.map(|e| e.dissociated).into(),
            o.window_mean(window).ok().map(bohr_to_angstrom).into(),
            o.error.clone().into(),
        ]);
    }
    t
}

fn bond_length_table(result: &EnsembleResult) -> Table {
    let mut t = Table::new(["time_fs", "mean_bond_length_angstrom"]);
    for (time, r) in result.time_resolved_bond_length() {
        t.push(vec![au_to_fs(time).into(), bohr_to_angstrom(r).into()]);
    }
    t
}

fn write_trajectories(out: &mut OutputDir, dir: &str, system: &ModelSystem, result: &EnsembleResult) -> Result<()> {
    let names = labels(system);
    for o in &result.outcomes {
        if let Some(t) = &o.trajectory {
            out.csv(&format!("{dir}/traj_{:04}.csv", o.id), &trajectory_table(t, &names))?;
        }
    }
    Ok(())
}

/// Line spectra and broadened curves for the bare and coupled system at
/// each configured λ.
pub fn cmd_spectrum(inv: &Invocation) -> Result<PathBuf> {
    let cfg = &inv.config;
    let s = cfg.build_system()?;
    let sys = &s.system;
    let cav = cfg.resolve_cavity(&s)?;
    let mut out = inv.open("spectrum")?;
    out.resolve("cavity", &cav);

    let modes = NormalModes::of(sys, &sys.reference)?;
    let weights = sic_weighted_spectrum(&modes, sys, &sys.reference, sys.reactive_pair())?;
    let mut mt = Table::new(["mode", "frequency_cm", "imaginary", "near_zero", "si_c_weight", "mu_x_au", "mu_y_au", "mu_z_au"]);
    for j in 0..modes.len() {
        let d = modes.mode_dipole[j];
        mt.push(vec![
            j.into(),
            modes.frequencies[j].into(),
            (modes.eigenvalues[j] < 0.0).into(),
            modes.near_zero[j].into(),
            weights[j].into(),
            d.x.into(),
            d.y.into(),
            d.z.into(),
        ]);
    }
    out.table("modes", &mt)?;

    let pol = cav.mode.polarization;
    let [g0, g1, gs] = cfg.spectrum.grid_cm;
    let grid = frequency_grid(g0, g1, gs);
    let b = Broadening {
        shape: cfg.spectrum.shape,
        fwhm: cfg.spectrum.broadening_cm,
    };
    let mut lines = Table::new(["lambda_au", "ratio", "frequency_cm", "strength_au", "si_c_weight"]);
    let mut curve_cols = vec!["frequency_cm".to_string()];
    let mut curves = Vec::new();
    for &lambda in &cfg.spectrum.lambda_list {
        let coupled = CavityMode::new(cav.mode.omega_c, lambda, pol)?.with_terms(cav.bilinear, cav.self_polarization);
        let spectrum = if lambda == 0.0 {
            ir_spectrum(&modes, &pol, Some(&weights))?
        } else {
            let pm = polariton_modes(&modes, &coupled)?;
            let w = sic_weighted_spectrum(&pm, sys, &sys.reference, sys.reactive_pair())?;
            ir_spectrum(&pm, &pol, Some(&w))?
        };
        let ratio = crate::cavity::coupling_ratio(lambda, cav.mode.omega_c)?;
        for l in &spectrum {
            lines.push(vec![lambda.into(), ratio.into(), l.frequency.into(), l.strength.into(), l.si_c_weight.into()]);
        }
        curve_cols.push(format!("intensity_lambda_{lambda}_au"));
        curves.push(broadened(&spectrum, b, &grid)?);
    }
    out.table("lines", &lines)?;
    let mut ct = Table::new(curve_cols);
    for (k, f) in grid.iter().enumerate() {
        let mut row = vec![Cell::Num(*f)];
        row.extend(curves.iter().map(|c| Cell::Num(c[k])));
        ct.push(row);
    }
    out.table("spectrum", &ct)?;
    out.finish()
}

/// One trajectory from the first thermal draw at the approach geometry.
pub fn cmd_run(inv: &Invocation) -> Result<PathBuf> {
    let cfg = &inv.config;
    let s = cfg.build_system()?;
    let sys = &s.system;
    let cav = cfg.resolve_cavity(&s)?;
    let mut out = inv.open("run")?;
    out.resolve("cavity", &cav);
    let start = approach_geometry(sys, cfg.ensemble.approach_offset)?;
    let p = cfg.protocol(start.clone());
    let spec = SamplingSpec {
        temperature: p.temperature,
        seed: p.seed,
        aim: p.aim,
        resample: None,
    };
    let ic = InitialCondition {
        id: 0,
        velocities: sample_velocities(sys, &start, &spec, 0)?,
        positions: start,
    };
    let (traj, event) = run_trajectory(sys, &cav.mode, &ic, &cfg.propagation())?;
    out.csv("trajectory.csv", &trajectory_table(&traj, &labels(sys)))?;
    let mut pt = Table::new(["time_fs", "q_au", "q_dimensionless"]);
    for (t, q) in traj.times.iter().zip(&traj.photon_q) {
        pt.push(vec![au_to_fs(*t).into(), (*q).into(), cav.mode.dimensionless_displacement(*q).into()]);
    }
    out.table("photon", &pt)?;
    let energy = traj.energy_conservation()?;
    out.json(
        "summary.json",
        &serde_json::json!({
            "reacted": event.occurred,
            "crossing_time_fs": event.crossing_time.map(au_to_fs),
            "threshold_angstrom": bohr_to_angstrom(event.threshold),
            "dissociated": event.dissociated,
            "frames": traj.len(),
            "relative_energy_drift": energy.relative_drift,
            "peak_energy_error_ev": hartree_to_ev(energy.peak_error),
        }),
    )?;
    out.finish()
}

/// Paired ensemble at the configured cavity.
pub fn cmd_ensemble(inv: &Invocation) -> Result<PathBuf> {
    let cfg = &inv.config;
    let s = cfg.build_system()?;
    let cav = cfg.resolve_cavity(&s)?;
    let mut out = inv.open("ensemble")?;
    out.resolve("cavity", &cav);
    let (ics, base) = initial_conditions(cfg, &s, &cav.mode)?;
    record_protocol(&mut out, base);
    let window = cfg.window();
    let result = run_ensemble(&s.system, &cav.mode, &ics, &cfg.propagation(), window, cfg.outputs.trajectories)?;
    out.table("ensemble", &ensemble_table(&result, window))?;
    out.table("bond_length", &bond_length_table(&result))?;
    out.json("summary.json", &StatisticsRecord::from(&result.statistics))?;
    if cfg.outputs.trajectories {
        write_trajectories(&mut out, "trajectories", &s.system, &result)?;
    }
    out.finish()
}

/// Resonance or coupling scan; the λ = 0 baseline row comes first.
pub fn cmd_scan(inv: &Invocation) -> Result<PathBuf> {
    let cfg = &inv.config;
    let scan = cfg
        .scan
        .as_ref()
        .ok_or_else(|| Error::Config("the scan command needs a [scan] block".into()))?;
    let s = cfg.build_system()?;
    let cav = cfg.resolve_cavity(&s)?;
    let mut out = inv.open("scan")?;
    out.resolve("cavity", &cav);
    let (ics, base) = initial_conditions(cfg, &s, &cav.mode)?;
    record_protocol(&mut out, base);
    let settings = ScanSettings {
        propagation: cfg.propagation(),
        window: cfg.window(),
        polarization: cav.mode.polarization,
        self_polarization: cav.self_polarization,
        bilinear: cav.bilinear,
        keep_trajectories: cfg.outputs.trajectories,
    };
    let points = match scan.kind {
        ScanKind::Resonance => resonance_scan(&s.system, &ics, &settings, &scan.omega_list, cav.ratio)?,
        ScanKind::Coupling => coupling_scan(&s.system, &ics, &settings, cav.omega_c_cm, &scan.ratio_list)?,
    };
    out.table("scan", &scan_table(&points))?;
    if cfg.outputs.trajectories {
        for (k, p) in points.iter().enumerate() {
            write_trajectories(&mut out, &format!("trajectories/row_{k:02}"), &s.system, &p.ensemble)?;
        }
    }
    out.finish()
}

pub fn scan_table(points: &[ScanPoint]) -> Table {
    let mut t = Table::new([
        "label",
        "omega_c_cm",
        "ratio",
        "lambda_au",
        "n",
        "n_failed",
        "n_reacted",
        "reaction_fraction",
        "mean_bond_length_angstrom",
        "standard_error_angstrom",
    ]);
    for p in points {
        let r = &p.row;
        let st = &r.statistics;
        t.push(vec![
            r.label.clone().into(),
            r.omega_c_cm.into(),
            r.ratio.into(),
            r.lambda.into(),
            st.n.into(),
            st.n_failed.into(),
            st.n_reacted.into(),
            st.reaction_fraction.into(),
            bohr_to_angstrom(st.mean_bond_length).into(),
            st.standard_error.map(bohr_to_angstrom).into(),
        ]);
    }
    t
}

fn particle_index(system: &ModelSystem, label: &str) -> Result<usize> {
    system
        .particles
        .iter()
        .position(|p| p.label == label)
        .ok_or_else(|| Error::Config(format!("unknown particle label {label}")))
}

/// Occupation maps, their difference, and bond-force correlations from
/// stored trajectory CSVs.
pub fn cmd_analyze(inv: &Invocation) -> Result<PathBuf> {
    let cfg = &inv.config;
    let a: &AnalyzeConfig = cfg
        .analyze
        .as_ref()
        .ok_or_else(|| Error::Config("the analyze command needs an [analyze] block".into()))?;
    let s = cfg.build_system()?;
    let sys = &s.system;
    let window = cfg.window();
    let main = read_trajectory_dir(Path::new(&a.trajectories))?;
    let reference = a.reference.as_ref().map(|p| read_trajectory_dir(Path::new(p))).transpose()?;
    let mut out = inv.open("analyze")?;

    let modes = NormalModes::of(sys, &sys.reference)?;
    let weights = sic_weighted_spectrum(&modes, sys, &sys.reference, sys.reactive_pair())?;
    let occupation = |trajs: &[Trajectory]| -> Result<_> {
        let maps = trajs
            .iter()
            .map(|t| mode_occupation(&t.truncated(window.end), &modes, &sys.reference))
            .collect::<Result<Vec<_>>>()?;
        average_occupation(&maps)
    };
    let vib: Vec<usize> = (0..modes.len()).filter(|&j| !modes.near_zero[j]).collect();
    let mode_cols = |prefix: &str| -> Vec<String> {
        vib.iter()
            .map(|&j| format!("{prefix}_{:.1}cm", modes.frequencies[j]))
            .collect()
    };

    let occ = occupation(&main)?;
    let mut ot = Table::new(["time_fs".to_string()].into_iter().chain(mode_cols("occupation")).chain(["photon_q_au".to_string()]));
    for (k, t) in occ.times.iter().enumerate() {
        let mut row = vec![Cell::Num(au_to_fs(*t))];
        row.extend(vib.iter().map(|&j| Cell::Num(occ.normalized[k][j])));
        row.push(occ.photon_q[k].into());
        ot.push(row);
    }
    out.table("occupation", &ot)?;

    if let Some(r) = &reference {
        let d = occupation_difference(&occ, &occupation(r)?)?;
        let mut dt = Table::new(["time_fs".to_string()].into_iter().chain(mode_cols("difference")).chain(["photon_q_difference_au".to_string()]));
        for (k, t) in d.times.iter().enumerate() {
            let mut row = vec![Cell::Num(au_to_fs(*t))];
            row.extend(vib.iter().map(|&j| Cell::Num(d.difference[k][j])));
            row.push(d.photon_difference[k].into());
            dt.push(row);
        }
        out.table("occupation_difference", &dt)?;
        let mut acc = Table::new(["mode", "frequency_cm", "si_c_weight", "accumulated_fs"]);
        for &j in &vib {
            acc.push(vec![j.into(), modes.frequencies[j].into(), weights[j].into(), au_to_fs(d.accumulated[j]).into()]);
        }
        out.table("accumulated", &acc)?;
        out.resolve("dominant_mode", d.dominant_mode());
        out.resolve("accumulated_photon_fs", au_to_fs(d.accumulated_photon));
    }

    let pairs = a
        .bonds
        .iter()
        .map(|[p, q]| Ok((particle_index(sys, p)?, particle_index(sys, q)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut integrated = Vec::new();
    for (k, &other) in pairs.iter().enumerate().skip(1) {
        let per = main
            .iter()
            .map(|t| bond_force_correlation(&t.truncated(window.end), pairs[0], other, a.correlation_window))
            .collect::<Result<Vec<_>>>()?;
        let n = per.len() as f64;
        let mut ct = Table::new(["time_fs", "correlation"]);
        for w in 0..per[0].times.len() {
            let c = per.iter().map(|p| p.correlation[w]).sum::<f64>() / n;
            ct.push(vec![au_to_fs(per[0].times[w]).into(), c.into()]);
        }
        let name = format!(
            "correlation_{}-{}_{}-{}",
            a.bonds[0][0], a.bonds[0][1], a.bonds[k][0], a.bonds[k][1]
        );
        out.table(&name, &ct)?;
        integrated.push(serde_json::json!({
            "bond_a": a.bonds[0],
            "bond_b": a.bonds[k],
            "integrated": per.iter().map(|p| p.integrated).sum::<f64>() / n,
        }));
    }
    out.json("correlation_summary.json", &integrated)?;
    out.finish()
}

/// Build the surrogate and report its calibration record.
pub fn cmd_calibrate(inv: &Invocation) -> Result<PathBuf> {
    let s = inv.config.build_system()?;
    let mut out = inv.open("calibrate")?;
    let ts = &s.transition_state;
    let pot = s.system.reactive_potential();
    out.json(
        "calibration.json",
        &serde_json::json!({
            "k_si_c_hartree_per_bohr2": s.k_si_c,
            "bright_mode_cm": s.bright_frequency,
            "bright_mode_si_c_weight": s.bright_weight,
            "barrier_ev": ts.barrier_ev,
            "omega_b_cm": ts.omega_b,
            "ts_bond_length_angstrom": bohr_to_angstrom(ts.bond_length),
            "ts_gradient_norm_au": ts.gradient_norm,
            "ts_negative_modes": ts.negative_modes,
            "reactive_potential": pot,
            "total_charge": s.system.total_charge(),
            "params": s.params,
        }),
    )?;
    let mut pt = Table::new(["bond_length_angstrom", "energy_ev", "bare_bond_energy_ev"]);
    for &(r, e) in &ts.profile {
        pt.push(vec![bohr_to_angstrom(r).into(), hartree_to_ev(e).into(), hartree_to_ev(pot.energy(r)).into()]);
    }
    out.table("ts_profile", &pt)?;
    out.finish()
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelCheck {
    pub force_samples: usize,
    pub max_force_error: f64,
    pub energy_relative_drift: f64,
    pub energy_relative_peak_error: f64,
    pub passed: bool,
}

/// Analytic vs finite-difference forces (matter and cavity) on perturbed
/// geometries, and energy conservation of a short coupled run.
pub fn model_check(s: &Surrogate, mode: &CavityMode, seed: u64, samples: usize) -> Result<ModelCheck> {
    let sys = &s.system;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = sys.reference.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
        let mu = sys.dipole(&x)?;
        let photon = crate::cavity::PhotonState {
            q: rng.random_range(-5.0..5.0),
            p: 0.0,
        };
        let mut analytic = sys.forces(&x)?;
        for (a, c) in analytic.iter_mut().zip(mode.nuclear_cavity_force(&photon, sys, &x)?) {
            *a += c;
        }
        let mut numeric = finite_difference_forces(sys, &x, 1e-5)?;
        // ε·μ is linear in the coordinates, so its energy is differentiated exactly
        let h = 1e-5;
        for (k, n) in numeric.iter_mut().enumerate() {
            let dm = nalgebra::Vector3::from_fn(|a, _| sys.dipole_gradient()[(a, k)]) * h;
            *n -= (mode.cavity_energy(&photon, &(mu + dm)) - mode.cavity_energy(&photon, &(mu - dm))) / (2.0 * h);
        }
        let scale = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let err = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / scale;
        max_err = max_err.max(err);
    }
    let spec = SamplingSpec {
        temperature: 300.0,
        seed,
        aim: None,
        resample: None,
    };
    let v = sample_velocities(sys, &sys.reference, &spec, 0)?;
    let state = FullState {
        photon: mode.zero_field_init(&sys.dipole(&sys.reference)?),
        positions: sys.reference.clone(),
        velocities: v,
        time: 0.0,
    };
    let e0 = total_energy(sys, mode, &state)?.total;
    let dt = crate::units::fs_to_au(0.25);
    let (traj, _) = propagate(sys, mode, &state, dt, 4000, 4, &ReactionMonitor::for_system(sys))?;
    let energy = traj.energy_conservation()?;
    Ok(ModelCheck {
        force_samples: samples,
        max_force_error: max_err,
        energy_relative_drift: energy.relative_drift,
        energy_relative_peak_error: energy.peak_error / e0.abs(),
        passed: max_err < 1e-6 && energy.relative_drift < 1e-5,
    })
}

pub fn cmd_model_check(inv: &Invocation) -> Result<PathBuf> {
    let cfg = &inv.config;
    let s = cfg.build_system()?;
    let mut cav = cfg.resolve_cavity(&s)?;
    if cav.mode.is_decoupled() {
        let omega = cav.mode.omega_c;
        cav.mode = CavityMode::new(omega, lambda_for_ratio(1.132, omega)?, cav.mode.polarization)?;
    }
    let mut out = inv.open("model-check")?;
    let check = model_check(&s, &cav.mode, cfg.ensemble.seed, 200)?;
    out.json("model_check.json", &check)?;
    let modes = NormalModes::of(&s.system, &s.system.reference)?;
    out.resolve(
        "lowest_vibration_cm",
        (0..modes.len()).find(|&j| !modes.near_zero[j]).map(|j| modes.frequencies[j]),
    );
    out.resolve("near_zero_modes", modes.near_zero.iter().filter(|z| **z).count());
    out.resolve("bright_mode_cm", s.bright_frequency);
    let dir = out.finish()?;
    if !check.passed {
        return Err(Error::Check(format!(
            "force error {:.3e}, energy drift {:.3e}",
            check.max_force_error, check.energy_relative_drift
        )));
    }
    Ok(dir)
}
