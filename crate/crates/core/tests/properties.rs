//! Property tests on the public API of the surrogate, cavity, dynamics,
//! sampling and analysis layers.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Rotation3, Vector3};
use proptest::prelude::*;

use vsc_core::analysis::{mode_occupation, polariton_modes, sic_weighted_spectrum, NormalModes};
use vsc_core::cavity::{coupling_ratio, lambda_for_ratio, total_energy};
use vsc_core::ensemble::{
    aim_projectile, com_momentum, reaction_statistics, run_ensemble, sample_velocities, Aim, InitialCondition,
    Propagation, SamplingSpec, Window,
};
use vsc_core::surrogate::{build_surrogate, Surrogate, SurrogateParams, C1, F, SI};
use vsc_core::units::{fs_to_au, wavenumber_to_hartree};
use vsc_core::{propagate, CavityMode, FullState, PhotonState, ReactionMonitor, Trajectory};

fn surrogate() -> &'static Surrogate {
    static S: OnceLock<Surrogate> = OnceLock::new();
    S.get_or_init(|| build_surrogate(&SurrogateParams::default()).unwrap())
}

fn resonant(ratio: f64) -> CavityMode {
    let s = surrogate();
    let w = wavenumber_to_hartree(s.bright_frequency);
    CavityMode::new(w, lambda_for_ratio(ratio, w).unwrap(), Vector3::x()).unwrap()
}

fn perturbed(offsets: &[f64]) -> Vec<f64> {
    surrogate().system.reference.iter().zip(offsets).map(|(x, d)| x + d).collect()
}

fn offsets() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.3f64..0.3, 18)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forces_match_central_differences(d in offsets()) {
        let sys = &surrogate().system;
        let x = perturbed(&d);
        let f = sys.forces(&x).unwrap();
        let h = 1e-4;
        let mut y = x.clone();
        let mut num = vec![0.0; x.len()];
        for k in 0..x.len() {
            y[k] = x[k] + h;
            let up = sys.potential_energy(&y).unwrap();
            y[k] = x[k] - h;
            let down = sys.potential_energy(&y).unwrap();
            y[k] = x[k];
            num[k] = -(up - down) / (2.0 * h);
        }
        let norm = num.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = f.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff / norm < 1e-6, "relative error {}", diff / norm);
    }

    #[test]
    fn potential_is_rigid_motion_invariant(
        d in offsets(),
        t in prop::array::uniform3(-5.0f64..5.0),
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in -3.0f64..3.0,
    ) {
        let sys = &surrogate().system;
        let x = perturbed(&d);
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 0.1);
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let moved: Vec<f64> = x
            .chunks(3)
            .flat_map(|p| {
                let v = rot * Vector3::new(p[0], p[1], p[2]) + Vector3::from(t);
                [v.x, v.y, v.z]
            })
            .collect();
        let (a, b) = (sys.potential_energy(&x).unwrap(), sys.potential_energy(&moved).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn charged_dipole_shifts_by_charge_times_translation(d in offsets(), t in prop::array::uniform3(-5.0f64..5.0)) {
        let sys = &surrogate().system;
        let x = perturbed(&d);
        let t = Vector3::from(t);
        let moved: Vec<f64> = x.iter().enumerate().map(|(k, v)| v + t[k % 3]).collect();
        let shift = sys.dipole(&moved).unwrap() - sys.dipole(&x).unwrap();
        prop_assert!((shift - sys.total_charge() * t).norm() < 1e-12);
    }

    #[test]
    fn ratio_round_trip(ratio in 0.0f64..3.0, cm in 10.0f64..4000.0) {
        let w = wavenumber_to_hartree(cm);
        let back = coupling_ratio(lambda_for_ratio(ratio, w).unwrap(), w).unwrap();
        prop_assert!((back - ratio).abs() < 1e-12);
    }

    #[test]
    fn zero_field_start_has_no_photon_force(d in offsets(), ratio in 0.0f64..2.0) {
        let sys = &surrogate().system;
        let mode = resonant(ratio);
        let mu = sys.dipole(&perturbed(&d)).unwrap();
        let photon = mode.zero_field_init(&mu);
        let scale = mode.omega_c * mode.lambda * mu.norm();
        prop_assert!(mode.photon_force(&photon, &mu).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn full_cavity_energy_is_a_completed_square(
        q in -100.0f64..100.0,
        p in -1.0f64..1.0,
        mu in prop::array::uniform3(-20.0f64..20.0),
        ratio in 0.0f64..3.0,
    ) {
        let mode = resonant(ratio);
        let e = mode.cavity_energy(&PhotonState { q, p }, &Vector3::from(mu));
        prop_assert!(e >= -1e-12);
    }

    #[test]
    fn decoupled_cavity_exerts_no_force(d in offsets(), q in -50.0f64..50.0) {
        let sys = &surrogate().system;
        let x = perturbed(&d);
        let free = CavityMode::free(resonant(1.0).omega_c, Vector3::x()).unwrap();
        let photon = PhotonState { q, p: 0.3 };
        prop_assert!(free.nuclear_cavity_force(&photon, sys, &x).unwrap().iter().all(|f| *f == 0.0));
        let state = FullState { positions: x.clone(), velocities: vec![0.0; 18], photon, time: 0.0 };
        let e = total_energy(sys, &free, &state).unwrap();
        let w = free.omega_c;
        let expect = sys.potential_energy(&x).unwrap() + 0.5 * 0.09 + 0.5 * w * w * q * q;
        prop_assert!(rel(e.total, expect) < 1e-14);
    }

    #[test]
    fn aim_preserves_speeds(seed in 0u64..1000) {
        let s = surrogate();
        let sys = &s.system;
        let spec = SamplingSpec { temperature: 300.0, seed, aim: None, resample: None };
        let mut v = sample_velocities(sys, &sys.reference, &spec, 0).unwrap();
        let before = v.clone();
        aim_projectile(&mut v, &sys.reference, Aim { projectile: F, target: SI }).unwrap();
        for i in 0..6 {
            let n0: f64 = before[3 * i..3 * i + 3].iter().map(|c| c * c).sum();
            let n1: f64 = v[3 * i..3 * i + 3].iter().map(|c| c * c).sum();
            prop_assert!(rel(n1, n0) < 1e-14);
        }
        let u: Vector3<f64> = Vector3::from_fn(|a, _| sys.reference[3 * SI + a] - sys.reference[3 * F + a]);
        let vf = Vector3::new(v[3 * F], v[3 * F + 1], v[3 * F + 2]);
        prop_assert!(vf.dot(&u) >= 0.0);
    }

    #[test]
    fn sampled_momentum_vanishes(seed in 0u64..1000, stream in 0u64..64) {
        let sys = &surrogate().system;
        let spec = SamplingSpec { temperature: 300.0, seed, aim: Some(Aim { projectile: F, target: SI }), resample: None };
        let v = sample_velocities(sys, &sys.reference, &spec, stream).unwrap();
        prop_assert!(com_momentum(sys, &v).iter().all(|p| p.abs() <= 1e-14));
    }

    #[test]
    fn occupations_sum_to_the_quadratic_energy(q in prop::collection::vec(-2.0f64..2.0, 18), qd in prop::collection::vec(-1e-3f64..1e-3, 18)) {
        let s = surrogate();
        let sys = &s.system;
        let modes = NormalModes::of(sys, &sys.reference).unwrap();
        let m = &modes.masses;
        let dx: Vec<f64> = (0..18).map(|k| (0..18).map(|j| modes.vectors[(k, j)] * q[j]).sum::<f64>() / m[k].sqrt()).collect();
        let v: Vec<f64> = (0..18).map(|k| (0..18).map(|j| modes.vectors[(k, j)] * qd[j]).sum::<f64>() / m[k].sqrt()).collect();
        let x: Vec<f64> = sys.reference.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let traj = Trajectory {
            dt: 1.0,
            stride: 1,
            times: vec![0.0],
            positions: vec![x],
            velocities: vec![v.clone()],
            photon_q: vec![0.0],
            photon_p: vec![0.0],
            ..Default::default()
        };
        let occ = mode_occupation(&traj, &modes, &sys.reference).unwrap();
        let h = sys.analytic_hessian(&sys.reference).unwrap();
        let dxv = nalgebra::DVector::from_vec(dx);
        let kinetic: f64 = v.iter().zip(m).map(|(vk, mk)| 0.5 * mk * vk * vk).sum();
        let expect = 0.5 * dxv.dot(&(&h * &dxv)) + kinetic;
        let total: f64 = occ.energies[0].iter().sum();
        // near-zero modes contribute kinetic energy only; their ω²Q² is dropped
        let dropped: f64 = (0..18).filter(|&j| modes.near_zero[j]).map(|j| 0.5 * modes.eigenvalues[j] * q[j] * q[j]).sum();
        prop_assert!(rel(total + dropped, expect) < 1e-8, "{} vs {}", total, expect);
        prop_assert!(occ.energies[0].iter().all(|e| *e >= -1e-12));
    }
}

#[test]
fn one_excited_mode_carries_all_the_energy() {
    let s = surrogate();
    let sys = &s.system;
    let modes = NormalModes::of(sys, &sys.reference).unwrap();
    let j = s.bright_mode;
    let q0 = 0.5;
    let x: Vec<f64> = (0..18)
        .map(|k| sys.reference[k] + q0 * modes.vectors[(k, j)] / modes.masses[k].sqrt())
        .collect();
    let traj = Trajectory {
        times: vec![0.0],
        positions: vec![x],
        velocities: vec![vec![0.0; 18]],
        photon_q: vec![0.0],
        photon_p: vec![0.0],
        ..Default::default()
    };
    let occ = mode_occupation(&traj, &modes, &sys.reference).unwrap();
    let e = &occ.energies[0];
    assert!(rel(e[j], 0.5 * modes.eigenvalues[j] * q0 * q0) < 1e-10);
    assert!(e.iter().enumerate().all(|(k, v)| k == j || v.abs() < 1e-10));
}

#[test]
fn normal_modes_are_orthonormal_eigenvectors() {
    let sys = &surrogate().system;
    let modes = NormalModes::of(sys, &sys.reference).unwrap();
    let v = &modes.vectors;
    let gram = v.transpose() * v;
    assert!((gram - DMatrix::identity(18, 18)).abs().max() < 1e-10);
    let h = sys.analytic_hessian(&sys.reference).unwrap();
    let m: Vec<f64> = modes.masses.iter().map(|m| m.sqrt()).collect();
    let k = DMatrix::from_fn(18, 18, |a, b| h[(a, b)] / (m[a] * m[b]));
    for j in 0..18 {
        let r = &k * v.column(j) - v.column(j) * modes.eigenvalues[j];
        assert!(r.norm() < 1e-8);
    }
    assert_eq!(modes.near_zero.iter().filter(|z| **z).count(), 6);
    assert!(modes.eigenvalues.iter().zip(&modes.near_zero).all(|(e, z)| *z || *e > 0.0));
}

#[test]
fn stretch_weights_are_a_unit_vector() {
    let sys = &surrogate().system;
    let modes = NormalModes::of(sys, &sys.reference).unwrap();
    let w = sic_weighted_spectrum(&modes, sys, &sys.reference, (SI, C1)).unwrap();
    assert!((w.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn polariton_pair_closed_form() {
    let bare = NormalModes::from_parts(
        vec![1.0],
        DMatrix::from_element(1, 1, 1.0),
        vec![Vector3::new(2.0, 0.0, 0.0)],
        vec![1.0],
    )
    .unwrap();
    let mode = CavityMode::new(1.0, 0.1, Vector3::x()).unwrap();
    let p = polariton_modes(&bare, &mode).unwrap();
    let w: Vec<f64> = p.eigenvalues.iter().map(|e| e.sqrt()).collect();
    assert!((w[0] - 0.904988).abs() < 1e-6);
    assert!((w[1] - 1.104988).abs() < 1e-6);
}

#[test]
fn trajectory_frames_are_uniform_and_energies_add_up() {
    let s = surrogate();
    let sys = &s.system;
    let mode = resonant(1.132);
    let spec = SamplingSpec { temperature: 300.0, seed: 2, aim: None, resample: None };
    let state = FullState {
        velocities: sample_velocities(sys, &sys.reference, &spec, 0).unwrap(),
        photon: mode.zero_field_init(&sys.dipole(&sys.reference).unwrap()),
        positions: sys.reference.clone(),
        time: 0.0,
    };
    let dt = fs_to_au(0.25);
    let (traj, event) = propagate(sys, &mode, &state, dt, 400, 4, &ReactionMonitor::for_system(sys)).unwrap();
    assert_eq!(traj.len(), 101);
    for w in traj.times.windows(2) {
        assert!(((w[1] - w[0]) - 4.0 * dt).abs() < 1e-9);
    }
    for e in &traj.energies {
        assert_eq!(e.total, e.potential + e.kinetic + e.cavity);
    }
    if let Some(t) = event.crossing_time {
        assert!(event.occurred && t >= traj.times[0] && t <= *traj.times.last().unwrap());
    }
}

#[test]
fn batches_do_not_depend_on_thread_count() {
    let s = surrogate();
    let sys = &s.system;
    let mode = resonant(1.132);
    let start = vsc_core::surrogate::approach_geometry(sys, 0.8).unwrap();
    let spec = SamplingSpec { temperature: 300.0, seed: 9, aim: Some(Aim { projectile: F, target: SI }), resample: None };
    let ics: Vec<InitialCondition> = (0..6)
        .map(|k| InitialCondition {
            id: k,
            positions: start.clone(),
            velocities: sample_velocities(sys, &start, &spec, k as u64).unwrap(),
        })
        .collect();
    let params = Propagation { dt: fs_to_au(0.25), n_steps: 1200, stride: 4 };
    let window = Window { start: 0.0, end: fs_to_au(300.0) };
    let many = run_ensemble(sys, &mode, &ics, &params, window, false).unwrap();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_ensemble(sys, &mode, &ics, &params, window, false).unwrap());
    assert_eq!(many, one);
    let mut reversed = ics.clone();
    reversed.reverse();
    let rev = run_ensemble(sys, &mode, &reversed, &params, window, false).unwrap();
    assert_eq!(rev.statistics, many.statistics);
    assert_eq!(reaction_statistics(&many.outcomes, window).unwrap(), many.statistics);
}

#[test]
fn slow_oscillator_conserves_energy_at_every_frame() {
    use vsc_core::model::{BondTerm, DipoleModel, Particle};
    use vsc_core::reactive::{calibrate_reactive_bond, ReactiveTargets};
    use vsc_core::ModelSystem;

    // heavy beads put the well frequency near 20 cm-1
    let pot = calibrate_reactive_bond(&ReactiveTargets {
        barrier: 0.0128622,
        r0: 3.6,
        r_ts: 5.2,
        curvature_min: 0.14,
        curvature_ts: -0.00235,
        outer_drop: 0.0037,
    })
    .unwrap();
    let sys = ModelSystem::new(
        vec![Particle::new("A", 16200.0, 0.0), Particle::new("B", 21600.0, 0.0)],
        vec![BondTerm::reactive(0, 1, pot)],
        vec![],
        DipoleModel::default(),
        0,
        vec![0.0, 0.0, 0.0, 3.6, 0.0, 0.0],
    )
    .unwrap();
    let state = FullState {
        positions: vec![0.0, 0.0, 0.0, 3.61, 0.0, 0.0],
        velocities: vec![0.0; 6],
        photon: PhotonState::default(),
        time: 0.0,
    };
    let free = CavityMode::free(0.004, Vector3::x()).unwrap();
    let (traj, _) = propagate(&sys, &free, &state, fs_to_au(0.25), 4000, 1, &ReactionMonitor::for_system(&sys)).unwrap();
    let e0 = traj.energies[0].total;
    let worst = traj.energies.iter().map(|e| ((e.total - e0) / e0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}
