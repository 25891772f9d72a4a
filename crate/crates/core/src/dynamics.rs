//! Velocity Verlet propagation of nuclei and cavity photon, trajectory
//! recording and reaction detection.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cavity::{kinetic_energy, projected_dipole_gradient, CavityMode, EnergyBreakdown, FullState, PhotonState};
use crate::error::{Error, Result};
use crate::model::ModelSystem;

/// Recorded time series. Times are in atomic units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub stride: usize,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub photon_q: Vec<f64>,
    pub photon_p: Vec<f64>,
    pub energies: Vec<EnergyBreakdown>,
    pub dipole: Vec<[f64; 3]>,
    /// Total forces (matter + cavity) on the nuclei.
    pub forces: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Distance between particles `i` and `j` in every frame.
    pub fn bond_lengths(&self, i: usize, j: usize) -> Vec<f64> {
        self.positions
            .iter()
            .map(|x| {
                let d = Vector3::new(
                    x[3 * j] - x[3 * i],
                    x[3 * j + 1] - x[3 * i + 1],
                    x[3 * j + 2] - x[3 * i + 2],
                );
                d.norm()
            })
            .collect()
    }

    /// Frames with `t ≤ t_end` (a.u.).
    pub fn truncated(&self, t_end: f64) -> Trajectory {
        let tol = 1e-9 * t_end.abs().max(1.0);
        let n = self.times.iter().take_while(|t| **t <= t_end + tol).count();
        let cut = |v: &Vec<Vec<f64>>| v.iter().take(n).cloned().collect();
        Trajectory {
            dt: self.dt,
            stride: self.stride,
            times: self.times[..n].to_vec(),
            positions: cut(&self.positions),
            velocities: cut(&self.velocities),
            photon_q: self.photon_q.iter().take(n).copied().collect(),
            photon_p: self.photon_p.iter().take(n).copied().collect(),
            energies: self.energies.iter().take(n).copied().collect(),
            dipole: self.dipole.iter().take(n).copied().collect(),
            forces: cut(&self.forces),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionEvent {
    pub occurred: bool,
    /// First crossing time, atomic units (linear interpolation).
    pub crossing_time: Option<f64>,
    pub threshold: f64,
    /// Some bond stretched beyond five times the barrier length.
    pub dissociated: bool,
}

/// Energy bookkeeping of a recorded run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyConservation {
    /// Least-squares slope of the total energy times the run length, over |E₀|.
    pub relative_drift: f64,
    /// max |E(t) − E₀|, Hartree.
    pub peak_error: f64,
}

impl Trajectory {
    pub fn energy_conservation(&self) -> Result<EnergyConservation> {
        if self.energies.len() < 2 || self.energies.len() != self.times.len() {
            return Err(Error::arg("need at least two frames with energies"));
        }
        let e0 = self.energies[0].total;
        let n = self.times.len() as f64;
        let tm = self.times.iter().sum::<f64>() / n;
        let em = self.energies.iter().map(|e| e.total).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (t, e) in self.times.iter().zip(&self.energies) {
            sxy += (t - tm) * (e.total - em);
            sxx += (t - tm) * (t - tm);
        }
        let span = self.times[self.times.len() - 1] - self.times[0];
        Ok(EnergyConservation {
            relative_drift: (sxy / sxx * span / e0).abs(),
            peak_error: self.energies.iter().map(|e| (e.total - e0).abs()).fold(0.0, f64::max),
        })
    }
}

/// Bond and threshold watched during propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionMonitor {
    pub i: usize,
    pub j: usize,
    pub threshold: f64,
}

impl ReactionMonitor {
    /// Watch the reactive bond against its barrier-top length.
    pub fn for_system(system: &ModelSystem) -> Self {
        let (i, j) = system.reactive_pair();
        ReactionMonitor {
            i,
            j,
            threshold: system.reactive_potential().r_ts,
        }
    }
}

/// Integrator state with cached accelerations.
struct Integrator<'a> {
    system: &'a ModelSystem,
    mode: &'a CavityMode,
    masses: Vec<f64>,
    coupling_gradient: Vec<f64>,
    forces: Vec<f64>,
    photon_acc: f64,
    potential: f64,
    dipole: Vector3<f64>,
}

impl<'a> Integrator<'a> {
    fn new(system: &'a ModelSystem, mode: &'a CavityMode, state: &FullState) -> Result<Self> {
        system.check_positions(&state.positions)?;
        if state.velocities.len() != system.n_dof() {
            return Err(Error::arg("velocity dimension mismatch"));
        }
        let mut it = Integrator {
            system,
            mode,
            masses: system.masses(),
            coupling_gradient: projected_dipole_gradient(system, &mode.polarization),
            forces: vec![0.0; system.n_dof()],
            photon_acc: 0.0,
            potential: 0.0,
            dipole: Vector3::zeros(),
        };
        it.update(&state.positions, &state.photon, state.time)?;
        Ok(it)
    }

    fn update(&mut self, x: &[f64], photon: &PhotonState, time: f64) -> Result<()> {
        self.potential = self.system.energy_forces_into(x, &mut self.forces);
        self.dipole = self.system.dipole_unchecked(x);
        if !self.potential.is_finite() || self.forces.iter().any(|f| !f.is_finite()) {
            let term = self
                .system
                .offending_term(x)
                .unwrap_or_else(|| "matter force".to_string());
            return Err(Error::Integration { time, term });
        }
        if !self.mode.is_decoupled() {
            let s = self.mode.force_prefactor(photon, &self.dipole);
            for (f, g) in self.forces.iter_mut().zip(&self.coupling_gradient) {
                *f -= s * g;
            }
            if !s.is_finite() {
                return Err(Error::Integration {
                    time,
                    term: "cavity force".to_string(),
                });
            }
        }
        self.photon_acc = self.mode.photon_force(photon, &self.dipole);
        if !self.photon_acc.is_finite() {
            return Err(Error::Integration {
                time,
                term: "photon acceleration".to_string(),
            });
        }
        Ok(())
    }

    fn half_kick(&self, state: &mut FullState, dt: f64) {
        for (k, v) in state.velocities.iter_mut().enumerate() {
            *v += 0.5 * dt * self.forces[k] / self.masses[k / 3];
        }
        state.photon.p += 0.5 * dt * self.photon_acc;
    }

    fn step(&mut self, state: &mut FullState, dt: f64) -> Result<()> {
        self.half_kick(state, dt);
        for (x, v) in state.positions.iter_mut().zip(&state.velocities) {
            *x += dt * v;
        }
        state.photon.q += dt * state.photon.p;
        state.time += dt;
        self.update(&state.positions, &state.photon, state.time)?;
        self.half_kick(state, dt);
        Ok(())
    }

    fn energies(&self, state: &FullState) -> EnergyBreakdown {
        EnergyBreakdown::new(
            self.potential,
            kinetic_energy(&self.masses, &state.velocities),
            self.mode.cavity_energy(&state.photon, &self.dipole),
        )
    }

    fn record(&self, traj: &mut Trajectory, state: &FullState) {
        traj.times.push(state.time);
        traj.positions.push(state.positions.clone());
        traj.velocities.push(state.velocities.clone());
        traj.photon_q.push(state.photon.q);
        traj.photon_p.push(state.photon.p);
        traj.energies.push(self.energies(state));
        traj.dipole.push([self.dipole.x, self.dipole.y, self.dipole.z]);
        traj.forces.push(self.forces.clone());
    }
}

/// One joint velocity Verlet step of nuclei and photon.
pub fn velocity_verlet_step(
    system: &ModelSystem,
    mode: &CavityMode,
    state: &FullState,
    dt: f64,
) -> Result<FullState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg("time step must be positive"));
    }
    let mut it = Integrator::new(system, mode, state)?;
    let mut next = state.clone();
    it.step(&mut next, dt)?;
    Ok(next)
}

/// Propagate `n_steps`, recording every `stride` steps (frame 0 included).
pub fn propagate(
    system: &ModelSystem,
    mode: &CavityMode,
    state: &FullState,
    dt: f64,
    n_steps: usize,
    stride: usize,
    monitor: &ReactionMonitor,
) -> Result<(Trajectory, ReactionEvent)> {
    if n_steps == 0 {
        return Err(Error::arg("n_steps must be at least 1"));
    }
    if stride == 0 {
        return Err(Error::arg("stride must be at least 1"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg("time step must be positive"));
    }
    let n = system.n_particles();
    if monitor.i >= n || monitor.j >= n || monitor.i == monitor.j {
        return Err(Error::arg("invalid reaction monitor indices"));
    }
    let mut it = Integrator::new(system, mode, state)?;
    let mut current = state.clone();
    let mut traj = Trajectory {
        dt,
        stride,
        ..Default::default()
    };
    let capacity = n_steps / stride + 1;
    traj.times.reserve(capacity);
    it.record(&mut traj, &current);

    let dissociation = 5.0 * system.reactive_potential().r_ts;
    let mut event = ReactionEvent {
        occurred: false,
        crossing_time: None,
        threshold: monitor.threshold,
        dissociated: false,
    };
    let mut r_prev = system.distance(&current.positions, monitor.i, monitor.j);
    if r_prev > monitor.threshold {
        event.occurred = true;
        event.crossing_time = Some(current.time);
    }
    for step in 1..=n_steps {
        let t_prev = current.time;
        it.step(&mut current, dt)?;
        let r = system.distance(&current.positions, monitor.i, monitor.j);
        if !event.occurred && r > monitor.threshold {
            event.occurred = true;
            let frac = (monitor.threshold - r_prev) / (r - r_prev);
            event.crossing_time = Some(t_prev + frac * dt);
        }
        r_prev = r;
        if !event.dissociated
            && system
                .bonds
                .iter()
                .any(|b| system.distance(&current.positions, b.i, b.j) > dissociation)
        {
            event.dissociated = true;
        }
        if step % stride == 0 {
            it.record(&mut traj, &current);
        }
    }
    Ok((traj, event))
}

/// First frame at which the `(i, j)` distance exceeds `threshold`; the
/// crossing time is interpolated linearly between frames.
pub fn detect_reaction(trajectory: &Trajectory, bond: (usize, usize), threshold: f64) -> Result<ReactionEvent> {
    if !(threshold >= 0.0) {
        return Err(Error::arg("threshold must be non-negative"));
    }
    let n_particles = trajectory.positions.first().map_or(0, |x| x.len() / 3);
    if bond.0 >= n_particles || bond.1 >= n_particles || bond.0 == bond.1 {
        return Err(Error::arg("invalid bond indices"));
    }
    let lengths = trajectory.bond_lengths(bond.0, bond.1);
    let mut event = ReactionEvent {
        occurred: false,
        crossing_time: None,
        threshold,
        dissociated: false,
    };
    for (k, &r) in lengths.iter().enumerate() {
        if r > threshold {
            event.occurred = true;
            event.crossing_time = Some(if k == 0 {
                trajectory.times[0]
            } else {
                let (t0, t1) = (trajectory.times[k - 1], trajectory.times[k]);
                let r0 = lengths[k - 1];
                t0 + (threshold - r0) / (r - r0) * (t1 - t0)
            });
            break;
        }
    }
    Ok(event)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BondTerm, DipoleModel, Particle};
    use crate::reactive::{calibrate_reactive_bond, ReactiveTargets};

    fn reactive() -> crate::reactive::ReactivePotential {
        calibrate_reactive_bond(&ReactiveTargets {
            barrier: 0.0128622,
            r0: 3.6,
            r_ts: 5.2,
            curvature_min: 0.14,
            curvature_ts: -0.00235,
            outer_drop: 0.0037,
        })
        .unwrap()
    }

    /// Particle 0 (m = 1 mₑ) on a unit zero-length spring to a very heavy
    /// anchor, plus a distant reactive pair.
    fn oscillator() -> ModelSystem {
        let heavy = 1e12;
        let particles = vec![
            Particle::new("A", 1.0 / crate::units::AMU_TO_ELECTRON_MASS, 0.0),
            Particle::new("W", heavy, 0.0),
            Particle::new("R1", heavy, 0.0),
            Particle::new("R2", heavy, 0.0),
        ];
        let reference = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 50.0, 0.0, 0.0, 53.6, 0.0, 0.0];
        ModelSystem::new(
            particles,
            vec![BondTerm::harmonic(0, 1, 1.0, 0.0), BondTerm::reactive(2, 3, reactive())],
            vec![],
            DipoleModel::default(),
            1,
            reference,
        )
        .unwrap()
    }

    fn at_rest(system: &ModelSystem) -> FullState {
        FullState {
            positions: system.reference.clone(),
            velocities: vec![0.0; system.n_dof()],
            photon: PhotonState::default(),
            time: 0.0,
        }
    }

    fn no_cavity() -> CavityMode {
        CavityMode::free(0.004, Vector3::x()).unwrap()
    }

    #[test]
    fn fixed_point() {
        let s = oscillator();
        let st = at_rest(&s);
        let next = velocity_verlet_step(&s, &no_cavity(), &st, 0.1).unwrap();
        assert_eq!(next.positions, st.positions);
        // the reactive pair sits within rounding of its minimum
        assert!(next.velocities.iter().all(|v| v.abs() < 1e-25));
        assert_eq!(next.time, 0.1);
    }

    #[test]
    fn harmonic_period() {
        let s = oscillator();
        let mut st = at_rest(&s);
        st.positions[0] = 1.0;
        let dt = 1e-3;
        let n = (2.0 * std::f64::consts::PI / dt).round() as usize;
        let (traj, _) = propagate(&s, &no_cavity(), &st, dt, n, n, &ReactionMonitor::for_system(&s)).unwrap();
        let x = traj.positions.last().unwrap()[0];
        assert!((x - 1.0).abs() < 1e-5, "{x}");
    }

    #[test]
    fn step_reversibility() {
        let s = oscillator();
        let mut st = at_rest(&s);
        st.positions[0] = 0.7;
        st.velocities[1] = 0.2;
        let mode = CavityMode::new(0.004, 0.05, Vector3::x()).unwrap();
        let fwd = velocity_verlet_step(&s, &mode, &st, 0.05).unwrap();
        let mut back = fwd.clone();
        back.velocities.iter_mut().for_each(|v| *v = -*v);
        back.photon.p = -back.photon.p;
        let ret = velocity_verlet_step(&s, &mode, &back, 0.05).unwrap();
        for (a, b) in ret.positions.iter().zip(&st.positions) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn free_photon_follows_cosine() {
        let s = oscillator();
        let mut st = at_rest(&s);
        st.photon.q = 2.0;
        let w = 0.004;
        let mode = CavityMode::free(w, Vector3::x()).unwrap();
        let dt = 0.5;
        let (traj, _) = propagate(&s, &mode, &st, dt, 4000, 10, &ReactionMonitor::for_system(&s)).unwrap();
        // Verlet phase error is O((ω dt)² ω t); compare against the
        // modified frequency of the discrete oscillator.
        let wd = 2.0 / dt * (0.5 * w * dt).asin();
        for (t, q) in traj.times.iter().zip(&traj.photon_q) {
            assert!((q - 2.0 * (wd * t).cos()).abs() < 2.0 * (w * dt).powi(2));
        }
        assert_eq!(traj.len(), 401);
    }

    #[test]
    fn zero_steps_rejected() {
        let s = oscillator();
        let r = propagate(&s, &no_cavity(), &at_rest(&s), 0.1, 0, 1, &ReactionMonitor::for_system(&s));
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    fn synthetic(lengths: &[f64], dt: f64) -> Trajectory {
        Trajectory {
            dt,
            stride: 1,
            times: (0..lengths.len()).map(|k| k as f64 * dt).collect(),
            positions: lengths.iter().map(|&r| vec![0.0, 0.0, 0.0, r, 0.0, 0.0]).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn detect_linear_crossing() {
        let v = 0.01;
        let dt = 2.0;
        let lengths: Vec<f64> = (0..200).map(|k| 3.0 + v * k as f64 * dt).collect();
        let traj = synthetic(&lengths, dt);
        let ev = detect_reaction(&traj, (0, 1), 4.1).unwrap();
        let t_star = (4.1 - 3.0) / v;
        assert!(ev.occurred);
        assert!((ev.crossing_time.unwrap() - t_star).abs() <= dt);

        let flat = synthetic(&[3.0; 50], dt);
        assert!(!detect_reaction(&flat, (0, 1), 4.1).unwrap().occurred);
        let ev = detect_reaction(&flat, (0, 1), 0.0).unwrap();
        assert_eq!(ev.crossing_time, Some(0.0));
        assert!(detect_reaction(&flat, (0, 2), 1.0).is_err());
    }
}
