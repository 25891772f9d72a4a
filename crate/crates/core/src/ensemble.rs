//! Thermal initial conditions, the two-stage sampling protocol, parallel
//! batches and reaction statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{CavityMode, FullState};
use crate::dynamics::{propagate, ReactionEvent, ReactionMonitor, Trajectory};
use crate::error::{Error, Result};
use crate::model::ModelSystem;
use crate::units::BOLTZMANN_HARTREE;

/// Identifier of the generator behind every sampled number.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9); seed_from_u64(seed), stream = trajectory index";

/// Point the projectile's velocity component along projectile→target
/// toward the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aim {
    pub projectile: usize,
    pub target: usize,
}

/// Fresh draws at `temperature` added to base trajectory `base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resample {
    pub base: usize,
    pub temperature: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Kelvin.
    pub temperature: f64,
    pub seed: u64,
    pub aim: Option<Aim>,
    pub resample: Option<Resample>,
}

fn generator(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn boltzmann(system: &ModelSystem, temperature: f64, rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::arg("temperature must be non-negative"));
    }
    let masses = system.masses();
    let kt = BOLTZMANN_HARTREE * temperature;
    Ok((0..system.n_dof())
        .map(|k| {
            let z: f64 = StandardNormal.sample(rng);
            if kt == 0.0 {
                0.0
            } else {
                z * (kt / masses[k / 3]).sqrt()
            }
        })
        .collect())
}

/// Σ mᵢvᵢ along axis `a`, compensated: each product carries its rounding
/// error (fma) and the sum carries its own (two-sum).
fn momentum(masses: &[f64], velocities: &[f64], a: usize) -> f64 {
    let (mut s, mut c) = (0.0_f64, 0.0_f64);
    for (i, m) in masses.iter().enumerate() {
        let v = velocities[3 * i + a];
        let p = m * v;
        c += m.mul_add(v, -p);
        let t = s + p;
        c += if s.abs() >= p.abs() { (s - t) + p } else { (p - t) + s };
        s = t;
    }
    s + c
}

/// Subtract the centre-of-mass velocity (twice, to clean up rounding).
pub fn remove_com_momentum(system: &ModelSystem, velocities: &mut [f64]) {
    let masses = system.masses();
    let total: f64 = masses.iter().sum();
    for _ in 0..2 {
        for a in 0..3 {
            let v = momentum(&masses, velocities, a) / total;
            for i in 0..masses.len() {
                velocities[3 * i + a] -= v;
            }
        }
    }
}

pub fn com_momentum(system: &ModelSystem, velocities: &[f64]) -> [f64; 3] {
    let masses = system.masses();
    [0, 1, 2].map(|a| momentum(&masses, velocities, a))
}

/// Reflect the projectile's velocity component along the projectile→target
/// line if it points away from the target. Speeds are unchanged.
pub fn aim_projectile(velocities: &mut [f64], positions: &[f64], aim: Aim) -> Result<()> {
    let n = positions.len() / 3;
    if aim.projectile >= n || aim.target >= n || aim.projectile == aim.target {
        return Err(Error::arg("invalid aim indices"));
    }
    let (p, t) = (aim.projectile, aim.target);
    let d: Vec<f64> = (0..3).map(|a| positions[3 * t + a] - positions[3 * p + a]).collect();
    let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::arg("projectile and target coincide"));
    }
    let c: f64 = (0..3).map(|a| velocities[3 * p + a] * d[a] / r).sum();
    if c < 0.0 {
        for a in 0..3 {
            velocities[3 * p + a] -= 2.0 * c * d[a] / r;
        }
    }
    Ok(())
}

/// Maxwell–Boltzmann velocities with per-particle variance k_BT/Mᵢ, then the
/// aim step, then centre-of-mass momentum removal. `stream` selects an
/// independent sequence for the same seed.
pub fn sample_velocities(system: &ModelSystem, positions: &[f64], spec: &SamplingSpec, stream: u64) -> Result<Vec<f64>> {
    system.check_positions(positions)?;
    let mut rng = generator(spec.seed, stream);
    let mut v = boltzmann(system, spec.temperature, &mut rng)?;
    if let Some(aim) = spec.aim {
        aim_projectile(&mut v, positions, aim)?;
    }
    remove_com_momentum(system, &mut v);
    Ok(v)
}

/// `base` plus fresh draws at the resampling temperature, one member per
/// stream `0..count`, each with the COM momentum removed again.
pub fn resample_around(system: &ModelSystem, base: &[f64], spec: &SamplingSpec) -> Result<Vec<Vec<f64>>> {
    let rs = spec
        .resample
        .ok_or_else(|| Error::arg("sampling spec has no resampling block"))?;
    if base.len() != system.n_dof() {
        return Err(Error::arg("base velocity dimension mismatch"));
    }
    (0..rs.count)
        .map(|m| {
            let mut rng = generator(spec.seed, (1 << 32) + m as u64);
            let extra = boltzmann(system, rs.temperature, &mut rng)?;
            let mut v: Vec<f64> = base.iter().zip(&extra).map(|(a, b)| a + b).collect();
            remove_com_momentum(system, &mut v);
            Ok(v)
        })
        .collect()
}

/// Starting point of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub id: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

/// Time step, length and recording stride, atomic units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub dt: f64,
    pub n_steps: usize,
    pub stride: usize,
}

/// Analysis window `[start, end]`, atomic units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub id: usize,
    pub event: Option<ReactionEvent>,
    pub times: Vec<f64>,
    /// Reactive bond length per frame, bohr.
    pub bond_length: Vec<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReactionStatistics {
    /// Trajectories that completed.
    pub n: usize,
    pub n_failed: usize,
    pub n_reacted: usize,
    pub reaction_fraction: f64,
    /// ⟨⟨R⟩⟩: trajectory mean of the time-averaged bond length, bohr.
    pub mean_bond_length: f64,
    /// Sample standard deviation / √n; `None` for a single trajectory.
    pub standard_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub outcomes: Vec<TrajectoryOutcome>,
    pub statistics: ReactionStatistics,
    pub window: Window,
}

impl TrajectoryOutcome {
    /// Time-averaged reactive bond length over `window`, bohr.
    pub fn window_mean(&self, window: Window) -> Result<f64> {
        window_mean(&self.times, &self.bond_length, window)
    }
}

impl EnsembleResult {
    /// Ensemble-mean reactive bond length at each frame.
    pub fn time_resolved_bond_length(&self) -> Vec<(f64, f64)> {
        let ok: Vec<&TrajectoryOutcome> = self.outcomes.iter().filter(|o| o.error.is_none()).collect();
        let Some(first) = ok.first() else { return Vec::new() };
        (0..first.times.len())
            .map(|k| {
                let mean = ok.iter().map(|o| o.bond_length[k]).sum::<f64>() / ok.len() as f64;
                (first.times[k], mean)
            })
            .collect()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.outcomes.iter().filter_map(|o| o.trajectory.as_ref())
    }
}

fn window_mean(times: &[f64], values: &[f64], window: Window) -> Result<f64> {
    let last = *times.last().ok_or_else(|| Error::arg("empty trajectory"))?;
    let tol = 1e-9 * last.abs().max(1.0);
    if !(window.end > window.start) || window.start < times[0] - tol || window.end > last + tol {
        return Err(Error::arg("analysis window is empty or outside the trajectory"));
    }
    let inside: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.start - tol && **t <= window.end + tol)
        .map(|(_, v)| *v)
        .collect();
    if inside.is_empty() {
        return Err(Error::arg("no frames inside the analysis window"));
    }
    Ok(inside.iter().sum::<f64>() / inside.len() as f64)
}

/// Time-average each completed trajectory's bond length over `window`, then
/// average over trajectories; count reactions that happen before the window
/// closes. Sums run in trajectory-id order.
pub fn reaction_statistics(outcomes: &[TrajectoryOutcome], window: Window) -> Result<ReactionStatistics> {
    let mut ok: Vec<&TrajectoryOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    ok.sort_by_key(|o| o.id);
    if ok.is_empty() {
        return Err(Error::arg("no completed trajectories"));
    }
    let means = ok
        .iter()
        .map(|o| window_mean(&o.times, &o.bond_length, window))
        .collect::<Result<Vec<f64>>>()?;
    let n = means.len();
    let mean = means.iter().sum::<f64>() / n as f64;
    let standard_error = (n > 1).then(|| {
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    let n_reacted = ok
        .iter()
        .filter(|o| {
            o.event
                .is_some_and(|e| e.occurred && e.crossing_time.is_some_and(|t| t <= window.end))
        })
        .count();
    Ok(ReactionStatistics {
        n,
        n_failed: outcomes.len() - n,
        n_reacted,
        reaction_fraction: n_reacted as f64 / n as f64,
        mean_bond_length: mean,
        standard_error,
    })
}

/// Propagate one initial condition; the photon starts from the zero-field
/// condition.
pub fn run_trajectory(
    system: &ModelSystem,
    mode: &CavityMode,
    ic: &InitialCondition,
    params: &Propagation,
) -> Result<(Trajectory, ReactionEvent)> {
    let mu = system.dipole(&ic.positions)?;
    let state = FullState {
        positions: ic.positions.clone(),
        velocities: ic.velocities.clone(),
        photon: mode.zero_field_init(&mu),
        time: 0.0,
    };
    propagate(
        system,
        mode,
        &state,
        params.dt,
        params.n_steps,
        params.stride,
        &ReactionMonitor::for_system(system),
    )
}

/// Propagate every initial condition (in parallel) and aggregate over
/// `window`. Integration failures are recorded per trajectory.
pub fn run_ensemble(
    system: &ModelSystem,
    mode: &CavityMode,
    initial: &[InitialCondition],
    params: &Propagation,
    window: Window,
    keep_trajectories: bool,
) -> Result<EnsembleResult> {
    if initial.is_empty() {
        return Err(Error::arg("ensemble needs at least one initial condition"));
    }
    let (i, j) = system.reactive_pair();
    let outcomes: Vec<TrajectoryOutcome> = initial
        .par_iter()
        .map(|ic| match run_trajectory(system, mode, ic, params) {
            Ok((traj, event)) => TrajectoryOutcome {
                id: ic.id,
                event: Some(event),
                times: traj.times.clone(),
                bond_length: traj.bond_lengths(i, j),
                error: None,
                trajectory: keep_trajectories.then_some(traj),
            },
            Err(e) => TrajectoryOutcome {
                id: ic.id,
                event: None,
                times: Vec::new(),
                bond_length: Vec::new(),
                error: Some(e.to_string()),
                trajectory: None,
            },
        })
        .collect();
    let statistics = reaction_statistics(&outcomes, window)?;
    Ok(EnsembleResult {
        outcomes,
        statistics,
        window,
    })
}

/// Two-stage protocol: `n_base` aimed draws at `temperature`; the first
/// base trajectory that reacts without the cavity seeds `count` members
/// resampled at the relative temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub start: Vec<f64>,
    pub temperature: f64,
    pub seed: u64,
    pub aim: Option<Aim>,
    pub n_base: usize,
    pub resample_temperature: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolOutcome {
    pub initial: Vec<InitialCondition>,
    /// Chosen base draw and whether it reacted within the window.
    pub base: usize,
    pub base_reacted: bool,
}

pub fn two_stage_initial_conditions(
    system: &ModelSystem,
    probe_mode: &CavityMode,
    protocol: &Protocol,
    params: &Propagation,
    window: Window,
) -> Result<ProtocolOutcome> {
    if protocol.n_base == 0 || protocol.count == 0 {
        return Err(Error::arg("protocol needs at least one base draw and one member"));
    }
    let spec = SamplingSpec {
        temperature: protocol.temperature,
        seed: protocol.seed,
        aim: protocol.aim,
        resample: None,
    };
    let base: Vec<InitialCondition> = (0..protocol.n_base)
        .map(|k| {
            Ok(InitialCondition {
                id: k,
                positions: protocol.start.clone(),
                velocities: sample_velocities(system, &protocol.start, &spec, k as u64)?,
            })
        })
        .collect::<Result<_>>()?;
    let free = CavityMode::free(probe_mode.omega_c, probe_mode.polarization)?;
    let probe = run_ensemble(system, &free, &base, params, window, false)?;
    let chosen = probe.outcomes.iter().position(|o| {
        o.event
            .is_some_and(|e| e.occurred && e.crossing_time.is_some_and(|t| t <= window.end))
    });
    let base_index = chosen.unwrap_or(0);
    let rspec = SamplingSpec {
        resample: Some(Resample {
            base: base_index,
            temperature: protocol.resample_temperature,
            count: protocol.count,
        }),
        ..spec
    };
    let members = resample_around(system, &base[base_index].velocities, &rspec)?;
    Ok(ProtocolOutcome {
        initial: members
            .into_iter()
            .enumerate()
            .map(|(k, v)| InitialCondition {
                id: k,
                positions: protocol.start.clone(),
                velocities: v,
            })
            .collect(),
        base: base_index,
        base_reacted: chosen.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BondTerm, DipoleModel, Particle};
    use crate::reactive::{calibrate_reactive_bond, ReactiveTargets};

    fn system() -> ModelSystem {
        let pot = calibrate_reactive_bond(&ReactiveTargets {
            barrier: 0.0128622,
            r0: 3.6,
            r_ts: 5.2,
            curvature_min: 0.14,
            curvature_ts: -0.00235,
            outer_drop: 0.0037,
        })
        .unwrap();
        ModelSystem::new(
            vec![
                Particle::new("A", 19.0, -0.5),
                Particle::new("B", 28.0, 1.0),
                Particle::new("C", 12.0, -0.5),
            ],
            vec![BondTerm::harmonic(0, 1, 0.15, 3.25), BondTerm::reactive(1, 2, pot)],
            vec![],
            DipoleModel::default(),
            1,
            vec![-3.25, 0.0, 0.0, 0.0, 0.0, 0.0, 3.6, 0.0, 0.0],
        )
        .unwrap()
    }

    fn spec(t: f64, seed: u64) -> SamplingSpec {
        SamplingSpec {
            temperature: t,
            seed,
            aim: None,
            resample: None,
        }
    }

    #[test]
    fn zero_temperature_gives_rest() {
        let s = system();
        let v = sample_velocities(&s, &s.reference, &spec(0.0, 1), 0).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
        assert!(sample_velocities(&s, &s.reference, &spec(-1.0, 1), 0).is_err());
    }

    #[test]
    fn com_momentum_removed_and_deterministic() {
        let s = system();
        let a = sample_velocities(&s, &s.reference, &spec(300.0, 9), 3).unwrap();
        let b = sample_velocities(&s, &s.reference, &spec(300.0, 9), 3).unwrap();
        let c = sample_velocities(&s, &s.reference, &spec(300.0, 10), 3).unwrap();
        let d = sample_velocities(&s, &s.reference, &spec(300.0, 9), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert!(com_momentum(&s, &a).iter().all(|p| p.abs() < 1e-14));
    }

    #[test]
    fn aim_flips_only_the_away_component() {
        let x = vec![-3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.6, 0.0, 0.0];
        let mut v = vec![-1.0, 0.5, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let speed = |v: &[f64]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let before = speed(&v);
        aim_projectile(&mut v, &x, Aim { projectile: 0, target: 1 }).unwrap();
        assert_eq!(v[..3], [1.0, 0.5, 0.2]);
        assert_eq!(speed(&v), before);
        aim_projectile(&mut v, &x, Aim { projectile: 0, target: 1 }).unwrap();
        assert_eq!(v[..3], [1.0, 0.5, 0.2]);
    }

    #[test]
    fn zero_temperature_resampling_copies_base() {
        let s = system();
        let base = sample_velocities(&s, &s.reference, &spec(300.0, 2), 0).unwrap();
        let mut sp = spec(300.0, 2);
        sp.resample = Some(Resample { base: 0, temperature: 0.0, count: 5 });
        let members = resample_around(&s, &base, &sp).unwrap();
        assert_eq!(members.len(), 5);
        for m in &members {
            for (a, b) in m.iter().zip(&base) {
                assert!((a - b).abs() < 1e-18);
            }
        }
    }

    fn outcome(lengths: Vec<f64>) -> TrajectoryOutcome {
        TrajectoryOutcome {
            id: 0,
            event: None,
            times: (0..lengths.len()).map(|k| k as f64).collect(),
            bond_length: lengths,
            error: None,
            trajectory: None,
        }
    }

    #[test]
    fn statistics_of_constant_lengths() {
        let w = Window { start: 0.0, end: 9.0 };
        let one = reaction_statistics(&[outcome(vec![3.7; 10])], w).unwrap();
        assert_eq!(one.mean_bond_length, 3.7);
        assert_eq!(one.standard_error, None);
        let two = reaction_statistics(&[outcome(vec![3.0; 10]), outcome(vec![4.0; 10])], w).unwrap();
        assert!((two.mean_bond_length - 3.5).abs() < 1e-15);
        assert!((two.standard_error.unwrap() - 0.5).abs() < 1e-15);
        let same = reaction_statistics(&vec![outcome(vec![3.0; 10]); 4], w).unwrap();
        assert_eq!(same.standard_error, Some(0.0));
        assert!(reaction_statistics(&[outcome(vec![3.0; 10])], Window { start: 0.0, end: 20.0 }).is_err());
        assert!(reaction_statistics(&[outcome(vec![3.0; 10])], Window { start: 5.0, end: 5.0 }).is_err());
    }

    #[test]
    fn failed_trajectories_are_recorded_not_fatal() {
        let mut bad = outcome(vec![]);
        bad.error = Some("integration error".into());
        let st = reaction_statistics(&[outcome(vec![3.0; 10]), bad], Window { start: 0.0, end: 9.0 }).unwrap();
        assert_eq!((st.n, st.n_failed), (1, 1));
    }

    #[test]
    fn parallel_and_serial_batches_agree() {
        let s = system();
        let mode = CavityMode::new(0.0039, 0.05, nalgebra::Vector3::x()).unwrap();
        let params = Propagation { dt: 10.0, n_steps: 400, stride: 4 };
        let initial: Vec<InitialCondition> = (0..6)
            .map(|k| InitialCondition {
                id: k,
                positions: s.reference.clone(),
                velocities: sample_velocities(&s, &s.reference, &spec(300.0, 5), k as u64).unwrap(),
            })
            .collect();
        let w = Window { start: 0.0, end: 4000.0 };
        let par = run_ensemble(&s, &mode, &initial, &params, w, false).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| run_ensemble(&s, &mode, &initial, &params, w, false)).unwrap();
        assert_eq!(par, ser);
        let dup = vec![initial[0].clone(); 4];
        let r = run_ensemble(&s, &mode, &dup, &params, w, false).unwrap();
        assert_eq!(r.statistics.standard_error, Some(0.0));
        assert!(run_ensemble(&s, &mode, &[], &params, w, false).is_err());
    }
}
