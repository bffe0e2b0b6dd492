//! Planar double pendulum on a constant-energy shell.
//!
//! Angles are measured from the downward vertical and potential energy is
//! referenced to the hanging rest state, so a configuration with
//! `energy_over_g = 3` carries `3 g` joules (for unit mass and length units)
//! above rest. Trajectories start from rest (zero kinetic energy) with the
//! first arm angle drawn uniformly on the admissible set and the second arm
//! angle solved from the energy constraint.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{child_seed, rng_from_seed, Rng};

/// Physical and integration parameters of one simulation campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub g: f64,
    /// Total energy above the hanging rest state, in units of `g`.
    pub energy_over_g: f64,
    pub dt_integrate: f64,
    pub dt_save: f64,
    pub t_total: f64,
    pub t_burn_in: f64,
    /// Largest tolerated relative energy drift before a trajectory is discarded.
    pub energy_tolerance: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        PendulumConfig {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            g: 9.81,
            energy_over_g: 3.0,
            dt_integrate: 1e-3,
            dt_save: 0.02,
            t_total: 100.0,
            t_burn_in: 50.0,
            energy_tolerance: 1e-3,
        }
    }
}

fn integer_ratio(num: f64, den: f64) -> Option<u64> {
    let r = num / den;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() <= 1e-9 * n.max(1.0) {
        Some(n as u64)
    } else {
        None
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("g", self.g),
            ("energy_over_g", self.energy_over_g),
            ("dt_integrate", self.dt_integrate),
            ("dt_save", self.dt_save),
            ("t_total", self.t_total),
            ("energy_tolerance", self.energy_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.t_burn_in.is_finite() && self.t_burn_in >= 0.0 && self.t_burn_in < self.t_total) {
            return Err(Error::InvalidConfig(format!(
                "t_burn_in must lie in [0, t_total), got {} with t_total {}",
                self.t_burn_in, self.t_total
            )));
        }
        if integer_ratio(self.dt_save, self.dt_integrate).is_none() {
            return Err(Error::InvalidConfig(format!(
                "dt_save ({}) must be an integer multiple of dt_integrate ({})",
                self.dt_save, self.dt_integrate
            )));
        }
        if integer_ratio(self.t_total, self.dt_integrate).is_none() {
            return Err(Error::InvalidConfig(format!(
                "t_total ({}) must be an integer multiple of dt_integrate ({})",
                self.t_total, self.dt_integrate
            )));
        }
        if self.saved_states() == 0 {
            return Err(Error::InvalidConfig("no states survive the burn-in".into()));
        }
        Ok(())
    }

    /// Prescribed total energy in joules.
    pub fn prescribed_energy(&self) -> f64 {
        self.energy_over_g * self.g
    }

    /// Integration steps between two saved states.
    pub fn save_stride(&self) -> u64 {
        integer_ratio(self.dt_save, self.dt_integrate).unwrap_or(1)
    }

    pub fn total_steps(&self) -> u64 {
        integer_ratio(self.t_total, self.dt_integrate).unwrap_or(0)
    }

    pub fn burn_in_steps(&self) -> u64 {
        (self.t_burn_in / self.dt_integrate).round() as u64
    }

    /// Number of states stored per trajectory: `(t_total - t_burn_in) / dt_save`.
    pub fn saved_states(&self) -> usize {
        ((self.t_total - self.t_burn_in) / self.dt_save + 1e-9).floor() as usize
    }

    /// Cartesian position of the second mass, origin at the pivot, y up.
    pub fn second_mass_position(&self, s: &State) -> (f64, f64) {
        let x = self.l1 * s.theta1.sin() + self.l2 * s.theta2.sin();
        let y = -self.l1 * s.theta1.cos() - self.l2 * s.theta2.cos();
        (x, y)
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Instantaneous state `(θ₁, ω₁, θ₂, ω₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub theta1: f64,
    pub omega1: f64,
    pub theta2: f64,
    pub omega2: f64,
}

impl State {
    pub const NAMES: [&'static str; 4] = ["theta1", "omega1", "theta2", "omega2"];

    pub fn new(theta1: f64, omega1: f64, theta2: f64, omega2: f64) -> Self {
        State {
            theta1,
            omega1,
            theta2,
            omega2,
        }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        State::new(a[0], a[1], a[2], a[3])
    }

    /// Components in storage order `(θ₁, ω₁, θ₂, ω₂)`.
    pub fn to_array(self) -> [f64; 4] {
        [self.theta1, self.omega1, self.theta2, self.omega2]
    }

    pub fn wrapped(self) -> Self {
        State::new(wrap_angle(self.theta1), self.omega1, wrap_angle(self.theta2), self.omega2)
    }

    /// Euclidean distance with angle differences taken on the circle.
    pub fn distance(&self, other: &State) -> f64 {
        let d1 = wrap_angle(self.theta1 - other.theta1);
        let d2 = wrap_angle(self.theta2 - other.theta2);
        let w1 = self.omega1 - other.omega1;
        let w2 = self.omega2 - other.omega2;
        (d1 * d1 + d2 * d2 + w1 * w1 + w2 * w2).sqrt()
    }
}

/// Time derivative of the state vector, ordered like [`State::to_array`].
pub fn derivatives(s: &State, c: &PendulumConfig) -> [f64; 4] {
    let PendulumConfig { m1, m2, l1, l2, g, .. } = *c;
    let State {
        theta1,
        omega1,
        theta2,
        omega2,
    } = *s;
    let delta = theta2 - theta1;
    let (sd, cd) = delta.sin_cos();
    let (s1, s2) = (theta1.sin(), theta2.sin());
    let mt = m1 + m2;

    let den1 = mt * l1 - m2 * l1 * cd * cd;
    let acc1 = (m2 * l1 * omega1 * omega1 * sd * cd
        + m2 * g * s2 * cd
        + m2 * l2 * omega2 * omega2 * sd
        - mt * g * s1)
        / den1;

    let den2 = mt * l2 - m2 * l2 * cd * cd;
    let acc2 = (-m2 * l2 * omega2 * omega2 * sd * cd
        + mt * (g * s1 * cd - l1 * omega1 * omega1 * sd - g * s2))
        / den2;

    [omega1, acc1, omega2, acc2]
}

/// Kinetic plus potential energy, potential measured from the hanging rest state.
pub fn total_energy(s: &State, c: &PendulumConfig) -> f64 {
    let PendulumConfig { m1, m2, l1, l2, g, .. } = *c;
    let kinetic = 0.5 * m1 * l1 * l1 * s.omega1 * s.omega1
        + 0.5
            * m2
            * (l1 * l1 * s.omega1 * s.omega1
                + l2 * l2 * s.omega2 * s.omega2
                + 2.0 * l1 * l2 * s.omega1 * s.omega2 * (s.theta1 - s.theta2).cos());
    let potential = g * ((m1 + m2) * l1 * (1.0 - s.theta1.cos()) + m2 * l2 * (1.0 - s.theta2.cos()));
    kinetic + potential
}

fn axpy(s: &[f64; 4], k: &[f64; 4], h: f64) -> State {
    State::from_array([s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]])
}

/// Advance the state by one classical fourth-order Runge–Kutta step.
///
/// A negative `dt` integrates backward in time. Output angles are wrapped.
pub fn rk4_step(s: &State, c: &PendulumConfig, dt: f64) -> State {
    let y = s.to_array();
    let k1 = derivatives(s, c);
    let k2 = derivatives(&axpy(&y, &k1, 0.5 * dt), c);
    let k3 = derivatives(&axpy(&y, &k2, 0.5 * dt), c);
    let k4 = derivatives(&axpy(&y, &k3, dt), c);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    State::from_array(out).wrapped()
}

/// Cosine of the second arm angle that puts a resting pendulum with first
/// angle `theta1` on the prescribed energy shell. Values outside `[-1, 1]`
/// mean `theta1` is inadmissible.
pub fn second_angle_cosine(theta1: f64, c: &PendulumConfig) -> f64 {
    let first = (c.m1 + c.m2) * c.l1 * (1.0 - theta1.cos());
    1.0 - (c.energy_over_g - first) / (c.m2 * c.l2)
}

/// Resting state on the energy shell for a given first angle, if one exists.
/// `positive` picks the sign of the second angle.
pub fn resting_state(theta1: f64, positive: bool, c: &PendulumConfig) -> Option<State> {
    let cos2 = second_angle_cosine(theta1, c);
    if !(-1.0..=1.0).contains(&cos2) {
        return None;
    }
    let theta2 = cos2.acos();
    let theta2 = if positive { theta2 } else { -theta2 };
    Some(State::new(theta1, 0.0, theta2, 0.0).wrapped())
}

const MAX_IC_DRAWS: usize = 100_000;

/// Draw a zero-kinetic-energy initial state on the energy shell.
pub fn sample_initial_state(c: &PendulumConfig, rng: &mut Rng) -> Result<State> {
    for _ in 0..MAX_IC_DRAWS {
        let theta1 = rng.random_range(-PI..PI);
        let positive = rng.random_bool(0.5);
        if let Some(s) = resting_state(theta1, positive, c) {
            return Ok(s);
        }
    }
    Err(Error::EmptyEnergyShell {
        attempts: MAX_IC_DRAWS,
    })
}

/// Result of integrating one initial condition for the full campaign time.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub saved: Vec<State>,
    pub max_relative_drift: f64,
    /// `false` if the drift bound was crossed; integration stops there.
    pub accepted: bool,
}

/// Integrate from `initial`, checking the energy after every step and
/// keeping states after the burn-in every `dt_save`.
pub fn simulate(initial: &State, c: &PendulumConfig) -> Simulation {
    let e0 = c.prescribed_energy();
    let stride = c.save_stride();
    let burn = c.burn_in_steps();
    let total = c.total_steps();
    let n_save = c.saved_states();
    let mut saved = Vec::with_capacity(n_save);
    let mut s = *initial;
    let mut max_drift = ((total_energy(&s, c) - e0) / e0).abs();
    if burn == 0 {
        saved.push(s);
    }
    for step in 1..=total {
        s = rk4_step(&s, c, c.dt_integrate);
        let drift = ((total_energy(&s, c) - e0) / e0).abs();
        if drift > max_drift || !drift.is_finite() {
            max_drift = if drift.is_finite() { drift } else { f64::INFINITY };
        }
        if max_drift > c.energy_tolerance {
            return Simulation {
                saved,
                max_relative_drift: max_drift,
                accepted: false,
            };
        }
        if step >= burn && (step - burn) % stride == 0 && saved.len() < n_save {
            saved.push(s);
        }
    }
    Simulation {
        saved,
        max_relative_drift: max_drift,
        accepted: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Seed of the child generator that drew this trajectory's initial condition.
    pub seed: u64,
    pub states: Vec<State>,
}

/// An ensemble of accepted trajectories sharing one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: PendulumConfig,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    /// Initial conditions discarded for energy drift while generating.
    pub rejected: usize,
    /// Largest relative energy drift seen across the accepted trajectories.
    pub max_relative_drift: f64,
}

impl Dataset {
    pub fn n_steps(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.states.len())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

// Attempts per trajectory slot before generation gives up.
const MAX_ATTEMPTS_PER_TRAJECTORY: usize = 1000;

struct Slot {
    trajectory: Trajectory,
    rejected: usize,
    max_drift: f64,
}

fn generate_slot(c: &PendulumConfig, seed: u64, index: u64) -> Result<Slot> {
    let slot_seed = child_seed(seed, index);
    let mut rng = rng_from_seed(slot_seed);
    let mut rejected = 0;
    for _ in 0..MAX_ATTEMPTS_PER_TRAJECTORY {
        let initial = sample_initial_state(c, &mut rng)?;
        let sim = simulate(&initial, c);
        if sim.accepted {
            return Ok(Slot {
                trajectory: Trajectory {
                    seed: slot_seed,
                    states: sim.saved,
                },
                rejected,
                max_drift: sim.max_relative_drift,
            });
        }
        rejected += 1;
    }
    Err(Error::RejectionRate {
        rate: 1.0,
        rejected,
        accepted: 0,
    })
}

/// Simulate `n_traj` accepted trajectories.
///
/// Trajectory `i` draws from its own child generator of `seed`, so the
/// result is the same whatever rayon pool this runs on.
pub fn generate_dataset(c: &PendulumConfig, n_traj: usize, seed: u64) -> Result<Dataset> {
    c.validate()?;
    if n_traj == 0 {
        return Err(Error::InvalidConfig("n_traj must be at least 1".into()));
    }
    let slots: Vec<Slot> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| generate_slot(c, seed, i))
        .collect::<Result<_>>()?;
    let rejected: usize = slots.iter().map(|s| s.rejected).sum();
    let rate = rejected as f64 / (rejected + n_traj) as f64;
    if rate > 0.99 {
        return Err(Error::RejectionRate {
            rate,
            rejected,
            accepted: n_traj,
        });
    }
    let max_relative_drift = slots.iter().map(|s| s.max_drift).fold(0.0, f64::max);
    Ok(Dataset {
        config: *c,
        seed,
        trajectories: slots.into_iter().map(|s| s.trajectory).collect(),
        rejected,
        max_relative_drift,
    })
}

pub const DATASET_MAGIC: &[u8; 4] = b"DPIB";
pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    config: PendulumConfig,
    n_traj: usize,
    n_steps: usize,
    seed: u64,
    trajectory_seeds: Vec<u64>,
    #[serde(default)]
    rejected: usize,
    #[serde(default)]
    max_relative_drift: f64,
}

/// Serialize to the `DPIB` container: magic, u32 version, u64 header length,
/// JSON header, then little-endian f64 states `[n_traj][n_steps][4]`.
pub fn dataset_to_bytes(d: &Dataset) -> Result<Vec<u8>> {
    let n_steps = d.n_steps();
    if d.trajectories.iter().any(|t| t.states.len() != n_steps) {
        return Err(Error::Format("trajectories have unequal lengths".into()));
    }
    let header = DatasetHeader {
        config: d.config,
        n_traj: d.len(),
        n_steps,
        seed: d.seed,
        trajectory_seeds: d.trajectories.iter().map(|t| t.seed).collect(),
        rejected: d.rejected,
        max_relative_drift: d.max_relative_drift,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + d.len() * n_steps * 32);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &d.trajectories {
        for s in &t.states {
            for v in s.to_array() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 16 {
        return Err(Error::PayloadLength {
            expected: 16,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[0..4] != DATASET_MAGIC {
        return Err(Error::Format(format!(
            "expected magic bytes \"DPIB\", found {:?}",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version}, expected {DATASET_VERSION}"
        )));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let json_end = 16u64.saturating_add(json_len);
    if (bytes.len() as u64) < json_end {
        return Err(Error::PayloadLength {
            expected: json_end,
            actual: bytes.len() as u64,
        });
    }
    let json_end = json_end as usize;
    let header: DatasetHeader = serde_json::from_slice(&bytes[16..json_end])?;
    if header.trajectory_seeds.len() != header.n_traj {
        return Err(Error::Format(format!(
            "header lists {} trajectory seeds for {} trajectories",
            header.trajectory_seeds.len(),
            header.n_traj
        )));
    }
    let payload = &bytes[json_end..];
    let expected = (header.n_traj as u64) * (header.n_steps as u64) * 32;
    if payload.len() as u64 != expected {
        return Err(Error::PayloadLength {
            expected,
            actual: payload.len() as u64,
        });
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut trajectories = Vec::with_capacity(header.n_traj);
    for &seed in &header.trajectory_seeds {
        let states = (0..header.n_steps)
            .map(|_| {
                let mut a = [0.0; 4];
                for v in a.iter_mut() {
                    *v = values.next().unwrap();
                }
                State::from_array(a)
            })
            .collect();
        trajectories.push(Trajectory { seed, states });
    }
    Ok(Dataset {
        config: header.config,
        seed: header.seed,
        trajectories,
        rejected: header.rejected,
        max_relative_drift: header.max_relative_drift,
    })
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = dataset_to_bytes(d)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    dataset_from_bytes(&bytes)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
