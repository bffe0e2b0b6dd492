//! Python bindings: simulation, training, checkpoints, and the analysis
//! primitives. States cross the boundary as `(theta1, omega1, theta2, omega2)`
//! tuples.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use chaosib::analysis;
use chaosib::autodiff::Tensor;
use chaosib::bottleneck::{self, BetaSchedule, GaussianEmbedding, Mode};
use chaosib::checkpoint::Checkpoint;
use chaosib::pendulum::{self, State};
use chaosib::trainer::{self, InfoPlanePoint, RunPaths, TrainRunConfig};

type StateTuple = (f64, f64, f64, f64);

fn err(e: chaosib::Error) -> PyErr {
    match e {
        chaosib::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_state(s: StateTuple) -> State {
    State::new(s.0, s.1, s.2, s.3)
}

fn to_tuple(s: &State) -> StateTuple {
    (s.theta1, s.omega1, s.theta2, s.omega2)
}

/// Physical and integration parameters; defaults are the reference setup.
#[pyclass(name = "PendulumConfig", module = "chaosib_py", from_py_object)]
#[derive(Clone)]
struct PyPendulumConfig {
    inner: pendulum::PendulumConfig,
}

#[pymethods]
impl PyPendulumConfig {
    #[new]
    #[pyo3(signature = (
        energy_over_g = 3.0, l1 = 1.0, l2 = 1.0, m1 = 1.0, m2 = 1.0, g = 9.81,
        dt_integrate = 1e-3, dt_save = 0.02, t_total = 100.0, t_burn_in = 50.0, energy_tolerance = 1e-3,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        energy_over_g: f64,
        l1: f64,
        l2: f64,
        m1: f64,
        m2: f64,
        g: f64,
        dt_integrate: f64,
        dt_save: f64,
        t_total: f64,
        t_burn_in: f64,
        energy_tolerance: f64,
    ) -> PyResult<Self> {
        let inner = pendulum::PendulumConfig {
            m1,
            m2,
            l1,
            l2,
            g,
            energy_over_g,
            dt_integrate,
            dt_save,
            t_total,
            t_burn_in,
            energy_tolerance,
        };
        inner.validate().map_err(err)?;
        Ok(PyPendulumConfig { inner })
    }

    #[getter]
    fn energy_over_g(&self) -> f64 {
        self.inner.energy_over_g
    }
    #[getter]
    fn l1(&self) -> f64 {
        self.inner.l1
    }
    #[getter]
    fn l2(&self) -> f64 {
        self.inner.l2
    }
    #[getter]
    fn dt_save(&self) -> f64 {
        self.inner.dt_save
    }
    #[getter]
    fn saved_states(&self) -> usize {
        self.inner.saved_states()
    }

    /// Total energy of `state` above the hanging rest state (J).
    fn energy(&self, state: StateTuple) -> f64 {
        pendulum::total_energy(&to_state(state), &self.inner)
    }

    /// One RK4 step of length `dt`; angles of the result are wrapped.
    fn rk4_step(&self, state: StateTuple, dt: f64) -> StateTuple {
        to_tuple(&pendulum::rk4_step(&to_state(state), &self.inner, dt))
    }

    /// `(x, y)` of the second mass.
    fn second_mass_position(&self, state: StateTuple) -> (f64, f64) {
        self.inner.second_mass_position(&to_state(state))
    }

    fn __repr__(&self) -> String {
        format!("PendulumConfig({:?})", self.inner)
    }
}

/// Trajectories of saved states.
#[pyclass(name = "Dataset", module = "chaosib_py")]
struct PyDataset {
    inner: pendulum::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: pendulum::load_dataset(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        pendulum::save_dataset(&self.inner, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps()
    }

    #[getter]
    fn rejected(&self) -> usize {
        self.inner.rejected
    }

    #[getter]
    fn max_relative_drift(&self) -> f64 {
        self.inner.max_relative_drift
    }

    #[getter]
    fn config(&self) -> PyPendulumConfig {
        PyPendulumConfig {
            inner: self.inner.config,
        }
    }

    fn trajectory(&self, index: usize) -> PyResult<Vec<StateTuple>> {
        let t = self
            .inner
            .trajectories
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("trajectory {index} out of range")))?;
        Ok(t.states.iter().map(to_tuple).collect())
    }

    /// `n` states drawn uniformly from the whole dataset.
    fn sample_states(&self, n: usize, seed: u64) -> PyResult<Vec<StateTuple>> {
        let mut rng = chaosib::rng::rng_from_seed(seed);
        let s = analysis::sample_states(&self.inner, n, &mut rng).map_err(err)?;
        Ok(s.iter().map(to_tuple).collect())
    }
}

/// Simulate `n_trajectories` accepted trajectories.
#[pyfunction]
fn simulate(py: Python<'_>, config: PyPendulumConfig, n_trajectories: usize, seed: u64) -> PyResult<PyDataset> {
    let inner = py
        .detach(|| pendulum::generate_dataset(&config.inner, n_trajectories, seed))
        .map_err(err)?;
    Ok(PyDataset { inner })
}

/// A trained model loaded from a checkpoint manifest.
#[pyclass(name = "Model", module = "chaosib_py")]
struct PyModel {
    inner: Checkpoint,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: Checkpoint::load(path).map_err(err)?,
        })
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.model.mode().to_string()
    }

    #[getter]
    fn step(&self) -> u64 {
        self.inner.step
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    /// Full-state `(mean, log_var)` posterior of each state (DIB posteriors
    /// concatenated).
    fn posteriors(&self, states: Vec<StateTuple>) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
        let states: Vec<State> = states.into_iter().map(to_state).collect();
        let post = analysis::state_posteriors(&self.inner.model, &states).map_err(err)?;
        Ok(post.into_iter().map(|g| (g.mean, g.log_var)).collect())
    }

    /// Objective terms on matched present/future states with zero noise.
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        present: Vec<StateTuple>,
        future: Vec<StateTuple>,
        beta: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let p: Vec<State> = present.into_iter().map(to_state).collect();
        let f: Vec<State> = future.into_iter().map(to_state).collect();
        let m = &self.inner.model;
        let b = m.evaluate(&p, &f, &m.zero_noise(p.len()), beta).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("total", b.total)?;
        d.set_item("kl_per_variable", b.kl_per_variable)?;
        d.set_item("kl_total", b.kl_total)?;
        d.set_item("infonce_loss", b.infonce_loss)?;
        d.set_item("mi_estimate", b.mi_estimate)?;
        Ok(d)
    }

    /// States of `sample` whose posterior overlaps the reference by at least
    /// `bc_threshold`, with second-mass positions.
    #[pyo3(signature = (config, sample, reference, bc_threshold = 0.5))]
    fn co_embedded_states<'py>(
        &self,
        py: Python<'py>,
        config: PyPendulumConfig,
        sample: Vec<StateTuple>,
        reference: StateTuple,
        bc_threshold: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sample: Vec<State> = sample.into_iter().map(to_state).collect();
        let set = analysis::co_embedded_states(
            &self.inner.model,
            &config.inner,
            &sample,
            to_state(reference),
            bc_threshold,
        )
        .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("members", set.members.iter().map(to_tuple).collect::<Vec<_>>())?;
        d.set_item("bc", set.member_bc)?;
        d.set_item("positions", set.positions)?;
        Ok(d)
    }
}

fn point_dict<'py>(py: Python<'py>, p: &InfoPlanePoint) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", p.step)?;
    d.set_item("beta", p.beta)?;
    d.set_item("kl_total", p.kl_total)?;
    d.set_item("kl_per_variable", p.kl_per_variable.clone())?;
    d.set_item("infonce_loss", p.infonce_loss)?;
    d.set_item("mi_estimate", p.mi_estimate)?;
    Ok(d)
}

/// Run one annealing run and return its log as a list of dicts. Artifacts
/// are written when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (
    dataset, mode = "ib", delta = 0.2, steps = 50_000, batch_size = 256, learning_rate = 3e-4,
    beta_initial = 5e-4, beta_final = 2.0, split_index = 0, n_splits = 5, seed = 0,
    eval_every = 250, eval_batches = 8, out_dir = None,
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    mode: &str,
    delta: f64,
    steps: u64,
    batch_size: usize,
    learning_rate: f64,
    beta_initial: f64,
    beta_final: f64,
    split_index: usize,
    n_splits: usize,
    seed: u64,
    eval_every: u64,
    eval_batches: usize,
    out_dir: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mode: Mode = mode.parse().map_err(err)?;
    let run = TrainRunConfig {
        delta,
        batch_size,
        learning_rate,
        schedule: BetaSchedule {
            beta_initial,
            beta_final,
            n_steps: steps,
        },
        split_index,
        n_splits,
        seed,
        eval_every,
        eval_batches,
        ..TrainRunConfig::with_mode(mode)
    };
    let paths = out_dir.map(RunPaths::new);
    let data = &dataset.inner;
    let out = py.detach(|| trainer::train(&run, data, paths.as_ref())).map_err(err)?;
    out.log.points.iter().map(|p| point_dict(py, p)).collect()
}

/// Read a `runlog.csv` file into a list of dicts.
#[pyfunction]
fn read_runlog<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let log = trainer::RunLog::read_csv(path).map_err(err)?;
    log.points.iter().map(|p| point_dict(py, p)).collect()
}

/// Per-variable KL shares `(theta1, omega1, theta2, omega2)` along a DIB run log.
#[pyfunction]
fn allocation_profile(path: PathBuf) -> PyResult<Vec<(f64, [f64; 4])>> {
    let log = trainer::RunLog::read_csv(path).map_err(err)?;
    let p = analysis::allocation_profile(&log).map_err(err)?;
    Ok(p.points.iter().map(|p| (p.kl_total, p.shares)).collect())
}

#[pyfunction]
fn kl_to_standard_normal(mean: Vec<f64>, log_var: Vec<f64>) -> PyResult<f64> {
    Ok(GaussianEmbedding::new(mean, log_var).map_err(err)?.kl_to_standard_normal())
}

#[pyfunction]
fn bhattacharyya_coefficient(a: (Vec<f64>, Vec<f64>), b: (Vec<f64>, Vec<f64>)) -> PyResult<f64> {
    let a = GaussianEmbedding::new(a.0, a.1).map_err(err)?;
    let b = GaussianEmbedding::new(b.0, b.1).map_err(err)?;
    analysis::bhattacharyya_coefficient(&a, &b).map_err(err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    Tensor::matrix(n, d, rows.into_iter().flatten().collect()).map_err(err)
}

/// Mean InfoNCE loss and the derived estimate `(loss, mi_estimate)` for
/// matched rows of `u` and `v`.
#[pyfunction]
#[pyo3(signature = (u, v, temperature = 1.0))]
fn infonce_loss(u: Vec<Vec<f64>>, v: Vec<Vec<f64>>, temperature: f64) -> PyResult<(f64, f64)> {
    let r = bottleneck::infonce_loss(&matrix(u)?, &matrix(v)?, temperature).map_err(err)?;
    Ok((r.mean_loss(), r.mi_estimate))
}

#[pyfunction]
#[pyo3(signature = (step, beta_initial = 5e-4, beta_final = 2.0, n_steps = 50_000))]
fn beta_at(step: u64, beta_initial: f64, beta_final: f64, n_steps: u64) -> PyResult<f64> {
    BetaSchedule {
        beta_initial,
        beta_final,
        n_steps,
    }
    .beta_at(step)
    .map_err(err)
}

#[pymodule]
fn chaosib_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPendulumConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(read_runlog, m)?)?;
    m.add_function(wrap_pyfunction!(allocation_profile, m)?)?;
    m.add_function(wrap_pyfunction!(kl_to_standard_normal, m)?)?;
    m.add_function(wrap_pyfunction!(bhattacharyya_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(infonce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(beta_at, m)?)?;
    Ok(())
}
