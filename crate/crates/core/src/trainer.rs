//! Annealed training of bottleneck models on (present, future) state pairs.
//!
//! A run draws batches of pairs `(S_t, S_{t+Δ})` from the training fold,
//! minimizes `β·Σ KL + InfoNCE` with Adam while β follows the geometric
//! schedule, and every `eval_every` steps logs one information-plane point
//! measured on the held-out fold. Everything is reproducible from the run
//! seed: initialization, batches, reparameterization noise and evaluation
//! batches each draw from their own child generator.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::AdamState;
use crate::bottleneck::{total_loss, BetaSchedule, LossBreakdown, Mode, Model, ModelConfig, Normalizer};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::pendulum::{file_digest, load_dataset, Dataset, State};
use crate::rng::{child_rng, Rng};

// Child-stream indices of a run seed.
const STREAM_SPLIT: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_EVAL: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub mode: Mode,
    /// Prediction horizon in seconds; a positive multiple of the dataset's `dt_save`.
    pub delta: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// β schedule; its `n_steps` is the number of optimization steps.
    pub schedule: BetaSchedule,
    pub model: ModelConfig,
    pub split_index: usize,
    pub n_splits: usize,
    pub seed: u64,
    pub eval_every: u64,
    pub eval_batches: usize,
    /// Steps at which an extra checkpoint is written, besides the final one.
    #[serde(default)]
    pub snapshot_steps: Vec<u64>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            mode: Mode::Ib,
            delta: 0.2,
            batch_size: 256,
            learning_rate: 3e-4,
            schedule: BetaSchedule::default(),
            model: ModelConfig::default(),
            split_index: 0,
            n_splits: 5,
            seed: 0,
            eval_every: 250,
            eval_batches: 8,
            snapshot_steps: vec![],
        }
    }
}

impl TrainRunConfig {
    pub fn with_mode(mode: Mode) -> Self {
        TrainRunConfig {
            mode,
            model: ModelConfig::with_mode(mode),
            ..TrainRunConfig::default()
        }
    }

    pub fn n_steps(&self) -> u64 {
        self.schedule.n_steps
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.mode != self.mode {
            return Err(Error::InvalidConfig(format!(
                "run mode {} disagrees with model mode {}",
                self.mode, self.model.mode
            )));
        }
        self.model.validate()?;
        self.schedule.validate()?;
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {}", self.delta)));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be at least 2".into()));
        }
        if self.n_splits < 2 {
            return Err(Error::InvalidConfig("n_splits must be at least 2".into()));
        }
        if self.split_index >= self.n_splits {
            return Err(Error::OutOfRange(format!(
                "split_index {} with {} splits",
                self.split_index, self.n_splits
            )));
        }
        if self.eval_every == 0 || self.eval_batches == 0 {
            return Err(Error::InvalidConfig("eval_every and eval_batches must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Horizon in saved-state indices.
    pub fn delta_steps(&self, dt_save: f64) -> Result<usize> {
        let r = self.delta / dt_save;
        let k = r.round();
        if k < 1.0 || (r - k).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "delta {} is not a positive multiple of dt_save {}",
                self.delta, dt_save
            )));
        }
        Ok(k as usize)
    }

    /// Directory name used by sweeps.
    pub fn run_name(&self) -> String {
        format!(
            "{}_delta{}_split{}of{}_seed{}",
            self.mode, self.delta, self.split_index, self.n_splits, self.seed
        )
    }
}

/// Trajectory indices of a training/validation partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Shuffle trajectory indices by `seed`, cut them into `n_splits` folds, and
/// hold out fold `split_index`.
pub fn split_dataset(n_trajectories: usize, n_splits: usize, split_index: usize, seed: u64) -> Result<Split> {
    if n_splits < 2 {
        return Err(Error::InvalidConfig("n_splits must be at least 2".into()));
    }
    if split_index >= n_splits {
        return Err(Error::OutOfRange(format!("split_index {split_index} with {n_splits} splits")));
    }
    if n_trajectories < n_splits {
        return Err(Error::TooFewTrajectories {
            needed: n_splits,
            have: n_trajectories,
        });
    }
    let mut order: Vec<usize> = (0..n_trajectories).collect();
    order.shuffle(&mut child_rng(seed, STREAM_SPLIT));
    // Fold k covers [k·n/K, (k+1)·n/K).
    let lo = split_index * n_trajectories / n_splits;
    let hi = (split_index + 1) * n_trajectories / n_splits;
    let validation = order[lo..hi].to_vec();
    let train = order[..lo].iter().chain(&order[hi..]).copied().collect();
    Ok(Split { train, validation })
}

/// Matched present/future states and where each pair came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub present: Vec<State>,
    pub future: Vec<State>,
    /// `(trajectory index, present index)` of each pair.
    pub origin: Vec<(usize, usize)>,
}

/// Uniform sampler over every valid `(trajectory, start)` of a fold.
#[derive(Debug, Clone)]
pub struct PairSampler<'a> {
    data: &'a Dataset,
    trajectories: Vec<usize>,
    // Cumulative count of valid starts.
    cumulative: Vec<usize>,
    delta_steps: usize,
}

impl<'a> PairSampler<'a> {
    pub fn new(data: &'a Dataset, trajectories: &[usize], delta_steps: usize) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(trajectories.len());
        let mut total = 0;
        let mut kept = Vec::with_capacity(trajectories.len());
        for &t in trajectories {
            let len = data.trajectories[t].states.len();
            if len > delta_steps {
                total += len - delta_steps;
                cumulative.push(total);
                kept.push(t);
            }
        }
        if total == 0 {
            return Err(Error::OutOfRange(format!(
                "horizon of {delta_steps} saved steps exceeds every trajectory's span"
            )));
        }
        Ok(PairSampler {
            data,
            trajectories: kept,
            cumulative,
            delta_steps,
        })
    }

    pub fn n_valid(&self) -> usize {
        *self.cumulative.last().unwrap()
    }

    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> PairBatch {
        let mut batch = PairBatch {
            present: Vec::with_capacity(batch_size),
            future: Vec::with_capacity(batch_size),
            origin: Vec::with_capacity(batch_size),
        };
        for _ in 0..batch_size {
            let r = rng.random_range(0..self.n_valid());
            let k = self.cumulative.partition_point(|&c| c <= r);
            let start = r - if k == 0 { 0 } else { self.cumulative[k - 1] };
            let t = self.trajectories[k];
            let states = &self.data.trajectories[t].states;
            batch.present.push(states[start]);
            batch.future.push(states[start + self.delta_steps]);
            batch.origin.push((t, start));
        }
        batch
    }
}

/// One-shot form of [`PairSampler::sample`].
pub fn sample_pair_batch(
    data: &Dataset,
    trajectories: &[usize],
    delta_steps: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<PairBatch> {
    Ok(PairSampler::new(data, trajectories, delta_steps)?.sample(batch_size, rng))
}

/// One logged point of an annealing run, measured on validation data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoPlanePoint {
    pub step: u64,
    pub beta: f64,
    /// One entry in IB mode, four in DIB mode; nats.
    pub kl_per_variable: Vec<f64>,
    pub kl_total: f64,
    pub infonce_loss: f64,
    pub mi_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub mode: Mode,
    pub points: Vec<InfoPlanePoint>,
}

pub const RUNLOG_HEADER: [&str; 9] = [
    "step",
    "beta",
    "kl_total",
    "kl_theta1",
    "kl_omega1",
    "kl_theta2",
    "kl_omega2",
    "infonce_loss",
    "mi_estimate",
];

impl RunLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(RUNLOG_HEADER)?;
        for p in &self.points {
            let mut rec = vec![p.step.to_string(), p.beta.to_string(), p.kl_total.to_string()];
            match self.mode {
                Mode::Ib => rec.extend(std::iter::repeat_n(String::new(), 4)),
                Mode::Dib => rec.extend(p.kl_per_variable.iter().map(f64::to_string)),
            }
            rec.push(p.infonce_loss.to_string());
            rec.push(p.mi_estimate.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Parse a run log; DIB mode is recognized by filled per-variable columns.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != RUNLOG_HEADER {
            return Err(Error::Format(format!("{} is not a run log: header {:?}", path.display(), header)));
        }
        let parse = |s: &str, col: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad {col} value {s:?} in {}", path.display())))
        };
        let mut points = Vec::new();
        let mut mode = None;
        for rec in r.records() {
            let rec = rec?;
            let per_var: Vec<&str> = (3..7).map(|i| &rec[i]).collect();
            let row_mode = if per_var.iter().all(|s| s.trim().is_empty()) {
                Mode::Ib
            } else {
                Mode::Dib
            };
            if *mode.get_or_insert(row_mode) != row_mode {
                return Err(Error::Format(format!("{} mixes IB and DIB rows", path.display())));
            }
            let kl_total = parse(&rec[2], "kl_total")?;
            let kl_per_variable = match row_mode {
                Mode::Ib => vec![kl_total],
                Mode::Dib => per_var
                    .iter()
                    .zip(&RUNLOG_HEADER[3..7])
                    .map(|(s, c)| parse(s, c))
                    .collect::<Result<_>>()?,
            };
            points.push(InfoPlanePoint {
                step: rec[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad step {:?}", &rec[0])))?,
                beta: parse(&rec[1], "beta")?,
                kl_per_variable,
                kl_total,
                infonce_loss: parse(&rec[7], "infonce_loss")?,
                mi_estimate: parse(&rec[8], "mi_estimate")?,
            });
        }
        Ok(RunLog {
            // Header-only logs carry no mode information.
            mode: mode.unwrap_or(Mode::Ib),
            points,
        })
    }
}

/// Where `train` writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RunPaths { dir: dir.into() }
    }
    pub fn runlog(&self) -> PathBuf {
        self.dir.join("runlog.csv")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
    pub fn snapshot(&self, step: u64) -> PathBuf {
        self.dir.join(format!("snapshot-{step}.json"))
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: RunLog,
    pub final_checkpoint: Checkpoint,
    pub snapshots: Vec<Checkpoint>,
}

/// Mean objective terms over `batches` fresh validation batches.
fn evaluate(
    model: &Model,
    sampler: &PairSampler,
    batch_size: usize,
    batches: usize,
    beta: f64,
    rng: &mut Rng,
) -> Result<LossBreakdown> {
    let mut kl = vec![0.0; model.n_bottlenecks()];
    let mut nce = 0.0;
    for _ in 0..batches {
        let b = sampler.sample(batch_size, rng);
        let noise = model.sample_noise(batch_size, rng);
        let r = model.evaluate(&b.present, &b.future, &noise, beta)?;
        kl.iter_mut().zip(&r.kl_per_variable).for_each(|(a, v)| *a += v);
        nce += r.infonce_loss;
    }
    kl.iter_mut().for_each(|v| *v /= batches as f64);
    Ok(total_loss(&kl, nce / batches as f64, batch_size, beta))
}

/// Run one annealing optimization. Artifacts are written when `paths` is given.
pub fn train(run: &TrainRunConfig, data: &Dataset, paths: Option<&RunPaths>) -> Result<RunOutput> {
    run.validate()?;
    let delta_steps = run.delta_steps(data.config.dt_save)?;
    let split = split_dataset(data.len(), run.n_splits, run.split_index, run.seed)?;
    let train_sampler = PairSampler::new(data, &split.train, delta_steps)?;
    let val_sampler = PairSampler::new(data, &split.validation, delta_steps)?;
    let normalizer = Normalizer::fit(split.train.iter().flat_map(|&t| data.trajectories[t].states.iter()));

    let mut model = Model::init(run.model.clone(), normalizer, &mut child_rng(run.seed, STREAM_INIT))?;
    let mut adam = AdamState::new(run.learning_rate, &model.params.tensors);
    let mut rng = child_rng(run.seed, STREAM_TRAIN);
    let mut eval_rng = child_rng(run.seed, STREAM_EVAL);
    let schedule = run.schedule;

    if let Some(p) = paths {
        fs::create_dir_all(&p.dir).map_err(|e| Error::io(&p.dir, e))?;
    }
    let mut log = RunLog {
        mode: run.mode,
        points: Vec::new(),
    };
    let mut snapshots = Vec::new();
    let snapshot = |model: &Model, step: u64, rng: &Rng| -> Result<Checkpoint> {
        Ok(Checkpoint {
            model: model.clone(),
            step,
            beta: schedule.beta_at(step)?,
            rng: Some(rng.clone()),
        })
    };

    for step in 1..=run.n_steps() {
        let beta = schedule.beta_at(step)?;
        let batch = train_sampler.sample(run.batch_size, &mut rng);
        let noise = model.sample_noise(run.batch_size, &mut rng);
        let (b, grads) = model.loss_and_grads(&batch.present, &batch.future, &noise, beta)?;
        if !b.total.is_finite() || grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged {
                step,
                beta,
                loss: b.total,
            });
        }
        adam.update(&mut model.params.tensors, &grads)?;

        if step % run.eval_every == 0 {
            let e = evaluate(&model, &val_sampler, run.batch_size, run.eval_batches, beta, &mut eval_rng)?;
            log.points.push(InfoPlanePoint {
                step,
                beta,
                kl_per_variable: e.kl_per_variable,
                kl_total: e.kl_total,
                infonce_loss: e.infonce_loss,
                mi_estimate: e.mi_estimate,
            });
        }
        if run.snapshot_steps.contains(&step) {
            let ck = snapshot(&model, step, &rng)?;
            if let Some(p) = paths {
                ck.save(p.snapshot(step))?;
            }
            snapshots.push(ck);
        }
    }

    let final_checkpoint = snapshot(&model, run.n_steps(), &rng)?;
    if let Some(p) = paths {
        log.write_csv(p.runlog())?;
        final_checkpoint.save(p.checkpoint())?;
    }
    Ok(RunOutput {
        log,
        final_checkpoint,
        snapshots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed,
}

/// Summary written next to each run's artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub config: TrainRunConfig,
    pub seed: u64,
    pub dataset: PathBuf,
    /// SHA-256 of the dataset file.
    pub dataset_sha256: String,
    pub runlog: Option<String>,
    pub checkpoint: Option<String>,
    pub final_point: Option<InfoPlanePoint>,
    pub n_points: usize,
    pub wall_clock_seconds: f64,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// One unit of a sweep.
#[derive(Debug, Clone)]
pub struct SweepJob {
    pub config: TrainRunConfig,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
}

impl SweepJob {
    /// Job writing into `<root>/<run name>`.
    pub fn under(root: impl AsRef<Path>, dataset: impl Into<PathBuf>, config: TrainRunConfig) -> Self {
        SweepJob {
            out_dir: root.as_ref().join(config.run_name()),
            dataset: dataset.into(),
            config,
        }
    }
}

#[derive(Debug, Clone)]
pub enum SweepOutcome {
    Completed(RunLog),
    /// A complete manifest with the same config and dataset already existed.
    Skipped(RunLog),
    Failed(String),
}

impl SweepOutcome {
    pub fn log(&self) -> Option<&RunLog> {
        match self {
            SweepOutcome::Completed(l) | SweepOutcome::Skipped(l) => Some(l),
            SweepOutcome::Failed(_) => None,
        }
    }
}

fn already_done(job: &SweepJob, digest: &str) -> Option<RunLog> {
    let paths = RunPaths::new(&job.out_dir);
    let m = RunManifest::load(paths.manifest()).ok()?;
    if m.status != RunStatus::Complete || m.config != job.config || m.dataset_sha256 != digest {
        return None;
    }
    RunLog::read_csv(paths.runlog()).ok()
}

fn run_job(job: &SweepJob, data: &Dataset, digest: &str) -> SweepOutcome {
    if let Some(log) = already_done(job, digest) {
        return SweepOutcome::Skipped(log);
    }
    let paths = RunPaths::new(&job.out_dir);
    let started = Instant::now();
    let result = train(&job.config, data, Some(&paths));
    let mut manifest = RunManifest {
        status: RunStatus::Complete,
        config: job.config.clone(),
        seed: job.config.seed,
        dataset: job.dataset.clone(),
        dataset_sha256: digest.to_string(),
        runlog: None,
        checkpoint: None,
        final_point: None,
        n_points: 0,
        wall_clock_seconds: 0.0,
        error: None,
    };
    let outcome = match result {
        Ok(out) => {
            manifest.runlog = Some("runlog.csv".into());
            manifest.checkpoint = Some("checkpoint.json".into());
            manifest.final_point = out.log.points.last().cloned();
            manifest.n_points = out.log.points.len();
            SweepOutcome::Completed(out.log)
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            SweepOutcome::Failed(e.to_string())
        }
    };
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    if fs::create_dir_all(&job.out_dir).is_ok() {
        if let Err(e) = manifest.save(paths.manifest()) {
            return SweepOutcome::Failed(format!("writing manifest: {e}"));
        }
    }
    outcome
}

/// Run every job, skipping those already complete. Failures are isolated
/// per job. Outcomes come back in job order.
pub fn sweep(jobs: &[SweepJob]) -> Vec<SweepOutcome> {
    let mut datasets: HashMap<PathBuf, std::result::Result<(Arc<Dataset>, String), String>> = HashMap::new();
    for job in jobs {
        datasets.entry(job.dataset.clone()).or_insert_with(|| {
            let digest = file_digest(&job.dataset).map_err(|e| e.to_string())?;
            let data = load_dataset(&job.dataset).map_err(|e| e.to_string())?;
            Ok((Arc::new(data), digest))
        });
    }
    jobs.par_iter()
        .map(|job| match &datasets[&job.dataset] {
            Ok((data, digest)) => run_job(job, data, digest),
            Err(e) => SweepOutcome::Failed(e.clone()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pendulum::{generate_dataset, save_dataset, PendulumConfig};
    use crate::rng::rng_from_seed;

    fn tiny_data(n: usize) -> Dataset {
        let c = PendulumConfig {
            t_total: 3.0,
            t_burn_in: 1.0,
            ..PendulumConfig::default()
        };
        generate_dataset(&c, n, 5).unwrap()
    }

    fn tiny_run(mode: Mode, steps: u64) -> TrainRunConfig {
        TrainRunConfig {
            batch_size: 8,
            schedule: BetaSchedule {
                n_steps: steps,
                ..BetaSchedule::default()
            },
            model: ModelConfig {
                mode,
                bottleneck_dim: 3,
                shared_dim: 4,
                encoder_widths: vec![8],
                shared_widths: vec![8],
                future_widths: vec![8],
                pe_frequencies: vec![1.0, 2.0],
                ..ModelConfig::default()
            },
            eval_every: 5,
            eval_batches: 2,
            delta: 0.04,
            ..TrainRunConfig::with_mode(mode)
        }
    }

    #[test]
    fn folds_partition_the_trajectories() {
        let mut seen = vec![];
        for k in 0..5 {
            let s = split_dataset(10, 5, k, 3).unwrap();
            assert_eq!(s.validation.len(), 2);
            assert_eq!(s.train.len(), 8);
            assert!(s.validation.iter().all(|v| !s.train.contains(v)));
            seen.extend(s.validation);
        }
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(split_dataset(10, 5, 1, 3).unwrap(), split_dataset(10, 5, 1, 3).unwrap());
        assert!(matches!(split_dataset(10, 5, 5, 3), Err(Error::OutOfRange(_))));
        assert!(matches!(split_dataset(3, 5, 0, 3), Err(Error::TooFewTrajectories { .. })));
    }

    #[test]
    fn pair_offsets() {
        let d = tiny_data(2);
        let mut rng = rng_from_seed(0);
        let b = sample_pair_batch(&d, &[0, 1], 1, 50, &mut rng).unwrap();
        for ((p, f), &(t, i)) in b.present.iter().zip(&b.future).zip(&b.origin) {
            assert_eq!(*p, d.trajectories[t].states[i]);
            assert_eq!(*f, d.trajectories[t].states[i + 1]);
        }
        let full = d.n_steps() - 1;
        let s = PairSampler::new(&d, &[0, 1], full).unwrap();
        assert_eq!(s.n_valid(), 2);
        assert!(s.sample(20, &mut rng).origin.iter().all(|&(_, i)| i == 0));
        assert!(PairSampler::new(&d, &[0, 1], full + 1).is_err());
    }

    #[test]
    fn samplers_stay_inside_their_fold() {
        let d = tiny_data(10);
        let split = split_dataset(d.len(), 5, 2, 9).unwrap();
        let mut rng = rng_from_seed(1);
        let val = PairSampler::new(&d, &split.validation, 3).unwrap().sample(500, &mut rng);
        assert!(val.origin.iter().all(|(t, _)| split.validation.contains(t)));
        let train = PairSampler::new(&d, &split.train, 3).unwrap().sample(500, &mut rng);
        assert!(train.origin.iter().all(|(t, _)| split.train.contains(t)));
    }

    #[test]
    fn start_indices_are_uniform() {
        let d = tiny_data(2);
        let s = PairSampler::new(&d, &[0, 1], 10).unwrap();
        let valid = d.n_steps() - 10;
        let mut counts = vec![0usize; 2 * valid];
        let mut rng = rng_from_seed(4);
        let draws = 100_000;
        for &(t, i) in &s.sample(draws, &mut rng).origin {
            counts[t * valid + i] += 1;
        }
        let e = draws as f64 / counts.len() as f64;
        let chi2: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        // 179 degrees of freedom; the 0.999 quantile is about 243.
        assert!(chi2 < 243.0, "chi2 = {chi2}");
    }

    #[test]
    fn zero_steps_gives_empty_log_and_init_checkpoint() {
        let d = tiny_data(5);
        let run = tiny_run(Mode::Ib, 0);
        let out = train(&run, &d, None).unwrap();
        assert!(out.log.points.is_empty());
        assert_eq!(out.final_checkpoint.step, 0);
    }

    #[test]
    fn logged_beta_follows_schedule_and_runs_repeat() {
        let d = tiny_data(5);
        for mode in [Mode::Ib, Mode::Dib] {
            let run = tiny_run(mode, 20);
            let a = train(&run, &d, None).unwrap();
            let b = train(&run, &d, None).unwrap();
            assert_eq!(a.log, b.log);
            assert_eq!(a.log.points.len(), 4);
            for p in &a.log.points {
                assert!((p.beta - run.schedule.beta_at(p.step).unwrap()).abs() < 1e-12);
                assert!(p.mi_estimate >= 0.0 && p.mi_estimate <= (8f64).ln());
                let sum: f64 = p.kl_per_variable.iter().sum();
                assert!((sum - p.kl_total).abs() < 1e-9);
                assert_eq!(p.kl_per_variable.len(), mode.n_bottlenecks());
            }
        }
    }

    #[test]
    fn runlog_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = tiny_data(5);
        for mode in [Mode::Ib, Mode::Dib] {
            let out = train(&tiny_run(mode, 10), &d, None).unwrap();
            let path = dir.path().join(format!("{mode}.csv"));
            out.log.write_csv(&path).unwrap();
            assert_eq!(RunLog::read_csv(&path).unwrap(), out.log);
        }
    }

    #[test]
    fn bad_horizon_rejected() {
        let d = tiny_data(5);
        let run = TrainRunConfig {
            delta: 0.03,
            ..tiny_run(Mode::Ib, 1)
        };
        assert!(train(&run, &d, None).is_err());
    }

    #[test]
    fn sweep_skips_finished_runs_and_isolates_failures() {
        let dir = tempfile::tempdir().unwrap();
        let data_path = dir.path().join("data.dpib");
        save_dataset(&tiny_data(5), &data_path).unwrap();
        let good = SweepJob::under(dir.path(), &data_path, tiny_run(Mode::Ib, 10));
        let bad = SweepJob::under(
            dir.path(),
            &data_path,
            TrainRunConfig {
                delta: 100.0,
                seed: 1,
                ..tiny_run(Mode::Ib, 10)
            },
        );
        let first = sweep(&[good.clone(), bad.clone()]);
        assert!(matches!(first[0], SweepOutcome::Completed(_)));
        assert!(matches!(first[1], SweepOutcome::Failed(_)));
        let again = sweep(&[good.clone()]);
        assert!(matches!(again[0], SweepOutcome::Skipped(_)));
        assert_eq!(first[0].log(), again[0].log());
        let direct = train(&good.config, &load_dataset(&data_path).unwrap(), None).unwrap();
        assert_eq!(Some(&direct.log), first[0].log());
    }
}
