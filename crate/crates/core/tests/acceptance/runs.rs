//! Datasets and training runs shared by the acceptance criteria. Finished
//! runs are cached on disk and reused while their config and dataset match.

use std::path::{Path, PathBuf};

use chaosib::bottleneck::Mode;
use chaosib::pendulum::{generate_dataset, save_dataset, PendulumConfig};
use chaosib::trainer::{sweep, SweepJob, SweepOutcome, TrainRunConfig};

pub const N_TRAJECTORIES: usize = 200;
pub const DATA_SEED: u64 = 2024;
pub const SEEDS: [u64; 3] = [0, 1, 2];
pub const HORIZONS: [f64; 2] = [0.2, 1.0];
/// Arm lengths `(l1, l2)` for the allocation comparison.
pub const ARMS: [(f64, f64); 2] = [(1.5, 0.5), (0.5, 1.5)];
pub const SNAPSHOTS: [u64; 9] = [5000, 10000, 15000, 20000, 25000, 30000, 35000, 40000, 45000];

pub fn cache_dir() -> PathBuf {
    std::env::var_os("CHAOSIB_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-runs"))
}

pub fn dataset_path(l1: f64, l2: f64) -> PathBuf {
    cache_dir().join(format!("e3_l{l1}_{l2}.dpib"))
}

/// Generate (or regenerate identically) the three datasets.
pub fn ensure_datasets() -> Vec<PathBuf> {
    std::fs::create_dir_all(cache_dir()).unwrap();
    [(1.0, 1.0), ARMS[0], ARMS[1]]
        .into_iter()
        .map(|(l1, l2)| {
            let path = dataset_path(l1, l2);
            let c = PendulumConfig {
                l1,
                l2,
                ..PendulumConfig::default()
            };
            let data = generate_dataset(&c, N_TRAJECTORIES, DATA_SEED).unwrap();
            let tmp = path.with_extension("tmp");
            save_dataset(&data, &tmp).unwrap();
            let fresh = std::fs::read(&tmp).unwrap();
            if std::fs::read(&path).ok().as_deref() != Some(&fresh[..]) {
                std::fs::rename(&tmp, &path).unwrap();
            } else {
                std::fs::remove_file(&tmp).unwrap();
            }
            path
        })
        .collect()
}

/// The run whose snapshots feed the co-embedding comparison.
pub fn is_snapshot_run(mode: Mode, delta: f64, seed: u64) -> bool {
    mode == Mode::Ib && delta == 0.2 && seed == 0
}

pub fn horizon_jobs() -> Vec<SweepJob> {
    let data = dataset_path(1.0, 1.0);
    let mut jobs = vec![];
    for delta in HORIZONS {
        for seed in SEEDS {
            let config = TrainRunConfig {
                delta,
                seed,
                snapshot_steps: if is_snapshot_run(Mode::Ib, delta, seed) {
                    SNAPSHOTS.to_vec()
                } else {
                    vec![]
                },
                ..TrainRunConfig::with_mode(Mode::Ib)
            };
            jobs.push(SweepJob::under(cache_dir().join("horizon"), &data, config));
        }
    }
    jobs
}

pub fn allocation_jobs() -> Vec<SweepJob> {
    let mut jobs = vec![];
    for (l1, l2) in ARMS {
        for seed in SEEDS {
            let config = TrainRunConfig {
                delta: 0.2,
                seed,
                ..TrainRunConfig::with_mode(Mode::Dib)
            };
            jobs.push(SweepJob::under(
                cache_dir().join(format!("allocation_l{l1}_{l2}")),
                dataset_path(l1, l2),
                config,
            ));
        }
    }
    jobs
}

pub fn run_all(jobs: &[SweepJob]) -> Vec<SweepOutcome> {
    jobs.iter()
        .map(|job| {
            let started = std::time::Instant::now();
            let out = sweep(std::slice::from_ref(job)).pop().unwrap();
            let tag = match &out {
                SweepOutcome::Completed(_) => "trained".to_string(),
                SweepOutcome::Skipped(_) => "cached".to_string(),
                SweepOutcome::Failed(e) => format!("FAILED: {e}"),
            };
            eprintln!("  {} [{tag}, {:.0} s]", job.out_dir.display(), started.elapsed().as_secs_f64());
            out
        })
        .collect()
}
