use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use chaosib::analysis::{
    allocation_plot, allocation_profile, assemble_info_plane, co_embedded_states, coembed_plot, info_plane_plot,
    load_run, load_runs, sample_states, Plot,
};
use chaosib::bottleneck::{BetaSchedule, Mode, ModelConfig};
use chaosib::checkpoint::Checkpoint;
use chaosib::pendulum::{generate_dataset, load_dataset, save_dataset, PendulumConfig, State};
use chaosib::rng::{child_rng, rng_from_seed};
use chaosib::trainer::{sweep, RunLog, SweepJob, SweepOutcome, TrainRunConfig};

mod layered;

#[derive(Parser)]
#[command(name = "chaosib", version, about = "Information bottleneck analysis of a chaotic double pendulum")]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for outputs; relative output paths resolve against it.
    #[arg(long, global = true, env = "CHAOSIB_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for simulation and sweeps [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print a JSON summary instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of fixed-energy trajectories.
    Simulate(SimulateArgs),
    /// Run one annealing run.
    Train(TrainArgs),
    /// Run a grid of annealing runs over horizons and splits; finished runs are skipped.
    Sweep(SweepArgs),
    /// Write analysis tables (CSV).
    #[command(subcommand)]
    Analyze(Analysis),
    /// Write figures (SVG, with a CSV of the plotted data).
    #[command(subcommand)]
    Plot(Analysis),
}

#[derive(Subcommand)]
enum Analysis {
    /// Information-plane curves of one run or a directory of runs.
    Infoplane(InfoplaneArgs),
    /// Per-variable share of the KL budget along a DIB run.
    Allocation(AllocationArgs),
    /// States whose posteriors overlap a reference state's posterior.
    Coembed(CoembedArgs),
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct SimulateArgs {
    /// JSON file of flag values; flags on the command line take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Output dataset file.
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    trajectories: usize,
    /// Total energy above the hanging rest state, in units of g.
    #[arg(long, default_value_t = 3.0)]
    energy_over_g: f64,
    #[arg(long, default_value_t = 1.0)]
    l1: f64,
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    #[arg(long, default_value_t = 1.0)]
    m1: f64,
    #[arg(long, default_value_t = 1.0)]
    m2: f64,
    #[arg(long, default_value_t = 9.81)]
    g: f64,
    /// Integration step (s).
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Interval between saved states (s).
    #[arg(long, default_value_t = 0.02)]
    dt_save: f64,
    /// Simulated time per trajectory, burn-in included (s).
    #[arg(long, default_value_t = 100.0)]
    t_total: f64,
    /// Leading time discarded from each trajectory (s).
    #[arg(long, default_value_t = 50.0)]
    t_burn_in: f64,
    /// Relative energy drift above which a trajectory is discarded.
    #[arg(long, default_value_t = 1e-3)]
    energy_tolerance: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CliMode {
    Ib,
    Dib,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Mode {
        match m {
            CliMode::Ib => Mode::Ib,
            CliMode::Dib => Mode::Dib,
        }
    }
}

/// Optimization and architecture settings shared by `train` and `sweep`.
#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct Hyper {
    /// Dataset file.
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    /// Whole-state bottleneck or one bottleneck per state variable.
    #[arg(long, value_enum, default_value = "ib")]
    mode: CliMode,
    /// Number of trajectory-level folds.
    #[arg(long, default_value_t = 5)]
    splits: usize,
    /// Annealing steps.
    #[arg(long, default_value_t = 50_000)]
    steps: u64,
    /// Bottleneck weight at the start of annealing.
    #[arg(long, default_value_t = 5e-4)]
    beta_init: f64,
    /// Bottleneck weight at the end of annealing.
    #[arg(long, default_value_t = 2.0)]
    beta_final: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    learning_rate: f64,
    /// Steps between validation log points.
    #[arg(long, default_value_t = 250)]
    eval_every: u64,
    /// Validation batches per log point.
    #[arg(long, default_value_t = 8)]
    eval_batches: usize,
    /// Extra checkpoints, e.g. 10000,40000.
    #[arg(long, value_delimiter = ',')]
    snapshot_steps: Vec<u64>,
    /// Dimension of each bottleneck embedding.
    #[arg(long, default_value_t = 32)]
    bottleneck_dim: usize,
    /// Dimension of the shared embedding space.
    #[arg(long, default_value_t = 64)]
    shared_dim: usize,
    /// Hidden widths of each bottleneck encoder.
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    encoder_widths: Vec<usize>,
    /// Hidden widths of the map into the shared embedding space.
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    shared_widths: Vec<usize>,
    /// Hidden widths of the future-state encoder.
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    future_widths: Vec<usize>,
    /// Positional encoding frequencies.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
    pe_frequencies: Vec<f64>,
    /// InfoNCE temperature.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Negative-side slope of the leaky ReLU.
    #[arg(long, default_value_t = 0.2)]
    leaky_slope: f64,
}

impl Hyper {
    fn run_config(&self, delta: f64, split_index: usize, seed: u64) -> TrainRunConfig {
        let mode = Mode::from(self.mode);
        TrainRunConfig {
            mode,
            delta,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            schedule: BetaSchedule {
                beta_initial: self.beta_init,
                beta_final: self.beta_final,
                n_steps: self.steps,
            },
            model: ModelConfig {
                mode,
                bottleneck_dim: self.bottleneck_dim,
                shared_dim: self.shared_dim,
                encoder_widths: self.encoder_widths.clone(),
                shared_widths: self.shared_widths.clone(),
                future_widths: self.future_widths.clone(),
                pe_frequencies: self.pe_frequencies.clone(),
                nce_temperature: self.temperature,
                leaky_slope: self.leaky_slope,
            },
            split_index,
            n_splits: self.splits,
            seed,
            eval_every: self.eval_every,
            eval_batches: self.eval_batches,
            snapshot_steps: self.snapshot_steps.clone(),
        }
    }

    fn data(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| usage(ErrorKind::MissingRequiredArgument, "--data is required"))
    }
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct TrainArgs {
    /// JSON file of flag values; flags on the command line take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Prediction horizon (s).
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Held-out fold.
    #[arg(long, default_value_t = 0)]
    split: usize,
    /// Run directory [default: <out-dir>/<run name>].
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    hyper: Hyper,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct SweepArgs {
    /// JSON file of flag values; flags on the command line take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Prediction horizons (s).
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5,1.0,2.0")]
    deltas: Vec<f64>,
    /// Held-out folds to run [default: all].
    #[arg(long, value_delimiter = ',')]
    split_indices: Vec<usize>,
    /// Run seeds [default: the global seed].
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    hyper: Hyper,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct InfoplaneArgs {
    /// JSON file of flag values; flags on the command line take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// A run directory, or a directory of run directories.
    #[arg(long, required_unless_present = "config")]
    runs: Option<PathBuf>,
    /// Moving-average window in log points.
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Output file stem.
    #[arg(long, default_value = "infoplane")]
    name: String,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct AllocationArgs {
    /// JSON file of flag values; flags on the command line take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// A run directory or a runlog.csv file from a DIB run.
    #[arg(long, required_unless_present = "config")]
    run: Option<PathBuf>,
    #[arg(long, default_value = "allocation")]
    name: String,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct CoembedArgs {
    /// JSON file of flag values; flags on the command line take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Checkpoint manifest (checkpoint.json or snapshot-N.json).
    #[arg(long, required_unless_present = "config")]
    checkpoint: Option<PathBuf>,
    /// Dataset the comparison states are drawn from.
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    /// Reference state "theta1,omega1,theta2,omega2" [default: a random dataset state].
    #[arg(long)]
    state: Option<String>,
    /// Minimum Bhattacharyya coefficient for membership.
    #[arg(long, default_value_t = 0.5)]
    bc_threshold: f64,
    /// Number of dataset states compared against the reference.
    #[arg(long, default_value_t = 2000)]
    sample: usize,
    #[arg(long, default_value = "coembed")]
    name: String,
}

/// A usage problem found after parsing; reported like clap's own errors.
#[derive(Debug)]
struct Usage(clap::Error);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for Usage {}

fn usage(kind: ErrorKind, msg: &str) -> anyhow::Error {
    anyhow!(Usage(Cli::command().error(kind, msg)))
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    json: bool,
}

impl Ctx {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn report(&self, summary: Value, text: impl FnOnce() -> String) {
        if self.json {
            println!("{summary}");
        } else {
            println!("{}", text());
        }
    }
}

/// Apply `--config` to a parsed argument struct. A `seed` key in the file
/// sets the global seed unless `--seed` was given.
fn layered<T: Serialize + serde::de::DeserializeOwned>(
    args: T,
    config: Option<&Path>,
    matches: &ArgMatches,
    root: &ArgMatches,
    ctx: &mut Ctx,
) -> Result<T> {
    let Some(path) = config else { return Ok(args) };
    let mut file: Map<String, Value> = layered::read_config(path)?;
    if let Some(seed) = file.remove("seed") {
        if root.value_source("seed") != Some(clap::parser::ValueSource::CommandLine) {
            ctx.seed = serde_json::from_value(seed).context("seed in config file")?;
        }
    }
    layered::merge(args, matches, &file)
}

fn leaf_matches(root: &ArgMatches) -> &ArgMatches {
    let mut m = root;
    while let Some((_, sub)) = m.subcommand() {
        m = sub;
    }
    m
}

fn run(root: &ArgMatches) -> Result<()> {
    let cli = Cli::from_arg_matches(root)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let mut ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
        json: cli.json,
    };
    let m = leaf_matches(root);
    match cli.command {
        Command::Simulate(a) => {
            let config = a.config.clone();
            let a = layered(a, config.as_deref(), m, root, &mut ctx)?;
            simulate(&a, &ctx)
        }
        Command::Train(a) => {
            let config = a.config.clone();
            let a = layered(a, config.as_deref(), m, root, &mut ctx)?;
            train(&a, &ctx)
        }
        Command::Sweep(a) => {
            let config = a.config.clone();
            let a = layered(a, config.as_deref(), m, root, &mut ctx)?;
            run_sweep(&a, &ctx)
        }
        Command::Analyze(an) | Command::Plot(an) => {
            let plot = matches!(root.subcommand_name(), Some("plot"));
            match an {
                Analysis::Infoplane(a) => {
                    let config = a.config.clone();
                    infoplane(&layered(a, config.as_deref(), m, root, &mut ctx)?, plot, &ctx)
                }
                Analysis::Allocation(a) => {
                    let config = a.config.clone();
                    allocation(&layered(a, config.as_deref(), m, root, &mut ctx)?, plot, &ctx)
                }
                Analysis::Coembed(a) => {
                    let config = a.config.clone();
                    coembed(&layered(a, config.as_deref(), m, root, &mut ctx)?, plot, &ctx)
                }
            }
        }
    }
}

fn simulate(a: &SimulateArgs, ctx: &Ctx) -> Result<()> {
    let out = a
        .out
        .as_deref()
        .ok_or_else(|| usage(ErrorKind::MissingRequiredArgument, "--out is required"))?;
    let out = ctx.resolve(out);
    let config = PendulumConfig {
        m1: a.m1,
        m2: a.m2,
        l1: a.l1,
        l2: a.l2,
        g: a.g,
        energy_over_g: a.energy_over_g,
        dt_integrate: a.dt,
        dt_save: a.dt_save,
        t_total: a.t_total,
        t_burn_in: a.t_burn_in,
        energy_tolerance: a.energy_tolerance,
    };
    let data = generate_dataset(&config, a.trajectories, ctx.seed)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    save_dataset(&data, &out)?;
    ctx.report(
        json!({
            "out": out,
            "accepted": data.len(),
            "rejected": data.rejected,
            "states_per_trajectory": data.n_steps(),
            "max_relative_drift": data.max_relative_drift,
            "energy_joules": config.prescribed_energy(),
        }),
        || {
            format!(
                "wrote {} trajectories x {} states to {}\nrejected {} initial conditions; max relative energy drift {:.3e} at E = {} J",
                data.len(),
                data.n_steps(),
                out.display(),
                data.rejected,
                data.max_relative_drift,
                config.prescribed_energy()
            )
        },
    );
    Ok(())
}

fn outcome_json(job: &SweepJob, o: &SweepOutcome) -> Value {
    let (status, error) = match o {
        SweepOutcome::Completed(_) => ("completed", None),
        SweepOutcome::Skipped(_) => ("skipped", None),
        SweepOutcome::Failed(e) => ("failed", Some(e.clone())),
    };
    let last = o.log().and_then(|l| l.points.last());
    json!({
        "run": job.out_dir,
        "status": status,
        "error": error,
        "points": o.log().map(|l| l.points.len()),
        "final_kl_total": last.map(|p| p.kl_total),
        "final_mi_estimate": last.map(|p| p.mi_estimate),
    })
}

fn report_jobs(jobs: &[SweepJob], outcomes: &[SweepOutcome], ctx: &Ctx) -> Result<()> {
    let rows: Vec<Value> = jobs.iter().zip(outcomes).map(|(j, o)| outcome_json(j, o)).collect();
    ctx.report(json!({ "runs": rows }), || {
        jobs.iter()
            .zip(outcomes)
            .map(|(j, o)| match o {
                SweepOutcome::Completed(l) => format!("completed {} ({} log points)", j.out_dir.display(), l.points.len()),
                SweepOutcome::Skipped(_) => format!("skipped {} (already complete)", j.out_dir.display()),
                SweepOutcome::Failed(e) => format!("failed {}: {e}", j.out_dir.display()),
            })
            .collect::<Vec<_>>()
            .join("\n")
    });
    let failed = outcomes.iter().filter(|o| matches!(o, SweepOutcome::Failed(_))).count();
    if failed > 0 {
        bail!("{failed} of {} runs failed", outcomes.len());
    }
    Ok(())
}

fn train(a: &TrainArgs, ctx: &Ctx) -> Result<()> {
    let data = a.hyper.data()?.to_path_buf();
    let config = a.hyper.run_config(a.delta, a.split, ctx.seed);
    config.validate()?;
    let dir = match &a.run_dir {
        Some(d) => ctx.resolve(d),
        None => ctx.out_dir.join(config.run_name()),
    };
    let job = SweepJob {
        config,
        dataset: data,
        out_dir: dir,
    };
    let outcomes = sweep(std::slice::from_ref(&job));
    report_jobs(&[job], &outcomes, ctx)
}

fn run_sweep(a: &SweepArgs, ctx: &Ctx) -> Result<()> {
    let data = a.hyper.data()?;
    let splits: Vec<usize> = if a.split_indices.is_empty() {
        (0..a.hyper.splits).collect()
    } else {
        a.split_indices.clone()
    };
    let seeds = if a.seeds.is_empty() { vec![ctx.seed] } else { a.seeds.clone() };
    let mut jobs = vec![];
    for &delta in &a.deltas {
        for &split in &splits {
            for &seed in &seeds {
                let config = a.hyper.run_config(delta, split, seed);
                config.validate()?;
                jobs.push(SweepJob::under(&ctx.out_dir, data, config));
            }
        }
    }
    let outcomes = sweep(&jobs);
    report_jobs(&jobs, &outcomes, ctx)
}

fn write_outputs(plot: &Plot, name: &str, svg: bool, ctx: &Ctx) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&ctx.out_dir).with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let csv = ctx.out_dir.join(format!("{name}.csv"));
    plot.write_csv(&csv)?;
    let mut written = vec![csv];
    if svg {
        let path = ctx.out_dir.join(format!("{name}.svg"));
        plot.write_svg(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn written_text(files: &[PathBuf]) -> String {
    files.iter().map(|f| format!("wrote {}", f.display())).collect::<Vec<_>>().join("\n")
}

fn infoplane(a: &InfoplaneArgs, svg: bool, ctx: &Ctx) -> Result<()> {
    let dir = a.runs.as_deref().ok_or_else(|| usage(ErrorKind::MissingRequiredArgument, "--runs is required"))?;
    let runs = load_runs(dir)?;
    let groups = assemble_info_plane(&runs, a.window)?;
    let plot = info_plane_plot(&groups);
    let files = write_outputs(&plot, &a.name, svg, ctx)?;
    let curves: Vec<Value> = groups
        .iter()
        .flat_map(|g| &g.curves)
        .map(|c| json!({ "label": c.label, "delta": c.delta, "points": c.points.len() }))
        .collect();
    ctx.report(json!({ "files": files, "curves": curves }), || {
        format!("{} curves in {} horizon groups\n{}", curves.len(), groups.len(), written_text(&files))
    });
    Ok(())
}

fn allocation(a: &AllocationArgs, svg: bool, ctx: &Ctx) -> Result<()> {
    let path = a.run.as_deref().ok_or_else(|| usage(ErrorKind::MissingRequiredArgument, "--run is required"))?;
    let log = if path.is_dir() {
        load_run(path)?.log
    } else {
        RunLog::read_csv(path)?
    };
    let profile = allocation_profile(&log)?;
    let plot = allocation_plot(&profile);
    let files = write_outputs(&plot, &a.name, svg, ctx)?;
    ctx.report(json!({ "files": files, "points": profile.points.len() }), || {
        format!("{} allocation points\n{}", profile.points.len(), written_text(&files))
    });
    Ok(())
}

fn parse_state(s: &str) -> Result<State> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(ErrorKind::InvalidValue, &format!("--state expects four numbers, got {s:?}")))?;
    match v[..] {
        [t1, w1, t2, w2] => {
            let s = State::new(t1, w1, t2, w2);
            let in_range = |a: f64| (-PI..PI).contains(&a);
            Ok(if in_range(t1) && in_range(t2) { s } else { s.wrapped() })
        }
        _ => Err(usage(ErrorKind::InvalidValue, &format!("--state expects four numbers, got {s:?}"))),
    }
}

fn coembed(a: &CoembedArgs, svg: bool, ctx: &Ctx) -> Result<()> {
    let missing = |f: &str| usage(ErrorKind::MissingRequiredArgument, &format!("--{f} is required"));
    let ck = Checkpoint::load(a.checkpoint.as_deref().ok_or_else(|| missing("checkpoint"))?)?;
    let data = load_dataset(a.data.as_deref().ok_or_else(|| missing("data"))?)?;
    let sample = sample_states(&data, a.sample, &mut child_rng(ctx.seed, 0))?;
    let reference = match &a.state {
        Some(s) => parse_state(s)?,
        None => sample_states(&data, 1, &mut rng_from_seed(ctx.seed))?[0],
    };
    let set = co_embedded_states(&ck.model, &data.config, &sample, reference, a.bc_threshold)?;
    let background: Vec<(f64, f64)> = sample.iter().map(|s| data.config.second_mass_position(s)).collect();
    let reach = 1.05 * (data.config.l1 + data.config.l2);
    let plot = coembed_plot(&set, &background, reach);
    let files = write_outputs(&plot, &a.name, svg, ctx)?;
    ctx.report(
        json!({
            "files": files,
            "reference": reference.to_array(),
            "bc_threshold": a.bc_threshold,
            "members": set.len() - 1,
            "sample": sample.len(),
            "checkpoint_step": ck.step,
            "checkpoint_beta": ck.beta,
        }),
        || {
            format!(
                "{} of {} sampled states have BC >= {} with the reference (checkpoint step {}, beta {:.4})\n{}",
                set.len() - 1,
                sample.len(),
                a.bc_threshold,
                ck.step,
                ck.beta,
                written_text(&files)
            )
        },
    );
    Ok(())
}

fn main() -> ExitCode {
    let cmd = Cli::command();
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<Usage>() {
                u.0.exit();
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
