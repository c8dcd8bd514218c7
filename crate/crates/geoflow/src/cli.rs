//! Command-line surface.
//!
//! Subcommands cover the whole workflow: `trajectory` and
//! `compare-schedules` tabulate paths as plot-ready CSV, `verify` runs the
//! numerical suites and reports JSON, `train`/`sample` drive the learning
//! loop from a JSON specification, `singularity` locates collapse times,
//! and `bench` trains and scores the four comparison arms on the mixture
//! task. Plot rendering stays outside the binary — see `docs/plotting.md`
//! for the expected file schemas.
//!
//! Exit codes: 0 on success, 1 when a verification fails or an output
//! cannot be written, 2 on usage errors (unknown flags or suites, missing
//! input files, invalid parameter combinations).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::geodesic::{
    dirichlet_path, gaussian_path, schedule_comparison, singularity_probe,
    singularity_probe_dirichlet, ComparisonScheme, EvoSchedule, ScheduleMode, DEFAULT_EPS,
};
use crate::net::{Checkpoint, Network, Predictor, CHECKPOINT_VERSION};
use crate::pipeline::{
    moving_average, sample_many, train, SampleDims, ToyMolecule, TrainConfig, TrainRecord,
    WithContext,
};
use crate::toybench::{
    freq_metrics, generate_dataset, mode_coverage, molecule_point, DatasetKind, DatasetSpec,
    MixtureSpec,
};
use crate::verify::run_suite;
use crate::{Error, Result};

const EXIT_OK: i32 = 0;
const EXIT_FAILURE: i32 = 1;
const EXIT_USAGE: i32 = 2;

/// Entry point used by the binary: parses `std::env::args_os`.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Runs the CLI against an explicit argument vector and returns the exit
/// code instead of terminating, so tests can drive it in-process.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(error) => {
            // --help and --version arrive here too; they are not failures.
            let code = if error.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = error.print();
            return code;
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(error) = install_thread_cap(threads) {
            eprintln!("geoflow: {error}");
            return EXIT_USAGE;
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("geoflow: {error}");
            match error {
                Error::Io(_) => EXIT_FAILURE,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn install_thread_cap(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::config("--threads must be at least 1".to_string()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|error| Error::config(format!("could not cap the worker pool: {error}")))
}

#[derive(Parser)]
#[command(
    name = "geoflow",
    version,
    about = "Exponential-geodesic probability paths: tabulation, verification, training, sampling"
)]
struct Cli {
    /// Cap the worker-thread pool (default: one thread per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate one schedule's path in natural and moment coordinates.
    Trajectory(TrajectoryArgs),
    /// Run the numerical verification suites and emit a JSON report.
    Verify(VerifyArgs),
    /// Train a model from a JSON specification file.
    Train(TrainArgs),
    /// Draw samples from a trained model file.
    Sample(SampleArgs),
    /// Tabulate several interpolation schemes over the same grid.
    CompareSchedules(CompareArgs),
    /// Report the scale-collapse times of static schedules.
    Singularity(SingularityArgs),
    /// Train and score the four comparison arms on the mixture task.
    Bench(BenchArgs),
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Trajectory(args) => cmd_trajectory(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Train(args) => cmd_train(args),
        Command::Sample(args) => cmd_sample(args),
        Command::CompareSchedules(args) => cmd_compare(args),
        Command::Singularity(args) => cmd_singularity(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

/// Schedule kind selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Evolving endpoint σ₁(t) = λ(1−t) + ε.
    Evo,
    /// Fixed endpoint σ₁, a₁.
    Static,
    /// Straight-line degenerate case σ₀ = σ₁ = ε.
    Sldm,
}

/// Which block family a trajectory tabulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Gaussian,
    Dirichlet,
}

fn schedule_from(mode: Mode, lambda: f64, eps: f64, sigma1: f64, alpha1: f64) -> Result<EvoSchedule> {
    match mode {
        Mode::Evo => EvoSchedule::evo(lambda, eps),
        Mode::Static => EvoSchedule::static_egf(sigma1, alpha1),
        Mode::Sldm => EvoSchedule::sldm(eps),
    }
}

/// Evenly spaced grid over [0, 1] whose last point is exactly 1.
fn uniform_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::config(format!(
            "the grid needs at least two points, got {points}"
        )));
    }
    let last = (points - 1) as f64;
    Ok((0..points).map(|i| i as f64 / last).collect())
}

/// Writes to the given path, or to stdout when no path was requested.
fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(path) => {
            std::fs::write(path, contents)?;
            Ok(())
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Seed precedence: explicit flag, then the `GEOFLOW_SEED` environment
/// variable, then the caller's own fallback.
fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("GEOFLOW_SEED") {
        Ok(text) => text.trim().parse::<u64>().map(Some).map_err(|_| {
            Error::config(format!(
                "GEOFLOW_SEED must be an unsigned integer, got '{text}'"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(Error::config("GEOFLOW_SEED is not valid unicode".to_string()))
        }
    }
}

// ---------------------------------------------------------------------------
// trajectory
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrajectoryArgs {
    /// Schedule kind.
    #[arg(long, value_enum, default_value_t = Mode::Evo)]
    mode: Mode,
    /// Endpoint rate λ (evo mode).
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// Terminal scale ε (evo and sldm modes).
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Endpoint scale σ₁ (static mode).
    #[arg(long, default_value_t = 1e-3)]
    sigma1: f64,
    /// Endpoint target-class concentration a₁ (static mode, dirichlet).
    #[arg(long, default_value_t = 100.0)]
    alpha1: f64,
    /// Block family to tabulate.
    #[arg(long, value_enum, default_value_t = Family::Gaussian)]
    family: Family,
    /// Data value x* (gaussian family).
    #[arg(long, default_value_t = 2.0)]
    target: f64,
    /// Number of type classes K (dirichlet family).
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Target class index (dirichlet family).
    #[arg(long, default_value_t = 0)]
    class: usize,
    /// Rows tabulated over t ∈ [0, 1].
    #[arg(long, default_value_t = 1001)]
    grid_points: usize,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_trajectory(args: TrajectoryArgs) -> Result<i32> {
    let schedule = schedule_from(args.mode, args.lambda, args.eps, args.sigma1, args.alpha1)?;
    let grid = uniform_grid(args.grid_points)?;
    let mut csv = String::new();
    match args.family {
        Family::Gaussian => {
            csv.push_str("t,eta1,eta2,mu,sigma\n");
            for &t in &grid {
                let point = gaussian_path(&schedule, &[args.target], t)?;
                let eta = point.natural();
                writeln!(
                    csv,
                    "{t},{},{},{},{}",
                    eta[0],
                    eta[1],
                    point.mean[0],
                    point.sigma()
                )
                .expect("writing to a string cannot fail");
            }
        }
        Family::Dirichlet => {
            if args.classes < 2 {
                return Err(Error::config(format!(
                    "a categorical path needs at least two classes, got {}",
                    args.classes
                )));
            }
            if args.class >= args.classes {
                return Err(Error::config(format!(
                    "class {} out of range for {} classes",
                    args.class, args.classes
                )));
            }
            csv.push('t');
            for k in 0..args.classes {
                write!(csv, ",alpha_{k}").expect("writing to a string cannot fail");
            }
            csv.push('\n');
            let mut one_hot = vec![0.0; args.classes];
            one_hot[args.class] = 1.0;
            for &t in &grid {
                let alpha = dirichlet_path(&schedule, &one_hot, t)?;
                write!(csv, "{t}").expect("writing to a string cannot fail");
                for a in alpha {
                    write!(csv, ",{a}").expect("writing to a string cannot fail");
                }
                csv.push('\n');
            }
        }
    }
    write_output(args.out.as_deref(), &csv)?;
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Args)]
struct VerifyArgs {
    /// Suite: kl, gradients, continuity, fisher, sldm, singularity, or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Report path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let reports = run_suite(&args.suite)?;
    let json = serde_json::to_string_pretty(&reports)?;
    write_output(args.out.as_deref(), &json)?;
    if args.out.is_none() {
        println!();
    }
    let mut all_pass = true;
    for report in &reports {
        let verdict = if report.passed { "pass" } else { "FAIL" };
        eprintln!("suite {}: {verdict} ({} checks)", report.suite, report.checks.len());
        all_pass &= report.passed;
    }
    Ok(if all_pass { EXIT_OK } else { EXIT_FAILURE })
}

// ---------------------------------------------------------------------------
// train / sample
// ---------------------------------------------------------------------------

/// On-disk training specification: hyperparameters plus the dataset recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    /// Keys mirror the training configuration; `schedule` and `steps` are
    /// required, everything else defaults.
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
}

/// On-disk artifact of a finished run: the hyperparameters, the dataset
/// recipe, and the network checkpoint, all in one JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
    pub checkpoint: Checkpoint,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        if !path.exists() {
            return Err(Error::config(format!(
                "model file {} does not exist",
                path.display()
            )));
        }
        let model: TrainedModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        model.checkpoint.validate()?;
        model.train.validate()?;
        Ok(model)
    }

    /// Rebuilds the network from the stored configuration and weights.
    pub fn network(&self) -> Result<Network> {
        Network::from_parts(self.checkpoint.config.clone(), self.checkpoint.params.clone())
    }
}

fn metrics_csv(records: &[TrainRecord]) -> String {
    let mut csv = String::from("step,l_x,l_v,l_b,total\n");
    for r in records {
        writeln!(csv, "{},{},{},{},{}", r.step, r.l_x, r.l_v, r.l_b, r.total)
            .expect("writing to a string cannot fail");
    }
    csv
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training specification (see the README for the schema).
    #[arg(long)]
    config: PathBuf,
    /// Where to write the trained model file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Optional per-step loss CSV (step,l_x,l_v,l_b,total).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Seed override (otherwise GEOFLOW_SEED, then the config file's seed).
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    if !args.config.exists() {
        return Err(Error::config(format!(
            "training specification {} does not exist",
            args.config.display()
        )));
    }
    let file: TrainFile = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    let mut config = file.train;
    if let Some(seed) = resolve_seed(args.seed)? {
        config.seed = seed;
    }
    let data = generate_dataset(&file.dataset)?;
    let outcome = train(&config, &data)?;

    let model = TrainedModel {
        checkpoint: Checkpoint {
            version: CHECKPOINT_VERSION,
            config: outcome.network.config().clone(),
            params: outcome.network.params().to_vec(),
            adam: outcome.adam,
            seed: config.seed,
            trained_steps: config.steps as u64,
        },
        train: config,
        dataset: file.dataset,
    };
    model.save(&args.checkpoint)?;
    if let Some(metrics) = &args.metrics {
        std::fs::write(metrics, metrics_csv(&outcome.records))?;
    }

    let totals: Vec<f64> = outcome.records.iter().map(|r| r.total).collect();
    let smoothed = moving_average(&totals, 200);
    eprintln!(
        "trained {} steps on {} states; smoothed total loss {:.6} → {:.6}",
        model.train.steps,
        data.len(),
        smoothed.first().copied().unwrap_or(f64::NAN),
        smoothed.last().copied().unwrap_or(f64::NAN),
    );
    Ok(EXIT_OK)
}

#[derive(Args)]
struct SampleArgs {
    /// Trained model file produced by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of samples to draw.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Refinement steps n per sample.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Sites per sample (default: inferred from the dataset recipe).
    #[arg(long)]
    sites: Option<usize>,
    /// Sampling seed (otherwise GEOFLOW_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Sampled batch as written to disk.
#[derive(Debug, Serialize, Deserialize)]
pub struct SampleOutput {
    pub schedule: ScheduleMode,
    pub steps: usize,
    pub seed: u64,
    pub molecules: Vec<ToyMolecule>,
}

/// Site counts drawn per sample: fixed for single-site tasks, alternating
/// over the template sizes for the molecule task.
fn site_counts(dataset: &DatasetSpec, count: usize) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = match dataset.kind {
        DatasetKind::TemplateMolecules { .. } => {
            let mut sizes: Vec<usize> = crate::toybench::standard_templates()
                .iter()
                .map(|t| t.n_sites)
                .collect();
            sizes.sort_unstable();
            sizes.dedup();
            sizes
        }
        _ => vec![1],
    };
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, count / sizes.len() + usize::from(i < count % sizes.len())))
        .collect()
}

fn sample_groups<P: Predictor + Sync + ?Sized>(
    schedule: &EvoSchedule,
    predictor: &P,
    base: SampleDims,
    groups: &[(usize, usize)],
    steps: usize,
    seed: u64,
) -> Result<Vec<ToyMolecule>> {
    let mut all = Vec::new();
    for (index, &(n_sites, count)) in groups.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let dims = SampleDims { n_sites, ..base };
        // Distinct substream families per site-count group.
        let group_seed = seed.wrapping_add((index as u64) << 32);
        all.extend(sample_many(schedule, predictor, &dims, steps, group_seed, count)?);
    }
    Ok(all)
}

fn cmd_sample(args: SampleArgs) -> Result<i32> {
    let model = TrainedModel::load(&args.checkpoint)?;
    let network = model.network()?;
    let seed = resolve_seed(args.seed)?.unwrap_or(0);
    let schedule = model.train.schedule;
    let groups = match args.sites {
        Some(n) => vec![(n, args.count)],
        None => site_counts(&model.dataset, args.count),
    };
    let config = network.config();
    let base = SampleDims {
        n_sites: 1,
        coord_dim: config.coord_dim,
        k_atom: config.k_atom,
        k_bond: config.k_bond,
    };

    let molecules = if model.train.context.is_empty() {
        sample_groups(&schedule, &network, base, &groups, args.steps, seed)?
    } else {
        let conditioned = WithContext {
            network: &network,
            context: &model.train.context,
        };
        sample_groups(&schedule, &conditioned, base, &groups, args.steps, seed)?
    };

    let output = SampleOutput {
        schedule: schedule.mode(),
        steps: args.steps,
        seed,
        molecules,
    };
    write_output(args.out.as_deref(), &serde_json::to_string(&output)?)?;
    if args.out.is_none() {
        println!();
    }
    eprintln!("sampled {} states in {} steps", output.molecules.len(), args.steps);
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// compare-schedules
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CompareArgs {
    /// Data value x* shared by every scheme.
    #[arg(long, default_value_t = 2.0)]
    target: f64,
    /// Rows per scheme over t ∈ [0, 1].
    #[arg(long, default_value_t = 201)]
    grid_points: usize,
    /// σ₁ of the static arm.
    #[arg(long, default_value_t = 1e-3)]
    sigma1: f64,
    /// λ of the evolving arm.
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// ε of the evolving arm.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// ε of the straight-line arm.
    #[arg(long, default_value_t = 0.05)]
    sldm_eps: f64,
    /// Terminal scale of the moment-space linear arm.
    #[arg(long, default_value_t = 0.01)]
    sigma_min: f64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_compare(args: CompareArgs) -> Result<i32> {
    let grid = uniform_grid(args.grid_points)?;
    let schemes = [
        ComparisonScheme::EvoEgf {
            lambda: args.lambda,
            eps: args.eps,
        },
        ComparisonScheme::StaticEgf { sigma1: args.sigma1 },
        ComparisonScheme::Sldm { eps: args.sldm_eps },
        ComparisonScheme::LinearFm {
            sigma_min: args.sigma_min,
        },
    ];
    let mut csv = String::from("scheme,t,eta1,eta2,mu,sigma\n");
    for scheme in schemes {
        for row in schedule_comparison(scheme, args.target, &grid)? {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                scheme.label(),
                row.t,
                row.eta1,
                row.eta2,
                row.mu,
                row.sigma
            )
            .expect("writing to a string cannot fail");
        }
    }
    write_output(args.out.as_deref(), &csv)?;
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// singularity
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SingularityArgs {
    /// σ₁ of the static coordinate schedule.
    #[arg(long, default_value_t = 1e-3)]
    sigma1: f64,
    /// Coordinate scale the probe looks for.
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Target-class concentration a₁ of the static categorical schedule.
    #[arg(long, default_value_t = 101.0)]
    alpha1: f64,
    /// Concentration level the categorical probe looks for.
    #[arg(long, default_value_t = 2.0)]
    level: f64,
    /// λ of the evolving schedule reported for contrast.
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Collapse-time report: when each static path crosses its level, and the
/// scale floor the evolving path keeps over the first half of the clock.
#[derive(Debug, Serialize, Deserialize)]
pub struct SingularityReport {
    pub sigma1: f64,
    pub threshold: f64,
    /// First time the static coordinate scale reaches the threshold.
    pub gaussian_crossing: Option<f64>,
    pub alpha1: f64,
    pub level: f64,
    /// First time the static target-class concentration reaches the level.
    pub dirichlet_crossing: Option<f64>,
    pub lambda: f64,
    /// Minimum coordinate scale of the evolving path over t ∈ [0, 1/2].
    pub evolving_min_sigma_first_half: f64,
}

fn cmd_singularity(args: SingularityArgs) -> Result<i32> {
    let evolving = EvoSchedule::evo(args.lambda, DEFAULT_EPS)?;
    let mut min_sigma = f64::INFINITY;
    for i in 0..=5000u64 {
        let t = i as f64 * 1e-4;
        min_sigma = min_sigma.min(gaussian_path(&evolving, &[0.0], t)?.sigma());
    }
    let report = SingularityReport {
        sigma1: args.sigma1,
        threshold: args.threshold,
        gaussian_crossing: singularity_probe(args.sigma1, args.threshold)?,
        alpha1: args.alpha1,
        level: args.level,
        dirichlet_crossing: singularity_probe_dirichlet(args.alpha1, args.level)?,
        lambda: args.lambda,
        evolving_min_sigma_first_half: min_sigma,
    };
    write_output(args.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    if args.out.is_none() {
        println!();
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Args)]
struct BenchArgs {
    /// Optimizer updates per arm.
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    /// Training batch size.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Mixture points in each training dataset.
    #[arg(long, default_value_t = 4096)]
    dataset_size: usize,
    /// Samples drawn per arm for scoring.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Refinement steps per sample.
    #[arg(long, default_value_t = 100)]
    sample_steps: usize,
    /// Independent runs averaged per arm.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Base seed (otherwise GEOFLOW_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden width of each arm's network.
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Learning rate shared by every arm.
    #[arg(long, default_value_t = 5e-4)]
    learning_rate: f64,
    /// Cosine-anneal the learning rate over the step budget.
    #[arg(long)]
    lr_decay: bool,
    /// Optional per-run CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One scored benchmark run.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub arm: String,
    pub seed: u64,
    /// Modes holding at least 1% of the samples.
    pub coverage: usize,
    /// Mean distance from each sample to its nearest mode.
    pub mean_distance: f64,
    /// Jensen–Shannon divergence (bits) of mode counts vs uniform.
    pub jsd: f64,
    /// Mean absolute per-mode frequency error vs uniform.
    pub mae: f64,
    /// Smoothed training loss at the final step.
    pub final_loss: f64,
}

fn nearest_mode(point: &[f64; 2], centers: &[[f64; 2]]) -> usize {
    centers
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (point[0] - a.1[0]).powi(2) + (point[1] - a.1[1]).powi(2);
            let db = (point[0] - b.1[0]).powi(2) + (point[1] - b.1[1]).powi(2);
            da.total_cmp(&db)
        })
        .map(|(k, _)| k)
        .expect("the mode list is non-empty")
}

/// Trains one arm on the given dataset and scores its samples against the
/// mixture's modes.
fn bench_run(
    label: &str,
    schedule: EvoSchedule,
    args: &BenchArgs,
    data: &[ToyMolecule],
    mixture: &MixtureSpec,
    run_seed: u64,
) -> Result<BenchRow> {
    let mut config = TrainConfig::new(schedule, args.steps);
    config.batch_size = args.batch_size;
    config.learning_rate = args.learning_rate;
    config.lr_decay = args.lr_decay;
    config.hidden = args.hidden;
    config.seed = run_seed;
    let outcome = train(&config, data)?;

    let dims = SampleDims::of_network(&outcome.network, 1);
    let molecules = sample_many(
        &schedule,
        &outcome.network,
        &dims,
        args.sample_steps,
        run_seed.wrapping_add(0x5EED),
        args.samples,
    )?;
    let points: Vec<[f64; 2]> = molecules
        .iter()
        .map(molecule_point)
        .collect::<Result<_>>()?;

    let centers = mixture.mode_centers();
    let spacing = 2.0 * mixture.radius * (std::f64::consts::PI / centers.len() as f64).sin();
    let coverage = mode_coverage(&points, &centers, spacing / 4.0)?;
    let assigned: Vec<usize> = points.iter().map(|p| nearest_mode(p, &centers)).collect();
    let reference: Vec<usize> = (0..args.samples).map(|i| i % centers.len()).collect();
    let frequencies = freq_metrics(&assigned, &reference, centers.len())?;

    let totals: Vec<f64> = outcome.records.iter().map(|r| r.total).collect();
    let final_loss = moving_average(&totals, 200).last().copied().unwrap_or(f64::NAN);

    Ok(BenchRow {
        arm: label.to_string(),
        seed: run_seed,
        coverage: coverage.covered,
        mean_distance: coverage.mean_nearest_distance,
        jsd: frequencies.jsd,
        mae: frequencies.mae,
        final_loss,
    })
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    if args.seeds == 0 {
        return Err(Error::config("--seeds must be at least 1".to_string()));
    }
    let base = resolve_seed(args.seed)?.unwrap_or(0);
    let arms: Vec<(String, EvoSchedule)> = vec![
        ("evo".to_string(), EvoSchedule::evo_default()),
        ("static_0.001".to_string(), EvoSchedule::static_egf(1e-3, 100.0)?),
        ("static_0.01".to_string(), EvoSchedule::static_egf(1e-2, 100.0)?),
        ("static_0.05".to_string(), EvoSchedule::static_egf(5e-2, 100.0)?),
    ];
    let mixture = MixtureSpec::default();

    let mut rows = Vec::new();
    for seed_index in 0..args.seeds {
        let run_seed = base.wrapping_add(seed_index as u64);
        let dataset = DatasetSpec {
            kind: DatasetKind::GaussMixture2d {
                modes: mixture.modes,
                radius: mixture.radius,
                sigma: mixture.sigma,
            },
            size: args.dataset_size,
            seed: run_seed.wrapping_add(1000),
        };
        let data = generate_dataset(&dataset)?;
        for (label, schedule) in &arms {
            let row = bench_run(label, *schedule, &args, &data, &mixture, run_seed)?;
            eprintln!(
                "{label} seed {run_seed}: coverage {}/{}, mean distance {:.4}, jsd {:.5}",
                row.coverage, mixture.modes, row.mean_distance, row.jsd
            );
            rows.push(row);
        }
    }

    let mut table = String::from(
        "arm           coverage  mean_dist   jsd_bits    mae        final_loss\n",
    );
    for (label, _) in &arms {
        let arm_rows: Vec<&BenchRow> = rows.iter().filter(|r| &r.arm == label).collect();
        let n = arm_rows.len() as f64;
        let mean = |f: &dyn Fn(&BenchRow) -> f64| arm_rows.iter().map(|r| f(r)).sum::<f64>() / n;
        writeln!(
            table,
            "{label:<13} {:>5.2}/{}  {:>9.4}  {:>9.5}  {:>9.5}  {:>9.4}",
            mean(&|r| r.coverage as f64),
            mixture.modes,
            mean(&|r| r.mean_distance),
            mean(&|r| r.jsd),
            mean(&|r| r.mae),
            mean(&|r| r.final_loss),
        )
        .expect("writing to a string cannot fail");
    }
    print!("{table}");

    if let Some(path) = &args.out {
        let mut csv =
            String::from("arm,seed,coverage,mean_distance,jsd,mae,final_loss\n");
        for row in &rows {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                row.arm, row.seed, row.coverage, row.mean_distance, row.jsd, row.mae, row.final_loss
            )
            .expect("writing to a string cannot fail");
        }
        std::fs::write(path, csv)?;
    }
    Ok(EXIT_OK)
}
