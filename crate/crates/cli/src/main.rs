//! `castfruits`: synthetic data, cleaning, evaluation and latency benchmarks
//! from the command line. Commands exchange a JSON descriptor of produced
//! files, so they compose with pipes:
//!
//! ```text
//! castfruits synth --seed 7 | castfruits clean --iterations 3 | castfruits stats
//! ```

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use castfruits_core::fruits::PairSlice;
use castfruits_core::synth::FaceRange;
use castfruits_core::ToolConfig;
use clap::{Args, Parser, Subcommand};

use artifacts::Workdir;
use commands::Ctx;

#[derive(Debug, Parser)]
#[command(name = "castfruits", version, about = "Face dataset cleaning and time-constrained verification evaluation")]
struct Cli {
    /// Directory all relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// TOML configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the JSON output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "CAST_FRUITS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic raw dataset and test set.
    Synth(SynthArgs),
    /// Run the iterative cleaning loop.
    Clean(CleanArgs),
    /// Verification report over the test set.
    Eval(EvalArgs),
    /// Time stub pipeline stages and classify the latency track.
    Bench(BenchArgs),
    /// Stage statistics of a cleaning run.
    Stats(StatsArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    identities: Option<usize>,
    #[arg(long)]
    faces_min: Option<usize>,
    #[arg(long)]
    faces_max: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    outlier_rate: Option<f64>,
    #[arg(long)]
    overlap_rate: Option<f64>,
    #[arg(long)]
    duplicate_rate: Option<f64>,
    #[arg(long)]
    test_identities: Option<usize>,
    /// Output directory under the workdir.
    #[arg(long, default_value = "synth")]
    dir: String,
}

#[derive(Debug, Args)]
struct CleanArgs {
    /// Descriptor file; defaults to piped stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Raw manifest (JSON lines).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Embedding files, one per teacher generation; the last one is reused.
    #[arg(long = "embeddings")]
    embeddings: Vec<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    #[arg(long)]
    test_embeddings: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    #[arg(long, default_value = "clean")]
    dir: String,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    #[arg(long)]
    test_embeddings: Option<PathBuf>,
    /// perfect, student, embeddings or file:PATH; repeat to compare models.
    #[arg(long = "matcher")]
    matchers: Vec<String>,
    /// Pair slices, e.g. all, cross-age-10, race:african, gender:male.
    #[arg(long = "slice", value_parser = parse_slice)]
    slices: Vec<PairSlice>,
    #[arg(long = "fmr")]
    fmr_targets: Vec<f64>,
    #[arg(long)]
    impostor_sample: Option<usize>,
}

fn parse_slice(s: &str) -> std::result::Result<PairSlice, String> {
    s.parse()
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// NAME:MILLISECONDS stub stage; repeatable.
    #[arg(long = "stage", default_value = "matcher:50")]
    stages: Vec<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Skip pinning to one core.
    #[arg(long)]
    no_pin: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Cleaning report file, instead of a descriptor.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn set_if<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn configure(cli: &Cli) -> Result<ToolConfig> {
    let mut config = match &cli.config {
        Some(p) => ToolConfig::read(Workdir::new(cli.workdir.clone()).resolve(p))?,
        None => ToolConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    match &cli.command {
        Command::Synth(a) => {
            let s = &mut config.synth;
            set_if(&mut s.identity_count, a.identities);
            set_if(&mut s.dimension, a.dimension);
            set_if(&mut s.outlier_rate, a.outlier_rate);
            set_if(&mut s.overlap_rate, a.overlap_rate);
            set_if(&mut s.duplicate_rate, a.duplicate_rate);
            set_if(&mut s.test_identity_count, a.test_identities);
            s.faces_per_identity = FaceRange {
                min: a.faces_min.unwrap_or(s.faces_per_identity.min),
                max: a.faces_max.unwrap_or(s.faces_per_identity.max),
            };
        }
        Command::Clean(a) => {
            set_if(&mut config.cast.iterations, a.iterations);
            set_if(&mut config.cast.intra.eps, a.eps);
            set_if(&mut config.cast.intra.min_pts, a.min_pts);
        }
        Command::Eval(a) => {
            if !a.slices.is_empty() {
                config.eval.slices = a.slices.clone();
            }
            if !a.fmr_targets.is_empty() {
                config.eval.fmr_targets = a.fmr_targets.clone();
            }
            if a.impostor_sample.is_some() {
                config.eval.impostor_sample = a.impostor_sample;
            }
        }
        Command::Bench(a) => {
            set_if(&mut config.bench.repetitions, a.repetitions);
            set_if(&mut config.bench.warmup, a.warmup);
            if a.no_pin {
                config.bench.pin_single_core = false;
            }
        }
        Command::Stats(_) | Command::Config => {}
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let config = configure(&cli)?;
    let ctx = Ctx {
        workdir: Workdir::new(cli.workdir.clone()),
        config,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, &commands::SynthOptions { dir: a.dir }),
        Command::Clean(a) => commands::clean(
            &ctx,
            &commands::CleanOptions {
                input: a.input,
                manifest: a.manifest,
                embeddings: a.embeddings,
                test_manifest: a.test_manifest,
                test_embeddings: a.test_embeddings,
                dir: a.dir,
            },
        ),
        Command::Eval(a) => commands::eval(
            &ctx,
            &commands::EvalOptions {
                input: a.input,
                test_manifest: a.test_manifest,
                test_embeddings: a.test_embeddings,
                matchers: a.matchers,
            },
        ),
        Command::Bench(a) => commands::bench(&ctx, &commands::BenchOptions { stages: a.stages }),
        Command::Stats(a) => commands::stats(
            &ctx,
            &commands::StatsOptions {
                input: a.input,
                report: a.report,
            },
        ),
        Command::Config => {
            print!("{}", ctx.config.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("castfruits: error: {line}");
            ExitCode::FAILURE
        }
    }
}
