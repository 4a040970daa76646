use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swem::bench::{bench, Sweep};
use swem::format::StreamFile;
use swem::generator::{generate_stream, GeneratorConfig};
use swem::redundancy::{basis_similarity_stats, AnalyzerConfig, HistogramSpec, PairSampling};
use swem::runner::{run_baseline_storeall, run_session};
use swem::{Error, Result};
use swem_core::{KernelParams, SessionConfig, WeightMode};

#[derive(Parser)]
#[command(name = "swem", version, about = "Fixed-size SWEM memory: streams, runs, sweeps and redundancy reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream file.
    Gen(GenArgs),
    /// Run the SWEM memory over a stream and write a JSON report.
    Run(RunArgs),
    /// Run the store-all baseline over a stream and write a JSON report.
    Baseline(RunArgs),
    /// Sweep configurations; writes <out>.csv and <out>.json.
    Bench(BenchArgs),
    /// Raw and basis similarity statistics of a stream as JSON.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Weights {
    Fixed,
    Adaptive,
}

impl From<Weights> for WeightMode {
    fn from(w: Weights) -> Self {
        match w {
            Weights::Fixed => WeightMode::Fixed,
            Weights::Adaptive => WeightMode::Adaptive,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 50)]
    frames: usize,
    #[arg(long, default_value_t = 256)]
    pixels: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    /// Zero writes a keys-only stream.
    #[arg(long, default_value_t = 8)]
    value_channels: usize,
    #[arg(long, default_value_t = 1)]
    objects: usize,
    #[arg(long, default_value_t = 2)]
    fg_clusters: usize,
    #[arg(long, default_value_t = 2)]
    bg_clusters: usize,
    #[arg(long, default_value_t = 0.5)]
    fg_fraction: f64,
    #[arg(long, default_value_t = 8.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    center_cosine: f64,
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
    #[arg(long, default_value_t = 0.0)]
    hard_fraction: f64,
    #[arg(long, default_value_t = 0.6)]
    hard_blend: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long, default_value_t = swem_core::DEFAULT_K)]
    k: usize,
    #[arg(long = "r", default_value_t = swem_core::DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long = "l", default_value_t = swem_core::DEFAULT_TOP_L)]
    top_l: usize,
    #[arg(long, default_value_t = swem_core::kernel::DEFAULT_TAU)]
    tau: f64,
    #[arg(long, value_enum, default_value = "adaptive")]
    weights: Weights,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SessionArgs {
    fn config(&self) -> Result<SessionConfig> {
        let cfg = SessionConfig {
            k: self.k,
            iterations: self.iterations,
            top_l: self.top_l,
            kernel: KernelParams::with_tau(self.tau)?,
            weight_mode: self.weights.into(),
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Stream file to read.
    input: PathBuf,
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    rs: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "64")]
    ls: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    taus: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "adaptive")]
    weights: Vec<Weights>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Output path prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    input: PathBuf,
    #[arg(long, default_value_t = swem_core::DEFAULT_K)]
    k: usize,
    #[arg(long = "r", default_value_t = swem_core::DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = swem_core::kernel::DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Sample this many pixel pairs per frame instead of all of them.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => {
            let cfg = GeneratorConfig {
                frames: a.frames,
                pixels: a.pixels,
                channels: a.channels,
                value_channels: a.value_channels,
                objects: a.objects,
                fg_clusters: a.fg_clusters,
                bg_clusters: a.bg_clusters,
                fg_fraction: a.fg_fraction,
                radius: a.radius,
                noise: a.noise,
                center_cosine: a.center_cosine,
                drift: a.drift,
                hard_fraction: a.hard_fraction,
                hard_blend: a.hard_blend,
                seed: a.seed,
            };
            generate_stream(&cfg)?.save(&a.out)
        }
        Command::Run(a) => {
            let stream = StreamFile::load(&a.input)?;
            run_session(&stream, &a.session.config()?)?.write_json(&a.out)
        }
        Command::Baseline(a) => {
            let stream = StreamFile::load(&a.input)?;
            run_baseline_storeall(&stream, &a.session.config()?)?.write_json(&a.out)
        }
        Command::Bench(a) => {
            let stream = StreamFile::load(&a.input)?;
            let sweep = Sweep {
                ks: a.ks,
                iterations: a.rs,
                top_ls: a.ls,
                taus: a.taus,
                weight_modes: a.weights.into_iter().map(Into::into).collect(),
                seed: a.seed,
                repeats: a.repeats,
            };
            let report = bench(&stream, &sweep)?;
            report.write_csv(with_extension(&a.out, "csv"))?;
            report.write_json(with_extension(&a.out, "json"))
        }
        Command::Analyze(a) => {
            let stream = StreamFile::load(&a.input)?;
            let cfg = AnalyzerConfig {
                k: a.k,
                iterations: a.iterations,
                tau: a.tau,
                seed: a.seed,
                histogram: HistogramSpec {
                    bins: a.bins,
                    ..HistogramSpec::default()
                },
                sampling: match a.pairs {
                    Some(pairs) => PairSampling::Sampled { pairs, seed: a.seed },
                    None => PairSampling::Exhaustive,
                },
            };
            basis_similarity_stats(&stream, &cfg)?.write_json(&a.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
