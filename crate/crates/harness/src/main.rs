use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use minipic::layout::{LayoutPolicy, ScatterBackend};
use minipic::sim::Deck;
use minipic_harness::matrix::{bench_matrix, SimRunner, DEFAULT_TOLERANCE};
use minipic_harness::pushrate::{bench_pushrate, PushRateConfig};
use minipic_harness::run::{cmd_run, load_deck};
use minipic_harness::scaling::{bench_scaling, ScalingConfig, ScalingMode};
use minipic_harness::{plot, BenchResult, Timing, DEFAULT_BENCH_DECK};

#[derive(Parser)]
#[command(name = "minipic", version, about = "Electromagnetic particle-in-cell simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a deck, writing diagnostics.csv into its out_dir.
    Run {
        deck: PathBuf,
        /// Override a deck value, e.g. `--set run.seed=4`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a benchmark suite and write <out-dir>/<suite>.csv.
    Bench {
        #[command(subcommand)]
        suite: Suite,
    },
    /// Write a gnuplot script for a benchmark CSV.
    Plot { csv: PathBuf, out: PathBuf },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "bench")]
    out_dir: PathBuf,
    /// Untimed repetitions before measuring.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Timed repetitions; the median is reported.
    #[arg(long, default_value_t = 3)]
    reps: usize,
}

impl Common {
    fn timing(&self) -> Timing {
        Timing { warmup: self.warmup, reps: self.reps }
    }
}

#[derive(Subcommand)]
enum Suite {
    /// Push rate against grid size at a fixed particle count.
    Pushrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "8,16,24,32")]
        grids: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        particles: usize,
        #[arg(long, default_value_t = 10)]
        steps: u64,
        /// 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, default_value = "FieldMajor")]
        layout: LayoutPolicy,
        #[arg(long, default_value = "Replicated")]
        backend: ScatterBackend,
        #[arg(long, default_value_t = 4096)]
        chunk_size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Weak or strong scaling over worker counts.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "strong")]
        mode: ScalingMode,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        workers: Vec<usize>,
        #[arg(long)]
        allow_oversubscribe: bool,
        #[arg(long)]
        deck: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Every layout, sort order and scatter backend on one deck.
    Matrix {
        #[command(flatten)]
        common: Common,
        /// Allowed relative spread of final total energy.
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long)]
        deck: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn bench_deck(path: Option<&Path>, overrides: &[String]) -> Result<Deck> {
    match path {
        Some(p) => load_deck(p, overrides),
        None => Ok(Deck::parse_with_overrides(DEFAULT_BENCH_DECK, overrides)?),
    }
}

fn write_result(result: &BenchResult, common: &Common) -> Result<PathBuf> {
    let path = common.out_dir.join(format!("{}.csv", result.suite));
    result.write_csv(&path)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn bench(suite: Suite) -> Result<()> {
    match suite {
        Suite::Pushrate { common, grids, particles, steps, workers, layout, backend, chunk_size, seed } => {
            let cfg = PushRateConfig {
                grids,
                particles,
                steps,
                workers,
                layout,
                backend,
                chunk_size,
                seed,
                timing: common.timing(),
            };
            let result = bench_pushrate(&cfg)?;
            write_result(&result, &common)?;
        }
        Suite::Scaling { common, mode, workers, allow_oversubscribe, deck, overrides } => {
            let deck = bench_deck(deck.as_deref(), &overrides)?;
            let cfg = ScalingConfig { mode, workers, timing: common.timing(), allow_oversubscribe };
            let outcome = bench_scaling(&deck, &cfg)?;
            write_result(&outcome.result, &common)?;
        }
        Suite::Matrix { common, tolerance, deck, overrides } => {
            let deck = bench_deck(deck.as_deref(), &overrides)?;
            let outcome = bench_matrix(&deck, &SimRunner { timing: common.timing() })?;
            write_result(&outcome.result, &common)?;
            println!("max relative energy deviation {:.3e}", outcome.max_deviation);
            outcome.check(tolerance)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { deck, overrides } => {
            let summary = cmd_run(&deck, &overrides)?;
            println!("wrote {} rows to {}", summary.rows, summary.diagnostics.display());
        }
        Command::Bench { suite } => bench(suite)?,
        Command::Plot { csv, out } => {
            let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let result = BenchResult::from_csv(&text).with_context(|| format!("parsing {}", csv.display()))?;
            plot::emit_plotscript(&result, &csv, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
