use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mctd::harness::config::RunConfig;
use mctd::harness::summarize::{compare_dirs, summarize_dir, table_row};
use mctd::harness::run_experiment;
use mctd::Error;

/// Black-box optimization benchmark runner.
#[derive(Parser)]
#[command(name = "mctd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML/JSON config (defaults when omitted).
    Run {
        /// Config file path.
        config: Option<PathBuf>,
        /// Benchmark name: ackley, michalewicz, quantized-tabular.
        #[arg(long)]
        benchmark: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        /// Algorithm: mctd, random, nelder-mead, turbo.
        #[arg(long)]
        algo: Option<String>,
        /// Comma-separated seed list, e.g. "0,1,2,3,4".
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        max_evals: Option<usize>,
        /// Output directory (default: $MCTD_OUT_DIR or ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate one run directory into summary.json + curve.csv.
    Summarize { dir: PathBuf },
    /// Compare several run directories on the same benchmark.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Error> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed list entry {s:?}")))
        })
        .collect()
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            benchmark,
            dim,
            algo,
            seeds,
            max_evals,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            if let Some(b) = benchmark {
                cfg.benchmark = b;
            }
            if let Some(d) = dim {
                cfg.dim = d;
            }
            if let Some(a) = algo {
                cfg.algorithm = a;
            }
            if let Some(s) = seeds {
                cfg.seeds = parse_seeds(&s)?;
            }
            if let Some(m) = max_evals {
                cfg.max_evals = m;
            }
            if let Some(o) = out {
                cfg.out_dir = Some(o);
            }
            let dir = run_experiment(&cfg)?;
            println!(
                "wrote {} trace(s) to {}",
                cfg.seeds.len(),
                dir.display()
            );
        }
        Command::Summarize { dir } => {
            let table = summarize_dir(&dir)?;
            println!("{}", table_row(&table));
        }
        Command::Compare { dirs } => {
            print!("{}", compare_dirs(&dirs)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
