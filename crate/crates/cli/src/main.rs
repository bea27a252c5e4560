use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blockcs::datagen::{gen_matrix, write_bcsm, MatrixKind};
use blockcs_cli::config::{emit_defaults, parse_config, ExperimentSpec};
use blockcs_cli::harness::{run_detection, run_oracle_suite, run_table, write_oracle};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blockcs", version, about = "Block-sparse recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. BLOCKCS_THREADS takes precedence when set.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Recovery table over the configured grid.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Fill the time_s column (the table is then no longer reproducible).
        #[arg(long)]
        record_time: bool,
    },
    /// FAP-calibrated detection protocol and figure panel data.
    Detect {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Exhaustive-search comparison on small instances.
    Oracle {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Export a sensing matrix in the BCSM binary format.
    GenMatrix {
        #[arg(long)]
        kind: MatrixKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 839)]
        m: usize,
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        normalize: bool,
    },
    /// Print a config with every field at its default.
    Defaults,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("BLOCKCS_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            let k = v.trim().parse().with_context(|| format!("BLOCKCS_THREADS = {v:?} is not a count"))?;
            Ok(Some(k))
        }
        _ => Ok(flag),
    }
}

fn prepare(args: &RunArgs) -> Result<(ExperimentSpec, PathBuf)> {
    if let Some(k) = thread_count(args.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut spec = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| spec.output_dir.clone());
    Ok((spec, out))
}

fn report(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { args, record_time } => {
            let (spec, out) = prepare(&args)?;
            let (_, files) = run_table(&spec, &out, record_time)?;
            report(&files.table);
            files.raw.iter().for_each(|p| report(p));
            report(&files.timings);
        }
        Command::Detect { args } => {
            let (spec, out) = prepare(&args)?;
            let (rows, files) = run_detection(&spec, &out)?;
            for r in &rows {
                println!(
                    "sigma {} {}: FAP {} FIR {} threshold {}",
                    r.sigma, r.solver, r.stats.fap, r.stats.fir, r.stats.threshold
                );
            }
            report(&files.detection);
            files.panels.iter().for_each(|p| report(p));
        }
        Command::Oracle { args } => {
            let (spec, out) = prepare(&args)?;
            let runs = run_oracle_suite(&spec)?;
            let matched = runs.iter().filter(|r| r.row.matched).count();
            let stationary = runs.iter().filter(|r| r.row.stationary).count();
            println!("bnhtp reached the global minimum on {matched}/{} instances", runs.len());
            println!("global minimizers passing the stationarity test: {stationary}/{}", runs.len());
            report(&write_oracle(&runs, &out)?);
        }
        Command::GenMatrix {
            kind,
            out,
            m,
            n,
            seed,
            normalize,
        } => {
            let a = gen_matrix(kind, m, n, seed, normalize)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            write_bcsm(&a, &mut w).with_context(|| format!("writing {}", out.display()))?;
            w.flush().with_context(|| format!("writing {}", out.display()))?;
            report(&out);
        }
        Command::Defaults => println!("{}", emit_defaults()),
    }
    Ok(())
}
