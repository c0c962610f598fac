//! `atlas-lab`: command-line front end for hybrid Atlas model analyses.
//!
//! Exit codes: 0 success, 1 domain or hypothesis failure, 2 input error,
//! 3 numerical failure.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Mode, Run};
use config::Loaded;
use manifest::{sha256_hex, RunManifest};

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    /// The run's report and manifest are still written.
    pub deferred: bool,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
            deferred: false,
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
            deferred: false,
        }
    }

    pub fn deferred(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            deferred: true,
        }
    }
}

impl From<atlas_lab::Error> for Failure {
    fn from(e: atlas_lab::Error) -> Self {
        use atlas_lab::Error::*;
        let code = match &e {
            Stability(_) | SkewSymmetry(_) | Capacity { .. } | Domain(_) | Unavailable(_) | Unsupported(_) => 1,
            Dimension(_) | NonFinite(_) | InvalidArgument(_) | Io(_) | Csv(_) | Json(_) => 2,
            Numerical(_) | AbortedPath { .. } => 3,
        };
        Self {
            code,
            message: e.to_string(),
            deferred: false,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "atlas-lab", version, about = "Hybrid Atlas equity-market models: occupation times, simulation, capital distribution curves and portfolios")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "ATLAS_LAB_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the standing assumptions of a model.
    Validate {
        config: PathBuf,
        /// Also write validation.json and manifest.json here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Stationary chamber weights and occupation times.
    Invariant {
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        iters: Option<u64>,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Euler–Maruyama simulation with occupation and growth-rate estimates.
    Simulate {
        config: PathBuf,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Store every `stride`-th step.
        #[arg(long)]
        stride: Option<usize>,
        /// Keep the thinned trajectory and write gaps.csv.
        #[arg(long)]
        store_paths: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Expected capital distribution curve and its convexity.
    Capcurve {
        config: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Wealth of market, equal-weight, target, universal and growth-optimal portfolios.
    Portfolio {
        config: PathBuf,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        mc_simplex: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stride: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Rerun from a manifest and compare output hashes.
    Replay {
        manifest: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Args)]
struct OutArg {
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn report(files: &[manifest::OutputFile], dir: &Path) {
    for f in files {
        eprintln!("wrote {}", dir.join(&f.file).display());
    }
}

fn run_and_report(run: Run, cfg: &Loaded, dir: &Path) -> Result<(), Failure> {
    let files = run.execute(cfg, dir)?;
    report(&files, dir);
    eprintln!("wrote {}", dir.join(manifest::MANIFEST).display());
    Ok(())
}

fn replay(path: &Path, dir: &Path) -> Result<(), Failure> {
    let m = RunManifest::read(path)?;
    if sha256_hex(m.config.as_bytes()) != m.config_sha256 {
        return Err(Failure::input("embedded config does not match its hash"));
    }
    let run: Run = serde_json::from_value(m.settings.clone())
        .map_err(|e| Failure::input(format!("{}: settings: {e}", path.display())))?;
    let cfg = Loaded::parse(m.config.clone(), &format!("{} (embedded config)", path.display()))?;
    let files = run.execute(&cfg, dir)?;
    let mut mismatches = Vec::new();
    for old in &m.outputs {
        match files.iter().find(|f| f.file == old.file) {
            Some(new) if new.sha256 == old.sha256 => println!("identical  {}", old.file),
            Some(_) => mismatches.push(format!("differs    {}", old.file)),
            None => mismatches.push(format!("missing    {}", old.file)),
        }
    }
    for f in files.iter().filter(|f| !m.outputs.iter().any(|o| o.file == f.file)) {
        mismatches.push(format!("unexpected {}", f.file));
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        for line in &mismatches {
            println!("{line}");
        }
        Err(Failure::domain(format!("{} output(s) not reproduced", mismatches.len())))
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Validate { config, out_dir } => {
            let cfg = Loaded::read(&config)?;
            match out_dir {
                Some(dir) => run_and_report(Run::Validate, &cfg, &dir),
                None => {
                    let report = atlas_lab::validate(&cfg.params)?;
                    println!("{report}");
                    print!("{}", atlas_lab::export::to_json_string(&report)?);
                    let failures = report.failures();
                    if failures.is_empty() {
                        Ok(())
                    } else {
                        Err(Failure::domain(failures.join("\n")))
                    }
                }
            }
        }
        Command::Invariant { config, mode, iters, burn_in, seed, out } => {
            let cfg = Loaded::read(&config)?;
            let run = commands::resolve_invariant(&cfg, mode, iters, burn_in, seed)?;
            run_and_report(run, &cfg, &out.out_dir)
        }
        Command::Simulate { config, horizon, dt, paths, seed, stride, store_paths, out } => {
            let cfg = Loaded::read(&config)?;
            let run = commands::resolve_simulate(&cfg, horizon, dt, paths, seed, stride, store_paths);
            run_and_report(run, &cfg, &out.out_dir)
        }
        Command::Capcurve { config, samples, seed, out } => {
            let cfg = Loaded::read(&config)?;
            run_and_report(commands::resolve_capcurve(&cfg, samples, seed), &cfg, &out.out_dir)
        }
        Command::Portfolio { config, horizon, dt, paths, mc_simplex, seed, stride, out } => {
            let cfg = Loaded::read(&config)?;
            let run = commands::resolve_portfolio(&cfg, horizon, dt, paths, mc_simplex, seed, stride);
            run_and_report(run, &cfg, &out.out_dir)
        }
        Command::Replay { manifest, out } => replay(&manifest, &out.out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
