//! `pc2` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pc2::experiment::{
    build_report, collect_runs, preset, reference_self_test, run_reference, run_sparse, run_train, run_uq,
    write_report, ExperimentConfig, RunOptions, RunOutput, PRESETS,
};
use pc2::surrogate::SurrogateModel;
use pc2::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NON_FINITE: u8 = 3;
const EXIT_ITERATION_CAP: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "pc2", version, about = "Physics-constrained polynomial chaos surrogates")]
#[command(after_help = "Exit codes: 0 ok, 1 runtime error, 2 config error, 3 non-finite value, \
4 iteration cap reached (outputs written), 5 I/O error or no runs found.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a surrogate on the full basis.
    Train(Common),
    /// Train a sparse surrogate by growing a LAR-ranked basis.
    Sparse(Common),
    /// Moments, Sobol indices and PDFs, from a model file or a fresh fit.
    Uq {
        #[command(flatten)]
        common: Common,
        /// Model file from a previous train or sparse run.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Solve or load the cached reference solution and export it.
    Reference {
        #[command(flatten)]
        common: Common,
        /// Override the reference grid resolution.
        #[arg(long)]
        resolution: Option<usize>,
        /// Run the solver validation suite against analytic solutions instead.
        #[arg(long)]
        self_test: bool,
    },
    /// Consolidate the runs under a directory into Markdown and CSV tables.
    Report {
        /// Run directory, or a directory whose subdirectories are runs.
        runs: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Print a shipped preset configuration, or list them.
    Preset { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML) or the name of a shipped preset.
    #[arg(long)]
    config: Option<String>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Reference solution cache.
    #[arg(long, env = "PC2_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match root(&e) {
            Error::Config(_) | Error::Schema(_) | Error::Expression(_) => EXIT_CONFIG,
            Error::NonFinite { .. } => EXIT_NON_FINITE,
            Error::Io(_) | Error::Checksum(_) => EXIT_IO,
            _ => EXIT_RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Sample { source, .. } => root(source),
        e => e,
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let spec = self.config.as_deref().ok_or_else(|| fail(EXIT_CONFIG, "--config is required"))?;
        let mut cfg = if Path::new(spec).exists() {
            ExperimentConfig::load(spec)?
        } else if PRESETS.iter().any(|(n, _)| *n == spec) {
            preset(spec)?
        } else {
            return Err(fail(EXIT_IO, format!("{spec}: no such file or preset")));
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| fail(EXIT_RUNTIME, e.to_string()))?;
        }
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions { out: self.out.clone(), cache_dir: self.cache_dir.clone() }
    }
}

fn finish(run: &RunOutput, out: &Path) -> Result<(), Failure> {
    let s = &run.summary;
    println!("{} {} -> {}", s.name, s.command, out.display());
    for (k, v) in &s.metrics {
        println!("  {k} = {v:.6e}");
    }
    println!("  wall time {:.1} s", s.wall_time_s);
    if !s.converged {
        return Err(fail(EXIT_ITERATION_CAP, "iteration cap reached; outputs were written"));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(c) => {
            let run = run_train(&c.load()?, &c.options())?;
            finish(&run, &c.out)
        }
        Command::Sparse(c) => {
            let run = run_sparse(&c.load()?, &c.options())?;
            finish(&run, &c.out)
        }
        Command::Uq { common, model } => {
            let cfg = common.load()?;
            let model = match model {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(Error::from)?;
                    Some(SurrogateModel::from_text(&text)?)
                }
                None => None,
            };
            let run = run_uq(&cfg, model, &common.options())?;
            finish(&run, &common.out)
        }
        Command::Reference { common, self_test: true, .. } => {
            if let Some(n) = common.threads {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
            }
            let mut ok = true;
            for check in reference_self_test()? {
                let status = if check.passed() { "PASS" } else { "FAIL" };
                println!("{status} {}: error {:.3e} (tolerance {:.1e})", check.name, check.error, check.tolerance);
                ok &= check.passed();
            }
            if ok {
                Ok(())
            } else {
                Err(fail(EXIT_RUNTIME, "reference self-test failed"))
            }
        }
        Command::Reference { common, resolution, .. } => {
            let cfg = common.load()?;
            let r = run_reference(&cfg, resolution, &common.options())?;
            println!("cache key {} ({})", r.key, if r.cache_hit { "hit" } else { "computed" });
            finish(&r.run, &common.out)
        }
        Command::Report { runs, out } => {
            let found = collect_runs(&runs).map_err(|e| match e {
                Error::InvalidInput(m) => fail(EXIT_IO, m),
                e => e.into(),
            })?;
            let report = build_report(&found);
            for f in write_report(&report, &out)? {
                println!("{}", f.display());
            }
            println!("{} runs, {} table rows", found.len(), report.rows);
            Ok(())
        }
        Command::Preset { name: None } => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
        Command::Preset { name: Some(name) } => {
            preset(&name)?;
            let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).expect("preset exists");
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
