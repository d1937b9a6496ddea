use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bdris_core::experiments::{figure_preset, run_sweep, validation_reports, write_csv, SweepConfig};
use bdris_core::{DesignConfig, Error, Result, TrainingDesign};

/// Monte-Carlo channel estimation experiments for group-connected BD-RIS.
#[derive(Parser)]
#[command(name = "bdris", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep config and write CSV.
    Sweep {
        config: PathBuf,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV path, `-` for stdout. Overrides `output`.
        #[arg(long)]
        output: Option<String>,
        /// Worker threads. Overrides `threads` and BDRIS_THREADS.
        #[arg(long)]
        threads: Option<usize>,
        /// Append a wall_ms column.
        #[arg(long)]
        timing: bool,
    },
    /// Check identifiability of every point in a sweep config.
    Validate { config: PathBuf },
    /// Build a training design from a design file and summarize it.
    Design {
        config: PathBuf,
        /// Write the normalized design file here.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run a preset figure sweep.
    Figure {
        name: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
        /// Print the preset as a sweep config instead of running it.
        #[arg(long)]
        print_config: bool,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn emit(cfg: &SweepConfig) -> Result<()> {
    let rows = run_sweep(cfg)?;
    match cfg.output.as_deref() {
        None | Some("-") => write_csv(&rows, io::stdout().lock(), cfg.timing),
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Error::Config(format!("cannot create {path}: {e}")))?;
            write_csv(&rows, io::BufWriter::new(file), cfg.timing)
        }
    }
}

fn design(path: &Path, export: Option<&Path>) -> Result<()> {
    let config = DesignConfig::from_toml_str(&read(path)?)?;
    let design = TrainingDesign::build(config.clone())?;
    let mut worst = 0.0f64;
    for k in 0..design.k() {
        let s = design.assemble_scattering_matrix(k)?;
        let gram = s.adjoint() * &s;
        let id = bdris_core::ComplexMatrix::identity(gram.nrows(), gram.ncols());
        worst = worst.max((gram - id).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let text = config.to_toml_string();
    let mut out = io::stdout().lock();
    write!(out, "{text}")?;
    writeln!(out, "# n = {}, k = {}", config.n(), config.k())?;
    writeln!(out, "# column-orthogonal S3: {}", design.is_column_orthogonal())?;
    writeln!(out, "# max slice unitarity error: {worst:.3e}")?;
    if let Some(dest) = export {
        fs::write(dest, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", dest.display())))?;
    }
    Ok(())
}

fn validate(path: &Path) -> Result<bool> {
    let cfg = SweepConfig::from_toml_str(&read(path)?)?;
    let mut all = true;
    for report in validation_reports(&cfg)? {
        all &= report.passed();
        println!("{report}");
    }
    Ok(all)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep {
            config,
            seed,
            output,
            threads,
            timing,
        } => {
            let mut cfg = SweepConfig::from_toml_str(&read(&config)?)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            cfg.output = output.or(cfg.output);
            cfg.threads = threads.or(cfg.threads);
            cfg.timing |= timing;
            emit(&cfg)?;
        }
        Command::Validate { config } => {
            if !validate(&config)? {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Design { config, export } => design(&config, export.as_deref())?,
        Command::Figure {
            name,
            trials,
            seed,
            output,
            threads,
            print_config,
        } => {
            let mut cfg = figure_preset(&name)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            cfg.output = output;
            cfg.threads = threads;
            cfg.check()?;
            if print_config {
                print!("{}", cfg.to_toml_string());
            } else {
                emit(&cfg)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("bdris: {e}");
            ExitCode::from(2)
        }
    }
}
