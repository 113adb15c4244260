//! `simctl`: run netlists and post-process waveform files.
//!
//! Exit codes: 0 success, 1 parse/validation error, 2 solver failure,
//! 3 i/o failure.

use clap::{Parser, Subcommand, ValueEnum};
use simctl_core::engine::{run_file, RunOptions};
use simctl_core::error::Error;
use simctl_core::postproc;
use simctl_core::WaveformSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "simctl", about = "power-electronics circuit simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solve blocks of a netlist and write the output files.
    Run {
        /// Netlist file.
        netlist: PathBuf,
        /// Parse and validate only.
        #[arg(long)]
        check: bool,
        /// Per-step solver statistics.
        #[arg(long)]
        verbose: bool,
        /// Reserved: every run is seed-free and deterministic already.
        #[arg(long = "seed-free", hide = true)]
        seed_free: bool,
    },
    /// Post-process a column of a waveform file.
    Post {
        /// Waveform data file written by `run`.
        datafile: PathBuf,
        /// Column name (as in the file header).
        #[arg(long)]
        col: String,
        /// Operation to apply.
        #[arg(long, value_enum)]
        op: Op,
        /// Window start (defaults to the last full period for transient
        /// data with period metadata, else the whole span).
        #[arg(long)]
        t1: Option<f64>,
        /// Window end.
        #[arg(long)]
        t2: Option<f64>,
        /// Number of harmonics for fourier/thd.
        #[arg(long, alias = "K", default_value_t = 50)]
        k: usize,
        /// Spectrum output path (fourier only; defaults to
        /// <datafile>.spectrum).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Avg,
    Rms,
    Fourier,
    Thd,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Flatten { .. } | Error::Validation { .. } => 1,
        Error::Io { .. } => 3,
        _ => 2,
    }
}

fn run_command(netlist: &Path, check: bool, verbose: bool) -> Result<(), Error> {
    let options = RunOptions {
        check_only: check,
        verbose,
        write_files: true,
        base_dir: PathBuf::new(),
    };
    let report = run_file(netlist, &options)?;
    if check {
        println!("{}: ok", netlist.display());
    } else {
        print!("{}", report.summary());
    }
    Ok(())
}

/// Default window: the last full period for transient data carrying
/// period metadata, the entire span otherwise.
fn default_window(w: &WaveformSet) -> (f64, f64) {
    let (lo, hi) = (w.t_start(), w.t_end());
    match (w.kind.as_deref(), w.period) {
        (Some("trns"), Some(period)) if hi - period >= lo => (hi - period, hi),
        _ => (lo, hi),
    }
}

#[allow(clippy::too_many_arguments)]
fn post_command(
    datafile: &Path,
    col: &str,
    op: Op,
    t1: Option<f64>,
    t2: Option<f64>,
    k: usize,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let w = WaveformSet::read_file(datafile)?;
    let values = w.column(col).ok_or_else(|| Error::Postproc {
        message: format!("no column `{col}` in {} (have {:?})", datafile.display(), w.names),
    })?;
    let (d1, d2) = default_window(&w);
    let (t1, t2) = (t1.unwrap_or(d1), t2.unwrap_or(d2));
    match op {
        Op::Avg => println!("{:.9e}", postproc::average(&w.time, values, t1, t2)?),
        Op::Rms => println!("{:.9e}", postproc::rms(&w.time, values, t1, t2)?),
        Op::Fourier => {
            let spectrum = postproc::fourier(&w.time, values, t1, t2 - t1, k)?;
            let path = out.unwrap_or_else(|| {
                let mut p = datafile.as_os_str().to_owned();
                p.push(".spectrum");
                PathBuf::from(p)
            });
            std::fs::write(&path, spectrum.render()).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            println!(
                "f1={:.9e} a0={:.9e} -> {}",
                spectrum.f1,
                spectrum.a0,
                path.display()
            );
        }
        Op::Thd => {
            let spectrum = postproc::fourier(&w.time, values, t1, t2 - t1, k)?;
            println!("{:.9e}", postproc::thd(&spectrum)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { netlist, check, verbose, seed_free: _ } => {
            run_command(&netlist, check, verbose)
        }
        Command::Post { datafile, col, op, t1, t2, k, out } => {
            post_command(&datafile, &col, op, t1, t2, k, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("simctl: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
