//! `cpcgate` command-line driver.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::UnitsArgs;

#[derive(Parser, Debug)]
#[command(name = "cpcgate", version, about = "Nonlinear sign-gate simulator")]
struct Cli {
    /// Worker threads for sweeps and grid-parallel kernels (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Accepted for compatibility; every computation is deterministic already.
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Io {
    /// JSON run configuration; omitted means all defaults (preset S1).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate one configuration and write trace, snapshots and manifest.
    Run {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the Cartesian product of the config's "sweep" lists.
    Sweep {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the WKB, oscillator and full-simulation couplings.
    Calibrate {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Coarse samples of the full-simulation scan.
        #[arg(long, default_value_t = 8)]
        scan_points: usize,
        /// Final bracket width of the golden-section search.
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
    },
    /// Fourth-order coherence widths and slowness of an input.
    Coherence {
        #[command(flatten)]
        io: Io,
        /// Stored 2-D grid to analyse instead of the configured input.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Half extent of the delay window (default 4).
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert laboratory parameters to normalized units.
    Units {
        /// JSON file with the fields n2, I_p, lambda_p, S, beta1, tau_fwhm, sigma_phys.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Nonlinear index, cm^2/W.
        #[arg(long)]
        n2: Option<f64>,
        /// Pump intensity, W/cm^2.
        #[arg(long)]
        ip: Option<f64>,
        /// Pump wavelength, m.
        #[arg(long)]
        lambda_p: Option<f64>,
        /// Effective area, m^2.
        #[arg(long)]
        area: Option<f64>,
        /// Group-velocity mismatch, s/m.
        #[arg(long)]
        beta1: Option<f64>,
        /// Pulse FWHM, s.
        #[arg(long)]
        tau_fwhm: Option<f64>,
        /// Response time, s.
        #[arg(long)]
        sigma_phys: Option<f64>,
        /// Fill a missing wavelength (800 nm) and area (1e-12 m^2) as flagged assumptions.
        #[arg(long)]
        assume_example: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the preset waveshapes.
    Presets,
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match cli.command {
        Command::Run { io, out } => commands::cmd_run(io.config.as_deref(), &out),
        Command::Sweep { io, out } => commands::cmd_sweep(io.config.as_deref(), &out),
        Command::Calibrate {
            io,
            out,
            scan_points,
            tol,
        } => commands::cmd_calibrate(io.config.as_deref(), out.as_deref(), scan_points, tol),
        Command::Coherence { io, grid, window, out } => {
            commands::cmd_coherence(io.config.as_deref(), grid.as_deref(), window, out.as_deref())
        }
        Command::Units {
            params,
            n2,
            ip,
            lambda_p,
            area,
            beta1,
            tau_fwhm,
            sigma_phys,
            assume_example,
            out,
        } => commands::cmd_units(
            &UnitsArgs {
                params,
                n2,
                i_p: ip,
                lambda_p,
                area,
                beta1,
                tau_fwhm,
                sigma_phys,
                assume_example,
            },
            out.as_deref(),
        ),
        Command::Presets => {
            commands::cmd_presets();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
