use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kernel_observer::experiment::{
    check_experiment, load_config, rescan_pe, run_experiment, ExperimentConfig, Manifest, PeConfig,
};
use kernel_observer::observer::GainCondition;
use kernel_observer::pe::write_pe_scan;
use kernel_observer::Error;

/// Simulate a two-population neural field with an adaptive kernel observer.
#[derive(Debug, Parser)]
#[command(name = "kernel-observer", version)]
struct Cli {
    /// Suppress progress and summary output.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run {
        /// Configuration file, or the name of a bundled configuration
        /// (table1, table1_ci, zero_input).
        config: String,
        /// Write outputs here instead of the configured directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the final time; later snapshot times are dropped.
        #[arg(long)]
        t_final: Option<f64>,
    },
    /// Evaluate the dissipativity and gain conditions without integrating.
    Check {
        /// Configuration file or bundled configuration name.
        config: String,
    },
    /// Rescan persistence of excitation from a finished run's stored regressor.
    Pe {
        run_dir: PathBuf,
        /// Window length (default: the run's configured value).
        #[arg(long)]
        window: Option<f64>,
        /// Excitation level kappa (default: the run's configured value).
        #[arg(long)]
        kappa: Option<f64>,
        /// Spacing of window starts (default: the run's configured value).
        #[arg(long)]
        stride: Option<f64>,
        /// Output CSV (default: <run-dir>/pe_rescan.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Any failure to obtain a valid configuration counts as a configuration
/// error, including unreadable or unparsable files.
fn resolve_config(arg: &str) -> Result<ExperimentConfig, Error> {
    let path = Path::new(arg);
    if path.exists() {
        return load_config(path).map_err(|e| match e {
            e @ (Error::Validation(_) | Error::Config(_)) => e,
            other => Error::Config(other.to_string()),
        });
    }
    ExperimentConfig::bundled(arg).map_err(|_| {
        Error::Config(format!(
            "{arg:?} is neither a readable file nor a bundled configuration name"
        ))
    })
}

fn print_diagnostics(g: &GainCondition) {
    println!("||W11||_op            = {:.10e}", g.w11_opnorm);
    println!("l1 ||W11||_op         = {:.10e}", g.dissipativity_product);
    match g.alpha {
        Some(a) => println!("alpha                 = {a:.10e}"),
        None => println!("alpha                 = none (dissipativity fails)"),
    }
    println!("||B1||_op             = {:.10e}", g.b1_opnorm);
    match g.lhs {
        Some(l) => println!("4 alpha beta          = {l:.10e}"),
        None => println!("4 alpha beta          = undefined"),
    }
    println!("(l1 ||B1||_op)^2      = {:.10e}", g.rhs);
    println!("gain condition holds  = {}", g.holds);
    if let (Some(m1), Some(m2)) = (g.mu1, g.mu2) {
        println!("mu1, mu2              = {m1:.6e}, {m2:.6e}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            t_final,
        } => {
            let mut cfg = resolve_config(&config)?;
            if let Some(t) = t_final {
                let dropped = cfg.override_t_final(t);
                if !dropped.is_empty() && !cli.quiet {
                    eprintln!("dropping snapshot times beyond t_final = {t}: {dropped:?}");
                }
            }
            if let Some(dir) = output_dir {
                cfg.output.directory = dir;
            }
            cfg.validate()?;
            if !cli.quiet {
                eprintln!(
                    "running {} grid points to t = {} into {}",
                    cfg.grid.n_points,
                    cfg.integration.t_final,
                    cfg.output.directory.display()
                );
            }
            let summary = run_experiment(&cfg)?;
            if !cli.quiet {
                let r = &summary.final_record;
                println!("t       = {}", r.t);
                println!("e_z1    = {:.6e}", r.e_z1);
                println!("e_z2    = {:.6e}", r.e_z2);
                println!("e_W21   = {:.6e}", r.e_w21);
                println!("e_W22   = {:.6e}", r.e_w22);
                println!("V       = {:.6e}", r.lyapunov);
                println!(
                    "steps   = {} accepted, {} rejected, {} rhs evaluations",
                    summary.stats.accepted, summary.stats.rejected, summary.stats.rhs_evals
                );
                if let Some(scan) = &summary.pe_scan {
                    println!("PE min margin = {:.6e}", scan.min_margin());
                }
                println!("outputs in {}", summary.output_dir.display());
            }
        }
        Command::Check { config } => {
            let cfg = resolve_config(&config)?;
            let g = check_experiment(&cfg)?;
            if !cli.quiet {
                print_diagnostics(&g);
            }
        }
        Command::Pe {
            run_dir,
            window,
            kappa,
            stride,
            out,
        } => {
            let defaults = match Manifest::read(&run_dir) {
                Ok(m) => m.config.pe,
                Err(_) => PeConfig::default(),
            };
            let window = window.unwrap_or(defaults.window);
            let kappa = kappa.unwrap_or(defaults.kappa);
            let stride = stride.unwrap_or(defaults.scan_stride);
            let scan = rescan_pe(&run_dir, window, kappa, stride)?;
            let out = out.unwrap_or_else(|| run_dir.join("pe_rescan.csv"));
            write_pe_scan(&out, &scan)?;
            if !cli.quiet {
                println!(
                    "{} windows, min margin {:.6e}",
                    scan.entries.len(),
                    scan.min_margin()
                );
                println!("written to {}", out.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_numeric() {
                3
            } else {
                1
            })
        }
    }
}
