use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seismlmc_cli::commands::{self, exit_code, plan_table};
use seismlmc_cli::{report, RunConfig};

#[derive(Parser)]
#[command(name = "mlmc-seis", version, about = "MLMC estimation of seismic misfit functionals")]
struct Cli {
    /// Run configuration (TOML).
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic observations.
    Synth,
    /// Run the verification study and calibrate the level models.
    Verify,
    /// Print MLMC and MC plans for every tolerance.
    Plan,
    /// Execute the planned estimators.
    Run,
    /// Write CSV tables and SVG plots.
    Report {
        /// Skip the SVG plots.
        #[arg(long)]
        no_svg: bool,
    },
    /// Compare QoIs with and without attenuation.
    Attencmp,
}

fn run(cli: Cli) -> seismlmc::Result<()> {
    let cfg = RunConfig::load(&cli.config)?;
    match cli.command {
        Command::Synth => {
            let d = commands::cmd_synth(&cfg)?;
            println!("wrote {} traces, sigma = {:.4e}", d.traces.len(), d.sigma);
        }
        Command::Verify => {
            let rm = commands::cmd_verify(&cfg)?;
            print!("{}", commands::diagnostics_table(&rm));
        }
        Command::Plan => {
            let rows = commands::cmd_plan(&cfg)?;
            print!("{}", plan_table(&rows, cfg.hierarchy.l_max));
        }
        Command::Run => {
            let s = commands::cmd_run(&cfg)?;
            print!("{}", report::summary_csv(&s));
            println!("reference {:.6e} (variance {:.3e})", s.reference.value, s.reference.variance);
        }
        Command::Report { no_svg } => {
            for f in report::cmd_report(&cfg, !no_svg)? {
                println!("{}", f.display());
            }
        }
        Command::Attencmp => {
            println!("level qoi     with          without       change[%]");
            for r in commands::cmd_attenuation_compare(&cfg)? {
                println!("{:<5} {:<7} {:<13.6e} {:<13.6e} {:+.2}", r.level, r.qoi, r.with, r.without, r.change_percent());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
