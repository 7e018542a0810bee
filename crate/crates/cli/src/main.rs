use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cotrans::commands::crash_line;
use cotrans::{cmd_compare, cmd_design, cmd_simulate, cmd_verify, comparison_table, load_design};
use cotrans::{CliError, ControllerKind, RunConfig};

/// Robust design, simulation and comparison for payloads carried by
/// single-rotor robots.
#[derive(Parser)]
#[command(name = "cotrans", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the robust feedback design and write the archive and report.
    Design(Common),
    /// Re-check an archived design at every vertex of the configured box.
    Verify(Common),
    /// Run the configured scenario with one controller.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "proposed")]
        controller: Kind,
        /// Exit with code 1 if the payload crashes.
        #[arg(long)]
        require_survival: bool,
    },
    /// Step responses, PID tuning and the scenario for both controllers.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Design archive; defaults to `<out>/design.txt`.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the integration step, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the estimator noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Proposed,
    Pid,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(dt) = self.dt {
            cfg.sim.dt = dt;
        }
        if let Some(seed) = self.seed {
            cfg.sim.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn design_path(&self) -> PathBuf {
        self.design.clone().unwrap_or_else(|| self.out.join("design.txt"))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design(c) => {
            let cfg = c.load()?;
            let outcome = cmd_design(&cfg, &c.out)?;
            println!(
                "{}: kappa {:.3}, {}/{} vertices verified, {:.1} s",
                cfg.name,
                outcome.design.kappa,
                outcome.vertices.iter().filter(|r| r.pass).count(),
                outcome.vertices.len(),
                outcome.elapsed.as_secs_f64()
            );
            println!("wrote {}", c.out.join("design.txt").display());
        }
        Command::Verify(c) => {
            let cfg = c.load()?;
            let design = load_design(&cfg, &c.design_path())?;
            let outcome = cmd_verify(&cfg, &design, &c.out)?;
            println!("{}: {} vertices verified", cfg.name, outcome.vertices.len());
        }
        Command::Simulate {
            common: c,
            controller,
            require_survival,
        } => {
            let cfg = c.load()?;
            let design = load_design(&cfg, &c.design_path())?;
            let kind = match controller {
                Kind::Proposed => ControllerKind::Proposed,
                Kind::Pid => ControllerKind::Pid,
            };
            let outcome = cmd_simulate(&cfg, &design, kind, require_survival, &c.out)?;
            println!("{}: {}", kind.label(), crash_line(&outcome.result.crash));
            print_paths(&[&outcome.csv_path, &outcome.svg_path]);
        }
        Command::Compare(c) => {
            let cfg = c.load()?;
            let design = load_design(&cfg, &c.design_path())?;
            let cmp = cmd_compare(&cfg, &design, &c.out)?;
            print!("{}", comparison_table(&cmp));
        }
    }
    Ok(())
}

fn print_paths(paths: &[&Path]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
