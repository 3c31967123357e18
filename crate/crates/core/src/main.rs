use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tdbeam::harness::{run_example1, run_sweep, solve_instance, ScenarioConfig, SweepOptions};
use tdbeam::{Result, SchemeKind};

/// Time-division energy beamforming experiments.
///
/// Log verbosity follows RUST_LOG (e.g. RUST_LOG=debug).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-ER orthogonal example: all four schemes, checked against the
    /// published numbers.
    Example1,
    /// Monte Carlo sweep over transmit power and antenna count.
    Sweep {
        /// TOML scenario file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for raw.csv and aggregate.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Record per-scheme wall time in the wall_ms column.
        #[arg(long)]
        timing: bool,
    },
    /// One channel draw with verbose solver certificates.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Transmit power; defaults to the first grid entry.
        #[arg(long)]
        p_max_dbm: Option<f64>,
        /// Antenna count; defaults to the first grid entry.
        #[arg(long)]
        antennas: Option<usize>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of multibeam,tdma,isotropic,time_division.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeKind>>,
}

fn load_config(path: Option<&Path>, o: Overrides) -> Result<ScenarioConfig> {
    let mut c = match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = o.seed {
        c.seed = s;
    }
    if let Some(t) = o.trials {
        c.num_trials = t;
    }
    if let Some(s) = o.schemes {
        c.schemes = s;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Example1 => {
            let report = run_example1()?;
            print!("{report}");
            report.check()?;
            println!("all published values reproduced");
        }
        Command::Sweep { config, out, overrides, threads, timing } => {
            let c = load_config(config.as_deref(), overrides)?;
            let output = run_sweep(&c, &SweepOptions { threads, timing })?;
            output.write_dir(&out)?;
            println!("{} rows written to {}", output.raw.len(), out.join("raw.csv").display());
            println!("{} aggregates written to {}", output.aggregate.len(), out.join("aggregate.csv").display());
        }
        Command::Solve { config, overrides, p_max_dbm, antennas, trial } => {
            let c = load_config(config.as_deref(), overrides)?;
            let p = p_max_dbm.unwrap_or(c.p_max_dbm_grid[0]);
            let m = antennas.unwrap_or(c.m_grid[0]);
            println!("p_max = {p} dBm, M = {m}, K = {}, trial {trial}", c.num_ers);
            for (kind, schedule, report) in solve_instance(&c, p, m, trial)? {
                println!(
                    "{kind}: min DC {:.6} mW, mean DC {:.6} mW, {} slots, {} outer / {} inner iterations, {}",
                    report.min_dc_energy / c.block_length,
                    report.mean_dc_energy() / c.block_length,
                    schedule.slots().len(),
                    report.outer_iterations,
                    report.inner_iterations,
                    report.status
                );
                for cert in &report.certificates {
                    println!("    {cert}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
