use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cashlot::simulate::simulate;
use cashlot::testbed::{build_cases, desk_subset, run, write_outputs, BenchConfig};
use cashlot::{mip, policy, sdp, ProblemInstance, Result, ScsPolicy};

#[derive(Parser)]
#[command(
    name = "cashlot",
    version,
    about = "Cash-constrained stochastic lot sizing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance exactly and print the optimal expected cash increment.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// Write every tabulated state as CSV (period, x, R, F, Q).
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Solve exactly and read an (s, C(x), S) policy off the action tables.
    Extract {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an (s, C(x), S) policy from the expected-value plan.
    Heuristic {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a policy's expected cash increment by Monte Carlo.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// Policy JSON; the exact optimal policy is used when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference value for the reported gap.
        #[arg(long = "ref")]
        reference: Option<f64>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the benchmark grid and write CSV and markdown reports.
    Bench {
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only one case per demand pattern.
        #[arg(long)]
        subset: bool,
        /// Per-case limit on the exact solve, in seconds.
        #[arg(long, default_value_t = 600)]
        solve_budget: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Solve { instance, dump } => {
            let inst = ProblemInstance::load(instance)?;
            let sol = sdp::solve(&inst)?;
            println!("{}", sol.optimal_value());
            if let Some(path) = dump {
                sol.write_csv(BufWriter::new(File::create(path)?))?;
            }
        }
        Command::Extract { instance, out } => {
            let inst = ProblemInstance::load(instance)?;
            let sol = sdp::solve(&inst)?;
            let pol = policy::extract(&sol, &inst)?;
            std::fs::write(out, pol.to_json()? + "\n")?;
        }
        Command::Heuristic { instance, out } => {
            let inst = ProblemInstance::load(instance)?;
            let pol = mip::build_policy(&inst)?;
            std::fs::write(out, pol.to_json()? + "\n")?;
        }
        Command::Simulate {
            instance,
            policy,
            samples,
            seed,
            reference,
            out,
        } => {
            let inst = ProblemInstance::load(instance)?;
            let mut report = match policy {
                Some(path) => simulate(&inst, &ScsPolicy::load(path)?, samples, seed)?,
                None => simulate(&inst, &sdp::solve(&inst)?, samples, seed)?,
            };
            if let Some(r) = reference {
                report = report.with_reference(r)?;
            }
            match out {
                Some(path) => report.write(path)?,
                None => println!("{}", report.to_json()?),
            }
        }
        Command::Bench {
            samples,
            seed,
            subset,
            solve_budget,
            out,
        } => {
            if samples == 0 {
                return Err(cashlot::Error::NoSamples);
            }
            let cases = if subset { desk_subset() } else { build_cases() };
            let mut config = BenchConfig::new(samples, seed);
            config.solve_budget = std::time::Duration::from_secs(solve_budget);
            let outcome = run(&cases, &config);
            write_outputs(&out, &outcome)?;
            print!("{}", outcome.report.to_markdown());
        }
    }
    Ok(())
}
