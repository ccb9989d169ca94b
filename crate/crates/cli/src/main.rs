use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stlcbf::pipeline::{run_scenario, PipelineError, RunOptions, RunReport};
use stlcbf::scenario::Scenario;
use stlcbf::sim::SimError;

const EXIT_USAGE: u8 = 1;
const EXIT_ASSUMPTIONS: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "stlcbf", version, about = "Barrier-function controllers for temporal logic tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile, check, simulate and monitor a scenario file.
    Run {
        scenario: PathBuf,
        /// Output directory (default: out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Controller rate in Hz.
        #[arg(long)]
        rate: Option<f64>,
        /// Simulate even if the assumption checks fail.
        #[arg(long)]
        force: bool,
        /// Stop after the assumption checks.
        #[arg(long)]
        check_only: bool,
        /// Seed for the sampled assumption checks.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn print_checks(r: &RunReport) {
    let a = &r.assumptions;
    println!(
        "decay check: kappa*b_min = {} vs max funnel decrease {} (margin {}) {}",
        a.decay.lhs,
        a.decay.max_decrease_rate,
        a.decay.margin,
        if a.decay.passed { "ok" } else { "FAILED" }
    );
    for c in &a.concavity {
        if c.violations > 0 {
            println!("concavity: predicate {} failed {} of {} chord samples", c.predicate, c.violations, c.samples);
        }
    }
    if !a.first_order.is_empty() {
        println!("warning: {} sampled states where a predicate gradient is orthogonal to the inputs", a.first_order.len());
    }
    if let Some(b) = a.b_min_estimate {
        println!("sampled b_min estimate: {b}");
    }
}

fn print_run(r: &RunReport) {
    if let Some(mb) = &r.min_barrier {
        println!("min b0: {} at t = {}", mb.value, mb.time);
    }
    if let Some(th) = &r.satisfaction {
        println!("robustness: {} (sampling tolerance {})", th.robustness, th.tol_sampling);
        println!("barrier implies satisfaction: {:?}", th.outcome);
    }
    if let Some(s) = r.mean_tick_seconds {
        println!("mean controller time per tick: {:.3} ms", s * 1e3);
    }
    for p in &r.artifacts {
        println!("wrote {}", p.display());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Command::Run { scenario, out, rate, force, check_only, seed } = cli.command;
    let s = match Scenario::load(&scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: load: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let opts = RunOptions { out_dir: out, rate, force, check_only, seed, dry: false };
    match run_scenario(&s, &opts) {
        Ok(report) => {
            print_checks(&report);
            print_run(&report);
            if check_only && !report.assumptions.passed() {
                return ExitCode::from(EXIT_ASSUMPTIONS);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PipelineError::Assumptions(_) => ExitCode::from(EXIT_ASSUMPTIONS),
                PipelineError::Simulate(SimError::Controller { .. } | SimError::NonFinite { .. }) => ExitCode::from(EXIT_INFEASIBLE),
                _ => ExitCode::from(EXIT_USAGE),
            }
        }
    }
}
