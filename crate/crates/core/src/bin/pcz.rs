use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pcz_core::harness::{self, load_config, Experiment};
use pcz_core::{Error, PolicyKind};

/// Simulation driver for Pareto contextual zooming experiments.
#[derive(Parser)]
#[command(name = "pcz", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy in the config and write the CSVs.
    Run { config: PathBuf },
    /// Like `run`, then print final regret and fairness side by side.
    Compare { config: PathBuf },
    /// Parse and validate the config, printing resolved values.
    Validate { config: PathBuf },
    /// Dump grid means, Pareto fronts and gaps to `<output_dir>/oracle.csv`.
    Oracle {
        config: PathBuf,
        /// Number of evenly spaced contexts.
        #[arg(long, default_value_t = 11)]
        contexts: usize,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
}

fn load(path: &PathBuf) -> Result<Experiment, ExitCode> {
    load_config(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let exp = match load(&config) {
                Ok(e) => e,
                Err(code) => return code,
            };
            println!(
                "ok: T={} runs={} policies={:?} delta={} M={} oracle_grid={} output={}",
                exp.horizon,
                exp.config.runs,
                exp.config.policies,
                exp.delta,
                exp.config.arm_grid_size,
                exp.oracle_grid_size,
                exp.output_dir().display()
            );
            ExitCode::SUCCESS
        }
        Command::Oracle { config, contexts } => {
            let exp = match load(&config) {
                Ok(e) => e,
                Err(code) => return code,
            };
            let dir = exp.output_dir();
            let written = harness::oracle_csv(&exp, contexts).and_then(|csv| {
                std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(dir.join("oracle.csv"), csv))
                    .map_err(|e| Error::Io {
                        path: dir.display().to_string(),
                        source: e,
                    })
            });
            match written {
                Ok(()) => {
                    println!("{}", dir.join("oracle.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
        Command::Run { config } => run(&config, false),
        Command::Compare { config } => run(&config, true),
    }
}

fn run(config: &PathBuf, compare: bool) -> ExitCode {
    let exp = match load(config) {
        Ok(e) => e,
        Err(code) => return code,
    };
    if compare && exp.config.policies.len() < 2 {
        eprintln!("error: compare needs at least two policies");
        return ExitCode::from(EXIT_CONFIG);
    }
    let results = match harness::run_experiment(&exp) {
        Ok(r) => r,
        Err(failure) => {
            eprintln!("error: {failure}");
            return exit_code(&failure.error);
        }
    };
    log::info!("outputs written to {}", exp.output_dir().display());
    if compare {
        print_comparison(&exp, &results);
    }
    ExitCode::SUCCESS
}

fn print_comparison(exp: &Experiment, results: &harness::ExperimentResults) {
    let finals: Vec<(PolicyKind, f64, f64)> = exp
        .config
        .policies
        .iter()
        .filter_map(|&p| {
            results.summary(p).map(|s| {
                (p, s.final_mean(), s.std_err.last().copied().unwrap_or(0.0))
            })
        })
        .collect();
    let (base_policy, base) = (finals[0].0, finals[0].1);
    println!(
        "{:<20} {:>14} {:>10} {:>12}",
        "policy", "final regret", "se", format!("vs {base_policy}")
    );
    for (p, mean, se) in &finals {
        let rel = if base > 0.0 { 100.0 * (mean / base - 1.0) } else { 0.0 };
        println!("{:<20} {:>14.3} {:>10.3} {:>+11.2}%", p.name(), mean, se, rel);
    }
    if exp.env.pareto_band(0.0).is_some() {
        println!("\n{:<20} bin ratios 1..6", "policy");
        for &p in &exp.config.policies {
            if let Some(f) = results.pooled_fairness(p) {
                let r: Vec<String> = f.ratios.iter().map(|x| format!("{x:.3}")).collect();
                println!("{:<20} {}", p.name(), r.join(" "));
            }
        }
    }
}
