use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jchsim::selfcheck::{run_selfcheck, Corruption, SelfcheckOptions};
use jchsim_cli::{run_config, CliError, Experiment, Format, RunFlags};

#[derive(Parser)]
#[command(name = "jchsim", version, about = "Polariton experiments on one or two coupled cavities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Result format; overrides the config file.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Keep hopping on during ramp pulses.
    #[arg(long, global = true)]
    strict_ramp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the invariant suites.
    Selfcheck {
        /// Test hook: offset the manifold-2 coefficients by this amount.
        #[arg(long, hide = true)]
        corrupt_coefficient: Option<f64>,
    },
    /// List experiment names and the operation each runs.
    ListExperiments,
}

fn selfcheck(corrupt: Option<f64>, format: Option<Format>) -> Result<bool, CliError> {
    let options = SelfcheckOptions {
        corrupt_coefficient: corrupt.map(|offset| Corruption { manifold: 2, offset }),
    };
    let report = run_selfcheck(&options).map_err(CliError::numerical("selfcheck::run_selfcheck"))?;
    match format {
        Some(Format::Json) => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
        _ => {
            println!("status,check,name,value,threshold");
            for c in &report.checks {
                let kind = serde_json::to_value(c.kind).expect("kind serializes");
                println!(
                    "{},{},\"{}\",{:e},{:e}",
                    if c.passed { "pass" } else { "fail" },
                    kind.as_str().unwrap_or_default(),
                    c.name,
                    c.value,
                    c.threshold
                );
            }
        }
    }
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<20} {:<38} {}", e.name(), e.operation(), e.description());
            }
            Ok(())
        }
        Command::Selfcheck { corrupt_coefficient } => match selfcheck(corrupt_coefficient, cli.format) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
        Command::Run { config } => {
            let flags = RunFlags {
                strict_ramp: cli.strict_ramp,
            };
            run_config(&config, &cli.output_dir, cli.format, flags).map(|files| {
                for f in files {
                    println!("{}", f.display());
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
