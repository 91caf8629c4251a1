use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sarml::cli::{builtin_selftest, run_scenario, RunOptions, EXIT_ASSERT, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "sarml", version, about = "SAR forward modelling and mirror-point analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis of a scenario config.
    Run {
        config: PathBuf,
        /// Exit with status 2 when any acceptance check fails.
        #[arg(long)]
        assert: bool,
        /// Also write SVG heat maps.
        #[arg(long)]
        svg: bool,
        /// Also write JSON summaries.
        #[arg(long)]
        json: bool,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: SARML_THREADS, else all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Quick checks against closed-form answers.
    Selftest,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return if n == 0 { Err("--threads must be at least 1".into()) } else { Ok(Some(n)) };
    }
    match std::env::var("SARML_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("SARML_THREADS: expected a positive integer, got {v:?}")),
        },
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Selftest => {
            let checks = builtin_selftest();
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.pass;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ASSERT as u8)
            }
        }
        Command::Run { config, assert, svg, json, out, threads } => {
            let threads = match thread_count(threads) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                builder = builder.num_threads(n);
            }
            let pool = match builder.build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: cannot start thread pool: {e}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            let opts = RunOptions { assert, svg, json, out };
            match pool.install(|| run_scenario(&config, &opts)) {
                Ok(outcome) => {
                    for a in &outcome.manifest.analyses {
                        let status = serde_json::to_value(&a.status).unwrap_or_default();
                        let status = status.as_str().unwrap_or("?");
                        match &a.message {
                            Some(m) => println!("{}:{} {status}: {m}", a.kind, a.tag),
                            None => println!("{}:{} {status}", a.kind, a.tag),
                        }
                    }
                    println!("wrote {}", outcome.out_dir.join("manifest.json").display());
                    ExitCode::from(outcome.exit_code as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG as u8)
                }
            }
        }
    }
}
