use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use polybgk::scenarios::{library, run_experiment, Experiment};
use polybgk_cli::config::{load_source, to_toml, ConfigError, Overrides};
use polybgk_cli::output::{exit_code, status_name, write_outputs, CONFIG_ERROR};
use polybgk_cli::report::Series;

/// Space-homogeneous BGK simulations of polyatomic gases and mixtures.
///
/// Exit codes: 0 all asserted invariants pass, 1 invariant failure,
/// 2 numerical abort, 3 configuration error.
#[derive(Parser)]
#[command(name = "polybgk", version)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file or a built-in scenario.
    Run {
        /// Path of a TOML configuration or name of a built-in scenario.
        source: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run every built-in scenario.
    RunAll {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check a configuration and print it with all defaults filled in.
    Validate {
        /// Path of a TOML configuration or name of a built-in scenario.
        source: String,
    },
    /// Summarise series files written by `run`.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
    /// List the built-in scenarios.
    List,
}

#[derive(Args)]
struct RunOpts {
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Time step; replaces per-variant steps too.
    #[arg(long)]
    dt: Option<f64>,
    /// End time; replaces per-variant end times too.
    #[arg(long)]
    t_end: Option<f64>,
    /// Record every `stride` steps.
    #[arg(long)]
    stride: Option<usize>,
}

impl RunOpts {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, dt: self.dt, t_end: self.t_end, stride: self.stride }
    }
}

/// Runs one experiment and writes its files; returns the exit code.
fn execute(exp: &Experiment, out_dir: &Path) -> u8 {
    let t0 = Instant::now();
    let outcome = match run_experiment(exp) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: invalid configuration: {e}", exp.name);
            return CONFIG_ERROR;
        }
    };
    if let Err(e) = write_outputs(out_dir, exp, &outcome) {
        eprintln!("{}: cannot write outputs to {}: {e}", exp.name, out_dir.display());
        return CONFIG_ERROR;
    }
    let status = outcome.status();
    println!("{:<26} {:<8} {:>8.1} s", exp.name, status_name(status), t0.elapsed().as_secs_f64());
    for run in &outcome.runs {
        if let Some(c) = &run.constants {
            println!("    {:<16} binding {} = {:.6}", run.label, c.binding_label(), c.rate);
        }
        if let Some(a) = &run.aborted {
            println!("    {:<16} aborted: {a}", run.label);
        }
    }
    for c in outcome.failures() {
        let v = c.variant.as_deref().unwrap_or("-");
        println!("    FAILED {} [{v}] value {:.3e} limit {:.3e}: {}", c.name, c.value, c.limit, c.detail);
    }
    exit_code(status)
}

fn config_error(e: ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(CONFIG_ERROR)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    match cli.command {
        Command::Run { source, opts } => {
            let exp = match load_source(&source).and_then(|e| opts.overrides().apply(e)) {
                Ok(e) => e,
                Err(e) => return config_error(e),
            };
            ExitCode::from(execute(&exp, &opts.out_dir))
        }
        Command::RunAll { opts } => {
            let mut exps = Vec::new();
            for e in library() {
                match opts.overrides().apply(e.resolved()) {
                    Ok(e) => exps.push(e),
                    Err(e) => return config_error(e),
                }
            }
            let codes: Vec<u8> = exps.par_iter().map(|e| execute(e, &opts.out_dir)).collect();
            let failed = codes.iter().filter(|&&c| c != 0).count();
            println!("{} of {} scenarios passed", codes.len() - failed, codes.len());
            ExitCode::from(codes.into_iter().max().unwrap_or(0))
        }
        Command::Validate { source } => {
            match load_source(&source) {
                Ok(e) => {
                    print!("{}", to_toml(&e));
                    ExitCode::SUCCESS
                }
                Err(e) => config_error(e),
            }
        }
        Command::Report { csv } => {
            let mut code = ExitCode::SUCCESS;
            for path in csv {
                match std::fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| Series::parse(&t)) {
                    Ok(s) => print!("{}", s.summarize()),
                    Err(e) => {
                        eprintln!("error: {}: {e}", path.display());
                        code = ExitCode::from(CONFIG_ERROR);
                    }
                }
            }
            code
        }
        Command::List => {
            for e in library() {
                println!("{:<26} {:<18} {:?}", e.name, e.model.name(), e.task);
            }
            ExitCode::SUCCESS
        }
    }
}
