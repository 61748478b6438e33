use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use ama_core::experiment::{
    gradcheck_suite, merge_rows, run_seeds, thread_budget, write_csv, Experiment, ExperimentConfig, RunOutput,
    GRADCHECK_TOL,
};
use ama_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ama", version, about = "Aleatoric mapping agents simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Online forward prediction on deterministic and stochastic digit pairs.
    NoisyPairs(RunArgs),
    /// A2C exploration of a multi-room gridworld, optionally with a noisy TV.
    Gridworld(RunArgs),
    /// Epsilon-greedy bandit driven by model uncertainty.
    Bandit(RunArgs),
    /// Monte-Carlo noise/bias/variance decomposition on a linear task.
    Decomposition(RunArgs),
    /// Finite-difference checks of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; keys not given keep the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV path. Defaults to the config's output, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `--set noisy_tv=true`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::NoisyPairs(a) => run(Experiment::NoisyPairs, a),
        Command::Gridworld(a) => run(Experiment::Gridworld, a),
        Command::Bandit(a) => run(Experiment::Bandit, a),
        Command::Decomposition(a) => run(Experiment::Decomposition, a),
        Command::Gradcheck { seed } => gradcheck(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("ama: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("ama: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(experiment: Experiment, args: RunArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::layered(experiment, args.config.as_deref(), &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let outputs = run_seeds(&cfg, thread_budget())?;
    let rows = merge_rows(&outputs);
    let out = args.out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    match out {
        Some(path) => {
            let file = File::create(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            write_csv(&mut w, &rows)?;
            w.flush().map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        }
        None => write_csv(io::stdout().lock(), &rows)?,
    }
    report(&outputs);
    Ok(())
}

fn report(outputs: &[RunOutput]) {
    let stderr = io::stderr();
    let mut err = stderr.lock();
    for o in outputs {
        let _ = write!(err, "{}", o.log.run_id());
        for (k, v) in &o.summary {
            let _ = write!(err, " {k}={v}");
        }
        let _ = writeln!(err);
    }
}

fn gradcheck(seed: u64) -> Result<(), Failure> {
    let results = gradcheck_suite(seed)?;
    let mut failed = 0;
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!("{status:4} {:<32} {:.3e}", r.name, r.max_relative_error);
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} of {} gradient checks exceed {GRADCHECK_TOL:e}",
            results.len()
        )));
    }
    Ok(())
}
