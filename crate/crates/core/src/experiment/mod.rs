//! Experiment drivers, configuration and metric logging.
//!
//! Every driver is a pure function of `(config, seed)`: all randomness flows
//! from named streams of the seed, so a rerun reproduces the metrics exactly.

mod bandit;
mod config;
mod decomposition;
mod gradcheck;
mod gridworld;
mod metrics;
mod noisy_pairs;

use std::collections::BTreeMap;

pub use bandit::{run_bandit, zone_probes};
pub use config::{Experiment, ExperimentConfig, Method, SCHEMA_VERSION};
pub use decomposition::{
    estimate_decomposition, run_decomposition, DecompositionEstimate, DecompositionSettings, LinearTask,
};
pub use gradcheck::{
    a2c_gradcheck, gradcheck_suite, hetero_gradcheck, mlp_gradcheck, GradCheckResult, GRADCHECK_EPS, GRADCHECK_TOL,
    HETERO_GRADCHECK_EPS,
};
pub use gridworld::{a2c_config, grid_config, run_gridworld, scale_observation};
pub use metrics::{series, to_csv, write_csv, MetricLog, MetricRow, CSV_HEADER};
pub use noisy_pairs::{build_task, run_noisy_pairs, SUMMARY_WINDOW};

use crate::error::{Error, Result};

/// Rows logged by one seeded run plus end-of-run summary values.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricLog,
    pub summary: BTreeMap<String, f64>,
}

impl RunOutput {
    pub fn new(run_id: String, seed: u64) -> Self {
        Self {
            log: MetricLog::new(run_id, seed),
            summary: BTreeMap::new(),
        }
    }

    pub fn summary(&self, key: &str) -> f64 {
        self.summary.get(key).copied().unwrap_or(f64::NAN)
    }
}

/// Runs one seed of the configured experiment.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::NoisyPairs => run_noisy_pairs(cfg, seed),
        Experiment::Gridworld => run_gridworld(cfg, seed),
        Experiment::Bandit => run_bandit(cfg, seed),
        Experiment::Decomposition => run_decomposition(cfg, seed),
    }
}

/// Parallel job cap from `AMA_THREADS` (default 1).
pub fn thread_budget() -> usize {
    std::env::var("AMA_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(1)
}

/// Runs every seed, at most `threads` at a time, and returns outputs in seed
/// order. Results do not depend on `threads`.
pub fn run_seeds(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<RunOutput>> {
    run_jobs(cfg.seeds.iter().map(|&s| (cfg.clone(), s)).collect(), threads)
}

/// Runs `(config, seed)` jobs with at most `threads` in flight; outputs keep
/// job order.
pub fn run_jobs(jobs: Vec<(ExperimentConfig, u64)>, threads: usize) -> Result<Vec<RunOutput>> {
    let threads = threads.max(1).min(jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(|(c, s)| run_seed(c, *s)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<RunOutput>>> = (0..jobs.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((c, s)) = jobs.get(i) else { break };
                let r = run_seed(c, *s);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::InvalidArgument("job did not run".into()))))
        .collect()
}

/// All rows of several runs, in run order.
pub fn merge_rows(outputs: &[RunOutput]) -> Vec<MetricRow> {
    outputs.iter().flat_map(|o| o.log.rows().iter().cloned()).collect()
}
