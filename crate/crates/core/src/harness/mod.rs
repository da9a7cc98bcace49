//! Configuration, experiment orchestration and file output.

pub mod config;
pub mod experiment;

pub use config::{parse_config, ExperimentConfig, NodeWeights, BUILTIN_US_STATES};
pub use experiment::{
    run_experiment, run_sweep, seed_block, CalibrationRecord, Experiment, ExperimentOutcome,
    PolicyBatch,
};

/// Runs `f` on a dedicated pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}
