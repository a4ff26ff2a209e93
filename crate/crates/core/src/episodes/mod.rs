//! Episode sampling, evaluation with confidence intervals, hyper-parameter
//! sweeps and a synthetic data generator.

mod eval;
mod sampler;
mod stats;
mod sweep;
pub mod synthetic;

pub use eval::{evaluate, EvalConfig, EvalReport, TextAssets, DEFAULT_QUERY};
pub use sampler::{episode_rng, sample_episode, Episode};
pub use stats::{confidence_interval, Z_95};
pub use sweep::{best_cell, sweep, sweep_csv, write_sweep_csv, SweepCell, SWEEP_HEADER};
pub use synthetic::{gen_synthetic, generate, GeneratorConfig};
