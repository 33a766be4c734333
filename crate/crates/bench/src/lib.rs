//! Benchmark harness: procedural datasets, simulated user hints, per-object
//! evaluation of completion, snapping and planning, and robustness sweeps.

pub mod dataset;
pub mod eval;
pub mod hint;
pub mod report;
pub mod sweep;

pub use dataset::{generate_dataset, make_scene, DatasetConfig, Manifest, ObjectSource};
pub use eval::{run_benchmark, BenchConfig, EvalRecord, HintMode};
pub use hint::{derive_seed, hint_at_error, sample_user_hint};
pub use report::{percentile, Report, Summary};
pub use sweep::{robustness_sweep, SweepAxis, SweepTable};
