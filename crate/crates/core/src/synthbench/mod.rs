//! Synthetic benchmarks with known ground truth, and a subprocess harness
//! for profiling real tunable programs.

pub mod harness;
pub mod surface;

pub use harness::{run_external, BenchHarness, RunFailure, RunOutcome};
pub use surface::{
    generate_dataset, quality, CostBlock, CostForm, ErrorForm, SettingSelection, SurfaceSpec, SynthInput,
};
