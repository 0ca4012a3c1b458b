//! Harness around the `ctad` library: single-stage commands, the benchmark
//! grid, parameter sweeps, theory checks and solver profiling.
//!
//! Every random choice is derived from one `--seed` by hashing a stage name
//! into it (see [`pipeline::stage`]), so any stage can be rerun alone and
//! reproduce what the full grid computed.

pub mod bench;
pub mod commands;
pub mod output;
pub mod pipeline;
pub mod profile;

pub use bench::{run_bench, sweep, BenchConfig, BenchReport, CellOutcome, CellResult, SweepParam, SweepRow};
pub use commands::{run, Cli, Outcome};
pub use pipeline::DatasetSource;
pub use profile::{profile_ot, ProfileSummary};
