//! Configuration, file formats, metrics and the drivers behind the `npat`
//! command-line tool.
//!
//! Every command reads a [`RunConfig`], writes its artifacts under
//! `output.dir`, and is deterministic given the config and noise seeds.
//! Wall-clock timings go to separate `*timings*.json` files so that every
//! other artifact is reproducible byte for byte.

pub mod commands;
pub mod config;
pub mod io;
pub mod metrics;

pub use commands::{
    cmd_compare, cmd_forward, cmd_kernel, cmd_matrix, cmd_noise, cmd_phantom, cmd_reconstruct, exit_code,
    KernelReport, MatrixCell, MatrixOutcome, ReconstructOutcome,
};
pub use config::{FormulaKind, RunConfig};
pub use metrics::MetricsReport;
