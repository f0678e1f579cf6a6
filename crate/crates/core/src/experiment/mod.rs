//! Instance files, the two test beds of the study, and the batch runner.

mod beds;
mod instance;
mod run;

pub use beds::{example_4period, generate_mvn_bed, generate_ts_bed, pattern, ts_processes, KLevels, PATTERNS};
pub use instance::{DemandSpec, Instance, Partition, SolverSpec};
pub use run::{
    instance_seed, pivot_summary, read_csv, run, write_csv, write_summary, Method, PivotRow, ResultRow, RunConfig,
    PIVOT_FACTORS,
};
