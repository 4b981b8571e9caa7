//! Experiment harness: run configuration, parameter sweeps, bucket geometry
//! reports and SVG plots.

pub mod bucket_report;
pub mod function;
pub mod plot;
pub mod run;
pub mod sweep;

pub use bucket_report::{bucket_report, slice_points, BucketReport, BucketReportConfig, TrialBuckets};
pub use function::{FunctionConfig, FunctionFamily};
pub use plot::{build_series, render_svg, Series, XAxis, YAxis};
pub use run::{fit_lsh_tables, run_model, LshWidth, ModelSpec, DEFAULT_LSH_WIDTH};
pub use sweep::{errors_path, run_sweep, write_failures_csv, write_sweep_outputs, GridEntry, RunFailure, SweepConfig, SweepOutcome};
