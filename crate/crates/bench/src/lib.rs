//! Benchmark driver for the `rtlsh` indexes: ground truth, the overall
//! ratio metric, timed batch and streaming runs, CSV output.

pub mod metric;
pub mod report;
pub mod runner;
pub mod synth;

pub use metric::{ratio, summarize, Ratio, RatioError};
pub use report::{export_csv, read_csv, BenchRecord, COLUMNS};
pub use runner::{
    make_ground_truth, run_batch, run_batch_on, run_stream, run_stream_on, BenchConfig, BuiltIndex, GroundTruthSource,
    StreamOptions, StreamSchedule,
};
pub use synth::{generate, SynthKind};
