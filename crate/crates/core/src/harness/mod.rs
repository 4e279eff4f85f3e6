//! Cost-accuracy experiments: every method is advanced under a clock, scored
//! at checkpoints by the cross-match count against a long reference chain,
//! and the results are tabulated, summarized and plotted.

mod plot;
mod run;
mod spec;
mod summary;

pub use plot::{svg_chart, CONTROL};
pub use run::{
    experiment_target, fit_method, gold_standard, run_experiment, run_experiment_with, ExperimentOutput, FitOutput,
    GoldSummary, Manifest, ResultRow, Stopwatch, HARNESS_CHAIN_DRAWS,
};
pub use spec::{Clock, ExperimentSpec, GoldSpec, Method, MethodConfig, RepSeeds, DEFAULT_CHECKPOINTS};
pub use summary::{
    quantile, read_rows, summarize, write_csv, write_outputs, SummaryRow, MANIFEST_FILE, RESULTS_FILE, SUMMARY_FILE,
};
