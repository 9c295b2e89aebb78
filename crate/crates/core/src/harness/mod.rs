//! Experiment drivers: codebook upper bounds, the copy baseline and
//! evaluation runs over bundle directories.

mod baseline;
mod eval;
mod upper_bound;

pub use baseline::copy_baseline_predict;
pub use eval::{list_bundles, run_eval, EvalConfig, EvalOutcome, EvalRow, PREDICTION_PREFIX};
pub use upper_bound::{
    codebook_upper_bound, write_upper_bound_report, ColorProtocol, UpperBoundConfig, UpperBoundReport, UpperBoundRow,
    DEFAULT_UPPER_BOUND_SAMPLES,
};
