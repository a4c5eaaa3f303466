//! Fine-tuning metrics, run records and diagnostic studies.

mod metrics;
mod pca;
mod record;
mod studies;

pub use metrics::{auc, bootstrap_ci, degradation, final_improvement, median};
pub use pca::{pca2, Pca2};
pub use record::{Columns, RunRecord, RunRow, BASE_COLUMNS};
pub use studies::{
    evaluate, evaluate_greedy, evaluate_policy, lambda_grid, linear_interp_eval, true_return_estimate, value_shift,
};
