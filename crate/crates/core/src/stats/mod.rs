//! Significance testing and classification metrics.

mod metrics;
mod special;
mod ttest;

pub use metrics::{classification_metrics, MetricsReport};
pub use special::{
    ln_beta, ln_gamma, regularized_incomplete_beta, student_t_cdf, student_t_two_sided_p,
};
pub use ttest::{
    bonferroni_significant, one_sample_ttest_two_sided, welch_ttest_two_sided, TTestOutcome,
};
