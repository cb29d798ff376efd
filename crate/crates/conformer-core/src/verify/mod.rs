//! Verification: naive numerical oracles and runnable check suites.

pub mod oracles;
pub mod suites;

pub use oracles::{
    brute_force_relpos_scores, naive_conv2d, naive_depthwise_conv1d, naive_glu, naive_matmul,
    naive_pointwise_conv1d, naive_se_global,
};
pub use suites::{all_passed, run_verify, CheckResult, Fault, Scale, Suite};
