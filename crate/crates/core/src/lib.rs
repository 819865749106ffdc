//! Conditional two-sample and goodness-of-fit testing via the expected
//! conditional maximum mean discrepancy (ECMMD).
//!
//! Given paired samples (X_i, Y_i, Z_i), the discrepancy between the
//! conditional laws of X|Z and Y|Z is estimated by averaging the centered
//! kernel H over the directed K-nearest-neighbor graph of the covariates.
//! On top of the point estimate the crate provides:
//!
//! * [`estimator::asymptotic_test`] — the studentized statistic with its
//!   Gaussian null calibration; no resampling, no nuisance parameters;
//! * [`resampling::finite_sample_test`] — an exchangeable resampling test
//!   with exact finite-sample Type I control, given sampling access to
//!   the specified conditional law;
//! * [`resampling::derandomized_test`] — per-edge resample averaging that
//!   removes the resampling randomness at asymptotic level α;
//! * [`calibration`] — classifier and regression calibration audits,
//!   reliability binning with ECE, and isotonic recalibration;
//! * [`datagen`] — seed-deterministic scenario generators, including a
//!   discrete-covariate oracle with a closed-form population value.

pub mod calibration;
pub mod data;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod knn;
pub mod numeric;
pub mod report;
pub mod resampling;
pub mod rng;

pub use data::{CovariateSet, PairedDataset, ResponseMatrix};
pub use error::{Error, Result};
pub use estimator::{asymptotic_test, ecmmd_sq, eta_n, sigma_hat_sq, Alternative, EcmmdResult};
pub use kernels::{centered_h, median_bandwidth, BandwidthSpec, Kernel, KernelSpec};
pub use knn::{build_knn_graph, KnnGraph};
pub use report::TestReport;
pub use resampling::{
    derandomized_estimate, derandomized_test, finite_sample_test, ConditionalSampler,
    DerandomizedResult, FiniteSampleResult,
};
