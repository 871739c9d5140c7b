//! Robust subsampling estimators for high-dimensional parameter estimation.
//!
//! Two subsampling estimators are provided:
//!
//! - [`ais`]: adaptive importance sampling. Repeatedly draws a weighted
//!   subsample, refits an importance-weighted empirical risk minimizer and
//!   re-weights every observation by `exp(-beta * loss)`.
//! - [`stratified`]: stratified subsampling. Partitions the observations into
//!   quantile strata of their distance to the coordinate-wise median, fits a
//!   median-of-means estimate per stratum and aggregates with the geometric
//!   median.
//!
//! Supporting modules cover synthetic data environments ([`datagen`]), robust
//! location primitives ([`robust`]), losses and the weighted solver ([`loss`]),
//! reference estimators ([`baselines`]) and a seeded benchmark harness
//! ([`bench`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ais;
pub mod baselines;
pub mod bench;
pub mod cli;
pub mod data;
pub mod datagen;
pub mod error;
mod linalg;
pub mod loss;
pub mod result;
pub mod rng;
pub mod robust;
pub mod sampling;
pub mod stratified;

pub use data::{Dataset, DatasetMeta, Matrix, Violation};
pub use error::{Error, Result};
pub use result::{EstimateResult, Method};
pub use rng::SeededRng;
pub use sampling::{draw_weighted, SampleMode, SubsampleDraw, WeightVector};
