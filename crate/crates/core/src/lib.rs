//! Spiked random matrix models: asymptotic predictions for outlier
//! eigenvalues and eigenvector overlaps from a limiting spectral measure,
//! exact finite-n master equations, and Monte Carlo verification.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod lab;
pub mod master;
pub mod measure;
pub mod prediction;
mod quadrature;
pub mod transforms;

pub use error::{Error, Result};
pub use measure::{ks_distance, moment, support_bounds, EmpiricalSpectrum, MeasureKind, SpectralMeasure};
pub use prediction::{predict, predict_additive, predict_in_gap, predict_multiplicative, Model, OverlapVariant, SpikeOutcome, SpikePrediction, SpikeSpec};
pub use master::{rank_one_overlap, secular_rank_one, MasterEquationSystem, WeightedMeasure};
