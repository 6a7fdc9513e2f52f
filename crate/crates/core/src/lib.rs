//! Small time-series character classifiers with SWAG and deep-ensemble
//! posteriors, uncertainty decompositions, and calibration analysis.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common cases. Datasets are always stored as `f64`.

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod model;
pub mod posterior;
pub mod prob;
pub mod rng;
pub mod scalar;
pub mod training;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type ProbVector64 = prob::ProbVector<f64>;
pub type ProbVector32 = prob::ProbVector<f32>;
pub type ParamVector64 = model::ParamVector<f64>;
pub type ParamVector32 = model::ParamVector<f32>;
pub type SwagStats64 = training::SwagStats<f64>;
pub type SwagStats32 = training::SwagStats<f32>;
pub type SwagPosterior64 = posterior::SwagPosterior<f64>;
pub type SwagPosterior32 = posterior::SwagPosterior<f32>;
pub type SoftmaxDraws64 = posterior::SoftmaxDraws<f64>;
pub type SoftmaxDraws32 = posterior::SoftmaxDraws<f32>;
pub type KwonMatrices64 = uncertainty::KwonMatrices<f64>;
pub type KwonMatrices32 = uncertainty::KwonMatrices<f32>;
pub type UncertaintyReport64 = uncertainty::UncertaintyReport<f64>;
pub type UncertaintyReport32 = uncertainty::UncertaintyReport<f32>;
