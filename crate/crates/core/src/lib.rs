//! Compressive classification of Gaussian mixture sources.
//!
//! A source `x` is drawn from one of `L` Gaussian classes and observed as
//! `y = Φx + n`. This crate provides the MAP classifier on `y`, the
//! Bhattacharyya and union upper bounds on its error, closed-form predictions
//! of the bound's low-noise behaviour, and Monte Carlo estimation.

pub mod asymptotics;
pub mod bounds;
pub mod classifier;
pub mod curve;
pub mod error;
pub mod gmm;
pub mod linalg;
pub mod measurement;
pub mod montecarlo;
pub mod seeds;
pub mod textio;

pub use asymptotics::{
    fit_diversity, fit_measurement_gain, measured_geometry, predict_multiclass, DiversityFit, FitWindow,
    MeasuredGeometry, Regime, RegimePrediction, SourceGeometry,
};
pub use bounds::{ProjectedModel, UnionBoundVariant};
pub use classifier::ClassifierContext;
pub use curve::{CurveRow, ErrorCurve};
pub use error::{Error, Result};
pub use gmm::{GaussianClass, GmmModel, MeanMode, RankSpec, SynthesisOptions};
pub use linalg::{PsdMatrix, RankTolerance};
pub use measurement::{draw_measurement_matrix, MeasurementSetup};
pub use montecarlo::{estimate_error, McResult, SweepOptions};
