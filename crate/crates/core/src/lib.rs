//! Drift-parameter likelihood analysis for the Heston model.
//!
//! The crate covers the whole chain from path simulation to limit-experiment
//! verification:
//!
//! * [`model`]: parameter containers, regime classification, diffusion matrices.
//! * [`sim`]: full-truncation Euler paths, exact CIR transitions and the
//!   auxiliary processes that appear in the critical and supercritical limits.
//! * [`functionals`]: the path integrals the likelihood is built from.
//! * [`likelihood`]: exact log Radon–Nikodym derivatives between drifts and
//!   their quadratic `(Δ, J)` decomposition.
//! * [`limits`]: scaling matrices, stationary moments and limit-law samplers.
//! * [`score_tests`]: asymptotically optimal one-sided score tests and power.
//! * [`mle`]: closed-form drift MLE and the local minimax experiment.
//! * [`harness`]: replicate orchestration, two-sample distances and the
//!   empirical LAQ/LAN/LAMN checkers.

pub mod error;
pub mod functionals;
pub mod harness;
pub mod likelihood;
pub mod limits;
pub mod linalg;
pub mod mle;
pub mod model;
pub mod rng;
pub mod sim;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use model::{DiffusionMatrices, DriftParams, FixedCoeffs, Regime};
pub use rng::SeedSpec;
pub use sim::SamplePath;
