//! Optimal transport map estimation through the semi-dual Kantorovich problem.
//!
//! A convex potential `φ` is fit by minimizing the empirical semi-dual
//! objective `Pₙφ + Q_Nφ*` over input-convex neural networks; the estimated
//! transport map is `∇φ`. Two estimators are provided: the original plug-in
//! estimator (conjugate taken over all of `ℝᵈ`) and the sieve estimator
//! (conjugate restricted to the ball `B(0, Mₙ)` with `Mₙ = maxᵢ ‖Xᵢ‖₂`).
//!
//! Module map:
//!
//! - [`icnn`]: network potential, forward pass and analytic gradients
//! - [`potential`]: the traits the solvers and trainer are generic over, plus
//!   an exact quadratic family used as a reference model
//! - [`conjugate`]: projected gradient ascent for `φ*` and a grid oracle
//! - [`optim`]: Adam and plain gradient descent
//! - [`trainer`]: mini-batch training on the semi-dual loss
//! - [`distributions`]: samplers, CDFs and ground-truth maps
//! - [`eval`]: Monte-Carlo losses, repetition harness, diagnostics

pub mod conjugate;
pub mod distributions;
mod error;
pub mod eval;
pub mod icnn;
pub mod optim;
pub mod potential;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};

pub use conjugate::{solve_conjugate, ConjugateConfig, ConjugateResult};
pub use distributions::{DistributionSpec, MapKind, MapSpec, SourceKind};
pub use eval::{EvalReport, ExperimentConfig, Profile};
pub use icnn::{IcnnArch, IcnnParams, ParamGradient};
pub use optim::{AdamHyper, AdamState};
pub use potential::{Potential, QuadraticPotential, TrainablePotential};
pub use trainer::{Estimator, TrainConfig, TrainReport};
