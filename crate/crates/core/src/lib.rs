//! Error calculus for parametric statistical models.
//!
//! The crate turns a parametric model into an *error structure*: a prior
//! over the parameter space together with a squared-error field obtained
//! by inverting Fisher information. On top of that it provides
//!
//! - first-order propagation of errors and biases through functionals,
//! - images of structures under injective and non-injective changes of
//!   variables (exact branch sums and kernel-regression Monte Carlo),
//! - product structures for independent experiments,
//! - Jeffreys priors and their invariance checks,
//! - Monte Carlo validation of maximum-likelihood asymptotics against
//!   the information bounds the structures encode.
//!
//! All Monte Carlo entry points take an explicit 64-bit seed and derive
//! per-replication sub-streams from it, so every number the crate
//! produces is reproducible bit for bit, independent of thread count.

pub mod asymptotics;
pub mod branch;
pub mod domain;
pub mod error;
pub mod fisher;
pub mod jeffreys;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod rng;
pub mod special;
pub mod structure;
pub mod transforms;

pub use asymptotics::SimulationReport;
pub use branch::BranchMap;
pub use domain::ParameterDomain;
pub use error::{Error, Result};
pub use fisher::{FisherMatrix, FisherMethod};
pub use jeffreys::InvarianceReport;
pub use linalg::Matrix;
pub use model::{Model, Sample};
pub use structure::{ErrorStructure, Functional, PriorMeasure};
pub use transforms::{GammaMode, ImageStructure, KernelEstimate};
