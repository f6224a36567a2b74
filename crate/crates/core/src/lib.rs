//! Hierarchical projected Gaussian-process priors for regression and density
//! estimation with a random sparsity pattern `(a, b, q)`: a rescaling `a`, an
//! intrinsic dimension `b` and an orientation `q` drawn from the Haar measure
//! on the orthogonal group.
//!
//! The crate is organised bottom-up:
//!
//! * [`lingeom`]: orthogonal-group and subspace geometry (Haar sampling,
//!   principal angles, the three subspace losses, basis completion, nets).
//! * [`gp`]: squared-exponential process machinery and the projected process.
//! * [`model`]: statistical settings, the hierarchical prior and ground truths.
//! * [`metrics`]: Hellinger and L² distances over the unit ball.
//! * [`inference`]: Metropolis-within-Gibbs posterior sampling and summaries.
//! * [`theory`]: rate formulas, root solvers and assumption verifiers.
//! * [`experiment`]: desk-scale contraction experiments and their artefacts.
//!
//! Monte-Carlo loops and independent chains run on rayon when the `parallel`
//! feature is enabled (the default); results are bit-identical either way.

pub mod error;
pub mod experiment;
pub mod gp;
pub mod inference;
pub mod io;
pub mod lingeom;
pub mod metrics;
pub mod model;
pub mod par;
pub mod qmc;
pub mod stats;
pub mod svg;
pub mod theory;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
