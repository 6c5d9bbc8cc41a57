//! Posterior Cramér-Rao bound (PCRB) toolkit for networked sensing.
//!
//! Multiple multi-antenna base stations illuminate a set of targets with
//! random (Gaussian-prior) positions, compress their echo signals to fit
//! capacity-limited fronthaul links, and a central unit fuses everything
//! to localize the targets. This crate evaluates the PCRB of that system
//! as a function of each BS's transmit covariance and compression-noise
//! covariance, and jointly optimizes both by alternating successive convex
//! approximation over semidefinite subproblems. A reduced-dimension
//! estimate-then-beamform-then-compress (EBC) pipeline is included for
//! large receive arrays.
//!
//! Module map:
//! - [`scenario`]: geometry, priors, array responses, Monte-Carlo samples
//! - [`fim`]: Fisher information blocks, chain rule, PCRB evaluation
//! - [`fronthaul`]: compression rate and its convex surrogates
//! - [`convex`]: declarative SDP builder + conic solver backend
//! - [`optimizer`]: the SCA / alternating-optimization loops
//! - [`ebc`]: AOA estimation, receive beamformers, reduced-dimension design
//! - [`oracle`]: independent brute-force verifiers (finite differences, grids)
//! - [`harness`]: benchmark schemes, parameter sweeps, verification suites

pub mod convex;
pub mod ebc;
pub mod fim;
pub mod fronthaul;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod oracle;
pub mod scenario;

pub use scenario::{Scenario, SampleSet};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Union of the per-module error types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] scenario::GeometryError),
    #[error(transparent)]
    Fim(#[from] fim::FimError),
    #[error(transparent)]
    Rate(#[from] fronthaul::RateError),
    #[error(transparent)]
    Solve(#[from] convex::SolveError),
    #[error(transparent)]
    Aoa(#[from] ebc::AoaError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
