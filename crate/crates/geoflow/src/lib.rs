//! Geodesic probability flows on exponential-family manifolds.
//!
//! The crate implements generative modelling along *e-geodesics*: paths that are
//! linear in the natural parameters of an exponential family. A path connects a
//! fixed prior to a data-dependent endpoint; the endpoint itself may evolve with
//! path time so that the interpolant never collapses onto a near-singular target
//! until the very end. On top of the paths sit closed-form divergence losses, an
//! analytic sample-space velocity field, a small shared-weight network with
//! handwritten reverse-mode gradients, and a progressive-refinement sampler.
//!
//! Module map:
//!
//! * [`manifold`] — isotropic Gaussian and Dirichlet families in natural
//!   coordinates: log-partition, densities, sampling, closed-form KL, Fisher
//!   information, and the special functions they need.
//! * [`geodesic`] — static and evolving path schedules, points and tangents
//!   along them, degenerate special cases, and singularity probes.
//! * [`flowfield`] — the induced sample-space velocity field and numerical
//!   verification of the continuity equation and the metric consistency law.
//! * [`objective`] — the per-block training losses induced by the paths,
//!   with analytic gradients.
//! * [`net`] — the shared-weight prediction network and its optimizer.
//! * [`pipeline`] — training loop and the progressive-refinement sampler.
//! * [`toybench`] — synthetic datasets and evaluation metrics.
//! * [`verify`] — self-contained numerical check suites (quadrature,
//!   Monte-Carlo, finite differences) driven by the CLI and the test suite.
//! * [`cli`] — the `geoflow` command-line interface.

pub mod cli;
pub mod flowfield;
pub mod geodesic;
pub mod manifold;
pub mod net;
pub mod objective;
pub mod pipeline;
pub mod toybench;
pub mod verify;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A mathematical precondition was violated (parameter out of domain).
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration is structurally invalid (shapes, modes, ranges).
    #[error("config error: {0}")]
    Config(String),
    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// (De)serialization failure.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for [`Error::Domain`].
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Convenience constructor for [`Error::Config`].
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
