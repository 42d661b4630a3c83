//! American put analysis in canonical heat coordinates.
//!
//! The problem is reduced to a one-parameter family of parabolic obstacle
//! problems; this crate computes the exercise boundary from that obstacle
//! problem, fits the large-time tail law, verifies the Laplace-domain
//! identities the boundary must satisfy, evaluates the asymptotic constants
//! of the boundary expansion, and cross-checks prices and boundaries
//! against an independent binomial tree in market coordinates.

pub mod asymptotics;
pub mod balayage;
pub mod canonical;
pub mod error;
pub mod lattice;
pub mod obstacle;
pub mod quad;
pub mod tail;

pub use canonical::{CanonicalParams, MarketParams};
pub use error::{Error, Result};
pub use obstacle::BoundaryCurve;
pub use tail::TailModel;
