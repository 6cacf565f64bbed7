//! Exact and asymptotic analysis of random k-ary constraint systems over
//! small domains.
//!
//! The library studies two constraint families on n variables with m = γn
//! constraints, each constraint touching k variables chosen uniformly at
//! random: linear equations modulo 3, and uniquely extendible constraints
//! over a four-element domain (any k-1 coordinates of a satisfying tuple
//! determine the last one). For both families it provides
//!
//! - exact integer/rational counting of constraint systems and of
//!   second-moment summands on small instances ([`exact`]),
//! - the variational upper-bound machinery that controls the second moment
//!   in the large-n limit ([`moment_mod3`], [`moment_ue`]), built on scalar
//!   generating functions and weight polynomials ([`genfn`]),
//! - a simulation stack: instance sampling, 2-core peeling, exact solvers,
//!   and threshold estimation ([`sim`]),
//! - serializable report types shared with the command line tool
//!   ([`report`]).

pub mod comb;
pub mod exact;
pub mod genfn;
pub mod moment_mod3;
pub mod moment_ue;
pub mod report;
pub mod sim;
pub mod util;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A requested exact computation exceeds its configured size guard.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    /// An iterative solve failed to reach its residual tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Scaled model parameters shared by the moment modules.
///
/// `s` is the unique positive solution of `Q(s) = k*gamma`, where
/// `Q(x) = x q'(x)/q(x)` and `q(x) = e^x - x - 1`. It exists iff
/// `k*gamma > 2` because `Q` increases from 2 to infinity on `(0, inf)`.
#[derive(Debug, Clone, Copy)]
pub struct Model {
    /// Constraint arity (number of variable slots per constraint).
    pub k: u32,
    /// Constraint density: m = gamma * n.
    pub gamma: f64,
    /// Root of Q(s) = k*gamma.
    pub s: f64,
    /// ln q(s), cached for the bound evaluations.
    pub ln_q_s: f64,
}

impl Model {
    /// Builds the model, solving `Q(s) = k*gamma`.
    ///
    /// Errors if `k*gamma <= 2 + 1e-9` (no root) or gamma is not finite
    /// and positive.
    pub fn new(k: u32, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
        }
        let kg = k as f64 * gamma;
        let s = genfn::q_ratio_inverse(kg)?;
        Ok(Model { k, gamma, s, ln_q_s: genfn::ln_q(s) })
    }

    /// k*gamma, the value of Q at `s`.
    pub fn kgamma(&self) -> f64 {
        self.k as f64 * self.gamma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_solves_q_ratio() {
        let m = Model::new(3, 0.9).unwrap();
        assert!((genfn::q_ratio(m.s) - 2.7).abs() < 1e-11);
        let m = Model::new(15, 0.9).unwrap();
        assert!((genfn::q_ratio(m.s) - 13.5).abs() < 1e-10);
    }

    #[test]
    fn model_rejects_subcritical_density() {
        assert!(Model::new(2, 0.9).is_err());
        assert!(Model::new(3, -1.0).is_err());
        assert!(Model::new(3, f64::NAN).is_err());
    }
}
