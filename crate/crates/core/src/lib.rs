//! Robust linear transceivers for multi-hop amplify-and-forward MIMO relay
//! chains with Gaussian channel-estimation errors.
//!
//! The crate designs the source precoder, the relay forwarding matrices and
//! the destination LMMSE equalizer in closed form (up to a scalar power
//! allocation), evaluates the exact MSE statistics of any design, and checks
//! designs against brute-force oracles and link-level Monte Carlo.
//!
//! Module map:
//!
//! - [`channel`]: correlated channel and estimation-error sampling
//! - [`mse`]: covariance recursion, MSE matrix, LMMSE equalizer, objectives
//! - [`design`]: closed-form transceiver structure and precoder recovery
//! - [`power`]: iterative water-filling and the grid oracle
//! - [`sim`]: QPSK bit-error-rate simulation
//! - [`oracle`]: general-purpose numeric optimizer used for certification
//! - [`verify`]: the built-in invariant corpus
//!
//! ```
//! use af_relay::{linalg, mse::{ChainModel, HopModel, Objective}, design};
//!
//! let hop = HopModel::new_perfect(linalg::from_real(2, 2, &[2.0, 0.0, 0.0, 1.0]), 1.0, 4.0).unwrap();
//! let chain = ChainModel::new(vec![hop], 2).unwrap();
//! let sol = design::design(&chain, Objective::SumMse).unwrap();
//! let powers: f64 = sol.lambda_f[0].iter().map(|f| f * f).sum();
//! assert!((powers - 4.0).abs() < 1e-9);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod design;
pub mod linalg;
pub mod mse;
pub mod oracle;
pub mod par;
pub mod power;
pub mod sim;
pub mod verify;

pub use design::StructuredSolution;
pub use mse::{ChainModel, HopModel, Objective, PrecoderSet};
pub use par::Execution;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(
        "closed-form structure unsupported ({context}); it requires the receive-side error \
         correlation Σ_k or the transmit-side error correlation Ψ_k of every hop to be \
         proportional to the identity"
    )]
    StructureUnsupported { context: String },
    #[error("infeasible power scaling: denominator {denominator:e} is not positive")]
    InfeasibleScaling { denominator: f64 },
    #[error("instance too large: {0}")]
    TooLarge(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
