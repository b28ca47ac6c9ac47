//! Time-varying mmWave MIMO-OFDM channel estimation.
//!
//! The crate simulates pilot acquisition over a hybrid analog/digital front
//! end, recovers per-path channel parameters (angles of arrival and
//! departure, delays, Doppler shifts, complex gains) with an ESPRIT-type
//! Vandermonde-constrained CP tensor decomposition, fits the same model with
//! a CP-ALS baseline, and evaluates both against the Cramer-Rao bound with a
//! reproducible Monte Carlo harness.

// validations use `!(x > 0.0)` deliberately so NaN fails them, and the
// multi-index odometer loops read better with explicit indices
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod acquisition;
pub mod als;
pub mod channel;
pub mod crb;
pub mod error;
pub mod esprit;
pub mod eval;
pub mod linalg;
pub mod tensor;

pub use error::{Error, Result};
