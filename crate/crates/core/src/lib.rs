//! Channel estimation for beyond-diagonal RIS-assisted MIMO systems.
//!
//! The cascaded channel seen through a group-connected BD-RIS is a
//! Tucker-structured tensor built from the BS–RIS channel `G`, the RIS–UE
//! channel `H` and a sequence of block-diagonal scattering matrices. This
//! crate designs those training sequences, simulates the received pilots and
//! recovers the channels with three estimators:
//!
//! * [`estimators::estimate_ls`], a linear least-squares filter returning the
//!   per-group Kronecker channels;
//! * [`estimators::estimate_btkf`], which splits each Kronecker channel into
//!   its two factors via a rank-one approximation;
//! * [`estimators::estimate_btals`], an alternating least-squares fit that
//!   works with much shorter training.
//!
//! [`experiments`] runs seeded Monte-Carlo NMSE sweeps and writes CSV.

pub mod error;
pub mod tensor;
pub mod random;
pub mod design;
pub mod channel;
pub mod estimators;
pub mod experiments;

#[cfg(test)]
mod testutil;

pub use design::{Algorithm, DesignConfig, ThetaKind, TrainingDesign};
pub use error::{Error, Result};
pub use tensor::{ComplexMatrix, Tensor3};
