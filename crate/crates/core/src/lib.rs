//! Joint unitary triangularizations of several matrices and the MIMO
//! common-message multicast schemes built on them.
//!
//! * [`matcore`]: dense complex matrices, QR / RQ / SVD / Hermitian square root.
//! * [`decomp`]: geometric mean decomposition, two-matrix JET and the
//!   K-GMD to (K+1)-JET lift.
//! * [`exact2`]: exact joint GMD of two real 2×2 unit-determinant matrices.
//! * [`spacetime`]: block-extended (space-time) joint GMD for any number of matrices.
//! * [`multicast`]: channel augmentation, scheme design, precoding, SIC simulation.
//! * [`rateless`]: channel builders and closed forms for the Gaussian rateless problem.
//! * [`cli`]: the `netmod` command-line front-end.

pub mod cli;
pub mod decomp;
pub mod error;
pub mod exact2;
pub mod matcore;
pub mod multicast;
pub mod random;
pub mod rateless;
pub mod spacetime;

pub use error::{Error, Result};
pub use matcore::{CMatrix, Tolerances, C64};
