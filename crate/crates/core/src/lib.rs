//! Discrete least-squares finite elements on uniform quadrilateral meshes.
//!
//! The crate builds the enriched stiffness matrix `B`, test Gram matrix `G`
//! and load `l` element by element, whitens them with the Cholesky factor of
//! `G`, and solves either the overdetermined system `min ‖B̃u − l̃‖₂` by QR or
//! its normal equation `B̃*B̃u = B̃*l̃` by Cholesky.

pub mod assembly;
pub mod basis;
pub mod element;
pub mod error;
pub mod formulation;
pub mod linalg;
pub mod mesh;
pub mod scalar;
pub mod solve;
pub mod study;

pub use error::{DlsError, Result};
pub use scalar::{RealScalar, Scalar, C32, C64};
