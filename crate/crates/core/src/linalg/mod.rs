//! Dense kernels generic over the scalar field and precision.

pub mod cholesky;
pub mod cond;
pub mod dense;
pub mod qr;
pub mod saddle;

pub use cholesky::{
    cholesky, lower_adjoint_solve_vec, lower_solve_vec, solve_spd, triangular_solve, upper_solve,
    upper_solve_vec,
};
pub use cond::{condition_number, condition_number_hermitian, hermitian_eigenvalues, singular_values};
pub use dense::{relative_distance, DenseMatrix};
pub use qr::{householder_qr, least_squares_qr, QrFactors};
pub use saddle::saddle_solve;
