//! Numerical tolerances shared across the crate.
//!
//! Downstream invariants and tests cite these by name, so they live in one
//! place rather than scattered as literals.

/// Relative Frobenius reconstruction error allowed for an SVD.
pub const SVD_RECONSTRUCTION_TOL: f64 = 1e-9;
/// Column orthonormality tolerance for SVD factors.
pub const SVD_ORTHONORMALITY_TOL: f64 = 1e-9;
/// Maximum number of one-sided Jacobi sweeps before giving up.
pub const SVD_MAX_SWEEPS: usize = 80;

/// Relative asymmetry allowed before a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Agreement of `logdet_hermitian` with a cofactor-expansion determinant.
pub const LOGDET_TOL: f64 = 1e-9;
/// Max-entry residual of `m * inverse_hermitian(m) - I`.
pub const INVERSE_RESIDUAL_TOL: f64 = 1e-8;
/// Condition-number cap for `inverse_hermitian`.
pub const CONDITION_CAP: f64 = 1e13;

/// Relative eigenvalue floor below which `F_RF^H F_RF` counts as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Unit-norm tolerance for steering vectors.
pub const STEERING_NORM_TOL: f64 = 1e-12;

/// Per-subcarrier power constraint tolerance `| ||F_RF F_BB[k]||_F^2 - N_s P_t |`.
pub const POWER_TOL: f64 = 1e-9;
/// Modulus and phase tolerance when checking analog entries against the codebook.
pub const ENTRY_TOL: f64 = 1e-9;

/// Scale of the regulariser added to `F_BB F_BB^H`, relative to its trace.
pub const ALPHA_SCALE: f64 = 1e-8;

/// Relative rate change that ends the alternating loop.
pub const SOLVER_REL_TOL: f64 = 1e-3;
/// Outer-iteration cap for the alternating solvers.
pub const SOLVER_MAX_ITERS: usize = 10;
