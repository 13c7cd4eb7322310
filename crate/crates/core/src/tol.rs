//! Numerical tolerances shared by the kernels and the verification layer.
//!
//! Every threshold a check reports is one of these constants, so a report
//! can always name the tolerance it used.

/// Symmetry check on construction of a [`SymMatrix`](crate::linalg::SymMatrix),
/// relative to `max(1, |a_ij|)`.
pub const SYMMETRY: f64 = 1e-12;

/// Jacobi sweeps stop once every off-diagonal entry is below this fraction
/// of the Frobenius norm.
pub const JACOBI_OFF_DIAGONAL: f64 = 1e-12;

/// Hard cap on Jacobi sweeps. Convergence is quadratic; a handful suffice.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Orthonormality of eigenvector bases, `max |V^T V - I|`.
pub const ORTHONORMAL: f64 = 1e-10;

/// Smallest eigenvalue accepted as strictly positive for coupling matrices.
pub const POSITIVE_DEFINITE: f64 = 1e-9;

/// Eigenvalues of a Laplacian above this are treated as non-zero
/// (algebraic connectivity lookup).
pub const LAPLACIAN_ZERO: f64 = 1e-8;

/// Default slack added to strict gain inequalities.
pub const DEFAULT_SLACK: f64 = 1e-3;

/// Floor on the design-matrix scale when it is chosen automatically.
pub const MIN_DESIGN_SCALE: f64 = 1.0;

/// Sliding band multiplier: after convergence an error norm is expected to
/// stay below `SLIDING_BAND_FACTOR * gain * dt`.
pub const SLIDING_BAND_FACTOR: f64 = 5.0;

/// Relative convergence threshold, multiplied by the initial error norm.
pub const CONVERGENCE_RELATIVE: f64 = 1e-3;

/// Absolute floor for the convergence threshold.
pub const CONVERGENCE_FLOOR: f64 = 1e-6;

/// Absolute slack on the input-to-state envelope check.
pub const ISS_ENVELOPE: f64 = 1e-6;

/// Consensus distance required at the end of a consensus run.
pub const CONSENSUS_FINAL: f64 = 1e-2;

/// Message-form versus matrix-form innovation agreement.
pub const STRUCTURAL_IDENTITY: f64 = 1e-10;
