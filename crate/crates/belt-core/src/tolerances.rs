//! Numerical tolerances and algorithm thresholds, in one place.
//!
//! Machine-precision bounds are stated relative to the scale of the matrix
//! they apply to; thresholds controlling algorithm branches are absolute.

/// Maximum relative asymmetry `max|A - A^T| / max|A|` accepted by symmetric
/// routines before the input is rejected.
pub const SYMMETRY_REL_TOL: f64 = 1e-8;

/// Orthonormality defect `max|V^T V - I|` allowed for eigenvector blocks and
/// orthogonal maps.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Allowed deviation of `|det|` from 1 for orthogonal maps.
pub const DETERMINANT_TOL: f64 = 1e-8;

/// Orthonormality defect accepted when validating a caller-supplied basis
/// (looser than the bound we guarantee on our own output).
pub const BASIS_INPUT_TOL: f64 = 1e-8;

/// Per-pair eigen residual `|S v - lambda v|` relative to the spectral scale
/// of `S` guaranteed by `top_r_eig`.
pub const EIG_RESIDUAL_REL_TOL: f64 = 1e-8;

/// Relative floor applied to top-`r` eigenvalues before taking square roots:
/// values below `CLAMP_REL_FLOOR * lambda_max` are raised to that floor.
pub const CLAMP_REL_FLOOR: f64 = 1e-12;

/// Substitute for an exactly-zero noise estimate so that inverse-variance
/// weights stay finite; a noiseless source then receives essentially all
/// weight.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Singular values below `PINV_REL_CUTOFF * sigma_1` are treated as zero in
/// the truncated pseudo-inverse used by the Schur-complement baseline.
pub const PINV_REL_CUTOFF: f64 = 1e-10;

/// Smallest singular-value ratio of the Procrustes input below which a
/// rank-deficiency warning is emitted.
pub const PROCRUSTES_WARN_RATIO: f64 = 1e-10;

/// Matrices of dimension at most this always use the dense eigensolver; the
/// Lanczos path only engages above it.
pub const DENSE_EIG_CUTOFF: usize = 256;

/// Relative Ritz-residual target for accepting a Lanczos eigenpair. Tighter
/// than `EIG_RESIDUAL_REL_TOL` so the iterative path agrees with the dense
/// oracle well inside the contract bound.
pub const LANCZOS_REL_TOL: f64 = 1e-11;

/// Maximum replicate redraws before `sample_source` gives up on producing an
/// index set of at least `r` entities.
pub const MAX_SOURCE_REDRAWS: usize = 100;
