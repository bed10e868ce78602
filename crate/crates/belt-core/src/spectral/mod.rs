//! Dense linear-algebra primitives: top-r symmetric eigendecomposition, the
//! orthogonal Procrustes map, rank selection by cumulative eigenvalue
//! percentage, and spectral diagnostics (coherence, condition number).
//!
//! The dense symmetric eigensolver is the reference path. Matrices larger
//! than [`tolerances::DENSE_EIG_CUTOFF`] are first attempted with a Lanczos
//! iteration (see [`lanczos`]); any pair that fails its residual check falls
//! back to the dense solver, so the contract `|S v - lambda v| <=
//! EIG_RESIDUAL_REL_TOL * |S|` holds on every path. All routines are pure
//! functions of their inputs and deterministic bit-for-bit.

mod lanczos;

use nalgebra::{DMatrix, DVector};

use crate::error::BeltError;
use crate::tolerances;
use crate::Result;

/// Eigenvectors and eigenvalues of the top-r spectrum of a symmetric matrix.
///
/// Columns of `vectors` are orthonormal, `values` is sorted descending, and
/// each column obeys the sign convention that its largest-magnitude entry
/// (ties broken by lowest row index) is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

impl EigPair {
    /// Builds a pair after applying the sign convention and checking the
    /// orthonormality and ordering invariants.
    pub fn new(mut vectors: DMatrix<f64>, values: Vec<f64>) -> Result<Self> {
        if vectors.ncols() != values.len() {
            return Err(BeltError::validation(format!(
                "eigenvector count {} does not match eigenvalue count {}",
                vectors.ncols(),
                values.len()
            )));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(BeltError::validation(
                "eigenvalues must be sorted in descending order".to_string(),
            ));
        }
        apply_sign_convention(&mut vectors);
        let defect = orthonormality_defect(&vectors);
        if defect > tolerances::ORTHONORMALITY_TOL {
            return Err(BeltError::validation(format!(
                "eigenvector columns are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(EigPair { vectors, values })
    }

    /// The n-by-r orthonormal eigenvector block.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Eigenvalues in descending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of eigenpairs held.
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// Reassembles `V diag(values) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = scale_columns(&self.vectors, &self.values);
        &scaled * self.vectors.transpose()
    }

    pub(crate) fn into_parts(self) -> (DMatrix<f64>, Vec<f64>) {
        (self.vectors, self.values)
    }
}

/// An r-by-r real orthogonal matrix, e.g. the Procrustes alignment map.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    matrix: DMatrix<f64>,
}

impl OrthogonalMap {
    /// Wraps a matrix after checking orthogonality and `|det| = 1`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(BeltError::validation(format!(
                "orthogonal map must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = orthonormality_defect(&matrix);
        if defect > tolerances::ORTHONORMALITY_TOL {
            return Err(BeltError::validation(format!(
                "map is not orthogonal (defect {defect:.3e})"
            )));
        }
        let det = matrix.determinant();
        if (det.abs() - 1.0).abs() > tolerances::DETERMINANT_TOL {
            return Err(BeltError::validation(format!(
                "map determinant {det:.6} is not of unit magnitude"
            )));
        }
        Ok(OrthogonalMap { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Returns the `r` algebraically largest eigenvalues of a symmetric matrix
/// together with their eigenvectors.
///
/// Selection is by algebraic value, not magnitude: the population matrix is
/// positive semi-definite, so the signal occupies the top of the spectrum and
/// noise-induced negative eigenvalues must never be selected.
pub fn top_r_eig(s: &DMatrix<f64>, r: usize) -> Result<EigPair> {
    let n = check_symmetric(s, "top_r_eig")?;
    if r == 0 || r > n {
        return Err(BeltError::validation(format!(
            "requested rank {r} outside 1..={n}"
        )));
    }
    let t = symmetrize(s);
    let use_dense = n <= tolerances::DENSE_EIG_CUTOFF || lanczos::basis_cap(r) >= n;
    if !use_dense {
        if let Some((vectors, values)) = lanczos::top_r(&t, r) {
            return EigPair::new(vectors, values);
        }
        log::debug!("lanczos did not converge for {n}x{n}, rank {r}; using dense solver");
    }
    let (vectors, values) = dense_sym_eig(&t)?;
    let top_vectors = vectors.columns(0, r).into_owned();
    EigPair::new(top_vectors, values[..r].to_vec())
}

/// Full spectrum of a symmetric matrix, eigenvalues descending.
pub fn symmetric_eigenvalues(s: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(s, "symmetric_eigenvalues")?;
    let (_, values) = dense_sym_eig(&symmetrize(s))?;
    Ok(values)
}

/// The orthogonal polar factor `G(C) = H Z^T` where `H Omega Z^T` is the
/// singular value decomposition of `C`.
///
/// This is the closed-form solution of the orthogonal Procrustes problem:
/// `G(A^T B)` minimises `|A R - B|_F` over orthogonal `R`. A rank-deficient
/// input only triggers a warning; the map from a deterministic SVD is still
/// returned.
pub fn procrustes_map(c: &DMatrix<f64>) -> Result<OrthogonalMap> {
    if c.nrows() != c.ncols() {
        return Err(BeltError::validation(format!(
            "procrustes input must be square, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    let svd = c
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| {
            BeltError::numerical(format!("SVD did not converge for {}x{} matrix", c.nrows(), c.ncols()))
        })?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin < tolerances::PROCRUSTES_WARN_RATIO * smax {
        log::warn!(
            "procrustes input is near rank-deficient (sigma_min/sigma_max = {:.3e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        );
    }
    let h = svd.u.as_ref().expect("u requested");
    let z_t = svd.v_t.as_ref().expect("v_t requested");
    OrthogonalMap::new(h * z_t)
}

/// Smallest `r` such that the first `r` eigenvalues hold at least `threshold`
/// of the total eigenvalue mass. Negative inputs are clamped to zero before
/// cumulation; a zero total yields the full list length.
pub fn select_rank(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if eigenvalues.is_empty() {
        return Err(BeltError::validation("empty eigenvalue list".to_string()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(BeltError::validation(format!(
            "threshold {threshold} outside (0, 1]"
        )));
    }
    let clamped: Vec<f64> = eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Ok(eigenvalues.len());
    }
    let mut cumulative = 0.0;
    for (i, v) in clamped.iter().enumerate() {
        cumulative += v;
        if cumulative / total >= threshold {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Coherence `(n/r) * max_i sum_j U(i,j)^2` of an orthonormal-column basis.
pub fn coherence(u: &DMatrix<f64>) -> Result<f64> {
    let (n, r) = (u.nrows(), u.ncols());
    if r == 0 || n < r {
        return Err(BeltError::validation(format!(
            "basis must be n x r with n >= r >= 1, got {n}x{r}"
        )));
    }
    let defect = orthonormality_defect(u);
    if defect > tolerances::BASIS_INPUT_TOL {
        return Err(BeltError::validation(format!(
            "basis columns are not orthonormal (defect {defect:.3e})"
        )));
    }
    let max_row_sq = (0..n)
        .map(|i| u.row(i).iter().map(|x| x * x).sum::<f64>())
        .fold(0.0_f64, f64::max);
    Ok(n as f64 / r as f64 * max_row_sq)
}

/// Condition number `lambda_1 / lambda_r` of a descending positive spectrum.
pub fn condition_number(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(BeltError::validation("empty eigenvalue list".to_string()));
    }
    if values.windows(2).any(|w| w[0] < w[1]) {
        return Err(BeltError::validation(
            "eigenvalues must be sorted in descending order".to_string(),
        ));
    }
    let last = *values.last().expect("nonempty");
    if last <= 0.0 {
        return Err(BeltError::validation(format!(
            "trailing eigenvalue {last} is not positive; spectrum is effectively rank-deficient"
        )));
    }
    Ok(values[0] / last)
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
pub fn spectral_norm_sym(s: &DMatrix<f64>) -> Result<f64> {
    let n = check_symmetric(s, "spectral_norm_sym")?;
    if n == 0 {
        return Ok(0.0);
    }
    let t = symmetrize(s);
    if t.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    if n > tolerances::DENSE_EIG_CUTOFF {
        let hi = lanczos::top_r(&t, 1);
        let lo = lanczos::top_r(&(-&t), 1);
        if let (Some((_, top)), Some((_, bottom))) = (hi, lo) {
            return Ok(top[0].abs().max(bottom[0].abs()));
        }
    }
    let (_, values) = dense_sym_eig(&t)?;
    Ok(values
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs())))
}

/// Scales the columns of `m` by `factors` entrywise.
pub(crate) fn scale_columns(m: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, &f) in factors.iter().enumerate() {
        out.column_mut(j).scale_mut(f);
    }
    out
}

/// `max |A - A^T| <= SYMMETRY_REL_TOL * max |A|`, returning the dimension.
fn check_symmetric(s: &DMatrix<f64>, op: &str) -> Result<usize> {
    let n = s.nrows();
    if n != s.ncols() {
        return Err(BeltError::validation(format!(
            "{op}: matrix must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let scale = s.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if worst > tolerances::SYMMETRY_REL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(BeltError::validation(format!(
            "{op}: matrix is not symmetric (asymmetry {worst:.3e}, scale {scale:.3e})"
        )));
    }
    Ok(n)
}

/// `(S + S^T) / 2`; a bitwise no-op for exactly symmetric input.
fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let mut t = s.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
    t
}

/// Full dense symmetric eigendecomposition, sorted by descending eigenvalue.
fn dense_sym_eig(t: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = t.nrows();
    let eig = t
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| {
            BeltError::numerical(format!("symmetric eigensolver did not converge for {n}x{n} matrix"))
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).copy_from(&eig.eigenvectors.column(src));
        values.push(eig.eigenvalues[src]);
    }
    Ok((vectors, values))
}

/// Fixes each column's sign so that its largest-magnitude entry (lowest row
/// index on ties) is nonnegative.
fn apply_sign_convention(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best_idx = 0;
        let mut best_abs = 0.0_f64;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best_idx = i;
            }
        }
        if col[best_idx] < 0.0 {
            col.neg_mut();
        }
    }
}

/// `max |V^T V - I|`.
pub(crate) fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let gram = v.transpose() * v;
    let r = gram.nrows();
    let mut worst = 0.0_f64;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Frobenius norm helper used by several pipeline stages.
pub(crate) fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[allow(unused)]
pub(crate) fn dvector_from(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}
