//! Pairwise imputation of a missing cross block through the orthogonal
//! Procrustes alignment of two overlapping rank-r eigenspaces.

use nalgebra::DMatrix;

use crate::error::BeltError;
use crate::model::{AggregatedMatrix, SourceId};
use crate::spectral::{procrustes_map, scale_columns, top_r_eig, EigPair};
use crate::tolerances::CLAMP_REL_FLOOR;
use crate::Result;

/// Row positions of a source pair inside the aggregated matrix, split into
/// the three blocks used by the imputation formula. Each list is ascending
/// in global index.
#[derive(Debug, Clone)]
pub(crate) struct PairPartition {
    pub s_only: Vec<usize>,
    pub shared: Vec<usize>,
    pub k_only: Vec<usize>,
}

pub(crate) fn partition_pair(agg: &AggregatedMatrix, s: SourceId, k: SourceId) -> PairPartition {
    let k_bit = 1 << k;
    let s_bit = 1 << s;
    let mut p = PairPartition {
        s_only: Vec::new(),
        shared: Vec::new(),
        k_only: Vec::new(),
    };
    for &row in agg.source_rows(s) {
        if agg.row_mask(row) & k_bit != 0 {
            p.shared.push(row);
        } else {
            p.s_only.push(row);
        }
    }
    for &row in agg.source_rows(k) {
        if agg.row_mask(row) & s_bit == 0 {
            p.k_only.push(row);
        }
    }
    p
}

/// Estimates the missing block over `(V_s \ V_k) x (V_k \ V_s)`.
///
/// Extracts `W_s = W_tilde[V_s, V_s]` (rows ordered `s\k` then `s∩k`) and
/// `W_k = W_tilde[V_k, V_k]` (rows ordered `s∩k` then `k\s`), takes their
/// rank-r eigendecompositions `V Sigma V^T`, and returns
///
/// ```text
/// V_s1 S_s^{1/2} G(S_s^{1/2} V_s2^T V_k1 S_k^{1/2}) S_k^{1/2} V_k2^T
/// ```
///
/// with eigenvalues floored at `CLAMP_REL_FLOOR * lambda_max` before the
/// square roots. Returns an empty block when either difference set is empty.
pub fn impute_pair(
    agg: &AggregatedMatrix,
    s: SourceId,
    k: SourceId,
    r: usize,
) -> Result<DMatrix<f64>> {
    check_pair(agg, s, k)?;
    let part = partition_pair(agg, s, k);
    if part.s_only.is_empty() || part.k_only.is_empty() {
        return Ok(DMatrix::zeros(part.s_only.len(), part.k_only.len()));
    }
    if part.shared.len() < r {
        return Err(BeltError::precondition(format!(
            "overlap |V_{s} ∩ V_{k}| = {} is smaller than the rank r = {r}",
            part.shared.len()
        )));
    }

    let mut rows_s = part.s_only.clone();
    rows_s.extend_from_slice(&part.shared);
    let mut rows_k = part.shared.clone();
    rows_k.extend_from_slice(&part.k_only);

    let eig_s = top_r_eig(&agg.extract(&rows_s), r)?;
    let eig_k = top_r_eig(&agg.extract(&rows_k), r)?;

    let boundary_s = part.s_only.len();
    let boundary_k = part.shared.len();
    cross_block(
        &eig_s.vectors().rows(0, boundary_s).into_owned(),
        &eig_s.vectors().rows(boundary_s, part.shared.len()).into_owned(),
        eig_s.values(),
        &eig_k.vectors().rows(0, boundary_k).into_owned(),
        &eig_k.vectors().rows(boundary_k, part.k_only.len()).into_owned(),
        eig_k.values(),
    )
}

/// The Procrustes-aligned product of two split rank-r factors (the shared
/// core of `impute_pair` and the completion pipeline).
pub(crate) fn cross_block(
    v_s1: &DMatrix<f64>,
    v_s2: &DMatrix<f64>,
    values_s: &[f64],
    v_k1: &DMatrix<f64>,
    v_k2: &DMatrix<f64>,
    values_k: &[f64],
) -> Result<DMatrix<f64>> {
    let sqrt_s = clamped_sqrt(values_s)?;
    let sqrt_k = clamped_sqrt(values_k)?;
    // C = S_s^{1/2} V_s2^T V_k1 S_k^{1/2}
    let mut c = v_s2.transpose() * v_k1;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            c[(i, j)] *= sqrt_s[i] * sqrt_k[j];
        }
    }
    let g = procrustes_map(&c)?;
    let left = scale_columns(v_s1, &sqrt_s);
    let right = scale_columns(v_k2, &sqrt_k);
    Ok(left * g.matrix() * right.transpose())
}

/// Square roots of the eigenvalues after flooring at
/// `CLAMP_REL_FLOOR * lambda_max`; errs when no positive eigenvalue exists
/// to anchor the floor.
pub(crate) fn clamped_sqrt(values: &[f64]) -> Result<Vec<f64>> {
    let lambda_max = values.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(BeltError::numerical(format!(
            "fewer than {} positive eigenvalues within clamping tolerance (largest is {lambda_max:.3e})",
            values.len()
        )));
    }
    let floor = CLAMP_REL_FLOOR * lambda_max;
    Ok(values.iter().map(|&v| v.max(floor).sqrt()).collect())
}

/// Splits the rows of a source's eigenvector block into the pair layout,
/// given positions of the source's rows and the set of shared rows.
pub(crate) fn split_rows(
    pair: &EigPair,
    source_rows: &[usize],
    in_first: impl Fn(usize) -> bool,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let first: Vec<usize> = (0..source_rows.len())
        .filter(|&a| in_first(source_rows[a]))
        .collect();
    let second: Vec<usize> = (0..source_rows.len())
        .filter(|&a| !in_first(source_rows[a]))
        .collect();
    (
        pair.vectors().select_rows(first.iter()),
        pair.vectors().select_rows(second.iter()),
    )
}

fn check_pair(agg: &AggregatedMatrix, s: SourceId, k: SourceId) -> Result<()> {
    let m = agg.num_sources();
    if s >= m || k >= m {
        return Err(BeltError::validation(format!(
            "source pair ({s}, {k}) out of range for {m} sources"
        )));
    }
    if s == k {
        return Err(BeltError::validation(format!(
            "source pair must name two distinct sources, got ({s}, {k})"
        )));
    }
    Ok(())
}
