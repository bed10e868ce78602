//! Baseline estimators: Schur-complement imputation (SMC) and zero fill
//! (Pre-train). Both consume the same aggregated matrix as the main
//! estimator so comparisons are like-for-like.

use nalgebra::DMatrix;

use crate::aggregate::aggregate;
use crate::complete::{complete_aggregated, finalize, pipeline, Execution, PairRule};
use crate::error::BeltError;
use crate::impute::{partition_pair, PairPartition};
use crate::model::{AggregatedMatrix, CompletionResult, SourceId, SourceObservation};
use crate::noise::estimate_noise;
use crate::parallel::dispatch;
use crate::tolerances::PINV_REL_CUTOFF;
use crate::Result;

/// Estimates the missing block over `(V_s \ V_k) x (V_k \ V_s)` as
/// `W[s\k, s∩k] · W[s∩k, s∩k]^+ · W[s∩k, k\s]`, with a truncated
/// pseudo-inverse keeping at most `r` singular values and dropping any below
/// `PINV_REL_CUTOFF * sigma_1`.
pub fn smc_impute(
    agg: &AggregatedMatrix,
    s: SourceId,
    k: SourceId,
    r: usize,
) -> Result<DMatrix<f64>> {
    let m = agg.num_sources();
    if s >= m || k >= m || s == k {
        return Err(BeltError::validation(format!(
            "source pair ({s}, {k}) invalid for {m} sources"
        )));
    }
    let part = partition_pair(agg, s, k);
    if part.s_only.is_empty() || part.k_only.is_empty() {
        return Ok(DMatrix::zeros(part.s_only.len(), part.k_only.len()));
    }
    if part.shared.is_empty() {
        return Err(BeltError::precondition(format!(
            "sources {s} and {k} have an empty overlap; nothing to invert"
        )));
    }
    schur_block(agg, &part, r)
}

pub(crate) fn schur_block(
    agg: &AggregatedMatrix,
    part: &PairPartition,
    r: usize,
) -> Result<DMatrix<f64>> {
    let left = cross_extract(agg, &part.s_only, &part.shared);
    let overlap = cross_extract(agg, &part.shared, &part.shared);
    let right = cross_extract(agg, &part.shared, &part.k_only);
    let pinv = truncated_pinv(&overlap, r)?;
    Ok(left * pinv * right)
}

/// Rank-truncated Moore-Penrose pseudo-inverse via SVD.
fn truncated_pinv(m: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| {
            BeltError::numerical(format!(
                "SVD did not converge for {}x{} overlap block",
                m.nrows(),
                m.ncols()
            ))
        })?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let cutoff = PINV_REL_CUTOFF * smax;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| {
        sigma[b]
            .partial_cmp(&sigma[a])
            .expect("finite singular values")
            .then(a.cmp(&b))
    });
    let mut pinv = DMatrix::<f64>::zeros(m.ncols(), m.nrows());
    for &idx in order.iter().take(r) {
        if sigma[idx] <= cutoff || sigma[idx] == 0.0 {
            break;
        }
        let vi = v_t.row(idx).transpose();
        let ui = u.column(idx);
        pinv += vi * ui.transpose() / sigma[idx];
    }
    Ok(pinv)
}

/// Zero-fill baseline: keeps the aggregated matrix as-is (missing blocks
/// stay zero) and applies the final rank-r factorization.
pub fn zero_impute(agg: &AggregatedMatrix, r: usize) -> Result<CompletionResult> {
    finalize(agg.matrix().clone(), agg, r, Vec::new())
}

/// Full SMC run on raw sources, sharing the aggregation and conflict
/// resolution of the main pipeline.
pub fn smc_complete(sources: &[SourceObservation], r: usize) -> Result<CompletionResult> {
    smc_complete_with(sources, r, Execution::default())
}

pub fn smc_complete_with(
    sources: &[SourceObservation],
    r: usize,
    exec: Execution,
) -> Result<CompletionResult> {
    pipeline(sources, r, PairRule::Schur, exec)
}

/// Full Pre-train run on raw sources: noise estimation, aggregation, zero
/// fill, rank-r factorization.
pub fn pretrain_complete(sources: &[SourceObservation], r: usize) -> Result<CompletionResult> {
    pretrain_complete_with(sources, r, Execution::default())
}

pub fn pretrain_complete_with(
    sources: &[SourceObservation],
    r: usize,
    exec: Execution,
) -> Result<CompletionResult> {
    if sources.is_empty() {
        return Err(BeltError::validation("no sources to complete".to_string()));
    }
    if r == 0 {
        return Err(BeltError::validation("rank must be at least 1".to_string()));
    }
    let noise = dispatch(exec, sources.iter().collect::<Vec<_>>(), |obs| {
        estimate_noise(obs, r)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let agg = aggregate(sources, &noise)?;
    zero_impute(&agg, r)
}

/// SMC applied to an existing aggregate (used by tests and the CLI).
pub fn smc_complete_aggregated(
    agg: &AggregatedMatrix,
    r: usize,
    exec: Execution,
) -> Result<CompletionResult> {
    complete_aggregated(agg, r, PairRule::Schur, exec)
}

fn cross_extract(agg: &AggregatedMatrix, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(rows.len(), cols.len());
    let m = agg.matrix();
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            out[(a, b)] = m[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::impute_pair;
    use crate::model::SourceObservation;
    use crate::sim::{gen_ground_truth, sample_source};
    use crate::spectral::{frobenius, top_r_eig};

    fn noiseless_agg() -> (crate::model::GroundTruth, AggregatedMatrix) {
        let gt = gen_ground_truth(60, 3, 77).unwrap();
        let v_s: Vec<usize> = (0..40).collect();
        let v_k: Vec<usize> = (20..60).collect();
        let a = SourceObservation::new(v_s.clone(), gt.submatrix(&v_s).unwrap(), "s").unwrap();
        let b = SourceObservation::new(v_k.clone(), gt.submatrix(&v_k).unwrap(), "k").unwrap();
        (gt.clone(), aggregate(&[a, b], &[0.0, 0.0]).unwrap())
    }

    #[test]
    fn noiseless_smc_matches_truth_and_belt() {
        let (gt, agg) = noiseless_agg();
        let smc = smc_impute(&agg, 0, 1, 3).unwrap();
        let belt = impute_pair(&agg, 0, 1, 3).unwrap();
        let w = gt.full_matrix();
        let mut truth = DMatrix::<f64>::zeros(20, 20);
        for a in 0..20 {
            for b in 0..20 {
                truth[(a, b)] = w[(a, 40 + b)];
            }
        }
        let rel_truth = frobenius(&(&smc - &truth)) / frobenius(&truth);
        assert!(rel_truth <= 1e-6, "SMC error vs truth {rel_truth:.3e}");
        let rel_belt = frobenius(&(&smc - &belt)) / frobenius(&truth);
        assert!(rel_belt <= 1e-6, "SMC vs BELT gap {rel_belt:.3e}");
    }

    #[test]
    fn identity_overlap_is_plain_triple_product() {
        // Synthetic aggregate: blocks [A | I | C] with identity overlap.
        let k = 6;
        let mut matrix = DMatrix::<f64>::zeros(3 * k, 3 * k);
        let mut rng_state = 1u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for i in 0..k {
            for j in 0..k {
                let a = next();
                matrix[(i, k + j)] = a;
                matrix[(k + j, i)] = a;
                let c = next();
                matrix[(k + i, 2 * k + j)] = c;
                matrix[(2 * k + j, k + i)] = c;
                matrix[(k + i, k + j)] = if i == j { 1.0 } else { 0.0 };
            }
        }
        let v_s: Vec<usize> = (0..2 * k).collect();
        let v_k: Vec<usize> = (k..3 * k).collect();
        let a_blk = {
            let mut m = DMatrix::<f64>::zeros(2 * k, 2 * k);
            for (ai, &i) in v_s.iter().enumerate() {
                for (aj, &j) in v_s.iter().enumerate() {
                    m[(ai, aj)] = matrix[(i, j)];
                }
            }
            m
        };
        let b_blk = {
            let mut m = DMatrix::<f64>::zeros(2 * k, 2 * k);
            for (ai, &i) in v_k.iter().enumerate() {
                for (aj, &j) in v_k.iter().enumerate() {
                    m[(ai, aj)] = matrix[(i, j)];
                }
            }
            m
        };
        let sa = SourceObservation::new(v_s, a_blk, "a").unwrap();
        let sb = SourceObservation::new(v_k, b_blk, "b").unwrap();
        let agg = aggregate(&[sa, sb], &[0.1, 0.1]).unwrap();
        let block = smc_impute(&agg, 0, 1, k).unwrap();
        // A * I^+ * C = A * C
        let mut expect = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let mut acc = 0.0;
                for t in 0..k {
                    acc += matrix[(i, k + t)] * matrix[(k + t, 2 * k + j)];
                }
                expect[(i, j)] = acc;
            }
        }
        assert!(frobenius(&(&block - &expect)) <= 1e-10 * (1.0 + frobenius(&expect)));
    }

    #[test]
    fn empty_overlap_is_a_precondition_error() {
        let gt = gen_ground_truth(20, 2, 4).unwrap();
        let v_s: Vec<usize> = (0..10).collect();
        let v_k: Vec<usize> = (10..20).collect();
        let a = SourceObservation::new(v_s.clone(), gt.submatrix(&v_s).unwrap(), "a").unwrap();
        let b = SourceObservation::new(v_k.clone(), gt.submatrix(&v_k).unwrap(), "b").unwrap();
        let agg = aggregate(&[a, b], &[0.1, 0.1]).unwrap();
        assert!(matches!(
            smc_impute(&agg, 0, 1, 2),
            Err(BeltError::Precondition(_))
        ));
    }

    #[test]
    fn zero_impute_matches_direct_factorization() {
        let gt = gen_ground_truth(40, 3, 6).unwrap();
        let src = sample_source(&gt, 0.8, 0.05, 11).unwrap();
        let noise = crate::noise::estimate_noise(&src, 3).unwrap();
        let agg = aggregate(std::slice::from_ref(&src), &[noise]).unwrap();
        let result = zero_impute(&agg, 3).unwrap();
        let direct = top_r_eig(agg.matrix(), 3).unwrap();
        assert_eq!(result.factors().values(), direct.values());
        assert_eq!(result.imputed(), agg.matrix());
    }

    #[test]
    fn zero_impute_keeps_disjoint_sources_block_diagonal() {
        let gt = gen_ground_truth(20, 2, 4).unwrap();
        let v_s: Vec<usize> = (0..10).collect();
        let v_k: Vec<usize> = (10..20).collect();
        let a = SourceObservation::new(v_s.clone(), gt.submatrix(&v_s).unwrap(), "a").unwrap();
        let b = SourceObservation::new(v_k.clone(), gt.submatrix(&v_k).unwrap(), "b").unwrap();
        let agg = aggregate(&[a.clone(), b], &[0.1, 0.1]).unwrap();
        let result = zero_impute(&agg, 2).unwrap();
        for i in 0..10 {
            for j in 10..20 {
                assert_eq!(result.imputed()[(i, j)], 0.0);
            }
        }
        // observed entries are untouched
        for i in 0..10 {
            for j in i..10 {
                assert_eq!(result.imputed()[(i, j)], a.matrix()[(i, j)]);
            }
        }
    }
}
