//! The completion pipeline: noise estimation, aggregation, pairwise
//! imputation with conflict resolution, and rank-r factorization.

use nalgebra::DMatrix;

use crate::aggregate::aggregate;
use crate::error::BeltError;
use crate::impute::{clamped_sqrt, cross_block, partition_pair, split_rows, PairPartition};
use crate::model::{
    AggregatedMatrix, CompletionResult, ImputationEvent, SourceId, SourceObservation,
};
use crate::noise::estimate_noise;
use crate::parallel::dispatch;
use crate::spectral::{scale_columns, top_r_eig, EigPair};
use crate::Result;

/// How data-parallel stages are scheduled. Both modes produce bit-identical
/// results; without the `parallel` feature, `Parallel` degrades to
/// sequential execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Which formula fills a pair's missing cross block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PairRule {
    /// Procrustes alignment of rank-r eigenspaces (Algorithm steps II(a-b)).
    Procrustes,
    /// Schur-complement product through the overlap (baseline).
    Schur,
}

impl PairRule {
    fn min_overlap(self, r: usize) -> usize {
        match self {
            PairRule::Procrustes => r,
            PairRule::Schur => 1,
        }
    }
}

/// Runs the full estimator on raw sources: per-source noise estimation,
/// inverse-variance aggregation, per-source rank-r spectral initialization,
/// pairwise imputation of every block unobserved by all sources (conflicts
/// resolved towards the pair with the smallest noise sum), exact
/// symmetrization, and a final rank-r eigendecomposition.
pub fn complete(sources: &[SourceObservation], r: usize) -> Result<CompletionResult> {
    complete_with(sources, r, Execution::default())
}

/// [`complete`] with explicit scheduling. Parallel and sequential execution
/// produce bit-identical results.
pub fn complete_with(
    sources: &[SourceObservation],
    r: usize,
    exec: Execution,
) -> Result<CompletionResult> {
    pipeline(sources, r, PairRule::Procrustes, exec)
}

/// Embeddings `X_hat = U_hat Sigma_hat^{1/2}` of a completion result;
/// `X_hat X_hat^T` reproduces the rank-r estimate.
pub fn embeddings_of(result: &CompletionResult) -> DMatrix<f64> {
    result.embeddings().clone()
}

pub(crate) fn pipeline(
    sources: &[SourceObservation],
    r: usize,
    rule: PairRule,
    exec: Execution,
) -> Result<CompletionResult> {
    if sources.is_empty() {
        return Err(BeltError::validation("no sources to complete".to_string()));
    }
    if r == 0 {
        return Err(BeltError::validation("rank must be at least 1".to_string()));
    }
    // Step I(a): per-source noise scales from the raw observations.
    let noise = dispatch(exec, sources.iter().collect::<Vec<_>>(), |obs| {
        estimate_noise(obs, r)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    // Step I(b): inverse-variance aggregation onto the union.
    let agg = aggregate(sources, &noise)?;
    complete_aggregated(&agg, r, rule, exec)
}

/// Steps II-III on an already aggregated matrix.
pub(crate) fn complete_aggregated(
    agg: &AggregatedMatrix,
    r: usize,
    rule: PairRule,
    exec: Execution,
) -> Result<CompletionResult> {
    let m = agg.num_sources();
    let n = agg.dim();

    // Classify the source pairs.
    let mut jobs: Vec<(SourceId, SourceId, PairPartition)> = Vec::new();
    let mut log: Vec<ImputationEvent> = Vec::new();
    for s in 0..m {
        for k in (s + 1)..m {
            let part = partition_pair(agg, s, k);
            if part.s_only.is_empty() || part.k_only.is_empty() {
                continue; // nothing to impute for this pair
            }
            if part.shared.len() < rule.min_overlap(r) {
                log.push(ImputationEvent::PairSkipped {
                    pair: (s, k),
                    overlap: part.shared.len(),
                    required: rule.min_overlap(r),
                });
                continue;
            }
            jobs.push((s, k, part));
        }
    }

    // Step II(a): spectral initialization of every source that participates
    // in at least one imputation (Procrustes rule only).
    let mut needs_eig = vec![false; m];
    if rule == PairRule::Procrustes {
        for (s, k, _) in &jobs {
            needs_eig[*s] = true;
            needs_eig[*k] = true;
        }
    }
    let eig_inputs: Vec<Option<SourceId>> = (0..m).map(|s| needs_eig[s].then_some(s)).collect();
    let source_eigs: Vec<Option<EigPair>> = dispatch(exec, eig_inputs, |slot| {
        slot.map(|s| top_r_eig(&agg.extract(agg.source_rows(s)), r))
            .transpose()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    // Step II(b): one cross block per pair.
    let blocks: Vec<(SourceId, SourceId, PairPartition, DMatrix<f64>)> =
        dispatch(exec, jobs, |(s, k, part)| {
            let block = match rule {
                PairRule::Procrustes => {
                    let eig_s = source_eigs[s].as_ref().expect("initialized");
                    let eig_k = source_eigs[k].as_ref().expect("initialized");
                    let k_bit = 1 << k;
                    let s_bit = 1 << s;
                    let (v_s1, v_s2) = split_rows(eig_s, agg.source_rows(s), |row| {
                        agg.row_mask(row) & k_bit == 0
                    });
                    let (v_k1, v_k2) = split_rows(eig_k, agg.source_rows(k), |row| {
                        agg.row_mask(row) & s_bit != 0
                    });
                    cross_block(&v_s1, &v_s2, eig_s.values(), &v_k1, &v_k2, eig_k.values())
                }
                PairRule::Schur => crate::baselines::schur_block(agg, &part, r),
            };
            block.map(|b| (s, k, part, b))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    // Conflict resolution: process pairs by ascending noise sum, ties by
    // lexicographic (s, k); only entries observed by no source are filled,
    // and each at most once.
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, ka, ..) = &blocks[a];
        let (sb, kb, ..) = &blocks[b];
        let na = agg.source_noise()[*sa] + agg.source_noise()[*ka];
        let nb = agg.source_noise()[*sb] + agg.source_noise()[*kb];
        na.partial_cmp(&nb)
            .expect("finite noise estimates")
            .then(sa.cmp(sb))
            .then(ka.cmp(kb))
    });

    let mut imputed = agg.matrix().clone();
    let mut claimed = vec![false; n * n];
    for &idx in &order {
        let (s, k, part, block) = &blocks[idx];
        let noise_sum = agg.source_noise()[*s] + agg.source_noise()[*k];
        let mut written = 0usize;
        let mut lost = 0usize;
        for (a, &i) in part.s_only.iter().enumerate() {
            for (b, &j) in part.k_only.iter().enumerate() {
                if agg.sources_observing(i, j) != 0 {
                    continue;
                }
                let (lo, hi) = (i.min(j), i.max(j));
                let slot = lo * n + hi;
                if claimed[slot] {
                    lost += 1;
                    continue;
                }
                claimed[slot] = true;
                let v = block[(a, b)];
                imputed[(i, j)] = v;
                imputed[(j, i)] = v;
                written += 1;
            }
        }
        log.push(ImputationEvent::BlockImputed {
            pair: (*s, *k),
            noise_sum,
            entries_written: written,
            entries_lost: lost,
        });
    }

    // Coverage: every unobserved entry must have been claimed by some pair.
    let mut uncovered: Vec<(usize, usize)> = Vec::new();
    let mut total = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if agg.sources_observing(i, j) == 0 && !claimed[i * n + j] {
                total += 1;
                if uncovered.len() < 32 {
                    uncovered.push((agg.global_index()[i], agg.global_index()[j]));
                }
            }
        }
    }
    if total > 0 {
        return Err(BeltError::Completion { uncovered, total });
    }

    finalize(imputed, agg, r, log)
}

/// Step III: rank-r factorization, eigenvalue clamping at zero, embeddings.
pub(crate) fn finalize(
    imputed: DMatrix<f64>,
    agg: &AggregatedMatrix,
    r: usize,
    log: Vec<ImputationEvent>,
) -> Result<CompletionResult> {
    let eig = top_r_eig(&imputed, r)?;
    let (vectors, raw_values) = eig.into_parts();
    let clamped: Vec<f64> = raw_values.iter().map(|&v| v.max(0.0)).collect();
    if clamped.iter().any(|&v| v == 0.0) {
        log::debug!(
            "final spectrum has {} nonpositive eigenvalues; clamped to zero",
            clamped.iter().filter(|&&v| v == 0.0).count()
        );
    }
    let factors = EigPair::new(vectors, clamped.clone())?;
    let sqrt: Vec<f64> = clamped.iter().map(|&v| v.sqrt()).collect();
    let embeddings = scale_columns(factors.vectors(), &sqrt);
    Ok(CompletionResult::from_parts(
        imputed,
        factors,
        embeddings,
        agg.source_noise().to_vec(),
        log,
        agg.global_index().to_vec(),
    ))
}

#[allow(unused)]
pub(crate) fn clamp_check(values: &[f64]) -> Result<Vec<f64>> {
    clamped_sqrt(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{gen_ground_truth, sample_source};
    use crate::spectral::{frobenius, symmetric_eigenvalues};

    fn split_cover(n: usize, size: usize) -> (Vec<usize>, Vec<usize>) {
        let v_s: Vec<usize> = (0..size).collect();
        let v_k: Vec<usize> = (n - size..n).collect();
        (v_s, v_k)
    }

    fn noiseless_sources(
        n: usize,
        r: usize,
        size: usize,
        seed: u64,
    ) -> (crate::model::GroundTruth, Vec<SourceObservation>) {
        let gt = gen_ground_truth(n, r, seed).unwrap();
        let (v_s, v_k) = split_cover(n, size);
        let a = SourceObservation::new(v_s.clone(), gt.submatrix(&v_s).unwrap(), "s").unwrap();
        let b = SourceObservation::new(v_k.clone(), gt.submatrix(&v_k).unwrap(), "k").unwrap();
        (gt, vec![a, b])
    }

    #[test]
    fn noiseless_two_source_recovery_is_exact() {
        let (gt, sources) = noiseless_sources(60, 3, 40, 3);
        let result = complete(&sources, 3).unwrap();
        let truth = gt.full_matrix();
        let rel = frobenius(&(result.imputed() - &truth)) / frobenius(&truth);
        assert!(rel <= 1e-8, "imputed error {rel:.3e}");
        let rel_r = frobenius(&(result.rank_r_estimate() - &truth)) / frobenius(&truth);
        assert!(rel_r <= 1e-8, "rank-r error {rel_r:.3e}");
    }

    #[test]
    fn single_source_is_best_rank_r_truncation() {
        let gt = gen_ground_truth(50, 4, 21).unwrap();
        let src = sample_source(&gt, 0.9, 0.05, 30).unwrap();
        let r = 4;
        let result = complete(std::slice::from_ref(&src), r).unwrap();
        // Eckart-Young: squared truncation error equals the squared tail.
        let w = src.matrix();
        let err = frobenius(&(w - result.rank_r_estimate()));
        let values = symmetric_eigenvalues(w).unwrap();
        let tail: f64 = values[r..].iter().map(|v| v * v).sum();
        assert!(
            (err * err - tail).abs() <= 1e-8 * (1.0 + tail),
            "truncation error {} vs tail {}",
            err * err,
            tail
        );
    }

    #[test]
    fn parallel_and_sequential_are_bit_identical() {
        let gt = gen_ground_truth(80, 4, 8).unwrap();
        let sources: Vec<SourceObservation> = (0..3)
            .map(|s| sample_source(&gt, 0.55, 0.08, 500 + s).unwrap())
            .collect();
        let a = complete_with(&sources, 4, Execution::Parallel).unwrap();
        let b = complete_with(&sources, 4, Execution::Sequential).unwrap();
        assert_eq!(a.imputed(), b.imputed());
        assert_eq!(a.factors().values(), b.factors().values());
        assert_eq!(a.embeddings(), b.embeddings());
    }

    #[test]
    fn imputed_matrix_is_exactly_symmetric() {
        let gt = gen_ground_truth(70, 3, 12).unwrap();
        let sources: Vec<SourceObservation> = (0..2)
            .map(|s| sample_source(&gt, 0.6, 0.1, 900 + s).unwrap())
            .collect();
        let result = complete(&sources, 3).unwrap();
        assert_eq!(result.imputed(), &result.imputed().transpose());
    }

    #[test]
    fn embeddings_reproduce_rank_r_estimate() {
        let gt = gen_ground_truth(60, 3, 14).unwrap();
        let sources: Vec<SourceObservation> = (0..2)
            .map(|s| sample_source(&gt, 0.6, 0.1, 700 + s).unwrap())
            .collect();
        let result = complete(&sources, 3).unwrap();
        let x = embeddings_of(&result);
        let recon = &x * x.transpose();
        let diff = frobenius(&(recon - result.rank_r_estimate()));
        assert!(diff <= 1e-8, "embedding reconstruction gap {diff:.3e}");
    }

    #[test]
    fn uncoverable_entries_error_lists_pairs() {
        // Overlap of 1 < r = 3: the only pair is skipped, leaving the cross
        // block unestimated.
        let gt = gen_ground_truth(30, 3, 2).unwrap();
        let v_s: Vec<usize> = (0..15).collect();
        let v_k: Vec<usize> = (14..30).collect();
        let a = SourceObservation::new(v_s.clone(), gt.submatrix(&v_s).unwrap(), "s").unwrap();
        let b = SourceObservation::new(v_k.clone(), gt.submatrix(&v_k).unwrap(), "k").unwrap();
        match complete(&[a, b], 3) {
            Err(BeltError::Completion { uncovered, total }) => {
                assert_eq!(total, 14 * 15);
                assert!(!uncovered.is_empty() && uncovered.len() <= 32);
                assert!(uncovered.contains(&(0, 29)) || total > 32);
            }
            other => panic!("expected completion error, got {other:?}"),
        }
    }

    #[test]
    fn conflict_resolution_prefers_smallest_noise_sum() {
        // Three sources; the cross block of (0, 2) is also estimable via
        // source 1. The log must show the lowest-noise pair claiming its
        // entries first.
        let gt = gen_ground_truth(90, 3, 31).unwrap();
        let sources: Vec<SourceObservation> = (0..3)
            .map(|s| sample_source(&gt, 0.55, 0.02 + 0.05 * s as f64, 40 + s).unwrap())
            .collect();
        let result = complete(&sources, 3).unwrap();
        let imputed_pairs: Vec<_> = result
            .imputation_log()
            .iter()
            .filter_map(|e| match e {
                ImputationEvent::BlockImputed { pair, noise_sum, .. } => Some((*pair, *noise_sum)),
                _ => None,
            })
            .collect();
        for w in imputed_pairs.windows(2) {
            assert!(w[0].1 <= w[1].1, "log not ordered by noise sum: {imputed_pairs:?}");
        }
    }
}
