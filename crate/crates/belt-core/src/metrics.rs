//! Error metrics, cosine-similarity translation, and precision@k.

use std::collections::BTreeMap;
use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::BeltError;
use crate::sim::Method;
use crate::spectral::{frobenius, spectral_norm_sym};
use crate::tolerances::SYMMETRY_REL_TOL;
use crate::Result;

/// One ranked translation candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationMatch {
    pub candidate: usize,
    pub cosine: f64,
}

/// One experiment outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub setting: u8,
    pub method: Method,
    pub n: usize,
    pub rank: usize,
    pub m: usize,
    pub p0: f64,
    pub sigma: f64,
    pub replicate: usize,
    pub seed: u64,
    pub err_f: f64,
    pub err_2: f64,
    /// Precision at each evaluated cutoff k (empty for settings 1-2).
    pub precision_at: BTreeMap<usize, f64>,
    pub wall_ms: f64,
}

/// Relative Frobenius and spectral norm errors
/// `(|E - T|_F / |T|_F, |E - T|_2 / |T|_2)`.
pub fn relative_errors(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<(f64, f64)> {
    if estimate.shape() != truth.shape() {
        return Err(BeltError::validation(format!(
            "shape mismatch: estimate {:?} vs truth {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let denom_f = frobenius(truth);
    if denom_f <= 0.0 {
        return Err(BeltError::validation(
            "truth matrix has zero norm".to_string(),
        ));
    }
    let diff = estimate - truth;
    let err_f = frobenius(&diff) / denom_f;
    let err_2 = spectral_norm(&diff)? / spectral_norm(truth)?;
    Ok((err_f, err_2))
}

/// Largest singular value; symmetric matrices take the eigenvalue route,
/// anything else goes through the Gram matrix.
fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == m.ncols() {
        let scale = m.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
        let mut asym = 0.0_f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym <= SYMMETRY_REL_TOL * scale.max(f64::MIN_POSITIVE) {
            return spectral_norm_sym(m);
        }
    }
    let gram = m.transpose() * m;
    Ok(spectral_norm_sym(&gram)?.max(0.0).sqrt())
}

/// Ranks `candidates` by cosine similarity to the query row, descending,
/// ties broken by ascending candidate index; keeps at most `k` entries with
/// cosine at least `c`. Zero-norm rows are excluded with a warning.
pub fn translate(
    embeddings: &DMatrix<f64>,
    query: usize,
    candidates: &[usize],
    k: usize,
    c: f64,
) -> Result<Vec<TranslationMatch>> {
    let n = embeddings.nrows();
    if candidates.is_empty() {
        return Err(BeltError::validation("empty candidate set".to_string()));
    }
    if k == 0 {
        return Err(BeltError::validation("k must be at least 1".to_string()));
    }
    if !(-1.0..=1.0).contains(&c) {
        return Err(BeltError::validation(format!(
            "threshold {c} outside [-1, 1]"
        )));
    }
    if query >= n {
        return Err(BeltError::validation(format!(
            "query row {query} out of range for {n} embeddings"
        )));
    }
    if let Some(&bad) = candidates.iter().find(|&&i| i >= n) {
        return Err(BeltError::validation(format!(
            "candidate row {bad} out of range for {n} embeddings"
        )));
    }
    let q = embeddings.row(query);
    let qn = q.norm();
    if qn == 0.0 {
        log::warn!("query row {query} has zero norm; no translation possible");
        return Ok(Vec::new());
    }
    let mut matches: Vec<TranslationMatch> = Vec::with_capacity(candidates.len());
    for &cand in candidates {
        let row = embeddings.row(cand);
        let rn = row.norm();
        if rn == 0.0 {
            log::warn!("candidate row {cand} has zero norm; excluded");
            continue;
        }
        let cosine = q.dot(&row) / (qn * rn);
        if cosine >= c {
            matches.push(TranslationMatch { candidate: cand, cosine });
        }
    }
    matches.sort_by(|a, b| {
        b.cosine
            .partial_cmp(&a.cosine)
            .expect("finite cosines")
            .then(a.candidate.cmp(&b.candidate))
    });
    matches.truncate(k);
    Ok(matches)
}

/// Fraction of test pairs whose query ranks a true counterpart among the
/// top k candidates by cosine similarity (no threshold). When a query has
/// several true counterparts, finding any of them counts as a hit.
pub fn precision_at_k(
    embeddings: &DMatrix<f64>,
    test_pairs: &[(usize, usize)],
    candidates: &[usize],
    k: usize,
) -> Result<f64> {
    if test_pairs.is_empty() {
        return Err(BeltError::validation("empty test set".to_string()));
    }
    let mut truths: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(q, t) in test_pairs {
        truths.entry(q).or_default().push(t);
    }
    let mut hit: HashMap<usize, bool> = HashMap::new();
    for (&q, ts) in &truths {
        let top = translate(embeddings, q, candidates, k, -1.0)?;
        let ok = top.iter().any(|m| ts.contains(&m.candidate));
        hit.insert(q, ok);
    }
    let hits = test_pairs.iter().filter(|(q, _)| hit[q]).count();
    Ok(hits as f64 / test_pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(n: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let g = random_matrix(n, n, seed);
        (&g + g.transpose()) * 0.5
    }

    #[test]
    fn relative_error_reference_points() {
        let truth = random_symmetric(20, 3);
        let (f, s) = relative_errors(&truth, &truth).unwrap();
        assert_eq!((f, s), (0.0, 0.0));

        let zero = DMatrix::<f64>::zeros(20, 20);
        let (f, s) = relative_errors(&zero, &truth).unwrap();
        assert!((f - 1.0).abs() <= 1e-9 && (s - 1.0).abs() <= 1e-9);

        let double = &truth * 2.0;
        let (f, s) = relative_errors(&double, &truth).unwrap();
        assert!((f - 1.0).abs() <= 1e-12 && (s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn relative_error_rejects_bad_inputs() {
        let a = DMatrix::<f64>::zeros(3, 3);
        let b = DMatrix::<f64>::zeros(4, 4);
        assert!(relative_errors(&a, &b).is_err());
        assert!(relative_errors(&a, &a).is_err()); // zero-norm truth
    }

    #[test]
    fn translate_finds_identical_vector() {
        let mut e = random_matrix(10, 4, 5);
        let q = e.row(0).clone_owned();
        e.set_row(7, &q);
        let hits = translate(&e, 0, &[3, 5, 7, 9], 4, -1.0).unwrap();
        assert_eq!(hits[0].candidate, 7);
        assert!((hits[0].cosine - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn translate_threshold_filters_orthogonal_candidates() {
        let mut e = DMatrix::<f64>::zeros(3, 2);
        e[(0, 0)] = 1.0;
        e[(1, 1)] = 1.0;
        e[(2, 1)] = -1.0;
        let hits = translate(&e, 0, &[1, 2], 5, 0.5).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn translate_matches_brute_force_scan() {
        let e = random_matrix(100, 10, 77);
        let candidates: Vec<usize> = (1..100).collect();
        let got = translate(&e, 0, &candidates, 100, -1.0).unwrap();
        // oracle: all-pairs cosine scan with the same tie rule
        let q = e.row(0);
        let qn = q.norm();
        let mut expect: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&cand| {
                let row = e.row(cand);
                (cand, q.dot(&row) / (qn * row.norm()))
            })
            .collect();
        expect.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(got.len(), expect.len());
        for (g, (cand, cosine)) in got.iter().zip(expect) {
            assert_eq!(g.candidate, cand);
            assert!((g.cosine - cosine).abs() <= 1e-14);
        }
    }

    #[test]
    fn translate_skips_zero_norm_rows() {
        let mut e = random_matrix(5, 3, 9);
        e.set_row(2, &nalgebra::RowDVector::zeros(3));
        let hits = translate(&e, 0, &[1, 2, 3], 5, -1.0).unwrap();
        assert!(hits.iter().all(|m| m.candidate != 2));
        // zero-norm query: everything excluded
        let hits = translate(&e, 2, &[1, 3], 5, -1.0).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn translate_cosine_is_scale_invariant() {
        let e = random_matrix(6, 4, 11);
        let mut scaled = e.clone();
        scaled.row_mut(0).scale_mut(37.5);
        scaled.row_mut(3).scale_mut(0.004);
        let a = translate(&e, 0, &[1, 2, 3, 4, 5], 5, -1.0).unwrap();
        let b = translate(&scaled, 0, &[1, 2, 3, 4, 5], 5, -1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.candidate, y.candidate);
            assert!((x.cosine - y.cosine).abs() <= 1e-12);
        }
    }

    #[test]
    fn precision_reference_points() {
        let e = random_matrix(8, 3, 13);
        // every query IS its truth row
        let pairs: Vec<(usize, usize)> = (0..4).map(|i| (i, i)).collect();
        let candidates: Vec<usize> = (0..8).collect();
        for k in [1, 3, 8] {
            let p = precision_at_k(&e, &pairs, &candidates, k).unwrap();
            assert_eq!(p, 1.0);
        }
        // k = |candidates| always hits
        let pairs: Vec<(usize, usize)> = vec![(0, 7), (1, 6)];
        let p = precision_at_k(&e, &pairs, &candidates, candidates.len()).unwrap();
        assert_eq!(p, 1.0);
        assert!(precision_at_k(&e, &[], &candidates, 3).is_err());
    }

    #[test]
    fn precision_is_monotone_in_k() {
        let e = random_matrix(40, 5, 15);
        let pairs: Vec<(usize, usize)> = (0..10).map(|i| (i, 39 - i)).collect();
        let candidates: Vec<usize> = (10..40).collect();
        let mut prev = 0.0;
        for k in [1, 2, 5, 10, 20, 30] {
            let p = precision_at_k(&e, &pairs, &candidates, k).unwrap();
            assert!(p >= prev, "precision fell from {prev} to {p} at k={k}");
            prev = p;
        }
    }
}
