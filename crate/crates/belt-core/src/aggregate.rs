//! Inverse-variance aggregation of source observations onto the union index
//! set.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::BeltError;
use crate::model::{AggregatedMatrix, SourceMask, SourceObservation, MAX_SOURCES};
use crate::tolerances::SIGMA_FLOOR;
use crate::Result;

/// Combines the sources entrywise with weights
/// `alpha^s_ij = sigma_s^{-2} / sum_k 1(i,j in V_k) sigma_k^{-2}`
/// on every entry observed by at least one source; unobserved entries stay
/// exactly zero. Noise estimates of zero are floored at
/// [`SIGMA_FLOOR`](crate::tolerances::SIGMA_FLOOR) so a noiseless source
/// receives essentially all weight.
pub fn aggregate(sources: &[SourceObservation], noise: &[f64]) -> Result<AggregatedMatrix> {
    if sources.is_empty() {
        return Err(BeltError::validation("no sources to aggregate".to_string()));
    }
    if sources.len() > MAX_SOURCES {
        return Err(BeltError::validation(format!(
            "at most {MAX_SOURCES} sources supported, got {}",
            sources.len()
        )));
    }
    if noise.len() != sources.len() {
        return Err(BeltError::validation(format!(
            "{} noise estimates for {} sources",
            noise.len(),
            sources.len()
        )));
    }
    for (s, obs) in sources.iter().enumerate() {
        if obs.is_empty() {
            return Err(BeltError::validation(format!(
                "source {} ({}) has an empty index set",
                s,
                obs.label()
            )));
        }
        if !noise[s].is_finite() || noise[s] < 0.0 {
            return Err(BeltError::validation(format!(
                "source {} ({}) has invalid noise estimate {}",
                s,
                obs.label(),
                noise[s]
            )));
        }
    }

    let mut union: Vec<usize> = sources
        .iter()
        .flat_map(|s| s.indices().iter().copied())
        .collect();
    union.sort_unstable();
    union.dedup();
    let n = union.len();
    let pos: HashMap<usize, usize> = union.iter().enumerate().map(|(p, &g)| (g, p)).collect();

    let mut row_masks: Vec<SourceMask> = vec![0; n];
    let mut source_rows: Vec<Vec<usize>> = Vec::with_capacity(sources.len());
    for (s, obs) in sources.iter().enumerate() {
        let rows: Vec<usize> = obs.indices().iter().map(|g| pos[g]).collect();
        for &p in &rows {
            row_masks[p] |= 1 << s;
        }
        source_rows.push(rows);
    }

    let precision: Vec<f64> = noise
        .iter()
        .map(|&s| {
            let sigma = s.max(SIGMA_FLOOR);
            1.0 / (sigma * sigma)
        })
        .collect();

    // Accumulate weighted sums over the upper triangle, then normalize.
    // Single-observer entries are copied verbatim so a lone source
    // round-trips bit-exactly.
    let mut num = DMatrix::<f64>::zeros(n, n);
    let mut den = DMatrix::<f64>::zeros(n, n);
    let mut count = vec![0u32; n * n];
    let mut single = vec![0.0f64; n * n];
    for (s, obs) in sources.iter().enumerate() {
        let rows = &source_rows[s];
        let w = obs.matrix();
        let p = precision[s];
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in rows.iter().enumerate().skip(a) {
                let (lo, hi) = (i.min(j), i.max(j));
                num[(lo, hi)] += p * w[(a, b)];
                den[(lo, hi)] += p;
                count[lo * n + hi] += 1;
                single[lo * n + hi] = w[(a, b)];
            }
        }
    }

    let mut matrix = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c = count[i * n + j];
            let v = if c == 1 {
                single[i * n + j]
            } else if c > 1 {
                num[(i, j)] / den[(i, j)]
            } else {
                0.0
            };
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }

    Ok(AggregatedMatrix::from_parts(
        matrix,
        union,
        row_masks,
        source_rows,
        noise.to_vec(),
    ))
}

/// Normalized weights `(source, alpha)` applied at local entry `(i, j)`;
/// empty when the entry is unobserved. Weights sum to one otherwise.
pub fn weights_at(agg: &AggregatedMatrix, i: usize, j: usize) -> Vec<(usize, f64)> {
    let mask = agg.sources_observing(i, j);
    if mask == 0 {
        return Vec::new();
    }
    let mut total = 0.0;
    let mut raw = Vec::new();
    for s in 0..agg.num_sources() {
        if mask & (1 << s) != 0 {
            let sigma = agg.source_noise()[s].max(SIGMA_FLOOR);
            let p = 1.0 / (sigma * sigma);
            raw.push((s, p));
            total += p;
        }
    }
    raw.into_iter().map(|(s, p)| (s, p / total)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{gen_ground_truth, sample_source};

    fn two_sources() -> (SourceObservation, SourceObservation) {
        let gt = gen_ground_truth(40, 3, 9).unwrap();
        let a = sample_source(&gt, 0.6, 0.1, 100).unwrap();
        let b = sample_source(&gt, 0.6, 0.1, 200).unwrap();
        (a, b)
    }

    #[test]
    fn single_source_round_trips_exactly() {
        let gt = gen_ground_truth(25, 3, 1).unwrap();
        let src = sample_source(&gt, 0.7, 0.2, 7).unwrap();
        let agg = aggregate(std::slice::from_ref(&src), &[0.2]).unwrap();
        assert_eq!(agg.global_index(), src.indices());
        assert_eq!(agg.matrix(), src.matrix());
    }

    #[test]
    fn equal_noise_gives_half_weights() {
        let (a, b) = two_sources();
        let agg = aggregate(&[a.clone(), b.clone()], &[0.3, 0.3]).unwrap();
        let n = agg.dim();
        let mut checked = 0;
        for i in 0..n {
            for j in i..n {
                if agg.sources_observing(i, j) == 0b11 {
                    let w = weights_at(&agg, i, j);
                    assert_eq!(w.len(), 2);
                    assert_eq!(w[0].1, 0.5);
                    assert_eq!(w[1].1, 0.5);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0, "no doubly observed entries in fixture");
    }

    #[test]
    fn unequal_noise_weights_are_inverse_variance() {
        let (a, b) = two_sources();
        let agg = aggregate(&[a, b], &[1.0, 2.0]).unwrap();
        let n = agg.dim();
        for i in 0..n {
            for j in i..n {
                if agg.sources_observing(i, j) == 0b11 {
                    let w = weights_at(&agg, i, j);
                    assert!((w[0].1 - 0.8).abs() < 1e-15);
                    assert!((w[1].1 - 0.2).abs() < 1e-15);
                    return;
                }
            }
        }
        panic!("no doubly observed entry");
    }

    #[test]
    fn weights_sum_to_one_everywhere_observed() {
        let (a, b) = two_sources();
        let agg = aggregate(&[a, b], &[0.15, 0.45]).unwrap();
        let n = agg.dim();
        for i in 0..n {
            for j in 0..n {
                let w = weights_at(&agg, i, j);
                if agg.sources_observing(i, j) != 0 {
                    let total: f64 = w.iter().map(|(_, x)| x).sum();
                    assert!((total - 1.0).abs() <= 1e-12);
                } else {
                    assert!(w.is_empty());
                    assert_eq!(agg.matrix()[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn aggregated_matrix_is_exactly_symmetric() {
        let (a, b) = two_sources();
        let agg = aggregate(&[a, b], &[0.1, 0.2]).unwrap();
        assert_eq!(agg.matrix(), &agg.matrix().transpose());
    }

    #[test]
    fn rejects_empty_inputs() {
        assert!(aggregate(&[], &[]).is_err());
        let (a, _) = two_sources();
        assert!(aggregate(std::slice::from_ref(&a), &[]).is_err());
        assert!(aggregate(std::slice::from_ref(&a), &[f64::NAN]).is_err());
    }

    #[test]
    fn zero_noise_source_dominates() {
        let (a, b) = two_sources();
        let agg = aggregate(&[a, b], &[0.0, 0.5]).unwrap();
        let n = agg.dim();
        for i in 0..n {
            for j in i..n {
                if agg.sources_observing(i, j) == 0b11 {
                    let w = weights_at(&agg, i, j);
                    assert!(w[0].1 > 1.0 - 1e-12, "noiseless weight {}", w[0].1);
                    return;
                }
            }
        }
        panic!("no doubly observed entry");
    }
}
