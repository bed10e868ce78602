//! Data model: population ground truth, per-source observations, the
//! aggregated matrix, and completion results.

use nalgebra::DMatrix;

use crate::error::BeltError;
use crate::spectral::{self, EigPair};
use crate::tolerances;
use crate::Result;

/// Sources are addressed by their position in the input list.
pub type SourceId = usize;

/// Membership bitmask over sources; bit `s` set means source `s` observes
/// the row (or, for an entry, both of its indices).
pub type SourceMask = u32;

/// Largest number of sources representable in a [`SourceMask`].
pub const MAX_SOURCES: usize = 32;

/// The population pair `(U*, Sigma*)` defining `W* = U* Sigma* U*^T`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    singular_space: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl GroundTruth {
    /// Validates orthonormal columns and a strictly positive descending
    /// spectrum.
    pub fn new(singular_space: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        if singular_space.ncols() != eigenvalues.len() {
            return Err(BeltError::validation(format!(
                "basis has {} columns but {} eigenvalues given",
                singular_space.ncols(),
                eigenvalues.len()
            )));
        }
        if eigenvalues.is_empty() || singular_space.nrows() < eigenvalues.len() {
            return Err(BeltError::validation(
                "ground truth requires 1 <= r <= N".to_string(),
            ));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(BeltError::validation(
                "eigenvalues must be sorted in descending order".to_string(),
            ));
        }
        if eigenvalues.iter().any(|&v| v <= 0.0) {
            return Err(BeltError::validation(
                "eigenvalues must be strictly positive".to_string(),
            ));
        }
        let defect = spectral::orthonormality_defect(&singular_space);
        if defect > tolerances::BASIS_INPUT_TOL {
            return Err(BeltError::validation(format!(
                "singular space is not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(GroundTruth {
            singular_space,
            eigenvalues,
        })
    }

    /// Population size `N`.
    pub fn dimension(&self) -> usize {
        self.singular_space.nrows()
    }

    /// Rank `r` of the population matrix.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The `N x r` orthonormal eigenbasis `U*`.
    pub fn singular_space(&self) -> &DMatrix<f64> {
        &self.singular_space
    }

    /// Descending positive eigenvalues of `W*`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The principal submatrix `W*[idx, idx]`, assembled from the factors.
    /// Exactly symmetric: the upper triangle is mirrored below.
    pub fn submatrix(&self, idx: &[usize]) -> Result<DMatrix<f64>> {
        let n = self.dimension();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(BeltError::validation(format!(
                "index {bad} out of range for population size {n}"
            )));
        }
        let rows = self.singular_space.select_rows(idx.iter());
        let scaled = spectral::scale_columns(&rows, &self.eigenvalues);
        let mut w = &scaled * rows.transpose();
        for i in 0..w.nrows() {
            for j in (i + 1)..w.ncols() {
                w[(j, i)] = w[(i, j)];
            }
        }
        Ok(w)
    }

    /// The full `N x N` population matrix; avoid for large `N`.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.dimension()).collect();
        self.submatrix(&idx).expect("indices in range")
    }
}

/// One source's sampled index set and its noisy principal submatrix.
#[derive(Debug, Clone)]
pub struct SourceObservation {
    indices: Vec<usize>,
    matrix: DMatrix<f64>,
    label: String,
}

impl SourceObservation {
    /// Validates strictly increasing indices, a matching square matrix, and
    /// symmetry within tolerance; the stored matrix is exactly symmetrized.
    pub fn new(indices: Vec<usize>, matrix: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BeltError::validation(format!(
                "source {label}: indices must be strictly increasing"
            )));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(BeltError::validation(format!(
                "source {label}: matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() != indices.len() {
            return Err(BeltError::validation(format!(
                "source {label}: matrix dimension {} does not match index count {}",
                matrix.nrows(),
                indices.len()
            )));
        }
        let scale = matrix.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
        let mut worst = 0.0_f64;
        let n = matrix.nrows();
        let mut sym = matrix;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((sym[(i, j)] - sym[(j, i)]).abs());
                let v = 0.5 * (sym[(i, j)] + sym[(j, i)]);
                sym[(i, j)] = v;
                sym[(j, i)] = v;
            }
        }
        if worst > tolerances::SYMMETRY_REL_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(BeltError::validation(format!(
                "source {label}: matrix is not symmetric (asymmetry {worst:.3e})"
            )));
        }
        Ok(SourceObservation {
            indices,
            matrix: sym,
            label,
        })
    }

    /// Global entity ids observed by this source, strictly increasing.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// The observed noisy principal submatrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of observed entities.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The aggregated matrix over the union of all source index sets, with a
/// per-row record of source membership and per-source noise estimates.
///
/// Entries observed by no source are exactly zero. An entry `(i, j)` is
/// observed by source `s` iff bit `s` is set in
/// `row_mask(i) & row_mask(j)`.
#[derive(Debug, Clone)]
pub struct AggregatedMatrix {
    matrix: DMatrix<f64>,
    global_index: Vec<usize>,
    row_masks: Vec<SourceMask>,
    source_rows: Vec<Vec<usize>>,
    source_noise: Vec<f64>,
}

impl AggregatedMatrix {
    pub(crate) fn from_parts(
        matrix: DMatrix<f64>,
        global_index: Vec<usize>,
        row_masks: Vec<SourceMask>,
        source_rows: Vec<Vec<usize>>,
        source_noise: Vec<f64>,
    ) -> Self {
        AggregatedMatrix {
            matrix,
            global_index,
            row_masks,
            source_rows,
            source_noise,
        }
    }

    /// The `n x n` aggregated matrix over the union index set.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Union size `n`.
    pub fn dim(&self) -> usize {
        self.global_index.len()
    }

    /// Number of sources aggregated.
    pub fn num_sources(&self) -> usize {
        self.source_rows.len()
    }

    /// Map from local row to global entity id (sorted ascending).
    pub fn global_index(&self) -> &[usize] {
        &self.global_index
    }

    /// Mask of sources observing local row `i`.
    pub fn row_mask(&self, i: usize) -> SourceMask {
        self.row_masks[i]
    }

    /// Mask of sources observing entry `(i, j)`.
    pub fn sources_observing(&self, i: usize, j: usize) -> SourceMask {
        self.row_masks[i] & self.row_masks[j]
    }

    /// Local row positions (ascending) belonging to source `s`.
    pub fn source_rows(&self, s: SourceId) -> &[usize] {
        &self.source_rows[s]
    }

    /// Per-source noise estimates used for the aggregation weights.
    pub fn source_noise(&self) -> &[f64] {
        &self.source_noise
    }

    /// The principal submatrix of the aggregate on the given local rows.
    pub(crate) fn extract(&self, rows: &[usize]) -> DMatrix<f64> {
        let k = rows.len();
        let mut out = DMatrix::<f64>::zeros(k, k);
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in rows.iter().enumerate() {
                out[(a, b)] = self.matrix[(i, j)];
            }
        }
        out
    }
}

/// Log entries recording what the imputation step did for each source pair.
#[derive(Debug, Clone, PartialEq)]
pub enum ImputationEvent {
    /// A pair's cross block was estimated; `entries_written` counts entries
    /// this pair actually filled after conflict resolution, and
    /// `entries_lost` counts entries a better pair had already claimed.
    BlockImputed {
        pair: (SourceId, SourceId),
        noise_sum: f64,
        entries_written: usize,
        entries_lost: usize,
    },
    /// A pair was skipped because its overlap is below the rank condition.
    PairSkipped {
        pair: (SourceId, SourceId),
        overlap: usize,
        required: usize,
    },
}

/// Output of the completion pipeline: the imputed matrix, its rank-r
/// factors, embeddings, noise estimates and the imputation log.
#[derive(Debug, Clone)]
pub struct CompletionResult {
    imputed: DMatrix<f64>,
    factors: EigPair,
    embeddings: DMatrix<f64>,
    noise_estimates: Vec<f64>,
    imputation_log: Vec<ImputationEvent>,
    global_index: Vec<usize>,
}

impl CompletionResult {
    pub(crate) fn from_parts(
        imputed: DMatrix<f64>,
        factors: EigPair,
        embeddings: DMatrix<f64>,
        noise_estimates: Vec<f64>,
        imputation_log: Vec<ImputationEvent>,
        global_index: Vec<usize>,
    ) -> Self {
        CompletionResult {
            imputed,
            factors,
            embeddings,
            noise_estimates,
            imputation_log,
            global_index,
        }
    }

    /// The fully imputed symmetric matrix (before rank-r truncation).
    pub fn imputed(&self) -> &DMatrix<f64> {
        &self.imputed
    }

    /// Rank-r factors `(U_hat, Sigma_hat)` of the imputed matrix, with
    /// eigenvalues clamped to be nonnegative.
    pub fn factors(&self) -> &EigPair {
        &self.factors
    }

    /// Embeddings `X_hat = U_hat Sigma_hat^{1/2}`.
    pub fn embeddings(&self) -> &DMatrix<f64> {
        &self.embeddings
    }

    /// The rank-r estimate `W_hat_r = U_hat Sigma_hat U_hat^T`.
    pub fn rank_r_estimate(&self) -> DMatrix<f64> {
        self.factors.reconstruct()
    }

    /// Per-source noise estimates from step I(a).
    pub fn noise_estimates(&self) -> &[f64] {
        &self.noise_estimates
    }

    pub fn imputation_log(&self) -> &[ImputationEvent] {
        &self.imputation_log
    }

    /// Map from embedding row to global entity id.
    pub fn global_index(&self) -> &[usize] {
        &self.global_index
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn source_observation_validates_structure() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(SourceObservation::new(vec![0, 1, 2], m.clone(), "ok").is_ok());
        assert!(SourceObservation::new(vec![0, 0, 2], m.clone(), "dup").is_err());
        assert!(SourceObservation::new(vec![2, 1, 0], m.clone(), "order").is_err());
        assert!(SourceObservation::new(vec![0, 1], m.clone(), "dim").is_err());
        let mut asym = m;
        asym[(0, 1)] = 0.5;
        assert!(SourceObservation::new(vec![0, 1, 2], asym, "asym").is_err());
    }

    #[test]
    fn source_observation_symmetrizes_small_noise() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = 1e-12;
        m[(1, 0)] = 3e-12;
        let obs = SourceObservation::new(vec![0, 1], m, "tiny").unwrap();
        assert_eq!(obs.matrix()[(0, 1)], obs.matrix()[(1, 0)]);
    }

    #[test]
    fn ground_truth_validates_spectrum() {
        let u = DMatrix::<f64>::identity(4, 2);
        assert!(GroundTruth::new(u.clone(), vec![3.0, 1.0]).is_ok());
        assert!(GroundTruth::new(u.clone(), vec![1.0, 3.0]).is_err());
        assert!(GroundTruth::new(u.clone(), vec![3.0, 0.0]).is_err());
        assert!(GroundTruth::new(u.clone(), vec![3.0]).is_err());
        let skew = DMatrix::<f64>::from_column_slice(4, 2, &[1.0; 8]);
        assert!(GroundTruth::new(skew, vec![3.0, 1.0]).is_err());
    }

    #[test]
    fn submatrix_assembles_from_factors() {
        let u = DMatrix::<f64>::identity(4, 2);
        let gt = GroundTruth::new(u, vec![3.0, 1.0]).unwrap();
        let w = gt.submatrix(&[0, 1]).unwrap();
        assert_eq!(w[(0, 0)], 3.0);
        assert_eq!(w[(1, 1)], 1.0);
        assert_eq!(w[(0, 1)], 0.0);
        assert!(gt.submatrix(&[4]).is_err());
    }
}
