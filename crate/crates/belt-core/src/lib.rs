//! Completion of low-rank symmetric matrices observed only through noisy,
//! block-wise-missing principal submatrices.
//!
//! Each of `m` sources observes a principal submatrix `W^s = W*[V_s, V_s] + E^s`
//! of an underlying rank-`r` positive semi-definite matrix `W*`, where the
//! index sets `V_s` are sampled independently. The estimator aligns the
//! rank-`r` eigenspaces of overlapping submatrices through an orthogonal
//! Procrustes map and fills each missing cross block from the aligned low-rank
//! factors, after combining repeated observations by inverse-variance
//! weighting. Baseline estimators (Schur-complement imputation and zero fill)
//! share the same data model for benchmarking.
//!
//! # Modules
//!
//! * [`spectral`] — dense/iterative symmetric eigendecomposition, the
//!   Procrustes map, rank selection, and spectral diagnostics.
//! * [`model`] — the data model: ground truth, source observations,
//!   aggregated matrices, completion results.
//! * [`noise`], [`aggregate`], [`impute`], [`complete`] — the estimator
//!   pipeline (weight estimation, aggregation, pairwise imputation, rank-`r`
//!   completion).
//! * [`baselines`] — Schur-complement (SMC) and zero-fill (Pre-train)
//!   estimators.
//! * [`sim`] — seeded generation of ground truth, sources and noise, plus the
//!   replicate drivers for the three benchmark settings.
//! * [`metrics`] — relative error norms, cosine translation, precision@k.
//!
//! # Determinism
//!
//! All randomness flows through ChaCha8 (`rand_chacha::ChaCha8Rng`), keyed by
//! a 64-bit seed plus a 64-bit stream id. Replicates and sources own disjoint
//! streams, so results are bit-identical across runs and independent of how
//! work is scheduled. With the `parallel` feature (on by default) replicates
//! and source pairs are processed on a rayon pool; the sequential fallback
//! produces bit-identical output.

pub mod aggregate;
pub mod baselines;
pub mod complete;
pub mod error;
pub mod impute;
pub mod metrics;
pub mod model;
pub mod noise;
pub(crate) mod parallel;
pub mod sim;
pub mod spectral;
pub mod tolerances;

pub use aggregate::aggregate;
pub use baselines::{smc_impute, zero_impute};
pub use complete::{complete, complete_with, embeddings_of, Execution};
pub use error::BeltError;
pub use impute::impute_pair;
pub use metrics::{precision_at_k, relative_errors, translate, MetricRow, TranslationMatch};
pub use model::{
    AggregatedMatrix, CompletionResult, GroundTruth, ImputationEvent, SourceObservation,
};
pub use noise::estimate_noise;
pub use sim::{gen_ground_truth, run_setting, sample_source, Method, SimBatch, SimConfig};
pub use spectral::{
    coherence, condition_number, procrustes_map, select_rank, top_r_eig, EigPair, OrthogonalMap,
};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, BeltError>;
