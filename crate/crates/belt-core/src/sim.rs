//! Seeded generation of ground truth, sources, and noise, plus replicate
//! drivers for the benchmark settings.
//!
//! Randomness is ChaCha8 keyed by the configured 64-bit seed; every
//! replicate role (ground truth, each source, the test-vertex draw) owns its
//! own stream, so a `(config, seed)` pair fully determines every generated
//! matrix, and adding sources or replicates never perturbs earlier draws.

use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::baselines::{pretrain_complete_with, smc_complete_with};
use crate::complete::{complete_with, Execution};
use crate::error::BeltError;
use crate::metrics::{relative_errors, translate, MetricRow};
use crate::model::{CompletionResult, GroundTruth, SourceObservation};
use crate::parallel::dispatch;
use crate::tolerances::MAX_SOURCE_REDRAWS;
use crate::Result;

/// Estimator selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Belt,
    Smc,
    Pretrain,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Belt => "belt",
            Method::Smc => "smc",
            Method::Pretrain => "pretrain",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BeltError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "belt" => Ok(Method::Belt),
            "smc" => Ok(Method::Smc),
            "pretrain" => Ok(Method::Pretrain),
            other => Err(BeltError::validation(format!(
                "unknown method '{other}' (expected belt, smc, or pretrain)"
            ))),
        }
    }
}

/// Per-source noise rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaRule {
    /// `sigma_s = s * sigma` for source number `s = 1..m`.
    Scaled,
    /// `sigma_s = sigma` for every source.
    Constant,
}

/// Configuration of one simulation batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub setting: u8,
    pub n: usize,
    pub rank: usize,
    pub m: usize,
    pub p0: f64,
    pub sigma: f64,
    pub sigma_rule: SigmaRule,
    pub n_test: usize,
    pub seed: u64,
    pub replicates: usize,
}

impl SimConfig {
    /// A configuration with the setting's default noise rule (settings 1 and
    /// 3 scale noise per source, setting 2 keeps it constant).
    #[allow(clippy::too_many_arguments)]
    pub fn for_setting(
        setting: u8,
        n: usize,
        rank: usize,
        m: usize,
        p0: f64,
        sigma: f64,
        n_test: usize,
        seed: u64,
        replicates: usize,
    ) -> Result<Self> {
        let sigma_rule = match setting {
            1 | 3 => SigmaRule::Scaled,
            2 => SigmaRule::Constant,
            other => {
                return Err(BeltError::validation(format!(
                    "unknown setting {other} (expected 1, 2, or 3)"
                )))
            }
        };
        let config = SimConfig {
            setting,
            n,
            rank,
            m,
            p0,
            sigma,
            sigma_rule,
            n_test,
            seed,
            replicates,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.setting) {
            return Err(BeltError::validation(format!(
                "unknown setting {} (expected 1, 2, or 3)",
                self.setting
            )));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(BeltError::validation(format!(
                "sampling probability {} outside (0, 1)",
                self.p0
            )));
        }
        if self.rank == 0 || self.rank >= self.n {
            return Err(BeltError::validation(format!(
                "rank {} must satisfy 1 <= r < N = {}",
                self.rank, self.n
            )));
        }
        if self.m == 0 {
            return Err(BeltError::validation("at least one source required".to_string()));
        }
        if self.sigma < 0.0 {
            return Err(BeltError::validation(format!(
                "noise scale {} must be nonnegative",
                self.sigma
            )));
        }
        if self.replicates == 0 {
            return Err(BeltError::validation("at least one replicate required".to_string()));
        }
        if self.setting == 3 {
            if self.n_test == 0 {
                return Err(BeltError::validation(
                    "setting 3 requires n_test > 0".to_string(),
                ));
            }
            if self.m < 2 {
                return Err(BeltError::validation(
                    "setting 3 requires at least two sources".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Noise scale for 0-based source index `s`.
    pub fn sigma_for(&self, s: usize) -> f64 {
        match self.sigma_rule {
            SigmaRule::Scaled => (s + 1) as f64 * self.sigma,
            SigmaRule::Constant => self.sigma,
        }
    }
}

/// A failed replicate, recorded instead of aborting the batch.
#[derive(Debug, Clone)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub error: BeltError,
}

/// Outcome of a simulation batch: rows for successful replicates in
/// replicate order, failures recorded alongside.
#[derive(Debug, Clone)]
pub struct SimBatch {
    pub rows: Vec<MetricRow>,
    pub failures: Vec<ReplicateFailure>,
}

/// Precision cutoffs evaluated in setting 3.
pub const PRECISION_CUTOFFS: [usize; 4] = [1, 5, 10, 20];

// Stream roles within one replicate.
const ROLE_GROUND_TRUTH: u64 = 0;
const ROLE_TEST: u64 = 1;
const ROLE_SOURCE_BASE: u64 = 2;

fn stream_rng(seed: u64, replicate: usize, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replicate as u64) << 8) | role);
    rng
}

/// Draws a rank-r ground truth: eigenvalues i.i.d. `U(sqrt(N), 4 sqrt(N))`
/// sorted descending, singular space Haar-distributed via the sign-corrected
/// QR of a standard Gaussian matrix.
pub fn gen_ground_truth(n: usize, r: usize, seed: u64) -> Result<GroundTruth> {
    let mut rng = stream_rng(seed, 0, ROLE_GROUND_TRUTH);
    gen_ground_truth_rng(n, r, &mut rng)
}

pub(crate) fn gen_ground_truth_rng(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<GroundTruth> {
    if r == 0 || r > n {
        return Err(BeltError::validation(format!(
            "rank {r} must satisfy 1 <= r <= N = {n}"
        )));
    }
    let lo = (n as f64).sqrt();
    let dist = Uniform::new(lo, 4.0 * lo)
        .map_err(|e| BeltError::validation(format!("eigenvalue distribution: {e}")))?;
    let mut eigenvalues: Vec<f64> = (0..r).map(|_| dist.sample(rng)).collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite draws"));

    let gauss = DMatrix::<f64>::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gauss.qr();
    let diag_signs: Vec<f64> = (0..r)
        .map(|j| if qr.r()[(j, j)] < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let mut q = qr.q();
    for (j, &sign) in diag_signs.iter().enumerate() {
        if sign < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    GroundTruth::new(q, eigenvalues)
}

/// Samples one source: each entity enters `V_s` independently with
/// probability `p`, the observed matrix is `W*[V_s, V_s]` plus symmetric
/// Gaussian noise (i.i.d. `N(0, sigma^2)` on the upper triangle including
/// the diagonal, mirrored below). Draws smaller than the rank are retried,
/// up to [`MAX_SOURCE_REDRAWS`](crate::tolerances::MAX_SOURCE_REDRAWS).
pub fn sample_source(gt: &GroundTruth, p: f64, sigma: f64, seed: u64) -> Result<SourceObservation> {
    let mut rng = stream_rng(seed, 0, ROLE_SOURCE_BASE);
    sample_source_rng(gt, p, sigma, &mut rng, "source")
}

pub(crate) fn sample_source_rng(
    gt: &GroundTruth,
    p: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
    label: &str,
) -> Result<SourceObservation> {
    let indices = draw_index_set(gt.dimension(), gt.rank(), p, rng, label)?;
    let mut matrix = gt.submatrix(&indices)?;
    add_symmetric_noise(&mut matrix, sigma, rng);
    SourceObservation::new(indices, matrix, label)
}

fn draw_index_set(
    n: usize,
    r: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
    label: &str,
) -> Result<Vec<usize>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(BeltError::validation(format!(
            "sampling probability {p} outside (0, 1)"
        )));
    }
    for attempt in 0..=MAX_SOURCE_REDRAWS {
        let indices: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < p).collect();
        if indices.len() >= r.max(1) {
            if attempt > 0 {
                log::debug!("{label}: accepted index set after {attempt} redraw(s)");
            }
            return Ok(indices);
        }
        log::debug!(
            "{label}: drew {} entities (need at least {}), resampling",
            indices.len(),
            r.max(1)
        );
    }
    Err(BeltError::generation(format!(
        "{label}: could not draw at least {r} entities in {MAX_SOURCE_REDRAWS} redraws \
         (N = {n}, p = {p})"
    )))
}

fn add_symmetric_noise(matrix: &mut DMatrix<f64>, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let n = matrix.nrows();
    for i in 0..n {
        for j in i..n {
            let e: f64 = rng.sample::<f64, _>(StandardNormal);
            matrix[(i, j)] += sigma * e;
            if i != j {
                matrix[(j, i)] = matrix[(i, j)];
            }
        }
    }
}

/// Runs one configured batch with the default scheduling.
pub fn run_setting(config: &SimConfig, method: Method) -> Result<SimBatch> {
    run_setting_with(config, method, Execution::default())
}

/// Runs one configured batch; replicates are processed concurrently but
/// joined in replicate order, so the output is deterministic regardless of
/// scheduling.
pub fn run_setting_with(config: &SimConfig, method: Method, exec: Execution) -> Result<SimBatch> {
    config.validate()?;
    let outcomes = dispatch(exec, (0..config.replicates).collect(), |rep| {
        (rep, run_replicate(config, method, rep, exec))
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(error) => {
                log::debug!("replicate {rep} failed: {error}");
                failures.push(ReplicateFailure { replicate: rep, error });
            }
        }
    }
    Ok(SimBatch { rows, failures })
}

fn run_estimator(
    method: Method,
    sources: &[SourceObservation],
    r: usize,
    exec: Execution,
) -> Result<CompletionResult> {
    match method {
        Method::Belt => complete_with(sources, r, exec),
        Method::Smc => smc_complete_with(sources, r, exec),
        Method::Pretrain => pretrain_complete_with(sources, r, exec),
    }
}

fn run_replicate(
    config: &SimConfig,
    method: Method,
    rep: usize,
    exec: Execution,
) -> Result<MetricRow> {
    let start = Instant::now();
    let mut gt_rng = stream_rng(config.seed, rep, ROLE_GROUND_TRUTH);
    let gt = gen_ground_truth_rng(config.n, config.rank, &mut gt_rng)?;

    let (result, precision_at, original_ids) = if config.setting == 3 {
        run_translation_replicate(config, method, rep, &gt, exec)?
    } else {
        let sources = replicate_sources(config, rep, &gt)?;
        let result = run_estimator(method, &sources, config.rank, exec)?;
        let originals = result.global_index().to_vec();
        (result, std::collections::BTreeMap::new(), originals)
    };

    let truth = gt.submatrix(&original_ids)?;
    let estimate = result.rank_r_estimate();
    let (err_f, err_2) = relative_errors(&estimate, &truth)?;

    Ok(MetricRow {
        setting: config.setting,
        method,
        n: config.n,
        rank: config.rank,
        m: config.m,
        p0: config.p0,
        sigma: config.sigma,
        replicate: rep,
        seed: config.seed,
        err_f,
        err_2,
        precision_at,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Draws one replicate's sources for settings 1-2; each source owns its own
/// stream, so the first `m - 1` sources are unchanged when `m` grows.
pub(crate) fn replicate_sources(
    config: &SimConfig,
    rep: usize,
    gt: &GroundTruth,
) -> Result<Vec<SourceObservation>> {
    (0..config.m)
        .map(|s| {
            let mut rng = stream_rng(config.seed, rep, ROLE_SOURCE_BASE + s as u64);
            sample_source_rng(
                gt,
                config.p0,
                config.sigma_for(s),
                &mut rng,
                &format!("source-{s}"),
            )
        })
        .collect()
}

/// Synthetic global id of the copy of test vertex `t` owned by source `s`.
fn test_copy_id(config: &SimConfig, s: usize, t: usize) -> usize {
    config.n + s * config.n_test + t
}

type TranslationOutcome = (
    CompletionResult,
    std::collections::BTreeMap<usize, f64>,
    Vec<usize>,
);

fn run_translation_replicate(
    config: &SimConfig,
    method: Method,
    rep: usize,
    gt: &GroundTruth,
    exec: Execution,
) -> Result<TranslationOutcome> {
    // Source index sets first (their streams are independent of m), then
    // the test vertices from everything left unobserved.
    let mut source_rngs: Vec<ChaCha8Rng> = (0..config.m)
        .map(|s| stream_rng(config.seed, rep, ROLE_SOURCE_BASE + s as u64))
        .collect();
    let mut index_sets: Vec<Vec<usize>> = Vec::with_capacity(config.m);
    for (s, rng) in source_rngs.iter_mut().enumerate() {
        index_sets.push(draw_index_set(
            config.n,
            config.rank,
            config.p0,
            rng,
            &format!("source-{s}"),
        )?);
    }
    let mut observed = vec![false; config.n];
    for set in &index_sets {
        for &i in set {
            observed[i] = true;
        }
    }
    let unobserved: Vec<usize> = (0..config.n).filter(|&i| !observed[i]).collect();
    if unobserved.len() < config.n_test {
        return Err(BeltError::generation(format!(
            "only {} unobserved vertices available for {} test vertices",
            unobserved.len(),
            config.n_test
        )));
    }
    let mut test_rng = stream_rng(config.seed, rep, ROLE_TEST);
    let mut pool = unobserved;
    for i in 0..config.n_test {
        let j = test_rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut test_vertices: Vec<usize> = pool[..config.n_test].to_vec();
    test_vertices.sort_unstable();

    // Each source observes its own vertices plus a private copy of every
    // test vertex; copies are distinct entities across sources.
    let mut sources = Vec::with_capacity(config.m);
    for (s, rng) in source_rngs.iter_mut().enumerate() {
        let mut gids: Vec<usize> = index_sets[s].clone();
        let mut originals: Vec<usize> = index_sets[s].clone();
        for (t, &v) in test_vertices.iter().enumerate() {
            gids.push(test_copy_id(config, s, t));
            originals.push(v);
        }
        // gids are already sorted: real ids < n <= all synthetic ids, and
        // synthetic ids grow with t.
        let mut matrix = gt.submatrix(&originals)?;
        add_symmetric_noise(&mut matrix, config.sigma_for(s), rng);
        sources.push(SourceObservation::new(gids, matrix, format!("source-{s}"))?);
    }

    let result = run_estimator(method, &sources, config.rank, exec)?;

    // Translate each test copy in source s >= 1 against source 0's vertex
    // set; the correct answer is source 0's copy of the same vertex.
    let row_of = |gid: usize| -> Result<usize> {
        result
            .global_index()
            .binary_search(&gid)
            .map_err(|_| BeltError::validation(format!("global id {gid} missing from completion")))
    };
    let mut candidates: Vec<usize> = Vec::with_capacity(index_sets[0].len() + config.n_test);
    for &v in &index_sets[0] {
        candidates.push(row_of(v)?);
    }
    for t in 0..config.n_test {
        candidates.push(row_of(test_copy_id(config, 0, t))?);
    }

    let kmax = *PRECISION_CUTOFFS.iter().max().expect("nonempty");
    let mut hits: std::collections::BTreeMap<usize, usize> =
        PRECISION_CUTOFFS.iter().map(|&k| (k, 0)).collect();
    let embeddings = result.embeddings();
    for s in 1..config.m {
        for t in 0..config.n_test {
            let query = row_of(test_copy_id(config, s, t))?;
            let target = row_of(test_copy_id(config, 0, t))?;
            let ranked = translate(embeddings, query, &candidates, kmax, -1.0)?;
            if let Some(rank) = ranked.iter().position(|m| m.candidate == target) {
                for &k in &PRECISION_CUTOFFS {
                    if rank < k {
                        *hits.get_mut(&k).expect("cutoff present") += 1;
                    }
                }
            }
        }
    }
    let total = (config.m - 1) * config.n_test;
    let precision_at = hits
        .into_iter()
        .map(|(k, h)| (k, h as f64 / total as f64))
        .collect();

    // Population vertex behind every completion row: synthetic copies map
    // back to their test vertex, which duplicates rows in the truth matrix.
    let original_ids: Vec<usize> = result
        .global_index()
        .iter()
        .map(|&gid| {
            if gid < config.n {
                gid
            } else {
                test_vertices[(gid - config.n) % config.n_test]
            }
        })
        .collect();

    Ok((result, precision_at, original_ids))
}
