//! Per-source noise-scale estimation from the rank-r truncation residual.

use crate::error::BeltError;
use crate::model::SourceObservation;
use crate::spectral::{frobenius, top_r_eig};
use crate::Result;

/// Estimates a source's noise scale as
/// `sigma_hat = |V_s|^{-1} * |W^s - U_s Sigma_s U_s^T|_F`,
/// where `(U_s, Sigma_s)` is the rank-r eigendecomposition of `W^s`.
pub fn estimate_noise(obs: &SourceObservation, r: usize) -> Result<f64> {
    let n = obs.len();
    if r == 0 || r > n {
        return Err(BeltError::validation(format!(
            "source {}: rank {} outside 1..={} observed entities",
            obs.label(),
            r,
            n
        )));
    }
    let pair = top_r_eig(obs.matrix(), r)?;
    let residual = obs.matrix() - pair.reconstruct();
    Ok(frobenius(&residual) / n as f64)
}
