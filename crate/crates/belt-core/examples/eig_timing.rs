//! Rough timing of the dense and iterative eigendecomposition paths at the
//! sizes the simulation settings produce. Run with `--release`.

use std::time::Instant;

use belt_core::{gen_ground_truth, sample_source, top_r_eig};

fn main() {
    for &(n, r, p, sigma) in &[
        (2000usize, 20usize, 0.12, 0.1),
        (2000, 20, 0.22, 0.1),
        (2000, 20, 0.32, 0.1),
        (2000, 20, 0.52, 0.1),
    ] {
        let gt = gen_ground_truth(n, r, 11).unwrap();
        let src = sample_source(&gt, p, sigma, 13).unwrap();
        let dim = src.len();
        let t0 = Instant::now();
        let pair = top_r_eig(src.matrix(), r).unwrap();
        let dt = t0.elapsed();
        println!(
            "n={dim:5}  r={r}  top_r_eig: {:8.1} ms  (lambda_1={:.2}, lambda_r={:.2})",
            dt.as_secs_f64() * 1e3,
            pair.values()[0],
            pair.values()[r - 1]
        );
        let t1 = Instant::now();
        let full = belt_core::spectral::symmetric_eigenvalues(src.matrix()).unwrap();
        let dt1 = t1.elapsed();
        println!(
            "            dense full eig: {:8.1} ms  (lambda_1={:.2})",
            dt1.as_secs_f64() * 1e3,
            full[0]
        );
    }
}
