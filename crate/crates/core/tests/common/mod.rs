//! Oracles shared by integration test targets. They are written from the
//! mathematics alone and do not call into the crate's numerics.

use std::f64::consts::TAU;

use kernel_observer::grid::KernelMatrix;

/// Largest singular value of the circulant matrix `dr * C`, where `C` has
/// first row `row`, from a naive DFT. A circulant matrix is normal, so its
/// singular values are the magnitudes of its eigenvalues, which are the DFT
/// coefficients of the first row.
pub fn dft_opnorm(row: &[f64], dr: f64) -> f64 {
    let n = row.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &c) in row.iter().enumerate() {
                let phase = TAU * (k * j) as f64 / n as f64;
                re += c * phase.cos();
                im += c * phase.sin();
            }
            (re * re + im * im).sqrt() * dr
        })
        .fold(0.0, f64::max)
}

pub fn circulant(row: &[f64]) -> KernelMatrix {
    let n = row.len();
    KernelMatrix::from_fn(n, |i, j| row[(j + n - i) % n])
}
