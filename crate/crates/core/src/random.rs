//! Random instance generators shared by the property tests, the acceptance
//! suite and the Monte-Carlo simulator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matcore::{qr_decompose, CMatrix, C64};

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let data = (0..rows * cols).map(|_| complex_gaussian(rng)).collect();
    CMatrix::new(rows, cols, data).expect("finite gaussian entries")
}

pub fn real_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    CMatrix::from_real(rows, cols, &data).expect("finite gaussian entries")
}

/// Haar-distributed unitary (QR of a Gaussian matrix with positive diagonal).
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    loop {
        let g = gaussian_matrix(rng, n, n);
        if let Ok((q, _)) = qr_decompose(&g, 1e-12) {
            return q;
        }
    }
}

/// Gaussian matrix rescaled to `|det| = 1`, rejecting badly conditioned draws.
pub fn unit_modulus_det_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    loop {
        let g = gaussian_matrix(rng, n, n);
        let d = g.determinant().expect("square").norm();
        if d > 1e-3 {
            return g.scale_real(d.powf(-1.0 / n as f64));
        }
    }
}

/// Real `n × n` matrix with determinant exactly `+1` up to rounding.
pub fn real_unit_det_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    loop {
        let mut g = real_gaussian_matrix(rng, n, n);
        let d = g.determinant().expect("square").re;
        if d.abs() < 1e-3 {
            continue;
        }
        if d < 0.0 {
            for j in 0..n {
                g[(0, j)] = -g[(0, j)];
            }
        }
        return g.scale_real(d.abs().powf(-1.0 / n as f64));
    }
}

/// Random Hermitian PSD matrix with the given trace.
pub fn covariance<R: Rng + ?Sized>(rng: &mut R, n: usize, trace: f64) -> CMatrix {
    let g = gaussian_matrix(rng, n, n);
    let c = g.adjoint_mul(&g).expect("square");
    let t = c.trace().re;
    let c = c.scale_real(trace / t);
    c.add(&c.adjoint()).expect("square").scale_real(0.5)
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
