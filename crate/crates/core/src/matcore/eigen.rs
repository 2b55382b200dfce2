use super::{CMatrix, C64, Tolerances};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a real symmetric matrix stored
/// row-major. Returns eigenvalues and the column-major eigenvector matrix.
fn symmetric_jacobi(mut a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    // an entry is negligible once it is below rounding of its diagonal pair
    let floor = 1e-3 * f64::EPSILON * scale;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                if apq.abs() <= floor || apq.abs() <= f64::EPSILON * (app * aqq).abs().sqrt() {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            let evals = (0..n).map(|i| a[i * n + i]).collect();
            return Ok((evals, v));
        }
    }
    Err(Error::NoConvergence { sweeps: MAX_SWEEPS })
}

/// Real symmetric embedding `[[Re, -Im], [Im, Re]]` of a Hermitian matrix.
fn real_embedding(c: &CMatrix) -> Vec<f64> {
    let n = c.rows();
    let m = 2 * n;
    let mut out = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = c[(i, j)];
            out[i * m + j] = z.re;
            out[i * m + j + n] = -z.im;
            out[(i + n) * m + j] = z.im;
            out[(i + n) * m + j + n] = z.re;
        }
    }
    out
}

fn check_hermitian(c: &CMatrix, tol: f64) -> Result<()> {
    if !c.is_square() {
        return Err(Error::InvalidDims("expected a square matrix".into()));
    }
    let dev = c.hermitian_deviation();
    if dev > tol * c.frobenius_norm().max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigen(c: &CMatrix, tol: &Tolerances) -> Result<Vec<f64>> {
    check_hermitian(c, tol.structural)?;
    let n = c.rows();
    let (mut evals, _) = symmetric_jacobi(real_embedding(c), 2 * n)?;
    evals.sort_by(f64::total_cmp);
    // every eigenvalue appears twice in the embedding
    Ok(evals.into_iter().step_by(2).collect())
}

/// Principal Hermitian square root of a PSD matrix. Eigenvalues in
/// `[-tol.psd, 0)` are clamped to zero.
pub fn hermitian_sqrt(c: &CMatrix, tol: &Tolerances) -> Result<CMatrix> {
    check_hermitian(c, tol.structural)?;
    let n = c.rows();
    let m = 2 * n;
    let (evals, vecs) = symmetric_jacobi(real_embedding(c), m)?;
    let min = evals.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol.psd {
        return Err(Error::NotPsd(min));
    }
    let roots: Vec<f64> = evals.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let mut s = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for (k, &r) in roots.iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                re += vecs[i * m + k] * r * vecs[j * m + k];
                im += vecs[(i + n) * m + k] * r * vecs[j * m + k];
            }
            s[(i, j)] = C64::new(re, im);
        }
    }
    let sym = s.add(&s.adjoint())?.scale_real(0.5);
    Ok(sym)
}
