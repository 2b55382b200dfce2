use super::{inner, phase, vec_norm, CMatrix, C64, ONE, ZERO};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// `A = U diag(sigma) V†` with `sigma` sorted in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let s = CMatrix::from_real_diag(&self.sigma);
        &(&self.u * &s) * &self.v.adjoint()
    }
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
pub fn svd(a: &CMatrix) -> Result<Svd> {
    if !a.is_square() {
        return Err(Error::InvalidDims("svd expects a square matrix".into()));
    }
    let n = a.cols();
    let mut cols: Vec<Vec<C64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<C64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { ONE } else { ZERO }).collect())
        .collect();

    let eps = 4.0 * f64::EPSILON;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = cols[q].iter().map(|z| z.norm_sqr()).sum();
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = inner(&cols[p], &cols[q]);
                let g = gamma.norm();
                if g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let ph = phase(gamma).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, ph, c, s);
                rotate(&mut vcols, p, q, ph, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<(usize, f64)> = cols.iter().map(|c| vec_norm(c)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let sigma_max = order.first().map_or(0.0, |x| x.1);

    let mut u_cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut v = CMatrix::zeros(n, n);
    for (k, &(j, s)) in order.iter().enumerate() {
        sigma.push(s);
        v.set_column(k, &vcols[j]);
        if s > f64::EPSILON * sigma_max * n as f64 && s > 0.0 {
            u_cols.push(cols[j].iter().map(|z| z / s).collect());
        }
    }
    complete_orthonormal(&mut u_cols, n);
    let u = CMatrix::from_columns(&u_cols)?;
    Ok(Svd { u, sigma, v })
}

fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, ph: C64, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let wp = &mut left[p];
    let wq = &mut right[0];
    for (a, b) in wp.iter_mut().zip(wq.iter_mut()) {
        let bq = *b * ph;
        let ap = *a;
        *a = ap * c - bq * s;
        *b = ap * s + bq * c;
    }
}

/// Extends a set of orthonormal vectors in `C^n` to a full basis by
/// Gram–Schmidt against the standard basis.
pub(crate) fn complete_orthonormal(basis: &mut Vec<Vec<C64>>, n: usize) {
    let mut e = 0;
    while basis.len() < n && e < n {
        let mut cand: Vec<C64> = (0..n).map(|i| if i == e { ONE } else { ZERO }).collect();
        for _ in 0..2 {
            for b in basis.iter() {
                let d = inner(b, &cand);
                for (c, bi) in cand.iter_mut().zip(b) {
                    *c -= d * bi;
                }
            }
        }
        let nrm = vec_norm(&cand);
        if nrm > 1e-6 {
            basis.push(cand.iter().map(|z| z / nrm).collect());
        }
        e += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input() {
        let s = svd(&CMatrix::from_real_diag(&[1.0, 4.0])).unwrap();
        assert!((s.sigma[0] - 4.0).abs() < 1e-14);
        assert!((s.sigma[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unitary_has_unit_singular_values() {
        let h = 1.0 / 2f64.sqrt();
        let q = CMatrix::new(
            2,
            2,
            vec![C64::new(h, 0.0), C64::new(0.0, h), C64::new(0.0, h), C64::new(h, 0.0)],
        )
        .unwrap();
        let s = svd(&q).unwrap();
        for x in s.sigma {
            assert!((x - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_matrix_gives_unitary_factors() {
        let s = svd(&CMatrix::zeros(3, 3)).unwrap();
        assert!(s.sigma.iter().all(|&x| x == 0.0));
        assert!(s.u.orthonormality_error() < 1e-12);
        assert!(s.v.orthonormality_error() < 1e-12);
    }

    #[test]
    fn rank_one_reconstructs() {
        let a = CMatrix::from_real(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, -1.0, -2.0, -3.0]).unwrap();
        let s = svd(&a).unwrap();
        assert!(s.reconstruct().sub(&a).unwrap().frobenius_norm() < 1e-12);
        assert!(s.u.orthonormality_error() < 1e-12);
        assert!(s.sigma[1] < 1e-12);
    }
}
