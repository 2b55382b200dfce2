use super::{phase, CMatrix, C64, ONE, ZERO};
use crate::error::{Error, Result};

/// Thin Householder QR of an `m × n` matrix (`m ≥ n`): `A = Q R` with
/// `Q†Q = I_n` and `R` upper-triangular with strictly positive real diagonal.
pub fn qr_decompose(a: &CMatrix, rank_tol: f64) -> Result<(CMatrix, CMatrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::InvalidDims(format!("QR needs rows >= cols, got {m}x{n}")));
    }
    let scale = a.frobenius_norm();
    let mut w = a.clone();
    let mut reflectors: Vec<Vec<C64>> = Vec::with_capacity(n);

    for k in 0..n {
        let x: Vec<C64> = (k..m).map(|i| w[(i, k)]).collect();
        let norm_x = super::vec_norm(&x);
        if norm_x <= rank_tol * scale || norm_x == 0.0 {
            return Err(Error::RankDeficient { column: k, norm: norm_x });
        }
        let alpha = -phase(x[0]) * norm_x;
        let mut v = x;
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        for j in k + 1..n {
            let dot: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * w[(k + i, j)]).sum();
            let f = dot * (2.0 / vv);
            for (i, vi) in v.iter().enumerate() {
                w[(k + i, j)] -= f * vi;
            }
        }
        w[(k, k)] = alpha;
        for i in k + 1..m {
            w[(i, k)] = ZERO;
        }
        reflectors.push(v);
    }

    let mut q = CMatrix::zeros(m, n);
    for i in 0..n {
        q[(i, i)] = ONE;
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        for j in 0..n {
            let dot: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * q[(k + i, j)]).sum();
            if dot == ZERO {
                continue;
            }
            let f = dot * (2.0 / vv);
            for (i, vi) in v.iter().enumerate() {
                q[(k + i, j)] -= f * vi;
            }
        }
    }

    let mut r = w.submatrix(0, 0, n, n);
    for k in 0..n {
        let d = phase(r[(k, k)]);
        for j in k..n {
            r[(k, j)] *= d.conj();
        }
        for i in 0..m {
            q[(i, k)] *= d;
        }
        r[(k, k)] = C64::new(r[(k, k)].re, 0.0);
    }
    Ok((q, r))
}

/// RQ factorization of a square matrix: `A = R Q`, `R` upper-triangular with
/// positive real diagonal and `Q` unitary.
pub fn rq_decompose(a: &CMatrix, rank_tol: f64) -> Result<(CMatrix, CMatrix)> {
    if !a.is_square() {
        return Err(Error::InvalidDims("RQ needs a square matrix".into()));
    }
    let n = a.rows();
    // A = J B with B = J A; B† = Q1 R1 gives A = (J R1† J)(J Q1†).
    let mut b_adj = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b_adj[(j, i)] = a[(n - 1 - i, j)].conj();
        }
    }
    let (q1, r1) = qr_decompose(&b_adj, rank_tol).map_err(|e| match e {
        Error::RankDeficient { .. } => Error::Singular,
        other => other,
    })?;
    let mut r = CMatrix::zeros(n, n);
    let mut q = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] = r1[(n - 1 - j, n - 1 - i)].conj();
            q[(i, j)] = q1[(j, n - 1 - i)].conj();
        }
    }
    Ok((r, q))
}
