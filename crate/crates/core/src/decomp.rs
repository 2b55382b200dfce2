//! Geometric mean decomposition, two-matrix JET and the lift from a
//! K-matrix joint GMD to a (K+1)-matrix JET.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{qr_decompose, rq_decompose, svd, CMatrix, Tolerances, ZERO};

/// Relative tolerance on `|det A1|` vs `|det A2|` accepted by [`jet2`].
pub const DET_MATCH_TOL: f64 = 1e-8;

/// `A = U T V†` with every diagonal entry of `T` equal to `lambda`.
#[derive(Debug, Clone, Serialize)]
pub struct GmdResult {
    pub u: CMatrix,
    pub t: CMatrix,
    pub v: CMatrix,
    pub lambda: f64,
}

/// `A_i = U_i R_i V†` for `i = 1, 2` with `diag(R1) = diag(R2)`.
#[derive(Debug, Clone, Serialize)]
pub struct JetResult {
    pub u1: CMatrix,
    pub u2: CMatrix,
    pub v: CMatrix,
    pub r1: CMatrix,
    pub r2: CMatrix,
}

/// `U_i† G_i V = R_i` for `i = 1..=K+1` with a shared diagonal.
#[derive(Debug, Clone, Serialize)]
pub struct KJetResult {
    pub u_list: Vec<CMatrix>,
    pub v: CMatrix,
    pub r_list: Vec<CMatrix>,
}

impl KJetResult {
    /// Real parts of the diagonal of `R_i`.
    pub fn diagonal(&self, i: usize) -> Vec<f64> {
        self.r_list[i].diag().iter().map(|z| z.re).collect()
    }
}

/// Geometric mean decomposition via SVD followed by paired Givens rotations.
pub fn gmd(a: &CMatrix) -> Result<GmdResult> {
    if !a.is_square() {
        return Err(Error::InvalidDims("gmd expects a square matrix".into()));
    }
    let n = a.rows();
    let s = svd(a)?;
    let smax = s.sigma.first().copied().unwrap_or(0.0);
    let smin = s.sigma.last().copied().unwrap_or(0.0);
    if n == 0 || smax == 0.0 || smin <= Tolerances::default().rank * smax {
        return Err(Error::Singular);
    }
    let lambda = (s.sigma.iter().map(|x| x.ln()).sum::<f64>() / n as f64).exp();

    let mut u = s.u;
    let mut v = s.v;
    let mut r = CMatrix::from_real_diag(&s.sigma);

    for k in 0..n.saturating_sub(1) {
        let d1 = r[(k, k)].re;
        // pick a trailing diagonal entry on the other side of lambda
        let p = if d1 >= lambda {
            (k + 1..n).min_by(|&i, &j| r[(i, i)].re.total_cmp(&r[(j, j)].re))
        } else {
            (k + 1..n).max_by(|&i, &j| r[(i, i)].re.total_cmp(&r[(j, j)].re))
        }
        .expect("non-empty trailing block");
        if p != k + 1 {
            swap_trailing(&mut r, k + 1, p);
            swap_columns(&mut u, k + 1, p);
            swap_columns(&mut v, k + 1, p);
        }
        let d2 = r[(k + 1, k + 1)].re;

        let (c, sn) = if (d1 - d2).abs() <= 1e-15 * lambda {
            (1.0, 0.0)
        } else {
            let c2 = ((lambda * lambda - d2 * d2) / (d1 * d1 - d2 * d2)).clamp(0.0, 1.0);
            (c2.sqrt(), (1.0 - c2).sqrt())
        };
        // right rotation G = [[c, -s], [s, c]] on columns k, k+1
        rotate_columns(&mut r, k, c, sn);
        rotate_columns(&mut v, k, c, sn);
        // left rotation Q = (1/λ)[[c d1, -s d2], [s d2, c d1]]
        let (q11, q12, q21, q22) = (c * d1 / lambda, -sn * d2 / lambda, sn * d2 / lambda, c * d1 / lambda);
        for j in 0..n {
            let a0 = r[(k, j)];
            let a1 = r[(k + 1, j)];
            r[(k, j)] = a0 * q11 + a1 * q21;
            r[(k + 1, j)] = a0 * q12 + a1 * q22;
        }
        for i in 0..n {
            let a0 = u[(i, k)];
            let a1 = u[(i, k + 1)];
            u[(i, k)] = a0 * q11 + a1 * q21;
            u[(i, k + 1)] = a0 * q12 + a1 * q22;
        }
        r[(k + 1, k)] = ZERO;
    }
    Ok(GmdResult { u, t: r, v, lambda })
}

fn swap_columns(m: &mut CMatrix, a: usize, b: usize) {
    for i in 0..m.rows() {
        let t = m[(i, a)];
        m[(i, a)] = m[(i, b)];
        m[(i, b)] = t;
    }
}

/// Symmetric permutation of rows and columns `a`, `b` of the working factor.
fn swap_trailing(r: &mut CMatrix, a: usize, b: usize) {
    swap_columns(r, a, b);
    for j in 0..r.cols() {
        let t = r[(a, j)];
        r[(a, j)] = r[(b, j)];
        r[(b, j)] = t;
    }
}

fn rotate_columns(m: &mut CMatrix, k: usize, c: f64, s: f64) {
    for i in 0..m.rows() {
        let a0 = m[(i, k)];
        let a1 = m[(i, k + 1)];
        m[(i, k)] = a0 * c + a1 * s;
        m[(i, k + 1)] = a1 * c - a0 * s;
    }
}

fn det_modulus(a: &CMatrix) -> Result<f64> {
    Ok(a.determinant()?.norm())
}

/// JET of two equal-|det| square matrices: `A_i = U_i R_i V†`.
pub fn jet2(a1: &CMatrix, a2: &CMatrix) -> Result<JetResult> {
    if !a1.is_square() || a1.shape() != a2.shape() {
        return Err(Error::DimMismatch(format!(
            "jet2 needs two square matrices of equal size, got {:?} and {:?}",
            a1.shape(),
            a2.shape()
        )));
    }
    let (d1, d2) = (det_modulus(a1)?, det_modulus(a2)?);
    if d1 == 0.0 || d2 == 0.0 {
        return Err(Error::Singular);
    }
    if (d1 - d2).abs() > DET_MATCH_TOL * d1.max(d2) {
        return Err(Error::DeterminantMismatch(d1, d2));
    }
    let a2_inv = a2.inverse()?;
    let g = gmd(&a1.matmul(&a2_inv)?)?;
    let (r2, q) = rq_decompose(&g.v.adjoint_mul(a2)?, Tolerances::default().rank)?;
    let r1 = g.t.matmul(&r2)?;
    Ok(JetResult {
        u1: g.u,
        u2: g.v,
        v: q.adjoint(),
        r1,
        r2,
    })
}

/// `A_i = G_i G_{K+1}⁻¹` for `i = 1..=K`.
pub fn build_ratio_matrices(g_list: &[CMatrix]) -> Result<Vec<CMatrix>> {
    let (last, rest) = g_list
        .split_last()
        .ok_or_else(|| Error::InvalidParams("empty matrix list".into()))?;
    if !last.is_square() || rest.iter().any(|g| g.shape() != last.shape()) {
        return Err(Error::DimMismatch("ratio matrices need equal square shapes".into()));
    }
    let inv = last.inverse()?;
    rest.iter().map(|g| g.matmul(&inv)).collect()
}

/// Inverse of an upper-triangular matrix by back substitution.
pub(crate) fn upper_triangular_inverse(s: &CMatrix) -> Result<CMatrix> {
    let n = s.rows();
    let mut inv = CMatrix::zeros(n, n);
    for k in 0..n {
        if s[(k, k)] == ZERO {
            return Err(Error::Singular);
        }
    }
    for j in 0..n {
        inv[(j, j)] = s[(j, j)].inv();
        for i in (0..j).rev() {
            let mut acc = ZERO;
            for l in i + 1..=j {
                acc += s[(i, l)] * inv[(l, j)];
            }
            inv[(i, j)] = -acc / s[(i, i)];
        }
    }
    Ok(inv)
}

/// Lift of a joint triangularization with constant diagonals: requires each
/// `T_i = U_i† (G_i G_{K+1}⁻¹) V_gmd` to be upper-triangular with diagonal
/// `c_i · 1`. Returns the JET together with the constants `c_i`.
pub(crate) fn lift_constant_diagonal(
    g_list: &[CMatrix],
    u_list: &[CMatrix],
    v_gmd: &CMatrix,
    tol: f64,
) -> Result<(KJetResult, Vec<f64>)> {
    let k = u_list.len();
    if g_list.len() != k + 1 || k == 0 {
        return Err(Error::InvalidParams(format!(
            "expected K+1 = {} channel matrices for K = {k} unitary factors, got {}",
            k + 1,
            g_list.len()
        )));
    }
    let n = g_list[0].rows();
    let m = v_gmd.cols();
    if v_gmd.rows() != n || u_list.iter().any(|u| u.shape() != (n, m)) {
        return Err(Error::DimMismatch("unitary factors must all be n×m".into()));
    }
    let ratios = build_ratio_matrices(g_list)?;

    let mut t_list = Vec::with_capacity(k);
    let mut consts = Vec::with_capacity(k + 1);
    for (i, (a, u)) in ratios.iter().zip(u_list).enumerate() {
        let mut t = u.adjoint_mul(&a.matmul(v_gmd)?)?;
        if !t.is_upper_triangular(tol) {
            return Err(Error::PreconditionViolated(format!(
                "factor {} is not upper-triangular (lower residual {:e})",
                i + 1,
                t.lower_residual()
            )));
        }
        let diag = t.diag();
        let c = diag.iter().map(|z| z.re).sum::<f64>() / m as f64;
        let worst = diag.iter().map(|z| (z - c).norm()).fold(0.0, f64::max);
        if c.is_nan() || c <= 0.0 || worst > tol * c.max(1.0) {
            return Err(Error::PreconditionViolated(format!(
                "factor {} has a non-constant diagonal (spread {worst:e})",
                i + 1
            )));
        }
        for r in 0..m {
            for col in 0..r {
                t[(r, col)] = ZERO;
            }
        }
        t_list.push(t);
        consts.push(c);
    }
    consts.push(1.0);

    let g_last_inv = g_list[k].inverse()?;
    let (v, s) = qr_decompose(&g_last_inv.matmul(v_gmd)?, Tolerances::default().rank)?;
    let s_inv = upper_triangular_inverse(&s)?;
    let mut r_list = t_list
        .iter()
        .map(|t| t.matmul(&s_inv))
        .collect::<Result<Vec<_>>>()?;
    r_list.push(s_inv);
    let mut us = u_list.to_vec();
    us.push(v_gmd.clone());
    Ok((KJetResult { u_list: us, v, r_list }, consts))
}

/// Turns a K-GMD of the ratio matrices `G_i G_{K+1}⁻¹` (unitary factors
/// `u_list` and `v_gmd`, unit-diagonal triangular middles) into a JET of all
/// K+1 matrices `G_i`.
pub fn kgmd_to_kjet(
    g_list: &[CMatrix],
    u_list: &[CMatrix],
    v_gmd: &CMatrix,
    tol: f64,
) -> Result<KJetResult> {
    let (res, consts) = lift_constant_diagonal(g_list, u_list, v_gmd, tol)?;
    if let Some((i, c)) = consts.iter().enumerate().find(|(_, c)| (*c - 1.0).abs() > tol) {
        return Err(Error::PreconditionViolated(format!(
            "factor {} has diagonal {c} instead of 1",
            i + 1
        )));
    }
    Ok(res)
}

/// Largest elementwise spread of the diagonals of a list of triangular factors,
/// relative to the largest diagonal modulus.
pub fn diagonal_spread(r_list: &[CMatrix]) -> f64 {
    let Some(first) = r_list.first() else { return 0.0 };
    let d0 = first.diag();
    let scale = d0.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    r_list
        .iter()
        .flat_map(|r| r.diag().into_iter().zip(d0.iter()).map(|(a, b)| (a - b).norm()))
        .fold(0.0, f64::max)
        / scale
}

/// Relative Frobenius error of `U R V† − A`.
pub fn reconstruction_error(u: &CMatrix, r: &CMatrix, v: &CMatrix, a: &CMatrix) -> f64 {
    let rec = &(u * r) * &v.adjoint();
    rec.sub(a).expect("matching shapes").frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE)
}
