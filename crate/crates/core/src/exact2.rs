//! Exact joint GMD of two real 2×2 unit-determinant matrices: the feasibility
//! test on a JET residual and the explicit complex construction.

use serde::Serialize;

use crate::decomp::jet2;
use crate::error::{Error, Result};
use crate::matcore::{qr_decompose, CMatrix, Tolerances, C64, ONE, ZERO};

/// Below this gap `r1` and `r2` are treated as equal.
pub const TAU_DEG: f64 = 1e-12;
/// Relative slack on the feasibility inequality.
pub const FEAS_SLACK: f64 = 1e-10;
const DET_TOL: f64 = 1e-8;

/// Triangular residual `R_i = [[r1, x_i], [0, r2]]` of a real JET.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JetResidual {
    pub r1: f64,
    pub r2: f64,
    pub x1: f64,
    pub x2: f64,
}

/// Real JET factors with `det V = +1` and their residual.
#[derive(Debug, Clone, Serialize)]
pub struct RealJet {
    pub residual: JetResidual,
    pub u1: CMatrix,
    pub u2: CMatrix,
    pub v: CMatrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct Exact2GmdResult {
    pub u1: CMatrix,
    pub u2: CMatrix,
    /// Of the form `[[s1, s2], [s2*, -s1*]]`.
    pub v: CMatrix,
    pub s1: C64,
    pub s2: C64,
    /// `U_i† A_i V`, unit diagonal.
    pub t1: CMatrix,
    pub t2: CMatrix,
}

fn check_real_unit_det(a: &CMatrix, tol: &Tolerances) -> Result<()> {
    if a.shape() != (2, 2) {
        return Err(Error::InvalidDims(format!("expected 2x2, got {:?}", a.shape())));
    }
    if !a.is_real(tol.structural) {
        return Err(Error::NotReal(a.max_imag()));
    }
    let d = a.determinant()?.re;
    if (d - 1.0).abs() > DET_TOL {
        return Err(Error::DeterminantNotOne(d));
    }
    Ok(())
}

fn real_copy(a: &CMatrix) -> CMatrix {
    CMatrix::from_real(a.rows(), a.cols(), &a.real_parts()).expect("finite")
}

fn negate_column(m: &mut CMatrix, j: usize) {
    for i in 0..m.rows() {
        m[(i, j)] = -m[(i, j)];
    }
}

/// Real JET of two real 2×2 matrices with unit determinant, normalized to
/// `det V = +1`.
pub fn jet_residual(a1: &CMatrix, a2: &CMatrix) -> Result<RealJet> {
    let tol = Tolerances::default();
    check_real_unit_det(a1, &tol)?;
    check_real_unit_det(a2, &tol)?;
    let (a1, a2) = (real_copy(a1), real_copy(a2));
    let j = jet2(&a1, &a2)?;
    let (mut u1, mut u2, mut v) = (real_copy(&j.u1), real_copy(&j.u2), real_copy(&j.v));
    if v.determinant()?.re < 0.0 {
        negate_column(&mut v, 1);
        negate_column(&mut u1, 1);
        negate_column(&mut u2, 1);
    }
    let r1 = u1.adjoint_mul(&a1.matmul(&v)?)?;
    let r2 = u2.adjoint_mul(&a2.matmul(&v)?)?;
    let residual = JetResidual {
        r1: 0.5 * (r1[(0, 0)].re + r2[(0, 0)].re),
        r2: 0.5 * (r1[(1, 1)].re + r2[(1, 1)].re),
        x1: r1[(0, 1)].re,
        x2: r2[(0, 1)].re,
    };
    Ok(RealJet { residual, u1, u2, v })
}

/// Exact joint GMD existence test on a JET residual.
pub fn feasibility_2gmd(res: &JetResidual) -> Result<bool> {
    let JetResidual { r1, r2, x1, x2 } = *res;
    if ![r1, r2, x1, x2].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParams(format!("non-finite residual {res:?}")));
    }
    // r1 = r2 = 1: the residuals already have unit diagonals
    if (r1 - r2).abs() < TAU_DEG {
        return Ok(true);
    }
    let m = 0.5 * (x1 + x2);
    let lhs = r2 * m * m;
    let rhs = r2 + x1 * x2 / (r1 - r2);
    Ok(lhs <= rhs + FEAS_SLACK * lhs.abs().max(rhs.abs()).max(1.0))
}

/// `(|s2|², Re α, Im α²)` for a non-degenerate residual.
pub fn construction_parameters(res: &JetResidual) -> (f64, f64, f64) {
    let JetResidual { r1, r2, x1, x2 } = *res;
    let s2_sq = (r1 * r1 - 1.0) / (r1 * r1 - r2 * r2 + x1 * x2);
    let m = 0.5 * (x1 + x2);
    let re_alpha = -m * r2;
    let im_alpha_sq = 1.0 / s2_sq - 1.0 - re_alpha * re_alpha;
    (s2_sq, re_alpha, im_alpha_sq)
}

fn orthogonal_design(s1: C64, s2: C64) -> CMatrix {
    CMatrix::new(2, 2, vec![s1, s2, s2.conj(), -s1.conj()]).expect("finite")
}

/// Exact joint GMD `A_i = U_i T_i V†` with unit-diagonal `T_i`.
pub fn exact_2gmd(a1: &CMatrix, a2: &CMatrix) -> Result<Exact2GmdResult> {
    let jet = jet_residual(a1, a2)?;
    let res = jet.residual;
    if !feasibility_2gmd(&res)? {
        return Err(Error::Infeasible);
    }
    let degenerate = (res.r1 - res.r2).abs() < TAU_DEG;
    let (s1, s2) = if degenerate {
        (ONE, ZERO)
    } else {
        let (s2_sq, re_alpha, im_alpha_sq) = construction_parameters(&res);
        let tau = 1e-9;
        if !(-tau..=1.0 + tau).contains(&s2_sq) || im_alpha_sq < -tau * (1.0 + re_alpha * re_alpha) {
            return Err(Error::NumericalBreakdown(format!(
                "|s2|^2 = {s2_sq}, Im(alpha)^2 = {im_alpha_sq}"
            )));
        }
        let s2 = s2_sq.clamp(0.0, 1.0).sqrt();
        let alpha = C64::new(re_alpha, im_alpha_sq.max(0.0).sqrt());
        (alpha * s2, C64::new(s2, 0.0))
    };
    let v_gmd = orthogonal_design(s1, s2);

    let a = [real_copy(a1), real_copy(a2)];
    let u_jet = [&jet.u1, &jet.u2];
    let mut us = Vec::with_capacity(2);
    let mut ts = Vec::with_capacity(2);
    for i in 0..2 {
        let r = u_jet[i].adjoint_mul(&a[i].matmul(&jet.v)?)?;
        let (q, t) = qr_decompose(&r.matmul(&v_gmd)?, Tolerances::default().rank)?;
        us.push(u_jet[i].matmul(&q)?);
        ts.push(t);
    }
    let v = jet.v.matmul(&v_gmd)?;
    let t2 = ts.pop().expect("two factors");
    let t1 = ts.pop().expect("two factors");
    let u2 = us.pop().expect("two factors");
    let u1 = us.pop().expect("two factors");
    Ok(Exact2GmdResult {
        s1: v[(0, 0)],
        s2: v[(0, 1)],
        u1,
        u2,
        v,
        t1,
        t2,
    })
}

/// Deflation of a pair of real diagonal 3×3 unit-determinant matrices by a
/// common unit vector `v` with `‖D_1 v‖ = ‖D_2 v‖ = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct Deflation3 {
    /// Real orthogonal, first column `v`.
    pub v: CMatrix,
    /// Real orthogonal, first column `D_i v`.
    pub u1: CMatrix,
    pub u2: CMatrix,
    /// Trailing blocks `U_i(:,1:)ᵀ D_i V(:,1:)`, real with determinant +1.
    pub b1: CMatrix,
    pub b2: CMatrix,
}

/// Completes a real unit vector to a real orthogonal matrix with positive
/// determinant whose first column is that vector.
fn orthogonal_completion(first: &[f64]) -> CMatrix {
    let n = first.len();
    let mut cols: Vec<Vec<f64>> = vec![first.to_vec()];
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut c: Vec<f64> = (0..n).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for _ in 0..2 {
            for b in &cols {
                let d: f64 = b.iter().zip(&c).map(|(x, y)| x * y).sum();
                for (ci, bi) in c.iter_mut().zip(b) {
                    *ci -= d * bi;
                }
            }
        }
        let nrm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            cols.push(c.into_iter().map(|x| x / nrm).collect());
        }
    }
    let cols: Vec<Vec<C64>> = cols
        .into_iter()
        .map(|c| c.into_iter().map(|x| C64::new(x, 0.0)).collect())
        .collect();
    let mut m = CMatrix::from_columns(&cols).expect("square completion");
    if m.determinant().expect("square").re < 0.0 {
        negate_column(&mut m, n - 1);
    }
    m
}

/// Finds `v` with `‖D_1 v‖ = ‖D_2 v‖ = ‖v‖ = 1` and splits off the common
/// first column. Fails with [`Error::Infeasible`] when no such real `v` exists.
pub fn deflate_diagonal3(d1: &[f64; 3], d2: &[f64; 3]) -> Result<Deflation3> {
    for d in [d1, d2] {
        let det: f64 = d.iter().product();
        if (det - 1.0).abs() > DET_TOL {
            return Err(Error::DeterminantNotOne(det));
        }
    }
    // squared components w solve [1; d1²; d2²] w = 1
    let rows: Vec<f64> = (0..3)
        .flat_map(|j| [1.0, d1[j] * d1[j], d2[j] * d2[j]])
        .collect();
    let m = CMatrix::from_real(3, 3, &rows)?.transpose();
    let w = m
        .inverse()
        .map_err(|_| Error::Infeasible)?
        .mul_vec(&[ONE, ONE, ONE])?;
    if w.iter().any(|z| z.re < -1e-12) {
        return Err(Error::Infeasible);
    }
    let v: Vec<f64> = w.iter().map(|z| z.re.max(0.0).sqrt()).collect();
    let vm = orthogonal_completion(&v);
    let mut out = Vec::with_capacity(2);
    for d in [d1, d2] {
        let dm = CMatrix::from_real_diag(d);
        let first: Vec<f64> = (0..3).map(|j| d[j] * v[j]).collect();
        let mut u = orthogonal_completion(&first);
        let full = u.adjoint_mul(&dm.matmul(&vm)?)?;
        let mut b = full.submatrix(1, 1, 2, 2);
        if b.determinant()?.re < 0.0 {
            negate_column(&mut u, 2);
            for j in 0..2 {
                b[(1, j)] = -b[(1, j)];
            }
        }
        out.push((u, b));
    }
    let (u2, b2) = out.pop().expect("two");
    let (u1, b1) = out.pop().expect("two");
    Ok(Deflation3 { v: vm, u1, u2, b1, b2 })
}

/// Exact joint GMD of two real diagonal 3×3 unit-determinant matrices by
/// deflation to a 2×2 problem.
pub fn exact_2gmd_diagonal3(d1: &[f64; 3], d2: &[f64; 3]) -> Result<(CMatrix, CMatrix, CMatrix)> {
    let def = deflate_diagonal3(d1, d2)?;
    let inner = exact_2gmd(&def.b1, &def.b2)?;
    let lift = |outer: &CMatrix, small: &CMatrix| -> Result<CMatrix> {
        let mut e = CMatrix::identity(3);
        e.set_submatrix(1, 1, small);
        outer.matmul(&e)
    };
    Ok((
        lift(&def.u1, &inner.u1)?,
        lift(&def.u2, &inner.u2)?,
        lift(&def.v, &inner.v)?,
    ))
}
