//! The M-rate Gaussian rateless problem as a staircase broadcast channel:
//! channel builders, the two-rate precoder and the three-rate threshold.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact2::{deflate_diagonal3, JetResidual};
use crate::matcore::{inner, phase, qr_decompose, svd, CMatrix, Tolerances};

/// Rate levels `m = 1..=M` with gains `log₂(1 + α_m²) = R / m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatelessSpec {
    pub levels: usize,
    pub rate: f64,
    pub alpha: Vec<f64>,
}

impl RatelessSpec {
    pub fn new(levels: usize, rate: f64) -> Result<Self> {
        if levels == 0 || !rate.is_finite() || rate <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "rateless problem needs M >= 1 and R > 0, got M = {levels}, R = {rate}"
            )));
        }
        let alpha = (1..=levels)
            .map(|m| (2f64.powf(rate / m as f64) - 1.0).sqrt())
            .collect();
        Ok(Self { levels, rate, alpha })
    }
}

/// `H_m = α_m · diag(1, …, 1, 0, …, 0)` with `m` ones, for `m = 1..=M`.
/// With `C_x = I` every channel has mutual information `R`.
pub fn build_rateless_channels(levels: usize, rate: f64) -> Result<Vec<CMatrix>> {
    let spec = RatelessSpec::new(levels, rate)?;
    Ok(spec
        .alpha
        .iter()
        .enumerate()
        .map(|(m, &a)| {
            let d: Vec<f64> = (0..levels).map(|k| if k <= m { a } else { 0.0 }).collect();
            CMatrix::from_real_diag(&d)
        })
        .collect())
}

/// Same channels rescaled for the unit-trace power constraint: `√M · H_m`
/// with `C_x = I / M` gives `H C_x H†` identical to the unit-power model.
pub fn rateless_channel_set(levels: usize, rate: f64) -> Result<(Vec<CMatrix>, CMatrix)> {
    let scale = (levels as f64).sqrt();
    let hs = build_rateless_channels(levels, rate)?
        .into_iter()
        .map(|h| h.scale_real(scale))
        .collect();
    Ok((hs, CMatrix::identity(levels).scale_real(1.0 / levels as f64)))
}

/// Closed-form two-rate precoder
/// `(2^{R/2} + 1)^{-1/2} · [[1, 2^{R/4}], [2^{R/4}, −1]]`.
pub fn two_rate_precoder(rate: f64) -> CMatrix {
    let a = 2f64.powf(rate / 4.0);
    let s = 1.0 / (2f64.powf(rate / 2.0) + 1.0).sqrt();
    CMatrix::from_real(2, 2, &[s, s * a, s * a, -s]).expect("finite")
}

/// Largest entry error between `a` and `b` after aligning each column of `a`
/// to `b` by a unit-modulus phase.
pub fn column_phase_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut worst: f64 = 0.0;
    for j in 0..a.cols() {
        let (ca, cb) = (a.column(j), b.column(j));
        let ph = phase(inner(&ca, &cb));
        for (x, y) in ca.iter().zip(&cb) {
            worst = worst.max((x * ph - y).norm());
        }
    }
    Ok(worst)
}

/// Closed-form off-diagonal entry of the three-rate JET residual.
pub fn three_rate_x(rate: f64) -> f64 {
    -(1.0 - 2f64.powf(-rate / 6.0)) * (1.0 + 2f64.powf(rate / 6.0) + 2f64.powf(rate / 3.0)).sqrt()
}

/// `6·log₂((3 + √5)/2)`.
pub fn three_rate_threshold() -> f64 {
    6.0 * ((3.0 + 5f64.sqrt()) / 2.0).log2()
}

/// JET of the two non-trivial three-rate augmented matrices computed through
/// the pipeline, next to the closed form.
#[derive(Debug, Clone, Serialize)]
pub struct ThreeRateJet {
    pub rate: f64,
    /// Closed form.
    pub x: f64,
    /// Extracted from the computed factors (normalized by `2^{R/6}`).
    pub x_computed: f64,
    pub z: f64,
    pub w: f64,
    /// `U_i† G_i V` for `G_1 = diag(2^{R/2}, 1, 1)`, `G_2 = diag(2^{R/4}, 2^{R/4}, 1)`.
    pub r1: CMatrix,
    pub r2: CMatrix,
    pub u1: CMatrix,
    pub u2: CMatrix,
    pub v: CMatrix,
    /// Residual of the trailing 2×2 problem.
    pub residual: JetResidual,
}

/// Augmented three-rate matrices `G_1, G_2, G_3` (unit per-symbol power).
pub fn three_rate_g(rate: f64) -> [CMatrix; 3] {
    let p = |e: f64| 2f64.powf(rate * e);
    [
        CMatrix::from_real_diag(&[p(0.5), 1.0, 1.0]),
        CMatrix::from_real_diag(&[p(0.25), p(0.25), 1.0]),
        CMatrix::from_real_diag(&[p(1.0 / 6.0); 3]),
    ]
}

fn embed(outer: &CMatrix, small: &CMatrix) -> Result<CMatrix> {
    let mut e = CMatrix::identity(3);
    e.set_submatrix(1, 1, small);
    outer.matmul(&e)
}

fn flip_column(m: &mut CMatrix, j: usize) {
    for i in 0..m.rows() {
        m[(i, j)] = -m[(i, j)];
    }
}

/// Deflates the common first column, then triangularizes the trailing 2×2
/// blocks with the ascending SVD of the second one.
pub fn three_rate_offdiag(rate: f64) -> Result<ThreeRateJet> {
    if rate.is_nan() || rate <= 0.0 {
        return Err(Error::InvalidParams(format!("rate must be positive, got {rate}")));
    }
    let q = 2f64.powf(rate / 12.0);
    let d1 = [q.powi(4), q.powi(-2), q.powi(-2)];
    let d2 = [q, q, q.powi(-2)];
    let def = deflate_diagonal3(&d1, &d2)?;

    let s = svd(&def.b2)?;
    // ascending singular values: swap the two columns
    let mut w = s.v.select_columns(&[1, 0]);
    let mut u2s = s.u.select_columns(&[1, 0]);
    let (mut u1s, _) = qr_decompose(&def.b1.matmul(&w)?, Tolerances::default().rank)?;

    let mut u1 = embed(&def.u1, &u1s)?;
    let mut u2 = embed(&def.u2, &u2s)?;
    let mut v = embed(&def.v, &w)?;
    let a1 = CMatrix::from_real_diag(&d1);
    let a2 = CMatrix::from_real_diag(&d2);
    let t1 = u1.adjoint_mul(&a1.matmul(&v)?)?;
    if t1[(1, 2)].re > 0.0 {
        flip_column(&mut v, 2);
        flip_column(&mut u1, 2);
        flip_column(&mut u2, 2);
        flip_column(&mut w, 1);
        flip_column(&mut u1s, 1);
        flip_column(&mut u2s, 1);
    }
    let t1 = u1.adjoint_mul(&a1.matmul(&v)?)?;
    let t2 = u2.adjoint_mul(&a2.matmul(&v)?)?;

    let scale = 2f64.powf(rate / 6.0);
    let r1 = t1.scale_real(scale);
    let r2 = t2.scale_real(scale);
    let b1 = u1s.adjoint_mul(&def.b1.matmul(&w)?)?;
    let b2 = u2s.adjoint_mul(&def.b2.matmul(&w)?)?;
    let residual = JetResidual {
        r1: 0.5 * (b1[(0, 0)].re + b2[(0, 0)].re),
        r2: 0.5 * (b1[(1, 1)].re + b2[(1, 1)].re),
        x1: b1[(0, 1)].re,
        x2: b2[(0, 1)].re,
    };
    Ok(ThreeRateJet {
        rate,
        x: three_rate_x(rate),
        x_computed: t1[(1, 2)].re,
        z: t1[(0, 1)].re,
        w: t1[(0, 2)].re,
        r1,
        r2,
        u1,
        u2,
        v,
        residual,
    })
}

/// `(x² ≤ 4, threshold)`.
pub fn three_rate_feasible(rate: f64) -> (bool, f64) {
    let x = three_rate_x(rate);
    (x * x <= 4.0, three_rate_threshold())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::build_ratio_matrices;
    use crate::exact2::{feasibility_2gmd, jet_residual};
    use crate::matcore::C64;
    use crate::multicast::{augment, mutual_info};

    #[test]
    fn spec_gains() {
        let s = RatelessSpec::new(3, 6.0).unwrap();
        let expect = [63f64.sqrt(), 7f64.sqrt(), 3f64.sqrt()];
        for (a, e) in s.alpha.iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
        for (m, a) in s.alpha.iter().enumerate() {
            assert!(((m + 1) as f64 * (1.0 + a * a).log2() - 6.0).abs() < 1e-9);
        }
        assert!(s.alpha.windows(2).all(|w| w[0] > w[1]));
        let one = RatelessSpec::new(1, 3.0).unwrap();
        assert!((one.alpha[0] - 7f64.sqrt()).abs() < 1e-12);
        assert!(RatelessSpec::new(0, 1.0).is_err());
        assert!(RatelessSpec::new(2, 0.0).is_err());
    }

    #[test]
    fn channels_have_equal_information() {
        for levels in 1..=4 {
            for rate in [0.5, 3.0, 9.0] {
                let hs = build_rateless_channels(levels, rate).unwrap();
                let cx = CMatrix::identity(levels);
                for h in &hs {
                    assert!((mutual_info(h, &cx).unwrap() - rate).abs() < 1e-9);
                }
                let (hs, cx) = rateless_channel_set(levels, rate).unwrap();
                assert!((cx.trace().re - 1.0).abs() < 1e-15);
                for h in &hs {
                    assert!((mutual_info(h, &cx).unwrap() - rate).abs() < 1e-9);
                }
            }
        }
        let hs = build_rateless_channels(2, 4.0).unwrap();
        assert_eq!(hs[0][(1, 1)], C64::new(0.0, 0.0));
        assert!(hs[0][(0, 0)].re > 0.0 && hs[1][(1, 1)].re > 0.0);
    }

    #[test]
    fn two_rate_precoder_closed_form() {
        let v = two_rate_precoder(4.0);
        let s = 1.0 / 5f64.sqrt();
        let expect = CMatrix::from_real(2, 2, &[s, 2.0 * s, 2.0 * s, -s]).unwrap();
        assert!(v.sub(&expect).unwrap().max_abs() < 1e-15);
        for k in -20..=20 {
            let r = 10f64.powf(k as f64 / 10.0);
            let v = two_rate_precoder(r);
            assert!((&v * &v.adjoint()).sub(&CMatrix::identity(2)).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn phase_distance() {
        let v = two_rate_precoder(3.0);
        let mut w = v.clone();
        for i in 0..2 {
            w[(i, 1)] *= C64::from_polar(1.0, 2.1);
        }
        assert!(column_phase_distance(&w, &v).unwrap() < 1e-15);
        assert!(column_phase_distance(&v.scale_real(-1.0), &v).unwrap() < 1e-15);
        let swapped = v.select_columns(&[1, 0]);
        assert!(column_phase_distance(&swapped, &v).unwrap() > 0.1);
        assert!(column_phase_distance(&v, &CMatrix::identity(3)).is_err());
    }

    #[test]
    fn augmented_three_rate_matrices() {
        for rate in [2.0, 6.0, 9.0] {
            let hs = build_rateless_channels(3, rate).unwrap();
            let g = three_rate_g(rate);
            for (h, gi) in hs.iter().zip(&g) {
                let a = augment(h, &CMatrix::identity(3)).unwrap();
                assert!(a.g.sub(gi).unwrap().max_abs() < 1e-10 * gi.max_abs());
            }
        }
    }

    #[test]
    fn threshold_and_boundary() {
        let t = three_rate_threshold();
        assert!((t - 8.331).abs() < 1e-3);
        assert!(three_rate_feasible(8.0).0);
        assert!(!three_rate_feasible(9.0).0);
        assert!(three_rate_feasible(8.33).0 && !three_rate_feasible(8.34).0);
        assert!((three_rate_x(t) + 2.0).abs() < 1e-12);
        assert!(three_rate_x(1e-9).abs() < 1e-9);
    }

    #[test]
    fn computed_jet_matches_closed_form() {
        for rate in [1.0, 3.0, 6.0, 8.0, 9.0, 12.0] {
            let j = three_rate_offdiag(rate).unwrap();
            assert!((j.x - j.x_computed).abs() < 1e-8, "R = {rate}: {} vs {}", j.x, j.x_computed);
            let [g1, g2, _] = three_rate_g(rate);
            let s = 2f64.powf(rate / 6.0);
            let diag = [s, s * 2f64.powf(-rate / 12.0), s * 2f64.powf(rate / 12.0)];
            for (g, u, r) in [(&g1, &j.u1, &j.r1), (&g2, &j.u2, &j.r2)] {
                let rr = u.adjoint_mul(&g.matmul(&j.v).unwrap()).unwrap();
                assert!(rr.sub(r).unwrap().max_abs() < 1e-9 * s);
                assert!(r.lower_residual() < 1e-9 * s);
                for k in 0..3 {
                    assert!((r[(k, k)].re - diag[k]).abs() < 1e-9 * diag[k]);
                }
            }
            assert!(j.r2[(1, 2)].norm() < 1e-9 * s);
        }
    }

    #[test]
    fn closed_form_agrees_with_generic_feasibility() {
        for rate in 1..=12 {
            let rate = rate as f64;
            let (closed, _) = three_rate_feasible(rate);
            let j = three_rate_offdiag(rate).unwrap();
            assert_eq!(feasibility_2gmd(&j.residual).unwrap(), closed, "R = {rate}");
            let q = 2f64.powf(rate / 12.0);
            let def = deflate_diagonal3(&[q.powi(4), q.powi(-2), q.powi(-2)], &[q, q, q.powi(-2)]).unwrap();
            let generic = jet_residual(&def.b1, &def.b2).unwrap().residual;
            assert_eq!(feasibility_2gmd(&generic).unwrap(), closed, "R = {rate}");
        }
    }

    #[test]
    fn ratio_matrices_are_the_normalized_g() {
        let rate = 6.0;
        let g = three_rate_g(rate);
        let a = build_ratio_matrices(&g).unwrap();
        let q = 2f64.powf(rate / 12.0);
        let expect = CMatrix::from_real_diag(&[q.powi(4), q.powi(-2), q.powi(-2)]);
        assert!(a[0].sub(&expect).unwrap().max_abs() < 1e-12);
    }
}
