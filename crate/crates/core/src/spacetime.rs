//! Space-time (block-extended) joint GMD: the two-matrix construction over
//! `N` channel uses and its recursive extension to any number of matrices.

use serde::Serialize;

use crate::decomp::{gmd, jet2, upper_triangular_inverse};
use crate::error::{Error, Result};
use crate::matcore::{qr_decompose, CMatrix, Tolerances, ZERO};

/// Refuse to build decompositions whose extended dimension exceeds this.
pub const MAX_EXTENDED_DIM: usize = 4096;
const DET_TOL: f64 = 1e-8;
const LIFT_TOL: f64 = 1e-8;

/// Column selection grouping one symbol from each of `n` consecutive blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReorderMap {
    pub n: usize,
    pub blocks: usize,
    /// 1-based column indices into the `n·blocks` extended columns.
    pub pi: Vec<usize>,
}

impl ReorderMap {
    pub fn indices0(&self) -> Vec<usize> {
        self.pi.iter().map(|p| p - 1).collect()
    }

    pub fn groups(&self) -> usize {
        self.blocks + 1 - self.n
    }
}

pub fn reorder_map(n: usize, blocks: usize) -> Result<ReorderMap> {
    if n == 0 || blocks < n {
        return Err(Error::InvalidDims(format!(
            "reordering needs blocks >= n >= 1, got n = {n}, N = {blocks}"
        )));
    }
    let len = n * (blocks - n + 1);
    let pi = (1..=len)
        .map(|j| (n - 1) * ((j - 1) % n) + n * ((j - 1) / n) + n)
        .collect();
    Ok(ReorderMap { n, blocks, pi })
}

/// `U_i† blkdiag(A_i, …) V = T_i` over the retained columns.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceTimeDecomp {
    /// Size of the un-extended matrices.
    pub n: usize,
    /// Number of copies of each `A_i` on the block diagonal.
    pub copies: usize,
    pub u_list: Vec<CMatrix>,
    pub v: CMatrix,
    pub t_list: Vec<CMatrix>,
    pub retained: usize,
    pub dropped: usize,
    pub total: usize,
    /// Mean diagonal value of each `T_i`.
    pub diag_constants: Vec<f64>,
}

impl SpaceTimeDecomp {
    /// `‖U_i† ext(A_i) V − T_i‖_F / ‖ext(A_i)‖_F`.
    pub fn projection_error(&self, i: usize, a: &CMatrix) -> Result<f64> {
        let av = ext_mul(a, &self.v)?;
        let t = self.u_list[i].adjoint_mul(&av)?;
        let scale = a.frobenius_norm() * (self.copies as f64).sqrt();
        Ok(t.sub(&self.t_list[i])?.frobenius_norm() / scale)
    }

    /// Largest `|T_kk − c_i|` over all factors, relative to `c_i`.
    pub fn flatness(&self) -> f64 {
        self.t_list
            .iter()
            .zip(&self.diag_constants)
            .flat_map(|(t, &c)| t.diag().into_iter().map(move |z| (z - c).norm() / c))
            .fold(0.0, f64::max)
    }

    /// Largest `|T_kk − 1|` over all factors.
    pub fn unit_deviation(&self) -> f64 {
        self.t_list
            .iter()
            .flat_map(|t| t.diag().into_iter().map(|z| (z - 1.0).norm()))
            .fold(0.0, f64::max)
    }

    pub fn orthonormality_error(&self) -> f64 {
        self.u_list
            .iter()
            .chain(std::iter::once(&self.v))
            .map(|m| m.orthonormality_error())
            .fold(0.0, f64::max)
    }

    pub fn retained_fraction(&self) -> f64 {
        self.retained as f64 / self.total as f64
    }
}

/// `blkdiag(a, …, a) · v`, with as many copies as `v.rows() / a.cols()`.
pub fn ext_mul(a: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let (p, q) = a.shape();
    if q == 0 || !v.rows().is_multiple_of(q) {
        return Err(Error::DimMismatch(format!(
            "block extension of a {p}x{q} matrix cannot act on {} rows",
            v.rows()
        )));
    }
    let copies = v.rows() / q;
    let mut out = CMatrix::zeros(p * copies, v.cols());
    for b in 0..copies {
        let block = a.matmul(&v.submatrix(b * q, 0, q, v.cols()))?;
        out.set_submatrix(b * p, 0, &block);
    }
    Ok(out)
}

/// `ext(outer)[:, π] · ext(inner)`: the column-reordered extension of `outer`
/// (rows × p) followed by a per-group unitary mix (p × p).
fn compose(outer: &CMatrix, map: &ReorderMap, mix: &CMatrix) -> CMatrix {
    let (rows, p) = outer.shape();
    let idx = map.indices0();
    let groups = map.groups();
    let mut out = CMatrix::zeros(rows * map.blocks, p * groups);
    for g in 0..groups {
        for l in 0..p {
            let src = idx[g * p + l];
            let (blk, col) = (src / p, src % p);
            for c in 0..p {
                let w = mix[(l, c)];
                if w == ZERO {
                    continue;
                }
                for r in 0..rows {
                    out[(blk * rows + r, g * p + c)] += outer[(r, col)] * w;
                }
            }
        }
    }
    out
}

/// `ext(R)[π, π]`.
fn reordered(r: &CMatrix, map: &ReorderMap) -> CMatrix {
    let p = r.rows();
    let idx = map.indices0();
    let m = idx.len();
    let mut out = CMatrix::zeros(m, m);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            if i / p == j / p {
                out[(a, b)] = r[(i % p, j % p)];
            }
        }
    }
    out
}

/// Diagonal `p × p` blocks of `ext(R)[π, π]`.
pub fn reordered_block_diagonal(r: &CMatrix, map: &ReorderMap) -> Vec<CMatrix> {
    let full = reordered(r, map);
    let p = map.n;
    (0..map.groups()).map(|g| full.submatrix(g * p, g * p, p, p)).collect()
}

/// `ext(U)† M ext(V)` for a square `M` made of `p × p` blocks.
fn block_sandwich(u: &CMatrix, m: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let p = u.rows();
    let g = m.rows() / p;
    let mut out = CMatrix::zeros(m.rows(), m.cols());
    for a in 0..g {
        for b in a..g {
            let blk = m.submatrix(a * p, b * p, p, p);
            let t = u.adjoint_mul(&blk.matmul(v)?)?;
            out.set_submatrix(a * p, b * p, &t);
        }
    }
    Ok(out)
}

/// Block-extends jointly triangular `p × p` factors whose diagonals agree up to
/// a per-factor constant, reorders and flattens them with one GMD of the
/// reference `Λ`. Returns the map, the per-group mixes and the new factors.
fn flatten(r_list: &[CMatrix], blocks: usize) -> Result<(ReorderMap, CMatrix, CMatrix, Vec<CMatrix>)> {
    let p = r_list[0].rows();
    let map = reorder_map(p, blocks)?;
    let reference = r_list.last().expect("non-empty");
    let lambda: Vec<f64> = (0..p).rev().map(|k| reference[(k, k)].re).collect();
    let g = gmd(&CMatrix::from_real_diag(&lambda))?;
    let t_list = r_list
        .iter()
        .map(|r| {
            let mut t = block_sandwich(&g.u, &reordered(r, &map), &g.v)?;
            for i in 0..t.rows() {
                for j in 0..i {
                    t[(i, j)] = ZERO;
                }
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((map, g.u, g.v, t_list))
}

fn diag_mean(t: &CMatrix) -> f64 {
    let d = t.diag();
    d.iter().map(|z| z.re).sum::<f64>() / d.len().max(1) as f64
}

fn check_inputs(a_list: &[CMatrix]) -> Result<usize> {
    let first = a_list
        .first()
        .ok_or_else(|| Error::InvalidParams("no matrices given".into()))?;
    if !first.is_square() || a_list.iter().any(|a| a.shape() != first.shape()) {
        return Err(Error::DimMismatch("space-time GMD needs equal square matrices".into()));
    }
    for a in a_list {
        let d = a.determinant()?.norm();
        if d == 0.0 {
            return Err(Error::Singular);
        }
        if (d - 1.0).abs() > DET_TOL {
            return Err(Error::DeterminantNotUnit(d));
        }
    }
    Ok(first.rows())
}

/// Two-matrix space-time GMD over `blocks` channel uses.
pub fn st_2gmd(a1: &CMatrix, a2: &CMatrix, blocks: usize) -> Result<SpaceTimeDecomp> {
    let n = check_inputs(&[a1.clone(), a2.clone()])?;
    if blocks < n {
        return Err(Error::InsufficientBlocks { blocks, block_size: n });
    }
    check_size(n * blocks)?;
    let j = jet2(a1, a2)?;
    let (map, ug, vg, t_list) = flatten(&[j.r1.clone(), j.r2.clone()], blocks)?;
    let u_list = vec![compose(&j.u1, &map, &ug), compose(&j.u2, &map, &ug)];
    let v = compose(&j.v, &map, &vg);
    Ok(finish(n, blocks, u_list, v, t_list))
}

fn finish(n: usize, copies: usize, u_list: Vec<CMatrix>, v: CMatrix, t_list: Vec<CMatrix>) -> SpaceTimeDecomp {
    let total = n * copies;
    let retained = v.cols();
    let diag_constants = t_list.iter().map(diag_mean).collect();
    SpaceTimeDecomp {
        n,
        copies,
        u_list,
        v,
        t_list,
        retained,
        dropped: total - retained,
        total,
        diag_constants,
    }
}

fn check_size(total: usize) -> Result<()> {
    if total > MAX_EXTENDED_DIM {
        return Err(Error::InvalidParams(format!(
            "extended dimension {total} exceeds the limit {MAX_EXTENDED_DIM}"
        )));
    }
    Ok(())
}

/// Block count used by a flattening level with block size `p`, so that every
/// level keeps `N − n + 1` groups.
pub fn level_blocks(p: usize, n: usize, blocks: usize) -> usize {
    p + blocks - n
}

/// Joint space-time triangularization of `K` matrices with `|det| = 1`.
///
/// `K = 1` is a block-extended GMD and `K = 2` is [`st_2gmd`]. For `K ≥ 3` the
/// ratios `A_i A_K⁻¹` are decomposed recursively, lifted to a joint
/// triangularization of the `A_i` with equal diagonals, and flattened by one
/// more reorder-and-GMD stage. The resulting diagonals are constant per factor;
/// see [`SpaceTimeDecomp::diag_constants`].
pub fn st_kgmd(a_list: &[CMatrix], blocks: usize) -> Result<SpaceTimeDecomp> {
    let n = check_inputs(a_list)?;
    if blocks < n {
        return Err(Error::InsufficientBlocks { blocks, block_size: n });
    }
    match a_list.len() {
        1 => {
            check_size(n * blocks)?;
            let g = gmd(&a_list[0])?;
            Ok(finish(
                n,
                blocks,
                vec![g.u.block_extend(blocks)],
                g.v.block_extend(blocks),
                vec![g.t.block_extend(blocks)],
            ))
        }
        2 => st_2gmd(&a_list[0], &a_list[1], blocks),
        k => {
            let reference = &a_list[k - 1];
            let ref_inv = reference.inverse()?;
            let ratios = a_list[..k - 1]
                .iter()
                .map(|a| a.matmul(&ref_inv))
                .collect::<Result<Vec<_>>>()?;
            let inner = st_kgmd(&ratios, blocks)?;

            // lift: QR of ext(A_K)⁻¹ V_in = V S
            let (v_lift, s) = qr_decompose(&ext_mul(&ref_inv, &inner.v)?, Tolerances::default().rank)?;
            let s_inv = upper_triangular_inverse(&s)?;
            let mut r_list = Vec::with_capacity(k);
            for (t, c) in inner.t_list.iter().zip(&inner.diag_constants) {
                if !t.is_upper_triangular(LIFT_TOL) {
                    return Err(Error::NumericalBreakdown("inner factor lost triangularity".into()));
                }
                let spread = t.diag().iter().map(|z| (z - c).norm()).fold(0.0, f64::max);
                if spread > LIFT_TOL * c {
                    return Err(Error::NumericalBreakdown(format!("inner diagonal spread {spread:e}")));
                }
                r_list.push(t.matmul(&s_inv)?);
            }
            r_list.push(s_inv);
            let mut u_lift = inner.u_list.clone();
            u_lift.push(inner.v.clone());

            let p = inner.retained;
            let nb = level_blocks(p, n, blocks);
            check_size(inner.total * nb)?;
            let (map, ug, vg, t_list) = flatten(&r_list, nb)?;
            let u_list = u_lift.iter().map(|u| compose(u, &map, &ug)).collect();
            let v = compose(&v_lift, &map, &vg);
            Ok(finish(n, inner.copies * nb, u_list, v, t_list))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::jet2;
    use crate::exact2::{feasibility_2gmd, jet_residual};
    use crate::random;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Dense block extension, used only as an oracle for the structured paths.
    fn dense_ext(a: &CMatrix, copies: usize) -> CMatrix {
        a.block_extend(copies)
    }

    fn check(st: &SpaceTimeDecomp, a_list: &[CMatrix], unit: bool) {
        assert_eq!(st.retained + st.dropped, st.total);
        assert!(st.orthonormality_error() < 1e-9, "orth {}", st.orthonormality_error());
        for (i, a) in a_list.iter().enumerate() {
            assert!(st.t_list[i].lower_residual() == 0.0);
            let e = st.projection_error(i, a).unwrap();
            assert!(e < 1e-8, "projection {e}");
        }
        assert!(st.flatness() < 1e-8, "flatness {}", st.flatness());
        if unit {
            assert!(st.unit_deviation() < 1e-8, "unit {}", st.unit_deviation());
        }
    }

    #[test]
    fn reorder_examples() {
        assert_eq!(reorder_map(2, 3).unwrap().pi, vec![2, 3, 4, 5]);
        assert_eq!(reorder_map(1, 5).unwrap().pi, vec![1, 2, 3, 4, 5]);
        assert_eq!(reorder_map(3, 4).unwrap().pi, vec![3, 5, 7, 6, 8, 10]);
        assert!(matches!(reorder_map(3, 2), Err(Error::InvalidDims(_))));
        assert!(matches!(reorder_map(0, 2), Err(Error::InvalidDims(_))));
    }

    #[test]
    fn reorder_matches_grouping_rule() {
        for n in 1..=5 {
            for blocks in n..n + 6 {
                let map = reorder_map(n, blocks).unwrap();
                let mut got = map.pi.clone();
                got.sort_unstable();
                got.dedup();
                assert_eq!(got.len(), map.pi.len());
                // group k holds kn, kn + (n−1), …, kn + (n−1)²
                let mut expect: Vec<usize> = (1..=blocks - n + 1)
                    .flat_map(|k| (0..n).map(move |t| k * n + t * (n - 1)))
                    .collect();
                expect.sort_unstable();
                assert_eq!(got, expect);
                assert!(got.iter().all(|&p| p >= 1 && p <= n * blocks));
            }
        }
    }

    #[test]
    fn compose_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let outer = random::gaussian_matrix(&mut rng, 3, 3);
        let mix = random::unitary(&mut rng, 3);
        let map = reorder_map(3, 5).unwrap();
        let idx = map.indices0();
        let dense = dense_ext(&outer, 5).select_columns(&idx);
        let expect = &dense * &mix.block_extend(map.groups());
        assert!(compose(&outer, &map, &mix).sub(&expect).unwrap().max_abs() < 1e-13);

        let r = random::gaussian_matrix(&mut rng, 3, 3);
        let dense = dense_ext(&r, 5).select(&idx, &idx);
        assert!(reordered(&r, &map).sub(&dense).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn identity_inputs() {
        let i2 = CMatrix::identity(2);
        let st = st_2gmd(&i2, &i2, 5).unwrap();
        for t in &st.t_list {
            assert!(t.sub(&CMatrix::identity(8)).unwrap().max_abs() < 1e-12);
        }
        let st = st_kgmd(&[i2.clone(), i2.clone(), i2.clone()], 3).unwrap();
        for t in &st.t_list {
            assert!(t.sub(&CMatrix::identity(t.rows())).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_real_pair_over_eight_uses() {
        let a1 = CMatrix::from_real(2, 2, &[2.0, 3.0, 0.0, 0.5]).unwrap();
        let a2 = CMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 0.5]).unwrap();
        assert!(!feasibility_2gmd(&jet_residual(&a1, &a2).unwrap().residual).unwrap());
        let st = st_2gmd(&a1, &a2, 8).unwrap();
        assert_eq!((st.retained, st.dropped, st.total), (14, 2, 16));
        assert_eq!(st.u_list[0].shape(), (16, 14));
        check(&st, &[a1, a2], true);
    }

    #[test]
    fn two_uses_of_a_feasible_pair() {
        let a1 = CMatrix::from_real(2, 2, &[2.0, 0.5, 0.0, 0.5]).unwrap();
        let a2 = CMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 0.5]).unwrap();
        let st = st_2gmd(&a1, &a2, 2).unwrap();
        assert_eq!(st.v.shape(), (4, 2));
        check(&st, &[a1.clone(), a2.clone()], true);
        let j = jet2(&a1, &a2).unwrap();
        let map = reorder_map(2, 2).unwrap();
        let lam = &reordered_block_diagonal(&j.r1, &map)[0];
        assert!((lam[(0, 0)] - j.r1[(1, 1)]).norm() < 1e-15);
        assert!((lam[(1, 1)] - j.r1[(0, 0)]).norm() < 1e-15);
        assert!(gmd(lam).map(|g| (g.lambda - 1.0).abs() < 1e-12).unwrap());
    }

    #[test]
    fn lambda_does_not_depend_on_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a1 = random::unit_modulus_det_matrix(&mut rng, 3);
        let a2 = random::unit_modulus_det_matrix(&mut rng, 3);
        let j = jet2(&a1, &a2).unwrap();
        let map = reorder_map(3, 6).unwrap();
        let l1 = reordered_block_diagonal(&j.r1, &map);
        let l2 = reordered_block_diagonal(&j.r2, &map);
        for (x, y) in l1.iter().zip(&l2) {
            assert!(x.sub(y).unwrap().max_abs() < 1e-9);
            assert!(x.lower_residual() == 0.0);
            let off = x.sub(&CMatrix::from_diag(&x.diag())).unwrap().max_abs();
            assert!(off == 0.0);
        }
    }

    #[test]
    fn edge_loss_vanishes() {
        let a1 = CMatrix::from_real(2, 2, &[2.0, 3.0, 0.0, 0.5]).unwrap();
        let a2 = CMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 0.5]).unwrap();
        for n_blocks in [2usize, 4, 8, 16, 32] {
            let st = st_2gmd(&a1, &a2, n_blocks).unwrap();
            assert_eq!(st.retained * n_blocks, (n_blocks - 1) * st.total);
        }
    }

    #[test]
    fn three_matrices_over_sixteen_uses() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a: Vec<CMatrix> = (0..3).map(|_| random::real_unit_det_matrix(&mut rng, 2)).collect();
        let st = st_kgmd(&a, 16).unwrap();
        let p = 2 * 15;
        assert_eq!(st.total, 2 * 16 * level_blocks(p, 2, 16));
        assert_eq!(st.retained, p * 15);
        check(&st, &a, false);
        // one shared constant for all three factors
        let c = st.diag_constants[0];
        assert!(st.diag_constants.iter().all(|x| (x - c).abs() < 1e-8 * c));
        assert!(c <= 1.0 + 1e-9);
    }

    #[test]
    fn two_matrices_delegate() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let a: Vec<CMatrix> = (0..2).map(|_| random::unit_modulus_det_matrix(&mut rng, 2)).collect();
        let x = st_kgmd(&a, 4).unwrap();
        let y = st_2gmd(&a[0], &a[1], 4).unwrap();
        assert_eq!(x.t_list[0], y.t_list[0]);
        assert_eq!(x.v, y.v);
    }

    #[test]
    fn errors() {
        let i2 = CMatrix::identity(2);
        let d = CMatrix::from_real_diag(&[2.0, 1.0]);
        assert!(matches!(st_2gmd(&d, &i2, 4), Err(Error::DeterminantNotUnit(_))));
        assert!(matches!(
            st_2gmd(&i2, &i2, 1),
            Err(Error::InsufficientBlocks { blocks: 1, block_size: 2 })
        ));
        let s = CMatrix::zeros(2, 2);
        assert_eq!(st_2gmd(&s, &i2, 4).unwrap_err(), Error::Singular);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn st2_invariants(seed in any::<u64>(), n in 1usize..=4, extra in 0usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a1 = random::unit_modulus_det_matrix(&mut rng, n);
            let a2 = random::unit_modulus_det_matrix(&mut rng, n);
            let st = st_2gmd(&a1, &a2, n + extra).unwrap();
            prop_assert_eq!(st.retained, n * (extra + 1));
            check(&st, &[a1, a2], true);
        }

        #[test]
        fn stk_invariants(seed in any::<u64>(), k in 1usize..=4, n in 1usize..=2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<CMatrix> = (0..k).map(|_| random::unit_modulus_det_matrix(&mut rng, n)).collect();
            let st = st_kgmd(&a, n + 1).unwrap();
            check(&st, &a, k <= 2);
        }
    }
}
