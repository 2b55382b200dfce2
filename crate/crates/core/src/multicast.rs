//! Common-message MIMO multicast: channel augmentation, scheme design from a
//! joint triangularization, precoding, receiver front-ends and a Monte-Carlo
//! SIC simulator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::decomp::{build_ratio_matrices, jet2, kgmd_to_kjet, lift_constant_diagonal};
use crate::error::{Error, Result};
use crate::exact2::{exact_2gmd, exact_2gmd_diagonal3};
use crate::matcore::{hermitian_eigen, hermitian_sqrt, qr_decompose, CMatrix, Tolerances, C64, ZERO};
use crate::random::complex_gaussian;
use crate::spacetime::st_kgmd;

/// Largest capacity gap (bits) accepted between users.
pub const TOL_RATE: f64 = 1e-9;
/// Monte-Carlo trials per RNG stream.
pub const CHUNK: usize = 4096;
const LIFT_TOL: f64 = 1e-8;

/// Channel matrices `H_i` (m_i × n) and an input covariance with `tr ≤ 1`.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelSet {
    pub h_list: Vec<CMatrix>,
    pub cx: CMatrix,
}

impl ChannelSet {
    pub fn new(h_list: Vec<CMatrix>, cx: CMatrix) -> Result<Self> {
        let tol = Tolerances::default();
        let n = cx.rows();
        if !cx.is_square() || h_list.iter().any(|h| h.cols() != n) {
            return Err(Error::DimMismatch("every H_i needs as many columns as C_x".into()));
        }
        let min = hermitian_eigen(&cx, &tol)?.first().copied().unwrap_or(0.0);
        if min < -tol.psd {
            return Err(Error::NotPsd(min));
        }
        let tr = cx.trace().re;
        if tr > 1.0 + tol.structural {
            return Err(Error::InvalidParams(format!("tr(C_x) = {tr} exceeds 1")));
        }
        Ok(Self { h_list, cx })
    }
}

/// `log₂ det(I + H C_x H†)` in bits.
pub fn mutual_info(h: &CMatrix, cx: &CMatrix) -> Result<f64> {
    let tol = Tolerances::default();
    let min = hermitian_eigen(cx, &tol)?.first().copied().unwrap_or(0.0);
    if min < -tol.psd {
        return Err(Error::NotPsd(min));
    }
    let m = h.rows();
    let hch = h.matmul(cx)?.matmul(&h.adjoint())?;
    let k = CMatrix::identity(m).add(&hch)?;
    Ok(k.determinant()?.re.max(f64::MIN_POSITIVE).log2().max(0.0))
}

/// Square factor of the augmented channel `[H √C_x; I] = Q G`.
#[derive(Debug, Clone, Serialize)]
pub struct Augmented {
    /// n × n, upper-triangular with positive diagonal.
    pub g: CMatrix,
    /// The first `m` rows of `Q`, acting on the channel output.
    pub q_tilde: CMatrix,
    /// Mutual information in bits.
    pub capacity: f64,
}

pub fn augment(h: &CMatrix, cx: &CMatrix) -> Result<Augmented> {
    let tol = Tolerances::default();
    let n = cx.rows();
    if h.cols() != n {
        return Err(Error::DimMismatch(format!("H has {} columns, C_x is {n}x{n}", h.cols())));
    }
    let sq = hermitian_sqrt(cx, &tol)?;
    let stacked = h.matmul(&sq)?.vstack(&CMatrix::identity(n))?;
    let (q, g) = qr_decompose(&stacked, tol.rank)?;
    let capacity = mutual_info(h, cx)?;
    let log_det: f64 = g.diag().iter().map(|z| z.re.log2()).sum();
    if (2.0 * log_det - capacity).abs() > 1e-8 * capacity.max(1.0) {
        return Err(Error::NumericalBreakdown(format!(
            "2 log det G = {} but the mutual information is {capacity}",
            2.0 * log_det
        )));
    }
    Ok(Augmented {
        g,
        q_tilde: q.submatrix(0, 0, h.rows(), n),
        capacity,
    })
}

/// Scales `h` so that its mutual information equals `target` bits.
pub fn equalize_capacity(h: &CMatrix, cx: &CMatrix, target: f64) -> Result<CMatrix> {
    let current = mutual_info(h, cx)?;
    if target <= 0.0 {
        return Ok(h.scale_real(0.0));
    }
    if current <= 0.0 {
        return Err(Error::InvalidParams("cannot rescale a zero-capacity channel".into()));
    }
    let f = |s: f64| mutual_info(&h.scale_real(s), cx).map(|c| c - target);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while f(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(h.scale_real(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SchemeMode {
    SingleUser,
    TwoUserExact,
    KUserExact { blocks: usize },
    KUserSpaceTime { blocks: usize },
}

/// Per-user receiver data.
#[derive(Debug, Clone, Serialize)]
pub struct UserFront {
    pub h: CMatrix,
    pub q_tilde: CMatrix,
    /// `copies·n × m`.
    pub u: CMatrix,
    /// `m × m` upper-triangular, `U† ext(G) V`.
    pub r: CMatrix,
    pub capacity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MulticastScheme {
    pub mode: SchemeMode,
    pub n: usize,
    /// Channel uses spanned by one extended symbol.
    pub copies: usize,
    pub sqrt_cx: CMatrix,
    /// `copies·n × m` precoder columns.
    pub v: CMatrix,
    pub users: Vec<UserFront>,
    /// Per-stream gain usable by every user (minimum over users).
    pub gains: Vec<f64>,
    /// `log₂(gain²)` per stream, bits per extended symbol.
    pub stream_rates: Vec<f64>,
}

impl MulticastScheme {
    pub fn streams(&self) -> usize {
        self.v.cols()
    }

    /// Sum of the stream rates divided by the number of channel uses.
    pub fn rate_per_use(&self) -> f64 {
        self.stream_rates.iter().sum::<f64>() / self.copies as f64
    }

    /// Largest relative difference between any user's diagonal and the first.
    pub fn gain_spread(&self) -> f64 {
        let d0 = self.users[0].r.diag();
        self.users
            .iter()
            .flat_map(|u| {
                u.r.diag()
                    .into_iter()
                    .zip(d0.iter())
                    .map(|(a, b)| (a - b).norm() / b.norm())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// `ext(√C_x) V`: maps the `m` stream symbols to `copies` channel inputs.
    pub fn precoder(&self) -> CMatrix {
        ext_left(&self.sqrt_cx, &self.v)
    }

    /// `U_i† ext(Q̃_i)†`.
    pub fn receiver(&self, user: usize) -> CMatrix {
        let uf = &self.users[user];
        let q_ext = uf.q_tilde.block_extend(self.copies);
        uf.u.adjoint_mul(&q_ext.adjoint()).expect("receiver dimensions")
    }
}

fn ext_left(a: &CMatrix, v: &CMatrix) -> CMatrix {
    crate::spacetime::ext_mul(a, v).expect("block dimensions")
}

fn gains_from(users: &[UserFront]) -> (Vec<f64>, Vec<f64>) {
    let m = users[0].r.rows();
    let gains: Vec<f64> = (0..m)
        .map(|k| users.iter().map(|u| u.r[(k, k)].re).fold(f64::INFINITY, f64::min))
        .collect();
    let rates = gains.iter().map(|g| (g * g).log2()).collect();
    (gains, rates)
}

fn check_rates(augs: &[Augmented]) -> Result<()> {
    let lo = augs.iter().map(|a| a.capacity).fold(f64::INFINITY, f64::min);
    let hi = augs.iter().map(|a| a.capacity).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > TOL_RATE {
        return Err(Error::RateMismatch(lo, hi));
    }
    Ok(())
}

/// Two-user scheme from the JET of the augmented matrices.
pub fn build_scheme_2user(h1: &CMatrix, h2: &CMatrix, cx: &CMatrix) -> Result<MulticastScheme> {
    let set = ChannelSet::new(vec![h1.clone(), h2.clone()], cx.clone())?;
    let augs = set
        .h_list
        .iter()
        .map(|h| augment(h, cx))
        .collect::<Result<Vec<_>>>()?;
    check_rates(&augs)?;
    let j = jet2(&augs[0].g, &augs[1].g)?;
    let users = vec![
        UserFront {
            h: h1.clone(),
            q_tilde: augs[0].q_tilde.clone(),
            u: j.u1,
            r: j.r1,
            capacity: augs[0].capacity,
        },
        UserFront {
            h: h2.clone(),
            q_tilde: augs[1].q_tilde.clone(),
            u: j.u2,
            r: j.r2,
            capacity: augs[1].capacity,
        },
    ];
    let (gains, stream_rates) = gains_from(&users);
    Ok(MulticastScheme {
        mode: SchemeMode::TwoUserExact,
        n: cx.rows(),
        copies: 1,
        sqrt_cx: hermitian_sqrt(cx, &Tolerances::default())?,
        v: j.v,
        users,
        gains,
        stream_rates,
    })
}

fn is_real_diagonal(a: &CMatrix) -> bool {
    let n = a.rows();
    a.is_real(1e-12)
        && (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)].norm() <= 1e-12 * a.max_abs()))
}

/// Exact joint GMD of two ratio matrices when one of the closed-form paths
/// applies and the pair is feasible.
pub(crate) fn exact_pair(a1: &CMatrix, a2: &CMatrix) -> Option<(CMatrix, CMatrix, CMatrix)> {
    let n = a1.rows();
    if !a1.is_real(1e-12) || !a2.is_real(1e-12) {
        return None;
    }
    match n {
        2 => exact_2gmd(a1, a2).ok().map(|e| (e.u1, e.u2, e.v)),
        3 if is_real_diagonal(a1) && is_real_diagonal(a2) => {
            let d = |a: &CMatrix| [a[(0, 0)].re, a[(1, 1)].re, a[(2, 2)].re];
            exact_2gmd_diagonal3(&d(a1), &d(a2)).ok()
        }
        _ => None,
    }
}

/// `K`-user scheme over `blocks` channel uses. Two users delegate to
/// [`build_scheme_2user`]; three users use the exact construction when it
/// exists; otherwise the space-time decomposition of the ratio matrices is
/// lifted to a joint triangularization of the extended augmented matrices.
pub fn build_scheme_kuser(h_list: &[CMatrix], cx: &CMatrix, blocks: usize) -> Result<MulticastScheme> {
    let set = ChannelSet::new(h_list.to_vec(), cx.clone())?;
    let k = set.h_list.len();
    if k == 0 {
        return Err(Error::InvalidParams("no users".into()));
    }
    if k == 2 {
        return build_scheme_2user(&h_list[0], &h_list[1], cx);
    }
    let n = cx.rows();
    let augs = set
        .h_list
        .iter()
        .map(|h| augment(h, cx))
        .collect::<Result<Vec<_>>>()?;
    check_rates(&augs)?;
    let sqrt_cx = hermitian_sqrt(cx, &Tolerances::default())?;

    if k == 1 {
        let a = &augs[0];
        let users = vec![UserFront {
            h: h_list[0].clone(),
            q_tilde: a.q_tilde.clone(),
            u: CMatrix::identity(n),
            r: a.g.clone(),
            capacity: a.capacity,
        }];
        let (gains, stream_rates) = gains_from(&users);
        return Ok(MulticastScheme {
            mode: SchemeMode::SingleUser,
            n,
            copies: 1,
            sqrt_cx,
            v: CMatrix::identity(n),
            users,
            gains,
            stream_rates,
        });
    }
    if blocks == 0 {
        return Err(Error::InsufficientBlocks { blocks, block_size: n });
    }

    let g_list: Vec<CMatrix> = augs.iter().map(|a| a.g.clone()).collect();
    let ratios = build_ratio_matrices(&g_list)?;

    let exact = if k == 3 { exact_pair(&ratios[0], &ratios[1]) } else { None };
    let (mode, copies, jet) = match exact {
        Some((u1, u2, v)) => {
            let g_ext: Vec<CMatrix> = g_list.iter().map(|g| g.block_extend(blocks)).collect();
            let jet = kgmd_to_kjet(
                &g_ext,
                &[u1.block_extend(blocks), u2.block_extend(blocks)],
                &v.block_extend(blocks),
                LIFT_TOL,
            )?;
            (SchemeMode::KUserExact { blocks }, blocks, jet)
        }
        None => {
            let st = st_kgmd(&ratios, blocks)?;
            let g_ext: Vec<CMatrix> = g_list.iter().map(|g| g.block_extend(st.copies)).collect();
            let (jet, _) = lift_constant_diagonal(&g_ext, &st.u_list, &st.v, LIFT_TOL)?;
            (SchemeMode::KUserSpaceTime { blocks }, st.copies, jet)
        }
    };
    let users: Vec<UserFront> = jet
        .u_list
        .into_iter()
        .zip(jet.r_list)
        .zip(augs.iter().zip(h_list))
        .map(|((u, r), (a, h))| UserFront {
            h: h.clone(),
            q_tilde: a.q_tilde.clone(),
            u,
            r,
            capacity: a.capacity,
        })
        .collect();
    let (gains, stream_rates) = gains_from(&users);
    Ok(MulticastScheme {
        mode,
        n,
        copies,
        sqrt_cx,
        v: jet.v,
        users,
        gains,
        stream_rates,
    })
}

/// `x = ext(√C_x) V x̃`.
pub fn precode(x_tilde: &[C64], scheme: &MulticastScheme) -> Result<Vec<C64>> {
    if x_tilde.len() != scheme.streams() {
        return Err(Error::DimMismatch(format!(
            "expected {} stream symbols, got {}",
            scheme.streams(),
            x_tilde.len()
        )));
    }
    scheme.precoder().mul_vec(x_tilde)
}

/// `ỹ_i = U_i† ext(Q̃_i)† y_i`.
pub fn receiver_front(y: &[C64], scheme: &MulticastScheme, user: usize) -> Result<Vec<C64>> {
    let uf = scheme
        .users
        .get(user)
        .ok_or_else(|| Error::InvalidParams(format!("no user {user}")))?;
    let expect = uf.h.rows() * scheme.copies;
    if y.len() != expect {
        return Err(Error::DimMismatch(format!("expected {expect} outputs, got {}", y.len())));
    }
    scheme.receiver(user).mul_vec(y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamStats {
    pub user: usize,
    pub stream: usize,
    pub r_k: f64,
    pub rate_bits: f64,
    pub expected_sinr: f64,
    pub empirical_sinr: f64,
    pub empirical_rate_bits: f64,
    /// Linear MMSE of the stream after cancellation, `1 / (1 + SINR)`.
    pub mse: f64,
    pub rate_margin_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserStats {
    pub user: usize,
    pub capacity_bits: f64,
    pub rate_per_use_bits: f64,
    pub empirical_rate_per_use_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub trials: usize,
    pub seed: u64,
    pub copies: usize,
    pub streams: Vec<StreamStats>,
    pub users: Vec<UserStats>,
}

impl SimReport {
    pub const CSV_HEADER: &'static str = "user,stream,r_k,rate_bits,empirical_sinr,empirical_rate_bits";

    /// Per-stream table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.streams {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?}\n",
                s.user, s.stream, s.r_k, s.rate_bits, s.empirical_sinr, s.empirical_rate_bits
            ));
        }
        out
    }
}

/// Running sums per (user, stream): `Σ z x̄`, `Σ |x|²`, `Σ |z|²`.
#[derive(Clone)]
struct Acc {
    cross: Vec<C64>,
    power: Vec<f64>,
    energy: Vec<f64>,
}

impl Acc {
    fn new(len: usize) -> Self {
        Self {
            cross: vec![ZERO; len],
            power: vec![0.0; len],
            energy: vec![0.0; len],
        }
    }

    fn merge(mut self, other: &Acc) -> Self {
        for i in 0..self.cross.len() {
            self.cross[i] += other.cross[i];
            self.power[i] += other.power[i];
            self.energy[i] += other.energy[i];
        }
        self
    }
}

/// Thread count from `NETMOD_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("NETMOD_THREADS").ok()?.parse().ok().filter(|&n: &usize| n > 0)
}

/// Monte-Carlo SIC over the scheme: unit-power Gaussian stream symbols and
/// unit-variance noise; streams are decoded from the last to the first,
/// cancelling already-decoded streams with the true symbols.
pub fn sic_simulate(scheme: &MulticastScheme, trials: usize, seed: u64) -> Result<SimReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    let m = scheme.streams();
    let k = scheme.users.len();
    let p = scheme.precoder();
    // effective stream-to-output map and noise map per user
    let maps: Vec<(CMatrix, CMatrix)> = (0..k)
        .map(|i| {
            let w = scheme.receiver(i);
            let h_ext = scheme.users[i].h.block_extend(scheme.copies);
            let eff = w.matmul(&h_ext.matmul(&p)?)?;
            Ok((eff, w))
        })
        .collect::<Result<Vec<_>>>()?;

    let chunks = trials.div_ceil(CHUNK);
    let run_chunk = |c: usize| -> Acc {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let count = CHUNK.min(trials - c * CHUNK);
        let mut acc = Acc::new(k * m);
        let mut x = vec![ZERO; m];
        for _ in 0..count {
            for xi in x.iter_mut() {
                *xi = complex_gaussian(&mut rng);
            }
            for (i, (eff, w)) in maps.iter().enumerate() {
                let noise: Vec<C64> = (0..w.cols()).map(|_| complex_gaussian(&mut rng)).collect();
                let r = &scheme.users[i].r;
                for s in 0..m {
                    let mut y = ZERO;
                    for j in 0..m {
                        y += eff[(s, j)] * x[j];
                    }
                    for j in 0..w.cols() {
                        y += w[(s, j)] * noise[j];
                    }
                    for j in s + 1..m {
                        y -= r[(s, j)] * x[j];
                    }
                    let idx = i * m + s;
                    acc.cross[idx] += y * x[s].conj();
                    acc.power[idx] += x[s].norm_sqr();
                    acc.energy[idx] += y.norm_sqr();
                }
            }
        }
        acc
    };
    let partials: Vec<Acc> = match thread_cap() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParams(e.to_string()))?
            .install(|| (0..chunks).into_par_iter().map(run_chunk).collect()),
        None => (0..chunks).into_par_iter().map(run_chunk).collect(),
    };
    let total = partials.iter().fold(Acc::new(k * m), |a, b| a.merge(b));

    let t = trials as f64;
    let mut streams = Vec::with_capacity(k * m);
    let mut users = Vec::with_capacity(k);
    for i in 0..k {
        let mut emp_sum = 0.0;
        for s in 0..m {
            let idx = i * m + s;
            let r_k = scheme.users[i].r[(s, s)].re;
            let sinr = if total.energy[idx] <= f64::MIN_POSITIVE || total.power[idx] <= 0.0 {
                0.0
            } else {
                let beta = total.cross[idx] / total.power[idx];
                let noise = (total.energy[idx] - total.cross[idx].norm_sqr() / total.power[idx]) / t;
                let signal = beta.norm_sqr() * total.power[idx] / t;
                if noise <= 0.0 {
                    f64::MAX
                } else {
                    signal / noise
                }
            };
            let rate_bits = (r_k * r_k).log2();
            let emp_rate = (1.0 + sinr).log2();
            emp_sum += emp_rate;
            streams.push(StreamStats {
                user: i,
                stream: s,
                r_k,
                rate_bits,
                expected_sinr: r_k * r_k - 1.0,
                empirical_sinr: sinr,
                empirical_rate_bits: emp_rate,
                mse: 1.0 / (1.0 + sinr),
                rate_margin_bits: emp_rate - rate_bits,
            });
        }
        let own: f64 = (0..m).map(|s| (scheme.users[i].r[(s, s)].re.powi(2)).log2()).sum();
        users.push(UserStats {
            user: i,
            capacity_bits: scheme.users[i].capacity,
            rate_per_use_bits: own / scheme.copies as f64,
            empirical_rate_per_use_bits: emp_sum / scheme.copies as f64,
        });
    }
    Ok(SimReport {
        trials,
        seed,
        copies: scheme.copies,
        streams,
        users,
    })
}
