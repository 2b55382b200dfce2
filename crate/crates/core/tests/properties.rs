use netmod::matcore::{matrix_from_json, matrix_to_json, qr_decompose, rq_decompose, svd};
use netmod::multicast::{
    augment, build_scheme_2user, build_scheme_kuser, equalize_capacity, mutual_info, sic_simulate, ChannelSet,
    SchemeMode,
};
use netmod::random;
use netmod::rateless::RatelessSpec;
use netmod::spacetime::{reorder_map, st_2gmd};
use netmod::CMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn qr_factors(seed in any::<u64>(), n in 1usize..=6, extra in 0usize..=3) {
        let a = random::gaussian_matrix(&mut rng(seed), n + extra, n);
        let (q, r) = qr_decompose(&a, 1e-12).unwrap();
        prop_assert!(q.orthonormality_error() < 1e-12);
        prop_assert!(r.lower_residual() == 0.0);
        for d in r.diag() {
            prop_assert!(d.re > 0.0 && d.im == 0.0);
        }
        prop_assert!((&q * &r).sub(&a).unwrap().frobenius_norm() < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn rq_factors(seed in any::<u64>(), n in 1usize..=6) {
        let a = random::gaussian_matrix(&mut rng(seed), n, n);
        let (r, q) = rq_decompose(&a, 1e-12).unwrap();
        prop_assert!(q.orthonormality_error() < 1e-12);
        prop_assert!(r.lower_residual() < 1e-12 * a.frobenius_norm());
        prop_assert!((&r * &q).sub(&a).unwrap().frobenius_norm() < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn svd_factors(seed in any::<u64>(), n in 1usize..=7) {
        let a = random::gaussian_matrix(&mut rng(seed), n, n);
        let s = svd(&a).unwrap();
        prop_assert!(s.u.orthonormality_error() < 1e-12 && s.v.orthonormality_error() < 1e-12);
        prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]) && s.sigma[n - 1] >= 0.0);
        prop_assert!(s.reconstruct().sub(&a).unwrap().frobenius_norm() < 1e-12 * a.frobenius_norm());
        let det = a.determinant().unwrap().norm();
        prop_assert!((s.sigma.iter().product::<f64>() - det).abs() < 1e-10 * det.max(1.0));
    }

    #[test]
    fn matrix_file_round_trip(seed in any::<u64>(), r in 1usize..=5, c in 1usize..=5) {
        let a = random::gaussian_matrix(&mut rng(seed), r, c).scale_real(1e3);
        let b = matrix_from_json(&matrix_to_json(&a)).unwrap();
        prop_assert_eq!(&a, &b);
        let tol = 1e-9;
        prop_assert_eq!(a.shape_report(tol), b.shape_report(tol));
    }

    #[test]
    fn reorder_map_is_injective(n in 1usize..=6, extra in 0usize..=20) {
        let blocks = n + extra;
        let map = reorder_map(n, blocks).unwrap();
        prop_assert_eq!(map.pi.len(), n * (blocks - n + 1));
        let mut seen = vec![false; n * blocks + 1];
        for &p in &map.pi {
            prop_assert!((1..=n * blocks).contains(&p));
            prop_assert!(!seen[p]);
            seen[p] = true;
        }
    }

    #[test]
    fn space_time_accounting(seed in any::<u64>(), n in 1usize..=3, extra in 0usize..=6) {
        let mut g = rng(seed);
        let blocks = n + extra;
        let a1 = random::unit_modulus_det_matrix(&mut g, n);
        let a2 = random::unit_modulus_det_matrix(&mut g, n);
        let st = st_2gmd(&a1, &a2, blocks).unwrap();
        prop_assert_eq!(st.retained, n * (blocks - n + 1));
        prop_assert_eq!(st.dropped, n * (n - 1));
        prop_assert_eq!(st.retained + st.dropped, n * blocks);
        prop_assert!(st.unit_deviation() < 1e-8);
    }

    #[test]
    fn augmented_determinant(seed in any::<u64>(), m in 1usize..=5, n in 1usize..=5) {
        let mut g = rng(seed);
        let h = random::gaussian_matrix(&mut g, m, n);
        let cx = random::covariance(&mut g, n, 1.0);
        let a = augment(&h, &cx).unwrap();
        let c = mutual_info(&h, &cx).unwrap();
        let lhs = 2.0 * a.g.determinant().unwrap().norm().log2();
        prop_assert!((lhs - c).abs() <= 1e-8 * c.max(1e-12));
        prop_assert_eq!(a.q_tilde.shape(), (m, n));
    }

    #[test]
    fn power_constraint_enforced(seed in any::<u64>(), n in 1usize..=4, excess in 0.01f64..2.0) {
        let mut g = rng(seed);
        let h = random::gaussian_matrix(&mut g, n, n);
        let cx = random::covariance(&mut g, n, 1.0 + excess);
        prop_assert!(ChannelSet::new(vec![h.clone()], cx).is_err());
        let cx = random::covariance(&mut g, n, 1.0);
        prop_assert!(ChannelSet::new(vec![h], cx).is_ok());
    }

    #[test]
    fn two_user_rates_sum_to_capacity(seed in any::<u64>(), n in 1usize..=4) {
        let mut g = rng(seed);
        let cx = random::covariance(&mut g, n, 1.0);
        let h1 = random::gaussian_matrix(&mut g, n, n).scale_real(2.0);
        let c = mutual_info(&h1, &cx).unwrap();
        let h2 = equalize_capacity(&random::gaussian_matrix(&mut g, n + 1, n), &cx, c).unwrap();
        let s = build_scheme_2user(&h1, &h2, &cx).unwrap();
        prop_assert_eq!(s.mode, SchemeMode::TwoUserExact);
        prop_assert!((s.stream_rates.iter().sum::<f64>() - c).abs() < 1e-8 * c.max(1.0));
        prop_assert!(s.gain_spread() < 1e-8);
    }

    #[test]
    fn three_user_rate_accounting(seed in any::<u64>(), extra in 0usize..=4) {
        let mut g = rng(seed);
        let n = 2;
        let blocks = n + 1 + extra;
        let cx = CMatrix::identity(n).scale_real(0.5);
        let h1 = random::gaussian_matrix(&mut g, n, n).scale_real(2.0);
        let c = mutual_info(&h1, &cx).unwrap();
        let hs: Vec<CMatrix> = std::iter::once(h1)
            .chain((0..2).map(|_| equalize_capacity(&random::gaussian_matrix(&mut g, n, n), &cx, c).unwrap()))
            .collect();
        let s = build_scheme_kuser(&hs, &cx, blocks).unwrap();
        let rate = s.rate_per_use();
        match s.mode {
            SchemeMode::KUserExact { .. } => prop_assert!((rate - c).abs() < 1e-7 * c),
            SchemeMode::KUserSpaceTime { .. } => {
                prop_assert!(rate > 0.0 && rate <= c * (1.0 + 1e-9), "rate {} above {}", rate, c);
            }
            other => prop_assert!(false, "unexpected mode {:?}", other),
        }
        prop_assert!(s.gain_spread() < 1e-8);
    }

    #[test]
    fn rateless_gains(levels in 1usize..=8, rate in 0.01f64..20.0) {
        let s = RatelessSpec::new(levels, rate).unwrap();
        for (m, a) in s.alpha.iter().enumerate() {
            prop_assert!(((m + 1) as f64 * (1.0 + a * a).log2() - rate).abs() < 1e-9 * rate.max(1.0));
            prop_assert!(*a > 0.0);
        }
        prop_assert!(s.alpha.windows(2).all(|w| w[0] > w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_reproducible(seed in any::<u64>(), trials in 1usize..=9000) {
        let mut g = rng(seed);
        let n = 2;
        let cx = random::covariance(&mut g, n, 1.0);
        let h1 = random::gaussian_matrix(&mut g, n, n);
        let c = mutual_info(&h1, &cx).unwrap();
        let h2 = equalize_capacity(&random::gaussian_matrix(&mut g, n, n), &cx, c).unwrap();
        let s = build_scheme_2user(&h1, &h2, &cx).unwrap();
        let a = sic_simulate(&s, trials, seed).unwrap();
        let b = sic_simulate(&s, trials, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.seed, seed);
        prop_assert_eq!(a.trials, trials);
        let other = sic_simulate(&s, trials, seed ^ 1).unwrap();
        prop_assert_ne!(a, other);
    }
}
