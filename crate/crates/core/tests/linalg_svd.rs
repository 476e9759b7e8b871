mod common;

use common::{jacobi_svd, l2_law, tail_sq, truncate, tv};
use lora_dp::svd::{dense_svd, randomized_svd, L2Distribution, RandomizedOptions};
use lora_dp::synthetic::gaussian_matrix;
use lora_dp::{l2_sample, svd, svd_sparse, PreferenceMatrix, SeededRng};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn singular_values_match_jacobi() {
    for (s, (m, n)) in [(3, 5), (12, 7), (30, 40), (50, 80)].into_iter().enumerate() {
        let t = gaussian_matrix(m, n, &mut SeededRng::new(1, s as u64));
        let f = svd(&t, m.min(n)).unwrap();
        let oracle = jacobi_svd(&t);
        for (a, b) in f.sigma().iter().zip(&oracle.sigma) {
            assert!((a - b).abs() < 1e-10 * oracle.sigma[0], "{a} vs {b}");
        }
    }
}

#[test]
fn tail_identity_on_gaussian_50x80() {
    let t = gaussian_matrix(50, 80, &mut SeededRng::new(2, 0));
    let oracle = jacobi_svd(&t);
    let f = svd(&t, 50).unwrap();
    for k in [1, 5, 10, 25, 49] {
        let residual = (&t - f.low_rank_matrix(k).unwrap()).norm_squared();
        let expect = tail_sq(&oracle.sigma, k);
        assert!((residual - expect).abs() <= 1e-6 * expect);
        let r = f.truncated(k).unwrap();
        let tail = r.residual_tail_sq().unwrap();
        assert!((tail - expect).abs() <= 1e-6 * expect);
    }
}

#[test]
fn truncated_rank_has_tail_and_frobenius_identity() {
    let t = gaussian_matrix(40, 30, &mut SeededRng::new(3, 0));
    let f = svd(&t, 6).unwrap();
    let explained: f64 = f.sigma().iter().map(|s| s * s).sum();
    let total = t.norm_squared();
    assert!((explained + f.residual_tail_sq().unwrap() - total).abs() <= 1e-6 * total);
}

#[test]
fn low_rank_row_and_entry_match_dense_oracle() {
    let t = gaussian_matrix(30, 40, &mut SeededRng::new(4, 0));
    let f = svd(&t, 30).unwrap();
    for i in [0, 7, 29] {
        let row = f.low_rank_row(i, 30).unwrap();
        assert!((row.transpose() - t.row(i)).amax() < 1e-8);
    }
    let t = gaussian_matrix(20, 20, &mut SeededRng::new(5, 0));
    let f = svd(&t, 20).unwrap();
    let oracle = truncate(&jacobi_svd(&t), 5);
    let entry = f.low_rank_entry(3, 7, 5).unwrap();
    assert!((entry - oracle[(3, 7)]).abs() < 1e-10);
    let row = f.low_rank_row(3, 5).unwrap();
    assert!((row[7] - entry).abs() < 1e-12);
    assert!(f.low_rank_row(3, 21).is_err());
    assert!(f.low_rank_entry(20, 0, 1).is_err());
    assert!(f.low_rank_row(0, 0).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn eckart_young_beats_random_rank_k() {
    let mut rng = SeededRng::new(6, 0);
    for inst in 0..5 {
        let t = gaussian_matrix(20, 20, &mut rng);
        let k = 1 + inst;
        let best = (&t - svd(&t, 20).unwrap().low_rank_matrix(k).unwrap()).norm();
        for _ in 0..100 {
            let b = gaussian_matrix(20, k, &mut rng) * gaussian_matrix(k, 20, &mut rng);
            assert!(best <= (&t - b).norm());
        }
    }
}

#[test]
fn orthonormal_factors() {
    let t = gaussian_matrix(60, 45, &mut SeededRng::new(7, 0));
    let f = svd(&t, 45).unwrap();
    let gu = f.left().transpose() * f.left();
    let gv = f.right().transpose() * f.right();
    assert!((gu - DMatrix::identity(45, 45)).amax() < 1e-8);
    assert!((gv - DMatrix::identity(45, 45)).amax() < 1e-8);
}

#[test]
fn sign_convention_holds() {
    let t = gaussian_matrix(15, 25, &mut SeededRng::new(8, 0));
    let f = svd(&t, 15).unwrap();
    for lam in 0..15 {
        let v = f.right().column(lam);
        let big = v.iter().copied().fold(0.0_f64, |a, x| a.max(x.abs()));
        let first = v.iter().position(|x| (x.abs() - big).abs() <= 1e-10 * big).unwrap();
        assert!(v[first] >= 0.0);
    }
    // Flipping the matrix sign keeps the right vectors and flips the left.
    let g = svd(&(-&t), 15).unwrap();
    assert!((g.right() - f.right()).amax() < 1e-10);
    assert!((g.left() + f.left()).amax() < 1e-10);
}

#[test]
fn small_examples() {
    let f = svd(&DMatrix::identity(2, 2), 2).unwrap();
    assert_eq!(f.sigma(), &[1.0, 1.0]);
    let mut e = DMatrix::zeros(4, 4);
    e[(0, 0)] = 1.0;
    let f = svd(&e, 2).unwrap();
    assert!((f.sigma()[0] - 1.0).abs() < 1e-15 && f.sigma()[1].abs() < 1e-15);
    let row = f.low_rank_row(0, 1).unwrap();
    assert!((row[0] - 1.0).abs() < 1e-15 && row.iter().skip(1).all(|x| x.abs() < 1e-15));
    assert!(svd(&e, 0).is_err());
    assert!(svd(&e, 5).is_err());
}

#[test]
fn sparse_and_randomized_agree_with_dense() {
    let mut rng = SeededRng::new(9, 0);
    let entries: Vec<(usize, usize)> = (0..600).map(|_| (rng.below(80), rng.below(120))).collect();
    let t = PreferenceMatrix::from_entries(80, 120, entries).unwrap();
    let dense = dense_svd(&t.to_dense(), 5).unwrap();
    let sparse = svd_sparse(&t, 5).unwrap();
    for (a, b) in dense.sigma().iter().zip(sparse.sigma()) {
        assert!((a - b).abs() < 1e-9 * dense.sigma()[0]);
    }
    // A spectrum with clear gaps lets subspace iteration converge tightly.
    let g = gaussian_matrix(100, 140, &mut rng);
    let mut planted = g.clone() * 0.01;
    for l in 0..4 {
        let u = gaussian_matrix(100, 1, &mut rng).normalize();
        let v = gaussian_matrix(140, 1, &mut rng).normalize();
        planted += (40.0 - 8.0 * l as f64) * &u * v.transpose();
    }
    let exact = dense_svd(&planted, 4).unwrap();
    let approx = randomized_svd(&planted, 4, RandomizedOptions::default()).unwrap();
    for (a, b) in exact.sigma().iter().zip(approx.sigma()) {
        assert!((a - b).abs() < 1e-8 * exact.sigma()[0], "{a} vs {b}");
    }
}

#[test]
fn l2_point_mass_and_errors() {
    let mut rng = SeededRng::new(10, 0);
    for _ in 0..100 {
        assert_eq!(l2_sample(&[0.0, 0.0, 1.0, 0.0], &mut rng).unwrap(), 2);
    }
    assert!(l2_sample(&[0.0, 0.0], &mut rng).is_err());
    assert!(l2_sample(&[], &mut rng).is_err());
}

#[test]
fn l2_three_four_within_three_standard_errors() {
    let mut rng = SeededRng::new(11, 0);
    let draws = 100_000;
    let ones = (0..draws).filter(|_| l2_sample(&[3.0, 4.0], &mut rng).unwrap() == 1).count();
    let p = ones as f64 / draws as f64;
    let se = (0.64 * 0.36 / draws as f64).sqrt();
    assert!((p - 0.64).abs() < 3.0 * se, "p = {p}");
}

#[test]
fn l2_uniform_passes_chi_square() {
    let mut rng = SeededRng::new(12, 0);
    let draws = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        counts[l2_sample(&[1.0, 1.0, 1.0, 1.0], &mut rng).unwrap()] += 1;
    }
    let expect = draws as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // 0.999 quantile of χ² with 3 degrees of freedom.
    assert!(chi2 < 16.266, "chi2 = {chi2}");
}

#[test]
fn l2_matches_low_rank_row_law() {
    let t = gaussian_matrix(25, 30, &mut SeededRng::new(13, 0));
    let oracle = truncate(&jacobi_svd(&t), 4);
    let row: Vec<f64> = oracle.row(5).iter().copied().collect();
    let exact = l2_law(&row);
    let f = svd(&t, 4).unwrap();
    let dist = L2Distribution::new(f.low_rank_row(5, 4).unwrap().as_slice()).unwrap();
    let mut rng = SeededRng::new(13, 1);
    let mut freq = vec![0.0; 30];
    let draws = 100_000;
    for _ in 0..draws {
        freq[dist.sample(&mut rng)] += 1.0 / draws as f64;
    }
    assert!(tv(&freq, &exact) < 0.01);
    assert!(tv(&dist.probabilities(), &exact) < 1e-10);
}

#[test]
fn rng_streams_are_reproducible_and_independent() {
    use rand::RngCore;
    let a: Vec<u64> = (0..8).map({ let mut r = SeededRng::new(5, 3); move |_| r.next_u64() }).collect();
    let b: Vec<u64> = (0..8).map({ let mut r = SeededRng::new(5, 3); move |_| r.next_u64() }).collect();
    let c: Vec<u64> = (0..8).map({ let mut r = SeededRng::new(5, 4); move |_| r.next_u64() }).collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frobenius_identity(m in 1usize..20, n in 1usize..20, seed in 0u64..1000, frac in 0.0f64..1.0) {
        let t = gaussian_matrix(m, n, &mut SeededRng::new(seed, 0));
        let r = ((m.min(n) as f64 * frac) as usize).max(1);
        let f = svd(&t, r).unwrap();
        let total = t.norm_squared();
        let explained: f64 = f.sigma().iter().map(|s| s * s).sum();
        prop_assert!((explained + f.residual_tail_sq().unwrap() - total).abs() <= 1e-6 * total);
        prop_assert!(f.sigma().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.sigma().iter().all(|&s| s >= 0.0));
        let oracle = jacobi_svd(&t);
        let tail = tail_sq(&oracle.sigma, r);
        prop_assert!((f.residual_tail_sq().unwrap() - tail).abs() <= 1e-6 * total.max(1e-300));
    }

    #[test]
    fn full_rank_reconstruction(m in 1usize..15, n in 1usize..15, seed in 0u64..1000) {
        let t = gaussian_matrix(m, n, &mut SeededRng::new(seed, 1));
        let f = svd(&t, m.min(n)).unwrap();
        let err = (&t - f.low_rank_matrix(m.min(n)).unwrap()).norm_squared();
        prop_assert!(err <= 1e-12 * t.norm_squared());
    }
}
