use lora_dp::perturb::{
    core_lemma_table, f_k, flip_entry, global_norm_table, measure_binary, measure_factorizations,
    measure_perturbation, measure_with, predict_perturbation, row_norm_table, run_flip_trials, shift_entry,
    sigma_k, FlipDirection, NeighbourFlip, SweepConfig, TrialSource,
};
use lora_dp::synthetic::{gaussian_matrix, PlantedSpec};
use lora_dp::{svd, PreferenceMatrix, SeededRng};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn random_binary(m: usize, n: usize, density: f64, rng: &mut SeededRng) -> PreferenceMatrix {
    let entries: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|_| rng.next_f64() < density)
        .collect();
    PreferenceMatrix::from_entries(m, n, entries).unwrap()
}

#[test]
fn flip_examples() {
    let z = PreferenceMatrix::zeros(2, 2);
    let add = NeighbourFlip::new(0, 0, FlipDirection::Add);
    let one = flip_entry(&z, add).unwrap();
    assert_eq!(one.nnz(), 1);
    assert_eq!(flip_entry(&one, add.reversed()).unwrap(), z);
    assert!(flip_entry(&one, add).is_err());
    assert!(flip_entry(&z, add.reversed()).is_err());
    assert_eq!(one.frobenius_sq(), z.frobenius_sq() + 1.0);
}

#[test]
fn formula_arithmetic() {
    assert!((f_k(5, 100, 100) - 0.1).abs() < 1e-15);
    assert!((sigma_k(5, 100, 100) - (2.01f64 * 5.0 * 2e-4).sqrt()).abs() < 1e-15);
    assert!((sigma_k(5, 100, 100) - 0.04483).abs() < 5e-6);
}

#[test]
fn full_and_empty_cutoffs() {
    let mut rng = SeededRng::new(1, 0);
    let t = random_binary(20, 30, 0.2, &mut rng);
    let (i, j) = (3, 4);
    let dir = if t.get(i, j) == 1 { FlipDirection::Remove } else { FlipDirection::Add };
    let meas = measure_binary(&t, NeighbourFlip::new(i, j, dir), &[0, 20], 20).unwrap();
    assert_eq!((meas[0].delta_k, meas[0].row_change_sq, meas[0].global_change), (0.0, 0.0, 0.0));
    assert!((meas[1].delta_k - 1.0).abs() < 1e-8);
    assert!((meas[1].global_change - 1.0).abs() < 1e-8);
    assert!((meas[1].row_change_sq - 1.0).abs() < 1e-8);
    assert!(meas[1].argmax_at_flip);
}

#[test]
fn inconsistent_binary_flip_is_rejected() {
    let t = PreferenceMatrix::identity(3);
    assert!(measure_binary(&t, NeighbourFlip::new(0, 0, FlipDirection::Add), &[1], 2).is_err());
    assert!(measure_binary(&t, NeighbourFlip::new(0, 0, FlipDirection::Remove), &[4], 3).is_err());
}

#[test]
fn planted_mean_delta_tracks_f8() {
    let spec = PlantedSpec::new(100, 150, 8);
    let t = spec.instance(2, 0).unwrap();
    let mut config = SweepConfig::new(vec![8], 50, 2);
    config.svd_rank = Some(8);
    let trials = run_flip_trials(TrialSource::Dense(&t), &config).unwrap();
    let mean = trials.iter().map(|t| t.measurements[0].delta_k).sum::<f64>() / 50.0;
    let f = f_k(8, 100, 150);
    assert!(mean >= 0.5 * f && mean <= 2.0 * f, "mean {mean} vs f {f}");
}

#[test]
fn prediction_tracks_measurement_on_planted_beds() {
    let spec = PlantedSpec::new(60, 80, 8);
    for seed in 0..3u64 {
        let t = spec.instance(3, seed).unwrap();
        let f = svd(&t, 60).unwrap();
        let mut rng = SeededRng::new(3, 100 + seed);
        for k in [1, 2, 5, 8, 10] {
            let mut rel: Vec<f64> = (0..50)
                .map(|_| {
                    let flip = NeighbourFlip::new(rng.below(60), rng.below(80), FlipDirection::Add);
                    let measured = measure_with(&f, &t, flip, &[k], 60).unwrap()[0].delta_ij_k;
                    let predicted = predict_perturbation(&f, flip, k).unwrap().delta_pred_ij;
                    (predicted - measured).abs() / measured
                })
                .collect();
            rel.sort_by(f64::total_cmp);
            let median = 0.5 * (rel[24] + rel[25]);
            assert!(median < 0.15, "seed {seed} k={k}: median relative gap {median}");
        }
    }
}

#[test]
fn prediction_basics() {
    let t = PlantedSpec::new(20, 30, 3).instance(4, 0).unwrap();
    let f = svd(&t, 20).unwrap();
    let flip = NeighbourFlip::new(2, 7, FlipDirection::Remove);
    let p = predict_perturbation(&f, flip, 0).unwrap();
    assert_eq!(p.delta_pred_ij, 0.0);
    let p = predict_perturbation(&f, flip, 5).unwrap();
    assert_eq!(p.alpha_tilde.len(), 5);
    for lam in 0..5 {
        assert!((p.alpha_tilde[lam] + f.v(lam, 7)).abs() < 1e-15);
        assert!((p.beta_tilde[lam] + f.u(lam, 2)).abs() < 1e-15);
    }
    assert!(p.capture_fraction > 0.95);
    assert!(predict_perturbation(&f, flip, 21).is_err());
}

#[test]
fn predictor_on_decoupled_toy() {
    // Row i and column j of T are empty, so every u_{λi} and v_{λj} of the
    // nonzero triplets vanish and the flip is a new, separate rank-1 term.
    let mut t = gaussian_matrix(6, 8, &mut SeededRng::new(5, 0));
    t.row_mut(2).fill(0.0);
    t.column_mut(5).fill(0.0);
    let f = svd(&t, 6).unwrap();
    let flip = NeighbourFlip::new(2, 5, FlipDirection::Add);
    let p = predict_perturbation(&f, flip, 6).unwrap();
    assert!((p.delta_pred_ij - 1.0).abs() < 1e-10);
    assert!((p.capture_fraction - 1.0).abs() < 1e-10);
    let meas = measure_with(&f, &t, flip, &[6], 6).unwrap();
    assert!((meas[0].delta_ij_k - 1.0).abs() < 1e-10);
    assert!((meas[0].global_change - 1.0).abs() < 1e-10);
}

#[test]
fn tables_on_small_sweep() {
    let spec = PlantedSpec::new(30, 40, 3);
    let ks = vec![0, 1, 2, 4, 30];
    let mut config = SweepConfig::new(ks.clone(), 12, 6);
    config.svd_rank = Some(30);
    let trials = run_flip_trials(TrialSource::Ensemble { spec, seed: 6 }, &config).unwrap();
    let core = core_lemma_table(&ks, &trials, 3.0);
    let last = core.rows.last().unwrap();
    assert!((last.delta_mean - 1.0).abs() < 1e-8 && (last.argmax_frac - 1.0).abs() < 1e-12);
    let row = row_norm_table(&ks, 40, &trials);
    assert_eq!(row.rows[0].row_change_mean, 0.0);
    assert!(row.rows.iter().all(|r| r.row_change_max <= 2.0 + 1e-9));
    let global = global_norm_table(&ks, &trials);
    let full = global.rows.last().unwrap();
    assert!((full.global_mean - 1.0).abs() < 1e-8 && (full.row_mean - 1.0).abs() < 1e-8);
    assert!(global.rows.iter().all(|r| r.global_ge_row_frac == 1.0));
    assert!(core.to_csv().starts_with("k,f_k,sigma_bound,delta_mean,delta_max,outside_frac,argmax_frac\n"));
    assert!(row.to_csv().starts_with("k,row_change_mean,k_over_n,bound2,row_change_max\n"));
}

#[test]
fn sweeps_are_deterministic_and_thread_independent() {
    let spec = PlantedSpec::new(25, 35, 2);
    let mut config = SweepConfig::new(vec![1, 3], 10, 7);
    config.svd_rank = Some(5);
    let run = || {
        let trials = run_flip_trials(TrialSource::Ensemble { spec, seed: 7 }, &config).unwrap();
        core_lemma_table(&config.k_list, &trials, 3.0).to_csv()
    };
    let a = run();
    let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
    assert_eq!(a, b);
}

#[test]
fn binary_sweep_uses_admissible_flips() {
    let mut rng = SeededRng::new(8, 0);
    let t = random_binary(15, 25, 0.3, &mut rng);
    for direction in [FlipDirection::Add, FlipDirection::Remove] {
        let mut config = SweepConfig::new(vec![2], 30, 8);
        config.direction = direction;
        let trials = run_flip_trials(TrialSource::Binary(&t), &config).unwrap();
        for trial in &trials {
            let expected = u8::from(direction == FlipDirection::Remove);
            assert_eq!(t.get(trial.flip.i, trial.flip.j), expected);
        }
    }
    let full = PreferenceMatrix::from_entries(2, 2, [(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
    assert!(run_flip_trials(TrialSource::Binary(&full), &SweepConfig::new(vec![1], 3, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flip_symmetry_and_norm_chain(m in 3usize..12, n in 3usize..12, seed in 0u64..500, pick in 0usize..1000) {
        let t: DMatrix<f64> = gaussian_matrix(m, n, &mut SeededRng::new(seed, 0));
        let flip = NeighbourFlip::new(pick % m, (pick / m) % n, FlipDirection::Add);
        let shifted = shift_entry(&t, flip).unwrap();
        let r = m.min(n);
        let ks: Vec<usize> = (0..=r).collect();
        let forward = measure_perturbation(&t, flip, &ks, r).unwrap();
        let before = svd(&shifted, r).unwrap();
        let after = svd(&t, r).unwrap();
        let backward = measure_factorizations(&before, &after, flip.reversed(), &ks).unwrap();
        for (a, b) in forward.iter().zip(&backward) {
            prop_assert!((a.delta_k - b.delta_k).abs() < 1e-9);
            prop_assert!((a.row_change_sq - b.row_change_sq).abs() < 1e-9);
            prop_assert!((a.global_change - b.global_change).abs() < 1e-9);
            prop_assert!(a.delta_ij_k <= a.delta_k + 1e-15);
            prop_assert!(a.delta_k <= a.global_change + 1e-12);
            prop_assert!(a.row_change_sq <= a.global_change.powi(2) * (1.0 + 1e-12) + 1e-15);
        }
        prop_assert!((forward[r].delta_k - 1.0).abs() < 1e-8);
    }
}
