use lora_dp::fkv::{fkv_quality, fkv_row, modfkv, FkvParams, VectorNormalization};
use lora_dp::synthetic::{gaussian_matrix, PlantedSpec};
use lora_dp::{svd, RowAccess, SeededRng};
use nalgebra::DMatrix;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn full_rank_sketch_spans_the_row_space() {
    let mut rng = SeededRng::new(1, 0);
    let t = gaussian_matrix(30, 40, &mut rng);
    let exact = svd(&t, 30).unwrap();
    let params = FkvParams::new(0.5 * exact.sigma()[29], 1.0, 1.0)
        .with_q_cap(300)
        .with_normalization(VectorNormalization::Orthonormal);
    let sketch = modfkv(&t, &params, &mut rng).unwrap();
    assert_eq!(sketch.rank(), 30);
    let q = fkv_quality(&sketch, &exact, 30).unwrap();
    assert!(q.projector_residual < 0.05, "{}", q.projector_residual);
    for i in [0, 11, 29] {
        let approx = fkv_row(&sketch, &t, i).unwrap();
        let row = t.row_vector(i);
        assert!((&approx - &row).norm() / row.norm() < 0.05);
    }
}

#[test]
fn planted_rank_five_rows() {
    let spec = PlantedSpec::new(100, 150, 5);
    let t = spec.instance(2, 0).unwrap();
    let exact = svd(&t, 6).unwrap();
    let threshold = 0.5 * (exact.sigma()[4] + exact.sigma()[5]);
    let params = FkvParams::new(threshold, 0.1, 1.0).with_q_cap(500);
    let sketch = modfkv(&t, &params, &mut SeededRng::new(2, 1)).unwrap();
    assert!(sketch.q >= 500);
    assert!(sketch.sigma_hat.iter().all(|&s| s >= threshold));
    let report = lora_dp::recommender::typicality(&t, 1.0).unwrap();
    let users: Vec<usize> = report.typical_users().into_iter().take(20).collect();
    assert_eq!(users.len(), 20);
    let mean: f64 = users
        .iter()
        .map(|&i| {
            let target = exact.low_rank_row(i, 5).unwrap();
            (fkv_row(&sketch, &t, i).unwrap() - &target).norm() / target.norm()
        })
        .sum::<f64>()
        / 20.0;
    assert!(mean <= 0.2, "mean relative row error {mean}");
}

#[test]
fn row_sketch_is_unbiased() {
    let mut rng = SeededRng::new(3, 0);
    let t = gaussian_matrix(20, 30, &mut rng);
    let gram = t.transpose() * &t;
    let mut mean = DMatrix::<f64>::zeros(30, 30);
    let total = t.norm_squared();
    let runs = 200;
    for _ in 0..runs {
        let params = FkvParams::new(1e-3, 1.0, 1.0).with_q_cap(20);
        let sketch = modfkv(&t, &params, &mut rng).unwrap();
        assert_eq!(sketch.q, 20);
        for (&r, &p) in sketch.row_ids.iter().zip(&sketch.row_probs) {
            assert!((p - t.row(r).norm_squared() / total).abs() < 1e-12);
            let s = t.row(r) / (sketch.q as f64 * p).sqrt();
            mean += s.transpose() * s / runs as f64;
        }
    }
    let rel = (&mean - &gram).norm() / gram.norm();
    assert!(rel < 0.1, "relative deviation {rel}");
}

#[test]
fn fidelity_improves_with_q() {
    let spec = PlantedSpec::new(100, 150, 5);
    let mut medians = Vec::new();
    for q in [50, 150, 500] {
        let residuals: Vec<f64> = (0..20u64)
            .map(|s| {
                let t = spec.instance(4, s).unwrap();
                let exact = svd(&t, 6).unwrap();
                let threshold = 0.5 * (exact.sigma()[4] + exact.sigma()[5]);
                let params = FkvParams::new(threshold, 0.1, 1.0).with_q_cap(q);
                match modfkv(&t, &params, &mut SeededRng::new(4, 100 + s)) {
                    Ok(sketch) if sketch.rank() >= 5 => fkv_quality(&sketch, &exact, 5).unwrap().projector_residual,
                    _ => 1.0,
                }
            })
            .collect();
        medians.push(median(residuals));
    }
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}

#[test]
fn normalizations_differ_only_in_scale_or_basis() {
    let t = PlantedSpec::new(60, 80, 3).instance(5, 0).unwrap();
    let exact = svd(&t, 4).unwrap();
    let threshold = 0.5 * (exact.sigma()[2] + exact.sigma()[3]);
    let build = |norm| {
        modfkv(
            &t,
            &FkvParams::new(threshold, 0.1, 1.0).with_q_cap(200).with_normalization(norm),
            &mut SeededRng::new(5, 1),
        )
        .unwrap()
    };
    let w = build(VectorNormalization::WNorm);
    let s = build(VectorNormalization::SNorm);
    let o = build(VectorNormalization::Orthonormal);
    assert_eq!(w.row_ids, s.row_ids);
    for norm in s.vector_norms() {
        assert!((norm - 1.0).abs() < 1e-12);
    }
    for a in 0..w.rank() {
        let cos = w.v_hat.column(a).normalize().dot(&s.v_hat.column(a));
        assert!((cos - 1.0).abs() < 1e-12);
    }
    let gram = o.v_hat.transpose() * &o.v_hat;
    assert!((gram - DMatrix::identity(o.rank(), o.rank())).amax() < 1e-10);
    let span_w = fkv_quality(&w, &exact, 3).unwrap().span_residual;
    let span_o = fkv_quality(&o, &exact, 3).unwrap().span_residual;
    assert!((span_w - span_o).abs() < 1e-10);
}
