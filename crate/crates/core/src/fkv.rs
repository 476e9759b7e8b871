//! ModFKV: a row/column ℓ²-importance sketch whose small SVD yields
//! approximate right singular vectors of `T` without factorizing `T`.
//!
//! Rows are drawn with replacement from `p_r = |T_r|²/|T|²` and rescaled to
//! `S_t = T_{r_t}/√(q p_{r_t})`; columns of `S` are drawn from its squared
//! column norms into the `q × q` matrix `W`. Left singular vectors `u` of `W`
//! whose singular value clears the threshold are lifted back through `S†u`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::RowAccess;
use crate::rng::SeededRng;
use crate::svd::{dense_svd, L2Distribution, SvdFactorization};

/// Ceiling on the sketch size when the caller supplies no cap.
pub const DEFAULT_Q_HARD_CAP: usize = 2048;

/// How the lifted vectors `S†u` are scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VectorNormalization {
    /// `S†u / |W†u|`, i.e. divide by the sketch singular value.
    #[default]
    WNorm,
    /// `S†u / |S†u|`: each vector exactly unit length.
    SNorm,
    /// Gram–Schmidt over the lifted vectors, in singular-value order.
    Orthonormal,
}

#[derive(Clone, Copy, Debug)]
pub struct FkvParams {
    /// Singular-value threshold `σ`.
    pub sigma: f64,
    pub eps: f64,
    pub kappa: f64,
    /// Constant in `q = ⌈c K⁴ / ε̄²⌉`.
    pub c: f64,
    pub q_cap: Option<usize>,
    pub normalization: VectorNormalization,
}

impl FkvParams {
    pub fn new(sigma: f64, eps: f64, kappa: f64) -> Self {
        Self {
            sigma,
            eps,
            kappa,
            c: 1.0,
            q_cap: None,
            normalization: VectorNormalization::default(),
        }
    }

    pub fn with_q_cap(mut self, q_cap: usize) -> Self {
        self.q_cap = Some(q_cap);
        self
    }

    pub fn with_normalization(mut self, normalization: VectorNormalization) -> Self {
        self.normalization = normalization;
        self
    }
}

#[derive(Clone, Debug)]
pub struct FkvSketch {
    pub q: usize,
    pub row_ids: Vec<usize>,
    pub row_probs: Vec<f64>,
    pub col_ids: Vec<usize>,
    pub col_probs: Vec<f64>,
    pub w: DMatrix<f64>,
    pub sigma_hat: Vec<f64>,
    /// `n × k`; column `a` is `v̂_a`.
    pub v_hat: DMatrix<f64>,
    /// `K = |T|²/σ²`.
    pub k_budget: f64,
    /// `ε̄ = κ ε²`.
    pub eps_bar: f64,
    pub normalization: VectorNormalization,
}

impl FkvSketch {
    pub fn rank(&self) -> usize {
        self.v_hat.ncols()
    }

    pub fn n(&self) -> usize {
        self.v_hat.nrows()
    }

    pub fn vector_norms(&self) -> Vec<f64> {
        self.v_hat.column_iter().map(|c| c.norm()).collect()
    }

    /// Largest `|⟨v̂_a, v̂_b⟩|` over `a ≠ b` after normalizing each vector.
    pub fn max_coherence(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.rank() {
            for b in a + 1..self.rank() {
                let (x, y) = (self.v_hat.column(a), self.v_hat.column(b));
                worst = worst.max(x.dot(&y).abs() / (x.norm() * y.norm()));
            }
        }
        worst
    }

    /// Row `i` of `T V̂ V̂†`, using only the first `k` sketch vectors.
    pub fn row_at<M: RowAccess + ?Sized>(&self, matrix: &M, i: usize, k: usize) -> Result<DVector<f64>> {
        let (m, n) = matrix.shape();
        if i >= m {
            return Err(Error::IndexOutOfRange { row: i, col: 0, m, n });
        }
        if n != self.n() {
            return Err(Error::invalid(format!(
                "sketch has {} columns, matrix has {n}",
                self.n()
            )));
        }
        if k > self.rank() {
            return Err(Error::InsufficientRank {
                requested: k,
                available: self.rank(),
            });
        }
        let row = matrix.row_vector(i);
        let mut out = DVector::zeros(n);
        for a in 0..k {
            let v = self.v_hat.column(a);
            out.axpy(row.dot(&v), &v, 1.0);
        }
        Ok(out)
    }

    /// `σ̂` values, then one line per `v̂`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,index,values\n");
        for (a, s) in self.sigma_hat.iter().enumerate() {
            let _ = writeln!(out, "sigma_hat,{a},{s}");
        }
        for a in 0..self.rank() {
            let _ = write!(out, "v_hat,{a}");
            for x in self.v_hat.column(a).iter() {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Sketch size `⌈c K⁴/ε̄²⌉`, capped; saturates instead of overflowing.
pub fn sketch_size(k_budget: f64, eps_bar: f64, c: f64, cap: usize) -> usize {
    let raw = (c * k_budget.powi(4) / (eps_bar * eps_bar)).ceil();
    if raw.is_nan() || raw <= 0.0 {
        0
    } else if raw >= cap as f64 {
        cap
    } else {
        raw as usize
    }
}

/// Builds the sketch.
pub fn modfkv<M: RowAccess + ?Sized>(
    matrix: &M,
    params: &FkvParams,
    rng: &mut SeededRng,
) -> Result<FkvSketch> {
    let FkvParams {
        sigma,
        eps,
        kappa,
        c,
        q_cap,
        normalization,
    } = *params;
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    if !(eps > 0.0 && eps <= 1.0) || !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::invalid("eps and kappa must lie in (0, 1]"));
    }
    let (m, n) = matrix.shape();
    let row_norms: Vec<f64> = (0..m).map(|i| matrix.row_norm_sq(i)).collect();
    let total: f64 = row_norms.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVector);
    }

    let k_budget = total / (sigma * sigma);
    let eps_bar = kappa * eps * eps;
    let q = sketch_size(k_budget, eps_bar, c, q_cap.unwrap_or(DEFAULT_Q_HARD_CAP));
    if q < 1 {
        return Err(Error::invalid("sketch size q < 1"));
    }

    // Feeding amplitudes √|T_r|² reuses the ℓ² sampler on row norms.
    let amplitudes: Vec<f64> = row_norms.iter().map(|x| x.sqrt()).collect();
    let rows = L2Distribution::new(&amplitudes)?;
    let mut s = DMatrix::zeros(q, n);
    let mut row_ids = Vec::with_capacity(q);
    let mut row_probs = Vec::with_capacity(q);
    for t in 0..q {
        let r = rows.sample(rng);
        let p = row_norms[r] / total;
        let scale = 1.0 / (q as f64 * p).sqrt();
        s.row_mut(t).copy_from(&(matrix.row_vector(r) * scale).transpose());
        row_ids.push(r);
        row_probs.push(p);
    }

    let col_amplitudes: Vec<f64> = s.column_iter().map(|col| col.norm()).collect();
    let s_total = s.norm_squared();
    let cols = L2Distribution::new(&col_amplitudes)?;
    let mut w = DMatrix::zeros(q, q);
    let mut col_ids = Vec::with_capacity(q);
    let mut col_probs = Vec::with_capacity(q);
    for t in 0..q {
        let cidx = cols.sample(rng);
        let p = col_amplitudes[cidx].powi(2) / s_total;
        let scale = 1.0 / (q as f64 * p).sqrt();
        w.column_mut(t).copy_from(&(s.column(cidx) * scale));
        col_ids.push(cidx);
        col_probs.push(p);
    }

    let small = dense_svd(&w, q)?;
    let kept = small.sigma().iter().take_while(|&&x| x >= sigma).count();
    if kept == 0 {
        return Err(Error::ThresholdFiltersEverything {
            threshold: sigma,
            largest: small.sigma()[0],
        });
    }
    let sigma_hat = small.sigma()[..kept].to_vec();
    let mut v_hat = DMatrix::zeros(n, kept);
    for a in 0..kept {
        let u = small.left().column(a);
        let lifted = s.tr_mul(&u);
        let denom = match normalization {
            VectorNormalization::WNorm => w.tr_mul(&u).norm(),
            VectorNormalization::SNorm | VectorNormalization::Orthonormal => lifted.norm(),
        };
        v_hat.column_mut(a).copy_from(&(lifted / denom));
    }
    if normalization == VectorNormalization::Orthonormal {
        gram_schmidt(&mut v_hat);
    }

    Ok(FkvSketch {
        q,
        row_ids,
        row_probs,
        col_ids,
        col_probs,
        w,
        sigma_hat,
        v_hat,
        k_budget,
        eps_bar,
        normalization,
    })
}

/// Modified Gram–Schmidt, twice for stability; columns that collapse to
/// rounding noise are zeroed.
fn gram_schmidt(a: &mut DMatrix<f64>) {
    for col in 0..a.ncols() {
        let scale = a.column(col).norm();
        for _ in 0..2 {
            for prev in 0..col {
                let proj = a.column(prev).dot(&a.column(col));
                let p = a.column(prev).clone_owned();
                a.column_mut(col).axpy(-proj, &p, 1.0);
            }
        }
        let norm = a.column(col).norm();
        if norm > 1e-12 * scale {
            a.column_mut(col).scale_mut(1.0 / norm);
        } else {
            a.column_mut(col).fill(0.0);
        }
    }
}

/// `T_i · Σ_a v̂_a v̂_a†` over every sketch vector.
pub fn fkv_row<M: RowAccess + ?Sized>(sketch: &FkvSketch, matrix: &M, i: usize) -> Result<DVector<f64>> {
    sketch.row_at(matrix, i, sketch.rank())
}

#[derive(Clone, Debug)]
pub struct FkvQuality {
    /// `|T_{≤k}(I − V̂V̂†)| / |T_{≤k}|` with `V̂` used as written.
    pub projector_residual: f64,
    /// Same with the orthogonal projector onto `span V̂`.
    pub span_residual: f64,
    /// Principal angles between `span V̂` and `span(v_1..v_k)`, ascending.
    pub principal_angles: Vec<f64>,
}

/// Compares the sketch against an exact factorization of the same matrix.
pub fn fkv_quality(sketch: &FkvSketch, exact: &SvdFactorization, k: usize) -> Result<FkvQuality> {
    if k > sketch.rank() {
        return Err(Error::InsufficientRank {
            requested: k,
            available: sketch.rank(),
        });
    }
    if exact.n() != sketch.n() {
        return Err(Error::invalid("sketch and factorization widths differ"));
    }
    let t_k = exact.low_rank_matrix(k)?;
    let reference = t_k.norm();
    let v = &sketch.v_hat;
    let literal = &t_k - (&t_k * v) * v.transpose();

    let mut basis = v.clone();
    gram_schmidt(&mut basis);
    let spanned = &t_k - (&t_k * &basis) * basis.transpose();

    let ratio = |x: f64| if reference > 0.0 { x / reference } else { 0.0 };
    let cosines = (basis.transpose() * exact.right().columns(0, k)).singular_values();
    let mut principal_angles: Vec<f64> = cosines
        .iter()
        .take(k.min(sketch.rank()))
        .map(|c| c.clamp(-1.0, 1.0).acos())
        .collect();
    principal_angles.sort_by(f64::total_cmp);
    Ok(FkvQuality {
        projector_residual: ratio(literal.norm()),
        span_residual: ratio(spanned.norm()),
        principal_angles,
    })
}
