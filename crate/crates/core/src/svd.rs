//! Truncated SVD, low-rank reconstruction and ℓ²-norm sampling.
//!
//! Two backends sit behind [`svd`] and [`svd_sparse`]:
//!
//! * dense Golub–Kahan bidiagonalization with implicit-shift QR (via
//!   nalgebra) whenever `min(m, n) <= DENSE_MAX_MIN_DIM` and the matrix fits
//!   in [`DENSE_CELL_LIMIT`] cells;
//! * randomized block subspace iteration otherwise, driven only by
//!   products with the matrix so sparse inputs never densify.
//!
//! A fixed sign convention is applied to every returned triplet: the
//! largest-magnitude component of each right vector is non-negative (ties go
//! to the lowest index) and the left vector follows.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::PreferenceMatrix;
use crate::rng::SeededRng;

/// Largest `min(m, n)` handled by the dense backend.
pub const DENSE_MAX_MIN_DIM: usize = 2048;

/// Largest `m * n` the sparse entry point will densify.
pub const DENSE_CELL_LIMIT: usize = 16_000_000;

/// Singular values within this fraction of `σ_1` form one degenerate cluster.
pub const CLUSTER_TOL: f64 = 1e-9;

/// QR sweeps allowed per unit of `min(m, n)` before the dense backend gives up.
pub const SWEEPS_PER_DIM: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvdBackend {
    Dense,
    Randomized,
}

/// Parameters of the randomized backend.
#[derive(Clone, Copy, Debug)]
pub struct RandomizedOptions {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RandomizedOptions {
    fn default() -> Self {
        Self {
            oversample: 10,
            power_iters: 4,
            seed: 0x5eed_5eed,
        }
    }
}

/// Ordered singular triplets `(σ_λ, u_λ, v_λ)` for `λ < r`.
#[derive(Clone, Debug)]
pub struct SvdFactorization {
    sigma: Vec<f64>,
    /// `m × r`; column λ is `u_λ`.
    left: DMatrix<f64>,
    /// `n × r`; column λ is `v_λ`.
    right: DMatrix<f64>,
    residual_tail_sq: Option<f64>,
    frobenius_sq: f64,
    backend: SvdBackend,
}

impl SvdFactorization {
    fn from_parts(
        mut sigma: Vec<f64>,
        mut left: DMatrix<f64>,
        mut right: DMatrix<f64>,
        frobenius_sq: f64,
        exact_tail: bool,
        backend: SvdBackend,
    ) -> Self {
        for s in &mut sigma {
            if *s < 0.0 {
                *s = 0.0;
            }
        }
        for lam in 0..sigma.len() {
            let v = right.column(lam);
            let peak = v.amax();
            // Magnitudes equal up to rounding count as a tie.
            let best = v
                .iter()
                .position(|x| x.abs() >= peak * (1.0 - 1e-10))
                .unwrap_or(0);
            if !v.is_empty() && v[best] < 0.0 {
                right.column_mut(lam).neg_mut();
                left.column_mut(lam).neg_mut();
            }
        }
        let captured: f64 = sigma.iter().map(|s| s * s).sum();
        let full = sigma.len() == left.nrows().min(right.nrows());
        let residual_tail_sq = if exact_tail || full {
            Some(if full { 0.0 } else { (frobenius_sq - captured).max(0.0) })
        } else {
            None
        };
        Self {
            sigma,
            left,
            right,
            residual_tail_sq,
            frobenius_sq,
            backend,
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn m(&self) -> usize {
        self.left.nrows()
    }

    pub fn n(&self) -> usize {
        self.right.nrows()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// `u_{λ i}`: component `i` of left vector `λ`.
    pub fn u(&self, lam: usize, i: usize) -> f64 {
        self.left[(i, lam)]
    }

    /// `v_{λ j}`: component `j` of right vector `λ`.
    pub fn v(&self, lam: usize, j: usize) -> f64 {
        self.right[(j, lam)]
    }

    /// `Σ_{λ > r} σ_λ²`, i.e. `|T|² − Σ_{λ ≤ r} σ_λ²`.
    pub fn residual_tail_sq(&self) -> Option<f64> {
        self.residual_tail_sq
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.frobenius_sq
    }

    pub fn backend(&self) -> SvdBackend {
        self.backend
    }

    /// Drops all triplets beyond `k`.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        self.check_cutoff(k)?;
        Ok(Self::from_parts(
            self.sigma[..k].to_vec(),
            self.left.columns(0, k).into_owned(),
            self.right.columns(0, k).into_owned(),
            self.frobenius_sq,
            self.residual_tail_sq.is_some(),
            self.backend,
        ))
    }

    fn check_cutoff(&self, k: usize) -> Result<()> {
        if k > self.rank() {
            return Err(Error::InsufficientRank {
                requested: k,
                available: self.rank(),
            });
        }
        Ok(())
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.m() {
            return Err(Error::IndexOutOfRange {
                row: i,
                col: 0,
                m: self.m(),
                n: self.n(),
            });
        }
        Ok(())
    }

    /// Row `i` of `T_{≤k}`: `Σ_{λ<k} σ_λ u_{λi} v_λ`.
    pub fn low_rank_row(&self, i: usize, k: usize) -> Result<DVector<f64>> {
        self.check_cutoff(k)?;
        self.check_row(i)?;
        let mut row = DVector::zeros(self.n());
        for lam in 0..k {
            row.axpy(self.sigma[lam] * self.left[(i, lam)], &self.right.column(lam), 1.0);
        }
        Ok(row)
    }

    /// `(T_{≤k})_{ij}`.
    pub fn low_rank_entry(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_cutoff(k)?;
        if i >= self.m() || j >= self.n() {
            return Err(Error::IndexOutOfRange {
                row: i,
                col: j,
                m: self.m(),
                n: self.n(),
            });
        }
        Ok((0..k)
            .map(|lam| self.sigma[lam] * self.left[(i, lam)] * self.right[(j, lam)])
            .sum())
    }

    /// Dense `T_{≤k} = Σ_{λ<k} σ_λ u_λ v_λ†`.
    pub fn low_rank_matrix(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_cutoff(k)?;
        let mut scaled = self.left.columns(0, k).into_owned();
        for lam in 0..k {
            scaled.column_mut(lam).scale_mut(self.sigma[lam]);
        }
        Ok(scaled * self.right.columns(0, k).transpose())
    }

    /// A header, then one line per triplet: `σ, u_λ..., v_λ...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma");
        for i in 0..self.m() {
            let _ = write!(out, ",u{i}");
        }
        for j in 0..self.n() {
            let _ = write!(out, ",v{j}");
        }
        out.push('\n');
        for lam in 0..self.rank() {
            let _ = write!(out, "{}", self.sigma[lam]);
            for x in self.left.column(lam).iter().chain(self.right.column(lam).iter()) {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Products with a matrix, enough to drive subspace iteration.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A X`.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    /// `A† Y`.
    fn apply_t(&self, y: &DMatrix<f64>) -> DMatrix<f64>;
    fn frobenius_sq(&self) -> f64;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
    fn apply_t(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(y)
    }
    fn frobenius_sq(&self) -> f64 {
        self.norm_squared()
    }
}

impl LinearOperator for PreferenceMatrix {
    fn nrows(&self) -> usize {
        self.m()
    }
    fn ncols(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m(), x.ncols());
        for (i, j) in self.entries() {
            for c in 0..x.ncols() {
                out[(i, c)] += x[(j, c)];
            }
        }
        out
    }
    fn apply_t(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), y.ncols());
        for (i, j) in self.entries() {
            for c in 0..y.ncols() {
                out[(j, c)] += y[(i, c)];
            }
        }
        out
    }
    fn frobenius_sq(&self) -> f64 {
        self.nnz() as f64
    }
}

fn check_rank(m: usize, n: usize, r: usize) -> Result<()> {
    if r == 0 || r > m.min(n) {
        return Err(Error::invalid(format!(
            "target rank {r} must lie in 1..={} for a {m}x{n} matrix",
            m.min(n)
        )));
    }
    Ok(())
}

/// Top-`r` SVD of a dense matrix.
pub fn svd(a: &DMatrix<f64>, r: usize) -> Result<SvdFactorization> {
    check_rank(a.nrows(), a.ncols(), r)?;
    if a.nrows().min(a.ncols()) <= DENSE_MAX_MIN_DIM {
        dense_svd(a, r)
    } else {
        randomized_svd(a, r, RandomizedOptions::default())
    }
}

/// Top-`r` SVD of a binary matrix, densifying only when it is cheap.
pub fn svd_sparse(t: &PreferenceMatrix, r: usize) -> Result<SvdFactorization> {
    check_rank(t.m(), t.n(), r)?;
    let small = t.m().min(t.n()) <= DENSE_MAX_MIN_DIM;
    if small && t.m().saturating_mul(t.n()) <= DENSE_CELL_LIMIT {
        dense_svd(&t.to_dense(), r)
    } else {
        randomized_svd(t, r, RandomizedOptions::default())
    }
}

/// Dense Golub–Kahan SVD, truncated to `r`.
pub fn dense_svd(a: &DMatrix<f64>, r: usize) -> Result<SvdFactorization> {
    let (m, n) = a.shape();
    check_rank(m, n, r)?;
    let sweeps = SWEEPS_PER_DIM * m.min(n);
    let eps = f64::EPSILON;
    let decomposition = a
        .clone()
        .try_svd(true, true, eps, sweeps)
        .ok_or(Error::NoConvergence {
            iterations: sweeps,
            achieved: eps,
        })?;
    let u = decomposition.u.expect("left vectors requested");
    let v_t = decomposition.v_t.expect("right vectors requested");
    let values = decomposition.singular_values;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]).then(x.cmp(&y)));
    order.truncate(r);

    let sigma: Vec<f64> = order.iter().map(|&o| values[o]).collect();
    let left = DMatrix::from_fn(m, r, |row, c| u[(row, order[c])]);
    let right = DMatrix::from_fn(n, r, |row, c| v_t[(order[c], row)]);
    Ok(SvdFactorization::from_parts(
        sigma,
        left,
        right,
        a.norm_squared(),
        true,
        SvdBackend::Dense,
    ))
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Randomized block subspace iteration: `Y = (A A†)^q A Ω`, re-orthonormalized
/// between every product, followed by an exact SVD of the small projection.
pub fn randomized_svd<A: LinearOperator + ?Sized>(
    a: &A,
    r: usize,
    opts: RandomizedOptions,
) -> Result<SvdFactorization> {
    let (m, n) = (a.nrows(), a.ncols());
    check_rank(m, n, r)?;
    let width = (r + opts.oversample).min(m.min(n));
    let mut rng = SeededRng::new(opts.seed, 0);
    let omega = DMatrix::from_fn(n, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormal_basis(a.apply(&omega));
    for _ in 0..opts.power_iters {
        let z = orthonormal_basis(a.apply_t(&q));
        q = orthonormal_basis(a.apply(&z));
    }
    // B = Q† A, formed as (A† Q)†.
    let b = a.apply_t(&q).transpose();
    let small = dense_svd(&b, width.min(b.nrows()).min(b.ncols()))?;
    let k = r.min(small.rank());
    let left = &q * small.left().columns(0, k);
    let right = small.right().columns(0, k).into_owned();
    Ok(SvdFactorization::from_parts(
        small.sigma()[..k].to_vec(),
        left,
        right,
        a.frobenius_sq(),
        true,
        SvdBackend::Randomized,
    ))
}

/// Precomputed ℓ² distribution of a vector: `Pr(j) = v_j² / |v|²`.
#[derive(Clone, Debug)]
pub struct L2Distribution {
    cumulative: Vec<f64>,
}

impl L2Distribution {
    pub fn new(v: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = v
            .iter()
            .map(|x| {
                acc += x * x;
                acc
            })
            .collect();
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Self { cumulative })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = *self.cumulative.last().expect("non-empty");
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = (c - prev) / total;
                prev = c;
                p
            })
            .collect()
    }

    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let target = rng.next_f64() * total;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        if idx < self.cumulative.len() {
            return idx;
        }
        // Rounding pushed the target past the end; fall back to the last
        // index carrying mass.
        let mut last = self.cumulative.len() - 1;
        while last > 0 && self.cumulative[last] == self.cumulative[last - 1] {
            last -= 1;
        }
        last
    }
}

/// Draws `j` with probability `v_j² / |v|²`.
pub fn l2_sample(v: &[f64], rng: &mut SeededRng) -> Result<usize> {
    Ok(L2Distribution::new(v)?.sample(rng))
}
