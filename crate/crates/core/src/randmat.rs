//! Random-matrix laws: the one-coordinate marginal of a uniform point on a
//! sphere, uniform sphere sampling with its moment identities, and the
//! Marcenko–Pastur singular-value density.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::special::{beta_reg, integrate, ln_beta};
use crate::svd::SvdFactorization;

/// Law of one coordinate of a uniform point on `S^{N−1}`:
/// `pdf(x) = (1 − x²)^{(N−3)/2} / B(1/2, (N−1)/2)` on `[−1, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct SprojDist {
    n: usize,
    ln_norm: f64,
}

impl SprojDist {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("SProj needs N >= 2"));
        }
        Ok(Self {
            n,
            ln_norm: ln_beta(0.5, (n as f64 - 1.0) / 2.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn shape(&self) -> f64 {
        (self.n as f64 - 1.0) / 2.0
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(x.abs() < 1.0) {
            // N = 3 is flat up to the closed endpoints.
            return if self.n == 3 && x.abs() == 1.0 { 0.5 } else { 0.0 };
        }
        ((self.n as f64 - 3.0) / 2.0 * (1.0 - x * x).ln() - self.ln_norm).exp()
    }

    /// `X² ~ Beta(1/2, (N−1)/2)` and the law is symmetric.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let half = 0.5 * beta_reg(x * x, 0.5, self.shape());
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    /// `s·√B` with `B = G₁/(G₁ + G₂)`, `G₁ ~ Γ(1/2)`, `G₂ ~ Γ((N−1)/2)`.
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        let g1 = Gamma::new(0.5, 1.0).expect("valid shape").sample(rng);
        let g2 = Gamma::new(self.shape(), 1.0).expect("valid shape").sample(rng);
        let b = g1 / (g1 + g2);
        let sign = if rng.next_u32() & 1 == 1 { 1.0 } else { -1.0 };
        sign * b.sqrt()
    }

    /// `∫ pdf` over `[−1, 1]`, integrated in `θ` with `x = sin θ` so the
    /// endpoint singularity at `N = 2` disappears.
    pub fn total_mass(&self, tol: f64) -> f64 {
        let ln_norm = self.ln_norm;
        let p = self.n as f64 - 2.0;
        integrate(
            |t: f64| {
                let c = t.cos();
                if c <= 0.0 {
                    if p == 0.0 {
                        (-ln_norm).exp()
                    } else {
                        0.0
                    }
                } else {
                    (p * c.ln() - ln_norm).exp()
                }
            },
            -FRAC_PI_2,
            FRAC_PI_2,
            tol,
        )
    }
}

pub fn sproj_pdf(x: f64, n: usize) -> Result<f64> {
    Ok(SprojDist::new(n)?.pdf(x))
}

pub fn sproj_cdf(x: f64, n: usize) -> Result<f64> {
    Ok(SprojDist::new(n)?.cdf(x))
}

pub fn sproj_sample(n: usize, rng: &mut SeededRng) -> Result<f64> {
    Ok(SprojDist::new(n)?.sample(rng))
}

/// Normalized Gaussian vector; redrawn on the (measure-zero) tiny-norm event.
pub fn sphere_sample(n: usize, rng: &mut SeededRng) -> Result<DVector<f64>> {
    if n == 0 {
        return Err(Error::invalid("sphere dimension must be >= 1"));
    }
    loop {
        let g: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = g.norm();
        if norm > 1e-150 {
            return Ok(g / norm);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub name: &'static str,
    pub empirical: f64,
    pub std_err: f64,
    pub theoretical: f64,
}

impl MomentEstimate {
    /// `|empirical − theoretical| / std_err`.
    pub fn z_score(&self) -> f64 {
        if self.std_err > 0.0 {
            (self.empirical - self.theoretical).abs() / self.std_err
        } else if self.empirical == self.theoretical {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug)]
pub struct SphereMomentReport {
    pub dim: usize,
    pub trials: usize,
    pub moments: Vec<MomentEstimate>,
}

impl SphereMomentReport {
    pub fn get(&self, name: &str) -> Option<&MomentEstimate> {
        self.moments.iter().find(|m| m.name == name)
    }
}

/// `Cov[X_i², X_j²]` for `i ≠ j` on `S^{N−1}`: `E[X_i²X_j²] = 1/(N(N+2))`
/// less `E[X_i²]E[X_j²] = 1/N²`, i.e. `−2/(N²(N+2))`.
pub fn sphere_square_covariance(n: usize) -> f64 {
    let n = n as f64;
    -2.0 / (n * n * (n + 2.0))
}

/// Welford running mean with standard error.
#[derive(Clone, Copy, Debug, Default)]
struct Running {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std_err(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
    }
}

/// Monte-Carlo component moments of uniform sphere points.
pub fn sphere_moment_report(n: usize, trials: usize, rng: &mut SeededRng) -> Result<SphereMomentReport> {
    if trials < 1000 {
        return Err(Error::invalid("sphere moment report needs >= 1000 trials"));
    }
    if n < 2 {
        return Err(Error::invalid("sphere moment report needs N >= 2"));
    }
    let mut mean1 = Running::default();
    let mut sq1 = Running::default();
    let mut cross = Running::default();
    let mut triple = Running::default();
    let mut sq2 = Running::default();
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x = sphere_sample(n, rng)?;
        mean1.push(x[0]);
        sq1.push(x[0] * x[0]);
        sq2.push(x[1] * x[1]);
        cross.push(x[0] * x[1]);
        if n >= 3 {
            triple.push(x[0] * x[1] * x[2]);
        }
        samples.push((x[0] * x[0], x[1] * x[1]));
    }
    // Covariance with a centred second pass so its standard error is exact
    // for the product-of-deviations estimator.
    let mut cov = Running::default();
    for (a, b) in samples {
        cov.push((a - sq1.mean) * (b - sq2.mean));
    }
    let inv_n = 1.0 / n as f64;
    let mut moments = vec![
        MomentEstimate {
            name: "E[X_i]",
            empirical: mean1.mean,
            std_err: mean1.std_err(),
            theoretical: 0.0,
        },
        MomentEstimate {
            name: "E[X_i^2]",
            empirical: sq1.mean,
            std_err: sq1.std_err(),
            theoretical: inv_n,
        },
        MomentEstimate {
            name: "E[X_i X_j]",
            empirical: cross.mean,
            std_err: cross.std_err(),
            theoretical: 0.0,
        },
        MomentEstimate {
            name: "Cov[X_i^2,X_j^2]",
            empirical: cov.mean * trials as f64 / (trials - 1) as f64,
            std_err: cov.std_err(),
            theoretical: sphere_square_covariance(n),
        },
    ];
    if n >= 3 {
        moments.push(MomentEstimate {
            name: "E[X_i X_j X_l]",
            empirical: triple.mean,
            std_err: triple.std_err(),
            theoretical: 0.0,
        });
    }
    Ok(SphereMomentReport {
        dim: n,
        trials,
        moments,
    })
}

/// Marcenko–Pastur law for aspect ratio `α`, in units of `σ/√m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarcenkoPastur {
    pub alpha: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl MarcenkoPastur {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid("Marcenko-Pastur needs alpha > 0"));
        }
        let r = alpha.sqrt();
        Ok(Self {
            alpha,
            lambda_minus: (1.0 - r).powi(2),
            lambda_plus: (1.0 + r).powi(2),
        })
    }

    /// `[√λ₋, √λ₊]`.
    pub fn support(&self) -> (f64, f64) {
        (self.lambda_minus.sqrt(), self.lambda_plus.sqrt())
    }

    /// `√((λ₊ − x²)(x² − λ₋)) / (πx)` on the support, zero elsewhere.
    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let x2 = x * x;
        if self.lambda_minus == 0.0 {
            // x²/x cancels; this is also the continuous value at x = 0.
            return (self.lambda_plus - x2).max(0.0).sqrt() / PI;
        }
        if x == 0.0 {
            return 0.0;
        }
        ((self.lambda_plus - x2) * (x2 - self.lambda_minus)).max(0.0).sqrt() / (PI * x)
    }

    pub fn total_mass(&self, tol: f64) -> f64 {
        // x = c + r sin θ removes the square-root edges.
        let (lo, hi) = self.support();
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        integrate(|t| self.pdf(c + r * t.sin()) * r * t.cos(), -FRAC_PI_2, FRAC_PI_2, tol)
    }

    /// Fraction of `values` (already divided by `√m`) inside the support
    /// widened by `inflate` on both ends.
    pub fn fraction_inside(&self, values: &[f64], inflate: f64) -> f64 {
        let (lo, hi) = self.support();
        let inside = values
            .iter()
            .filter(|&&v| v >= lo - inflate && v <= hi + inflate)
            .count();
        inside as f64 / values.len() as f64
    }
}

pub fn mp_pdf(x: f64, alpha: f64) -> Result<f64> {
    Ok(MarcenkoPastur::new(alpha)?.pdf(x))
}

pub fn mp_support(alpha: f64) -> Result<(f64, f64)> {
    Ok(MarcenkoPastur::new(alpha)?.support())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseFloor {
    pub value: f64,
    /// Set when `n ≤ m`, where the floor collapses to zero.
    pub degenerate: bool,
}

/// `√m (√α − 1) I` with `α = n/m`: the smallest noise singular value.
pub fn noise_floor(m: usize, n: usize, intensity: f64) -> NoiseFloor {
    if n <= m || m == 0 {
        return NoiseFloor {
            value: 0.0,
            degenerate: true,
        };
    }
    let alpha = n as f64 / m as f64;
    NoiseFloor {
        value: (m as f64).sqrt() * (alpha.sqrt() - 1.0) * intensity,
        degenerate: false,
    }
}

/// Two-sided Kolmogorov–Smirnov distance between a sample and a cdf.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    for (idx, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max(f - idx as f64 / n).max((idx + 1) as f64 / n - f);
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Rows of `U` (`m`-dimensional sphere).
    LeftRows,
    /// Rows of `V` (`n`-dimensional sphere).
    RightRows,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
    pub pdf_at_center: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowKs {
    pub row_index: usize,
    pub ks: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug)]
pub struct SrecReport {
    pub dim: usize,
    pub rank: usize,
    pub histogram: Vec<HistogramBin>,
    pub rows: Vec<RowKs>,
    /// KS of all pooled components against `SProj(dim)`.
    pub pooled_ks: f64,
    /// Expected mean partial squared norm of a row, `r / dim`.
    pub partial_mass_expected: f64,
    pub partial_mass_observed: f64,
}

impl SrecReport {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count,pdf_at_center\n");
        for b in &self.histogram {
            let _ = writeln!(out, "{},{},{},{}", b.left, b.right, b.count, b.pdf_at_center);
        }
        out
    }

    pub fn ks_csv(&self) -> String {
        let mut out = String::from("row_index,ks,n_samples\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.row_index, r.ks, r.n_samples);
        }
        out
    }
}

/// Pools singular-vector row components and compares them with `SProj`.
///
/// Only the `r` computed components of each row exist, so besides the
/// marginal comparison the report carries the partial-norm expectation
/// `r / dim` next to the observed mean partial squared norm.
pub fn srec_test(svd: &SvdFactorization, side: Side, rows: &[usize], bins: usize) -> Result<SrecReport> {
    let r = svd.rank();
    if r < 2 {
        return Err(Error::invalid("SREC test needs factorization rank >= 2"));
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let (vectors, dim) = match side {
        Side::LeftRows => (svd.left(), svd.m()),
        Side::RightRows => (svd.right(), svd.n()),
    };
    let dist = SprojDist::new(dim)?;
    let mut pooled = Vec::with_capacity(rows.len() * r);
    let mut row_reports = Vec::with_capacity(rows.len());
    let mut mass = 0.0;
    for &row in rows {
        if row >= dim {
            return Err(Error::invalid(format!("row {row} outside 0..{dim}")));
        }
        let comps: Vec<f64> = vectors.row(row).iter().copied().collect();
        mass += comps.iter().map(|x| x * x).sum::<f64>();
        row_reports.push(RowKs {
            row_index: row,
            ks: ks_statistic(&comps, |x| dist.cdf(x)),
            n_samples: comps.len(),
        });
        pooled.extend(comps);
    }
    let reach = pooled.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let reach = if reach > 0.0 { reach * (1.0 + 1e-12) } else { 1.0 };
    let width = 2.0 * reach / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &pooled {
        let b = (((x + reach) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| {
            let left = -reach + b as f64 * width;
            let right = left + width;
            HistogramBin {
                left,
                right,
                count,
                pdf_at_center: dist.pdf(0.5 * (left + right)),
            }
        })
        .collect();
    Ok(SrecReport {
        dim,
        rank: r,
        histogram,
        rows: row_reports,
        pooled_ks: ks_statistic(&pooled, |x| dist.cdf(x)),
        partial_mass_expected: r as f64 / dim as f64,
        partial_mass_observed: if rows.is_empty() { 0.0 } else { mass / rows.len() as f64 },
    })
}
