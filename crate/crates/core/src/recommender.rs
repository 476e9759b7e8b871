//! Low-rank recommendation: sample product `j` for user `i` with probability
//! proportional to `(T_{≤k})_{ij}²`, plus the typical-user machinery that
//! scopes the privacy guarantee.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fkv::FkvSketch;
use crate::matrix::{PreferenceMatrix, RowAccess};
use crate::rng::SeededRng;
use crate::svd::{L2Distribution, SvdFactorization, CLUSTER_TOL};

/// How the recommended row was materialized.
///
/// `Quantum` forms only row `i` of `T_{≤k}`; `Classical` forms all of
/// `T_{≤k}` and reads the row. Both have the same output law.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RowPath {
    #[default]
    Quantum,
    Classical,
}

#[derive(Clone, Copy, Debug)]
pub enum Backend<'a> {
    Exact(&'a SvdFactorization),
    Fkv(&'a FkvSketch),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Recommendation {
    pub product: usize,
    pub path: RowPath,
}

fn distribution_of(row: &DVector<f64>, user: usize, k: usize) -> Result<L2Distribution> {
    L2Distribution::new(row.as_slice()).map_err(|_| Error::ColdUser { user, k })
}

/// `p_j = (T_{≤k})_{ij}² / |(T_{≤k})_i|²`.
pub fn recommendation_distribution(svd: &SvdFactorization, i: usize, k: usize) -> Result<Vec<f64>> {
    let row = svd.low_rank_row(i, k)?;
    Ok(distribution_of(&row, i, k)?.probabilities())
}

/// Row `i` of the backend's rank-`k` approximation.
pub fn backend_row<M: RowAccess + ?Sized>(
    matrix: &M,
    i: usize,
    k: usize,
    backend: Backend<'_>,
    path: RowPath,
) -> Result<DVector<f64>> {
    match (backend, path) {
        (Backend::Exact(svd), RowPath::Quantum) => svd.low_rank_row(i, k),
        (Backend::Exact(svd), RowPath::Classical) => {
            if i >= svd.m() {
                return Err(Error::IndexOutOfRange {
                    row: i,
                    col: 0,
                    m: svd.m(),
                    n: svd.n(),
                });
            }
            Ok(svd.low_rank_matrix(k)?.row(i).transpose())
        }
        (Backend::Fkv(sketch), _) => sketch.row_at(matrix, i, k),
    }
}

/// One recommendation for user `i` at cutoff `k`.
pub fn recommend<M: RowAccess + ?Sized>(
    matrix: &M,
    i: usize,
    k: usize,
    rng: &mut SeededRng,
    backend: Backend<'_>,
    path: RowPath,
) -> Result<Recommendation> {
    let row = backend_row(matrix, i, k, backend, path)?;
    let product = distribution_of(&row, i, k)?.sample(rng);
    Ok(Recommendation { product, path })
}

/// `Σ_{λ: σ_λ ≥ σ} ⟨T_i, v_λ⟩ v_λ`, with `⟨T_i, v_λ⟩ = σ_λ u_{λi}`.
///
/// The threshold is inclusive up to the degeneracy tolerance, so a whole
/// cluster of equal singular values enters or leaves together.
pub fn project_row_by_sigma(svd: &SvdFactorization, i: usize, sigma_threshold: f64) -> Result<DVector<f64>> {
    if !(sigma_threshold >= 0.0) {
        return Err(Error::invalid("sigma threshold must be non-negative"));
    }
    if i >= svd.m() {
        return Err(Error::IndexOutOfRange {
            row: i,
            col: 0,
            m: svd.m(),
            n: svd.n(),
        });
    }
    let sigma = svd.sigma();
    let tol = CLUSTER_TOL * sigma.first().copied().unwrap_or(0.0);
    let cut = sigma_threshold - tol;

    let full = svd.rank() == svd.m().min(svd.n());
    if !full {
        // Every uncomputed value is at most min(σ_r, √tail).
        let smallest = sigma.last().copied().unwrap_or(0.0);
        let tail_bound = svd
            .residual_tail_sq()
            .map_or(smallest, |t| t.sqrt().min(smallest));
        if cut <= tail_bound && tail_bound > 0.0 {
            return Err(Error::UncomputedTail {
                threshold: sigma_threshold,
                tail_bound,
            });
        }
    }

    let mut out = DVector::zeros(svd.n());
    for (lam, &s) in sigma.iter().enumerate() {
        if s < cut {
            break;
        }
        out.axpy(s * svd.u(lam, i), &svd.right().column(lam), 1.0);
    }
    Ok(out)
}

/// `γ̃ = γ + (1+γ)/(η/(1+γ) − 1)`, defined when `η/(1+γ) > 1`.
pub fn gamma_tilde(gamma: f64, eta: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma must be non-negative"));
    }
    let ratio = eta / (1.0 + gamma);
    if !(ratio > 1.0) {
        return Err(Error::EtaTooSmall { ratio });
    }
    Ok(gamma + (1.0 + gamma) / (ratio - 1.0))
}

/// `η/(1+γ) ≤ x ≤ (1+γ)η`.
pub fn is_typical(row_norm_sq: f64, eta: f64, gamma: f64) -> bool {
    eta / (1.0 + gamma) <= row_norm_sq && row_norm_sq <= (1.0 + gamma) * eta
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserTypicality {
    pub row_norm_sq: f64,
    pub is_typical: bool,
}

#[derive(Clone, Debug)]
pub struct TypicalityReport {
    pub eta: f64,
    pub gamma: f64,
    /// `None` when `η/(1+γ) ≤ 1`.
    pub gamma_tilde: Option<f64>,
    pub per_user: Vec<UserTypicality>,
}

impl TypicalityReport {
    pub fn typical_count(&self) -> usize {
        self.per_user.iter().filter(|u| u.is_typical).count()
    }

    pub fn typical_fraction(&self) -> f64 {
        self.typical_count() as f64 / self.per_user.len() as f64
    }

    pub fn typical_users(&self) -> Vec<usize> {
        self.per_user
            .iter()
            .enumerate()
            .filter_map(|(i, u)| u.is_typical.then_some(i))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,row_norm_sq,is_typical\n");
        for (i, u) in self.per_user.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", u.row_norm_sq, u8::from(u.is_typical)));
        }
        out
    }
}

/// Typicality from squared row norms with `η` = their mean.
pub fn typicality_from_norms(row_norms_sq: &[f64], gamma: f64) -> Result<TypicalityReport> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if row_norms_sq.is_empty() {
        return Err(Error::invalid("typicality needs at least one user"));
    }
    let eta = row_norms_sq.iter().sum::<f64>() / row_norms_sq.len() as f64;
    if !(eta > 0.0) {
        return Err(Error::invalid("eta = 0: matrix has no records"));
    }
    let per_user = row_norms_sq
        .iter()
        .map(|&x| UserTypicality {
            row_norm_sq: x,
            is_typical: is_typical(x, eta, gamma),
        })
        .collect();
    Ok(TypicalityReport {
        eta,
        gamma,
        gamma_tilde: gamma_tilde(gamma, eta).ok(),
        per_user,
    })
}

pub fn typicality<M: RowAccess + ?Sized>(matrix: &M, gamma: f64) -> Result<TypicalityReport> {
    let norms: Vec<f64> = (0..matrix.shape().0).map(|i| matrix.row_norm_sq(i)).collect();
    typicality_from_norms(&norms, gamma)
}

/// Binary matrices: `η = nnz/m` computed in integers first.
pub fn typicality_binary(matrix: &PreferenceMatrix, gamma: f64) -> Result<TypicalityReport> {
    let mut report = typicality(matrix, gamma)?;
    report.eta = matrix.nnz() as f64 / matrix.m() as f64;
    for u in &mut report.per_user {
        u.is_typical = is_typical(u.row_norm_sq, report.eta, gamma);
    }
    report.gamma_tilde = gamma_tilde(gamma, report.eta).ok();
    Ok(report)
}
