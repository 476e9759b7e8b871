//! Oracles shared by the integration tests. Nothing here calls into the
//! crate's own linear algebra, so agreement is evidence, not tautology.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// One-sided Jacobi SVD. Returns singular values (descending) and the
/// matching left/right singular vectors as columns.
pub struct JacobiSvd {
    pub sigma: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

pub fn jacobi_svd(a: &DMatrix<f64>) -> JacobiSvd {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_svd(&a.transpose());
        return JacobiSvd {
            sigma: t.sigma,
            u: t.v,
            v: t.u,
        };
    }
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..m {
                    let (x, y) = (w[(r, p)], w[(r, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let (x, y) = (w[(r, p)], w[(r, q)]);
                    w[(r, p)] = c * x - s * y;
                    w[(r, q)] = s * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * x - s * y;
                    v[(r, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|c| w.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma: Vec<f64> = order.iter().map(|&c| norms[c]).collect();
    let u = DMatrix::from_fn(m, n, |r, c| {
        let s = norms[order[c]];
        if s > 0.0 {
            w[(r, order[c])] / s
        } else {
            0.0
        }
    });
    let v = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    JacobiSvd { sigma, u, v }
}

/// `Σ_{λ ≥ k} σ_λ²` from the oracle.
pub fn tail_sq(sigma: &[f64], k: usize) -> f64 {
    sigma[k.min(sigma.len())..].iter().map(|s| s * s).sum()
}

/// Dense rank-`k` truncation from the oracle.
pub fn truncate(j: &JacobiSvd, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(j.u.nrows(), j.v.nrows());
    for l in 0..k {
        out.ger(j.sigma[l], &j.u.column(l), &j.v.column(l), 1.0);
    }
    out
}

/// Total-variation distance between two probability vectors.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Squared entries of a vector normalized to sum to one.
pub fn l2_law(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x * x).sum();
    v.iter().map(|x| x * x / total).collect()
}

/// Workspace root, for data files referenced relative to it.
pub fn workspace_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .expect("crate lives two levels below the workspace")
        .to_path_buf()
}

/// MovieLens ratings path: `LORA_DP_MOVIELENS` or the conventional
/// location under the workspace.
pub fn movielens_path() -> std::path::PathBuf {
    std::env::var_os("LORA_DP_MOVIELENS")
        .map(Into::into)
        .unwrap_or_else(|| workspace_root().join("data/ml-latest-small/ratings.csv"))
}
