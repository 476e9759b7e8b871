//! Single-entry flip experiments on the rank-`k` approximation.
//!
//! For a neighbour `T′ = T + C e_i e_j†` the lab measures
//! `Δ_{≤k} = T′_{≤k} − T_{≤k}` by brute force — two SVDs and dense
//! accumulation of the rank-one terms — and compares it with
//!
//! * `f(k) = k(1/m + 1/n)`, the predicted size of `δ(k) = max |Δ_{≤k}|`;
//! * `Σ(k) = √(2.01 k (1/m² + 1/n²))`, its Chebyshev scale;
//! * `k/n`, the predicted `|(Δ_{≤k})_i|²`, bounded by 2;
//! * the first-order perturbation form `T′ ≅ Σ σ_λ(u_λ + α_λ e_i)(v_λ + β_λ e_j)†`.
//!
//! Trials fan out over rayon; trial `t` draws from stream `t`, and results
//! are collected in trial order, so output is independent of thread count.

use std::borrow::Cow;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::PreferenceMatrix;
use crate::rng::SeededRng;
use crate::svd::{dense_svd, SvdFactorization};
use crate::synthetic::PlantedSpec;

/// Chebyshev multiplier giving a 95% band: `1/t² = 0.05`.
pub const CHEBYSHEV_T95: f64 = 4.472_135_954_999_579;

/// Relative slack when comparing norms that are equal in exact arithmetic.
const NORM_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FlipDirection {
    /// `0 → 1`, `C = +1`.
    #[default]
    Add,
    /// `1 → 0`, `C = −1`.
    Remove,
}

impl FlipDirection {
    pub fn sign(self) -> f64 {
        match self {
            FlipDirection::Add => 1.0,
            FlipDirection::Remove => -1.0,
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            FlipDirection::Add => FlipDirection::Remove,
            FlipDirection::Remove => FlipDirection::Add,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlipDirection::Add => "add",
            FlipDirection::Remove => "remove",
        }
    }
}

impl std::str::FromStr for FlipDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(FlipDirection::Add),
            "remove" => Ok(FlipDirection::Remove),
            other => Err(Error::invalid(format!("unknown flip direction {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NeighbourFlip {
    pub i: usize,
    pub j: usize,
    pub direction: FlipDirection,
}

impl NeighbourFlip {
    pub fn new(i: usize, j: usize, direction: FlipDirection) -> Self {
        Self { i, j, direction }
    }

    pub fn reversed(self) -> Self {
        Self {
            direction: self.direction.reverse(),
            ..self
        }
    }
}

/// Toggles one entry of a binary matrix; the direction must match its value.
pub fn flip_entry(matrix: &PreferenceMatrix, flip: NeighbourFlip) -> Result<PreferenceMatrix> {
    let NeighbourFlip { i, j, direction } = flip;
    if i >= matrix.m() || j >= matrix.n() {
        return Err(Error::IndexOutOfRange {
            row: i,
            col: j,
            m: matrix.m(),
            n: matrix.n(),
        });
    }
    let value = matrix.get(i, j);
    let expected = match direction {
        FlipDirection::Add => 0,
        FlipDirection::Remove => 1,
    };
    if value != expected {
        return Err(Error::InconsistentFlip { i, j, value });
    }
    let mut out = matrix.clone();
    out.set(i, j, direction == FlipDirection::Add);
    Ok(out)
}

/// `T + C e_i e_j†` for real-valued matrices, where no entry is exactly 0/1.
pub fn shift_entry(matrix: &DMatrix<f64>, flip: NeighbourFlip) -> Result<DMatrix<f64>> {
    let (m, n) = matrix.shape();
    if flip.i >= m || flip.j >= n {
        return Err(Error::IndexOutOfRange {
            row: flip.i,
            col: flip.j,
            m,
            n,
        });
    }
    let mut out = matrix.clone();
    out[(flip.i, flip.j)] += flip.direction.sign();
    Ok(out)
}

pub fn f_k(k: usize, m: usize, n: usize) -> f64 {
    k as f64 * (1.0 / m as f64 + 1.0 / n as f64)
}

pub fn sigma_k(k: usize, m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    (2.01 * k as f64 * (1.0 / (m * m) + 1.0 / (n * n))).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationMeasurement {
    pub k: usize,
    /// `δ(k) = max |Δ_{≤k}|`.
    pub delta_k: f64,
    /// `δ_ij(k) = |(Δ_{≤k})_{ij}|`.
    pub delta_ij_k: f64,
    pub argmax_at_flip: bool,
    pub f_k: f64,
    pub sigma_k_bound: f64,
    /// `|(Δ_{≤k})_i|²`.
    pub row_change_sq: f64,
    /// `|Δ_{≤k}|_F`.
    pub global_change: f64,
    /// Fitted perturbation-form capture on the full factorization of `T`,
    /// when that factorization is full rank.
    pub capture_fraction: Option<f64>,
}

impl PerturbationMeasurement {
    pub fn row_change(&self) -> f64 {
        self.row_change_sq.sqrt()
    }

    /// `|Δ|_F ≥ |Δ_i|`, compared with rounding slack.
    pub fn global_ge_row(&self) -> bool {
        self.global_change >= self.row_change() * (1.0 - NORM_SLACK)
    }
}

fn check_k_list(k_list: &[usize], rank: usize) -> Result<()> {
    if let Some(&k) = k_list.iter().find(|&&k| k > rank) {
        return Err(Error::InsufficientRank {
            requested: k,
            available: rank,
        });
    }
    Ok(())
}

/// Measures every cutoff in `k_list` from factorizations of `T` and `T′`.
pub fn measure_factorizations(
    before: &SvdFactorization,
    after: &SvdFactorization,
    flip: NeighbourFlip,
    k_list: &[usize],
) -> Result<Vec<PerturbationMeasurement>> {
    let (m, n) = (before.m(), before.n());
    if (after.m(), after.n()) != (m, n) {
        return Err(Error::invalid("factorizations have different shapes"));
    }
    check_k_list(k_list, before.rank().min(after.rank()))?;
    let capture = (before.rank() == m.min(n)).then(|| fitted_capture(before, flip));

    let mut order: Vec<usize> = (0..k_list.len()).collect();
    order.sort_by_key(|&x| k_list[x]);
    let mut out = vec![None; k_list.len()];
    let mut delta = DMatrix::<f64>::zeros(m, n);
    let mut built = 0;
    for idx in order {
        let k = k_list[idx];
        while built < k {
            delta.ger(after.sigma()[built], &after.left().column(built), &after.right().column(built), 1.0);
            delta.ger(-before.sigma()[built], &before.left().column(built), &before.right().column(built), 1.0);
            built += 1;
        }
        out[idx] = Some(summarize_delta(&delta, flip, k, capture));
    }
    Ok(out.into_iter().map(|x| x.expect("every cutoff measured")).collect())
}

fn summarize_delta(
    delta: &DMatrix<f64>,
    flip: NeighbourFlip,
    k: usize,
    capture_fraction: Option<f64>,
) -> PerturbationMeasurement {
    let (m, n) = delta.shape();
    let (mut best, mut at) = (-1.0, (0, 0));
    // Column-major scan; ties keep the first position found.
    for c in 0..n {
        for r in 0..m {
            let x = delta[(r, c)].abs();
            if x > best {
                best = x;
                at = (r, c);
            }
        }
    }
    let delta_k = best.max(0.0);
    PerturbationMeasurement {
        k,
        delta_k,
        delta_ij_k: delta[(flip.i, flip.j)].abs(),
        argmax_at_flip: delta_k > 0.0 && at == (flip.i, flip.j),
        f_k: f_k(k, m, n),
        sigma_k_bound: sigma_k(k, m, n),
        row_change_sq: delta.row(flip.i).norm_squared(),
        global_change: delta.norm(),
        capture_fraction,
    }
}

/// Brute-force measurement on a real matrix with `T′ = T + C e_i e_j†`.
pub fn measure_perturbation(
    matrix: &DMatrix<f64>,
    flip: NeighbourFlip,
    k_list: &[usize],
    svd_rank: usize,
) -> Result<Vec<PerturbationMeasurement>> {
    let before = dense_svd(matrix, svd_rank)?;
    measure_with(&before, matrix, flip, k_list, svd_rank)
}

/// As [`measure_perturbation`] for binary matrices; the flip is checked.
pub fn measure_binary(
    matrix: &PreferenceMatrix,
    flip: NeighbourFlip,
    k_list: &[usize],
    svd_rank: usize,
) -> Result<Vec<PerturbationMeasurement>> {
    flip_entry(matrix, flip)?;
    measure_perturbation(&matrix.to_dense(), flip, k_list, svd_rank)
}

/// Reuses a factorization of `T`, factorizing only `T′`.
pub fn measure_with(
    before: &SvdFactorization,
    matrix: &DMatrix<f64>,
    flip: NeighbourFlip,
    k_list: &[usize],
    svd_rank: usize,
) -> Result<Vec<PerturbationMeasurement>> {
    check_k_list(k_list, svd_rank)?;
    let after = dense_svd(&shift_entry(matrix, flip)?, svd_rank)?;
    measure_factorizations(before, &after, flip, k_list)
}

#[derive(Clone, Debug)]
pub struct PerturbationPrediction {
    /// `α̃_λ = C v_{λj}`.
    pub alpha_tilde: Vec<f64>,
    /// `β̃_λ = C u_{λi}`.
    pub beta_tilde: Vec<f64>,
    /// `|Σ_{λ<k} C(v_{λj}² + u_{λi}²) + u_{λi} v_{λj}/σ_λ|`.
    pub delta_pred_ij: f64,
    /// `1 − |Δ_pred − δT|_F` with coefficients fitted to `δT` by least
    /// squares over the whole factorization.
    pub capture_fraction: f64,
    /// Same residual with the closed-form coefficients `α̃`, `β̃`.
    pub closed_form_capture: f64,
    /// Set when a zero singular value forced a `1/σ` term to be skipped.
    pub degenerate: bool,
}

fn is_zero_sigma(s: f64, top: f64) -> bool {
    s <= 1e-12 * top
}

/// `|e_i a† + b e_j† + (s − C) e_i e_j†|_F` without forming the matrix.
fn residual_norm(a: &DVector<f64>, b: &DVector<f64>, s: f64, flip: NeighbourFlip) -> f64 {
    let c = flip.direction.sign();
    let (i, j) = (flip.i, flip.j);
    let mut total = 0.0;
    for col in 0..a.len() {
        let mut x = a[col];
        if col == j {
            x += b[i] + s - c;
        }
        total += x * x;
    }
    for row in 0..b.len() {
        if row != i {
            total += b[row] * b[row];
        }
    }
    total.sqrt()
}

/// Residual of the ansatz for coefficient vectors `x = σα`, `y = σβ`.
fn ansatz_residual(svd: &SvdFactorization, flip: NeighbourFlip, x: &[f64], y: &[f64]) -> (f64, bool) {
    let top = svd.sigma().first().copied().unwrap_or(0.0);
    let mut a = DVector::zeros(svd.n());
    let mut b = DVector::zeros(svd.m());
    let mut s = 0.0;
    let mut degenerate = false;
    for lam in 0..svd.rank() {
        a.axpy(x[lam], &svd.right().column(lam), 1.0);
        b.axpy(y[lam], &svd.left().column(lam), 1.0);
        let sig = svd.sigma()[lam];
        if is_zero_sigma(sig, top) {
            degenerate |= x[lam] * y[lam] != 0.0;
        } else {
            s += x[lam] * y[lam] / sig;
        }
    }
    (residual_norm(&a, &b, s, flip), degenerate)
}

/// Least-squares fit of the first-order terms `e_i v_λ†` and `u_λ e_j†` to
/// `C e_i e_j†`. Their Gram matrix is `[[I, D], [D†, I]]` with
/// `D_{λμ} = v_{λj} u_{μi}`; the minimum-norm solution comes from a
/// pseudo-inverse since the two families overlap at full rank.
fn fitted_coefficients(svd: &SvdFactorization, flip: NeighbourFlip) -> (Vec<f64>, Vec<f64>) {
    let r = svd.rank();
    let c = flip.direction.sign();
    let vj: Vec<f64> = (0..r).map(|l| svd.v(l, flip.j)).collect();
    let ui: Vec<f64> = (0..r).map(|l| svd.u(l, flip.i)).collect();
    let mut gram = DMatrix::<f64>::identity(2 * r, 2 * r);
    for l in 0..r {
        for mu in 0..r {
            let d = vj[l] * ui[mu];
            gram[(l, r + mu)] = d;
            gram[(r + mu, l)] = d;
        }
    }
    let rhs = DVector::from_iterator(2 * r, vj.iter().chain(ui.iter()).map(|v| c * v));
    let sol = gram
        .pseudo_inverse(1e-10)
        .map(|p| p * rhs)
        .unwrap_or_else(|_| DVector::zeros(2 * r));
    (sol.rows(0, r).iter().copied().collect(), sol.rows(r, r).iter().copied().collect())
}

fn fitted_capture(svd: &SvdFactorization, flip: NeighbourFlip) -> f64 {
    let (x, y) = fitted_coefficients(svd, flip);
    1.0 - ansatz_residual(svd, flip, &x, &y).0
}

/// Perturbation-form prediction for `flip` at cutoff `k`.
pub fn predict_perturbation(svd: &SvdFactorization, flip: NeighbourFlip, k: usize) -> Result<PerturbationPrediction> {
    if k > svd.rank() {
        return Err(Error::InsufficientRank {
            requested: k,
            available: svd.rank(),
        });
    }
    if flip.i >= svd.m() || flip.j >= svd.n() {
        return Err(Error::IndexOutOfRange {
            row: flip.i,
            col: flip.j,
            m: svd.m(),
            n: svd.n(),
        });
    }
    let c = flip.direction.sign();
    let r = svd.rank();
    let alpha_tilde: Vec<f64> = (0..r).map(|l| c * svd.v(l, flip.j)).collect();
    let beta_tilde: Vec<f64> = (0..r).map(|l| c * svd.u(l, flip.i)).collect();
    let top = svd.sigma().first().copied().unwrap_or(0.0);

    let mut degenerate = false;
    let mut pred = 0.0;
    for lam in 0..k {
        let (v, u) = (svd.v(lam, flip.j), svd.u(lam, flip.i));
        pred += c * (v * v + u * u);
        let sig = svd.sigma()[lam];
        if is_zero_sigma(sig, top) {
            degenerate |= u * v != 0.0;
        } else {
            pred += u * v / sig;
        }
    }

    let (closed, closed_degenerate) = ansatz_residual(svd, flip, &alpha_tilde, &beta_tilde);
    let (x, y) = fitted_coefficients(svd, flip);
    let (fitted, fitted_degenerate) = ansatz_residual(svd, flip, &x, &y);
    Ok(PerturbationPrediction {
        alpha_tilde: alpha_tilde[..k].to_vec(),
        beta_tilde: beta_tilde[..k].to_vec(),
        delta_pred_ij: pred.abs(),
        capture_fraction: 1.0 - fitted,
        closed_form_capture: 1.0 - closed,
        degenerate: degenerate || closed_degenerate || fitted_degenerate,
    })
}

/// Where each trial's matrix comes from.
#[derive(Clone, Copy, Debug)]
pub enum TrialSource<'a> {
    /// One real matrix, every flip a shift `T + C e_i e_j†`.
    Dense(&'a DMatrix<f64>),
    /// One binary matrix; flips must respect the current entry.
    Binary(&'a PreferenceMatrix),
    /// A fresh planted instance per trial, drawn from stream `t` of `seed`.
    Ensemble { spec: PlantedSpec, seed: u64 },
}

impl TrialSource<'_> {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            TrialSource::Dense(t) => t.shape(),
            TrialSource::Binary(t) => (t.m(), t.n()),
            TrialSource::Ensemble { spec, .. } => (spec.m, spec.n),
        }
    }
}

/// Stream offset keeping ensemble matrices apart from flip draws.
const ENSEMBLE_STREAM_BASE: u64 = 1 << 32;

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub k_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub direction: FlipDirection,
    /// Rank retained from each SVD; defaults to `max(k_list)`.
    pub svd_rank: Option<usize>,
    /// Restricts flipped users, e.g. to typical ones.
    pub users: Option<Vec<usize>>,
}

impl SweepConfig {
    pub fn new(k_list: Vec<usize>, trials: usize, seed: u64) -> Self {
        Self {
            k_list,
            trials,
            seed,
            direction: FlipDirection::Add,
            svd_rank: None,
            users: None,
        }
    }

    fn rank(&self) -> usize {
        self.svd_rank
            .unwrap_or_else(|| self.k_list.iter().copied().max().unwrap_or(0))
            .max(1)
    }
}

#[derive(Clone, Debug)]
pub struct FlipTrial {
    pub trial: usize,
    pub flip: NeighbourFlip,
    pub measurements: Vec<PerturbationMeasurement>,
}

/// Uniform admissible flip: any cell for real matrices, a zero cell for
/// `Add` and a one cell for `Remove` on binary matrices.
pub fn sample_flip(
    source: &TrialSource<'_>,
    direction: FlipDirection,
    users: Option<&[usize]>,
    rng: &mut SeededRng,
) -> Result<NeighbourFlip> {
    let (m, n) = source.shape();
    let pick_user = |rng: &mut SeededRng| match users {
        Some(u) => u[rng.below(u.len())],
        None => rng.below(m),
    };
    if users.is_some_and(|u| u.is_empty()) || m == 0 || n == 0 {
        return Err(Error::NoAdmissibleFlips("no candidate users".into()));
    }
    let TrialSource::Binary(t) = source else {
        let i = pick_user(rng);
        return Ok(NeighbourFlip::new(i, rng.below(n), direction));
    };
    let candidates: Vec<usize> = match users {
        Some(u) => u.to_vec(),
        None => (0..m).collect(),
    };
    let weight = |i: usize| match direction {
        FlipDirection::Add => n - t.row(i).len(),
        FlipDirection::Remove => t.row(i).len(),
    };
    let total: usize = candidates.iter().map(|&i| weight(i)).sum();
    if total == 0 {
        return Err(Error::NoAdmissibleFlips(format!(
            "no cells admit a {} flip",
            direction.as_str()
        )));
    }
    let mut target = rng.below(total);
    for &i in &candidates {
        let w = weight(i);
        if target >= w {
            target -= w;
            continue;
        }
        let row = t.row(i);
        let j = match direction {
            FlipDirection::Remove => row[target] as usize,
            FlipDirection::Add => {
                // The target-th column absent from the sorted row.
                let mut j = target;
                for &c in row {
                    if (c as usize) <= j {
                        j += 1;
                    } else {
                        break;
                    }
                }
                j
            }
        };
        return Ok(NeighbourFlip::new(i, j, direction));
    }
    unreachable!("target lies within the total weight")
}

/// Runs `config.trials` independent flips and measures each.
pub fn run_flip_trials(source: TrialSource<'_>, config: &SweepConfig) -> Result<Vec<FlipTrial>> {
    if config.trials == 0 {
        return Err(Error::NoAdmissibleFlips("zero trials requested".into()));
    }
    if config.k_list.is_empty() {
        return Err(Error::invalid("k list is empty"));
    }
    let (m, n) = source.shape();
    let rank = config.rank();
    if rank > m.min(n) {
        return Err(Error::InsufficientRank {
            requested: rank,
            available: m.min(n),
        });
    }
    check_k_list(&config.k_list, rank)?;

    let fixed: Option<(Cow<'_, DMatrix<f64>>, SvdFactorization)> = match source {
        TrialSource::Dense(t) => Some((Cow::Borrowed(t), dense_svd(t, rank)?)),
        TrialSource::Binary(t) => {
            let d = t.to_dense();
            let f = dense_svd(&d, rank)?;
            Some((Cow::Owned(d), f))
        }
        TrialSource::Ensemble { .. } => None,
    };

    (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = SeededRng::new(config.seed, trial as u64);
            let flip = sample_flip(&source, config.direction, config.users.as_deref(), &mut rng)?;
            let measurements = match (&fixed, source) {
                (Some((dense, before)), _) => measure_with(before, dense, flip, &config.k_list, rank)?,
                (None, TrialSource::Ensemble { spec, seed }) => {
                    let t = spec.instance(seed, ENSEMBLE_STREAM_BASE + trial as u64)?;
                    measure_perturbation(&t, flip, &config.k_list, rank)?
                }
                (None, _) => unreachable!("fixed sources are pre-factorized"),
            };
            Ok(FlipTrial {
                trial,
                flip,
                measurements,
            })
        })
        .collect()
}

fn column(trials: &[FlipTrial], idx: usize) -> impl Iterator<Item = &PerturbationMeasurement> {
    trials.iter().map(move |t| &t.measurements[idx])
}

fn mean<I: Iterator<Item = f64>>(it: I) -> f64 {
    let (sum, count) = it.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn max_of<I: Iterator<Item = f64>>(it: I) -> f64 {
    it.fold(0.0, f64::max)
}

fn fraction<I: Iterator<Item = bool>>(it: I) -> f64 {
    let (hit, count) = it.fold((0usize, 0usize), |(h, c), x| (h + usize::from(x), c + 1));
    if count == 0 {
        0.0
    } else {
        hit as f64 / count as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoreLemmaRow {
    pub k: usize,
    pub f_k: f64,
    pub sigma_bound: f64,
    pub delta_mean: f64,
    pub delta_max: f64,
    /// Fraction with `|δ(k) − f(k)| ≥ t Σ(k)`.
    pub outside_frac: f64,
    pub argmax_frac: f64,
    /// Mean of `δ(k)/f(k)` over trials.
    pub ratio_mean: f64,
}

#[derive(Clone, Debug)]
pub struct CoreLemmaTable {
    pub band_t: f64,
    pub rows: Vec<CoreLemmaRow>,
}

impl CoreLemmaTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,f_k,sigma_bound,delta_mean,delta_max,outside_frac,argmax_frac\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.k, r.f_k, r.sigma_bound, r.delta_mean, r.delta_max, r.outside_frac, r.argmax_frac
            );
        }
        out
    }
}

pub fn core_lemma_table(k_list: &[usize], trials: &[FlipTrial], band_t: f64) -> CoreLemmaTable {
    let rows = k_list
        .iter()
        .enumerate()
        .map(|(idx, &k)| {
            let first = trials.first().map(|t| t.measurements[idx]);
            let f = first.map_or(0.0, |x| x.f_k);
            let s = first.map_or(0.0, |x| x.sigma_k_bound);
            CoreLemmaRow {
                k,
                f_k: f,
                sigma_bound: s,
                delta_mean: mean(column(trials, idx).map(|x| x.delta_k)),
                delta_max: max_of(column(trials, idx).map(|x| x.delta_k)),
                outside_frac: fraction(column(trials, idx).map(|x| (x.delta_k - f).abs() >= band_t * s)),
                argmax_frac: fraction(column(trials, idx).map(|x| x.argmax_at_flip)),
                ratio_mean: if f > 0.0 {
                    mean(column(trials, idx).map(|x| x.delta_k / f))
                } else {
                    0.0
                },
            }
        })
        .collect();
    CoreLemmaTable { band_t, rows }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowNormRow {
    pub k: usize,
    pub row_change_mean: f64,
    pub k_over_n: f64,
    pub bound2: f64,
    pub row_change_max: f64,
}

#[derive(Clone, Debug)]
pub struct RowNormTable {
    pub rows: Vec<RowNormRow>,
}

impl RowNormTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,row_change_mean,k_over_n,bound2,row_change_max\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.k, r.row_change_mean, r.k_over_n, r.bound2, r.row_change_max
            );
        }
        out
    }
}

pub fn row_norm_table(k_list: &[usize], n: usize, trials: &[FlipTrial]) -> RowNormTable {
    let rows = k_list
        .iter()
        .enumerate()
        .map(|(idx, &k)| RowNormRow {
            k,
            row_change_mean: mean(column(trials, idx).map(|x| x.row_change_sq)),
            k_over_n: k as f64 / n as f64,
            bound2: 2.0,
            row_change_max: max_of(column(trials, idx).map(|x| x.row_change_sq)),
        })
        .collect();
    RowNormTable { rows }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalNormRow {
    pub k: usize,
    pub global_mean: f64,
    pub row_mean: f64,
    pub delta_mean: f64,
    pub global_ge_row_frac: f64,
}

#[derive(Clone, Debug)]
pub struct GlobalNormTable {
    pub rows: Vec<GlobalNormRow>,
}

impl GlobalNormTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,global_mean,row_mean,delta_mean,global_ge_row_frac\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.k, r.global_mean, r.row_mean, r.delta_mean, r.global_ge_row_frac
            );
        }
        out
    }

    /// Largest `global_mean / row_mean` over the rows with `k ≤ k_max`.
    pub fn max_gap(&self, k_max: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.k <= k_max && r.row_mean > 0.0)
            .map(|r| r.global_mean / r.row_mean)
            .fold(0.0, f64::max)
    }
}

pub fn global_norm_table(k_list: &[usize], trials: &[FlipTrial]) -> GlobalNormTable {
    let rows = k_list
        .iter()
        .enumerate()
        .map(|(idx, &k)| GlobalNormRow {
            k,
            global_mean: mean(column(trials, idx).map(|x| x.global_change)),
            row_mean: mean(column(trials, idx).map(|x| x.row_change())),
            delta_mean: mean(column(trials, idx).map(|x| x.delta_k)),
            global_ge_row_frac: fraction(column(trials, idx).map(|x| x.global_ge_row())),
        })
        .collect();
    GlobalNormTable { rows }
}

/// Mean fitted capture over trials that carry one.
pub fn mean_capture(trials: &[FlipTrial]) -> Option<f64> {
    let values: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.measurements.first().and_then(|m| m.capture_fraction))
        .collect();
    (!values.is_empty()).then(|| mean(values.into_iter()))
}

/// Core-lemma sweep with the 95% Chebyshev band.
pub fn core_lemma_sweep(source: TrialSource<'_>, config: &SweepConfig) -> Result<CoreLemmaTable> {
    let trials = run_flip_trials(source, config)?;
    Ok(core_lemma_table(&config.k_list, &trials, CHEBYSHEV_T95))
}

pub fn row_norm_sweep(source: TrialSource<'_>, config: &SweepConfig) -> Result<RowNormTable> {
    let n = source.shape().1;
    let trials = run_flip_trials(source, config)?;
    Ok(row_norm_table(&config.k_list, n, &trials))
}

pub fn global_norm_sweep(source: TrialSource<'_>, config: &SweepConfig) -> Result<GlobalNormTable> {
    let trials = run_flip_trials(source, config)?;
    Ok(global_norm_table(&config.k_list, &trials))
}
