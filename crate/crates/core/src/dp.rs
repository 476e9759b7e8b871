//! Closed-form `(ε, δ)` budgets for low-rank recommendation, an empirical
//! checker of the DP inequality on neighbouring matrices, and the
//! typicalization pass that moves every user into the typical band.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{PreferenceMatrix, RowAccess};
use crate::perturb::{sample_flip, shift_entry, FlipDirection, NeighbourFlip, TrialSource};
use crate::recommender::{gamma_tilde, is_typical, typicality};
use crate::rng::SeededRng;
use crate::svd::{dense_svd, SvdFactorization};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub eta: f64,
    pub gamma: f64,
    pub gamma_tilde: f64,
}

impl DpBudget {
    /// Same budget with `δ` replaced.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

/// `ε = ((1+γ̃)/η)·k/n` and `δ = ((1+γ̃)/η)·2.01·k·(1/m + 1/n)`.
pub fn dp_params(m: usize, n: usize, k: usize, eta: f64, gamma: f64) -> Result<DpBudget> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if m == 0 || n == 0 {
        return Err(Error::invalid("m and n must be >= 1"));
    }
    let gt = gamma_tilde(gamma, eta)?;
    let lead = (1.0 + gt) / eta;
    let (mf, nf, kf) = (m as f64, n as f64, k as f64);
    Ok(DpBudget {
        epsilon: lead * kf / nf,
        delta: lead * 2.01 * kf * (1.0 / mf + 1.0 / nf),
        m,
        n,
        k,
        eta,
        gamma,
        gamma_tilde: gt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub flip: NeighbourFlip,
    /// Product with the largest ratio in either direction.
    pub worst_j: usize,
    pub p: f64,
    pub p_prime: f64,
    /// `max((p′ − δ)/p, (p − δ)/p′)` at `worst_j`, over positive denominators.
    pub ratio: f64,
    pub forward_violations: usize,
    pub reverse_violations: usize,
    /// Products violating in at least one direction.
    pub violated_products: usize,
}

#[derive(Clone, Debug)]
pub struct DpViolationReport {
    pub trials: usize,
    /// `trials · n`: every product of every trial.
    pub checked_pairs: usize,
    /// Pairs violating in at least one direction.
    pub violation_count: usize,
    /// `p′ > e^ε p + δ`.
    pub forward_count: usize,
    /// `p > e^ε p′ + δ`.
    pub reverse_count: usize,
    /// Trials with any violated product.
    pub violated_trials: usize,
    pub worst_ratio: f64,
    pub outcomes: Vec<TrialOutcome>,
}

impl DpViolationReport {
    pub fn violation_rate(&self) -> f64 {
        if self.checked_pairs == 0 {
            0.0
        } else {
            self.violation_count as f64 / self.checked_pairs as f64
        }
    }

    pub fn trial_violation_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.violated_trials as f64 / self.trials as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,i,j,direction,worst_j,p,p_prime,ratio,violated\n");
        for o in &self.outcomes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                o.trial,
                o.flip.i,
                o.flip.j,
                o.flip.direction.as_str(),
                o.worst_j,
                o.p,
                o.p_prime,
                o.ratio,
                u8::from(o.violated_products > 0)
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct DpCheckConfig {
    pub k: usize,
    pub gamma: f64,
    pub trials: usize,
    pub seed: u64,
    pub direction: FlipDirection,
    /// Overrides the per-matrix budget from [`dp_params`].
    pub budget: Option<DpBudget>,
    /// `false` compares each matrix with itself (a control run).
    pub apply_flip: bool,
}

impl DpCheckConfig {
    pub fn new(k: usize, gamma: f64, trials: usize, seed: u64) -> Self {
        Self {
            k,
            gamma,
            trials,
            seed,
            direction: FlipDirection::Add,
            budget: None,
            apply_flip: true,
        }
    }
}

/// Squared row `i` of `T_{≤k}` normalized to a distribution.
fn row_law(svd: &SvdFactorization, i: usize, k: usize) -> Result<Vec<f64>> {
    crate::recommender::recommendation_distribution(svd, i, k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LawComparison {
    pub forward: usize,
    pub reverse: usize,
    /// Products failing in either direction.
    pub either: usize,
    pub worst_j: usize,
    pub worst_ratio: f64,
}

/// Compares both output laws product by product.
pub fn compare_laws(p: &[f64], p_prime: &[f64], epsilon: f64, delta: f64) -> LawComparison {
    let scale = epsilon.exp();
    let (mut fwd, mut rev, mut any) = (0, 0, 0);
    let (mut worst, mut worst_j) = (f64::NEG_INFINITY, 0);
    for (j, (&a, &b)) in p.iter().zip(p_prime).enumerate() {
        let f = b > scale * a + delta;
        let r = a > scale * b + delta;
        fwd += usize::from(f);
        rev += usize::from(r);
        any += usize::from(f || r);
        for ratio in [(a > 0.0).then(|| (b - delta) / a), (b > 0.0).then(|| (a - delta) / b)]
            .into_iter()
            .flatten()
        {
            if ratio > worst {
                worst = ratio;
                worst_j = j;
            }
        }
    }
    LawComparison {
        forward: fwd,
        reverse: rev,
        either: any,
        worst_j,
        worst_ratio: worst,
    }
}

struct Prepared {
    dense: DMatrix<f64>,
    svd: SvdFactorization,
    typical: Vec<usize>,
    budget: DpBudget,
}

fn prepare(dense: DMatrix<f64>, config: &DpCheckConfig) -> Result<Prepared> {
    let (m, n) = dense.shape();
    let report = typicality(&dense, config.gamma)?;
    let typical = report.typical_users();
    if typical.is_empty() {
        return Err(Error::NoTypicalUsers { gamma: config.gamma });
    }
    let budget = match config.budget {
        Some(b) => b,
        None => dp_params(m, n, config.k, report.eta, config.gamma)?,
    };
    let svd = dense_svd(&dense, config.k)?;
    Ok(Prepared {
        dense,
        svd,
        typical,
        budget,
    })
}

fn run_trial(
    prepared: &Prepared,
    source: &TrialSource<'_>,
    trial: usize,
    config: &DpCheckConfig,
) -> Result<TrialOutcome> {
    let mut rng = SeededRng::new(config.seed, trial as u64);
    let flip = sample_flip(source, config.direction, Some(&prepared.typical), &mut rng)?;
    let p = row_law(&prepared.svd, flip.i, config.k)?;
    let p_prime = if config.apply_flip {
        let shifted = shift_entry(&prepared.dense, flip)?;
        row_law(&dense_svd(&shifted, config.k)?, flip.i, config.k)?
    } else {
        p.clone()
    };
    let b = prepared.budget;
    let cmp = compare_laws(&p, &p_prime, b.epsilon, b.delta);
    Ok(TrialOutcome {
        trial,
        flip,
        worst_j: cmp.worst_j,
        p: p[cmp.worst_j],
        p_prime: p_prime[cmp.worst_j],
        ratio: cmp.worst_ratio,
        forward_violations: cmp.forward,
        reverse_violations: cmp.reverse,
        violated_products: cmp.either,
    })
}

/// Empirical check of `p′_j ≤ e^ε p_j + δ` and its reverse for all products,
/// over flips of `γ`-typical users.
pub fn dp_check(source: TrialSource<'_>, config: &DpCheckConfig) -> Result<DpViolationReport> {
    if config.trials == 0 {
        return Err(Error::invalid("zero trials requested"));
    }
    let (_, n) = source.shape();
    let fixed = match source {
        TrialSource::Dense(t) => Some(prepare(t.clone(), config)?),
        TrialSource::Binary(t) => Some(prepare(t.to_dense(), config)?),
        TrialSource::Ensemble { .. } => None,
    };
    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|trial| match (&fixed, source) {
            (Some(prepared), _) => run_trial(prepared, &source, trial, config),
            (None, TrialSource::Ensemble { spec, seed }) => {
                let t = spec.instance(seed, (1u64 << 32) + trial as u64)?;
                let prepared = prepare(t, config)?;
                run_trial(&prepared, &TrialSource::Dense(&prepared.dense), trial, config)
            }
            (None, _) => unreachable!("fixed sources are prepared up front"),
        })
        .collect::<Result<_>>()?;

    let sum = |f: fn(&TrialOutcome) -> usize| outcomes.iter().map(f).sum::<usize>();
    Ok(DpViolationReport {
        trials: config.trials,
        checked_pairs: config.trials * n,
        violation_count: sum(|o| o.violated_products),
        forward_count: sum(|o| o.forward_violations),
        reverse_count: sum(|o| o.reverse_violations),
        violated_trials: outcomes.iter().filter(|o| o.violated_products > 0).count(),
        worst_ratio: outcomes.iter().map(|o| o.ratio).fold(f64::NEG_INFINITY, f64::max),
        outcomes,
    })
}

#[derive(Clone, Debug)]
pub struct TypicalizeResult {
    pub matrix: PreferenceMatrix,
    /// `η` of the input, held fixed during the pass.
    pub eta: f64,
    pub added: usize,
    pub removed: usize,
}

impl TypicalizeResult {
    pub fn modified_cells(&self) -> usize {
        self.added + self.removed
    }
}

/// Adds random records to users below `η/(1+γ)` and removes random records
/// from users above `(1+γ)η`, with `η` frozen at its input value.
pub fn typicalize(matrix: &PreferenceMatrix, gamma: f64, rng: &mut SeededRng) -> Result<TypicalizeResult> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    let stats = matrix.stats()?;
    let eta = stats.eta;
    if !(eta > 0.0) {
        return Err(Error::invalid("eta = 0: matrix has no records"));
    }
    let lower = eta / (1.0 + gamma);
    let upper = (1.0 + gamma) * eta;
    if lower.ceil() > upper.floor() {
        return Err(Error::invalid(format!(
            "no record count lies in the typical band [{lower:.3}, {upper:.3}]"
        )));
    }
    let n = matrix.n();
    let mut out = matrix.clone();
    let (mut added, mut removed) = (0, 0);
    for i in 0..matrix.m() {
        let count = matrix.row_norm_sq(i);
        if count < lower {
            let needed = lower.ceil() as usize;
            // Unreachable while η ≤ n, kept as a guard for callers that
            // inject their own η in the future.
            if needed > n {
                return Err(Error::TooFewProducts {
                    user: i,
                    needed,
                    available: n,
                });
            }
            let have = matrix.row(i);
            let mut absent: Vec<usize> = (0..n).filter(|j| have.binary_search(&(*j as u32)).is_err()).collect();
            for t in 0..needed - have.len() {
                let pick = t + rng.below(absent.len() - t);
                absent.swap(t, pick);
                out.set(i, absent[t], true);
                added += 1;
            }
        } else if count > upper {
            let keep = upper.floor() as usize;
            let mut present: Vec<usize> = matrix.row(i).iter().map(|&j| j as usize).collect();
            let drop = present.len() - keep;
            for t in 0..drop {
                let pick = t + rng.below(present.len() - t);
                present.swap(t, pick);
                out.set(i, present[t], false);
                removed += 1;
            }
        }
    }
    debug_assert!((0..out.m()).all(|i| is_typical(out.row_norm_sq(i), eta, gamma)));
    Ok(TypicalizeResult {
        matrix: out,
        eta,
        added,
        removed,
    })
}
