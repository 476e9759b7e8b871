//! Low-rank recommendation sampling and its differential-privacy analysis.
//!
//! The crate is organised bottom-up:
//!
//! * [`matrix`] and [`ingest`] — binary preference matrices and loaders;
//! * [`svd`] — truncated SVD, low-rank rows, ℓ² sampling;
//! * [`recommender`] — low-rank recommendation laws and typical users;
//! * [`fkv`] — the row/column-sampling sketch that avoids a full SVD;
//! * [`perturb`] — single-entry flip experiments on `T_{≤k}`;
//! * [`randmat`] — sphere-projection and Marcenko–Pastur laws;
//! * [`dp`] — closed-form `(ε, δ)` budgets and their empirical check;
//! * [`synthetic`] — planted low-rank test beds.
//!
//! All randomness flows through [`rng::SeededRng`], so every experiment is
//! reproducible from `(seed, stream)`.

pub mod dp;
pub mod error;
pub mod fkv;
pub mod ingest;
pub mod matrix;
pub mod perturb;
pub mod randmat;
pub mod recommender;
pub mod rng;
pub mod special;
pub mod svd;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::{DatasetStats, PreferenceMatrix, RowAccess};
pub use rng::SeededRng;
pub use svd::{l2_sample, svd, svd_sparse, SvdFactorization};
