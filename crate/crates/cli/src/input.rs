//! Matrix inputs shared by the subcommands.

use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use lora_dp::ingest::{parse_csv_triplets, parse_movielens, parse_pgm};
use lora_dp::perturb::TrialSource;
use lora_dp::synthetic::PlantedSpec;
use lora_dp::{PreferenceMatrix, SeededRng};
use nalgebra::DMatrix;

use crate::CliResult;

/// Stream holding the single synthetic matrix: the first ensemble instance.
const SYNTHETIC_STREAM: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// `.pgm` by extension, MovieLens by its header, triplets otherwise.
    Auto,
    Triplets,
    Movielens,
    Pgm,
}

#[derive(Args, Clone, Debug)]
pub struct InputArgs {
    /// Preference data file.
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: Format,
    /// MovieLens ratings at or above this become ones.
    #[arg(long, default_value_t = lora_dp::ingest::DEFAULT_MIN_RATING)]
    pub min_rating: f64,
    /// PGM pixels at or above this fraction of maxval become ones.
    #[arg(long, default_value_t = lora_dp::ingest::DEFAULT_PIXEL_THRESHOLD)]
    pub pixel_threshold: f64,
    /// Keep every `factor`-th user, chosen at random without replacement.
    #[arg(long, default_value_t = 1)]
    pub subsample: usize,
    /// Use the planted Gaussian test bed instead of a file.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 200)]
    pub synthetic_m: usize,
    #[arg(long, default_value_t = 300)]
    pub synthetic_n: usize,
    /// Planted rank; 0 gives a pure Gaussian matrix.
    #[arg(long, default_value_t = 8)]
    pub synthetic_rank: usize,
    #[arg(long, default_value_t = 3.0)]
    pub synthetic_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub synthetic_noise: f64,
}

pub enum Input {
    Binary(PreferenceMatrix),
    Dense(DMatrix<f64>),
}

impl InputArgs {
    pub fn is_given(&self) -> bool {
        self.input.is_some() || self.synthetic
    }

    pub fn planted(&self) -> PlantedSpec {
        PlantedSpec::new(self.synthetic_m, self.synthetic_n, self.synthetic_rank)
            .with_scale(self.synthetic_scale)
            .with_noise(self.synthetic_noise)
    }

    pub fn load(&self, seed: u64) -> CliResult<Input> {
        if self.synthetic {
            return Ok(Input::Dense(self.planted().instance(seed, SYNTHETIC_STREAM)?));
        }
        let Some(path) = &self.input else {
            return Err("no input: pass --input <file> or --synthetic".into());
        };
        let format = match self.format {
            Format::Auto => detect(path)?,
            f => f,
        };
        let matrix = match format {
            Format::Pgm => {
                let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
                parse_pgm(&bytes, self.pixel_threshold)?
            }
            Format::Movielens => parse_movielens(&read(path)?, self.min_rating)?.matrix,
            Format::Triplets | Format::Auto => parse_csv_triplets(&read(path)?, None, None)?,
        };
        let matrix = if self.subsample > 1 {
            matrix.subsample(self.subsample, &mut SeededRng::new(seed, 0))?
        } else {
            matrix
        };
        Ok(Input::Binary(matrix))
    }

    /// Where flip trials draw their matrices: the fixed input, or a fresh
    /// planted instance per trial for `--synthetic`.
    pub fn trial_source<'a>(&self, loaded: &'a Option<Input>, seed: u64) -> TrialSource<'a> {
        match loaded {
            Some(Input::Binary(t)) => TrialSource::Binary(t),
            Some(Input::Dense(t)) => TrialSource::Dense(t),
            None => TrialSource::Ensemble {
                spec: self.planted(),
                seed,
            },
        }
    }
}

fn read(path: &PathBuf) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn detect(path: &PathBuf) -> CliResult<Format> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return Ok(Format::Pgm);
    }
    let text = read(path)?;
    let first = text.lines().next().unwrap_or("").trim();
    Ok(if first.starts_with("userId") {
        Format::Movielens
    } else {
        Format::Triplets
    })
}

impl Input {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Input::Binary(t) => (t.m(), t.n()),
            Input::Dense(t) => t.shape(),
        }
    }

    pub fn binary(&self, what: &str) -> CliResult<&PreferenceMatrix> {
        match self {
            Input::Binary(t) => Ok(t),
            Input::Dense(_) => Err(format!("{what} needs a binary preference matrix, not --synthetic").into()),
        }
    }
}
