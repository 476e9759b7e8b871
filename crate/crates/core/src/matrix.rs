//! Binary user–product preference matrices.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Sparse binary `m × n` matrix; entry `(i, j)` is 1 iff user `i` likes product `j`.
///
/// Rows are stored as sorted, deduplicated column lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferenceMatrix {
    m: usize,
    n: usize,
    rows: Vec<Vec<u32>>,
    nnz: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub m: usize,
    pub n: usize,
    pub nnz: usize,
    /// Average records per user, `nnz / m`.
    pub eta: f64,
    /// `nnz / (m n)`.
    pub density: f64,
}

impl PreferenceMatrix {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            rows: vec![Vec::new(); m],
            nnz: 0,
        }
    }

    /// Builds a matrix from `(row, col)` pairs; duplicates collapse.
    pub fn from_entries<I>(m: usize, n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); m];
        for (row, col) in entries {
            if row >= m || col >= n {
                return Err(Error::IndexOutOfRange { row, col, m, n });
            }
            sets[row].insert(col as u32);
        }
        let rows: Vec<Vec<u32>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let nnz = rows.iter().map(Vec::len).sum();
        Ok(Self { m, n, rows, nnz })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_entries(n, n, (0..n).map(|i| (i, i))).expect("diagonal is in range")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    /// Sorted column indices of row `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn row_counts(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        u8::from(self.rows[i].binary_search(&(j as u32)).is_ok())
    }

    /// All `(row, col)` pairs in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, cols)| cols.iter().map(move |&j| (i, j as usize)))
    }

    /// Squared Frobenius norm; equal to `nnz` for a binary matrix.
    pub fn frobenius_sq(&self) -> f64 {
        self.nnz as f64
    }

    pub fn stats(&self) -> Result<DatasetStats> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::invalid("statistics need m, n >= 1"));
        }
        Ok(DatasetStats {
            m: self.m,
            n: self.n,
            nnz: self.nnz,
            eta: self.nnz as f64 / self.m as f64,
            density: self.nnz as f64 / (self.m as f64 * self.n as f64),
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.n);
        for (i, j) in self.entries() {
            out[(i, j)] = 1.0;
        }
        out
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, value: bool) {
        let row = &mut self.rows[i];
        match (row.binary_search(&(j as u32)), value) {
            (Ok(pos), false) => {
                row.remove(pos);
                self.nnz -= 1;
            }
            (Err(pos), true) => {
                row.insert(pos, j as u32);
                self.nnz += 1;
            }
            _ => {}
        }
    }

    /// Keeps `⌈m / factor⌉` distinct rows chosen uniformly without
    /// replacement; retained rows keep their original relative order.
    pub fn subsample(&self, factor: usize, rng: &mut SeededRng) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("subsample factor must be >= 1"));
        }
        if factor > self.m {
            return Err(Error::invalid(format!(
                "subsample factor {factor} exceeds row count {}",
                self.m
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let keep = self.m.div_ceil(factor);
        // Partial Fisher–Yates over row indices.
        let mut idx: Vec<usize> = (0..self.m).collect();
        for t in 0..keep {
            let pick = t + rng.below(self.m - t);
            idx.swap(t, pick);
        }
        let mut chosen = idx[..keep].to_vec();
        chosen.sort_unstable();
        let rows: Vec<Vec<u32>> = chosen.iter().map(|&i| self.rows[i].clone()).collect();
        let nnz = rows.iter().map(Vec::len).sum();
        Ok(Self {
            m: keep,
            n: self.n,
            rows,
            nnz,
        })
    }

    /// CSV triplet serialization (`row,col` per line, 0-based).
    pub fn to_csv_triplets(&self) -> String {
        let mut out = format!("# {} x {}\n", self.m, self.n);
        for (i, j) in self.entries() {
            let _ = writeln!(out, "{i},{j}");
        }
        out
    }
}

/// Row-wise read access shared by dense and binary matrices.
pub trait RowAccess: Sync {
    fn shape(&self) -> (usize, usize);
    fn row_vector(&self, i: usize) -> DVector<f64>;
    fn row_norm_sq(&self, i: usize) -> f64;

    fn total_norm_sq(&self) -> f64 {
        (0..self.shape().0).map(|i| self.row_norm_sq(i)).sum()
    }
}

impl RowAccess for PreferenceMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn row_vector(&self, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.n);
        for &j in &self.rows[i] {
            v[j as usize] = 1.0;
        }
        v
    }

    fn row_norm_sq(&self, i: usize) -> f64 {
        self.rows[i].len() as f64
    }

    fn total_norm_sq(&self) -> f64 {
        self.nnz as f64
    }
}

impl RowAccess for DMatrix<f64> {
    fn shape(&self) -> (usize, usize) {
        DMatrix::shape(self)
    }

    fn row_vector(&self, i: usize) -> DVector<f64> {
        self.row(i).transpose()
    }

    fn row_norm_sq(&self, i: usize) -> f64 {
        self.row(i).norm_squared()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_and_counts() {
        let t = PreferenceMatrix::from_entries(2, 3, [(0, 1), (0, 1), (1, 2)]).unwrap();
        assert_eq!(t.nnz(), 2);
        assert_eq!(t.row_counts(), vec![1, 1]);
        assert_eq!(t.row_counts().iter().sum::<usize>(), t.entries().count());
        assert_eq!(t.to_dense().norm_squared(), t.nnz() as f64);
    }

    #[test]
    fn out_of_range_rejected() {
        let err = PreferenceMatrix::from_entries(2, 2, [(2, 0)]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { row: 2, .. }));
    }

    #[test]
    fn stats_zero_and_identity() {
        let z = PreferenceMatrix::zeros(3, 4).stats().unwrap();
        assert_eq!((z.eta, z.density), (0.0, 0.0));
        let id = PreferenceMatrix::identity(2).stats().unwrap();
        assert_eq!(id.eta, 1.0);
        assert_eq!(id.density, 0.5);
        assert_eq!(id.eta * id.m as f64, id.nnz as f64);
    }

    #[test]
    fn subsample_counts() {
        let t = PreferenceMatrix::from_entries(10, 4, (0..10).map(|i| (i, i % 4))).unwrap();
        let mut rng = SeededRng::new(0, 0);
        assert_eq!(t.subsample(1, &mut rng).unwrap(), t);
        let half = t.subsample(2, &mut rng).unwrap();
        assert_eq!(half.m(), 5);
        assert_eq!(half.n(), 4);
        let third = t.subsample(3, &mut rng).unwrap();
        assert_eq!(third.m(), 4);
        assert!(t.subsample(11, &mut rng).is_err());
        assert!(t.subsample(0, &mut rng).is_err());
    }

    #[test]
    fn subsample_is_seeded() {
        let t = PreferenceMatrix::from_entries(50, 5, (0..50).map(|i| (i, i % 5))).unwrap();
        let a = t.subsample(7, &mut SeededRng::new(9, 0)).unwrap();
        let b = t.subsample(7, &mut SeededRng::new(9, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn set_toggles() {
        let mut t = PreferenceMatrix::zeros(2, 2);
        t.set(0, 0, true);
        t.set(0, 0, true);
        assert_eq!(t.nnz(), 1);
        t.set(0, 0, false);
        assert_eq!(t, PreferenceMatrix::zeros(2, 2));
    }
}
