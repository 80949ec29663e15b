//! Sparse i.i.d. random matrices `X = (1/sqrt(K)) B ∘ A`.
//!
//! `B` is a Bernoulli(K/n) mask and `A` has i.i.d. entries of a centered,
//! unit-variance law. Neither `A` nor `B` is materialized: each row walks over
//! its Bernoulli successes with geometric gaps and draws an `A` value only on
//! success, so sampling costs O(nK) time and memory.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, ColRef, Mat, MatRef, c64};
use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::check_dense_guard;
use crate::rng::{Domain, stream};

/// Law of the entries of `A`. Every variant has mean 0 and `E|χ|² = 1`, and is sub-Gaussian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    /// Real and imaginary parts i.i.d. N(0, 1/2).
    #[default]
    ComplexGaussian,
    RealGaussian,
    /// Uniform on {-1, +1}.
    Rademacher,
}

impl EntryDistribution {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> c64 {
        match self {
            EntryDistribution::ComplexGaussian => {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            }
            EntryDistribution::RealGaussian => c64::new(StandardNormal.sample(rng), 0.0),
            EntryDistribution::Rademacher => {
                if rng.random::<bool>() {
                    c64::new(1.0, 0.0)
                } else {
                    c64::new(-1.0, 0.0)
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntryDistribution::ComplexGaussian => "complex_gaussian",
            EntryDistribution::RealGaussian => "real_gaussian",
            EntryDistribution::Rademacher => "rademacher",
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntryDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex_gaussian" => Ok(Self::ComplexGaussian),
            "real_gaussian" => Ok(Self::RealGaussian),
            "rademacher" => Ok(Self::Rademacher),
            other => Err(Error::Config(format!(
                "unknown distribution {other:?} (expected complex_gaussian, real_gaussian or rademacher)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseModelConfig {
    pub n: usize,
    /// Expected number of nonzeros per row, `1 <= K <= n`.
    pub sparsity_k: usize,
    pub distribution: EntryDistribution,
    pub seed: u64,
}

impl SparseModelConfig {
    pub fn new(n: usize, sparsity_k: usize, distribution: EntryDistribution, seed: u64) -> Result<Self> {
        let cfg = Self { n, sparsity_k, distribution, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("matrix dimension n must be positive".into()));
        }
        if self.sparsity_k == 0 || self.sparsity_k > self.n {
            return Err(Error::Config(format!(
                "sparsity K = {} must satisfy 1 <= K <= n = {}",
                self.sparsity_k, self.n
            )));
        }
        Ok(())
    }

    /// Bernoulli success probability `K/n`.
    pub fn edge_probability(&self) -> f64 {
        self.sparsity_k as f64 / self.n as f64
    }
}

/// `ceil(n^exponent)` clamped to `[2, n]`.
pub fn default_k_schedule(n: usize, exponent: f64) -> Result<usize> {
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::Config(format!(
            "k exponent must lie in the open interval (0, 1), got {exponent}"
        )));
    }
    if n < 2 {
        return Err(Error::Config(format!("k schedule needs n >= 2, got {n}")));
    }
    let k = (n as f64).powf(exponent).ceil() as usize;
    Ok(k.clamp(2, n))
}

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<c64>,
}

impl SparseMatrix {
    /// The zero matrix (no stored entries).
    pub fn zeros(n: usize) -> Self {
        Self { n, row_ptr: vec![0; n + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    /// Builds from `(row, col, value)` entries. Duplicates are summed, explicit zeros dropped.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize, c64)>) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, c64)>> = vec![Vec::new(); n];
        for (i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("entry ({i}, {j}) is not finite")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != c64::new(0.0, 0.0) {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn from_dense(a: MatRef<'_, c64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        Self::from_entries(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j, a[(i, j)]))))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, c64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.col_idx[p], self.values[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(p) => self.values[range.start + p],
            Err(_) => c64::new(0.0, 0.0),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: ColRef<'_, c64>) -> Col<c64> {
        assert_eq!(x.nrows(), self.n);
        Col::from_fn(self.n, |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .fold(c64::new(0.0, 0.0), |acc, p| acc + self.values[p] * x[self.col_idx[p]])
        })
    }

    pub fn mul_mat(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        assert_eq!(x.nrows(), self.n);
        let mut out = Mat::zeros(self.n, x.ncols());
        for j in 0..x.ncols() {
            let col = self.mul_vec(x.col(j));
            for i in 0..self.n {
                out[(i, j)] = col[i];
            }
        }
        out
    }

    /// Dense copy, refused above the dense limit.
    pub fn to_dense(&self) -> Result<Mat<c64>> {
        check_dense_guard(self.n)?;
        let mut out = Mat::zeros(self.n, self.n);
        for (i, j, v) in self.iter() {
            out[(i, j)] = v;
        }
        Ok(out)
    }

    /// `X - shift * I` in compressed-column form, diagonal always stored.
    pub fn shifted_csc(&self, shift: c64) -> Result<SparseColMat<usize, c64>> {
        let mut trips: Vec<Triplet<usize, usize, c64>> = self.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        trips.extend((0..self.n).map(|i| Triplet::new(i, i, -shift)));
        SparseColMat::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|e| Error::Dimension(format!("sparse assembly failed: {e:?}")))
    }

    /// Coordinate dump: header `%n K seed`, then one `row col re im` line per entry (0-indexed).
    pub fn write_coordinate<W: Write>(&self, mut w: W, sparsity_k: usize, seed: u64) -> Result<()> {
        writeln!(w, "%{} {} {}", self.n, sparsity_k, seed)?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{} {} {:e} {:e}", i, j, v.re, v.im)?;
        }
        Ok(())
    }
}

/// Draws `X` for `cfg`. Row `i` uses its own counter-based stream, so the result
/// is a pure function of the config.
pub fn sample_sparse_matrix(cfg: &SparseModelConfig) -> Result<SparseMatrix> {
    cfg.validate()?;
    let n = cfg.n;
    let p = cfg.edge_probability();
    let scale = 1.0 / (cfg.sparsity_k as f64).sqrt();
    let gaps = Geometric::new(p).map_err(|e| Error::Config(format!("bad edge probability {p}: {e}")))?;

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(n * cfg.sparsity_k + n);
    let mut values = Vec::with_capacity(n * cfg.sparsity_k + n);
    row_ptr.push(0);
    for i in 0..n {
        let mut rng = stream(cfg.seed, Domain::MatrixRow, i as u64);
        let mut j = 0u64;
        loop {
            // number of Bernoulli failures before the next success
            j = j.saturating_add(gaps.sample(&mut rng));
            if j >= n as u64 {
                break;
            }
            col_idx.push(j as usize);
            values.push(cfg.distribution.sample(&mut rng) * scale);
            j += 1;
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseMatrix { n, row_ptr, col_idx, values })
}
