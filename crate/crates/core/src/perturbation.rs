//! Finite-rank perturbations `E = P Λ W*` with `W* P = I`.
//!
//! `P` has orthonormal columns (the right eigenvectors of `E`), `Λ` lists the
//! spike values repeated by multiplicity, and `W = P + τ Z` with `Z`
//! orthonormal and orthogonal to `range(P)`. `τ = 0` gives a normal `E`;
//! `τ > 0` keeps the same right eigenvectors but tilts the left ones.

use faer::{Col, ColRef, Mat, MatRef, c64};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dense_guard, identity, op_norm, orthonormalize};
use crate::rng::{Domain, stream};

/// Spikes closer than this (relative) are treated as the same value.
const SPIKE_MATCH_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub mu: c64,
    pub multiplicity: usize,
}

impl Spike {
    pub fn new(mu: c64, multiplicity: usize) -> Self {
        Self { mu, multiplicity }
    }

    pub fn real(mu: f64, multiplicity: usize) -> Self {
        Self::new(c64::new(mu, 0.0), multiplicity)
    }

    /// Limit of the squared eigenvector overlap, `1 - 1/|mu|^2`.
    pub fn overlap_limit(&self) -> f64 {
        1.0 - 1.0 / self.mu.norm_sqr()
    }

    pub(crate) fn matches(&self, mu: c64) -> bool {
        (self.mu - mu).norm() <= SPIKE_MATCH_TOL * (1.0 + self.mu.norm())
    }
}

/// Validation limits for a spike list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpikeLimits {
    pub r_max: usize,
    /// Every spike needs `|mu| >= min_modulus` (the `1 + δ` floor).
    pub min_modulus: f64,
    /// Bound on `‖Λ‖ (1 + τ)`.
    pub max_scale: f64,
}

impl Default for SpikeLimits {
    fn default() -> Self {
        Self { r_max: 32, min_modulus: 1.05, max_scale: 100.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeSpec {
    pub spikes: Vec<Spike>,
    pub non_normality_tau: f64,
}

impl SpikeSpec {
    pub fn new(spikes: Vec<Spike>, non_normality_tau: f64) -> Result<Self> {
        let spec = Self { spikes, non_normality_tau };
        spec.validate(&SpikeLimits::default())?;
        Ok(spec)
    }

    pub fn rank(&self) -> usize {
        self.spikes.iter().map(|s| s.multiplicity).sum()
    }

    pub fn validate(&self, limits: &SpikeLimits) -> Result<()> {
        if self.spikes.is_empty() {
            return Err(Error::Config("spike list is empty".into()));
        }
        if !(self.non_normality_tau >= 0.0 && self.non_normality_tau.is_finite()) {
            return Err(Error::Config(format!(
                "non_normality_tau must be a finite number >= 0, got {}",
                self.non_normality_tau
            )));
        }
        for (idx, s) in self.spikes.iter().enumerate() {
            if !s.mu.is_finite() {
                return Err(Error::Config(format!("spikes[{idx}]: mu is not finite")));
            }
            if s.multiplicity == 0 {
                return Err(Error::Config(format!("spikes[{idx}]: multiplicity must be positive")));
            }
            if s.mu.norm() < limits.min_modulus {
                return Err(Error::Config(format!(
                    "spikes[{idx}]: |mu| = {} violates the delta floor rule |mu| >= {} (spikes must sit outside 1 + delta)",
                    s.mu.norm(),
                    limits.min_modulus
                )));
            }
            for (jdx, t) in self.spikes.iter().enumerate().skip(idx + 1) {
                if s.matches(t.mu) {
                    return Err(Error::Config(format!("spikes[{idx}] and spikes[{jdx}] have the same mu = {}", s.mu)));
                }
            }
        }
        let r = self.rank();
        if r > limits.r_max {
            return Err(Error::Config(format!("total rank r = {r} exceeds r_max = {}", limits.r_max)));
        }
        let lambda_norm = self.spikes.iter().map(|s| s.mu.norm()).fold(0.0, f64::max);
        let scale = lambda_norm * (1.0 + self.non_normality_tau);
        if scale > limits.max_scale {
            return Err(Error::Config(format!(
                "boundedness rule: max|mu| * (1 + tau) = {scale} exceeds {}",
                limits.max_scale
            )));
        }
        Ok(())
    }
}

/// `E = P Λ W*` with `W* P = I_r`.
#[derive(Clone, Debug)]
pub struct Perturbation {
    p: Mat<c64>,
    lambda: Vec<c64>,
    w: Mat<c64>,
    spikes: Vec<Spike>,
}

impl Perturbation {
    /// Wraps explicit factors. Checks shapes and `‖W*P - I‖ <= 1e-10`; the spike
    /// list is read off `Λ` in order of first appearance.
    pub fn from_factors(p: Mat<c64>, lambda: Vec<c64>, w: Mat<c64>) -> Result<Self> {
        let (n, r) = (p.nrows(), p.ncols());
        if lambda.len() != r || w.nrows() != n || w.ncols() != r {
            return Err(Error::Dimension(format!(
                "factor shapes disagree: P {}x{}, W {}x{}, Λ has {} entries",
                n,
                r,
                w.nrows(),
                w.ncols(),
                lambda.len()
            )));
        }
        let mut spikes: Vec<Spike> = Vec::new();
        for &l in &lambda {
            match spikes.iter_mut().find(|s| s.matches(l)) {
                Some(s) => s.multiplicity += 1,
                None => spikes.push(Spike::new(l, 1)),
            }
        }
        let e = Self { p, lambda, w, spikes };
        let err = e.biorthogonality_error();
        if err > 1e-10 {
            return Err(Error::Config(format!("W*P differs from the identity by {err:e}")));
        }
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn rank(&self) -> usize {
        self.p.ncols()
    }

    pub fn p_factor(&self) -> MatRef<'_, c64> {
        self.p.as_ref()
    }

    pub fn w_factor(&self) -> MatRef<'_, c64> {
        self.w.as_ref()
    }

    pub fn lambda_diag(&self) -> &[c64] {
        &self.lambda
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    /// `U = P` in the spike-adapted factorization `E = U V*`.
    pub fn u_factor(&self) -> MatRef<'_, c64> {
        self.p.as_ref()
    }

    /// `V = W conj(Λ)`, so that `V* = Λ W*` and `V* U = Λ`.
    pub fn v_factor(&self) -> Mat<c64> {
        Mat::from_fn(self.dim(), self.rank(), |i, t| self.w[(i, t)] * self.lambda[t].conj())
    }

    /// `‖W* P - I_r‖`.
    pub fn biorthogonality_error(&self) -> f64 {
        let g = self.w.adjoint() * &self.p;
        op_norm((&g - identity(self.rank())).as_ref())
    }

    /// `E x` without forming `E`.
    pub fn apply(&self, x: ColRef<'_, c64>) -> Col<c64> {
        let coeff = self.w.adjoint() * x;
        let scaled = Col::from_fn(self.rank(), |t| coeff[t] * self.lambda[t]);
        &self.p * &scaled
    }

    pub fn apply_mat(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let coeff = self.w.adjoint() * x;
        let scaled = Mat::from_fn(self.rank(), x.ncols(), |t, j| coeff[(t, j)] * self.lambda[t]);
        &self.p * &scaled
    }

    /// Indices `t` with `Λ_t = mu`.
    pub fn block_indices(&self, mu: c64) -> Result<Vec<usize>> {
        let spike = self.spike(mu)?;
        Ok((0..self.rank()).filter(|&t| spike.matches(self.lambda[t])).collect())
    }

    pub fn spike(&self, mu: c64) -> Result<&Spike> {
        self.spikes.iter().find(|s| s.matches(mu)).ok_or(Error::UnknownSpike { mu })
    }

    /// Sum over `t` of `‖u_t‖ + ‖v_t‖`, the boundedness constant.
    pub fn factor_mass(&self) -> f64 {
        let v = self.v_factor();
        (0..self.rank())
            .map(|t| self.p.col(t).norm_l2() + v.col(t).norm_l2())
            .sum()
    }
}

fn gaussian_matrix(n: usize, r: usize, seed: u64, index: u64) -> Mat<c64> {
    let mut rng = stream(seed, Domain::Perturbation, index);
    let mut g = Mat::zeros(n, r);
    for j in 0..r {
        for i in 0..n {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            g[(i, j)] = c64::new(re, im);
        }
    }
    g
}

/// Samples `P` and `Z` and assembles `E = P Λ W*` with `W = P + τ Z`.
pub fn build_perturbation(spec: &SpikeSpec, n: usize, seed: u64) -> Result<Perturbation> {
    spec.validate(&SpikeLimits::default())?;
    let r = spec.rank();
    if n < 2 * r {
        return Err(Error::Dimension(format!("need n >= 2r, got n = {n}, r = {r}")));
    }
    let p = orthonormalize(gaussian_matrix(n, r, seed, 0).as_ref());

    // Z: Gaussian, projected twice onto range(P)^⊥, then orthonormalized.
    let mut z = gaussian_matrix(n, r, seed, 1);
    for _ in 0..2 {
        let coeff = p.adjoint() * &z;
        z = &z - &p * &coeff;
    }
    let z = orthonormalize(z.as_ref());
    let tau = spec.non_normality_tau;
    let w = Mat::from_fn(n, r, |i, j| p[(i, j)] + z[(i, j)] * tau);

    let lambda: Vec<c64> = spec
        .spikes
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.mu, s.multiplicity))
        .collect();
    Ok(Perturbation { p, lambda, w, spikes: spec.spikes.clone() })
}

/// `P Λ W*` as a dense matrix.
pub fn assemble_dense(e: &Perturbation) -> Result<Mat<c64>> {
    check_dense_guard(e.dim())?;
    let pl = Mat::from_fn(e.dim(), e.rank(), |i, t| e.p[(i, t)] * e.lambda[t]);
    Ok(&pl * e.w.adjoint())
}

/// Orthonormal basis of `ker(mu I - E)`.
#[derive(Clone, Debug)]
pub struct SpikeEigenspace {
    pub mu: c64,
    pub q_basis: Mat<c64>,
}

impl SpikeEigenspace {
    pub fn dim(&self) -> usize {
        self.q_basis.ncols()
    }

    /// Orthogonal projection `Q Q* x`.
    pub fn project(&self, x: ColRef<'_, c64>) -> Col<c64> {
        let c = self.q_basis.adjoint() * x;
        &self.q_basis * &c
    }
}

/// The columns of `P` in the `mu` block span the spike eigenspace; they are
/// re-orthonormalized so hand-built factors work too.
pub fn spike_eigenspace(e: &Perturbation, mu: c64) -> Result<SpikeEigenspace> {
    let idx = e.block_indices(mu)?;
    let block = Mat::from_fn(e.dim(), idx.len(), |i, j| e.p[(i, idx[j])]);
    Ok(SpikeEigenspace { mu: e.spike(mu)?.mu, q_basis: orthonormalize(block.as_ref()) })
}

/// `‖Q* x‖²` for a unit vector `x`.
pub fn overlap_squared(x: ColRef<'_, c64>, f: &SpikeEigenspace) -> Result<f64> {
    let norm = x.norm_l2();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotUnit { norm });
    }
    let c = f.q_basis.adjoint() * x;
    Ok(c.squared_norm_l2().min(1.0))
}
