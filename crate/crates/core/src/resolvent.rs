//! Resolvent access and the finite-rank reduction.
//!
//! For `Y = X + U V*` and `λ ∉ σ(X)`, write `R(λ) = (X - λI)^{-1}` and
//! `M(λ) = V* R(λ) U`. The map `a ↦ R(λ) U a` is a bijection from
//! `ker(I + M(λ))` onto `ker(Y - λI)` with inverse `x ↦ -V* x`, so outlier
//! eigenpairs of the `n x n` matrix `Y` reduce to an `r x r` kernel problem.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::sparse::linalg::solvers::Lu as SparseLu;
use faer::{Col, ColRef, Conj, Mat, MatRef, c64};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use faer::linalg::solvers::SolveCore;

use crate::error::{Error, Result};
use crate::linalg::{identity, normalized, op_norm, select, smallest_singular_value};
use crate::matrix_model::SparseMatrix;
use crate::perturbation::Perturbation;
use crate::rng::{Domain, stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorOptions {
    /// Dense LU at or below this dimension, sparse LU above it.
    pub dense_threshold: usize,
    /// Power iterations on `R* R` for the norm estimate.
    pub norm_iterations: usize,
    /// Reject shifts with `|λ| <= 1`.
    pub require_outlier_region: bool,
    /// `‖R‖ (‖X‖_F + |λ|)` above this is treated as singular.
    pub max_condition: f64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self { dense_threshold: 200, norm_iterations: 5, require_outlier_region: true, max_condition: 1e13 }
    }
}

enum Factorization {
    Dense(PartialPivLu<c64>),
    Sparse(SparseLu<usize, c64>),
}

/// LU factorization of `X - λI`; applies `R(λ)` and `R(λ)*` to blocks of vectors.
///
/// Immutable after construction. Solves take `&self`, so one handle can serve
/// concurrent callers.
pub struct ResolventHandle {
    lambda: c64,
    n: usize,
    factor: Factorization,
    norm_estimate: f64,
}

impl std::fmt::Debug for ResolventHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResolventHandle")
            .field("lambda", &self.lambda)
            .field("n", &self.n)
            .field("dense", &self.is_dense())
            .field("norm_estimate", &self.norm_estimate)
            .finish()
    }
}

impl ResolventHandle {
    pub fn lambda(&self) -> c64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.factor, Factorization::Dense(_))
    }

    /// Power-iteration estimate of `‖R(λ)‖` (a lower bound).
    pub fn norm_estimate(&self) -> f64 {
        self.norm_estimate
    }

    /// `R(λ) b` for every column of `b`.
    pub fn solve(&self, b: MatRef<'_, c64>) -> Mat<c64> {
        let mut out = b.to_owned();
        match &self.factor {
            Factorization::Dense(lu) => lu.solve_in_place(out.as_mut()),
            Factorization::Sparse(lu) => lu.solve_in_place(out.as_mut()),
        }
        out
    }

    pub fn solve_vec(&self, b: ColRef<'_, c64>) -> Col<c64> {
        let mut out = b.to_owned();
        match &self.factor {
            Factorization::Dense(lu) => lu.solve_in_place(out.as_mat_mut()),
            Factorization::Sparse(lu) => lu.solve_in_place(out.as_mat_mut()),
        }
        out
    }

    /// `R(λ)* b`.
    pub fn solve_adjoint(&self, b: MatRef<'_, c64>) -> Mat<c64> {
        let mut out = b.to_owned();
        match &self.factor {
            Factorization::Dense(lu) => lu.solve_transpose_in_place_with_conj(Conj::Yes, out.as_mut()),
            Factorization::Sparse(lu) => lu.solve_transpose_in_place_with_conj(Conj::Yes, out.as_mut()),
        }
        out
    }

    pub fn solve_adjoint_vec(&self, b: ColRef<'_, c64>) -> Col<c64> {
        let out = self.solve_adjoint(b.as_mat());
        out.col(0).to_owned()
    }

    /// Power iteration on `R* R` from a fixed probe vector.
    pub fn estimate_norm(&self, iterations: usize) -> f64 {
        estimate_operator_norm(
            self.n,
            iterations,
            |v| self.solve_vec(v),
            |v| self.solve_adjoint_vec(v),
        )
    }
}

/// Deterministic pseudo-random unit probe.
pub(crate) fn probe_vector(n: usize, index: u64) -> Col<c64> {
    let mut rng = stream(0x5eed, Domain::Probe, index);
    let v = Col::from_fn(n, |_| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        c64::new(re, im)
    });
    normalized(v.as_ref())
}

/// Power iteration for `‖A‖` given `A` and `A*` as closures. Returns `‖A v‖` for
/// the final unit iterate `v`, so the result never exceeds the true norm.
pub(crate) fn estimate_operator_norm(
    n: usize,
    iterations: usize,
    apply: impl Fn(ColRef<'_, c64>) -> Col<c64>,
    apply_adjoint: impl Fn(ColRef<'_, c64>) -> Col<c64>,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut v = probe_vector(n, 0);
    for _ in 0..iterations {
        let y = apply(v.as_ref());
        let z = apply_adjoint(y.as_ref());
        let s = z.norm_l2();
        if !(s.is_finite() && s > 0.0) {
            return if s.is_finite() { 0.0 } else { f64::INFINITY };
        }
        v = normalized(z.as_ref());
    }
    apply(v.as_ref()).norm_l2()
}

pub fn factorize(x: &SparseMatrix, lambda: c64) -> Result<ResolventHandle> {
    factorize_with(x, lambda, &FactorOptions::default())
}

/// Factorizes `X - λI` and checks that it is numerically invertible.
pub fn factorize_with(x: &SparseMatrix, lambda: c64, opts: &FactorOptions) -> Result<ResolventHandle> {
    if opts.require_outlier_region && lambda.norm() <= 1.0 {
        return Err(Error::ShiftInsideDisk { lambda });
    }
    let n = x.dim();
    let singular = |reason: String| Error::ResolventSingular { lambda, reason };
    let factor = if n <= opts.dense_threshold {
        let mut a = x.to_dense()?;
        for i in 0..n {
            a[(i, i)] -= lambda;
        }
        Factorization::Dense(a.partial_piv_lu())
    } else {
        let a = x.shifted_csc(lambda)?;
        Factorization::Sparse(a.sp_lu().map_err(|e| singular(format!("sparse LU failed: {e:?}")))?)
    };
    let mut handle = ResolventHandle { lambda, n, factor, norm_estimate: f64::NAN };
    let est = handle.estimate_norm(opts.norm_iterations.max(1));
    let scale = x.frobenius_norm() + lambda.norm();
    if !est.is_finite() {
        return Err(singular("non-finite solve".into()));
    }
    if est * scale > opts.max_condition {
        return Err(singular(format!("condition estimate {:e}", est * scale)));
    }
    handle.norm_estimate = est;
    Ok(handle)
}

/// `M(λ) = V* R(λ) U` together with the factors it was built from.
#[derive(Clone, Debug)]
pub struct CompressedResolvent {
    lambda: c64,
    m: Mat<c64>,
    u: Mat<c64>,
    v: Mat<c64>,
    resolvent_u: Mat<c64>,
}

impl CompressedResolvent {
    pub fn lambda(&self) -> c64 {
        self.lambda
    }

    pub fn rank(&self) -> usize {
        self.m.nrows()
    }

    pub fn m_matrix(&self) -> MatRef<'_, c64> {
        self.m.as_ref()
    }

    pub fn u_factor(&self) -> MatRef<'_, c64> {
        self.u.as_ref()
    }

    pub fn v_factor(&self) -> MatRef<'_, c64> {
        self.v.as_ref()
    }

    /// `R(λ) U`, kept from the `r` solves that built `M`.
    pub fn resolvent_u(&self) -> MatRef<'_, c64> {
        self.resolvent_u.as_ref()
    }

    pub fn i_plus_m(&self) -> Mat<c64> {
        identity(self.rank()) + &self.m
    }

    /// `det(I + M(λ))`.
    pub fn determinant(&self) -> c64 {
        self.i_plus_m().determinant()
    }

    /// Singular values of `I + M(λ)`, largest first.
    pub fn singular_values(&self) -> Vec<f64> {
        self.i_plus_m().singular_values().unwrap_or_default()
    }

    pub fn smallest_singular_value(&self) -> f64 {
        smallest_singular_value(self.i_plus_m().as_ref())
    }
}

pub fn compressed_resolvent(h: &ResolventHandle, e: &Perturbation) -> Result<CompressedResolvent> {
    if e.dim() != h.dim() {
        return Err(Error::Dimension(format!("perturbation is {}-dimensional, resolvent {}", e.dim(), h.dim())));
    }
    let u = e.u_factor().to_owned();
    let v = e.v_factor();
    let resolvent_u = h.solve(u.as_ref());
    let m = v.adjoint() * &resolvent_u;
    if !m.norm_l2().is_finite() {
        return Err(Error::ResolventSingular { lambda: h.lambda(), reason: "non-finite M(λ)".into() });
    }
    Ok(CompressedResolvent { lambda: h.lambda(), m, u, v, resolvent_u })
}

/// `max(1e-6, r · eps · ‖I + M‖)`.
pub fn default_kernel_tolerance(m: &CompressedResolvent) -> f64 {
    let top = m.singular_values().first().copied().unwrap_or(0.0);
    f64::max(1e-6, m.rank() as f64 * f64::EPSILON * top)
}

/// Right singular vectors of `I + M(λ)` with singular value `<= tol`, smallest first.
pub fn kernel_basis(m: &CompressedResolvent, tol: f64) -> Result<Vec<Col<c64>>> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("kernel tolerance must be positive, got {tol}")));
    }
    let k = m.i_plus_m();
    let svd = k.svd().map_err(|e| Error::Oracle(format!("svd of I + M failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    Ok((0..m.rank())
        .rev()
        .filter(|&j| s[j].re <= tol)
        .map(|j| v.col(j).to_owned())
        .collect())
}

/// `R(λ) U a / ‖R(λ) U a‖`.
pub fn reconstruct_eigenvector(h: &ResolventHandle, e: &Perturbation, a: ColRef<'_, c64>) -> Result<Col<c64>> {
    if a.nrows() != e.rank() {
        return Err(Error::Dimension(format!("kernel vector has length {}, rank is {}", a.nrows(), e.rank())));
    }
    let ua = e.u_factor() * a;
    let y = h.solve_vec(ua.as_ref());
    let norm = y.norm_l2();
    if !(norm >= 1e-14) || !norm.is_finite() {
        return Err(Error::DegenerateReconstruction { norm });
    }
    Ok(normalized(y.as_ref()))
}

/// Inverse of the bijection: `x ↦ -V* x`.
pub fn kernel_vector_of(e: &Perturbation, x: ColRef<'_, c64>) -> Col<c64> {
    let v = e.v_factor();
    -(v.adjoint() * x)
}

/// Split of a kernel vector into the resonant block and the rest, with the
/// quantities controlling how much mass can leak off the resonant block.
#[derive(Clone, Debug, Serialize)]
pub struct KernelDecomposition {
    /// Unit kernel vector.
    pub a_full: Vec<c64>,
    pub a_mu: Vec<c64>,
    pub a_neq: Vec<c64>,
    pub mu_indices: Vec<usize>,
    pub other_indices: Vec<usize>,
    /// `min |1 - ν/μ|` over the other spikes; infinite when there are none.
    pub c0: f64,
    /// `‖K - (I - Λ/μ)‖`.
    pub epsilon: f64,
    /// `ε / (c0 - ε)`, infinite if `ε >= c0`, zero without an off-resonant block.
    pub bound: f64,
    /// `ε < c0 / 2`.
    pub localized: bool,
    /// Measured `‖K22^{-1}‖` (None without an off-resonant block).
    pub k22_inverse_norm: Option<f64>,
}

impl KernelDecomposition {
    pub fn a_mu_norm(&self) -> f64 {
        self.a_mu.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn a_neq_norm(&self) -> f64 {
        self.a_neq.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Whether `‖a_neq‖ <= bound ‖a_mu‖`; `None` when not localized.
    pub fn inequality_holds(&self) -> Option<bool> {
        self.localized
            .then(|| self.a_neq_norm() <= self.bound * self.a_mu_norm() * (1.0 + 1e-12) + 1e-15)
    }

    /// Whether `‖K22^{-1}‖ <= 1/(c0 - ε)`; `None` when not localized.
    pub fn k22_bound_holds(&self) -> Option<bool> {
        if !self.localized {
            return None;
        }
        Some(match self.k22_inverse_norm {
            Some(v) => v <= (1.0 / (self.c0 - self.epsilon)) * (1.0 + 1e-12),
            None => true,
        })
    }
}

/// `min |1 - ν/μ|` over the entries of `Λ` that differ from `μ`.
pub fn separation_constant(lambda_diag: &[c64], mu: c64) -> f64 {
    let one = c64::new(1.0, 0.0);
    lambda_diag
        .iter()
        .filter(|&&l| !same_spike(l, mu))
        .map(|&l| (one - l / mu).norm())
        .fold(f64::INFINITY, f64::min)
}

fn same_spike(a: c64, b: c64) -> bool {
    (a - b).norm() <= 1e-12 * (1.0 + b.norm())
}

/// Kernel localization for `K = I + M(λ)` built from `e`.
pub fn kernel_localization(
    a: ColRef<'_, c64>,
    e: &Perturbation,
    mu: c64,
    m: &CompressedResolvent,
) -> Result<KernelDecomposition> {
    e.spike(mu)?;
    localize_kernel_vector(a, m.i_plus_m().as_ref(), e.lambda_diag(), mu)
}

/// Localization for an arbitrary `r x r` matrix `K` near `I - Λ/μ`.
pub fn localize_kernel_vector(
    a: ColRef<'_, c64>,
    k: MatRef<'_, c64>,
    lambda_diag: &[c64],
    mu: c64,
) -> Result<KernelDecomposition> {
    let r = lambda_diag.len();
    if k.nrows() != r || k.ncols() != r || a.nrows() != r {
        return Err(Error::Dimension(format!(
            "K is {}x{}, a has {} entries, Λ has {}",
            k.nrows(),
            k.ncols(),
            a.nrows(),
            r
        )));
    }
    let mu_indices: Vec<usize> = (0..r).filter(|&t| same_spike(lambda_diag[t], mu)).collect();
    if mu_indices.is_empty() {
        return Err(Error::UnknownSpike { mu });
    }
    let other_indices: Vec<usize> = (0..r).filter(|&t| !same_spike(lambda_diag[t], mu)).collect();
    let norm = a.norm_l2();
    if !(norm > 0.0) {
        return Err(Error::Dimension("kernel vector is zero".into()));
    }
    let a_full: Vec<c64> = a.iter().map(|z| z / norm).collect();

    let one = c64::new(1.0, 0.0);
    let d = Mat::from_fn(r, r, |i, j| if i == j { one - lambda_diag[i] / mu } else { c64::new(0.0, 0.0) });
    let epsilon = op_norm((k - &d).as_ref());
    let c0 = separation_constant(lambda_diag, mu);

    let (bound, localized, k22_inverse_norm) = if other_indices.is_empty() {
        (0.0, true, None)
    } else {
        let k22 = select(k, &other_indices, &other_indices);
        let smin = smallest_singular_value(k22.as_ref());
        let bound = if epsilon < c0 { epsilon / (c0 - epsilon) } else { f64::INFINITY };
        (bound, epsilon < c0 / 2.0, Some(1.0 / smin))
    };

    Ok(KernelDecomposition {
        a_mu: mu_indices.iter().map(|&t| a_full[t]).collect(),
        a_neq: other_indices.iter().map(|&t| a_full[t]).collect(),
        a_full,
        mu_indices,
        other_indices,
        c0,
        epsilon,
        bound,
        localized,
        k22_inverse_norm,
    })
}
