//! Outlier eigenvalues of `Y = X + E`: Newton iteration on `det(I + M(λ))`,
//! a dense eigensolver oracle, and the outlier-set statistics.

use faer::{Col, Mat, MatRef, c64};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{check_dense_guard, normalized};
use crate::matrix_model::SparseMatrix;
use crate::perturbation::{Perturbation, Spike, assemble_dense};
use crate::resolvent::{
    CompressedResolvent, FactorOptions, ResolventHandle, compressed_resolvent, factorize_with,
};

/// `max(sup_a d(z, b), sup_b d(z, a))`; infinite if exactly one set is empty.
pub fn hausdorff_distance(a: &[c64], b: &[c64]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |from: &[c64], to: &[c64]| {
        from.iter()
            .map(|z| to.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// All eigenvalues of a dense matrix.
pub fn dense_spectrum_oracle(y: MatRef<'_, c64>) -> Result<Vec<c64>> {
    check_dense_guard(y.nrows())?;
    if y.nrows() != y.ncols() {
        return Err(Error::Dimension(format!("matrix is {}x{}", y.nrows(), y.ncols())));
    }
    y.eigenvalues().map_err(|e| Error::Oracle(format!("{e:?}")))
}

/// Eigenvalues with unit-norm right eigenvectors.
pub fn dense_eigenpairs(y: MatRef<'_, c64>) -> Result<Vec<(c64, Col<c64>)>> {
    check_dense_guard(y.nrows())?;
    let eig = y.eigen().map_err(|e| Error::Oracle(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    Ok((0..y.nrows()).map(|j| (s[j], normalized(u.col(j)))).collect())
}

/// Dense `X + E`.
pub fn assemble_y(x: &SparseMatrix, e: &Perturbation) -> Result<Mat<c64>> {
    if x.dim() != e.dim() {
        return Err(Error::Dimension(format!("X is {}-dimensional, E is {}", x.dim(), e.dim())));
    }
    Ok(x.to_dense()? + assemble_dense(e)?)
}

/// How `f'(λ)` is obtained in the Newton step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivative {
    /// `f'/f = tr((I + M)^{-1} V* R² U)`, using `dR/dλ = R²`.
    #[default]
    Analytic,
    /// `(f(λ + h) - f(λ - h)) / 2h` with `h = 1e-6 (1 + |λ|)`.
    CentralDifference,
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Required `|det(I + M(λ))|` at the root.
    pub tol: f64,
    /// Iterates must stay in `|λ| > 1 + epsilon_band / 2`.
    pub epsilon_band: f64,
    /// Required smallest singular value of `I + M(λ)` at the root.
    pub kernel_sv_tol: f64,
    pub derivative: Derivative,
    /// Largest step, relative to `max(1, |λ|)`.
    pub max_step: f64,
    pub factor: FactorOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-10,
            epsilon_band: 0.1,
            kernel_sv_tol: 1e-6,
            derivative: Derivative::Analytic,
            max_step: 0.25,
            factor: FactorOptions::default(),
        }
    }
}

/// `0.1 (min |μ| - 1)` over the spikes outside the unit disk.
pub fn default_epsilon_band(spikes: &[Spike]) -> f64 {
    let min = spikes
        .iter()
        .map(|s| s.mu.norm())
        .filter(|&m| m > 1.0)
        .fold(f64::INFINITY, f64::min);
    if min.is_finite() { 0.1 * (min - 1.0) } else { 0.1 }
}

/// A root of `det(I + M(λ))` with the factorization at that root.
#[derive(Debug)]
pub struct LocatedOutlier {
    pub lambda: c64,
    pub iterations: usize,
    pub det_abs: f64,
    pub min_singular: f64,
    pub handle: ResolventHandle,
    pub compressed: CompressedResolvent,
}

struct Evaluation {
    handle: ResolventHandle,
    compressed: CompressedResolvent,
    det: c64,
    min_singular: f64,
}

fn evaluate(x: &SparseMatrix, e: &Perturbation, lambda: c64, opts: &NewtonOptions) -> Result<Evaluation> {
    let handle = factorize_with(x, lambda, &opts.factor)?;
    let compressed = compressed_resolvent(&handle, e)?;
    let det = compressed.determinant();
    let min_singular = compressed.smallest_singular_value();
    Ok(Evaluation { handle, compressed, det, min_singular })
}

/// `f'(λ)/f(λ)` for `f = det(I + M)`.
fn log_derivative(x: &SparseMatrix, e: &Perturbation, ev: &Evaluation, opts: &NewtonOptions) -> Result<c64> {
    let lambda = ev.handle.lambda();
    match opts.derivative {
        Derivative::Analytic => {
            let r2u = ev.handle.solve(ev.compressed.resolvent_u());
            let dm = ev.compressed.v_factor().adjoint() * &r2u;
            let k = ev.compressed.i_plus_m();
            let sol = k.partial_piv_lu();
            use faer::linalg::solvers::Solve;
            let t = sol.solve(&dm);
            Ok((0..t.nrows()).map(|i| t[(i, i)]).sum())
        }
        Derivative::CentralDifference => {
            let h = 1e-6 * (1.0 + lambda.norm());
            let fp = evaluate(x, e, lambda + h, opts)?.det;
            let fm = evaluate(x, e, lambda - h, opts)?.det;
            Ok((fp - fm) / (2.0 * h) / ev.det)
        }
    }
}

/// Complex Newton iteration on `det(I + M(λ))` from `mu_init`.
pub fn locate_outlier_newton(
    x: &SparseMatrix,
    e: &Perturbation,
    mu_init: c64,
    opts: &NewtonOptions,
) -> Result<LocatedOutlier> {
    locate_deflated(x, e, mu_init, &[], opts)
}

/// Newton on `det(I + M(λ)) / Π (λ - λ_i)` so that the known roots `deflate`
/// are not found again.
pub fn locate_deflated(
    x: &SparseMatrix,
    e: &Perturbation,
    mu_init: c64,
    deflate: &[c64],
    opts: &NewtonOptions,
) -> Result<LocatedOutlier> {
    let radius = 1.0 + opts.epsilon_band / 2.0;
    let mut lambda = mu_init;
    for iteration in 0..=opts.max_iter {
        if lambda.norm() <= radius {
            return Err(Error::LeftOutlierRegion { lambda, radius });
        }
        let ev = evaluate(x, e, lambda, opts)?;
        let det_abs = ev.det.norm();
        let root = |ev: Evaluation| LocatedOutlier {
            lambda,
            iterations: iteration,
            det_abs,
            min_singular: ev.min_singular,
            handle: ev.handle,
            compressed: ev.compressed,
        };
        if ev.min_singular <= opts.kernel_sv_tol && det_abs <= opts.tol {
            return Ok(root(ev));
        }
        if iteration == opts.max_iter {
            break;
        }
        let mut g = log_derivative(x, e, &ev, opts)?;
        for &d in deflate {
            g -= 1.0 / (lambda - d);
        }
        let mut step = 1.0 / g;
        if !(step.re.is_finite() && step.im.is_finite()) {
            // f'/f blew up: λ sits on a root to working precision.
            if ev.min_singular <= opts.kernel_sv_tol {
                return Ok(root(ev));
            }
            break;
        }
        let cap = opts.max_step * lambda.norm().max(1.0);
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        if step.norm() <= 4.0 * f64::EPSILON * (1.0 + lambda.norm()) {
            if ev.min_singular <= opts.kernel_sv_tol {
                return Ok(root(ev));
            }
            break;
        }
        lambda -= step;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, last: lambda })
}

/// Starting points for a spike of multiplicity `k`: `μ` itself when `k = 1`,
/// otherwise `μ (1 + 0.01 e^{2πij/k})`.
pub fn newton_starts(spike: &Spike) -> Vec<c64> {
    let k = spike.multiplicity;
    if k == 1 {
        return vec![spike.mu];
    }
    (0..k)
        .map(|j| {
            let phase = c64::from_polar(0.01, 2.0 * std::f64::consts::PI * j as f64 / k as f64);
            spike.mu * (1.0 + phase)
        })
        .collect()
}

/// Runs Newton from every start of `spike`, deflating roots already found and
/// rejecting roots within `1e-4` of one another or nearer to another spike.
/// Returns one entry per start.
pub fn locate_spike_outliers(
    x: &SparseMatrix,
    e: &Perturbation,
    spike: &Spike,
    opts: &NewtonOptions,
) -> Vec<Result<LocatedOutlier>> {
    let mut found: Vec<c64> = Vec::new();
    let mut out = Vec::new();
    for start in newton_starts(spike) {
        let res = locate_deflated(x, e, start, &found, opts).and_then(|root| {
            let nearest = e
                .spikes()
                .iter()
                .min_by(|a, b| (a.mu - root.lambda).norm().total_cmp(&(b.mu - root.lambda).norm()))
                .map(|s| s.mu);
            if nearest.is_some_and(|m| !spike.matches(m)) {
                return Err(Error::NoConvergence { iterations: root.iterations, last: root.lambda });
            }
            Ok(root)
        });
        match res {
            Ok(root) if found.iter().any(|f| (f - root.lambda).norm() < 1e-4) => {
                out.push(Err(Error::DuplicateRoot { lambda: root.lambda }));
            }
            Ok(root) => {
                found.push(root.lambda);
                out.push(Ok(root));
            }
            Err(err) => out.push(Err(err)),
        }
    }
    out
}

/// Outliers of `Y` beyond `1 + ε` compared with the spikes of `E` outside the disk.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub epsilon_band: f64,
    pub outliers: Vec<c64>,
    pub spike_targets: Vec<c64>,
    pub m_n: usize,
    pub count_match: bool,
    pub hausdorff: f64,
}

pub fn spectral_report(x: &SparseMatrix, e: &Perturbation, epsilon_band: f64) -> Result<SpectralReport> {
    let y = assemble_y(x, e)?;
    let spectrum = dense_spectrum_oracle(y.as_ref())?;
    Ok(report_from_spectrum(&spectrum, e.spikes(), epsilon_band))
}

pub fn report_from_spectrum(spectrum: &[c64], spikes: &[Spike], epsilon_band: f64) -> SpectralReport {
    let outliers: Vec<c64> = spectrum.iter().copied().filter(|z| z.norm() >= 1.0 + epsilon_band).collect();
    let outside: Vec<&Spike> = spikes.iter().filter(|s| s.mu.norm() > 1.0).collect();
    let spike_targets: Vec<c64> = outside.iter().map(|s| s.mu).collect();
    let m_n = outside.iter().map(|s| s.multiplicity).sum();
    SpectralReport {
        epsilon_band,
        count_match: outliers.len() == m_n,
        hausdorff: hausdorff_distance(&outliers, &spike_targets),
        outliers,
        spike_targets,
        m_n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::collinearity_defect;
    use crate::matrix_model::{EntryDistribution, SparseModelConfig, sample_sparse_matrix};
    use crate::perturbation::{SpikeSpec, build_perturbation};
    use crate::resolvent::{default_kernel_tolerance, kernel_basis, reconstruct_eigenvector};
    use proptest::prelude::*;

    fn cplx(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn random_x(n: usize, k: usize, seed: u64) -> SparseMatrix {
        sample_sparse_matrix(&SparseModelConfig::new(n, k, EntryDistribution::ComplexGaussian, seed).unwrap()).unwrap()
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff_distance(&[cplx(1.0)], &[cplx(1.0)]), 0.0);
        assert_eq!(hausdorff_distance(&[cplx(0.0), cplx(3.0)], &[cplx(1.0)]), 2.0);
        assert_eq!(hausdorff_distance(&[], &[cplx(2.0)]), f64::INFINITY);
        assert_eq!(hausdorff_distance(&[cplx(2.0)], &[]), f64::INFINITY);
        assert_eq!(hausdorff_distance(&[], &[]), 0.0);
    }

    fn point_set() -> impl Strategy<Value = Vec<c64>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b)| c64::new(a, b)), 1..8)
    }

    proptest! {
        #[test]
        fn hausdorff_symmetric(a in point_set(), b in point_set()) {
            prop_assert_eq!(hausdorff_distance(&a, &b), hausdorff_distance(&b, &a));
        }

        #[test]
        fn hausdorff_triangle(a in point_set(), b in point_set(), c in point_set()) {
            let lhs = hausdorff_distance(&a, &c);
            let rhs = hausdorff_distance(&a, &b) + hausdorff_distance(&b, &c);
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn oracle_on_diagonal() {
        let y = Mat::from_fn(3, 3, |i, j| if i == j { cplx([2.0, 0.1, -0.3][i]) } else { cplx(0.0) });
        let mut s: Vec<f64> = dense_spectrum_oracle(y.as_ref()).unwrap().iter().map(|z| z.re).collect();
        s.sort_by(f64::total_cmp);
        for (got, want) in s.iter().zip([-0.3, 0.1, 2.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_matrix_spectrum_is_spikes_and_zero() {
        let spec = SpikeSpec::new(vec![Spike::real(2.0, 1), Spike::new(c64::new(0.0, -1.5), 1)], 1.0).unwrap();
        let e = build_perturbation(&spec, 20, 2).unwrap();
        let x = SparseMatrix::zeros(20);
        let spectrum = dense_spectrum_oracle(assemble_y(&x, &e).unwrap().as_ref()).unwrap();
        let big: Vec<c64> = spectrum.iter().copied().filter(|z| z.norm() > 0.5).collect();
        assert_eq!(big.len(), 2);
        assert!(spectrum.iter().filter(|z| z.norm() < 1e-8).count() == 18);
        let rep = spectral_report(&x, &e, default_epsilon_band(e.spikes())).unwrap();
        assert!(rep.count_match);
        assert!(rep.hausdorff < 1e-8);
        assert_eq!(rep.m_n, 2);
    }

    #[test]
    fn report_with_no_spikes_outside() {
        let rep = report_from_spectrum(&[cplx(0.3), c64::new(0.1, 0.5)], &[Spike::real(0.5, 1)], 0.1);
        assert_eq!(rep.m_n, 0);
        assert!(rep.count_match);
        assert_eq!(rep.hausdorff, 0.0);
    }

    #[test]
    fn newton_on_zero_matrix() {
        let spec = SpikeSpec::new(vec![Spike::real(2.0, 1)], 0.0).unwrap();
        let e = build_perturbation(&spec, 8, 0).unwrap();
        let x = SparseMatrix::zeros(8);
        for derivative in [Derivative::Analytic, Derivative::CentralDifference] {
            let opts = NewtonOptions { derivative, ..Default::default() };
            let root = locate_outlier_newton(&x, &e, cplx(2.3), &opts).unwrap();
            assert!((root.lambda - 2.0).norm() < 1e-10);
            assert!(root.min_singular <= 1e-6);
        }
    }

    #[test]
    fn far_start_never_returns_a_non_root() {
        let spec = SpikeSpec::new(vec![Spike::real(2.0, 1)], 0.0).unwrap();
        let e = build_perturbation(&spec, 60, 1).unwrap();
        for x in [SparseMatrix::zeros(60), random_x(60, 60, 1)] {
            match locate_outlier_newton(&x, &e, cplx(5.0), &NewtonOptions::default()) {
                Ok(root) => assert!(root.min_singular <= 1e-6),
                Err(err) => assert!(matches!(err, Error::NoConvergence { .. } | Error::LeftOutlierRegion { .. })),
            }
        }
    }

    #[test]
    fn start_inside_band_is_rejected() {
        let spec = SpikeSpec::new(vec![Spike::real(2.0, 1)], 0.0).unwrap();
        let e = build_perturbation(&spec, 8, 0).unwrap();
        let opts = NewtonOptions { epsilon_band: 0.2, ..Default::default() };
        let err = locate_outlier_newton(&SparseMatrix::zeros(8), &e, cplx(1.05), &opts).unwrap_err();
        assert!(matches!(err, Error::LeftOutlierRegion { .. }));
    }

    #[test]
    fn multiplicity_on_zero_matrix_collapses_to_one_root() {
        let spec = SpikeSpec::new(vec![Spike::real(-3.0, 2)], 0.0).unwrap();
        let e = build_perturbation(&spec, 10, 3).unwrap();
        let roots = locate_spike_outliers(&SparseMatrix::zeros(10), &e, &e.spikes()[0], &NewtonOptions::default());
        let ok: Vec<c64> = roots.iter().filter_map(|r| r.as_ref().ok()).map(|r| r.lambda).collect();
        assert!(!ok.is_empty());
        for l in ok {
            assert!((l + 3.0).norm() < 1e-5);
        }
    }

    #[test]
    fn derivative_modes_agree_on_random_instance() {
        let n = 120;
        let x = random_x(n, 25, 11);
        let spec = SpikeSpec::new(vec![Spike::real(2.0, 1)], 0.5).unwrap();
        let e = build_perturbation(&spec, n, 11).unwrap();
        let opts = NewtonOptions::default();
        let a = locate_outlier_newton(&x, &e, cplx(2.0), &opts).unwrap();
        let b = locate_outlier_newton(&x, &e, cplx(2.0), &NewtonOptions { derivative: Derivative::CentralDifference, ..opts })
            .unwrap();
        assert!((a.lambda - b.lambda).norm() < 1e-8);
    }

    #[test]
    fn newton_roots_match_oracle_and_give_eigenvectors() {
        let n = 150;
        let x = random_x(n, 40, 21);
        let spec = SpikeSpec::new(vec![Spike::real(2.0, 1), Spike::new(c64::new(0.0, 2.5), 2)], 0.3).unwrap();
        let e = build_perturbation(&spec, n, 21).unwrap();
        let y = assemble_y(&x, &e).unwrap();
        let oracle: Vec<c64> = dense_spectrum_oracle(y.as_ref())
            .unwrap()
            .into_iter()
            .filter(|z| z.norm() > 1.0 + default_epsilon_band(e.spikes()))
            .collect();
        let opts = NewtonOptions { epsilon_band: default_epsilon_band(e.spikes()), ..Default::default() };
        let mut newton = Vec::new();
        for spike in e.spikes() {
            for root in locate_spike_outliers(&x, &e, spike, &opts).into_iter().flatten() {
                let m = &root.compressed;
                let basis = kernel_basis(m, default_kernel_tolerance(m)).unwrap();
                assert!(!basis.is_empty());
                let v = reconstruct_eigenvector(&root.handle, &e, basis[0].as_ref()).unwrap();
                let yv = &y * &v;
                let res = (&yv - Col::from_fn(n, |i| v[i] * root.lambda)).norm_l2();
                assert!(res <= 1e-6, "residual {res}");
                let nearest = dense_eigenpairs(y.as_ref())
                    .unwrap()
                    .into_iter()
                    .min_by(|a, b| (a.0 - root.lambda).norm().total_cmp(&(b.0 - root.lambda).norm()))
                    .unwrap();
                assert!((nearest.0 - root.lambda).norm() <= 1e-6);
                assert!(collinearity_defect(nearest.1.as_ref(), v.as_ref()) <= 1e-6);
                newton.push(root.lambda);
            }
        }
        if newton.len() == oracle.len() {
            assert!(hausdorff_distance(&newton, &oracle) <= 1e-6);
        }
        assert!(!newton.is_empty());
    }

    #[test]
    fn epsilon_band_default() {
        let spikes = [Spike::real(2.0, 1), Spike::real(-3.0, 1)];
        assert!((default_epsilon_band(&spikes) - 0.1).abs() < 1e-15);
        assert_eq!(newton_starts(&Spike::real(2.0, 1)), vec![cplx(2.0)]);
        assert_eq!(newton_starts(&Spike::real(2.0, 3)).len(), 3);
    }
}
