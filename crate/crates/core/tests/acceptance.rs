//! Acceptance criteria. Each test writes one `[PASS]` or `[FAIL]` line to stderr
//! (uncaptured) and then asserts.

use std::io::Write;
use std::sync::OnceLock;

use faer::{Mat, c64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use spikelab::cli::{CommonArgs, OVERLAP_COLUMNS, cmd_run};
use spikelab::experiments::{
    KSchedule, LemmaReport, LemmaSuiteConfig, StudyConfig, TrialOptions, median, perturbation_seed,
    run_convergence_study, run_lemma_suite, trial_matrix, trial_seed,
};
use spikelab::linalg::{collinearity_defect, op_norm};
use spikelab::matrix_model::{EntryDistribution, SparseModelConfig, default_k_schedule};
use spikelab::outlier::{assemble_y, default_epsilon_band, dense_eigenpairs, spectral_report};
use spikelab::perturbation::{Spike, SpikeSpec, build_perturbation};
use spikelab::resolvent::{
    compressed_resolvent, default_kernel_tolerance, factorize, kernel_basis, localize_kernel_vector,
    reconstruct_eigenvector,
};
use spikelab::rng::{Domain, stream};

fn report(id: u32, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] criterion {id}: {detail}");
}

fn setup() {
    faer::set_global_parallelism(faer::Par::Seq);
}

fn study(n_list: Vec<usize>, spikes: Vec<Spike>, trials: usize, base_seed: u64) -> StudyConfig {
    StudyConfig {
        n_list,
        k_schedule: KSchedule::Exponent(0.7),
        distribution: EntryDistribution::ComplexGaussian,
        spike_spec: SpikeSpec::new(spikes, 0.0).unwrap(),
        trials,
        base_seed,
        options: TrialOptions::default(),
    }
}

#[test]
fn criterion_1_overlap_limit() {
    setup();
    assert_eq!(default_k_schedule(1500, 0.7).unwrap(), 168);
    let mut ok = true;
    let mut parts = Vec::new();
    for (mu, limit) in [(2.0, 0.75), (3.0, 8.0 / 9.0)] {
        let s = run_convergence_study(&study(vec![1500], vec![Spike::real(mu, 1)], 40, 2024)).unwrap();
        let row = &s.table.rows[0];
        assert_eq!(row.limit, limit);
        let pass = (row.mean_overlap - limit).abs() <= 0.05 && row.failure_rate() <= 0.10;
        ok &= pass;
        parts.push(format!(
            "mu={mu} mean={:.4} (limit {:.4}) sd={:.4} failure_rate={:.3}",
            row.mean_overlap,
            limit,
            row.std_overlap,
            row.failure_rate()
        ));
    }
    report(1, ok, parts.join("; "));
    assert!(ok);
}

#[test]
fn criterion_2_cross_spike_decoupling() {
    setup();
    let s = run_convergence_study(&study(vec![1500], vec![Spike::real(2.0, 1), Spike::real(-2.5, 2)], 40, 77)).unwrap();
    let cross: Vec<f64> = s
        .trials
        .iter()
        .flat_map(|t| t.records.iter().filter(|r| r.is_ok()))
        .flat_map(|r| r.cross_overlaps.iter().map(|c| c.measured))
        .collect();
    let mean = cross.iter().sum::<f64>() / cross.len() as f64;
    let worst_row = s
        .table
        .rows
        .iter()
        .flat_map(|r| r.mean_cross_overlaps.iter().map(|c| c.1))
        .fold(0.0, f64::max);
    let pass = !cross.is_empty() && mean <= 0.05 && worst_row <= 0.05;
    report(2, pass, format!("mean cross overlap {mean:.3e} over {} values, worst per-spike mean {worst_row:.3e}", cross.len()));
    assert!(pass);
}

#[test]
fn criterion_3_bijection_exactness() {
    setup();
    let n = 50;
    let spec = SpikeSpec::new(
        vec![Spike::real(2.0, 1), Spike::new(c64::new(0.0, -2.5), 1), Spike::new(c64::new(-2.2, 1.4), 1)],
        0.5,
    )
    .unwrap();
    let eps = default_epsilon_band(&spec.spikes);
    let mut checked = 0;
    let mut failures = Vec::new();
    let (mut worst_res, mut worst_col) = (0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let x = trial_matrix(&SparseModelConfig::new(n, n, EntryDistribution::ComplexGaussian, 0).unwrap(), seed, false)
            .unwrap();
        let e = build_perturbation(&spec, n, seed).unwrap();
        let y = assemble_y(&x, &e).unwrap();
        let pairs = dense_eigenpairs(y.as_ref()).unwrap();
        for (lambda, v) in pairs.iter().filter(|p| p.0.norm() >= 1.0 + eps) {
            checked += 1;
            let multiplicity = pairs.iter().filter(|p| (p.0 - lambda).norm() <= 1e-6).count();
            let h = factorize(&x, *lambda).unwrap();
            let m = compressed_resolvent(&h, &e).unwrap();
            let basis = kernel_basis(&m, default_kernel_tolerance(&m)).unwrap();
            if basis.len() != multiplicity {
                failures.push(format!("seed {seed}: kernel dim {} vs multiplicity {multiplicity}", basis.len()));
                continue;
            }
            let rec = reconstruct_eigenvector(&h, &e, basis[0].as_ref()).unwrap();
            let yr = &y * &rec;
            let res = (0..n).map(|i| (yr[i] - rec[i] * lambda).norm_sqr()).sum::<f64>().sqrt();
            let col = collinearity_defect(v.as_ref(), rec.as_ref());
            worst_res = worst_res.max(res);
            worst_col = worst_col.max(col);
            if res > 1e-8 || col > 1e-8 {
                failures.push(format!("seed {seed} lambda {lambda}: residual {res:e}, collinearity {col:e}"));
            }
        }
    }
    let pass = failures.is_empty() && checked >= 60;
    report(
        3,
        pass,
        format!("{checked} outliers over 20 seeds, worst residual {worst_res:.2e}, worst collinearity defect {worst_col:.2e}, failures {failures:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_kernel_localization() {
    let mut rng = stream(4, Domain::Probe, 0);
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64::new(re, im)
    };
    let mut failures = 0;
    let mut max_ratio = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..=3usize);
        let others = rng.random_range(1..=4usize);
        let r = k + others;
        let mu = c64::from_polar(rng.random_range(1.5..4.0), rng.random_range(0.0..std::f64::consts::TAU));
        let mut lambda = vec![mu; k];
        for _ in 0..others {
            // keep |1 - ν/μ| >= 0.3
            loop {
                let nu = c64::from_polar(rng.random_range(1.1..6.0), rng.random_range(0.0..std::f64::consts::TAU));
                if (1.0 - nu / mu).norm() >= 0.3 {
                    lambda.push(nu);
                    break;
                }
            }
        }
        let c0 = lambda[k..].iter().map(|nu| (1.0 - nu / mu).norm()).fold(f64::INFINITY, f64::min);
        let d = Mat::from_fn(r, r, |i, j| if i == j { 1.0 - lambda[i] / mu } else { c64::new(0.0, 0.0) });
        let mut delta = Mat::from_fn(r, r, |_, _| gauss(&mut rng));
        let target = rng.random_range(0.01..0.2) * c0;
        let s = op_norm(delta.as_ref());
        delta = Mat::from_fn(r, r, |i, j| delta[(i, j)] * (target / s));
        let kp = &d + &delta;
        // project out the smallest singular direction so that K has a kernel
        let svd = kp.svd().unwrap();
        let a = svd.V().col(r - 1).to_owned();
        let ka = &kp * &a;
        let kmat = Mat::from_fn(r, r, |i, j| kp[(i, j)] - ka[i] * a[j].conj());
        let dec = localize_kernel_vector(a.as_ref(), kmat.as_ref(), &lambda, mu).unwrap();
        let ok = dec.localized
            && (dec.c0 - c0).abs() < 1e-12
            && dec.epsilon < c0 / 2.0
            && dec.inequality_holds() == Some(true)
            && dec.k22_bound_holds() == Some(true);
        if !ok {
            failures += 1;
        }
        max_ratio = max_ratio.max(dec.a_neq_norm() / (dec.bound * dec.a_mu_norm()));
    }
    let pass = failures == 0;
    report(4, pass, format!("100 constructions, {failures} failures, max ‖a_neq‖/(bound ‖a_mu‖) = {max_ratio:.3}"));
    assert!(pass);
}

fn lemma_report() -> &'static LemmaReport {
    static REPORT: OnceLock<LemmaReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        setup();
        run_lemma_suite(&LemmaSuiteConfig {
            n: 2000,
            sparsity_k: default_k_schedule(2000, 0.7).unwrap(),
            distribution: EntryDistribution::ComplexGaussian,
            z: c64::new(2.0, 0.0),
            dz: c64::new(0.01, 0.0),
            rows: 2,
            seeds: 20,
            base_seed: 555,
            zero_matrix: false,
        })
        .unwrap()
    })
}

#[test]
fn criterion_5_bilinear_form() {
    let rep = lemma_report();
    let within = rep.records.iter().filter(|r| r.bilinear.abs_error <= 0.05).count();
    let worst = rep.records.iter().map(|r| r.bilinear.abs_error).fold(0.0, f64::max);
    let pass = rep.records.len() == 20 && within as f64 >= 0.9 * 20.0 && rep.deterministic_pass;
    report(5, pass, format!("{within}/20 seeds within 0.05 of -1/2, worst error {worst:.4}"));
    assert!(pass);
}

#[test]
fn criterion_6_resolvent_norm_discriminator() {
    let rep = lemma_report();
    let pass = (rep.norm_mean_sq - 1.0 / 3.0).abs() <= 0.05
        && rep.sqrt_candidate_rejected
        && rep.norm_winner == spikelab::experiments::NormCandidate::Inverse;
    report(
        6,
        pass,
        format!(
            "mean ‖R(2)w‖² = {:.4}; 1/(|z|²-1) = {:.4}, 1/sqrt(|z|²-1) = {:.4}; sqrt variant rejected: {}",
            rep.norm_mean_sq, rep.candidate_a, rep.candidate_b, rep.sqrt_candidate_rejected
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_outlier_count_and_location() {
    setup();
    let spec = SpikeSpec::new(vec![Spike::real(2.0, 1)], 0.0).unwrap();
    let eps = default_epsilon_band(&spec.spikes);
    let base = 31;
    let mut medians = Vec::new();
    let mut rates = Vec::new();
    for n in [400usize, 800, 1600] {
        let model = SparseModelConfig::new(n, default_k_schedule(n, 0.7).unwrap(), EntryDistribution::ComplexGaussian, base)
            .unwrap();
        let e = build_perturbation(&spec, n, perturbation_seed(base, n)).unwrap();
        let mut h = Vec::new();
        let mut matches = 0;
        for t in 0..40 {
            let x = trial_matrix(&model, trial_seed(base, n, t), false).unwrap();
            let rep = spectral_report(&x, &e, eps).unwrap();
            h.push(rep.hausdorff);
            matches += rep.count_match as usize;
        }
        medians.push(median(&h));
        rates.push(matches as f64 / 40.0);
    }
    let inversions = medians.windows(2).filter(|w| w[1] > w[0]).count();
    let pass = rates[2] >= 0.9 && inversions <= 1;
    report(
        7,
        pass,
        format!("count success rates {rates:?}, median Hausdorff {medians:?} (n = 400, 800, 1600), inversions {inversions}"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_determinism_and_schema() {
    setup();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(
        &cfg,
        "n_list = [100, 200]\nk_exponent = 0.7\ntrials = 4\nbase_seed = 8\nnon_normality_tau = 0.5\n\
         [[spikes]]\nre = 2.0\n[[spikes]]\nre = 0.0\nim = -2.5\nmultiplicity = 2\n",
    )
    .unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        cmd_run(&CommonArgs { config: cfg.clone(), out: Some(out.clone()), threads: 0 }).unwrap();
        std::fs::read(out.join("overlaps.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    let text = String::from_utf8(a.clone()).unwrap();
    let header = text.lines().next().unwrap_or_default();
    let rows = text.lines().count() - 1;
    let pass = a == b && header == OVERLAP_COLUMNS.join(",") && rows == 4;
    report(8, pass, format!("byte-identical: {}, header: {header}, rows: {rows}", a == b));
    assert!(pass);
}
