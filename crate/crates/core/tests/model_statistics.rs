//! Moment and sparsity checks for the sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spikelab::matrix_model::{EntryDistribution, SparseModelConfig, sample_sparse_matrix};

const KINDS: [EntryDistribution; 3] =
    [EntryDistribution::ComplexGaussian, EntryDistribution::RealGaussian, EntryDistribution::Rademacher];

#[test]
fn entry_laws_are_centred_with_unit_second_moment() {
    let draws = 200_000;
    let tol = 5.0 / (draws as f64).sqrt();
    for (i, kind) in KINDS.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let samples: Vec<_> = (0..draws).map(|_| kind.sample(&mut rng)).collect();
        let mean = samples.iter().sum::<faer::c64>() / draws as f64;
        let second = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / draws as f64;
        assert!(mean.norm() <= tol, "{kind:?}: mean {mean}");
        assert!((second - 1.0).abs() <= tol, "{kind:?}: second moment {second}");
    }
}

#[test]
fn row_energy_and_mean_at_n_2000() {
    let (n, k) = (2000, 140);
    for kind in KINDS {
        for seed in 0..20 {
            let x = sample_sparse_matrix(&SparseModelConfig::new(n, k, kind, seed).unwrap()).unwrap();
            let total: faer::c64 = x.iter().map(|(_, _, v)| v).sum();
            let mean = total / (n * n) as f64;
            let energy = x.iter().map(|(_, _, v)| v.norm_sqr()).sum::<f64>() / n as f64;
            assert!(mean.norm() <= 0.01, "{kind:?} seed {seed}: mean {mean}");
            assert!((energy - 1.0).abs() <= 0.1, "{kind:?} seed {seed}: energy {energy}");
        }
    }
}

#[test]
fn fixed_entry_variance_is_one_over_n() {
    let (n, k, samples) = (500usize, 50usize, 200usize);
    let p = k as f64 / n as f64;
    let sq: Vec<f64> = (0..samples as u64)
        .map(|seed| {
            let cfg = SparseModelConfig::new(n, k, EntryDistribution::ComplexGaussian, 7_000 + seed).unwrap();
            sample_sparse_matrix(&cfg).unwrap().get(3, 11).norm_sqr()
        })
        .collect();
    let var = sq.iter().sum::<f64>() / samples as f64;
    // E|X|^4 = p E|A|^4 / K^2 with E|A|^4 = 2 for the complex Gaussian
    let fourth = p * 2.0 / (k * k) as f64;
    let se = ((fourth - 1.0 / (n * n) as f64) / samples as f64).sqrt();
    assert!((var - 1.0 / n as f64).abs() <= 3.0 * se, "variance {var}, se {se}");
}

#[test]
fn density_matches_edge_probability() {
    let (n, k) = (500usize, 50usize);
    let p = k as f64 / n as f64;
    let cells = (n * n) as f64;
    let se = (p * (1.0 - p) / cells).sqrt();
    for seed in 0..10 {
        let x = sample_sparse_matrix(&SparseModelConfig::new(n, k, EntryDistribution::Rademacher, seed).unwrap()).unwrap();
        let density = x.nnz() as f64 / cells;
        assert!((density - p).abs() <= 3.0 * se, "seed {seed}: density {density}");
    }
}
