//! Statistical checks of the Langevin sampler against closed forms and a grid oracle.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparse_ids::env::History;
use sparse_ids::posterior::{mcmc_sample, GridPosterior, SamplerConfig};
use sparse_ids::prior::RelaxedPrior;

fn jumping() -> SamplerConfig {
    SamplerConfig { jump_prob: 0.5, jump_scale: 40.0, ..SamplerConfig::default() }
}

#[test]
fn empty_history_matches_prior_second_moment() {
    let prior = RelaxedPrior::default();
    let expected = 0.1 * 10.0 + 0.9 * 2.0 * 0.1 * 0.1;
    assert!((prior.coordinate_variance() - expected).abs() < 1e-15);

    // The slab is thirty times wider than the spike, so plain Langevin steps
    // tuned to the spike mix slowly. Coordinate jumps cross between them.
    let actions = DMatrix::<f64>::identity(10, 10);
    let cfg = SamplerConfig { num_samples: 10_000, burn_in: 2_000, thin: 100, ..jumping() };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (samples, diag) = mcmc_sample(&prior, &History::new(), &actions, 1.0, 0.0, cfg, &mut rng).unwrap();
    assert_eq!(samples.len(), 10_000);
    let n = (samples.len() * 10) as f64;
    let m2: f64 = samples.samples().iter().map(|s| s.norm_squared()).sum::<f64>() / n;
    assert!((m2 / expected - 1.0).abs() < 0.05, "second moment {m2} vs {expected}, {diag:?}");
}

fn cell_mass(points: &[DVector<f64>], weights: &[f64], pred: impl Fn(&DVector<f64>) -> bool) -> f64 {
    points.iter().zip(weights).filter(|(p, _)| pred(p)).map(|(_, w)| w).sum()
}

#[test]
fn two_mode_posterior_matches_grid_oracle() {
    // One diagonal action pins theta1 + theta2 near 2 and the sparse prior
    // splits the mass between (2, 0) and (0, 2). A single pull of e1 tilts it.
    let r = 1.0 / 2f64.sqrt();
    let actions = DMatrix::from_row_slice(2, 2, &[r, r, 1.0, 0.0]);
    let mut pairs: Vec<(usize, f64)> = (0..12).map(|_| (0usize, 2.0 * r)).collect();
    pairs.push((1, 0.6));
    let history = History::from_pairs(&pairs);
    let prior = RelaxedPrior::default();

    let h = 0.02;
    let lo = -2.0;
    let n = 250;
    let mut grid = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            grid.push(DVector::from_vec(vec![lo + h * i as f64, lo + h * j as f64]));
        }
    }
    let masses: Vec<f64> = grid.iter().map(|g| prior.log_density(g.as_slice()).unwrap()).collect();
    let post = GridPosterior::new(grid.clone(), Some(&masses), &history, &actions, 1.0, 0.0).unwrap();
    let w = post.weights();

    // Nearest grid point in each coordinate, then group the cells.
    let snap = |x: f64| (((x - lo) / h).round() as i64).clamp(0, n as i64 - 1) as f64 * h + lo;
    let regions: [(&str, Box<dyn Fn(&DVector<f64>) -> bool>); 3] = [
        ("first dominant", Box::new(|p: &DVector<f64>| p[0] > p[1] + 1.0)),
        ("second dominant", Box::new(|p: &DVector<f64>| p[1] > p[0] + 1.0)),
        ("between", Box::new(|p: &DVector<f64>| (p[0] - p[1]).abs() <= 1.0)),
    ];
    let grid_masses: Vec<f64> = regions.iter().map(|(_, f)| cell_mass(&grid, &w, f)).collect();
    assert!(grid_masses[0] > 0.2 && grid_masses[1] > 0.05, "{grid_masses:?}");

    // Independent short chains started between the modes.
    let chains = 400;
    let cfg = SamplerConfig { num_samples: 2, burn_in: 1_000, thin: 50, ..jumping() };
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    for c in 0..chains {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + c);
        let (s, _) = mcmc_sample(&prior, &history, &actions, 1.0, 0.0, cfg, &mut rng).unwrap();
        let x = s.samples().last().unwrap();
        let p = DVector::from_vec(vec![snap(x[0]), snap(x[1])]);
        for (k, (_, f)) in regions.iter().enumerate() {
            if f(&p) {
                counts[k] += 1;
            }
        }
        total += 1;
    }
    for k in 0..3 {
        let p = grid_masses[k];
        let freq = counts[k] as f64 / total as f64;
        let se = (p * (1.0 - p) / total as f64).sqrt().max(1e-3);
        assert!(
            (freq - p).abs() <= 3.0 * se,
            "{}: sampler {freq:.3} vs grid {p:.3} (se {se:.3})",
            regions[k].0
        );
    }
}
