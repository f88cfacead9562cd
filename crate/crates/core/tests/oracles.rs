//! Library results checked against independent reference implementations.

mod common;

use common::{max_axis_error, naive_distances, naive_forward, random_rows, rng, svd_pca};
use corrsense::autoencoder::{AeConfig, AeModel};
use corrsense::distance::{calibrate, distance_matrix, DistanceMatrix};
use corrsense::pca::fit_pca;
use rand::RngExt;
use rand_distr::{Distribution, Normal};

#[test]
fn pca_matches_svd_on_random_matrices() {
    let mut r = rng(2);
    for trial in 0..100 {
        let m = r.random_range(3..=50);
        let n = r.random_range(1..=20);
        let rows = random_rows(&mut r, m, n);
        let k = (m - 1).min(n).min(4);
        let model = fit_pca(&rows, k).unwrap();
        let oracle = svd_pca(&rows);
        let err = max_axis_error(&model, &oracle);
        assert!(err < 1e-8, "trial {trial} ({m}x{n}, k={k}): axis error {err:e}");
        for (c, v) in model.explained_variance().iter().enumerate() {
            let o = oracle.variances[c];
            assert!((v - o).abs() <= 1e-8 * o.max(1.0), "trial {trial}: variance {v} vs {o}");
        }
        assert!(model.orthonormality_error() < 1e-8);
    }
}

#[test]
fn autoencoder_forward_matches_naive_loops() {
    let mut r = rng(8);
    for (hidden, latent, w) in [(1, 1, 3), (4, 2, 10), (8, 4, 12), (32, 4, 100)] {
        let model = AeModel::init(AeConfig {
            input_len: w,
            hidden,
            latent,
            seed: hidden as u64,
            ..AeConfig::default()
        })
        .unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..w).map(|_| r.random_range(-2.0..2.0)).collect();
            let out = model.forward(&x);
            let (z, y, mse) = naive_forward(&model, &x);
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-12);
            assert!(close(&out.latent, &z), "latent differs for H={hidden}");
            assert!(close(&out.recon, &y), "reconstruction differs for H={hidden}");
            assert!((out.loss - mse).abs() < 1e-12);
            assert!(close(&model.encode(&x), &z));
        }
    }
}

#[test]
fn distance_matrix_matches_double_loop() {
    let mut r = rng(4);
    for _ in 0..200 {
        let n = r.random_range(2..8);
        let d = r.random_range(1..6);
        let latents: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-10.0..10.0)).collect())
            .collect();
        let m = distance_matrix(&latents).unwrap();
        let o = naive_distances(&latents);
        for i in 0..n {
            for j in 0..n {
                assert!((m.get(i, j) - o[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn three_sigma_threshold_exceedance_on_gaussian_distances() {
    let mut r = rng(6);
    let g = Normal::new(10.0, 1.0).unwrap();
    let n = 4;
    let matrices: Vec<DistanceMatrix> = (0..5000)
        .map(|_| {
            let mut d = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let v = g.sample(&mut r);
                    d[i * n + j] = v;
                    d[j * n + i] = v;
                }
            }
            DistanceMatrix::from_raw(n, d).unwrap()
        })
        .collect();
    let th = calibrate(&matrices, 3.0, &[], 0.99).unwrap();
    let entries: Vec<f64> = matrices.iter().flat_map(|m| m.upper_triangle().collect::<Vec<_>>()).collect();
    let rate = entries.iter().filter(|&&v| v > th.distance_threshold).count() as f64 / entries.len() as f64;
    // One-sided Gaussian tail beyond 3 sd is 0.135%.
    assert!((0.0005..0.0025).contains(&rate), "exceedance rate {rate}");
}
