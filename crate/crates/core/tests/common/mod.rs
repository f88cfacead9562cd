//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use corrsense::autoencoder::AeModel;
use corrsense::pca::PcaModel;
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut Pcg64, m: usize, n: usize) -> Vec<Vec<f64>> {
    // Column scales spread the spectrum so eigenvalues stay well separated.
    let scale: Vec<f64> = (0..n).map(|j| 1.0 + 0.7 * j as f64 + rng.random_range(0.0..0.3)).collect();
    (0..m)
        .map(|_| (0..n).map(|j| scale[j] * rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Principal axes and variances from the SVD of the centered data matrix.
pub struct SvdPca {
    pub axes: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

pub fn svd_pca(rows: &[Vec<f64>]) -> SvdPca {
    let (m, n) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..n).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
    let x = DMatrix::from_fn(m, n, |i, j| rows[i][j] - mean[j]);
    let svd = x.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    SvdPca {
        axes: order.iter().map(|&i| vt.row(i).iter().copied().collect()).collect(),
        variances: order
            .iter()
            .map(|&i| svd.singular_values[i].powi(2) / (m - 1) as f64)
            .collect(),
    }
}

/// Largest deviation between `model`'s components and the oracle axes,
/// allowing a sign flip per component.
pub fn max_axis_error(model: &PcaModel, oracle: &SvdPca) -> f64 {
    (0..model.latent_dim())
        .map(|c| {
            let a = model.component(c);
            let b = &oracle.axes[c];
            let plus = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let minus = a.iter().zip(b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
            plus.min(minus)
        })
        .fold(0.0, f64::max)
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Plain LSTM step with gate order i, f, g, o. `pre` holds the input part.
fn lstm(wh: &[f64], h_dim: usize, h: &[f64], c: &[f64], pre: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut a = pre.to_vec();
    for (r, ar) in a.iter_mut().enumerate() {
        for k in 0..h_dim {
            *ar += wh[r * h_dim + k] * h[k];
        }
    }
    let mut h2 = vec![0.0; h_dim];
    let mut c2 = vec![0.0; h_dim];
    for j in 0..h_dim {
        let (i, f, g, o) = (sig(a[j]), sig(a[h_dim + j]), a[2 * h_dim + j].tanh(), sig(a[3 * h_dim + j]));
        c2[j] = f * c[j] + i * g;
        h2[j] = o * c2[j].tanh();
    }
    (h2, c2)
}

/// Straight-line forward pass of the autoencoder, read off the flat
/// parameter vector: (latent, reconstruction, mean squared error).
pub fn naive_forward(model: &AeModel, x: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let p = model.params();
    let l = model.layout();
    let (hd, ld) = (l.hidden, l.latent);
    let h4 = 4 * hd;
    let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
    for &xt in x {
        let pre: Vec<f64> = (0..h4).map(|r| p[l.enc_b + r] + p[l.enc_wx + r] * xt).collect();
        (h, c) = lstm(&p[l.enc_wh..l.enc_wh + h4 * hd], hd, &h, &c, &pre);
    }
    let z: Vec<f64> = (0..ld)
        .map(|k| p[l.lat_b + k] + (0..hd).map(|j| p[l.lat_w + k * hd + j] * h[j]).sum::<f64>())
        .collect();
    let mut h: Vec<f64> = (0..hd)
        .map(|j| (p[l.sh_b + j] + (0..ld).map(|k| p[l.sh_w + j * ld + k] * z[k]).sum::<f64>()).tanh())
        .collect();
    let mut c: Vec<f64> = (0..hd)
        .map(|j| p[l.sc_b + j] + (0..ld).map(|k| p[l.sc_w + j * ld + k] * z[k]).sum::<f64>())
        .collect();
    let mut y = Vec::with_capacity(x.len());
    for _ in x {
        let pre = p[l.dec_b..l.dec_b + h4].to_vec();
        (h, c) = lstm(&p[l.dec_wh..l.dec_wh + h4 * hd], hd, &h, &c, &pre);
        y.push(p[l.out_b] + (0..hd).map(|j| p[l.out_w + j] * h[j]).sum::<f64>());
    }
    let mse = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    (z, y, mse)
}

/// Pairwise Euclidean distances by a plain double loop.
pub fn naive_distances(latents: &[Vec<f64>]) -> Vec<Vec<f64>> {
    latents
        .iter()
        .map(|a| {
            latents
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}
