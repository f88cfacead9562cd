//! Principal component analysis over sliding windows.
//!
//! A model is fitted once on the training windows and then used as a fixed
//! linear encoder: projecting a window costs one `k × W` matrix–vector
//! product.

use crate::error::{Error, Result};
use crate::linalg::{dot, symmetric_eigen};

/// Relative eigenvalue below which a direction counts as zero-variance.
const ZERO_VARIANCE_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `k × W`, row-major, orthonormal rows.
    components: Vec<f64>,
    explained_variance: Vec<f64>,
    k: usize,
    rank_deficient: bool,
    level_anchored: bool,
}

impl PcaModel {
    /// Assembles a model from stored parts, checking shapes and
    /// orthonormality.
    pub fn from_parts(
        mean: Vec<f64>,
        components: Vec<f64>,
        explained_variance: Vec<f64>,
        rank_deficient: bool,
        level_anchored: bool,
    ) -> Result<Self> {
        let w = mean.len();
        if w == 0 || components.is_empty() || components.len() % w != 0 {
            return Err(Error::ModelFormat(format!(
                "{} component entries do not fit input dimension {w}",
                components.len()
            )));
        }
        let k = components.len() / w;
        if explained_variance.len() != k {
            return Err(Error::ModelFormat("explained variance length".into()));
        }
        let model = Self {
            mean,
            components,
            explained_variance,
            k,
            rank_deficient,
            level_anchored,
        };
        if model.orthonormality_error() > 1e-8 {
            return Err(Error::ModelFormat("components are not orthonormal".into()));
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.k
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let w = self.input_dim();
        &self.components[i * w..(i + 1) * w]
    }

    pub fn components_flat(&self) -> &[f64] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Fewer than `k` non-zero-variance directions were present at fit time;
    /// the surplus components are an arbitrary orthonormal completion.
    pub fn is_rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn is_level_anchored(&self) -> bool {
        self.level_anchored
    }

    /// `components · (x − mean)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.k];
        self.project_into(x, &mut z);
        z
    }

    pub fn project_into(&self, x: &[f64], z: &mut [f64]) {
        let w = self.input_dim();
        assert_eq!(x.len(), w, "window length must match the model");
        assert_eq!(z.len(), self.k, "latent length must match the model");
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &self.components[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for ((&c, &xv), &m) in row.iter().zip(x).zip(&self.mean) {
                acc += c * (xv - m);
            }
            *zi = acc;
        }
    }

    /// `mean + componentsᵀ · z`.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.k, "latent length must match the model");
        let mut x = self.mean.clone();
        for (i, &zi) in z.iter().enumerate() {
            for (xv, &c) in x.iter_mut().zip(self.component(i)) {
                *xv += zi * c;
            }
        }
        x
    }

    /// Largest entry of `|C·Cᵀ − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.k {
            for j in i..self.k {
                let d = dot(self.component(i), self.component(j));
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - want).abs());
            }
        }
        worst
    }
}

fn check_training(x: &[Vec<f64>], k: usize) -> Result<usize> {
    let m = x.len();
    if m < 2 {
        return Err(Error::invalid("training matrix", format!("needs at least 2 rows, got {m}")));
    }
    let w = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != w) {
        return Err(Error::DimMismatch {
            expected: w,
            got: bad.len(),
        });
    }
    if k == 0 || k > m.min(w) {
        return Err(Error::invalid(
            "k",
            format!("must satisfy 1 <= k <= min(rows, cols) = {}", m.min(w)),
        ));
    }
    Ok(w)
}

fn column_mean(x: &[Vec<f64>], w: usize) -> Vec<f64> {
    let mut mean = vec![0.0; w];
    for row in x {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let m = x.len() as f64;
    mean.iter_mut().for_each(|v| *v /= m);
    mean
}

/// Sample covariance (denominator `m − 1`) of rows after subtracting `center`
/// from each row, row-major `w × w`.
fn covariance(rows: impl Iterator<Item = Vec<f64>>, m: usize, w: usize) -> Vec<f64> {
    let mut cov = vec![0.0; w * w];
    for d in rows {
        for i in 0..w {
            let di = d[i];
            if di == 0.0 {
                continue;
            }
            let out = &mut cov[i * w..(i + 1) * w];
            for (o, &dj) in out[i..].iter_mut().zip(&d[i..]) {
                *o += di * dj;
            }
        }
    }
    let denom = (m - 1) as f64;
    for i in 0..w {
        for j in i..w {
            let v = cov[i * w + j] / denom;
            cov[i * w + j] = v;
            cov[j * w + i] = v;
        }
    }
    cov
}

/// Flips `v` so its largest-magnitude entry is positive; ties go to the
/// lowest index.
pub fn apply_sign_convention(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Standard PCA: the top-`k` eigenvectors of the sample covariance of `x`,
/// by descending eigenvalue.
pub fn fit_pca(x: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let w = check_training(x, k)?;
    let mean = column_mean(x, w);
    let centered = x
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(a, b)| a - b).collect());
    let cov = covariance(centered, x.len(), w);
    let eig = symmetric_eigen(&cov, w);

    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let nonzero = eig
        .values
        .iter()
        .filter(|&&v| v > ZERO_VARIANCE_REL * top.max(f64::MIN_POSITIVE))
        .count();

    let mut components = Vec::with_capacity(k * w);
    for v in eig.vectors.iter().take(k) {
        let mut v = v.clone();
        apply_sign_convention(&mut v);
        components.extend_from_slice(&v);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: eig.values.iter().take(k).map(|v| v.max(0.0)).collect(),
        k,
        rank_deficient: nonzero < k,
        level_anchored: false,
    })
}

/// PCA with the window level pinned as the leading component.
///
/// Component 0 is the normalized constant vector `1/√W`, so its coordinate
/// is the (scaled) window mean. The remaining `k − 1` components are the
/// principal components of the windows after removing each window's own
/// mean, which makes them orthogonal to the level direction.
pub fn fit_level_pca(x: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let w = check_training(x, k)?;
    let mean = column_mean(x, w);
    let level = vec![1.0 / (w as f64).sqrt(); w];

    let level_var = {
        let proj: Vec<f64> = x
            .iter()
            .map(|r| r.iter().zip(&mean).map(|(a, b)| a - b).sum::<f64>() / (w as f64).sqrt())
            .collect();
        proj.iter().map(|p| p * p).sum::<f64>() / (x.len() - 1) as f64
    };

    let mut components = level.clone();
    let mut explained = vec![level_var];
    let mut rank_deficient = level_var <= 0.0;

    if k > 1 {
        let shape_mean: Vec<f64> = {
            let mm = mean.iter().sum::<f64>() / w as f64;
            mean.iter().map(|v| v - mm).collect()
        };
        let shapes = x.iter().map(|r| {
            let rm = r.iter().sum::<f64>() / w as f64;
            r.iter()
                .zip(&shape_mean)
                .map(|(v, sm)| v - rm - sm)
                .collect::<Vec<f64>>()
        });
        let cov = covariance(shapes, x.len(), w);
        let eig = symmetric_eigen(&cov, w);
        let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);

        let mut taken = 0;
        for (val, vec) in eig.values.iter().zip(&eig.vectors) {
            if taken == k - 1 {
                break;
            }
            // Remove any level and previously-taken content, renormalize.
            let mut v = vec.clone();
            for c in 0..=taken {
                let basis = &components[c * w..(c + 1) * w];
                let d = dot(&v, basis);
                v.iter_mut().zip(basis).for_each(|(a, b)| *a -= d * b);
            }
            let n = dot(&v, &v).sqrt();
            if n < 0.5 {
                continue;
            }
            v.iter_mut().for_each(|a| *a /= n);
            apply_sign_convention(&mut v);
            if *val <= ZERO_VARIANCE_REL * top.max(f64::MIN_POSITIVE) {
                rank_deficient = true;
            }
            components.extend_from_slice(&v);
            explained.push(val.max(0.0));
            taken += 1;
        }
        if taken < k - 1 {
            return Err(Error::invalid("k", "could not complete an orthonormal basis"));
        }
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
        k,
        rank_deficient,
        level_anchored: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn variance_on_one_axis() {
        let x = rows(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]]);
        let m = fit_pca(&x, 1).unwrap();
        assert_eq!(m.mean(), &[1.0, 0.0]);
        assert!((m.component(0)[0] - 1.0).abs() < 1e-14);
        assert!(m.component(0)[1].abs() < 1e-14);
        assert!(!m.is_rank_deficient());
    }

    #[test]
    fn rank_deficiency_is_flagged_not_fatal() {
        let x = rows(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]]);
        let m = fit_pca(&x, 2).unwrap();
        assert!(m.is_rank_deficient());
        assert!(m.orthonormality_error() < 1e-12);
    }

    #[test]
    fn rejects_bad_k() {
        let x = rows(&[&[0.0, 0.0], &[1.0, 2.0]]);
        assert!(fit_pca(&x, 0).is_err());
        assert!(fit_pca(&x, 3).is_err());
        assert!(fit_pca(&x[..1], 1).is_err());
    }

    #[test]
    fn projecting_the_mean_gives_zero() {
        let x = rows(&[&[1.0, 2.0, 0.5], &[3.0, -1.0, 2.0], &[0.0, 0.0, 1.0], &[2.0, 5.0, -3.0]]);
        let m = fit_pca(&x, 2).unwrap();
        assert!(m.project(m.mean()).iter().all(|v| v.abs() < 1e-14));
        let shifted: Vec<f64> = m.mean().iter().zip(m.component(0)).map(|(a, b)| a + b).collect();
        let z = m.project(&shifted);
        assert!((z[0] - 1.0).abs() < 1e-12 && z[1].abs() < 1e-12);
        assert_eq!(m.reconstruct(&[0.0, 0.0]), m.mean());
    }

    #[test]
    fn full_basis_round_trip() {
        let x = rows(&[&[1.0, 2.0, 0.5], &[3.0, -1.0, 2.0], &[0.0, 0.0, 1.0], &[2.0, 5.0, -3.0]]);
        let m = fit_pca(&x, 3).unwrap();
        for r in &x {
            let back = m.reconstruct(&m.project(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sign_convention_ties_go_to_lowest_index() {
        let mut v = vec![-0.5, 0.5, 0.1];
        apply_sign_convention(&mut v);
        assert_eq!(v, vec![0.5, -0.5, -0.1]);
    }

    #[test]
    fn level_component_leads_and_is_orthogonal() {
        let x = rows(&[
            &[1.0, 2.0, 0.5, 4.0],
            &[3.0, -1.0, 2.0, 0.0],
            &[0.0, 0.0, 1.0, 1.0],
            &[2.0, 5.0, -3.0, 2.0],
            &[1.0, 1.0, 1.0, -2.0],
        ]);
        let m = fit_level_pca(&x, 3).unwrap();
        assert!(m.is_level_anchored());
        assert!(m.component(0).iter().all(|&c| (c - 0.5).abs() < 1e-15));
        assert!(m.orthonormality_error() < 1e-12);
        // level coordinate is the scaled window mean offset
        let probe: Vec<f64> = m.mean().iter().map(|v| v + 2.0).collect();
        let z = m.project(&probe);
        assert!((z[0] - 4.0).abs() < 1e-12);
        assert!(z[1].abs() < 1e-12 && z[2].abs() < 1e-12);
    }
}
