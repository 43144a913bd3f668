//! Dimensionality reduction from native feature space to the model
//! embedding size: principal components via Jacobi eigendecomposition,
//! or a seeded random projection.

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorMode {
    Pca,
    FixedRandom,
}

impl std::str::FromStr for ProjectorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ProjectorMode::Pca),
            "fixed_random" => Ok(ProjectorMode::FixedRandom),
            other => Err(Error::Config(format!("unknown projector mode {other:?}"))),
        }
    }
}

/// A fitted linear map from native feature space to d dimensions, applied
/// identically at train and inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub mode: ProjectorMode,
    pub native_dim: usize,
    pub d: usize,
    /// Row-major `d x native_dim`; in PCA mode each row is a principal
    /// direction, orthonormal within 1e-8.
    pub matrix: Vec<f64>,
    /// Training mean subtracted before projection (all zero in
    /// fixed_random mode).
    pub mean: Vec<f64>,
    /// Eigenvalues of the top d components, descending (empty in
    /// fixed_random mode).
    pub eigenvalues: Vec<f64>,
}

impl Projector {
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.native_dim {
            return Err(Error::Shape(format!(
                "projector expects native_dim {}, got {}",
                self.native_dim,
                x.len()
            )));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        let mut out = vec![0.0; self.d];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.matrix[k * self.native_dim..(k + 1) * self.native_dim];
            *o = row.iter().zip(&centered).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns (eigenvalues, eigenvectors) sorted by descending eigenvalue;
/// eigenvector k occupies rows `k*n..(k+1)*n` of the second vector.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    // v starts as identity; accumulates the rotations. Row i of v ends up
    // as the eigenvector of eigenvalue m[i][i].
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[i * n + j] * m[i * n + j];
            }
        }
        s
    };
    let scale: f64 = (0..n).map(|i| m[i * n + i].abs()).fold(1e-300, f64::max);
    let tol = (scale * 1e-14).powi(2) * (n * n) as f64;
    for _sweep in 0..64 {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < scale * 1e-18 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rotate rows/cols p and q of m.
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                // Accumulate rotation into the eigenvector rows.
                for k in 0..n {
                    let vpk = v[p * n + k];
                    let vqk = v[q * n + k];
                    v[p * n + k] = c * vpk - s * vqk;
                    v[q * n + k] = s * vpk + c * vqk;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].partial_cmp(&m[i * n + i]).unwrap());
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = vec![0.0; n * n];
    for (rank, &i) in order.iter().enumerate() {
        eigenvalues.push(m[i * n + i]);
        eigenvectors[rank * n..(rank + 1) * n].copy_from_slice(&v[i * n..(i + 1) * n]);
    }
    (eigenvalues, eigenvectors)
}

/// Fit a projector on native feature vectors.
///
/// PCA: mean-center, take the top-d principal directions by descending
/// eigenvalue, and fix each component's sign so its largest-magnitude
/// entry is positive. FixedRandom: a seeded Gaussian matrix scaled by
/// `1/sqrt(native_dim)`, no centering.
pub fn fit_projector(
    vectors: &[Vec<f64>],
    mode: ProjectorMode,
    d: usize,
    seed: u64,
) -> Result<Projector> {
    if vectors.is_empty() {
        return Err(Error::Fit("no feature vectors to fit on".into()));
    }
    let native_dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != native_dim) {
        return Err(Error::Fit("feature vectors have inconsistent lengths".into()));
    }
    if d == 0 || d > native_dim {
        return Err(Error::Fit(format!(
            "cannot project native_dim {native_dim} to d {d}"
        )));
    }
    match mode {
        ProjectorMode::FixedRandom => {
            let mut rng = stream_rng(seed, "projector", &[]);
            let scale = 1.0 / (native_dim as f64).sqrt();
            let matrix: Vec<f64> = (0..d * native_dim)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) * scale)
                .collect();
            Ok(Projector {
                mode,
                native_dim,
                d,
                matrix,
                mean: vec![0.0; native_dim],
                eigenvalues: Vec::new(),
            })
        }
        ProjectorMode::Pca => {
            let n = vectors.len();
            if n < d {
                return Err(Error::Fit(format!(
                    "PCA needs at least d = {d} samples, got {n}"
                )));
            }
            let mut mean = vec![0.0; native_dim];
            for v in vectors {
                for (m, x) in mean.iter_mut().zip(v) {
                    *m += x;
                }
            }
            for m in mean.iter_mut() {
                *m /= n as f64;
            }
            // Sample covariance, denominator n - 1.
            let denom = (n - 1).max(1) as f64;
            let mut cov = vec![0.0; native_dim * native_dim];
            let mut centered = vec![0.0; native_dim];
            for v in vectors {
                for ((c, x), m) in centered.iter_mut().zip(v).zip(&mean) {
                    *c = x - m;
                }
                for i in 0..native_dim {
                    let ci = centered[i];
                    if ci == 0.0 {
                        continue;
                    }
                    let row = &mut cov[i * native_dim..(i + 1) * native_dim];
                    for (r, cj) in row.iter_mut().zip(&centered) {
                        *r += ci * cj;
                    }
                }
            }
            for c in cov.iter_mut() {
                *c /= denom;
            }
            let (eigenvalues, eigenvectors) = symmetric_eigen(&cov, native_dim);
            let mut matrix = vec![0.0; d * native_dim];
            for k in 0..d {
                let row = &eigenvectors[k * native_dim..(k + 1) * native_dim];
                let mut best = 0usize;
                for (i, val) in row.iter().enumerate() {
                    if val.abs() > row[best].abs() {
                        best = i;
                    }
                }
                let sign = if row[best] < 0.0 { -1.0 } else { 1.0 };
                for (o, &val) in matrix[k * native_dim..(k + 1) * native_dim]
                    .iter_mut()
                    .zip(row)
                {
                    *o = sign * val;
                }
            }
            Ok(Projector {
                mode,
                native_dim,
                d,
                matrix,
                mean,
                eigenvalues: eigenvalues[..d].to_vec(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn axis_aligned_data_reconstructs_exactly() {
        // Points living in the span of the first 2 axes of R^4.
        let vectors: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let a = (i as f64) * 0.7 - 4.0;
                let b = (i as f64 % 5.0) - 2.0;
                vec![a, b, 0.0, 0.0]
            })
            .collect();
        let proj = fit_projector(&vectors, ProjectorMode::Pca, 2, 0).unwrap();
        // Projecting and reconstructing through the components is exact.
        for v in &vectors {
            let z = proj.project(v).unwrap();
            let mut recon = proj.mean.clone();
            for k in 0..2 {
                for (r, w) in recon.iter_mut().zip(&proj.matrix[k * 4..(k + 1) * 4]) {
                    *r += z[k] * w;
                }
            }
            for (a, b) in recon.iter().zip(v) {
                assert!((a - b).abs() < 1e-9, "reconstruction error {a} vs {b}");
            }
        }
    }

    #[test]
    fn collinear_points_give_rank_one_spectrum() {
        let vectors: Vec<Vec<f64>> =
            (0..10).map(|i| vec![i as f64 * 3.0, i as f64 * 4.0]).collect();
        let proj = fit_projector(&vectors, ProjectorMode::Pca, 2, 0).unwrap();
        // First component along (3,4)/5, second eigenvalue ~ 0.
        let c0 = &proj.matrix[0..2];
        assert!((c0[0].abs() - 0.6).abs() < 1e-9);
        assert!((c0[1].abs() - 0.8).abs() < 1e-9);
        assert!(proj.eigenvalues[1].abs() < 1e-9);
    }

    #[test]
    fn too_few_samples_is_a_fit_error() {
        let vectors: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64; 8]).collect();
        assert!(fit_projector(&vectors, ProjectorMode::Pca, 5, 0).is_err());
    }

    #[test]
    fn fixed_random_is_seed_deterministic() {
        let vectors: Vec<Vec<f64>> = vec![vec![1.0; 6]];
        let a = fit_projector(&vectors, ProjectorMode::FixedRandom, 3, 5).unwrap();
        let b = fit_projector(&vectors, ProjectorMode::FixedRandom, 3, 5).unwrap();
        let c = fit_projector(&vectors, ProjectorMode::FixedRandom, 3, 6).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_ne!(a.matrix, c.matrix);
    }

    /// Independent oracle: eigenvalues by power iteration with deflation,
    /// never touching the Jacobi path.
    fn power_iteration_eigen(cov: &[f64], n: usize, k: usize) -> Vec<f64> {
        let mut deflated = cov.to_vec();
        let mut eigenvalues = Vec::new();
        let mut rng = crate::rng::stream_rng(77, "power-iter", &[]);
        for _ in 0..k {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for _ in 0..4000 {
                let mut w = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        w[i] += deflated[i * n + j] * v[j];
                    }
                }
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-300 {
                    break;
                }
                for x in w.iter_mut() {
                    *x /= norm;
                }
                v = w;
            }
            // Rayleigh quotient for a signed eigenvalue.
            let mut av = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    av[i] += deflated[i * n + j] * v[j];
                }
            }
            let lambda: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
            eigenvalues.push(lambda);
            for i in 0..n {
                for j in 0..n {
                    deflated[i * n + j] -= lambda * v[i] * v[j];
                }
            }
        }
        eigenvalues
    }

    #[test]
    fn random_data_matches_power_iteration_oracle() {
        let mut rng = crate::rng::stream_rng(13, "pca-oracle", &[]);
        let n_samples = 50;
        let native = 20;
        let d = 5;
        let vectors: Vec<Vec<f64>> = (0..n_samples)
            .map(|_| (0..native).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let proj = fit_projector(&vectors, ProjectorMode::Pca, d, 0).unwrap();

        // Rows orthonormal within 1e-8.
        for i in 0..d {
            for j in 0..d {
                let ri = &proj.matrix[i * native..(i + 1) * native];
                let rj = &proj.matrix[j * native..(j + 1) * native];
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8, "row {i}.{j}: {dot}");
            }
        }

        // Captured variance of the projected data equals the top-d
        // eigenvalue mass of the covariance (oracle: power iteration).
        let projected: Vec<Vec<f64>> =
            vectors.iter().map(|v| proj.project(v).unwrap()).collect();
        let mut captured = 0.0;
        for k in 0..d {
            let mean: f64 = projected.iter().map(|z| z[k]).sum::<f64>() / n_samples as f64;
            let var: f64 = projected.iter().map(|z| (z[k] - mean).powi(2)).sum::<f64>()
                / (n_samples - 1) as f64;
            captured += var;
        }
        // Rebuild the covariance the same way fit does, then run the oracle.
        let mut mean = vec![0.0; native];
        for v in &vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= n_samples as f64;
        }
        let mut cov = vec![0.0; native * native];
        for v in &vectors {
            let c: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..native {
                for j in 0..native {
                    cov[i * native + j] += c[i] * c[j] / (n_samples - 1) as f64;
                }
            }
        }
        let oracle = power_iteration_eigen(&cov, native, d);
        let oracle_mass: f64 = oracle.iter().sum();
        assert!(
            (captured - oracle_mass).abs() < 1e-6,
            "captured {captured} vs oracle {oracle_mass}"
        );
        // Per-component agreement too.
        for (a, b) in proj.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        // Variance ordering is descending.
        for w in proj.eigenvalues.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }
}
