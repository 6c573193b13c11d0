//! Shared oracle machinery for the acceptance suite. Everything here is an
//! independent implementation path: dense eigendecompositions, closed-form
//! Gaussian denoisers, and Gaussian Wasserstein-2 distances, none of which
//! reuse the crate's solver code.

use chanforge_core::channel::ScenarioLabel;
use chanforge_core::diffusion::predictor::Denoiser;
use chanforge_core::error::Result;
use chanforge_core::Tensor;
use rand::Rng;

/// Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
/// Returns eigenvalues and column eigenvectors.
pub fn jacobi_eigh(a: &[f64], n: usize, sweeps: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
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
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    (vals, v)
}

pub fn matmul_dense(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let av = a[i * n + k];
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += av * b[k * n + j];
            }
        }
    }
    out
}

/// Symmetric PSD square root through the eigendecomposition.
pub fn spd_sqrt(a: &[f64], n: usize) -> Vec<f64> {
    let (vals, vecs) = jacobi_eigh(a, n, 50);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += vecs[i * n + k] * vals[k].max(0.0).sqrt() * vecs[j * n + k];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Random symmetric positive-definite matrix with spectrum bounded away
/// from zero.
pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let m = Tensor::randn(&[n, n], rng);
    let md = m.data();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = if i == j { 0.3 } else { 0.0 };
            for k in 0..n {
                acc += md[i * n + k] * md[j * n + k] / n as f64;
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// Mean and covariance of row-major samples (rows x dim).
pub fn sample_mean_cov(rows: &[f64], n_rows: usize, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    for r in 0..n_rows {
        for d in 0..dim {
            mean[d] += rows[r * dim + d];
        }
    }
    for m in mean.iter_mut() {
        *m /= n_rows as f64;
    }
    let mut cov = vec![0.0; dim * dim];
    for r in 0..n_rows {
        for i in 0..dim {
            let xi = rows[r * dim + i] - mean[i];
            for j in i..dim {
                cov[i * dim + j] += xi * (rows[r * dim + j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i * dim + j] /= n_rows as f64;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }
    (mean, cov)
}

/// Wasserstein-2 distance between Gaussians:
/// sqrt(|mu_a - mu_b|^2 + tr(Ca + Cb - 2 (Ca^1/2 Cb Ca^1/2)^1/2)).
pub fn gaussian_w2(mean_a: &[f64], cov_a: &[f64], mean_b: &[f64], cov_b: &[f64], n: usize) -> f64 {
    let ra = spd_sqrt(cov_a, n);
    let inner = matmul_dense(&matmul_dense(&ra, cov_b, n), &ra, n);
    let cross = spd_sqrt(&inner, n);
    let mut tr = 0.0;
    for i in 0..n {
        tr += cov_a[i * n + i] + cov_b[i * n + i] - 2.0 * cross[i * n + i];
    }
    let mu: f64 = mean_a.iter().zip(mean_b.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    (mu + tr.max(0.0)).sqrt()
}

pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value via power iteration on M^T M.
pub fn operator_norm(m: &[f64], rows: usize, cols: usize) -> f64 {
    let mut v = vec![1.0; cols];
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut sigma = 0.0;
    for _ in 0..200 {
        let mut mv = vec![0.0; rows];
        for i in 0..rows {
            for j in 0..cols {
                mv[i] += m[i * cols + j] * v[j];
            }
        }
        let mut mtmv = vec![0.0; cols];
        for i in 0..rows {
            for j in 0..cols {
                mtmv[j] += m[i * cols + j] * mv[i];
            }
        }
        let n2 = norm(&mtmv);
        if n2 < 1e-300 {
            return 0.0;
        }
        for (x, y) in v.iter_mut().zip(mtmv.iter()) {
            *x = y / n2;
        }
        sigma = n2.sqrt();
    }
    sigma
}

/// Closed-form posterior-mean denoiser for x ~ N(0, C) + t z:
/// d(x, t) = C (C + t^2 I)^-1 x, evaluated through the eigendecomposition.
pub struct GaussianDenoiser {
    eigvals: Vec<f64>,
    eigvecs: Vec<f64>,
    dim: usize,
}

impl GaussianDenoiser {
    pub fn new(cov: &[f64], dim: usize) -> GaussianDenoiser {
        let (vals, vecs) = jacobi_eigh(cov, dim, 60);
        GaussianDenoiser { eigvals: vals, eigvecs: vecs, dim }
    }

    fn apply_filter(&self, x: &[f64], gains: &[f64], out: &mut [f64]) {
        let n = self.dim;
        // out = V diag(g) V^T x
        let mut proj = vec![0.0; n];
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += self.eigvecs[i * n + k] * x[i];
            }
            proj[k] = acc * gains[k];
        }
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..n {
                acc += self.eigvecs[i * n + k] * proj[k];
            }
            *o = acc;
        }
    }

    /// Exact probability-flow endpoint map from t_hi to t_lo:
    /// per eigenvalue, x scales by sqrt((lam + t_lo^2) / (lam + t_hi^2)).
    pub fn exact_flow(&self, x: &Tensor, t_hi: f64, t_lo: f64) -> Tensor {
        let n = self.dim;
        let gains: Vec<f64> = self
            .eigvals
            .iter()
            .map(|&l| ((l.max(0.0) + t_lo * t_lo) / (l.max(0.0) + t_hi * t_hi)).sqrt())
            .collect();
        let rows = x.len() / n;
        let mut data = vec![0.0; x.len()];
        for r in 0..rows {
            self.apply_filter(&x.data()[r * n..(r + 1) * n], &gains, &mut data[r * n..(r + 1) * n]);
        }
        Tensor::from_vec(x.shape().to_vec(), data).expect("finite flow output")
    }
}

impl Denoiser for GaussianDenoiser {
    fn denoise_batch(&self, x: &Tensor, ts: &[f64], _: &[ScenarioLabel]) -> Result<Tensor> {
        let n = self.dim;
        let mut data = vec![0.0; x.len()];
        for (r, &t) in ts.iter().enumerate() {
            let gains: Vec<f64> =
                self.eigvals.iter().map(|&l| l.max(0.0) / (l.max(0.0) + t * t)).collect();
            self.apply_filter(&x.data()[r * n..(r + 1) * n], &gains, &mut data[r * n..(r + 1) * n]);
        }
        Tensor::from_vec(x.shape().to_vec(), data)
    }
}

/// Draws rows from N(0, C) through the oracle's eigendecomposition.
pub fn sample_gaussian<R: Rng>(den: &GaussianDenoiser, rows: usize, rng: &mut R) -> Tensor {
    let n = den.dim;
    let gains: Vec<f64> = den.eigvals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut data = vec![0.0; rows * n];
    let z = Tensor::randn(&[rows, n], rng);
    for r in 0..rows {
        den.apply_filter(&z.data()[r * n..(r + 1) * n], &gains, &mut data[r * n..(r + 1) * n]);
    }
    Tensor::from_vec(vec![rows, n], data).expect("finite gaussian draw")
}
