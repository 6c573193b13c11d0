//! Small dense solvers used by the estimators and metrics: a complex
//! Hermitian Cholesky factorization and a deterministic power iteration.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Cholesky factor of a Hermitian positive-definite matrix (row-major n×n).
pub struct CholeskyC {
    l: Vec<Complex64>,
    n: usize,
}

impl CholeskyC {
    /// Factors `a`. If the matrix is numerically singular, retries once with
    /// a ridge of 1e-12 on the diagonal and warns on stderr.
    pub fn factor(a: &[Complex64], n: usize) -> Result<CholeskyC> {
        match Self::try_factor(a, n, 0.0) {
            Ok(c) => Ok(c),
            Err(_) => {
                eprintln!("warning: singular system, retrying Cholesky with ridge 1e-12");
                Self::try_factor(a, n, 1e-12)
            }
        }
    }

    pub fn try_factor(a: &[Complex64], n: usize, ridge: f64) -> Result<CholeskyC> {
        if a.len() != n * n {
            return Err(Error::shape("cholesky", format!("{} entries for n={}", a.len(), n)));
        }
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                if i == j {
                    sum += ridge;
                }
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k].conj();
                }
                if i == j {
                    let d = sum.re;
                    if !(d > 0.0) || !d.is_finite() {
                        return Err(Error::invalid(
                            "cholesky",
                            format!("non-positive pivot {d} at row {i}"),
                        ));
                    }
                    l[i * n + j] = Complex64::new(d.sqrt(), 0.0);
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(CholeskyC { l, n })
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        // forward: L y = b
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * b[k];
            }
            b[i] = sum / self.l[i * n + i];
        }
        // backward: L^H x = y
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in i + 1..n {
                sum -= self.l[k * n + i].conj() * b[k];
            }
            b[i] = sum / self.l[i * n + i];
        }
    }

    /// Solves A X = B for a row-major (n×m) right-hand side, in place.
    pub fn solve_matrix_in_place(&self, b: &mut [Complex64], m: usize) {
        let n = self.n;
        debug_assert_eq!(b.len(), n * m);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..m {
            for i in 0..n {
                col[i] = b[i * m + j];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                b[i * m + j] = col[i];
            }
        }
    }
}

/// Dominant eigenvector of an implicit symmetric operator, via a fixed
/// number of power-iteration steps from a deterministic start vector.
pub fn dominant_eigenvector(matvec: impl Fn(&[f64]) -> Vec<f64>, dim: usize, iters: usize) -> Vec<f64> {
    // deterministic, sign-structured start avoids orthogonal degeneracies
    let mut v: Vec<f64> = (0..dim)
        .map(|i| {
            let x = (i as f64 + 1.0) * 0.7368062997;
            (x - x.floor()) - 0.5 + 1e-3
        })
        .collect();
    normalize(&mut v);
    for _ in 0..iters {
        let mut w = matvec(&v);
        let n = norm(&w);
        if n < 1e-300 {
            return v;
        }
        for x in w.iter_mut() {
            *x /= n;
        }
        v = w;
    }
    v
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}
