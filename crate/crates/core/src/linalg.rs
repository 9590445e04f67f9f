//! Small dense complex matrices: power-iteration spectral norm and
//! Hermitian functional calculus through a cyclic Jacobi eigensolver.
//!
//! Sizes here never exceed 64 x 64, so everything is row-major `Vec`
//! storage with no blocking.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const POWER_TOLERANCE: f64 = 1e-12;
pub const POWER_MAX_ITERATIONS: usize = 10_000;
pub const JACOBI_TOLERANCE: f64 = 1e-13;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "CMat::from_vec shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "CMat::matmul shape");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len(), "CMat::matvec shape");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        vec_norm(&self.data)
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Euclidean norm of a complex coordinate vector.
pub fn vec_norm(v: &[Complex64]) -> f64 {
    let scale = v.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = v
        .iter()
        .map(|z| {
            let (re, im) = (z.re / scale, z.im / scale);
            re * re + im * im
        })
        .sum();
    scale * sum.sqrt()
}

/// Largest singular value of `a`, by power iteration on `a* a`.
///
/// The iterate starts from the heaviest column of `a* a` and the estimate
/// `‖(a*a) x‖` is nondecreasing, so the result approaches the true norm
/// from below. Stops once the relative change drops under
/// [`POWER_TOLERANCE`].
pub fn spectral_norm(a: &CMat) -> Result<f64> {
    let gram = a.adjoint().matmul(a);
    let n = gram.cols();
    if n == 0 {
        return Ok(0.0);
    }
    let column = |j: usize| -> Vec<Complex64> { (0..n).map(|i| gram[(i, j)]).collect() };
    let (start, start_norm) = (0..n)
        .map(|j| {
            let c = column(j);
            let norm = vec_norm(&c);
            (c, norm)
        })
        .fold((Vec::new(), -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if start_norm == 0.0 {
        return Ok(0.0);
    }
    let mut x: Vec<Complex64> = start.iter().map(|z| z / start_norm).collect();
    let mut estimate = 0.0_f64;
    for _ in 0..POWER_MAX_ITERATIONS {
        let y = gram.matvec(&x);
        let next = vec_norm(&y);
        if next == 0.0 {
            return Ok(0.0);
        }
        let converged = (next - estimate).abs() <= POWER_TOLERANCE * next;
        estimate = next;
        if converged {
            return Ok(estimate.sqrt());
        }
        x = y.iter().map(|z| z / next).collect();
    }
    Err(Error::NonConvergence {
        what: "spectral norm power iteration",
        iterations: POWER_MAX_ITERATIONS,
    })
}

/// Real symmetric eigendecomposition by cyclic Jacobi rotations.
/// Returns eigenvalues and the column-eigenvector matrix, both unsorted.
fn jacobi_symmetric(mut a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= JACOBI_TOLERANCE * frob.max(f64::MIN_POSITIVE) {
            let eig = (0..n).map(|i| a[i * n + i]).collect();
            return Ok((eig, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
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
    Err(Error::NonConvergence {
        what: "cyclic Jacobi eigensolver",
        iterations: JACOBI_MAX_SWEEPS,
    })
}

/// Embeds Hermitian `h = A + iB` as the real symmetric `[[A, -B], [B, A]]`.
fn realify(h: &CMat) -> Vec<f64> {
    let n = h.rows();
    let m = 2 * n;
    let mut out = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[i * m + j] = z.re;
            out[(i + n) * m + (j + n)] = z.re;
            out[i * m + (j + n)] = -z.im;
            out[(i + n) * m + j] = z.im;
        }
    }
    out
}

/// Spectral decomposition of a Hermitian matrix, kept in its real embedding.
///
/// Each eigenvalue of `h` appears twice in `eigenvalues`. Functions applied
/// through [`HermitianEigen::apply`] act on the embedding and are read back
/// from its left block column, which avoids pairing up eigenvectors.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    n: usize,
    eigenvalues: Vec<f64>,
    vectors: Vec<f64>,
}

impl HermitianEigen {
    pub fn new(h: &CMat) -> Result<Self> {
        assert_eq!(h.rows(), h.cols(), "HermitianEigen needs a square matrix");
        let n = h.rows();
        let (mut eigenvalues, vectors) = jacobi_symmetric(realify(h), 2 * n)?;
        // The embedding doubles every eigenvalue. Give both copies the same
        // value so a function applied to them keeps the complex structure;
        // near branch points such as √(1 − t²) a 1e−16 split becomes 1e−8.
        let mut order: Vec<usize> = (0..2 * n).collect();
        order.sort_by(|&i, &j| eigenvalues[i].total_cmp(&eigenvalues[j]));
        for pair in order.chunks(2) {
            let mean = 0.5 * (eigenvalues[pair[0]] + eigenvalues[pair[1]]);
            eigenvalues[pair[0]] = mean;
            eigenvalues[pair[1]] = mean;
        }
        Ok(Self { n, eigenvalues, vectors })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `re_f(h) + i·im_f(h)` for a complex-valued function of a real variable.
    pub fn apply(&self, f: impl Fn(f64) -> Complex64) -> CMat {
        let m = 2 * self.n;
        let values: Vec<Complex64> = self.eigenvalues.iter().map(|&x| f(x)).collect();
        let real_part = |pick: &dyn Fn(Complex64) -> f64| -> Vec<f64> {
            // V diag(pick(f)) V^T, left block column only.
            let mut out = vec![0.0; m * self.n];
            for i in 0..m {
                for j in 0..self.n {
                    let mut s = 0.0;
                    for k in 0..m {
                        s += self.vectors[i * m + k] * pick(values[k]) * self.vectors[j * m + k];
                    }
                    out[i * self.n + j] = s;
                }
            }
            out
        };
        let re = real_part(&|z| z.re);
        let im = real_part(&|z| z.im);
        let n = self.n;
        let mut out = CMat::zeros(n, n);
        // Embedding of X + iY is [[X, -Y], [Y, X]]: top block gives X, bottom gives Y.
        for i in 0..n {
            for j in 0..n {
                let x_re = re[i * n + j];
                let y_re = re[(i + n) * n + j];
                let x_im = im[i * n + j];
                let y_im = im[(i + n) * n + j];
                out[(i, j)] = Complex64::new(x_re, y_re) + Complex64::new(0.0, 1.0) * Complex64::new(x_im, y_im);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = CMat::from_vec(2, 2, vec![c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-4.0, 0.0)]);
        assert!((spectral_norm(&m).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_zero_is_zero() {
        assert_eq!(spectral_norm(&CMat::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn jacobi_square_root_of_diagonal() {
        let h = CMat::from_vec(2, 2, vec![c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(9.0, 0.0)]);
        let eig = HermitianEigen::new(&h).unwrap();
        let root = eig.apply(|x| c(x.max(0.0).sqrt(), 0.0));
        assert!((root[(0, 0)] - c(2.0, 0.0)).norm() < 1e-13);
        assert!((root[(1, 1)] - c(3.0, 0.0)).norm() < 1e-13);
        assert!(root[(0, 1)].norm() < 1e-13);
    }

    #[test]
    fn functional_calculus_on_complex_hermitian() {
        // h = [[1, i], [-i, 1]] has eigenvalues 0 and 2, so h^2 = 2h.
        let h = CMat::from_vec(2, 2, vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)]);
        let eig = HermitianEigen::new(&h).unwrap();
        let sq = eig.apply(|x| c(x * x, 0.0));
        let expected = h.matmul(&h);
        assert!(sq.sub(&expected).frobenius() < 1e-12);
        // exp(i h) is unitary
        let u = eig.apply(|x| c(x.cos(), x.sin()));
        let defect = u.adjoint().matmul(&u).sub(&CMat::identity(2)).frobenius();
        assert!(defect < 1e-12);
    }
}
