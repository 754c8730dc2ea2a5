//! Dense least squares through Householder QR.
//!
//! Systems here are tall and skinny (hundreds of rows, at most six columns),
//! so the factorization is kept column-major and unblocked.

/// Householder QR of an `m x n` matrix (`m >= n`), stored column-major.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    rows: usize,
    cols: usize,
    /// Householder vectors below the diagonal, R strictly above it.
    packed: Vec<f64>,
    /// Diagonal of R.
    rdiag: Vec<f64>,
    /// Leading element of each Householder vector.
    vhead: Vec<f64>,
}

impl HouseholderQr {
    /// Factor a column-major matrix.
    pub fn new(mut a: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(a.len(), rows * cols);
        assert!(rows >= cols);
        let mut rdiag = vec![0.0; cols];
        let mut vhead = vec![0.0; cols];
        for k in 0..cols {
            let col = k * rows;
            let norm = a[col + k..col + rows].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                rdiag[k] = 0.0;
                vhead[k] = 0.0;
                continue;
            }
            let alpha = if a[col + k] > 0.0 { -norm } else { norm };
            // v = x - alpha e1, stored in place with its head kept separately.
            let head = a[col + k] - alpha;
            a[col + k] = head;
            let vnorm2 = head * head + a[col + k + 1..col + rows].iter().map(|v| v * v).sum::<f64>();
            for j in k + 1..cols {
                let cj = j * rows;
                let dot: f64 = (k..rows).map(|i| a[col + i] * a[cj + i]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..rows {
                    a[cj + i] -= f * a[col + i];
                }
            }
            rdiag[k] = alpha;
            vhead[k] = head;
        }
        Self {
            rows,
            cols,
            packed: a,
            rdiag,
            vhead,
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Upper-triangular `R`, row-major `n x n`.
    pub fn r(&self) -> Vec<f64> {
        let n = self.cols;
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            r[i * n + i] = self.rdiag[i];
            for j in i + 1..n {
                r[i * n + j] = self.packed[j * self.rows + i];
            }
        }
        r
    }

    /// `Q^T b` in place.
    fn apply_qt(&self, b: &mut [f64]) {
        let m = self.rows;
        for k in 0..self.cols {
            if self.rdiag[k] == 0.0 {
                continue;
            }
            let col = k * m;
            let head = self.vhead[k];
            let tail = &self.packed[col + k + 1..col + m];
            let vnorm2 = head * head + tail.iter().map(|v| v * v).sum::<f64>();
            let dot = head * b[k] + tail.iter().zip(&b[k + 1..]).map(|(v, x)| v * x).sum::<f64>();
            let f = 2.0 * dot / vnorm2;
            b[k] -= f * head;
            for (x, v) in b[k + 1..].iter_mut().zip(tail) {
                *x -= f * v;
            }
        }
    }

    /// Minimizer of `|A x - b|`. Returns `None` when R has a zero pivot.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(b.len(), self.rows);
        let mut qtb = b.to_vec();
        self.apply_qt(&mut qtb);
        let n = self.cols;
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            if self.rdiag[i] == 0.0 {
                return None;
            }
            let mut s = qtb[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                s -= self.packed[j * self.rows + i] * xj;
            }
            x[i] = s / self.rdiag[i];
        }
        Some(x)
    }

    /// 2-norm condition number of A, from the singular values of R.
    pub fn condition(&self) -> f64 {
        let sv = singular_values(&self.r(), self.cols);
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Singular values of a small square row-major matrix via one-sided Jacobi
/// rotations on its columns.
pub fn singular_values(a: &[f64], n: usize) -> Vec<f64> {
    let mut u = a.to_vec();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let (up, uq) = (u[i * n + p], u[i * n + q]);
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (up, uq) = (u[i * n + p], u[i * n + q]);
                    u[i * n + p] = c * up - s * uq;
                    u[i * n + q] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (0..n)
        .map(|j| (0..n).map(|i| u[i * n + j] * u[i * n + j]).sum::<f64>().sqrt())
        .collect()
}
