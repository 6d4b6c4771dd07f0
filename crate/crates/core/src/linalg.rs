//! Dense complex linear-algebra helpers shared by the simulation modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest elementwise modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest elementwise modulus of the difference.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// max |X - X^dag| elementwise.
pub fn hermitian_residual(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut r: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            r = r.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    r
}

/// (X + X^dag) / 2
pub fn symmetrize(m: &CMat) -> CMat {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] = c(m[(i, i)].re);
        for j in (i + 1)..n {
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = z;
            out[(j, i)] = z.conj();
        }
    }
    out
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Columns of the returned matrix are the matching eigenvectors.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)
        .first()
        .copied()
        .unwrap_or(f64::NAN)
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    m.clone().singular_values().max()
}

/// Half the trace norm of the difference of two Hermitian matrices.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b))
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}

/// exp(-i * scale * X) for Hermitian X.
pub fn unitary_exp(x: &CMat, scale: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(x);
    let phases = CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&e| C64::from_polar(1.0, -scale * e)),
    );
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * vecs.adjoint()
}

/// Row-compressed copy of a dense matrix used to speed up left
/// multiplication when the operator is banded (ladder-built operators).
/// For a dense operand it degrades to an ordinary product.
#[derive(Clone, Debug)]
pub struct RowSparse {
    n: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl RowSparse {
    pub fn new(m: &CMat) -> Self {
        let n = m.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|k| {
                        let z = m[(i, k)];
                        (z != C64::new(0.0, 0.0)).then_some((k, z))
                    })
                    .collect()
            })
            .collect();
        RowSparse { n, rows }
    }

    /// out = self * rhs
    pub fn mul_into(&self, rhs: &CMat, out: &mut CMat) {
        debug_assert_eq!(rhs.nrows(), self.n);
        let ncols = rhs.ncols();
        out.fill(C64::new(0.0, 0.0));
        // nalgebra storage is column-major
        for j in 0..ncols {
            let src = rhs.column(j);
            let mut dst = out.column_mut(j);
            for (i, row) in self.rows.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &(k, z) in row {
                    acc += z * src[k];
                }
                dst[i] = acc;
            }
        }
    }

    pub fn mul(&self, rhs: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n, rhs.ncols());
        self.mul_into(rhs, &mut out);
        out
    }
}
