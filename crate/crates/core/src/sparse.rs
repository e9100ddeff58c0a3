//! Compressed-row storage used by the integrators' right-hand sides.
//!
//! Model Hamiltonians have at most three nonzeros per row, so applying them
//! in CSR form is an order of magnitude cheaper than dense products.

use nalgebra::DMatrix;

use crate::qspace::C64;

#[derive(Clone, Debug)]
pub(crate) struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    pub(crate) fn from_dense(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub(crate) fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    /// out = scale · A x
    pub(crate) fn mul_vec_scaled(&self, scale: C64, x: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut acc = C64::new(0.0, 0.0);
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            *o = scale * acc;
        }
    }

    /// out += A · M for column-major square M.
    pub(crate) fn left_mul_add(&self, m: &[C64], scale: C64, out: &mut [C64]) {
        let d = self.dim;
        for c in 0..d {
            let col = &m[c * d..(c + 1) * d];
            let oc = &mut out[c * d..(c + 1) * d];
            for (i, o) in oc.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (j, v) in self.row(i) {
                    acc += v * col[j];
                }
                *o += scale * acc;
            }
        }
    }

    /// out += M · A† for column-major square M.
    pub(crate) fn right_mul_adjoint_add(&self, m: &[C64], scale: C64, out: &mut [C64]) {
        let d = self.dim;
        // (M A†)[:, j] = Σ_k M[:, k] conj(A[j, k])
        for j in 0..d {
            for (k, v) in self.row(j) {
                let f = scale * v.conj();
                let (src, dst) = (k * d, j * d);
                for i in 0..d {
                    let x = m[src + i];
                    out[dst + i] += f * x;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(d: usize) -> DMatrix<C64> {
        DMatrix::from_fn(d, d, |i, j| {
            if (i + 2 * j) % 3 == 0 {
                C64::new(i as f64 - 0.5 * j as f64, 0.25 * (i * j) as f64)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn products_match_dense() {
        let d = 5;
        let a = sample(d);
        let m = DMatrix::from_fn(d, d, |i, j| C64::new((i + j) as f64, i as f64 - j as f64));
        let csr = CsrMatrix::from_dense(&a);
        let s = C64::new(0.3, -1.1);

        let mut out = vec![C64::new(0.0, 0.0); d * d];
        csr.left_mul_add(m.as_slice(), s, &mut out);
        let expect = &a * &m * s;
        assert!(out.iter().zip(expect.iter()).all(|(x, y)| (x - y).norm() < 1e-12));

        let mut out = vec![C64::new(0.0, 0.0); d * d];
        csr.right_mul_adjoint_add(m.as_slice(), s, &mut out);
        let expect = &m * a.adjoint() * s;
        assert!(out.iter().zip(expect.iter()).all(|(x, y)| (x - y).norm() < 1e-12));

        let x: Vec<C64> = (0..d).map(|i| C64::new(1.0 + i as f64, -0.5)).collect();
        let mut y = vec![C64::new(0.0, 0.0); d];
        csr.mul_vec_scaled(s, &x, &mut y);
        let expect = &a * nalgebra::DVector::from_vec(x) * s;
        assert!(y.iter().zip(expect.iter()).all(|(p, q)| (p - q).norm() < 1e-12));
    }
}
