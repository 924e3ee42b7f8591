//! Dense symmetric positive-definite factorization and solves.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2};

use crate::error::{check_len, Error, Result};

const BLOCK: usize = 96;

/// Lower Cholesky factor of an SPD matrix; the strict upper triangle is
/// left as garbage and never read.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

fn factor_diagonal_block(a: &mut Array2<f64>, k0: usize, kb: usize) -> Result<()> {
    for j in k0..k0 + kb {
        let mut d = a[[j, j]];
        for l in k0..j {
            d -= a[[j, l]] * a[[j, l]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Conditioning { index: j, value: d });
        }
        let d = libm::sqrt(d);
        a[[j, j]] = d;
        for i in j + 1..k0 + kb {
            let mut v = a[[i, j]];
            for l in k0..j {
                v -= a[[i, l]] * a[[j, l]];
            }
            a[[i, j]] = v / d;
        }
    }
    Ok(())
}

impl Cholesky {
    /// Right-looking blocked factorization `A = L Lᵀ`. Only the lower triangle
    /// of `a` is read. A non-positive pivot reports its index and value.
    pub fn factor(mut a: Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        check_len("cholesky (square matrix)", n, a.ncols())?;
        let mut k0 = 0;
        while k0 < n {
            let kb = BLOCK.min(n - k0);
            factor_diagonal_block(&mut a, k0, kb)?;
            let rest = k0 + kb;
            if rest < n {
                // panel: P ← P L11⁻ᵀ
                for i in rest..n {
                    for j in k0..rest {
                        let mut v = a[[i, j]];
                        for l in k0..j {
                            v -= a[[i, l]] * a[[j, l]];
                        }
                        a[[i, j]] = v / a[[j, j]];
                    }
                }
                // trailing update A22 ← A22 − P Pᵀ
                let panel = a.slice(s![rest.., k0..rest]).to_owned();
                let mut trailing = a.slice_mut(s![rest.., rest..]);
                general_mat_mul(-1.0, &panel, &panel.t(), 1.0, &mut trailing);
            }
            k0 = rest;
        }
        Ok(Self { l: a })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Smallest pivot `L_jj`; its square bounds the smallest eigenvalue from above.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim()).map(|j| self.l[[j, j]]).fold(f64::INFINITY, f64::min)
    }

    /// Solves `A X = B` for `B` of shape `n × c`.
    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = self.dim();
        check_len("cholesky right-hand side", n, b.nrows())?;
        let c = b.ncols();
        let mut x = b.to_owned();
        // L Y = B, row by row with axpy over the c columns
        for i in 0..n {
            let (done, mut rest) = x.view_mut().split_at(ndarray::Axis(0), i);
            let mut row = rest.row_mut(0);
            for l in 0..i {
                let f = self.l[[i, l]];
                if f != 0.0 {
                    row.scaled_add(-f, &done.row(l));
                }
            }
            row /= self.l[[i, i]];
        }
        // Lᵀ X = Y
        for i in (0..n).rev() {
            let (mut head, tail) = x.view_mut().split_at(ndarray::Axis(0), i + 1);
            let mut row = head.row_mut(i);
            for l in 0..tail.nrows() {
                let f = self.l[[i + 1 + l, i]];
                if f != 0.0 {
                    row.scaled_add(-f, &tail.row(l));
                }
            }
            row /= self.l[[i, i]];
        }
        debug_assert_eq!(x.ncols(), c);
        Ok(x)
    }

    /// Lower factor with the upper triangle zeroed.
    pub fn lower(&self) -> Array2<f64> {
        let mut l = self.l.clone();
        for i in 0..l.nrows() {
            for j in i + 1..l.ncols() {
                l[[i, j]] = 0.0;
            }
        }
        l
    }
}

/// Returns `a + shift·I`.
pub fn add_diagonal(a: &Array2<f64>, shift: f64) -> Array2<f64> {
    let mut out = a.clone();
    out.diag_mut().mapv_inplace(|v| v + shift);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spd(n: usize) -> Array2<f64> {
        let b = Array2::from_shape_fn((n, n), |(i, j)| libm::sin((i * 7 + j * 3) as f64) + if i == j { 0.5 } else { 0.0 });
        add_diagonal(&b.dot(&b.t()), 1e-3)
    }

    #[test]
    fn factor_reconstructs_across_block_boundaries() {
        for n in [1, 5, BLOCK, BLOCK + 3, 2 * BLOCK + 17] {
            let a = spd(n);
            let ch = Cholesky::factor(a.clone()).unwrap();
            let l = ch.lower();
            let rec = l.dot(&l.t());
            for (x, y) in rec.iter().zip(a.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn solve_residual_is_small() {
        let a = spd(150);
        let b = Array2::from_shape_fn((150, 4), |(i, j)| (i as f64 - j as f64).cos());
        let x = Cholesky::factor(a.clone()).unwrap().solve(b.view()).unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn indefinite_matrix_names_pivot() {
        let a = ndarray::arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 2.0, 1.0]]);
        match Cholesky::factor(a) {
            Err(Error::Conditioning { index, value }) => {
                assert_eq!(index, 2);
                assert!(value < 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
