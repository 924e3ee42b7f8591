//! Fast Walsh-Hadamard transform and the structured random operator
//! `scale · H D₁ H D₂ H D₃`.
//!
//! `H` is the orthonormal (Sylvester-ordered) Hadamard matrix with entries
//! `±1/√p`, and the `Dᵢ` are Rademacher sign diagonals. Every row of the
//! product `H D₁ H D₂ H D₃` has unit norm and entries of second moment `1/p`,
//! so `scale = √p · σ` emulates a dense matrix with i.i.d. `N(0, σ²)` entries
//! at `O(p log p)` cost per product.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

fn check_pow2(len: usize) -> Result<()> {
    if len.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo(len))
    }
}

/// Unnormalized butterflies; leaves `p^{1/2} · H v` in `v`.
#[inline]
fn butterflies(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let s = *a + *b;
                let d = *a - *b;
                *a = s;
                *b = d;
            }
        }
        h *= 2;
    }
}

/// In-place orthonormal Walsh-Hadamard transform, `v ← H v`.
///
/// Iterative butterflies with a single `1/√p` normalization at the end.
pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    check_pow2(v.len())?;
    butterflies(v);
    let norm = 1.0 / libm::sqrt(v.len() as f64);
    for x in v.iter_mut() {
        *x *= norm;
    }
    Ok(())
}

/// Copies `v` into the first `v.len()` slots of a zero vector of length `p`.
pub fn pad_input(v: &[f64], p: usize) -> Result<Vec<f64>> {
    if v.len() > p {
        return Err(Error::Dimension {
            context: "pad_input",
            expected: p,
            found: v.len(),
        });
    }
    let mut out = vec![0.0; p];
    out[..v.len()].copy_from_slice(v);
    Ok(out)
}

/// `scale · H D₁ H D₂ H D₃` over a power-of-two dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredOperator {
    p: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
    scale: f64,
    seed: u64,
}

impl StructuredOperator {
    /// Draws the three sign diagonals from the `(seed, Signs, index)` stream.
    pub fn new(p: usize, scale: f64, seed: u64, index: u64) -> Result<Self> {
        check_pow2(p)?;
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidParameter("structured scale must be finite and non-negative"));
        }
        let mut rng = rng::stream(seed, Purpose::Signs, index);
        let mut d1 = vec![0.0; p];
        let mut d2 = vec![0.0; p];
        let mut d3 = vec![0.0; p];
        rng::fill_rademacher(&mut rng, &mut d1);
        rng::fill_rademacher(&mut rng, &mut d2);
        rng::fill_rademacher(&mut rng, &mut d3);
        Ok(Self {
            p,
            d1,
            d2,
            d3,
            scale,
            seed,
        })
    }

    /// Builds an operator from explicit sign vectors.
    pub fn from_signs(d1: Vec<f64>, d2: Vec<f64>, d3: Vec<f64>, scale: f64) -> Result<Self> {
        let p = d1.len();
        check_pow2(p)?;
        crate::error::check_len("structured signs d2", p, d2.len())?;
        crate::error::check_len("structured signs d3", p, d3.len())?;
        if d1.iter().chain(&d2).chain(&d3).any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidParameter("sign diagonals must be exactly ±1"));
        }
        Ok(Self {
            p,
            d1,
            d2,
            d3,
            scale,
            seed: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signs(&self) -> [&[f64]; 3] {
        [&self.d1, &self.d2, &self.d3]
    }

    /// `buf ← scale · H D₁ H D₂ H D₃ buf`.
    pub fn apply_in_place(&self, buf: &mut [f64]) -> Result<()> {
        crate::error::check_len("structured_matvec", self.p, buf.len())?;
        for d in [&self.d3, &self.d2, &self.d1] {
            for (x, s) in buf.iter_mut().zip(d.iter()) {
                *x *= s;
            }
            butterflies(buf);
        }
        // three unnormalized transforms contribute p^{3/2}
        let p = self.p as f64;
        let norm = self.scale / (p * libm::sqrt(p));
        for x in buf.iter_mut() {
            *x *= norm;
        }
        Ok(())
    }

    /// Returns `scale · H D₁ H D₂ H D₃ v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    /// The explicit `p × p` matrix. Quadratic memory; meant for testing.
    pub fn materialize(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.p, self.p));
        let mut e = vec![0.0; self.p];
        for j in 0..self.p {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            self.apply_in_place(&mut e).expect("dimension checked");
            for (i, &v) in e.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }
}

/// `scale · H D₁ H D₂ H D₃ v` as a free function.
pub fn structured_matvec(op: &StructuredOperator, v: &[f64]) -> Result<Vec<f64>> {
    op.apply(v)
}
