//! Recurrent kernels: the deterministic infinite-width limit of a reservoir.
//!
//! Each closed-form kernel below is `E_w[f(⟨w,u⟩) f(⟨w,v⟩)]` for a standard
//! Gaussian `w`, written as a function of `⟨u,v⟩`, `‖u‖²` and `‖v‖²`. With
//! `u = [σ_r x, σ_i i, σ_b]` the reservoir inner product at the next step
//! only depends on the previous kernel value and the inputs, which gives the
//! recursions implemented by [`rk_update_ri`] and [`rk_update_ti`].

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_PI, FRAC_2_PI};

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};

use crate::error::{check_len, Error, Result};
use crate::rng::{self, Purpose};

/// Closed-form kernels available for the recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// Limit of `erf` features.
    ArcsineErf,
    /// Limit of random Fourier features `[cos, sin]`.
    GaussianRff,
    /// Limit of `sign` features.
    ArcsineSign,
    /// Limit of Heaviside step features.
    Heaviside,
    /// First-order arc-cosine kernel, limit of ReLU features.
    Arccos1Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    RotationInvariant,
    TranslationInvariant,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [
        KernelKind::ArcsineErf,
        KernelKind::GaussianRff,
        KernelKind::ArcsineSign,
        KernelKind::Heaviside,
        KernelKind::Arccos1Relu,
    ];

    pub fn family(self) -> KernelFamily {
        match self {
            KernelKind::GaussianRff => KernelFamily::TranslationInvariant,
            _ => KernelFamily::RotationInvariant,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::ArcsineErf => "arcsine_erf",
            KernelKind::GaussianRff => "gaussian_rff",
            KernelKind::ArcsineSign => "arcsine_sign",
            KernelKind::Heaviside => "heaviside",
            KernelKind::Arccos1Relu => "arccos1_relu",
        }
    }
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Cosine of the angle between `u` and `v`; zero when either norm vanishes.
#[inline]
fn correlation(dot: f64, sq_u: f64, sq_v: f64) -> f64 {
    let denom = libm::sqrt(sq_u * sq_v);
    if denom > 0.0 {
        clamp_unit(dot / denom)
    } else {
        0.0
    }
}

/// Evaluates the closed-form kernel from `⟨u,v⟩`, `‖u‖²` and `‖v‖²`.
///
/// For [`KernelKind::GaussianRff`] the arguments encode
/// `‖u − v‖² = sq_u + sq_v − 2·dot`.
#[inline]
pub fn kernel_scalar(kind: KernelKind, dot: f64, sq_u: f64, sq_v: f64) -> f64 {
    match kind {
        KernelKind::ArcsineErf => {
            let denom = libm::sqrt((1.0 + 2.0 * sq_u) * (1.0 + 2.0 * sq_v));
            FRAC_2_PI * libm::asin(clamp_unit(2.0 * dot / denom))
        }
        KernelKind::GaussianRff => libm::exp(-0.5 * (sq_u + sq_v - 2.0 * dot)),
        KernelKind::ArcsineSign => FRAC_2_PI * libm::asin(correlation(dot, sq_u, sq_v)),
        KernelKind::Heaviside => 0.5 - 0.5 * FRAC_1_PI * libm::acos(correlation(dot, sq_u, sq_v)),
        KernelKind::Arccos1Relu => {
            let rho = correlation(dot, sq_u, sq_v);
            let norms = libm::sqrt(sq_u * sq_v);
            0.5 * FRAC_1_PI * (dot * libm::acos(-rho) + norms * libm::sqrt(1.0 - rho * rho))
        }
    }
}

/// Variances of the reservoir this kernel stands in for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkConfig {
    pub kind: KernelKind,
    /// σ_r²
    pub sigma_r2: f64,
    /// σ_i²
    pub sigma_i2: f64,
    /// σ_b²
    pub sigma_b2: f64,
}

impl RkConfig {
    pub fn new(kind: KernelKind, sigma_r2: f64, sigma_i2: f64, sigma_b2: f64) -> Self {
        Self {
            kind,
            sigma_r2,
            sigma_i2,
            sigma_b2,
        }
    }
}

/// Cross Gram `K⁽ᵗ⁾` plus the two self-kernel diagonals needed by the
/// norm-dependent formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct RkState {
    pub gram: Array2<f64>,
    pub diag_u: Vec<f64>,
    pub diag_v: Vec<f64>,
    pub t: usize,
}

impl RkState {
    /// `K⁽⁰⁾ = 0`, matching a zero initial reservoir state.
    pub fn zeros(n: usize, m: usize) -> Self {
        Self::filled(n, m, 0.0)
    }

    /// Every entry (cross and self) set to `value`.
    pub fn filled(n: usize, m: usize, value: f64) -> Self {
        Self {
            gram: Array2::from_elem((n, m), value),
            diag_u: vec![value; n],
            diag_v: vec![value; m],
            t: 0,
        }
    }

    fn check(&self, n: usize, m: usize) -> Result<()> {
        check_len("recurrent kernel rows", self.gram.nrows(), n)?;
        check_len("recurrent kernel columns", self.gram.ncols(), m)?;
        check_len("recurrent kernel row diagonal", n, self.diag_u.len())?;
        check_len("recurrent kernel column diagonal", m, self.diag_v.len())
    }
}

/// Applies `f(row, gram_row)` to every row, in parallel when enabled.
fn for_each_row<F>(mut gram: ArrayViewMut2<'_, f64>, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let m = gram.ncols();
    if m == 0 {
        return;
    }
    let data = gram
        .as_slice_mut()
        .expect("recurrent kernel Gram matrices are standard-layout");
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(m)
            .enumerate()
            .for_each(|(r, row)| f(r, row));
    }
    #[cfg(not(feature = "parallel"))]
    for (r, row) in data.chunks_mut(m).enumerate() {
        f(r, row);
    }
}

fn mirror_upper(gram: &mut Array2<f64>) {
    let n = gram.nrows();
    for r in 0..n {
        for q in 0..r {
            gram[[r, q]] = gram[[q, r]];
        }
    }
}

fn ri_step(
    cfg: &RkConfig,
    state: &mut RkState,
    l: ArrayView2<'_, f64>,
    l_self_u: &[f64],
    l_self_v: &[f64],
    symmetric: bool,
) {
    let kind = cfg.kind;
    let sr2 = cfg.sigma_r2;
    let sq_u: Vec<f64> = state.diag_u.iter().zip(l_self_u).map(|(k, l)| sr2 * k + l).collect();
    let sq_v: Vec<f64> = state.diag_v.iter().zip(l_self_v).map(|(k, l)| sr2 * k + l).collect();
    for_each_row(state.gram.view_mut(), |r, row| {
        let start = if symmetric { r } else { 0 };
        let l_row = l.row(r);
        let su = sq_u[r];
        for q in start..row.len() {
            row[q] = kernel_scalar(kind, sr2 * row[q] + l_row[q], su, sq_v[q]);
        }
    });
    if symmetric {
        mirror_upper(&mut state.gram);
    }
    for (k, &sq) in state.diag_u.iter_mut().zip(&sq_u) {
        *k = kernel_scalar(kind, sq, sq, sq);
    }
    for (k, &sq) in state.diag_v.iter_mut().zip(&sq_v) {
        *k = kernel_scalar(kind, sq, sq, sq);
    }
    state.t += 1;
}

fn ti_step(cfg: &RkConfig, state: &mut RkState, delta: ArrayView2<'_, f64>, symmetric: bool) {
    let sr2 = cfg.sigma_r2;
    let du = &state.diag_u;
    let dv = &state.diag_v;
    for_each_row(state.gram.view_mut(), |r, row| {
        let start = if symmetric { r } else { 0 };
        let d_row = delta.row(r);
        for q in start..row.len() {
            // ‖x − y‖² from the tracked norms; equals 2 − 2K once ‖x‖ = ‖y‖ = 1
            let dist = (du[r] + dv[q] - 2.0 * row[q]).max(0.0);
            row[q] = libm::exp(-0.5 * (sr2 * dist + d_row[q]));
        }
    });
    if symmetric {
        mirror_upper(&mut state.gram);
    }
    state.diag_u.iter_mut().for_each(|k| *k = 1.0);
    state.diag_v.iter_mut().for_each(|k| *k = 1.0);
    state.t += 1;
}

/// One rotation-invariant step, `K⁽ᵗ⁺¹⁾ = k(σ_r² K⁽ᵗ⁾ + L_t)`.
///
/// `l[r,q] = σ_i²⟨i_r, j_q⟩ + σ_b²`; `l_self_u[r] = σ_i²‖i_r‖² + σ_b²` and
/// `l_self_v[q] = σ_i²‖j_q‖² + σ_b²` feed the norm recursions.
pub fn rk_update_ri(
    cfg: &RkConfig,
    state: &mut RkState,
    l: ArrayView2<'_, f64>,
    l_self_u: &[f64],
    l_self_v: &[f64],
) -> Result<()> {
    if cfg.kind.family() != KernelFamily::RotationInvariant {
        return Err(Error::Kind {
            kind: cfg.kind,
            reason: "rotation-invariant update needs a rotation-invariant kernel",
        });
    }
    state.check(l.nrows(), l.ncols())?;
    check_len("rk_update_ri row self terms", l.nrows(), l_self_u.len())?;
    check_len("rk_update_ri column self terms", l.ncols(), l_self_v.len())?;
    ri_step(cfg, state, l, l_self_u, l_self_v, false);
    Ok(())
}

/// One translation-invariant step for the Gaussian kernel,
/// `K⁽ᵗ⁺¹⁾ = exp(−(σ_r²‖x − y‖² + Δ_t)/2)` where `‖x − y‖² = 2 − 2K⁽ᵗ⁾` as soon
/// as the states lie on the unit sphere (`t ≥ 1`) and `0` at `t = 0`.
pub fn rk_update_ti(cfg: &RkConfig, state: &mut RkState, delta: ArrayView2<'_, f64>) -> Result<()> {
    if cfg.kind.family() != KernelFamily::TranslationInvariant {
        return Err(Error::Kind {
            kind: cfg.kind,
            reason: "translation-invariant update needs the Gaussian kernel",
        });
    }
    state.check(delta.nrows(), delta.ncols())?;
    ti_step(cfg, state, delta, false);
    Ok(())
}

/// `n` windows of `τ` frames each, stored as end indices into a shared frame
/// matrix so overlapping windows of one series cost no extra memory.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    frames: Array2<f64>,
    ends: Vec<usize>,
    tau: usize,
}

impl WindowSet {
    /// Windows `[e − τ + 1 ..= e]` of `frames` (`T × d`) for every `e` in `ends`.
    pub fn new(frames: Array2<f64>, ends: Vec<usize>, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::InvalidParameter("window length must be positive"));
        }
        for &e in &ends {
            if e + 1 < tau || e >= frames.nrows() {
                return Err(Error::Dimension {
                    context: "window end index",
                    expected: frames.nrows(),
                    found: e,
                });
            }
        }
        Ok(Self { frames, ends, tau })
    }

    /// One window per series; every series must be `τ × d`.
    pub fn from_series(series: &[ArrayView2<'_, f64>]) -> Result<Self> {
        let Some(first) = series.first() else {
            return Ok(Self {
                frames: Array2::zeros((0, 0)),
                ends: Vec::new(),
                tau: 1,
            });
        };
        let (tau, d) = first.dim();
        let mut frames = Array2::zeros((tau * series.len(), d));
        let mut ends = Vec::with_capacity(series.len());
        for (k, s) in series.iter().enumerate() {
            check_len("window length", tau, s.nrows())?;
            check_len("window dimension", d, s.ncols())?;
            frames.slice_mut(s![k * tau..(k + 1) * tau, ..]).assign(s);
            ends.push((k + 1) * tau - 1);
        }
        Self::new(frames, ends, tau)
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    /// Frame `step ∈ [0, τ)` of every window, as an `n × d` matrix.
    pub fn gather(&self, step: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.dim()));
        for (k, &e) in self.ends.iter().enumerate() {
            out.row_mut(k).assign(&self.frames.row(e + 1 + step - self.tau));
        }
        out
    }

    /// Last frame of every window (`n × d`).
    pub fn last_frames(&self) -> Array2<f64> {
        self.gather(self.tau - 1)
    }

    /// Keeps the windows at the given positions, in order.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        let mut ends = Vec::with_capacity(positions.len());
        for &p in positions {
            let e = *self.ends.get(p).ok_or(Error::Dimension {
                context: "window selection",
                expected: self.len(),
                found: p,
            })?;
            ends.push(e);
        }
        Ok(Self {
            frames: self.frames.clone(),
            ends,
            tau: self.tau,
        })
    }
}

fn row_sq_norms(a: &Array2<f64>) -> Vec<f64> {
    a.rows().into_iter().map(|r| r.dot(&r)).collect()
}

/// Iterates the recursion `τ` times from `init` over all window pairs.
///
/// `test = None` evaluates the symmetric train Gram (only the upper triangle
/// goes through the kernel).
pub fn iterate_gram(
    train: &WindowSet,
    test: Option<&WindowSet>,
    cfg: &RkConfig,
    mut state: RkState,
) -> Result<RkState> {
    let other = test.unwrap_or(train);
    let symmetric = test.is_none();
    check_len("window length", train.tau(), other.tau())?;
    if !train.is_empty() && !other.is_empty() {
        check_len("window dimension", train.dim(), other.dim())?;
    }
    let (n, m) = (train.len(), other.len());
    state.check(n, m)?;
    if n == 0 || m == 0 {
        state.t += train.tau();
        return Ok(state);
    }
    let mut dots = Array2::zeros((n, m));
    for step in 0..train.tau() {
        let a = train.gather(step);
        let b = if symmetric { a.clone() } else { other.gather(step) };
        ndarray::linalg::general_mat_mul(1.0, &a, &b.t(), 0.0, &mut dots);
        let na = row_sq_norms(&a);
        let nb = if symmetric { na.clone() } else { row_sq_norms(&b) };
        if symmetric {
            // gemm may round the self products differently from the norms
            for (k, &v) in na.iter().enumerate() {
                dots[[k, k]] = v;
            }
        }
        match cfg.kind.family() {
            KernelFamily::RotationInvariant => {
                let (si2, sb2) = (cfg.sigma_i2, cfg.sigma_b2);
                dots.mapv_inplace(|v| si2 * v + sb2);
                let lu: Vec<f64> = na.iter().map(|v| si2 * v + sb2).collect();
                let lv: Vec<f64> = nb.iter().map(|v| si2 * v + sb2).collect();
                ri_step(cfg, &mut state, dots.view(), &lu, &lv, symmetric);
            }
            KernelFamily::TranslationInvariant => {
                let si2 = cfg.sigma_i2;
                for ((r, q), v) in dots.indexed_iter_mut() {
                    *v = si2 * (na[r] + nb[q] - 2.0 * *v).max(0.0);
                }
                ti_step(cfg, &mut state, dots.view(), symmetric);
            }
        }
    }
    Ok(state)
}

/// `n × n` train Gram `G⁽τ⁾` from `G⁽⁰⁾ = 0`.
pub fn build_gram_train(windows: &WindowSet, cfg: &RkConfig) -> Result<Array2<f64>> {
    let n = windows.len();
    Ok(iterate_gram(windows, None, cfg, RkState::zeros(n, n))?.gram)
}

/// `n × m` train/test Gram `K⁽τ⁾` from `K⁽⁰⁾ = 0`.
pub fn build_gram_test(train: &WindowSet, test: &WindowSet, cfg: &RkConfig) -> Result<Array2<f64>> {
    let state = RkState::zeros(train.len(), test.len());
    Ok(iterate_gram(train, Some(test), cfg, state)?.gram)
}

/// `gram + r² U Vᵀ` where `U`, `V` hold the last input of each window.
pub fn add_linear_kernel(
    gram: &Array2<f64>,
    last_u: ArrayView2<'_, f64>,
    last_v: ArrayView2<'_, f64>,
    r: f64,
) -> Result<Array2<f64>> {
    check_len("linear kernel rows", gram.nrows(), last_u.nrows())?;
    check_len("linear kernel columns", gram.ncols(), last_v.nrows())?;
    check_len("linear kernel input dimension", last_u.ncols(), last_v.ncols())?;
    let mut out = gram.clone();
    ndarray::linalg::general_mat_mul(r * r, &last_u, &last_v.t(), 1.0, &mut out);
    Ok(out)
}

/// Monte-Carlo random-feature estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

#[inline]
fn feature_product(kind: KernelKind, a: f64, b: f64) -> f64 {
    match kind {
        KernelKind::ArcsineErf => libm::erf(a) * libm::erf(b),
        // cos a cos b + sin a sin b
        KernelKind::GaussianRff => libm::cos(a - b),
        KernelKind::ArcsineSign => sign(a) * sign(b),
        KernelKind::Heaviside => step(a) * step(b),
        KernelKind::Arccos1Relu => a.max(0.0) * b.max(0.0),
    }
}

#[inline]
pub(crate) fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn step(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `(1/N) Σ f(⟨wₖ,u⟩) f(⟨wₖ,v⟩)` over `N` standard Gaussian `wₖ`.
pub fn mc_kernel_estimate_with_error(
    kind: KernelKind,
    u: &[f64],
    v: &[f64],
    features: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_len("mc_kernel_estimate", u.len(), v.len())?;
    if features == 0 {
        return Err(Error::InvalidParameter("feature count must be positive"));
    }
    let mut rng = rng::stream(seed, Purpose::Features, 0);
    let mut w = vec![0.0; u.len()];
    // Welford accumulation
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..features {
        rng::fill_gaussian(&mut rng, &mut w, 1.0);
        let a: f64 = w.iter().zip(u).map(|(x, y)| x * y).sum();
        let b: f64 = w.iter().zip(v).map(|(x, y)| x * y).sum();
        let prod = feature_product(kind, a, b);
        let delta = prod - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (prod - mean);
    }
    let var = if features > 1 { m2 / (features - 1) as f64 } else { 0.0 };
    Ok(McEstimate {
        mean,
        std_err: libm::sqrt(var / features as f64),
    })
}

/// Unbiased random-feature estimate of [`kernel_scalar`].
pub fn mc_kernel_estimate(kind: KernelKind, u: &[f64], v: &[f64], features: usize, seed: u64) -> Result<f64> {
    Ok(mc_kernel_estimate_with_error(kind, u, v, features, seed)?.mean)
}

/// Largest finite-difference slope of the scalar kernel with respect to its
/// recursion argument, over squared norms in `[sq_min, sq_max]`.
///
/// For rotation-invariant kernels the argument is `⟨u,v⟩` at fixed norms;
/// for the Gaussian kernel it is the squared distance `‖u − v‖²`.
pub fn lipschitz_constant(kind: KernelKind, sq_min: f64, sq_max: f64) -> f64 {
    const GRID: usize = 200;
    let h = 1e-6;
    let mut best: f64 = 0.0;
    match kind.family() {
        KernelFamily::TranslationInvariant => {
            let span = 2.0 * (sq_max + sq_max);
            for k in 0..=GRID {
                let dist = span * k as f64 / GRID as f64;
                let f = |d: f64| kernel_scalar(kind, -0.5 * d, 0.0, 0.0);
                let slope = (f(dist + h) - f((dist - h).max(0.0))) / (dist + h - (dist - h).max(0.0));
                best = best.max(slope.abs());
            }
        }
        KernelFamily::RotationInvariant => {
            for a in 0..=GRID / 10 {
                for b in 0..=GRID / 10 {
                    let sq_u = sq_min + (sq_max - sq_min) * a as f64 / (GRID / 10) as f64;
                    let sq_v = sq_min + (sq_max - sq_min) * b as f64 / (GRID / 10) as f64;
                    let bound = libm::sqrt(sq_u * sq_v);
                    if bound <= 2.0 * h {
                        continue;
                    }
                    for k in 0..=GRID {
                        let dot = -bound + 2.0 * bound * k as f64 / GRID as f64;
                        let lo = (dot - h).max(-bound);
                        let hi = (dot + h).min(bound);
                        let slope = (kernel_scalar(kind, hi, sq_u, sq_v) - kernel_scalar(kind, lo, sq_u, sq_v)) / (hi - lo);
                        best = best.max(slope.abs());
                    }
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_special_values() {
        assert_abs_diff_eq!(kernel_scalar(KernelKind::ArcsineSign, 2.0, 2.0, 2.0), 1.0, epsilon = 1e-15);
        assert_eq!(kernel_scalar(KernelKind::GaussianRff, 1.3, 1.3, 1.3), 1.0);
        // (2/π) asin(2/3), evaluated independently
        let expected = 2.0 / core::f64::consts::PI * (2.0f64 / 3.0).asin();
        assert_abs_diff_eq!(expected, 0.464_559, epsilon = 1e-6);
        assert_abs_diff_eq!(kernel_scalar(KernelKind::ArcsineErf, 1.0, 1.0, 1.0), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(kernel_scalar(KernelKind::Arccos1Relu, 3.0, 3.0, 3.0), 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(kernel_scalar(KernelKind::Heaviside, 1.0, 1.0, 1.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_norms_are_finite_limits() {
        assert_eq!(kernel_scalar(KernelKind::ArcsineSign, 0.0, 0.0, 1.0), 0.0);
        assert_eq!(kernel_scalar(KernelKind::Heaviside, 0.0, 0.0, 0.0), 0.25);
        assert_eq!(kernel_scalar(KernelKind::Arccos1Relu, 0.0, 0.0, 4.0), 0.0);
        assert_eq!(kernel_scalar(KernelKind::ArcsineErf, 0.0, 0.0, 0.0), 0.0);
        // slightly outside Cauchy-Schwarz from rounding
        let v = kernel_scalar(KernelKind::ArcsineSign, 1.0 + 1e-12, 1.0, 1.0);
        assert!(v.is_finite() && (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ri_base_case_is_plain_kernel() {
        let cfg = RkConfig::new(KernelKind::ArcsineErf, 0.8, 1.0, 0.1);
        let mut st = RkState::zeros(1, 1);
        let l = Array2::from_elem((1, 1), 0.3);
        rk_update_ri(&cfg, &mut st, l.view(), &[0.5], &[0.7]).unwrap();
        assert_eq!(st.gram[[0, 0]], kernel_scalar(KernelKind::ArcsineErf, 0.3, 0.5, 0.7));
        assert_eq!(st.t, 1);
    }

    #[test]
    fn ti_base_case_and_fixed_point() {
        let cfg = RkConfig::new(KernelKind::GaussianRff, 2.0, 1.0, 0.0);
        let mut st = RkState::zeros(2, 2);
        let delta = ndarray::arr2(&[[0.0, 0.8], [0.8, 0.0]]);
        rk_update_ti(&cfg, &mut st, delta.view()).unwrap();
        assert_eq!(st.gram[[0, 1]], (-0.4f64).exp());
        assert_eq!(st.gram[[0, 0]], 1.0);
        for _ in 0..5 {
            rk_update_ti(&cfg, &mut st, delta.view()).unwrap();
            assert_eq!(st.gram[[1, 1]], 1.0);
        }
    }

    #[test]
    fn family_mismatch_is_rejected() {
        let ri = RkConfig::new(KernelKind::ArcsineErf, 1.0, 1.0, 0.0);
        let ti = RkConfig::new(KernelKind::GaussianRff, 1.0, 1.0, 0.0);
        let mut st = RkState::zeros(1, 1);
        let m = Array2::zeros((1, 1));
        assert!(matches!(rk_update_ti(&ri, &mut st, m.view()), Err(Error::Kind { .. })));
        assert!(matches!(
            rk_update_ri(&ti, &mut st, m.view(), &[0.0], &[0.0]),
            Err(Error::Kind { .. })
        ));
    }

    #[test]
    fn sign_diagonal_stays_one() {
        let cfg = RkConfig::new(KernelKind::ArcsineSign, 0.9, 1.0, 0.0);
        let frames = ndarray::arr2(&[[1.0, -2.0], [0.5, 0.1], [-1.0, 3.0]]);
        let w = WindowSet::new(frames.clone(), vec![2], 3).unwrap();
        let pair = WindowSet::new(ndarray::concatenate![ndarray::Axis(0), frames, frames], vec![2, 5], 3).unwrap();
        let g = build_gram_train(&pair, &cfg).unwrap();
        assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert_eq!(build_gram_train(&w, &cfg).unwrap().dim(), (1, 1));
    }

    #[test]
    fn mc_trivial_cases() {
        assert_eq!(mc_kernel_estimate(KernelKind::ArcsineErf, &[0.0; 3], &[0.0; 3], 100, 1).unwrap(), 0.0);
        let u = [0.3, -1.2];
        let est = mc_kernel_estimate_with_error(KernelKind::GaussianRff, &u, &u, 37, 4).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.std_err, 0.0);
        assert!(mc_kernel_estimate(KernelKind::Heaviside, &u, &u, 0, 4).is_err());
    }

    #[test]
    fn lipschitz_of_gaussian_is_one_half() {
        let l = lipschitz_constant(KernelKind::GaussianRff, 0.0, 2.0);
        assert!((l - 0.5).abs() < 1e-4, "{l}");
    }
}
