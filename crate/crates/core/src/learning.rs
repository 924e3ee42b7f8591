//! Linear readouts: ridge regression on reservoir features (primal) or on a
//! recurrent-kernel Gram matrix (dual), and autonomous forecasting with them.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_len, Error, Result};
use crate::kernel::{add_linear_kernel, build_gram_test, RkConfig, WindowSet};
use crate::linalg::{add_diagonal, Cholesky};
use crate::reservoir::Reservoir;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Weights over explicit features.
    Primal,
    /// Weights over training windows.
    Dual,
}

/// Trained readout `ô = W f`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub mode: Mode,
    /// `c × F` (primal) or `c × n` (dual).
    pub weights: Array2<f64>,
    /// Requested regularization.
    pub alpha: f64,
    /// Regularization that actually factored (`alpha`, `10 alpha` or `100 alpha`).
    pub alpha_used: f64,
    /// Weight of the input in the readout features.
    pub r: f64,
}

impl RidgeModel {
    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn jittered(&self) -> bool {
        self.alpha_used != self.alpha
    }
}

/// Factors `m + αI`, retrying with `10α` and `100α` on a failed pivot.
fn factor_with_jitter(m: &Array2<f64>, alpha: f64) -> Result<(Cholesky, f64)> {
    let mut last = None;
    for scale in [1.0, 10.0, 100.0] {
        let a = alpha * scale;
        match Cholesky::factor(add_diagonal(m, a)) {
            Ok(ch) => return Ok((ch, a)),
            Err(e) => last = Some(e),
        }
        if alpha == 0.0 {
            break;
        }
    }
    Err(last.expect("at least one attempt"))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter("ridge parameter must be finite and non-negative"))
    }
}

fn check_all_finite(a: ArrayView2<'_, f64>, context: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

/// Running `AᵀA` and `AᵀY` over row chunks, so the design never has to be
/// held in memory at once.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    ata: Array2<f64>,
    aty: Array2<f64>,
    rows: usize,
}

impl NormalEquations {
    pub fn new(features: usize, outputs: usize) -> Self {
        Self {
            ata: Array2::zeros((features, features)),
            aty: Array2::zeros((features, outputs)),
            rows: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn accumulate(&mut self, a: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
        check_len("design width", self.ata.nrows(), a.ncols())?;
        check_len("target width", self.aty.ncols(), y.ncols())?;
        check_len("design/target rows", a.nrows(), y.nrows())?;
        check_all_finite(a, "design matrix")?;
        check_all_finite(y, "targets")?;
        general_mat_mul(1.0, &a.t(), &a, 1.0, &mut self.ata);
        general_mat_mul(1.0, &a.t(), &y, 1.0, &mut self.aty);
        self.rows += a.nrows();
        Ok(())
    }

    /// Solves `(AᵀA + αI) W = AᵀY`.
    pub fn solve(&self, alpha: f64, r: f64) -> Result<RidgeModel> {
        check_alpha(alpha)?;
        if self.rows == 0 {
            return Err(Error::InvalidParameter("no training rows"));
        }
        let (ch, alpha_used) = factor_with_jitter(&self.ata, alpha)?;
        let w = ch.solve(self.aty.view())?;
        Ok(RidgeModel {
            mode: Mode::Primal,
            weights: w.reversed_axes().as_standard_layout().to_owned(),
            alpha,
            alpha_used,
            r,
        })
    }
}

/// Primal ridge regression on an `n × F` design.
pub fn ridge_fit(design: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, alpha: f64) -> Result<RidgeModel> {
    if design.nrows() == 0 {
        return Err(Error::InvalidParameter("no training rows"));
    }
    let mut ne = NormalEquations::new(design.ncols(), targets.ncols());
    ne.accumulate(design, targets)?;
    ne.solve(alpha, 1.0)
}

/// Dual ridge regression: solves `(G + αI) β = Y` and stores `βᵀ` (`c × n`).
pub fn ridge_fit_dual(gram: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, alpha: f64, r: f64) -> Result<RidgeModel> {
    check_alpha(alpha)?;
    let n = gram.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter("no training rows"));
    }
    check_len("gram (square matrix)", n, gram.ncols())?;
    check_len("gram/target rows", n, targets.nrows())?;
    check_all_finite(gram, "gram matrix")?;
    check_all_finite(targets, "targets")?;
    let (ch, alpha_used) = factor_with_jitter(&gram.to_owned(), alpha)?;
    let beta = ch.solve(targets)?;
    Ok(RidgeModel {
        mode: Mode::Dual,
        weights: beta.reversed_axes().as_standard_layout().to_owned(),
        alpha,
        alpha_used,
        r,
    })
}

/// `ô = W f` for a feature vector (primal) or kernel column (dual).
pub fn predict_step(model: &RidgeModel, features: &[f64]) -> Result<Vec<f64>> {
    check_len("readout features", model.inputs(), features.len())?;
    Ok(model.weights.dot(&ArrayView1::from(features)).to_vec())
}

/// Batched prediction: rows of `features` (`m × F`) to rows of outputs (`m × c`).
pub fn predict_batch(model: &RidgeModel, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_len("readout features", model.inputs(), features.ncols())?;
    Ok(features.dot(&model.weights.t()))
}

/// Target rows for a horizon of `h` frames after time `t`: `[i^(t+1), …, i^(t+h)]`.
fn stacked_targets(series: ArrayView2<'_, f64>, t: usize, h: usize) -> Array1<f64> {
    series.slice(s![t + 1..t + 1 + h, ..]).iter().copied().collect()
}

/// Trains a primal readout on one or more equally long segments driven in
/// parallel from `x = 0`.
///
/// After input `i^(t)` the features are `[x^(t+1); r·i^(t)]` and the targets
/// are the next `horizon` frames stacked. The first `warmup` inputs of each
/// segment produce no rows.
pub fn train_reservoir_readout(
    res: &mut Reservoir,
    segments: &[ArrayView2<'_, f64>],
    warmup: usize,
    r: f64,
    alpha: f64,
    horizon: usize,
) -> Result<RidgeModel> {
    let Some(first) = segments.first() else {
        return Err(Error::InvalidParameter("no training segments"));
    };
    let (len, d) = first.dim();
    for seg in segments {
        check_len("segment length", len, seg.nrows())?;
        check_len("segment dimension", d, seg.ncols())?;
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("readout horizon must be positive"));
    }
    let s = res.state_len();
    let k = segments.len();
    let mut ne = NormalEquations::new(s + d, d * horizon);
    let mut states = Array2::zeros((k, s));
    let mut inputs = Array2::zeros((k, d));
    const CHUNK: usize = 256;
    let mut design = Array2::zeros((0, s + d));
    let mut targets = Array2::zeros((0, d * horizon));
    for t in 0..len.saturating_sub(horizon) {
        for (j, seg) in segments.iter().enumerate() {
            inputs.row_mut(j).assign(&seg.row(t));
        }
        res.step_batch(states.view_mut(), inputs.view(), t)?;
        if t < warmup {
            continue;
        }
        for (j, seg) in segments.iter().enumerate() {
            let mut f = Array1::zeros(s + d);
            f.slice_mut(s![..s]).assign(&states.row(j));
            f.slice_mut(s![s..]).assign(&(&inputs.row(j) * r));
            design.push_row(f.view()).expect("row width fixed");
            targets.push_row(stacked_targets(seg.view(), t, horizon).view()).expect("row width fixed");
        }
        if design.nrows() >= CHUNK {
            ne.accumulate(design.view(), targets.view())?;
            design = Array2::zeros((0, s + d));
            targets = Array2::zeros((0, d * horizon));
        }
    }
    if design.nrows() > 0 {
        ne.accumulate(design.view(), targets.view())?;
    }
    ne.solve(alpha, r)
}

/// Dual readout for a recurrent kernel plus the linear term on the last input.
pub fn train_kernel_readout(windows: &WindowSet, targets: ArrayView2<'_, f64>, cfg: &RkConfig, r: f64, alpha: f64) -> Result<RidgeModel> {
    let gram = crate::kernel::build_gram_train(windows, cfg)?;
    let last = windows.last_frames();
    let gram = add_linear_kernel(&gram, last.view(), last.view(), r)?;
    ridge_fit_dual(gram.view(), targets, alpha, r)
}

/// What turns past inputs into readout features during autonomous runs.
pub enum Machinery<'a> {
    Reservoir(&'a mut Reservoir),
    Kernel { train: &'a WindowSet, cfg: RkConfig },
}

/// Closed-loop forecasts for several starts at once.
///
/// Every warm-up series is fed in full; then each step predicts the next
/// frame, appends it to the input stream and updates the machinery (one
/// reservoir step, or a fresh kernel column over the slid window).
/// Returns one `horizon × d` forecast per warm-up series.
pub fn forecast_closed_loop_batch(
    model: &RidgeModel,
    machinery: Machinery<'_>,
    warm: &[ArrayView2<'_, f64>],
    horizon: usize,
) -> Result<Vec<Array2<f64>>> {
    let Some(first) = warm.first() else {
        return Ok(Vec::new());
    };
    let (w_len, d) = first.dim();
    for w in warm {
        check_len("warm-up length", w_len, w.nrows())?;
        check_len("warm-up dimension", d, w.ncols())?;
    }
    check_len("readout outputs", d, model.outputs())?;
    let k = warm.len();
    let mut out: Vec<Array2<f64>> = (0..k).map(|_| Array2::zeros((horizon, d))).collect();
    if horizon == 0 {
        return Ok(out);
    }
    let r = model.r;
    match machinery {
        Machinery::Reservoir(res) => {
            if w_len == 0 {
                return Err(Error::InvalidParameter("warm-up series is empty"));
            }
            let s = res.state_len();
            check_len("readout features", s + d, model.inputs())?;
            let mut states = Array2::zeros((k, s));
            let mut inputs = Array2::zeros((k, d));
            for t in 0..w_len {
                for (j, w) in warm.iter().enumerate() {
                    inputs.row_mut(j).assign(&w.row(t));
                }
                res.step_batch(states.view_mut(), inputs.view(), t)?;
            }
            let mut feats = Array2::zeros((k, s + d));
            for h in 0..horizon {
                feats.slice_mut(s![.., ..s]).assign(&states);
                feats.slice_mut(s![.., s..]).assign(&(&inputs * r));
                let pred = predict_batch(model, feats.view())?;
                if pred.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { step: h });
                }
                for (j, o) in out.iter_mut().enumerate() {
                    o.row_mut(h).assign(&pred.row(j));
                }
                if h + 1 < horizon {
                    inputs.assign(&pred);
                    res.step_batch(states.view_mut(), inputs.view(), w_len + h)?;
                }
            }
        }
        Machinery::Kernel { train, cfg } => {
            let tau = train.tau();
            if w_len < tau {
                return Err(Error::Dimension {
                    context: "warm-up shorter than the kernel window",
                    expected: tau,
                    found: w_len,
                });
            }
            check_len("readout features", train.len(), model.inputs())?;
            let train_last = train.last_frames();
            // stream[j] holds the last τ frames seen by forecast j
            let mut frames = Array2::zeros((k * tau, d));
            for (j, w) in warm.iter().enumerate() {
                frames.slice_mut(s![j * tau..(j + 1) * tau, ..]).assign(&w.slice(s![w_len - tau.., ..]));
            }
            let ends: Vec<usize> = (0..k).map(|j| (j + 1) * tau - 1).collect();
            for h in 0..horizon {
                let test = WindowSet::new(frames.clone(), ends.clone(), tau)?;
                let col = build_gram_test(train, &test, &cfg)?;
                let col = add_linear_kernel(&col, train_last.view(), test.last_frames().view(), r)?;
                // (c × n)(n × k) → k × c
                let pred = model.weights.dot(&col).reversed_axes();
                if pred.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { step: h });
                }
                for (j, o) in out.iter_mut().enumerate() {
                    o.row_mut(h).assign(&pred.row(j));
                    let mut win = frames.slice_mut(s![j * tau..(j + 1) * tau, ..]);
                    for q in 0..tau - 1 {
                        let next = win.row(q + 1).to_owned();
                        win.row_mut(q).assign(&next);
                    }
                    win.row_mut(tau - 1).assign(&pred.row(j));
                }
            }
        }
    }
    Ok(out)
}

/// Closed-loop forecast from a single warm-up series.
pub fn forecast_closed_loop(model: &RidgeModel, machinery: Machinery<'_>, warm: ArrayView2<'_, f64>, horizon: usize) -> Result<Array2<f64>> {
    if warm.ncols() != model.outputs() {
        return Err(Error::Dimension {
            context: "warm-up dimension",
            expected: model.outputs(),
            found: warm.ncols(),
        });
    }
    Ok(forecast_closed_loop_batch(model, machinery, &[warm], horizon)?.remove(0))
}

/// One readout evaluation producing `horizon` frames of dimension `d` from a
/// model trained on stacked multi-step targets.
pub fn forecast_direct(model: &RidgeModel, features: &[f64], d: usize, horizon: usize) -> Result<Array2<f64>> {
    if d == 0 || model.outputs() % d != 0 || horizon > model.outputs() / d {
        return Err(Error::Dimension {
            context: "direct forecast horizon",
            expected: model.outputs() / d.max(1),
            found: horizon,
        });
    }
    let out = predict_step(model, features)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step: 0 });
    }
    Ok(Array2::from_shape_vec((model.outputs() / d, d), out)
        .expect("output length is a multiple of d")
        .slice(s![..horizon, ..])
        .to_owned())
}

/// `‖O(t) − Ô(t)‖² / d / normalizer(t)` per step.
pub fn nmse_curve(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>, normalizer: &[f64]) -> Result<Vec<f64>> {
    check_len("forecast length", truth.nrows(), pred.nrows())?;
    check_len("forecast dimension", truth.ncols(), pred.ncols())?;
    check_len("normalizer length", truth.nrows(), normalizer.len())?;
    let d = truth.ncols().max(1) as f64;
    let mut out = vec![0.0; truth.nrows()];
    for (t, o) in out.iter_mut().enumerate() {
        let z = normalizer[t];
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::NonFinite("nmse normalizer"));
        }
        let diff = &pred.row(t) - &truth.row(t);
        *o = diff.dot(&diff) / d / z;
    }
    Ok(out)
}

/// Mean over curves, step by step.
pub fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    let mut m = Array2::zeros((curves.len(), first.len()));
    for (k, c) in curves.iter().enumerate() {
        m.row_mut(k).assign(&ArrayView1::from(&c[..]));
    }
    m.mean_axis(Axis(0)).map(|a| a.to_vec()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{Activation, ReservoirParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_design_returns_targets() {
        let eye = Array2::<f64>::eye(6);
        let y = Array2::from_shape_fn((6, 2), |(i, j)| (i * 2 + j) as f64 - 3.0);
        let m = ridge_fit(eye.view(), y.view(), 0.0).unwrap();
        assert_eq!(m.weights.dim(), (2, 6));
        for i in 0..6 {
            let p = predict_step(&m, eye.row(i).as_slice().unwrap()).unwrap();
            assert_abs_diff_eq!(p[0], y[[i, 0]], epsilon = 1e-12);
            assert_abs_diff_eq!(p[1], y[[i, 1]], epsilon = 1e-12);
        }
    }

    #[test]
    fn huge_alpha_shrinks_to_zero() {
        let a = Array2::from_shape_fn((30, 5), |(i, j)| libm::sin((i + 3 * j) as f64));
        let y = Array2::from_shape_fn((30, 1), |(i, _)| libm::cos(i as f64));
        let m = ridge_fit(a.view(), y.view(), 1e9).unwrap();
        let wn = m.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yn = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(wn <= 1e-6 * yn);
    }

    #[test]
    fn singular_design_without_ridge_fails() {
        let a = Array2::zeros((4, 3));
        let y = Array2::zeros((4, 1));
        assert!(matches!(ridge_fit(a.view(), y.view(), 0.0), Err(Error::Conditioning { .. })));
        // a tiny positive ridge factors at the first attempt
        let m = ridge_fit(a.view(), y.view(), 1e-3).unwrap();
        assert!(!m.jittered());
    }

    #[test]
    fn dual_solution_interpolates_with_small_alpha() {
        let g = add_diagonal(&Array2::from_shape_fn((5, 5), |(i, j)| libm::exp(-((i as f64 - j as f64).powi(2)))), 0.0);
        let y = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let m = ridge_fit_dual(g.view(), y.view(), 1e-10, 0.0).unwrap();
        let pred = m.weights.dot(&g);
        for i in 0..5 {
            assert_abs_diff_eq!(pred[[0, i]], i as f64, epsilon = 1e-6);
        }
    }

    #[test]
    fn prediction_is_linear() {
        let m = RidgeModel {
            mode: Mode::Primal,
            weights: Array2::from_shape_fn((2, 3), |(i, j)| (i + 2 * j) as f64 - 1.5),
            alpha: 0.1,
            alpha_used: 0.1,
            r: 1.0,
        };
        assert_eq!(predict_step(&m, &[0.0; 3]).unwrap(), vec![0.0, 0.0]);
        let (f1, f2) = ([1.0, -2.0, 0.5], [0.3, 0.0, 4.0]);
        let comb: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = predict_step(&m, &comb).unwrap();
        let (p1, p2) = (predict_step(&m, &f1).unwrap(), predict_step(&m, &f2).unwrap());
        for k in 0..2 {
            assert_abs_diff_eq!(lhs[k], 2.0 * p1[k] - 3.0 * p2[k], epsilon = 1e-12);
        }
        assert!(predict_step(&m, &[1.0]).is_err());
    }

    #[test]
    fn zero_model_forecasts_zeros() {
        let p = ReservoirParams::new(16, 2, Activation::Erf).with_sigmas(0.9, 0.4, 0.4);
        let mut res = Reservoir::new(p).unwrap();
        let m = RidgeModel {
            mode: Mode::Primal,
            weights: Array2::zeros((2, 18)),
            alpha: 1.0,
            alpha_used: 1.0,
            r: 1.0,
        };
        let warm = Array2::from_elem((4, 2), 0.7);
        let f = forecast_closed_loop(&m, Machinery::Reservoir(&mut res), warm.view(), 5).unwrap();
        assert_eq!(f, Array2::zeros((5, 2)));
        assert_eq!(forecast_closed_loop(&m, Machinery::Reservoir(&mut res), warm.view(), 0).unwrap().nrows(), 0);
    }

    #[test]
    fn direct_single_step_matches_predict() {
        let m = RidgeModel {
            mode: Mode::Primal,
            weights: Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64),
            alpha: 1.0,
            alpha_used: 1.0,
            r: 1.0,
        };
        let f = [0.5, -1.0, 2.0];
        let one = forecast_direct(&m, &f, 2, 1).unwrap();
        let p = predict_step(&m, &f).unwrap();
        assert_eq!(one.row(0).to_vec(), p[..2].to_vec());
        assert_eq!(forecast_direct(&m, &[0.0; 3], 2, 2).unwrap(), Array2::zeros((2, 2)));
        assert!(forecast_direct(&m, &f, 2, 3).is_err());
    }

    #[test]
    fn nmse_examples() {
        let truth = Array2::from_shape_fn((3, 1), |(t, _)| t as f64);
        assert_eq!(nmse_curve(truth.view(), truth.view(), &[1.0; 3]).unwrap(), vec![0.0; 3]);
        let pred = &truth + 2.0;
        assert_eq!(nmse_curve(pred.view(), truth.view(), &[1.0; 3]).unwrap(), vec![4.0; 3]);
        assert!(nmse_curve(pred.view(), truth.view(), &[1.0, 0.0, 1.0]).is_err());
    }
}
