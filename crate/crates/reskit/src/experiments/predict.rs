//! Autonomous KS forecasting with RC, SRC and RK readouts, and the
//! closed-loop versus direct multi-step comparison.

use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::index::sample;
use rayon::prelude::*;
use reskit_core::kernel::{RkConfig, WindowSet};
use reskit_core::learning::{
    forecast_closed_loop_batch, forecast_direct, mean_curve, nmse_curve, train_kernel_readout, train_reservoir_readout,
    Machinery, RidgeModel,
};
use reskit_core::rng::{self, Purpose};
use reskit_core::{concat_state, Activation, Backend, Reservoir, ReservoirParams};

use super::convergence::parse_backend;
use super::data::{independent_mse, prepare_series, Prepared};
use super::{parse_seeds, Cell, Experiment, ExperimentError, ResultRecord, Table};
use crate::config::{require_positive, Config, ConfigError};

pub(super) const DEFAULTS: &[(&str, &str)] = &[
    ("ks_l", "22"),
    ("normalize", "unit_norm"),
    ("input_scale", "1.25"),
    ("train_chunks", "10"),
    ("algorithms", "rc,src,rk"),
    ("n", "3996"),
    ("n_train", "10000"),
    ("warmup", "100"),
    ("rk_windows", "2000"),
    ("tau", "50"),
    ("sigma_r2", "0.81"),
    ("sigma_i2", "0.16"),
    ("sigma_b2", "0.16"),
    ("r", "1.1"),
    ("alpha", "0.01"),
    ("horizon", "600"),
    ("starts", "10"),
    ("test_len", "2000"),
    ("lt_marks", "1,2,3"),
    ("seeds", "0..10"),
];

pub(super) const RECDIRECT_DEFAULTS: &[(&str, &str)] = &[
    ("ks_l", "22"),
    ("normalize", "unit_norm"),
    ("input_scale", "1.25"),
    ("train_chunks", "10"),
    ("backend", "rc"),
    ("n", "1000"),
    ("n_train", "10000"),
    ("warmup", "100"),
    ("sigma_r2", "0.81"),
    ("sigma_i2", "0.16"),
    ("sigma_b2", "0.16"),
    ("r", "1.1"),
    ("alpha", "0.01"),
    ("horizon", "150"),
    ("starts", "10"),
    ("test_len", "2000"),
    ("lt_marks", "0.5,1,2,3"),
    ("seeds", "0..5"),
];

/// Shared settings of both forecasting experiments.
struct Setup {
    prep: Prepared,
    n: usize,
    n_train: usize,
    warmup: usize,
    chunks: usize,
    sigmas: (f64, f64, f64),
    r: f64,
    alpha: f64,
    horizon: usize,
    starts: Vec<usize>,
    warm_len: usize,
    normalizer: f64,
    lt_marks: Vec<f64>,
    seeds: Vec<u64>,
}

impl Setup {
    fn from_config(cfg: &Config, warm_len_min: usize) -> Result<Self, ExperimentError> {
        let n = require_positive("n", cfg.get::<usize>("n")?)?;
        let n_train = require_positive("n_train", cfg.get::<usize>("n_train")?)?;
        let warmup: usize = cfg.get("warmup")?;
        let chunks = require_positive("train_chunks", cfg.get::<usize>("train_chunks")?)?;
        if n_train % chunks != 0 {
            return Err(ConfigError::Invalid(format!("`n_train` ({n_train}) must be a multiple of `train_chunks` ({chunks})")).into());
        }
        let var = |k: &str| -> Result<f64, ConfigError> {
            let v: f64 = cfg.get(k)?;
            if v >= 0.0 {
                Ok(v.sqrt())
            } else {
                Err(ConfigError::Invalid(format!("`{k}` must be non-negative")))
            }
        };
        let sigmas = (var("sigma_r2")?, var("sigma_i2")?, var("sigma_b2")?);
        let r: f64 = cfg.get("r")?;
        let alpha: f64 = cfg.get("alpha")?;
        if !(alpha >= 0.0) {
            return Err(ConfigError::Invalid("`alpha` must be non-negative".into()).into());
        }
        let horizon: usize = cfg.get("horizon")?;
        let n_starts = require_positive("starts", cfg.get::<usize>("starts")?)?;
        let test_len: usize = cfg.get("test_len")?;
        let lt_marks = cfg.list::<f64>("lt_marks")?;
        let seeds = parse_seeds(cfg)?;
        let warm_len = warmup.max(warm_len_min).max(1);
        if test_len < warm_len + horizon {
            return Err(ConfigError::Invalid(format!(
                "`test_len` ({test_len}) must cover the warm-up ({warm_len}) plus the horizon ({horizon})"
            ))
            .into());
        }
        let train_rows = warmup + n_train + 1;
        let prep = prepare_series(cfg, train_rows + test_len, train_rows)?;
        let normalizer = independent_mse(prep.data.slice(s![..train_rows, ..]));
        // evenly spread forecast origins inside the held-out stretch
        let span = test_len - warm_len - horizon;
        let starts = (0..n_starts)
            .map(|k| train_rows + warm_len + if n_starts > 1 { k * span / (n_starts - 1) } else { 0 })
            .collect();
        Ok(Self {
            prep,
            n,
            n_train,
            warmup,
            chunks,
            sigmas,
            r,
            alpha,
            horizon,
            starts,
            warm_len,
            normalizer,
            lt_marks,
            seeds,
        })
    }

    fn data(&self) -> ArrayView2<'_, f64> {
        self.prep.data.view()
    }

    fn train_segment(&self) -> ArrayView2<'_, f64> {
        self.prep.data.slice(s![..self.warmup + self.n_train + 1, ..])
    }

    /// The training rows cut into `chunks` equal pieces, each preceded by the
    /// `warmup` rows before it. Together they yield the same feature rows as
    /// one pass over [`Self::train_segment`] (up to the echo-state error of
    /// the replayed warm-up) while stepping all pieces as one batch.
    fn train_segments(&self) -> Vec<ArrayView2<'_, f64>> {
        let c = self.n_train / self.chunks;
        (0..self.chunks)
            .map(|k| self.prep.data.slice(s![k * c..k * c + self.warmup + c + 1, ..]))
            .collect()
    }

    fn warms(&self) -> Vec<ArrayView2<'_, f64>> {
        self.starts
            .iter()
            .map(|&s0| self.prep.data.slice(s![s0 - self.warm_len..s0, ..]))
            .collect()
    }

    fn params(&self, backend: Backend, seed: u64) -> ReservoirParams {
        let (sr, si, sb) = self.sigmas;
        ReservoirParams::new(self.n, self.prep.data.ncols(), Activation::Erf)
            .with_sigmas(sr, si, sb)
            .with_backend(backend)
            .with_seed(seed)
    }

    /// Per-step NMSE averaged over the forecast origins.
    fn score(&self, forecasts: &[Array2<f64>]) -> Result<Vec<f64>, ExperimentError> {
        let norm = vec![self.normalizer; self.horizon];
        let curves = forecasts
            .iter()
            .zip(&self.starts)
            .map(|(f, &s0)| nmse_curve(f.view(), self.data().slice(s![s0..s0 + self.horizon, ..]), &norm))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(mean_curve(&curves))
    }

    /// Curve index of the forecast `lt` Lyapunov times ahead (index 0 is one step ahead).
    fn mark_index(&self, lt: f64) -> Option<usize> {
        let steps = (lt * self.prep.steps_per_lyapunov_time()).round() as usize;
        (steps >= 1 && steps <= self.horizon).then(|| steps - 1)
    }
}

fn kernel_windows(setup: &Setup, tau: usize, count: usize, seed: u64) -> Result<(WindowSet, Array2<f64>), ExperimentError> {
    let seg = setup.train_segment();
    // windows end at e ∈ [max(τ, warmup) − 1, T − 2] so every one has a target
    let first = tau.max(setup.warmup).max(1) - 1;
    let last = seg.nrows() - 2;
    if last < first {
        return Err(ConfigError::Invalid("training segment shorter than one kernel window".into()).into());
    }
    let avail = last - first + 1;
    let count = count.min(avail);
    let mut picks = sample(&mut rng::stream(seed, Purpose::Subsample, 0), avail, count).into_vec();
    picks.sort_unstable();
    let ends: Vec<usize> = picks.iter().map(|p| first + p).collect();
    let targets = Array2::from_shape_fn((ends.len(), seg.ncols()), |(k, j)| seg[[ends[k] + 1, j]]);
    Ok((WindowSet::new(seg.to_owned(), ends, tau)?, targets))
}

enum Outcome {
    Curve(Vec<f64>),
    Diverged(usize),
}

struct Run {
    outcome: Outcome,
    train_s: f64,
    forecast_s: f64,
    jittered: bool,
}

fn closed_loop(setup: &Setup, alg: &str, seed: u64, tau: usize, rk_windows: usize) -> Result<Run, ExperimentError> {
    let t0 = Instant::now();
    let warms = setup.warms();
    let (model, result, train_s): (RidgeModel, _, f64) = if alg == "rk" {
        let (windows, targets) = kernel_windows(setup, tau, rk_windows, seed)?;
        let (sr, si, sb) = setup.sigmas;
        let rk = RkConfig::new(reskit_core::KernelKind::ArcsineErf, sr * sr, si * si, sb * sb);
        let model = train_kernel_readout(&windows, targets.view(), &rk, setup.r, setup.alpha)?;
        let train_s = t0.elapsed().as_secs_f64();
        let res = forecast_closed_loop_batch(&model, Machinery::Kernel { train: &windows, cfg: rk }, &warms, setup.horizon);
        (model, res, train_s)
    } else {
        let mut res = Reservoir::new(setup.params(parse_backend(alg)?, seed))?;
        let model = train_reservoir_readout(&mut res, &setup.train_segments(), setup.warmup, setup.r, setup.alpha, 1)?;
        let train_s = t0.elapsed().as_secs_f64();
        let out = forecast_closed_loop_batch(&model, Machinery::Reservoir(&mut res), &warms, setup.horizon);
        (model, out, train_s)
    };
    let forecast_s = t0.elapsed().as_secs_f64() - train_s;
    let outcome = match result {
        Ok(f) => {
            let curve = setup.score(&f)?;
            match curve.iter().position(|v| !v.is_finite()) {
                Some(step) => Outcome::Diverged(step),
                None => Outcome::Curve(curve),
            }
        }
        Err(reskit_core::Error::Divergence { step }) => Outcome::Diverged(step),
        Err(e) => return Err(e.into()),
    };
    Ok(Run {
        outcome,
        train_s,
        forecast_s,
        jittered: model.jittered(),
    })
}

pub fn run_prediction(cfg: &Config) -> Result<ResultRecord, ExperimentError> {
    let algorithms = cfg.list::<String>("algorithms")?;
    if algorithms.is_empty() {
        return Err(ConfigError::Invalid("`algorithms` must not be empty".into()).into());
    }
    for a in &algorithms {
        if a != "rk" {
            parse_backend(a)?;
        }
    }
    let tau = require_positive("tau", cfg.get::<usize>("tau")?)?;
    let rk_windows = require_positive("rk_windows", cfg.get::<usize>("rk_windows")?)?;
    let started = Instant::now();
    let setup = Setup::from_config(cfg, if algorithms.iter().any(|a| a == "rk") { tau } else { 1 })?;

    let cells: Vec<(String, u64)> = algorithms
        .iter()
        .flat_map(|a| setup.seeds.iter().map(move |&s| (a.clone(), s)))
        .collect();
    let runs: Vec<Result<Run, ExperimentError>> = cells
        .par_iter()
        .map(|(a, s)| closed_loop(&setup, a, *s, tau, rk_windows))
        .collect();

    let mut results = Table::new(
        "results",
        &["algorithm", "lyapunov_times", "step", "nmse", "status", "train_seconds", "forecast_seconds"],
    )
    .with_timing(&["train_seconds", "forecast_seconds"]);
    let mut curves = Table::new("nmse", &["algorithm", "step", "lyapunov_times", "nmse"]);
    let mut rec_notes = Vec::new();
    let spl = setup.prep.steps_per_lyapunov_time();
    let mut per_alg: Vec<(String, Vec<Vec<f64>>)> = algorithms.iter().map(|a| (a.clone(), Vec::new())).collect();
    for ((alg, seed), run) in cells.iter().zip(runs) {
        let run = run?;
        if run.jittered {
            rec_notes.push(format!("{alg} seed {seed}: ridge needed jitter"));
        }
        let timing = [Cell::from(run.train_s), Cell::from(run.forecast_s)];
        match &run.outcome {
            Outcome::Curve(c) => {
                for &lt in &setup.lt_marks {
                    if let Some(i) = setup.mark_index(lt) {
                        let mut row = vec![alg.as_str().into(), lt.into(), (i + 1).into(), c[i].into(), "ok".into()];
                        row.extend(timing.iter().cloned());
                        results.push(*seed, row);
                    }
                }
                for (i, v) in c.iter().enumerate() {
                    curves.push(*seed, vec![alg.as_str().into(), (i + 1).into(), ((i + 1) as f64 / spl).into(), (*v).into()]);
                }
                per_alg.iter_mut().find(|(a, _)| a == alg).expect("listed").1.push(c.clone());
            }
            Outcome::Diverged(step) => {
                rec_notes.push(format!("{alg} seed {seed}: forecast diverged at step {step}"));
                for &lt in &setup.lt_marks {
                    if let Some(i) = setup.mark_index(lt) {
                        let mut row = vec![alg.as_str().into(), lt.into(), (i + 1).into(), f64::INFINITY.into(), "diverged".into()];
                        row.extend(timing.iter().cloned());
                        results.push(*seed, row);
                    }
                }
            }
        }
    }
    for (alg, cs) in &per_alg {
        for (i, v) in mean_curve(cs).iter().enumerate() {
            curves.push_aggregate(vec![alg.as_str().into(), (i + 1).into(), ((i + 1) as f64 / spl).into(), (*v).into()]);
        }
    }
    let mut rec = ResultRecord::new(Experiment::Predict, cfg, results);
    rec.curves.push(curves);
    rec.notes = rec_notes;
    rec.notes.push(format!(
        "lyapunov exponent {:.5}, {:.2} steps per Lyapunov time, normalizer {:.6e}",
        setup.prep.lyapunov, spl, setup.normalizer
    ));
    rec.timings.push(("total".into(), started.elapsed().as_secs_f64()));
    Ok(rec)
}

/// Closed-loop and direct NMSE curves for one seed, plus the spread of the
/// direct forecast at its last step and of the truth there.
fn compare_strategies(setup: &Setup, backend: Backend, seed: u64) -> Result<(Option<Vec<f64>>, Vec<f64>, f64, f64), ExperimentError> {
    let h = setup.horizon;
    let d = setup.prep.data.ncols();
    let warms = setup.warms();
    let mut res = Reservoir::new(setup.params(backend, seed))?;
    let one = train_reservoir_readout(&mut res, &setup.train_segments(), setup.warmup, setup.r, setup.alpha, 1)?;
    let closed = match forecast_closed_loop_batch(&one, Machinery::Reservoir(&mut res), &warms, h) {
        Ok(f) => Some(setup.score(&f)?).filter(|c| c.iter().all(|v| v.is_finite())),
        Err(reskit_core::Error::Divergence { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let multi = train_reservoir_readout(&mut res, &setup.train_segments(), setup.warmup, setup.r, setup.alpha, h)?;
    let mut direct = Vec::with_capacity(warms.len());
    for w in &warms {
        let mut x = vec![0.0; res.state_len()];
        for t in 0..w.nrows() {
            res.step_in_place(&mut x, w.row(t).as_slice().expect("contiguous rows"), t)?;
        }
        let last = w.row(w.nrows() - 1).to_vec();
        direct.push(forecast_direct(&multi, &concat_state(&x, &last, setup.r), d, h)?);
    }
    let direct_curve = setup.score(&direct)?;
    let spread = |frames: Vec<ndarray::ArrayView1<'_, f64>>| {
        let all: Vec<f64> = frames.iter().flat_map(|f| f.iter().copied()).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64
    };
    let pred_var = spread(direct.iter().map(|f| f.row(h - 1)).collect());
    let truth_var = spread(setup.starts.iter().map(|&s0| setup.prep.data.row(s0 + h - 1)).collect());
    Ok((closed, direct_curve, pred_var, truth_var))
}

pub fn run_recursive_vs_direct(cfg: &Config) -> Result<ResultRecord, ExperimentError> {
    let backend = parse_backend(&cfg.get::<String>("backend")?)?;
    let started = Instant::now();
    let setup = Setup::from_config(cfg, 1)?;
    let h = setup.horizon;
    let mut results = Table::new("results", &["strategy", "lyapunov_times", "step", "nmse", "pred_var", "truth_var"]);
    let mut curves = Table::new("nmse", &["strategy", "step", "lyapunov_times", "nmse"]);
    let spl = setup.prep.steps_per_lyapunov_time();
    let mut notes = Vec::new();
    if h > 0 {
        let runs: Vec<_> = setup.seeds.par_iter().map(|&s| compare_strategies(&setup, backend, s)).collect();
        for (&seed, run) in setup.seeds.iter().zip(runs) {
            let (closed, direct, pred_var, truth_var) = run?;
            if closed.is_none() {
                notes.push(format!("seed {seed}: closed-loop forecast diverged"));
            }
            let closed = closed.unwrap_or_else(|| vec![f64::INFINITY; h]);
            for (name, c) in [("closed_loop", &closed), ("direct", &direct)] {
                for &lt in &setup.lt_marks {
                    if let Some(i) = setup.mark_index(lt) {
                        let (pv, tv) = if name == "direct" { (pred_var, truth_var) } else { (f64::NAN, truth_var) };
                        results.push(seed, vec![name.into(), lt.into(), (i + 1).into(), c[i].into(), pv.into(), tv.into()]);
                    }
                }
                for (i, v) in c.iter().enumerate() {
                    curves.push(seed, vec![name.into(), (i + 1).into(), ((i + 1) as f64 / spl).into(), (*v).into()]);
                }
            }
        }
    }
    let mut rec = ResultRecord::new(Experiment::RecDirect, cfg, results);
    rec.curves.push(curves);
    rec.notes = notes;
    rec.timings.push(("total".into(), started.elapsed().as_secs_f64()));
    Ok(rec)
}
