//! Sensitivity to initialization: two reservoirs (or two kernel Grams)
//! started apart and driven by the same KS input.

use ndarray::{s, Array2};
use rayon::prelude::*;
use reskit_core::kernel::{iterate_gram, RkConfig, RkState, WindowSet};
use reskit_core::reservoir::random_state;
use reskit_core::{Activation, Reservoir, ReservoirParams};

use super::data::prepare_series;
use super::{parse_seeds, Cell, Experiment, ExperimentError, ResultRecord, Table};
use crate::config::{require_positive, Config, ConfigError};

pub(super) const DEFAULTS: &[(&str, &str)] = &[
    ("activation", "erf"),
    ("n", "1000"),
    ("sigma_r2", "0.49,1,2.25"),
    ("sigma_i2", "0.01"),
    ("sigma_b2", "0"),
    ("horizon", "200"),
    ("record_t", "100"),
    ("rk_sigma_r2", "0.25,0.49,1"),
    ("rk_windows", "50"),
    ("rk_tau", "50"),
];

/// `‖a − b‖² / ‖a₀ − b₀‖²` along two trajectories.
fn normalized(dists: Vec<f64>) -> Vec<f64> {
    let d0 = dists[0];
    dists.into_iter().map(|d| if d0 > 0.0 { d / d0 } else { d }).collect()
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Normalized squared distance between two reservoirs from different random
/// states, for `t = 0..=inputs.nrows()`.
pub fn reservoir_distance(params: ReservoirParams, inputs: ndarray::ArrayView2<'_, f64>) -> Result<Vec<f64>, ExperimentError> {
    let mut res = Reservoir::new(params.clone())?;
    let s = res.state_len();
    let mut states = Array2::zeros((2, s));
    states.row_mut(0).assign(&ndarray::ArrayView1::from(&random_state(&params, 0)[..]));
    states.row_mut(1).assign(&ndarray::ArrayView1::from(&random_state(&params, 1)[..]));
    let mut dists = vec![sq_dist(states.row(0), states.row(1))];
    let mut pair = Array2::zeros((2, params.d));
    for t in 0..inputs.nrows() {
        pair.row_mut(0).assign(&inputs.row(t));
        pair.row_mut(1).assign(&inputs.row(t));
        res.step_batch(states.view_mut(), pair.view(), t)?;
        dists.push(sq_dist(states.row(0), states.row(1)));
    }
    Ok(normalized(dists))
}

/// Normalized squared Frobenius distance between kernel Grams iterated from
/// all-ones and all-zeros, for `t = 0..=τ`.
pub fn kernel_distance(windows: &WindowSet, cfg: &RkConfig) -> Result<Vec<f64>, ExperimentError> {
    let n = windows.len();
    let mut a = RkState::filled(n, n, 1.0);
    let mut b = RkState::zeros(n, n);
    let frob = |a: &RkState, b: &RkState| (&a.gram - &b.gram).iter().map(|v| v * v).sum::<f64>();
    let mut dists = vec![frob(&a, &b)];
    for step in 0..windows.tau() {
        // one update over frame `step` of every window
        let ends: Vec<usize> = windows.ends().iter().map(|e| e + 1 + step - windows.tau()).collect();
        let single = WindowSet::new(windows.frames().to_owned(), ends, 1)?;
        a = iterate_gram(&single, None, cfg, a)?;
        b = iterate_gram(&single, None, cfg, b)?;
        dists.push(frob(&a, &b));
    }
    Ok(normalized(dists))
}

pub fn run_stability(cfg: &Config) -> Result<ResultRecord, ExperimentError> {
    let act_name: String = cfg.get("activation")?;
    let activation = Activation::parse(&act_name).ok_or_else(|| ConfigError::Parse {
        key: "activation".into(),
        value: act_name.clone(),
    })?;
    let n = require_positive("n", cfg.get::<usize>("n")?)?;
    let sigma_r2 = cfg.list::<f64>("sigma_r2")?;
    let sigma_i2: f64 = cfg.get("sigma_i2")?;
    let sigma_b2: f64 = cfg.get("sigma_b2")?;
    let horizon = require_positive("horizon", cfg.get::<usize>("horizon")?)?;
    let record_t: usize = cfg.get("record_t")?;
    let rk_sigma_r2 = cfg.list::<f64>("rk_sigma_r2")?;
    let rk_windows = require_positive("rk_windows", cfg.get::<usize>("rk_windows")?)?;
    let rk_tau = require_positive("rk_tau", cfg.get::<usize>("rk_tau")?)?;
    let seeds = parse_seeds(cfg)?;
    if record_t > horizon {
        return Err(ConfigError::Invalid("`record_t` must not exceed `horizon`".into()).into());
    }
    let started = std::time::Instant::now();
    let rows = horizon.max(rk_windows * rk_tau) + 1;
    let prep = prepare_series(cfg, rows, usize::MAX)?;
    let data = prep.data.view();
    let (total, d) = data.dim();

    let mut results = Table::new("results", &["machine", "sigma_r2", "t", "distance"]);
    let mut curves = Table::new("distance", &["machine", "sigma_r2", "t", "distance"]);

    for &sr2 in &sigma_r2 {
        let runs: Vec<Result<Vec<f64>, ExperimentError>> = seeds
            .par_iter()
            .map(|&seed| {
                // each seed reads its own stretch of the trajectory
                let start = (seed as usize).wrapping_mul(7919) % (total - horizon);
                let params = ReservoirParams::new(n, d, activation)
                    .with_sigmas(sr2.sqrt(), sigma_i2.sqrt(), sigma_b2.sqrt())
                    .with_seed(seed);
                reservoir_distance(params, data.slice(s![start..start + horizon, ..]))
            })
            .collect();
        let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
        for (seed, r) in seeds.iter().zip(&runs) {
            results.push(*seed, vec!["rc".into(), sr2.into(), record_t.into(), r[record_t].into()]);
        }
        for t in 0..=horizon {
            let mean = runs.iter().map(|r| r[t]).sum::<f64>() / runs.len() as f64;
            curves.push_aggregate(vec!["rc".into(), sr2.into(), t.into(), mean.into()]);
        }
    }

    if let Some(kind) = activation.kernel() {
        // disjoint windows spread over the trajectory
        let stride = (total - 1) / rk_windows;
        let ends: Vec<usize> = (0..rk_windows).map(|k| k * stride + rk_tau - 1).collect();
        let windows = WindowSet::new(prep.data.clone(), ends, rk_tau)?;
        for &sr2 in &rk_sigma_r2 {
            let rk = RkConfig::new(kind, sr2, sigma_i2, sigma_b2);
            let dist = kernel_distance(&windows, &rk)?;
            results.push(seeds[0], vec!["rk".into(), sr2.into(), rk_tau.into(), dist[rk_tau].into()]);
            for (t, v) in dist.iter().enumerate() {
                curves.push_aggregate(vec![Cell::from("rk"), sr2.into(), t.into(), (*v).into()]);
            }
        }
    }

    let mut rec = ResultRecord::new(Experiment::Stability, cfg, results);
    rec.curves.push(curves);
    rec.timings.push(("total".into(), started.elapsed().as_secs_f64()));
    Ok(rec)
}
