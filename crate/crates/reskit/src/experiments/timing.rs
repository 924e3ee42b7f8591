//! Wall-clock cost of the forward pass, the readout fit and prediction for
//! dense and structured reservoirs and for the recurrent kernel.

use std::time::Instant;

use ndarray::{s, Array2};
use reskit_core::kernel::{build_gram_test, build_gram_train, RkConfig, WindowSet};
use reskit_core::learning::{forecast_closed_loop, ridge_fit, ridge_fit_dual, Machinery};
use reskit_core::rng::{self, Purpose};
use reskit_core::{Activation, Backend, Reservoir, ReservoirParams};

use super::convergence::{backend_name, parse_backend};
use super::{parse_seeds, Experiment, ExperimentError, ResultRecord, Table};
use crate::config::{require_positive, Config, ConfigError};

pub(super) const DEFAULTS: &[(&str, &str)] = &[
    ("algorithms", "rc,src,rk"),
    ("n_list", "1948,3996,8092"),
    ("input_dim", "100"),
    ("n_forward", "1000"),
    ("predict_steps", "200"),
    ("rk_n", "2000"),
    ("rk_m", "2000"),
    ("tau", "50"),
    ("sigma_r2", "0.81"),
    ("sigma_i2", "0.16"),
    ("sigma_b2", "0.16"),
    ("r", "1.1"),
    ("alpha", "0.01"),
    ("repeats", "5"),
    ("warmup_runs", "1"),
    ("phases", "forward,train,predict"),
    ("memory_limit_gb", "4"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Forward,
    Train,
    Predict,
}

impl Phase {
    fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "forward" => Ok(Phase::Forward),
            "train" => Ok(Phase::Train),
            "predict" => Ok(Phase::Predict),
            _ => Err(ConfigError::Parse {
                key: "phases".into(),
                value: s.into(),
            }),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Phase::Forward => "forward",
            Phase::Train => "train",
            Phase::Predict => "predict",
        }
    }
}

/// Median wall-clock seconds of `repeats` runs after `warmup` discarded ones.
fn median_time<F: FnMut() -> Result<(), ExperimentError>>(warmup: usize, repeats: usize, mut f: F) -> Result<f64, ExperimentError> {
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        f()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let m = times.len();
    Ok(if m % 2 == 1 {
        times[m / 2]
    } else {
        0.5 * (times[m / 2 - 1] + times[m / 2])
    })
}

struct Settings {
    d: usize,
    n_forward: usize,
    predict_steps: usize,
    rk_n: usize,
    rk_m: usize,
    tau: usize,
    sigmas: (f64, f64, f64),
    r: f64,
    alpha: f64,
    repeats: usize,
    warmup: usize,
    limit_bytes: f64,
}

/// Dominant allocations of one cell, in bytes.
fn footprint(alg: &str, n: usize, st: &Settings) -> f64 {
    let f = (n + st.d) as f64;
    match alg {
        "rc" => 8.0 * (n as f64 * f + st.n_forward as f64 * f + 2.0 * f * f),
        "src" => 8.0 * (st.n_forward as f64 * f + 2.0 * f * f),
        _ => 8.0 * (3.0 * (st.rk_n * st.rk_n) as f64 + (st.rk_n * st.rk_m) as f64 * 2.0),
    }
}

fn time_reservoir(backend: Backend, n: usize, phases: &[Phase], inputs: &Array2<f64>, seed: u64, st: &Settings) -> Result<Vec<f64>, ExperimentError> {
    let (sr, si, sb) = st.sigmas;
    let params = ReservoirParams::new(n, st.d, Activation::Erf)
        .with_sigmas(sr, si, sb)
        .with_backend(backend)
        .with_seed(seed);
    let mut res = Reservoir::new(params)?;
    let s_len = res.state_len();
    let nf = st.n_forward;
    let mut design = Array2::zeros((nf, s_len + st.d));
    let forward = |res: &mut Reservoir, design: &mut Array2<f64>| -> Result<(), ExperimentError> {
        let mut x = vec![0.0; s_len];
        for t in 0..nf {
            let i = inputs.row(t);
            let i = i.as_slice().expect("contiguous rows");
            res.step_in_place(&mut x, i, t)?;
            let mut row = design.row_mut(t);
            row.slice_mut(s![..s_len]).assign(&ndarray::ArrayView1::from(&x[..]));
            row.slice_mut(s![s_len..]).assign(&(&inputs.row(t) * st.r));
        }
        Ok(())
    };
    forward(&mut res, &mut design)?;
    let targets = inputs.slice(s![1..nf + 1, ..]).to_owned();
    let mut model = ridge_fit(design.view(), targets.view(), st.alpha)?;
    model.r = st.r;
    let mut out = Vec::new();
    for &p in phases {
        out.push(match p {
            Phase::Forward => median_time(st.warmup, st.repeats, || forward(&mut res, &mut design))?,
            Phase::Train => median_time(st.warmup, st.repeats, || {
                ridge_fit(design.view(), targets.view(), st.alpha)?;
                Ok(())
            })?,
            Phase::Predict => {
                let warm = inputs.slice(s![..nf, ..]);
                median_time(st.warmup, st.repeats, || {
                    // divergence is irrelevant for timing, only the cost counts
                    match forecast_closed_loop(&model, Machinery::Reservoir(&mut res), warm, st.predict_steps) {
                        Ok(_) | Err(reskit_core::Error::Divergence { .. }) => Ok(()),
                        Err(e) => Err(e.into()),
                    }
                })?
            }
        });
    }
    Ok(out)
}

fn time_kernel(phases: &[Phase], inputs: &Array2<f64>, st: &Settings) -> Result<Vec<f64>, ExperimentError> {
    let (sr, si, sb) = st.sigmas;
    let rk = RkConfig::new(reskit_core::KernelKind::ArcsineErf, sr * sr, si * si, sb * sb);
    let tau = st.tau;
    let train_ends: Vec<usize> = (0..st.rk_n).map(|k| k + tau - 1).collect();
    let train = WindowSet::new(inputs.clone(), train_ends.clone(), tau)?;
    let test_ends: Vec<usize> = (0..st.rk_m).map(|k| k + tau - 1).collect();
    let test = WindowSet::new(inputs.clone(), test_ends, tau)?;
    let targets = Array2::from_shape_fn((st.rk_n, st.d), |(k, j)| inputs[[train_ends[k] + 1, j]]);
    let gram = build_gram_train(&train, &rk)?;
    let model = ridge_fit_dual(gram.view(), targets.view(), st.alpha, st.r)?;
    let mut out = Vec::new();
    for &p in phases {
        out.push(match p {
            Phase::Forward => median_time(st.warmup, st.repeats, || {
                build_gram_train(&train, &rk)?;
                Ok(())
            })?,
            Phase::Train => median_time(st.warmup, st.repeats, || {
                ridge_fit_dual(gram.view(), targets.view(), st.alpha, st.r)?;
                Ok(())
            })?,
            Phase::Predict => median_time(st.warmup, st.repeats, || {
                let k = build_gram_test(&train, &test, &rk)?;
                let _ = model.weights.dot(&k);
                Ok(())
            })?,
        });
    }
    Ok(out)
}

pub fn run_timing(cfg: &Config) -> Result<ResultRecord, ExperimentError> {
    let algorithms = cfg.list::<String>("algorithms")?;
    for a in &algorithms {
        if a != "rk" {
            parse_backend(a)?;
        }
    }
    let n_list = cfg.list::<usize>("n_list")?;
    let phases = cfg
        .list::<String>("phases")?
        .iter()
        .map(|s| Phase::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = parse_seeds(cfg)?;
    let var = |k: &str| -> Result<f64, ConfigError> {
        let v: f64 = cfg.get(k)?;
        if v >= 0.0 {
            Ok(v.sqrt())
        } else {
            Err(ConfigError::Invalid(format!("`{k}` must be non-negative")))
        }
    };
    let st = Settings {
        d: require_positive("input_dim", cfg.get("input_dim")?)?,
        n_forward: require_positive("n_forward", cfg.get("n_forward")?)?,
        predict_steps: require_positive("predict_steps", cfg.get("predict_steps")?)?,
        rk_n: require_positive("rk_n", cfg.get("rk_n")?)?,
        rk_m: require_positive("rk_m", cfg.get("rk_m")?)?,
        tau: require_positive("tau", cfg.get("tau")?)?,
        sigmas: (var("sigma_r2")?, var("sigma_i2")?, var("sigma_b2")?),
        r: cfg.get("r")?,
        alpha: cfg.get("alpha")?,
        repeats: require_positive("repeats", cfg.get("repeats")?)?,
        warmup: cfg.get("warmup_runs")?,
        limit_bytes: cfg.get::<f64>("memory_limit_gb")? * 1e9,
    };
    let started = Instant::now();
    let mut table = Table::new("results", &["algorithm", "n", "phase", "seconds", "runs", "status"]).with_timing(&["seconds"]);
    let seed = seeds[0];
    let rows = (st.n_forward + 1).max(st.rk_n.max(st.rk_m) + st.tau + 1);
    let mut raw = vec![0.0; rows * st.d];
    rng::fill_gaussian(&mut rng::stream(seed, Purpose::Inputs, 0), &mut raw, 1.0 / (st.d as f64).sqrt());
    let inputs = Array2::from_shape_vec((rows, st.d), raw).expect("sized above");

    for alg in &algorithms {
        let sizes: Vec<usize> = if alg == "rk" { vec![st.rk_n] } else { n_list.clone() };
        for n in sizes {
            if footprint(alg, n, &st) > st.limit_bytes {
                for p in &phases {
                    table.push(seed, vec![alg.as_str().into(), n.into(), p.name().into(), f64::NAN.into(), 0usize.into(), "memory error".into()]);
                }
                continue;
            }
            let times = if alg == "rk" {
                time_kernel(&phases, &inputs, &st)?
            } else {
                let b = parse_backend(alg)?;
                debug_assert_eq!(backend_name(b), alg);
                time_reservoir(b, n, &phases, &inputs, seed, &st)?
            };
            for (p, t) in phases.iter().zip(times) {
                table.push(seed, vec![alg.as_str().into(), n.into(), p.name().into(), t.into(), st.repeats.into(), "ok".into()]);
            }
        }
    }
    let mut rec = ResultRecord::new(Experiment::Timing, cfg, table);
    rec.timings.push(("total".into(), started.elapsed().as_secs_f64()));
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_size_list_gives_no_reservoir_rows() {
        let mut c = Experiment::Timing.default_config();
        c.set("n_list", "").unwrap();
        c.set("algorithms", "rc,src").unwrap();
        let r = run_timing(&c).unwrap();
        assert!(r.results.rows.is_empty());
    }

    #[test]
    fn oversized_cells_are_reported_not_run() {
        let mut c = Experiment::Timing.default_config();
        for (k, v) in [("algorithms", "rc"), ("n_list", "64"), ("memory_limit_gb", "1e-9"), ("phases", "forward")] {
            c.set(k, v).unwrap();
        }
        let r = run_timing(&c).unwrap();
        assert_eq!(r.results.select(&[("status", "memory error")]).len(), 1);
    }

    #[test]
    fn median_of_odd_runs() {
        let mut k = 0;
        let m = median_time(1, 3, || {
            k += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(k, 4);
        assert!(m >= 0.0);
    }
}
