//! Finite reservoirs against their recurrent-kernel limit.
//!
//! `series` Gaussian input series of length `length` drive `series`
//! reservoirs that share one weight draw. At each recorded time the Gram of
//! reservoir states is compared with the kernel recursion over the same
//! inputs. Optionally a high-probability error bound is checked over many
//! independent trials.

use ndarray::{s, Array2, Array3};
use rayon::prelude::*;
use reskit_core::kernel::{rk_update_ri, rk_update_ti, KernelFamily, RkConfig, RkState};
use reskit_core::rng::{self, Purpose};
use reskit_core::{lipschitz_constant, Activation, Backend, Reservoir, ReservoirParams};

use super::{loglog_slope, parse_flags, parse_seeds, Experiment, ExperimentError, ResultRecord, Table};
use crate::config::{require_positive, Config, ConfigError};

pub(super) const DEFAULTS: &[(&str, &str)] = &[
    ("activations", "erf,rff,relu"),
    ("backends", "rc,src"),
    ("sigma_r2", "0.25,1,4"),
    ("sigma_i2", "1"),
    ("sigma_b2", "0"),
    ("n_list", "64,128,256,512,1024,2048,4096,8192"),
    ("redraw", "off"),
    ("series", "50"),
    ("input_dim", "50"),
    ("length", "10"),
    ("record", "2,5,10"),
    ("bound_trials", "0"),
    ("bound_n", "1024"),
    ("bound_sigma_r2", "0.25"),
    ("bound_delta", "0.05"),
    ("bound_activations", "erf,rff"),
];

fn parse_activations(cfg: &Config, key: &str) -> Result<Vec<Activation>, ConfigError> {
    cfg.list::<String>(key)?
        .into_iter()
        .map(|s| {
            let a = Activation::parse(&s).ok_or_else(|| ConfigError::Parse {
                key: key.into(),
                value: s.clone(),
            })?;
            if a.kernel().is_none() {
                return Err(ConfigError::Invalid(format!("activation `{s}` has no recurrent kernel")));
            }
            Ok(a)
        })
        .collect()
}

pub(super) fn parse_backend(s: &str) -> Result<Backend, ConfigError> {
    match s {
        "rc" => Ok(Backend::Dense),
        "src" => Ok(Backend::Structured),
        _ => Err(ConfigError::Parse {
            key: "backends".into(),
            value: s.into(),
        }),
    }
}

pub(super) fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Dense => "rc",
        Backend::Structured => "src",
    }
}

/// `count × length × d` Gaussian inputs with variance `1/d` per entry, so
/// each frame has unit expected squared norm.
fn gaussian_inputs(seed: u64, index: u64, count: usize, length: usize, d: usize) -> Array3<f64> {
    let mut v = vec![0.0; count * length * d];
    rng::fill_gaussian(&mut rng::stream(seed, Purpose::Inputs, index), &mut v, 1.0 / (d as f64).sqrt());
    Array3::from_shape_vec((count, length, d), v).expect("sized above")
}

/// Kernel Gram after every step `1..=length` for the given inputs.
fn kernel_trajectory(rk: &RkConfig, inputs: &Array3<f64>) -> Result<Vec<RkState>, ExperimentError> {
    let (k, length, _) = inputs.dim();
    let mut state = RkState::zeros(k, k);
    let mut out = Vec::with_capacity(length);
    for t in 0..length {
        let frame = inputs.slice(s![.., t, ..]);
        let dots = frame.dot(&frame.t());
        let norms: Vec<f64> = (0..k).map(|j| dots[[j, j]]).collect();
        match rk.kind.family() {
            KernelFamily::RotationInvariant => {
                let l = dots.mapv(|v| rk.sigma_i2 * v + rk.sigma_b2);
                let ls: Vec<f64> = norms.iter().map(|v| rk.sigma_i2 * v + rk.sigma_b2).collect();
                rk_update_ri(rk, &mut state, l.view(), &ls, &ls)?;
            }
            KernelFamily::TranslationInvariant => {
                let delta = Array2::from_shape_fn((k, k), |(a, b)| {
                    rk.sigma_i2 * (norms[a] + norms[b] - 2.0 * dots[[a, b]]).max(0.0)
                });
                rk_update_ti(rk, &mut state, delta.view())?;
            }
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// Reservoir state Grams after every step `1..=length`.
fn reservoir_trajectory(params: ReservoirParams, inputs: &Array3<f64>) -> Result<Vec<Array2<f64>>, ExperimentError> {
    let (k, length, _) = inputs.dim();
    let mut res = Reservoir::new(params)?;
    let mut states = Array2::zeros((k, res.state_len()));
    let mut out = Vec::with_capacity(length);
    for t in 0..length {
        res.step_batch(states.view_mut(), inputs.slice(s![.., t, ..]), t)?;
        out.push(states.dot(&states.t()));
    }
    Ok(out)
}

fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let d = a - b;
    d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64
}

/// High-probability deviation bound between a width-`n` reservoir and its
/// kernel after `t ≥ 1` updates, for activations bounded by `kappa`:
/// `(1 + Λ + … + Λ^{t−1}) Θ(n)` with
/// `Θ(n) = 4κ² log(1/δ)/(3n) + 2κ² √(2 log(1/δ)/n)`.
pub fn deviation_bound(n: usize, t: usize, lambda: f64, delta: f64, kappa: f64) -> f64 {
    let log = (1.0 / delta).ln();
    let n = n as f64;
    let k2 = kappa * kappa;
    let theta = 4.0 * k2 * log / (3.0 * n) + 2.0 * k2 * (2.0 * log / n).sqrt();
    let geometric = if (lambda - 1.0).abs() < 1e-12 {
        t as f64
    } else {
        (1.0 - lambda.powi(t as i32)) / (1.0 - lambda)
    };
    geometric * theta
}

struct Cell {
    activation: Activation,
    sigma_r2: f64,
    backend: Backend,
    redraw: bool,
    n: usize,
    seed: u64,
}

pub fn run_convergence(cfg: &Config) -> Result<ResultRecord, ExperimentError> {
    let activations = parse_activations(cfg, "activations")?;
    let backends = cfg
        .list::<String>("backends")?
        .iter()
        .map(|s| parse_backend(s))
        .collect::<Result<Vec<_>, _>>()?;
    let sigma_r2 = cfg.list::<f64>("sigma_r2")?;
    let sigma_i2: f64 = cfg.get("sigma_i2")?;
    let sigma_b2: f64 = cfg.get("sigma_b2")?;
    let n_list = cfg.list::<usize>("n_list")?;
    let redraws = parse_flags(cfg, "redraw")?;
    let series = require_positive("series", cfg.get::<usize>("series")?)?;
    let d = require_positive("input_dim", cfg.get::<usize>("input_dim")?)?;
    let length = require_positive("length", cfg.get::<usize>("length")?)?;
    let record = cfg.list::<usize>("record")?;
    let seeds = parse_seeds(cfg)?;
    if record.iter().any(|&t| t == 0 || t > length) {
        return Err(ConfigError::Invalid("`record` times must lie in 1..=length".into()).into());
    }
    if n_list.contains(&0) {
        return Err(ConfigError::Invalid("`n_list` entries must be positive".into()).into());
    }
    if sigma_r2.iter().chain([&sigma_i2, &sigma_b2]).any(|v| !(*v >= 0.0)) {
        return Err(ConfigError::Invalid("variances must be non-negative".into()).into());
    }

    let started = std::time::Instant::now();
    let inputs: Vec<Array3<f64>> = seeds.iter().map(|&s| gaussian_inputs(s, 0, series, length, d)).collect();

    // kernel references, one per (activation, σ_r², seed)
    let mut refs = Vec::new();
    for &a in &activations {
        for &sr2 in &sigma_r2 {
            for (si, _) in seeds.iter().enumerate() {
                let rk = RkConfig::new(a.kernel().expect("checked"), sr2, sigma_i2, sigma_b2);
                refs.push(((a, sr2.to_bits(), si), kernel_trajectory(&rk, &inputs[si])?));
            }
        }
    }
    let reference = |a: Activation, sr2: f64, si: usize| -> &Vec<RkState> {
        &refs.iter().find(|(k, _)| *k == (a, sr2.to_bits(), si)).expect("built above").1
    };

    let mut cells = Vec::new();
    for &activation in &activations {
        for &sr2 in &sigma_r2 {
            for &backend in &backends {
                for &redraw in &redraws {
                    for &n in &n_list {
                        for &seed in &seeds {
                            cells.push(Cell {
                                activation,
                                sigma_r2: sr2,
                                backend,
                                redraw,
                                n,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    let results: Vec<Result<Vec<f64>, ExperimentError>> = cells
        .par_iter()
        .map(|c| {
            let si = seeds.iter().position(|&s| s == c.seed).expect("seed from list");
            let params = ReservoirParams::new(c.n, d, c.activation)
                .with_sigmas(c.sigma_r2.sqrt(), sigma_i2.sqrt(), sigma_b2.sqrt())
                .with_backend(c.backend)
                .with_redraw(c.redraw)
                .with_seed(c.seed);
            let grams = reservoir_trajectory(params, &inputs[si])?;
            let kernel = reference(c.activation, c.sigma_r2, si);
            Ok(record.iter().map(|&t| mse(&grams[t - 1], &kernel[t - 1].gram)).collect())
        })
        .collect();

    let mut table = Table::new("results", &["activation", "sigma_r2", "backend", "redraw", "n", "t", "mse"]);
    for (c, r) in cells.iter().zip(results) {
        for (&t, m) in record.iter().zip(r?) {
            table.push(
                c.seed,
                vec![
                    c.activation.name().into(),
                    c.sigma_r2.into(),
                    backend_name(c.backend).into(),
                    (if c.redraw { "on" } else { "off" }).into(),
                    c.n.into(),
                    t.into(),
                    m.into(),
                ],
            );
        }
    }

    let mut slopes = Table::new("slopes", &["activation", "sigma_r2", "backend", "redraw", "t", "slope"]);
    let ns: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    if n_list.len() >= 2 {
        for &a in &activations {
            for &sr2 in &sigma_r2 {
                for &b in &backends {
                    for &rd in &redraws {
                        for &t in &record {
                            for &seed in &seeds {
                                let rd_s = if rd { "on" } else { "off" };
                                let sr2_s = sr2.to_string();
                                let t_s = t.to_string();
                                let seed_s = seed.to_string();
                                let ms: Vec<f64> = n_list
                                    .iter()
                                    .map(|n| {
                                        let n_s = n.to_string();
                                        table.values(
                                            "mse",
                                            &[
                                                ("activation", a.name()),
                                                ("sigma_r2", &sr2_s),
                                                ("backend", backend_name(b)),
                                                ("redraw", rd_s),
                                                ("n", &n_s),
                                                ("t", &t_s),
                                                ("seed", &seed_s),
                                            ],
                                        )[0]
                                    })
                                    .collect();
                                slopes.push(
                                    seed,
                                    vec![
                                        a.name().into(),
                                        sr2.into(),
                                        backend_name(b).into(),
                                        rd_s.into(),
                                        t.into(),
                                        loglog_slope(&ns, &ms).into(),
                                    ],
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    let mut record_out = ResultRecord::new(Experiment::Convergence, cfg, table);
    record_out.curves.push(slopes);
    let trials: usize = cfg.get("bound_trials")?;
    if trials > 0 {
        record_out.curves.push(bound_check(cfg, trials, d, length, sigma_i2, sigma_b2, seeds[0])?);
    }
    record_out.timings.push(("total".into(), started.elapsed().as_secs_f64()));
    Ok(record_out)
}

/// Fraction of trials in which `|⟨x, y⟩ − k_t|` exceeds [`deviation_bound`],
/// with fresh weights at every step as the bound assumes.
fn bound_check(
    cfg: &Config,
    trials: usize,
    d: usize,
    length: usize,
    sigma_i2: f64,
    sigma_b2: f64,
    seed: u64,
) -> Result<Table, ExperimentError> {
    let n: usize = require_positive("bound_n", cfg.get("bound_n")?)?;
    let sr2: f64 = cfg.get("bound_sigma_r2")?;
    let delta: f64 = cfg.get("bound_delta")?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConfigError::Invalid("`bound_delta` must lie in (0, 1)".into()).into());
    }
    let activations = parse_activations(cfg, "bound_activations")?;
    let mut table = Table::new(
        "bound",
        &["activation", "t", "lipschitz", "bound", "violations", "trials", "fraction", "allowed"],
    );
    for a in activations {
        if !a.is_bounded() {
            return Err(ConfigError::Invalid(format!("bound check needs a bounded activation, got {}", a.name())).into());
        }
        let kind = a.kernel().expect("checked");
        let rk = RkConfig::new(kind, sr2, sigma_i2, sigma_b2);
        let runs: Vec<Result<(Vec<f64>, f64, f64), ExperimentError>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let inputs = gaussian_inputs(seed, 1 + trial as u64, 2, length, d);
                let kernel = kernel_trajectory(&rk, &inputs)?;
                let params = ReservoirParams::new(n, d, a)
                    .with_sigmas(sr2.sqrt(), sigma_i2.sqrt(), sigma_b2.sqrt())
                    .with_redraw(true)
                    .with_seed(seed.wrapping_add(1_000_003 * (trial as u64 + 1)));
                let grams = reservoir_trajectory(params, &inputs)?;
                let errs = grams.iter().zip(&kernel).map(|(g, k)| (g[[0, 1]] - k.gram[[0, 1]]).abs()).collect();
                // squared norms of the kernel arguments seen along the way
                let mut lo = f64::INFINITY;
                let mut hi: f64 = 0.0;
                let mut prev = [0.0, 0.0];
                for (t, k) in kernel.iter().enumerate() {
                    for j in 0..2 {
                        let frame = inputs.slice(s![j, t, ..]);
                        let sq = sr2 * prev[j] + sigma_i2 * frame.dot(&frame) + sigma_b2;
                        lo = lo.min(sq);
                        hi = hi.max(sq);
                        prev[j] = k.diag_u[j];
                    }
                }
                Ok((errs, lo, hi))
            })
            .collect();
        let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
        let lo = runs.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let hi = runs.iter().map(|r| r.2).fold(0.0, f64::max);
        let lip = lipschitz_constant(kind, lo, hi);
        let lambda = match kind.family() {
            KernelFamily::RotationInvariant => sr2 * lip,
            KernelFamily::TranslationInvariant => 2.0 * sr2 * lip,
        };
        for t in 1..=length {
            let bound = deviation_bound(n, t, lambda, delta, 1.0);
            let violations = runs.iter().filter(|r| r.0[t - 1] > bound).count();
            table.push(
                seed,
                vec![
                    a.name().into(),
                    t.into(),
                    lip.into(),
                    bound.into(),
                    violations.into(),
                    trials.into(),
                    (violations as f64 / trials as f64).into(),
                    (2.0 * t as f64 * delta).into(),
                ],
            );
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_geometric_factor() {
        let one = deviation_bound(100, 1, 0.5, 0.1, 1.0);
        assert!((deviation_bound(100, 3, 0.5, 0.1, 1.0) - 1.75 * one).abs() < 1e-12);
        assert!((deviation_bound(100, 4, 1.0, 0.1, 1.0) - 4.0 * one).abs() < 1e-12);
    }

    #[test]
    fn zero_scales_give_zero_error() {
        let mut c = Experiment::Convergence.default_config();
        for (k, v) in [
            ("activations", "erf"),
            ("backends", "rc"),
            ("sigma_r2", "0"),
            ("sigma_i2", "0"),
            ("sigma_b2", "0"),
            ("n_list", "16"),
            ("series", "4"),
            ("input_dim", "3"),
            ("length", "3"),
            ("record", "1,3"),
        ] {
            c.set(k, v).unwrap();
        }
        let r = run_convergence(&c).unwrap();
        assert_eq!(r.results.values("mse", &[]), vec![0.0, 0.0]);
    }

    #[test]
    fn kernel_without_closed_form_is_a_config_error() {
        let mut c = Experiment::Convergence.default_config();
        c.set("activations", "tanh").unwrap();
        assert!(matches!(run_convergence(&c), Err(ExperimentError::Config(_))));
    }
}
