//! KS input data shared by the stability and forecasting experiments.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use super::ExperimentError;
use crate::config::{Config, ConfigError};
use crate::dataset::load_dataset;
use crate::ks::{estimate_lyapunov, simulate_ks, Dataset, KsConfig, LyapunovOptions};

/// A rescaled KS trajectory plus what is needed to express time in
/// Lyapunov units.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Array2<f64>,
    /// Time between rows.
    pub dt: f64,
    /// Measured largest Lyapunov exponent per unit time.
    pub lyapunov: f64,
    /// `(offset, scale)` with `data = (raw − offset) / scale`.
    pub transform: (f64, f64),
}

impl Prepared {
    pub fn steps_per_lyapunov_time(&self) -> f64 {
        lyapunov_steps(self.lyapunov, self.dt)
    }
}

/// Rows per Lyapunov time, `1 / (λ Δt)`.
pub fn lyapunov_steps(lambda: f64, dt: f64) -> f64 {
    1.0 / (lambda * dt)
}

pub fn ks_config(cfg: &Config) -> Result<KsConfig, ConfigError> {
    Ok(KsConfig {
        l: cfg.get("ks_l")?,
        grid: cfg.get("ks_grid")?,
        dt: cfg.get("ks_dt")?,
        subsample: cfg.get("ks_subsample")?,
        transient: cfg.get("ks_transient")?,
        seed: cfg.get("ks_seed")?,
        amplitude: cfg.get("ks_amplitude")?,
    })
}

pub fn lyapunov_options(cfg: &Config) -> Result<LyapunovOptions, ConfigError> {
    Ok(LyapunovOptions {
        probes: cfg.get("lyap_probes")?,
        horizon: cfg.get("lyap_horizon")?,
        renorm_every: cfg.get("lyap_renorm")?,
        perturbation: cfg.get("lyap_perturbation")?,
    })
}

/// Loads `dataset` when set, otherwise integrates `ks_steps` frames. A
/// missing exponent is measured with the `lyap_*` options.
pub fn load_or_simulate(cfg: &Config, min_rows: usize) -> Result<Dataset, ExperimentError> {
    let path: String = cfg.get("dataset")?;
    let mut ds = if path.is_empty() {
        let steps: usize = cfg.get("ks_steps")?;
        simulate_ks(&ks_config(cfg)?, steps.max(min_rows))?
    } else {
        load_dataset(Path::new(&path))?
    };
    if ds.series.len() < min_rows {
        return Err(ConfigError::Invalid(format!(
            "dataset has {} rows, the experiment needs {min_rows}",
            ds.series.len()
        ))
        .into());
    }
    if ds.lyapunov.is_none() {
        ds.lyapunov = Some(estimate_lyapunov(&ds.config, &lyapunov_options(cfg)?)?.lambda);
    }
    Ok(ds)
}

/// Rescales with statistics from the first `fit_rows` rows only:
/// `minmax` maps them onto `[−1, 1]`, `standard` to zero mean and unit
/// variance (both global over the grid), `unit_norm` to zero mean and unit
/// RMS frame norm, `none` keeps raw values. The result is then multiplied by
/// `input_scale`.
pub fn prepare_series(cfg: &Config, min_rows: usize, fit_rows: usize) -> Result<Prepared, ExperimentError> {
    let ds = load_or_simulate(cfg, min_rows)?;
    let raw = &ds.series.data;
    let fit = raw.slice(ndarray::s![..fit_rows.clamp(1, raw.nrows()), ..]);
    let mode: String = cfg.get("normalize")?;
    let transform = match mode.as_str() {
        "minmax" => {
            let (lo, hi) = fit.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            (0.5 * (lo + hi), (0.5 * (hi - lo)).max(f64::MIN_POSITIVE))
        }
        "standard" => {
            let mean = fit.mean().unwrap_or(0.0);
            let var = fit.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / fit.len() as f64;
            (mean, var.sqrt().max(f64::MIN_POSITIVE))
        }
        "unit_norm" => {
            let mean = fit.mean().unwrap_or(0.0);
            let sq = fit.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / fit.nrows() as f64;
            (mean, sq.sqrt().max(f64::MIN_POSITIVE))
        }
        "none" => (0.0, 1.0),
        _ => {
            return Err(ConfigError::Parse {
                key: "normalize".into(),
                value: mode,
            }
            .into())
        }
    };
    let gain: f64 = cfg.get("input_scale")?;
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(ConfigError::Invalid("`input_scale` must be positive".into()).into());
    }
    let transform = (transform.0, transform.1 / gain);
    let (off, scale) = transform;
    Ok(Prepared {
        data: raw.mapv(|v| (v - off) / scale),
        dt: ds.series.dt,
        lyapunov: ds.lyapunov.expect("filled by load_or_simulate"),
        transform,
    })
}

/// Expected per-point MSE between two independent states of a stationary
/// series, `2 · mean_k Var(u_k)`, estimated from `data`.
pub fn independent_mse(data: ArrayView2<'_, f64>) -> f64 {
    let var = data.var_axis(Axis(0), 0.0);
    2.0 * var.mean().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn independent_mse_of_known_variance() {
        let d = array![[1.0, 0.0], [-1.0, 2.0]];
        // variances 1 and 1
        assert_eq!(independent_mse(d.view()), 2.0);
    }
}
