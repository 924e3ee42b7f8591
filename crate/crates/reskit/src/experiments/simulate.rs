//! Generates a KS dataset, measures its Lyapunov exponent and attaches it to
//! the record so the CLI can save it for the other experiments.

use std::time::Instant;

use super::data::{ks_config, lyapunov_options, lyapunov_steps};
use super::{parse_flag, parse_seeds, Experiment, ExperimentError, ResultRecord, Table};
use crate::config::Config;
use crate::ks::{estimate_lyapunov, simulate_ks};

pub fn run_simulate_ks(cfg: &Config) -> Result<ResultRecord, ExperimentError> {
    let ks = ks_config(cfg)?;
    let steps: usize = cfg.get("ks_steps")?;
    let opts = lyapunov_options(cfg)?;
    let seed = parse_seeds(cfg)?[0];
    parse_flag(cfg, "write_series")?;
    let t0 = Instant::now();
    let mut ds = simulate_ks(&ks, steps)?;
    let sim_s = t0.elapsed().as_secs_f64();
    let est = estimate_lyapunov(&ks, &opts)?;
    ds.lyapunov = Some(est.lambda);
    let data = &ds.series.data;
    let mean = data.mean().unwrap_or(0.0);
    let std = data.std(0.0);

    let mut t = Table::new("results", &["quantity", "value"]);
    t.push(seed, vec!["lyapunov".into(), est.lambda.into()]);
    for (k, v) in est.per_probe.iter().enumerate() {
        t.push(seed, vec![format!("lyapunov_probe_{k}").into(), (*v).into()]);
    }
    t.push(seed, vec!["steps_per_lyapunov_time".into(), lyapunov_steps(est.lambda, ds.series.dt).into()]);
    t.push(seed, vec!["sample_dt".into(), ds.series.dt.into()]);
    t.push(seed, vec!["field_mean".into(), mean.into()]);
    t.push(seed, vec!["field_std".into(), std.into()]);
    t.push(seed, vec!["frames".into(), ds.series.len().into()]);

    let mut rec = ResultRecord::new(Experiment::SimulateKs, cfg, t);
    rec.timings.push(("simulate".into(), sim_s));
    rec.timings.push(("total".into(), t0.elapsed().as_secs_f64()));
    if est.decaying {
        rec.notes.push("negative exponent: the configuration is not chaotic".into());
    }
    rec.dataset = Some(ds);
    Ok(rec)
}
