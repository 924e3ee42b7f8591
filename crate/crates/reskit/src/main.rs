use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use reskit::config::{Config, ConfigError};
use reskit::experiments::{Experiment, ExperimentError};

/// Runs one experiment and writes `results.csv`, `curves/*.csv` and
/// `meta.json` into the output directory.
#[derive(Debug, Parser)]
#[command(name = "reskit", version)]
struct Cli {
    /// convergence, predict, timing, stability, recdirect or simulate-ks
    experiment: String,
    /// INI-style file: global `key = value` lines plus `[experiment]` sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set n_list=64,128`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn resolve(cli: &Cli) -> Result<(Experiment, Config), ExperimentError> {
    let exp = Experiment::parse(&cli.experiment).ok_or_else(|| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        ConfigError::Invalid(format!("unknown experiment `{}` (expected one of {})", cli.experiment, names.join(", ")))
    })?;
    let mut cfg = exp.default_config();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_ini(&text, exp.name())?;
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    Ok((exp, cfg))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let run = resolve(&cli).and_then(|(exp, cfg)| {
        let record = exp.run(&cfg)?;
        record.write(&cfg, &cli.out)?;
        Ok(record)
    });
    match run {
        Ok(record) => {
            for note in &record.notes {
                eprintln!("note: {note}");
            }
            eprintln!(
                "{}: {} result rows, config {} -> {}",
                record.kind,
                record.results.rows.len(),
                &record.config_hash[..12],
                cli.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
