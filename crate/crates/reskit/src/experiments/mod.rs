//! Experiment drivers behind the `reskit` CLI.
//!
//! Every driver takes a resolved [`Config`], fans its grid cells out over a
//! rayon pool and returns a [`ResultRecord`]. Cells are deterministic given
//! their seed, and results are collected in grid order, so the CSVs are
//! reproducible except for wall-clock columns.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::json;

use crate::config::{Config, ConfigError};
use crate::dataset::FormatError;
use crate::dataset::{export_csv, save_dataset};
use crate::ks::{Dataset, KsError};

mod convergence;
mod data;
mod predict;
mod simulate;
mod stability;
mod timing;

pub use convergence::{run_convergence, deviation_bound};
pub use data::{independent_mse, lyapunov_steps, prepare_series, Prepared};
pub use predict::{run_prediction, run_recursive_vs_direct};
pub use simulate::run_simulate_ks;
pub use stability::run_stability;
pub use timing::run_timing;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Convergence,
    Predict,
    Timing,
    Stability,
    RecDirect,
    SimulateKs,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Convergence,
        Experiment::Predict,
        Experiment::Timing,
        Experiment::Stability,
        Experiment::RecDirect,
        Experiment::SimulateKs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Convergence => "convergence",
            Experiment::Predict => "predict",
            Experiment::Timing => "timing",
            Experiment::Stability => "stability",
            Experiment::RecDirect => "recdirect",
            Experiment::SimulateKs => "simulate-ks",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Built-in defaults: the keys shared by all experiments plus this one's.
    pub fn defaults(self) -> Vec<(&'static str, &'static str)> {
        let mut d = COMMON.to_vec();
        d.extend_from_slice(match self {
            Experiment::Convergence => convergence::DEFAULTS,
            Experiment::Predict => predict::DEFAULTS,
            Experiment::RecDirect => predict::RECDIRECT_DEFAULTS,
            Experiment::Timing => timing::DEFAULTS,
            Experiment::Stability => stability::DEFAULTS,
            Experiment::SimulateKs => &[],
        });
        d
    }

    pub fn default_config(self) -> Config {
        Config::from_defaults(&self.defaults())
    }

    pub fn run(self, cfg: &Config) -> Result<ResultRecord, ExperimentError> {
        let workers: usize = cfg.get("workers")?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ExperimentError::Config(ConfigError::Invalid(format!("worker pool: {e}"))))?;
        pool.install(|| match self {
            Experiment::Convergence => run_convergence(cfg),
            Experiment::Predict => run_prediction(cfg),
            Experiment::Timing => run_timing(cfg),
            Experiment::Stability => run_stability(cfg),
            Experiment::RecDirect => run_recursive_vs_direct(cfg),
            Experiment::SimulateKs => run_simulate_ks(cfg),
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Keys every experiment understands. The `ks_*` keys describe the data used
/// when `dataset` is empty (generated in process) and drive `simulate-ks`.
const COMMON: &[(&str, &str)] = &[
    ("seeds", "0"),
    ("workers", "1"),
    ("dataset", ""),
    ("normalize", "minmax"),
    ("input_scale", "1"),
    ("ks_l", "100"),
    ("ks_grid", "100"),
    ("ks_dt", "0.25"),
    ("ks_subsample", "1"),
    ("ks_transient", "4000"),
    ("ks_seed", "0"),
    ("ks_amplitude", "0.01"),
    ("ks_steps", "20000"),
    ("lyap_probes", "8"),
    ("lyap_horizon", "4000"),
    ("lyap_renorm", "20"),
    ("lyap_perturbation", "1e-8"),
    ("write_series", "false"),
];

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("data file: {0}")]
    Format(#[from] FormatError),
}

impl ExperimentError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Numeric(_) => 3,
            ExperimentError::Io(_) | ExperimentError::Format(_) => 1,
        }
    }
}

impl From<reskit_core::Error> for ExperimentError {
    fn from(e: reskit_core::Error) -> Self {
        match e {
            reskit_core::Error::InvalidParameter(m) => ExperimentError::Config(ConfigError::Invalid(m.to_string())),
            reskit_core::Error::Kind { kind, reason } => {
                ExperimentError::Config(ConfigError::Invalid(format!("{}: {reason}", kind.name())))
            }
            other => ExperimentError::Numeric(other.to_string()),
        }
    }
}

impl From<KsError> for ExperimentError {
    fn from(e: KsError) -> Self {
        match e {
            KsError::Config(m) => ExperimentError::Config(ConfigError::Invalid(m.to_string())),
            other => ExperimentError::Numeric(other.to_string()),
        }
    }
}

/// Seed lists accept `a,b,c` and half-open ranges `a..b`.
pub fn parse_seeds(cfg: &Config) -> Result<Vec<u64>, ConfigError> {
    let raw = cfg.raw("seeds")?;
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || ConfigError::Parse {
            key: "seeds".into(),
            value: part.to_string(),
        };
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(ConfigError::Invalid("`seeds` must not be empty".into()));
    }
    Ok(out)
}

/// Parses a `true/false/on/off/yes/no/1/0` flag list such as `redraw = off,on`.
pub fn parse_flags(cfg: &Config, key: &str) -> Result<Vec<bool>, ConfigError> {
    let mut out = Vec::new();
    for s in cfg.list::<String>(key)? {
        out.push(match s.to_ascii_lowercase().as_str() {
            "true" | "on" | "yes" | "1" => true,
            "false" | "off" | "no" | "0" => false,
            _ => {
                return Err(ConfigError::Parse {
                    key: key.into(),
                    value: s,
                })
            }
        });
    }
    Ok(out)
}

pub fn parse_flag(cfg: &Config, key: &str) -> Result<bool, ConfigError> {
    match parse_flags(cfg, key)?.as_slice() {
        [b] => Ok(*b),
        _ => Err(ConfigError::Parse {
            key: key.into(),
            value: cfg.raw(key)?.to_string(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn matches(&self, v: &str) -> bool {
        match self {
            Cell::Text(s) => s == v,
            Cell::Int(i) => v.parse::<i64>().is_ok_and(|x| x == *i),
            Cell::Num(x) => v.parse::<f64>().is_ok_and(|y| y == *x),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // shortest round-trip form, so reruns compare bit for bit
            Cell::Num(v) => write!(f, "{v:?}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A CSV-shaped table. The first column is always `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Columns holding wall-clock measurements.
    pub timing_columns: Vec<String>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        let mut h = vec!["seed".to_string()];
        h.extend(header.iter().map(|s| s.to_string()));
        Self {
            name: name.to_string(),
            header: h,
            rows: Vec::new(),
            timing_columns: Vec::new(),
        }
    }

    pub fn with_timing(mut self, cols: &[&str]) -> Self {
        self.timing_columns = cols.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn push(&mut self, seed: u64, cells: Vec<Cell>) {
        assert_eq!(cells.len() + 1, self.header.len(), "row width for table {}", self.name);
        let mut row = Vec::with_capacity(self.header.len());
        row.push(Cell::from(seed));
        row.extend(cells);
        self.rows.push(row);
    }

    /// Row summarizing all seeds; its seed cell reads `all`.
    pub fn push_aggregate(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len() + 1, self.header.len(), "row width for table {}", self.name);
        let mut row = Vec::with_capacity(self.header.len());
        row.push(Cell::from("all"));
        row.extend(cells);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Rows whose `(column, value)` pairs all match, compared textually for
    /// strings and numerically otherwise.
    pub fn select(&self, filters: &[(&str, &str)]) -> Vec<&Vec<Cell>> {
        let idx: Vec<(usize, &str)> = filters
            .iter()
            .map(|(c, v)| (self.column_index(c).unwrap_or_else(|| panic!("no column {c} in {}", self.name)), *v))
            .collect();
        self.rows
            .iter()
            .filter(|row| idx.iter().all(|&(i, v)| row[i].matches(v)))
            .collect()
    }

    /// Numeric values of `column` over the rows matching `filters`.
    pub fn values(&self, column: &str, filters: &[(&str, &str)]) -> Vec<f64> {
        let c = self.column_index(column).unwrap_or_else(|| panic!("no column {column} in {}", self.name));
        self.select(filters).iter().filter_map(|r| r[c].as_f64()).collect()
    }

    /// CSV with a leading `config_hash` column.
    pub fn write_csv<W: Write>(&self, hash: &str, mut w: W) -> io::Result<()> {
        writeln!(w, "config_hash,{}", self.header.join(","))?;
        for row in &self.rows {
            write!(w, "{hash}")?;
            for c in row {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub os: &'static str,
    pub arch: &'static str,
    pub workers: usize,
    pub available_parallelism: usize,
    pub version: &'static str,
    pub profile: &'static str,
}

impl Environment {
    pub fn capture(workers: usize) -> Self {
        Self {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            workers,
            available_parallelism: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            version: env!("CARGO_PKG_VERSION"),
            profile: if cfg!(debug_assertions) { "debug" } else { "release" },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub kind: Experiment,
    pub config_hash: String,
    pub results: Table,
    pub curves: Vec<Table>,
    /// Named wall-clock totals in seconds.
    pub timings: Vec<(String, f64)>,
    pub environment: Environment,
    /// Free-form observations such as jitter escalations or divergent seeds.
    pub notes: Vec<String>,
    /// Generated data, saved as `dataset.rskd` next to the CSVs.
    pub dataset: Option<Dataset>,
}

impl ResultRecord {
    pub fn new(kind: Experiment, cfg: &Config, results: Table) -> Self {
        let workers = cfg.get("workers").unwrap_or(1);
        Self {
            kind,
            config_hash: cfg.hash(),
            results,
            curves: Vec::new(),
            timings: Vec::new(),
            environment: Environment::capture(workers),
            notes: Vec::new(),
            dataset: None,
        }
    }

    pub fn curve(&self, name: &str) -> Option<&Table> {
        self.curves.iter().find(|c| c.name == name)
    }

    /// Writes `results.csv`, `curves/<name>.csv` and `meta.json` under `dir`,
    /// plus `dataset.rskd` (and `series.csv` when `write_series` is set) for
    /// generated data.
    pub fn write(&self, cfg: &Config, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        let short = &self.config_hash[..12];
        self.results
            .write_csv(short, io::BufWriter::new(fs::File::create(dir.join("results.csv"))?))?;
        if !self.curves.is_empty() {
            let cdir = dir.join("curves");
            fs::create_dir_all(&cdir)?;
            for c in &self.curves {
                c.write_csv(short, io::BufWriter::new(fs::File::create(cdir.join(format!("{}.csv", c.name)))?))?;
            }
        }
        let config: serde_json::Map<String, serde_json::Value> =
            cfg.entries().map(|(k, v)| (k.clone(), json!(v))).collect();
        let env = &self.environment;
        let meta = json!({
            "experiment": self.kind.name(),
            "config_hash": self.config_hash,
            "config": config,
            "environment": {
                "os": env.os,
                "arch": env.arch,
                "workers": env.workers,
                "available_parallelism": env.available_parallelism,
                "version": env.version,
                "profile": env.profile,
            },
            "timings_seconds": self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
            "timing_columns": self.results.timing_columns,
            "notes": self.notes,
        });
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta).map_err(io::Error::from)? + "\n")?;
        if let Some(ds) = &self.dataset {
            save_dataset(ds, &dir.join("dataset.rskd"))?;
            if parse_flag(cfg, "write_series")? {
                export_csv(ds, &dir.join("series.csv"))?;
            }
        }
        Ok(())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_accept_ranges() {
        let mut c = Experiment::Stability.default_config();
        c.set("seeds", "3, 0..2, 7").unwrap();
        assert_eq!(parse_seeds(&c).unwrap(), vec![3, 0, 1, 7]);
        c.set("seeds", "").unwrap();
        assert!(parse_seeds(&c).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.0)).collect();
        assert!((loglog_slope(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_selection() {
        let mut t = Table::new("t", &["kind", "n", "v"]);
        t.push(0, vec!["a".into(), 4usize.into(), 1.5.into()]);
        t.push(1, vec!["b".into(), 4usize.into(), 2.5.into()]);
        assert_eq!(t.values("v", &[("kind", "b"), ("n", "4")]), vec![2.5]);
        let mut buf = Vec::new();
        t.write_csv("abc", &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "config_hash,seed,kind,n,v\nabc,0,a,4,1.5\nabc,1,b,4,2.5\n");
    }
}
