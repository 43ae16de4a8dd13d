//! Running many experiments and merging their verdicts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{check_unique_names, ExperimentConfig, ExperimentKind, Overrides};
use crate::error::{CliError, CliResult};
use crate::experiments::{describe, run_experiment, Report};

pub const THREADS_VAR: &str = "UNIGROUP_THREADS";
pub const CONFIG_EXTENSION: &str = "conf";

/// Configs shipped with the binary, one per experiment kind.
pub const BUNDLED: [(&str, &str); 6] = [
    ("qho2d.conf", include_str!("../configs/qho2d.conf")),
    ("nls.conf", include_str!("../configs/nls.conf")),
    (
        "pade_order_sweep.conf",
        include_str!("../configs/pade_order_sweep.conf"),
    ),
    (
        "spatial_order_sweep.conf",
        include_str!("../configs/spatial_order_sweep.conf"),
    ),
    (
        "unitarity_soak.conf",
        include_str!("../configs/unitarity_soak.conf"),
    ),
    (
        "constants_of_motion.conf",
        include_str!("../configs/constants_of_motion.conf"),
    ),
];

#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub name: String,
    pub kind: ExperimentKind,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteSummary {
    pub rows: Vec<SuiteRow>,
}

impl SuiteSummary {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let mut s = format!(
            "{:<width$}  {:<20}  {:<6}  detail\n",
            "name", "experiment", "result"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:<20}  {:<6}  {}",
                r.name,
                r.kind.as_str(),
                if r.passed { "PASS" } else { "FAIL" },
                r.detail
            );
        }
        let failed = self.rows.iter().filter(|r| !r.passed).count();
        let _ = writeln!(s, "{} experiments, {failed} failed", self.rows.len());
        s
    }
}

fn row(cfg: &ExperimentConfig, result: CliResult<Report>) -> SuiteRow {
    match result {
        Ok(report) => {
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.label.as_str())
                .collect();
            let detail = if failed.is_empty() {
                format!(
                    "{} checks passed, outputs in {}",
                    report.checks.len(),
                    report.out.display()
                )
            } else {
                format!("failed: {}", failed.join(", "))
            };
            SuiteRow {
                name: cfg.name.clone(),
                kind: cfg.experiment,
                passed: report.passed(),
                detail,
            }
        }
        Err(e) => SuiteRow {
            name: cfg.name.clone(),
            kind: cfg.experiment,
            passed: false,
            detail: format!("error: {}", describe(&e)),
        },
    }
}

/// Worker count from `UNIGROUP_THREADS`, defaulting to the machine's parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0)
}

/// Runs validated configs in parallel; rows keep the input order.
pub fn run_suite(configs: &[ExperimentConfig]) -> CliResult<SuiteSummary> {
    check_unique_names(configs)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap())
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let rows = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| row(cfg, run_experiment(cfg)))
            .collect()
    });
    Ok(SuiteSummary { rows })
}

/// All `*.conf` files of a directory in name order. An `out` override is a
/// root under which each experiment gets `<out>/<name>`.
pub fn load_dir(dir: &Path, overrides: &Overrides) -> CliResult<Vec<ExperimentConfig>> {
    if !dir.is_dir() {
        return Err(CliError::MissingDir(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == CONFIG_EXTENSION))
        .collect();
    paths.sort();
    let root = overrides.out.clone();
    let overrides = Overrides {
        out: None,
        ..overrides.clone()
    };
    paths
        .iter()
        .map(|p| {
            let mut cfg = ExperimentConfig::from_file(p, &overrides)?;
            if let Some(root) = &root {
                cfg.out = root.join(&cfg.name);
            }
            Ok(cfg)
        })
        .collect()
}

/// The bundled configs with outputs placed under `root/<name>`.
pub fn bundled(root: &Path) -> CliResult<Vec<ExperimentConfig>> {
    BUNDLED
        .iter()
        .map(|(file, text)| {
            let mut cfg = ExperimentConfig::parse(text, file, &Overrides::default())?;
            cfg.out = root.join(&cfg.name);
            Ok(cfg)
        })
        .collect()
}
