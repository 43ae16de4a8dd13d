//! Flat `key = value` experiment configs.
//!
//! ```text
//! # comments and blank lines are ignored
//! name = qho-small
//! experiment = qho2d
//! m = 2
//! tau = 0.01
//! ```
//!
//! Unset keys take per-experiment defaults. Command-line overrides replace
//! file values; `--m` also drops an explicit `m_range`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use unigroup_core::duhamel::NonlinearTerm;
use unigroup_core::mesh::Domain;
use unigroup_core::propagator::{MAX_DENSE_DIM, MAX_PADE_ORDER};

use crate::error::{CliError, CliResult};
use crate::studies::{InitialState, Potential, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    Qho2d,
    Nls,
    PadeOrderSweep,
    SpatialOrderSweep,
    UnitaritySoak,
    ConstantsOfMotion,
}

impl ExperimentKind {
    pub const ALL: [Self; 6] = [
        Self::Qho2d,
        Self::Nls,
        Self::PadeOrderSweep,
        Self::SpatialOrderSweep,
        Self::UnitaritySoak,
        Self::ConstantsOfMotion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Qho2d => "qho2d",
            Self::Nls => "nls",
            Self::PadeOrderSweep => "pade_order_sweep",
            Self::SpatialOrderSweep => "spatial_order_sweep",
            Self::UnitaritySoak => "unitarity_soak",
            Self::ConstantsOfMotion => "constants_of_motion",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown experiment {s:?} (one of {})", names.join(", "))
            })
    }
}

/// Command-line replacements for config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub m: Option<u32>,
    pub p: Option<String>,
    pub tau: Option<f64>,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: ExperimentKind,
    pub dim: usize,
    pub length: f64,
    pub m: u32,
    pub m_range: Vec<u32>,
    pub p: Vec<usize>,
    /// Step size; for `nls` the window length, chosen from `target_contraction` when unset.
    pub tau: Option<f64>,
    pub steps: usize,
    pub windows: usize,
    pub substeps: usize,
    pub alpha: Complex64,
    pub exponent: u32,
    pub target_contraction: f64,
    pub initial: InitialState,
    pub tol: f64,
    pub max_iter: usize,
    /// Final time of the spatial sweeps.
    pub time: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub export_matrices: bool,
}

const KEYS: [&str; 21] = [
    "name",
    "experiment",
    "dim",
    "length",
    "m",
    "m_range",
    "p",
    "tau",
    "steps",
    "windows",
    "substeps",
    "alpha",
    "exponent",
    "target_contraction",
    "initial",
    "tol",
    "max_iter",
    "time",
    "seed",
    "out",
    "export_matrices",
];

/// Parses `a+bi`, `a-bi`, `bi`, `i` or a plain real number.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("bad complex number {s:?}");
    let Some(body) = t.strip_suffix('i') else {
        return t
            .parse::<f64>()
            .map(|re| Complex64::new(re, 0.0))
            .map_err(|_| bad());
    };
    let split = body
        .char_indices()
        .skip(1)
        .filter(|&(k, c)| (c == '+' || c == '-') && !matches!(body.as_bytes()[k - 1], b'e' | b'E'))
        .map(|(k, _)| k)
        .last();
    let (re, im) = match split {
        Some(k) => (body[..k].parse::<f64>().map_err(|_| bad())?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(Complex64::new(re, im))
}

/// `a..b` or `a..=b` (both inclusive) or a comma list.
pub fn parse_levels(s: &str) -> Result<Vec<u32>, String> {
    let bad = || format!("bad level range {s:?}");
    let s = s.trim();
    let levels: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b
            .trim()
            .trim_start_matches('=')
            .trim()
            .parse()
            .map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!(
            "level range {s:?} must be non-empty and increasing"
        ));
    }
    Ok(levels)
}

fn parse_orders(s: &str) -> Result<Vec<usize>, String> {
    let p: Vec<usize> = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad Padé order list {s:?}"))
        })
        .collect::<Result<_, _>>()?;
    if p.is_empty() {
        return Err("empty Padé order list".into());
    }
    Ok(p)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(format!("bad boolean {v:?}")),
    }
}

struct Entry {
    line: usize,
    value: String,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string(), overrides)
    }

    pub fn parse(text: &str, source_name: &str, overrides: &Overrides) -> CliResult<Self> {
        let err = |line: usize, message: String| CliError::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected key = value, found {content:?}")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(err(line, format!("unknown key {key:?}")));
            }
            if entries
                .insert(
                    key.to_string(),
                    Entry {
                        line,
                        value: value.trim().to_string(),
                    },
                )
                .is_some()
            {
                return Err(err(line, format!("key {key:?} set twice")));
            }
        }
        if let Some(v) = &overrides.experiment {
            entries.insert(
                "experiment".into(),
                Entry {
                    line: 0,
                    value: v.clone(),
                },
            );
        }
        if let Some(v) = overrides.m {
            entries.insert(
                "m".into(),
                Entry {
                    line: 0,
                    value: v.to_string(),
                },
            );
            entries.remove("m_range");
        }
        if let Some(v) = &overrides.p {
            entries.insert(
                "p".into(),
                Entry {
                    line: 0,
                    value: v.clone(),
                },
            );
        }
        if let Some(v) = overrides.tau {
            entries.insert(
                "tau".into(),
                Entry {
                    line: 0,
                    value: v.to_string(),
                },
            );
        }
        if let Some(v) = overrides.steps {
            entries.insert(
                "steps".into(),
                Entry {
                    line: 0,
                    value: v.to_string(),
                },
            );
        }
        if let Some(v) = &overrides.out {
            entries.insert(
                "out".into(),
                Entry {
                    line: 0,
                    value: v.display().to_string(),
                },
            );
        }

        fn get<T>(
            entries: &BTreeMap<String, Entry>,
            key: &str,
            parse: impl Fn(&str) -> Result<T, String>,
            err: &dyn Fn(usize, String) -> CliError,
        ) -> CliResult<Option<T>> {
            entries
                .get(key)
                .map(|e| parse(&e.value).map_err(|m| err(e.line, format!("{key}: {m}"))))
                .transpose()
        }
        fn num<T: FromStr>(s: &str) -> Result<T, String> {
            s.parse::<T>().map_err(|_| format!("bad number {s:?}"))
        }

        let experiment: ExperimentKind = get(&entries, "experiment", |s| s.parse(), &err)?
            .ok_or_else(|| err(0, "missing key \"experiment\"".into()))?;
        use ExperimentKind::*;
        let name = entries
            .get("name")
            .map(|e| e.value.clone())
            .unwrap_or_else(|| experiment.to_string());
        let dim = get(&entries, "dim", num::<usize>, &err)?.unwrap_or(2);
        let m = get(&entries, "m", num::<u32>, &err)?.unwrap_or(2);
        let default_range: Vec<u32> = match experiment {
            Qho2d | SpatialOrderSweep => (0..=(m + 1).max(2)).collect(),
            _ => vec![m],
        };
        let default_p = match experiment {
            PadeOrderSweep => vec![1, 2],
            UnitaritySoak => vec![1, 2, 3],
            _ => vec![1],
        };
        let default_steps = match experiment {
            Qho2d | ConstantsOfMotion => 200,
            PadeOrderSweep => 32,
            UnitaritySoak => 1000,
            Nls | SpatialOrderSweep => 1,
        };
        let default_tau = match experiment {
            Nls | PadeOrderSweep | SpatialOrderSweep => None,
            _ => Some(0.01),
        };
        let default_initial = match experiment {
            Qho2d | ConstantsOfMotion => InitialState::Eigenmode(1, 1),
            _ => InitialState::GaussianBump,
        };
        let cfg = Self {
            out: get(&entries, "out", |s| Ok(PathBuf::from(s)), &err)?
                .unwrap_or_else(|| PathBuf::from("out").join(&name)),
            name,
            experiment,
            dim,
            length: get(&entries, "length", num::<f64>, &err)?.unwrap_or(1.0),
            m,
            m_range: get(&entries, "m_range", parse_levels, &err)?.unwrap_or(default_range),
            p: get(&entries, "p", parse_orders, &err)?.unwrap_or(default_p),
            tau: get(&entries, "tau", num::<f64>, &err)?.or(default_tau),
            steps: get(&entries, "steps", num::<usize>, &err)?.unwrap_or(default_steps),
            windows: get(&entries, "windows", num::<usize>, &err)?.unwrap_or(10),
            substeps: get(&entries, "substeps", num::<usize>, &err)?.unwrap_or(2),
            alpha: get(&entries, "alpha", parse_complex, &err)?.unwrap_or(Complex64::new(1.0, 0.0)),
            exponent: get(&entries, "exponent", num::<u32>, &err)?.unwrap_or(2),
            target_contraction: get(&entries, "target_contraction", num::<f64>, &err)?
                .unwrap_or(0.5),
            initial: get(&entries, "initial", |s| s.parse(), &err)?.unwrap_or(default_initial),
            tol: get(&entries, "tol", num::<f64>, &err)?.unwrap_or(1e-10),
            max_iter: get(&entries, "max_iter", num::<usize>, &err)?.unwrap_or(200),
            time: get(&entries, "time", num::<f64>, &err)?.unwrap_or(0.1),
            seed: get(&entries, "seed", num::<u64>, &err)?.unwrap_or(1),
            export_matrices: get(&entries, "export_matrices", parse_bool, &err)?.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn domain(&self) -> CliResult<Domain> {
        Ok(Domain::new(vec![self.length; self.dim])?)
    }

    fn invalid(&self, message: impl Into<String>) -> CliError {
        CliError::Invalid {
            name: self.name.clone(),
            message: message.into(),
        }
    }

    /// Levels the experiment builds operators on.
    pub fn levels(&self) -> Vec<u32> {
        let mut levels = self.m_range.clone();
        levels.push(self.m);
        levels.sort_unstable();
        levels.dedup();
        levels
    }

    pub fn potential(&self) -> Potential {
        match self.experiment {
            ExperimentKind::SpatialOrderSweep => Potential::Free,
            _ => Potential::Harmonic,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(self.invalid("name must be non-empty and contain no path separators"));
        }
        if !(1..=2).contains(&self.dim) {
            return Err(self.invalid(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        self.domain().map_err(|e| self.invalid(e.to_string()))?;
        for &level in &self.levels() {
            let n = (4usize << level.min(20)) - 1;
            if level > 20 || n.pow(self.dim as u32) > MAX_DENSE_DIM {
                return Err(self.invalid(format!(
                    "level {level} exceeds the dense size limit {MAX_DENSE_DIM}"
                )));
            }
        }
        if let Some(&p) = self.p.iter().find(|&&p| p == 0 || p > MAX_PADE_ORDER) {
            return Err(self.invalid(format!("Padé order {p} outside 1..={MAX_PADE_ORDER}")));
        }
        if let Some(tau) = self.tau {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(self.invalid(format!("tau must be positive, got {tau}")));
            }
        }
        if self.steps == 0 || self.windows == 0 || self.substeps == 0 || self.max_iter == 0 {
            return Err(self.invalid("steps, windows, substeps and max_iter must be positive"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) || !(self.time.is_finite() && self.time > 0.0)
        {
            return Err(self.invalid("tol and time must be positive"));
        }
        match self.experiment {
            ExperimentKind::SpatialOrderSweep | ExperimentKind::Qho2d if self.m_range.len() < 3 => {
                Err(self.invalid("order sweeps need at least three levels in m_range"))
            }
            ExperimentKind::Nls => self.validate_nls(),
            _ => Ok(()),
        }
    }

    /// `K = c_V τ < 1` with the constants instantiated at the initial state.
    fn validate_nls(&self) -> CliResult<()> {
        if self.p.len() != 1 {
            return Err(self.invalid("nls takes a single Padé order"));
        }
        if self.p[0] >= 2 && self.substeps % 2 == 1 {
            return Err(self.invalid("Simpson sub-steps (p >= 2) must be even"));
        }
        if !(self.target_contraction > 0.0 && self.target_contraction < 1.0) {
            return Err(self.invalid("target_contraction must lie in (0, 1)"));
        }
        if self.alpha == Complex64::new(0.0, 0.0) {
            return match self.tau {
                Some(_) => Ok(()),
                None => Err(self.invalid("alpha = 0 needs an explicit tau")),
            };
        }
        let Some(tau) = self.tau else {
            return Ok(());
        };
        if let InitialState::Csv(path) = &self.initial {
            if !path.exists() {
                return Err(
                    self.invalid(format!("initial state file {} not found", path.display()))
                );
            }
        }
        let problem = Problem::build(self.domain()?, self.m, self.potential())?;
        let psi0 = self.initial.coefficients(&problem.basis, &problem.gram)?;
        let term =
            NonlinearTerm::power_law(self.alpha, self.exponent, problem.gram.clone(), &psi0)?;
        let k = term.lipschitz() * tau;
        if k >= 1.0 {
            return Err(self.invalid(format!(
                "c_V tau = {k:.4} is not a contraction; use tau < {:.3e}",
                1.0 / term.lipschitz()
            )));
        }
        Ok(())
    }
}

/// Rejects suites that reuse an experiment name.
pub fn check_unique_names(configs: &[ExperimentConfig]) -> CliResult<()> {
    let mut seen = std::collections::BTreeSet::new();
    for c in configs {
        if !seen.insert(c.name.as_str()) {
            return Err(CliError::DuplicateName(c.name.clone()));
        }
    }
    Ok(())
}
