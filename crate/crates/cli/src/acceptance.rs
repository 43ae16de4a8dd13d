//! The acceptance criteria, each reduced to one pass/fail line.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use unigroup_core::convergence::loglog_slope;
use unigroup_core::gram::{assemble_mass, GramMatrix};
use unigroup_core::mesh::{Domain, Grid};
use unigroup_core::observables::energy_variation;
use unigroup_core::projection::NodalBasis;
use unigroup_core::propagator::{DenseExponential, PadePropagator};
use unigroup_core::Result;

use crate::studies::{self, InitialState, NlsSettings, Potential, Problem};

pub const UNITARITY_TOL: f64 = 1e-10;
pub const REVERSAL_TOL: f64 = 1e-10;
pub const SLOPE_BAND: f64 = 0.2;
pub const SPATIAL_SLOPE: (f64, f64) = (1.8, 2.2);
pub const ENERGY_DRIFT_TOL: f64 = 1e-10;
pub const COMMUTATOR_TOL: f64 = 1e-11;
/// Orders of magnitude by which the negative control must exceed the tolerance.
pub const CONTROL_MARGIN: f64 = 1e6;
pub const ADJOINT_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {}: {} [{:.2} s{}]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget
                .map(|b| format!(" / {} s", b.as_secs()))
                .unwrap_or_default()
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

struct Criterion {
    id: u8,
    title: &'static str,
    budget: Option<u64>,
    check: Check,
}

const CRITERIA: [Criterion; 11] = [
    Criterion {
        id: 1,
        title: "mass matrix SPD",
        budget: Some(10),
        check: mass_spd,
    },
    Criterion {
        id: 2,
        title: "M-unitarity of the Padé group",
        budget: Some(30),
        check: unitarity,
    },
    Criterion {
        id: 3,
        title: "time reversal",
        budget: None,
        check: reversal,
    },
    Criterion {
        id: 4,
        title: "single-step Padé order",
        budget: Some(20),
        check: single_step_order,
    },
    Criterion {
        id: 5,
        title: "multi-step bound and global order",
        budget: None,
        check: multi_step,
    },
    Criterion {
        id: 6,
        title: "spatial order 2",
        budget: Some(60),
        check: spatial_order,
    },
    Criterion {
        id: 7,
        title: "composite (h, tau) estimate",
        budget: None,
        check: composite,
    },
    Criterion {
        id: 8,
        title: "discrete energy conservation",
        budget: None,
        check: energy,
    },
    Criterion {
        id: 9,
        title: "commutator preservation",
        budget: None,
        check: commutators,
    },
    Criterion {
        id: 10,
        title: "Picard contraction",
        budget: Some(120),
        check: picard,
    },
    Criterion {
        id: 11,
        title: "M-adjoint identities",
        budget: None,
        check: adjoint,
    },
];

pub fn criterion_ids() -> Vec<u8> {
    CRITERIA.iter().map(|c| c.id).collect()
}

/// Runs one criterion; errors and budget overruns count as failures.
pub fn run(id: u8) -> Option<Outcome> {
    let c = CRITERIA.iter().find(|c| c.id == id)?;
    let start = Instant::now();
    let result = (c.check)();
    let elapsed = start.elapsed();
    let budget = c.budget.map(Duration::from_secs);
    let (mut passed, mut detail) = match result {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    if budget.is_some_and(|b| elapsed > b) {
        passed = false;
        detail.push_str("; over time budget");
    }
    Some(Outcome {
        id: c.id,
        title: c.title,
        passed,
        detail,
        elapsed,
        budget,
    })
}

pub fn run_all() -> Vec<Outcome> {
    criterion_ids().into_iter().filter_map(run).collect()
}

fn hamiltonian_2d(level: u32) -> Result<Problem> {
    Problem::build(Domain::square(1.0)?, level, Potential::Harmonic)
}

fn gram_1d(level: u32) -> Result<Arc<GramMatrix>> {
    let basis = NodalBasis::new(Grid::build(Domain::interval(1.0)?, level)?);
    Ok(Arc::new(assemble_mass(&basis)?))
}

fn mass_spd() -> Result<(bool, String)> {
    let cases: Vec<(usize, u32)> = (0..=4)
        .map(|m| (1, m))
        .chain((0..=3).map(|m| (2, m)))
        .collect();
    let mut ok = true;
    let mut worst_floor = f64::INFINITY;
    let mut worst_oracle = 0.0f64;
    for (dim, level) in cases {
        let c = studies::mass_check(dim, level)?;
        ok &= c.floor > 0.0 && c.asymmetry == 0.0;
        worst_floor = worst_floor.min(c.floor);
        worst_oracle = worst_oracle.max((c.floor - c.floor_oracle).abs() / c.floor_oracle);
    }
    Ok((ok, format!("min eigenvalue {worst_floor:.3e} > 0, asymmetry 0, closed-form floor agreement {worst_oracle:.1e}")))
}

fn unitarity() -> Result<(bool, String)> {
    let gram = gram_1d(4)?;
    let problem = hamiltonian_2d(2)?;
    let mut worst = 0.0f64;
    for p in 1..=3 {
        let random = studies::random_m_hermitian(gram.clone(), 40 + p as u64)?;
        let prop = PadePropagator::build(&random, 0.05, p)?;
        let drift =
            studies::norm_drift_series(&prop, &studies::random_state(gram.dim(), p as u64), 1000)?;
        worst = worst.max(drift.iter().copied().fold(0.0, f64::max));

        let prop = PadePropagator::build(&problem.hamiltonian, 0.01, p)?;
        let drift = studies::norm_drift_series(
            &prop,
            &studies::random_state(problem.n_dofs(), 10 + p as u64),
            1000,
        )?;
        worst = worst.max(drift.iter().copied().fold(0.0, f64::max));
    }
    Ok((
        worst <= UNITARITY_TOL,
        format!("max relative norm drift over 1000 steps {worst:.2e} <= {UNITARITY_TOL:e}"),
    ))
}

fn reversal() -> Result<(bool, String)> {
    let problem = hamiltonian_2d(2)?;
    let gram = gram_1d(4)?;
    let ks: Vec<usize> = (0..=8).map(|e| 1 << e).collect();
    let mut worst = 0.0f64;
    for p in 1..=3 {
        let random = studies::random_m_hermitian(gram.clone(), 70 + p as u64)?;
        for (h, seed) in [(&problem.hamiltonian, 1u64), (&random, 2)] {
            let prop = Arc::new(PadePropagator::build(h, 0.01, p)?);
            let psi = studies::random_state(prop.dim(), seed);
            for (k, e) in ks.iter().zip(studies::reversal_errors(prop, &psi, &ks)?) {
                worst = worst.max(e / *k as f64);
            }
        }
    }
    Ok((
        worst <= REVERSAL_TOL,
        format!("max error/k for k <= 256 is {worst:.2e} <= {REVERSAL_TOL:e}"),
    ))
}

fn single_step_order() -> Result<(bool, String)> {
    let problem = hamiltonian_2d(2)?;
    let oracle = DenseExponential::new(&problem.hamiltonian)?;
    let h_taus = [0.5, 0.25, 0.125, 0.0625, 0.03125];
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [1usize, 2] {
        let errs = studies::single_step_sweep(&oracle, &problem.hamiltonian, p, &h_taus)?;
        let measured: Vec<f64> = errs.iter().map(|e| e.measured).collect();
        let slope = loglog_slope(&h_taus, &measured)?;
        let target = (2 * p + 1) as f64;
        let within = errs.iter().all(|e| e.within_bound());
        ok &= (slope - target).abs() <= SLOPE_BAND && within;
        parts.push(format!(
            "p={p} slope {slope:.3} (target {target}), under local bound: {within}"
        ));
    }
    Ok((ok, format!("N={}: {}", problem.n_dofs(), parts.join("; "))))
}

fn multi_step() -> Result<(bool, String)> {
    let problem = Problem::build(Domain::interval(1.0)?, 4, Potential::Harmonic)?;
    let oracle = DenseExponential::new(&problem.hamiltonian)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [1usize, 2] {
        let table = studies::multi_step_table(&oracle, &problem.hamiltonian, p, &[0.25, 0.5], 32)?;
        let worst = table
            .iter()
            .map(|e| e.measured / e.bound)
            .fold(0.0, f64::max);
        let global = studies::global_order_sweep(
            &oracle,
            &problem.hamiltonian,
            p,
            2.0,
            &[4, 8, 16, 32, 64],
        )?;
        let (taus, errs): (Vec<f64>, Vec<f64>) = global.into_iter().unzip();
        let slope = loglog_slope(&taus, &errs)?;
        let target = (2 * p) as f64;
        ok &= worst <= 1.0 && (slope - target).abs() <= SLOPE_BAND;
        parts.push(format!(
            "p={p} max measured/bound {worst:.2e}, global slope {slope:.3} (target {target})"
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn spatial_order() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (domain, levels) in [
        (Domain::interval(1.0)?, vec![0u32, 1, 2, 3, 4]),
        (Domain::square(1.0)?, vec![0, 1, 2, 3]),
    ] {
        let dim = domain.dim();
        let sweep = studies::spatial_sweep(&domain, &levels, 0.1)?;
        let (a, b) = (sweep.projection_slope()?, sweep.solution_slope()?);
        let inside = |s: f64| (SPATIAL_SLOPE.0..=SPATIAL_SLOPE.1).contains(&s);
        ok &= inside(a) && inside(b);
        parts.push(format!("{dim}D projection {a:.3}, solution {b:.3}"));
    }
    Ok((
        ok,
        format!(
            "slopes in [{}, {}]: {}",
            SPATIAL_SLOPE.0,
            SPATIAL_SLOPE.1,
            parts.join("; ")
        ),
    ))
}

/// Plateau tests on the `(h, τ)` matrix of one-step errors.
///
/// A plateau means refining the non-dominant parameter changes the error by
/// less than a factor 2. Plateau levels must then follow the predicted
/// ratios 4 (h²) and 8 (τ³) within a factor 2.
fn composite() -> Result<(bool, String)> {
    let levels = [0, 1, 2, 3, 4, 5];
    let taus = [0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125];
    let sweep = studies::composite_sweep(1, &levels, &taus, 1)?;
    let e = &sweep.errors;
    let last_tau = taus.len() - 1;
    let last_h = levels.len() - 1;
    // temporal error dominates at the finest h for the three largest steps
    let tau_dominated = 0..3;

    let flat = |a: f64, b: f64| (0.5..=2.0).contains(&(a / b));
    let tau_plateaus = e.iter().all(|row| flat(row[last_tau], row[last_tau - 1]));
    let h_plateaus = tau_dominated
        .clone()
        .all(|j| flat(e[last_h][j], e[last_h - 1][j]));

    let h_levels: Vec<f64> = e.iter().map(|row| row[last_tau]).collect();
    let t_levels: Vec<f64> = tau_dominated.map(|j| e[last_h][j]).collect();
    let h_ratios: Vec<f64> = h_levels.windows(2).map(|w| w[0] / w[1]).collect();
    let t_ratios: Vec<f64> = t_levels.windows(2).map(|w| w[0] / w[1]).collect();
    let h_ok = h_ratios.iter().all(|r| (2.0..=8.0).contains(r));
    let t_ok = t_ratios.iter().all(|r| (4.0..=16.0).contains(r));
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|r| format!("{r:.2}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    Ok((
        tau_plateaus && h_plateaus && h_ok && t_ok,
        format!(
            "tau-plateaus {tau_plateaus}, h-plateaus {h_plateaus}; h-plateau ratios [{}] vs 4, tau-plateau ratios [{}] vs 8",
            fmt(&h_ratios),
            fmt(&t_ratios)
        ),
    ))
}

fn energy() -> Result<(bool, String)> {
    let problem = hamiltonian_2d(2)?;
    let psi0 = InitialState::GaussianBump.coefficients(&problem.basis, &problem.gram)?;
    let tau = 0.01;
    let run = studies::conservation_run(&problem, 1, tau, 200, &psi0)?;
    let drift = run.energy_drift();
    let e0 = run.energy.values[0].abs();
    let variation = energy_variation(&run.energy, tau)?
        .iter()
        .fold(0.0f64, |a, d| a.max(d.abs()))
        * tau
        / e0;
    Ok((
        drift <= ENERGY_DRIFT_TOL && variation <= ENERGY_DRIFT_TOL,
        format!("max relative drift {drift:.2e}, max |delta E| tau/|E0| {variation:.2e} <= {ENERGY_DRIFT_TOL:e}"),
    ))
}

fn commutators() -> Result<(bool, String)> {
    let problem = hamiltonian_2d(2)?;
    let (checks, control) = studies::commutator_checks(&problem)?;
    let worst = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    let margin = control.residual / COMMUTATOR_TOL;
    Ok((
        worst <= COMMUTATOR_TOL && margin >= CONTROL_MARGIN,
        format!("max [H, q(H)] residual {worst:.2e} <= {COMMUTATOR_TOL:e}; control {} = {:.2e} ({margin:.1e} x tolerance)", control.label, control.residual),
    ))
}

fn picard() -> Result<(bool, String)> {
    let problem = hamiltonian_2d(2)?;
    let psi0 = InitialState::GaussianBump.coefficients(&problem.basis, &problem.gram)?;
    let settings = NlsSettings {
        alpha: Complex64::new(1.0, 0.0),
        exponent: 2,
        p: 1,
        substeps: 2,
        tau: None,
        target_contraction: 0.5,
        windows: 10,
        tol: 1e-10,
        max_iter: 200,
    };
    let run = studies::nls_run(&problem, &psi0, &settings)?;
    let k_ok = run.windows.iter().all(|w| w.record.contraction < 1.0);
    let ratios_ok = run.windows.iter().all(|w| w.ratios_within_contraction());
    let oracle_ok = run.windows.iter().all(|w| w.oracle.holds());
    let max_k = run
        .windows
        .iter()
        .map(|w| w.record.contraction)
        .fold(0.0, f64::max);
    let worst_ratio = run
        .windows
        .iter()
        .map(|w| w.oracle.state.max_ratio() / w.record.contraction)
        .fold(0.0, f64::max);
    let worst_oracle = run
        .windows
        .iter()
        .map(|w| w.oracle.measured / w.oracle.bound)
        .fold(0.0, f64::max);
    Ok((
        k_ok && ratios_ok && oracle_ok,
        format!(
            "{} windows, max K {max_k:.3}, max ratio/K {worst_ratio:.3}, max oracle error/bound {worst_oracle:.2e}",
            run.windows.len()
        ),
    ))
}

fn adjoint() -> Result<(bool, String)> {
    let gram = gram_1d(4)?;
    let r = studies::adjoint_identities(&gram, 100, 2024)?;
    let worst = r.pairing.max(r.involution).max(r.antihomomorphism);
    Ok((
        worst <= ADJOINT_TOL,
        format!(
            "N={}: pairing {:.1e}, involution {:.1e}, anti-homomorphism {:.1e} <= {ADJOINT_TOL:e} (two routes agree to {:.1e})",
            gram.dim(),
            r.pairing,
            r.involution,
            r.antihomomorphism,
            r.routes
        ),
    ))
}
