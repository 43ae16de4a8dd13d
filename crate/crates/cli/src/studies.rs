//! Numerical studies shared by the experiments and the acceptance checks.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use unigroup_core::convergence::loglog_slope;
use unigroup_core::duhamel::{
    DuhamelScheme, NonlinearTerm, OracleCheck, QuadratureRule, WindowRecord,
};
use unigroup_core::gram::{assemble_mass, GramMatrix};
use unigroup_core::linalg::{max_abs, random_cvector, random_hermitian, seeded_rng};
use unigroup_core::mesh::{Domain, Grid};
use unigroup_core::observables::{normalize, ExpectationSeries};
use unigroup_core::operators::{
    assemble_kinetic, assemble_potential, polynomial_commutator_residual, relative_commutator,
    FactoredOperator, ParticularOperator,
};
use unigroup_core::projection::NodalBasis;
use unigroup_core::propagator::{
    multi_step_error, single_step_error, DenseExponential, DiscreteGroup, PadePropagator, StepError,
};
use unigroup_core::{CVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Potential {
    Free,
    /// `Σ x_i²`.
    Harmonic,
}

/// Discretized Hamiltonian `H₀ + V` on one grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub basis: NodalBasis,
    pub gram: Arc<GramMatrix>,
    pub kinetic: FactoredOperator,
    pub potential: Option<ParticularOperator>,
    pub hamiltonian: ParticularOperator,
}

impl Problem {
    pub fn build(domain: Domain, level: u32, potential: Potential) -> Result<Self> {
        let basis = NodalBasis::new(Grid::build(domain, level)?);
        let gram = Arc::new(assemble_mass(&basis)?);
        let kinetic = assemble_kinetic(&basis, gram.clone())?;
        let (potential, hamiltonian) = match potential {
            Potential::Free => (None, kinetic.operator().clone()),
            Potential::Harmonic => {
                let v =
                    assemble_potential(&basis, gram.clone(), |x| x.iter().map(|c| c * c).sum())?;
                let h = kinetic.operator().add(&v)?;
                (Some(v), h)
            }
        };
        if !hamiltonian.is_hermitian() {
            return Err(Error::NotSelfAdjoint {
                residual: hamiltonian.self_adjoint_residual(),
            });
        }
        Ok(Self {
            basis,
            gram,
            kinetic,
            potential,
            hamiltonian,
        })
    }

    pub fn domain(&self) -> &Domain {
        self.basis.grid().domain()
    }

    pub fn h(&self) -> f64 {
        self.basis.grid().h()
    }

    pub fn n_dofs(&self) -> usize {
        self.basis.len()
    }
}

/// `∏ sin(k_i π x_i / L_i)`.
pub fn eigenmode(domain: &Domain, modes: [u32; 2], x: &[f64]) -> f64 {
    domain
        .lengths()
        .iter()
        .zip(modes)
        .zip(x)
        .map(|((l, k), xi)| (k as f64 * PI * xi / l).sin())
        .product()
}

/// Eigenvalue of `−Δ` for [`eigenmode`].
pub fn eigenmode_energy(domain: &Domain, modes: [u32; 2]) -> f64 {
    domain
        .lengths()
        .iter()
        .zip(modes)
        .map(|(l, k)| (k as f64 * PI / l).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    GaussianBump,
    Eigenmode(u32, u32),
    Csv(PathBuf),
}

impl FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "gaussian_bump" {
            return Ok(Self::GaussianBump);
        }
        if let Some(path) = s
            .strip_prefix("custom_csv:")
            .or_else(|| s.strip_prefix("csv:"))
        {
            return Ok(Self::Csv(PathBuf::from(path.trim())));
        }
        if let Some(args) = s
            .strip_prefix("eigenmode(")
            .and_then(|r| r.strip_suffix(')'))
        {
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            let parse = |t: &str| t.parse::<u32>().ok().filter(|k| *k >= 1);
            return match parts.as_slice() {
                [k] => parse(k).map(|k| Self::Eigenmode(k, 1)),
                [k, l] => parse(k).zip(parse(l)).map(|(k, l)| Self::Eigenmode(k, l)),
                _ => None,
            }
            .ok_or_else(|| format!("bad eigenmode indices in {s:?}"));
        }
        Err(format!(
            "unknown initial state {s:?} (gaussian_bump, eigenmode(k,l), custom_csv:<path>)"
        ))
    }
}

impl std::fmt::Display for InitialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::GaussianBump => write!(f, "gaussian_bump"),
            Self::Eigenmode(k, l) => write!(f, "eigenmode({k},{l})"),
            Self::Csv(p) => write!(f, "custom_csv:{}", p.display()),
        }
    }
}

impl InitialState {
    /// Nodal coefficients normalized in the M-norm. The bump is
    /// `exp(−|x − c|²/(2σ²))` centred in the box with `σ = L/8`.
    pub fn coefficients(&self, basis: &NodalBasis, gram: &GramMatrix) -> Result<CVector> {
        let domain = basis.grid().domain();
        let raw = match self {
            Self::GaussianBump => basis.decompose_real(|x| {
                let r2: f64 = domain
                    .lengths()
                    .iter()
                    .zip(x)
                    .map(|(l, xi)| ((xi - l / 2.0) / (l / 8.0)).powi(2))
                    .sum();
                (-r2 / 2.0).exp()
            })?,
            Self::Eigenmode(k, l) => basis.decompose_real(|x| eigenmode(domain, [*k, *l], x))?,
            Self::Csv(path) => unigroup_core::io::read_vector_csv(std::fs::File::open(path)?)?,
        };
        if raw.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: raw.len(),
            });
        }
        normalize(gram, &raw)
    }
}

#[derive(Debug, Clone)]
pub struct MassCheck {
    pub dim: usize,
    pub level: u32,
    pub n: usize,
    pub floor: f64,
    /// Closed-form smallest eigenvalue: `(h/6)(4 − 2cos(π/cells))` per axis, multiplied across axes.
    pub floor_oracle: f64,
    pub asymmetry: f64,
}

pub fn mass_check(dim: usize, level: u32) -> Result<MassCheck> {
    let domain = if dim == 1 {
        Domain::interval(1.0)?
    } else {
        Domain::square(1.0)?
    };
    let basis = NodalBasis::new(Grid::build(domain, level)?);
    let gram = assemble_mass(&basis)?;
    let g = basis.grid();
    let cells = g.cells() as f64;
    let floor_oracle = (0..dim)
        .map(|a| g.spacing(a) / 6.0 * (4.0 - 2.0 * (PI / cells).cos()))
        .product();
    Ok(MassCheck {
        dim,
        level,
        n: gram.dim(),
        floor: gram.eigen_floor(),
        floor_oracle,
        asymmetry: gram.asymmetry(),
    })
}

/// `W⁻¹ A W` for a random Hermitian `A`: a random M-self-adjoint operator.
pub fn random_m_hermitian(gram: Arc<GramMatrix>, seed: u64) -> Result<ParticularOperator> {
    let mut rng = seeded_rng(seed);
    let a = random_hermitian(&mut rng, gram.dim());
    ParticularOperator::new(gram.from_symmetric_frame(&a)?, gram)
}

pub fn random_state(n: usize, seed: u64) -> CVector {
    random_cvector(&mut seeded_rng(seed), n)
}

/// `|‖ÛᵏΨ‖_M − ‖Ψ‖_M| / ‖Ψ‖_M` for `k = 0..=steps`.
pub fn norm_drift_series(prop: &PadePropagator, psi0: &CVector, steps: usize) -> Result<Vec<f64>> {
    let gram = prop.hamiltonian().gram();
    let n0 = gram.m_norm(psi0)?;
    if n0 == 0.0 {
        return Err(Error::ZeroState);
    }
    let mut psi = psi0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    for _ in 0..steps {
        psi = prop.step(&psi)?;
        out.push((gram.m_norm(&psi)? - n0).abs() / n0);
    }
    Ok(out)
}

/// `‖Û⁻ᵏÛᵏΨ − Ψ‖_M / ‖Ψ‖_M` for each `k`.
pub fn reversal_errors(
    prop: Arc<PadePropagator>,
    psi0: &CVector,
    ks: &[usize],
) -> Result<Vec<f64>> {
    let gram = prop.hamiltonian().gram().clone();
    let forward = DiscreteGroup::forward(prop);
    let reverse = forward.reversed();
    let n0 = gram.m_norm(psi0)?;
    ks.iter()
        .map(|&k| {
            let back = reverse.apply(k, &forward.apply(k, psi0)?)?;
            Ok(gram.m_norm(&(back - psi0))? / n0)
        })
        .collect()
}

/// Single-step errors at the requested dimensionless steps `h_τ`.
pub fn single_step_sweep(
    oracle: &DenseExponential,
    h: &ParticularOperator,
    p: usize,
    h_taus: &[f64],
) -> Result<Vec<StepError>> {
    let norm = oracle.norm();
    h_taus
        .iter()
        .map(|ht| single_step_error(&PadePropagator::build(h, ht / norm, p)?, oracle))
        .collect()
}

/// `‖e^{−imτH} − Ûᵐ‖` for `m = 1..=max_steps` at each `h_τ`.
pub fn multi_step_table(
    oracle: &DenseExponential,
    h: &ParticularOperator,
    p: usize,
    h_taus: &[f64],
    max_steps: usize,
) -> Result<Vec<StepError>> {
    let norm = oracle.norm();
    let mut out = Vec::new();
    for ht in h_taus {
        let prop = PadePropagator::build(h, ht / norm, p)?;
        for m in 1..=max_steps {
            out.push(multi_step_error(&prop, m, oracle)?);
        }
    }
    Ok(out)
}

/// Global error at fixed `T` (given as `T‖H‖`) for each step count; returns `(τ, error)`.
pub fn global_order_sweep(
    oracle: &DenseExponential,
    h: &ParticularOperator,
    p: usize,
    t_norm: f64,
    steps: &[usize],
) -> Result<Vec<(f64, f64)>> {
    let t = t_norm / oracle.norm();
    steps
        .iter()
        .map(|&m| {
            let prop = PadePropagator::build(h, t / m as f64, p)?;
            Ok((prop.tau(), multi_step_error(&prop, m, oracle)?.measured))
        })
        .collect()
}

/// Initial field for the spatial sweeps: the two lowest modes along x.
fn two_mode(domain: &Domain, x: &[f64]) -> f64 {
    eigenmode(domain, [1, 1], x) + 0.5 * eigenmode(domain, [2, 1], x)
}

fn two_mode_at(domain: &Domain, t: f64, x: &[f64]) -> Complex64 {
    let l1 = eigenmode_energy(domain, [1, 1]);
    let l2 = eigenmode_energy(domain, [2, 1]);
    Complex64::new(0.0, -l1 * t).exp() * eigenmode(domain, [1, 1], x)
        + Complex64::new(0.0, -l2 * t).exp() * (0.5 * eigenmode(domain, [2, 1], x))
}

#[derive(Debug, Clone)]
pub struct SpatialSweep {
    pub dim: usize,
    pub levels: Vec<u32>,
    pub h: Vec<f64>,
    /// `‖I_h u₀ − u₀‖_{L²}`.
    pub projection: Vec<f64>,
    /// `‖e^{−itH_h} I_h u₀ − u(t)‖_{L²}` with exact time evolution on both sides.
    pub solution: Vec<f64>,
    pub time: f64,
}

impl SpatialSweep {
    pub fn projection_slope(&self) -> Result<f64> {
        loglog_slope(&self.h, &self.projection)
    }

    pub fn solution_slope(&self) -> Result<f64> {
        loglog_slope(&self.h, &self.solution)
    }
}

/// Kinetic problem with a two-mode eigenfunction start.
pub fn spatial_sweep(domain: &Domain, levels: &[u32], time: f64) -> Result<SpatialSweep> {
    let domain = domain.clone();
    let mut sweep = SpatialSweep {
        dim: domain.dim(),
        levels: levels.to_vec(),
        h: vec![],
        projection: vec![],
        solution: vec![],
        time,
    };
    for &level in levels {
        let problem = Problem::build(domain.clone(), level, Potential::Free)?;
        let psi0 = problem.basis.decompose_real(|x| two_mode(&domain, x))?;
        let oracle = DenseExponential::new(&problem.hamiltonian)?;
        let psi_t = oracle.apply(time, &psi0)?;
        sweep.h.push(problem.h());
        sweep.projection.push(
            problem
                .basis
                .l2_error(&psi0, |x| Complex64::new(two_mode(&domain, x), 0.0))?,
        );
        sweep.solution.push(
            problem
                .basis
                .l2_error(&psi_t, |x| two_mode_at(&domain, time, x))?,
        );
    }
    Ok(sweep)
}

/// Errors of one Padé step against the continuum solution over an `(h, τ)` grid.
#[derive(Debug, Clone)]
pub struct CompositeSweep {
    pub dim: usize,
    pub p: usize,
    pub levels: Vec<u32>,
    pub h: Vec<f64>,
    pub tau: Vec<f64>,
    /// `errors[i][j]` at `h[i]`, `tau[j]`.
    pub errors: Vec<Vec<f64>>,
}

pub fn composite_sweep(
    dim: usize,
    levels: &[u32],
    taus: &[f64],
    p: usize,
) -> Result<CompositeSweep> {
    let domain = if dim == 1 {
        Domain::interval(1.0)?
    } else {
        Domain::square(1.0)?
    };
    let lambda = eigenmode_energy(&domain, [1, 1]);
    let mut out = CompositeSweep {
        dim,
        p,
        levels: levels.to_vec(),
        h: vec![],
        tau: taus.to_vec(),
        errors: vec![],
    };
    for &level in levels {
        let problem = Problem::build(domain.clone(), level, Potential::Free)?;
        let psi0 = problem
            .basis
            .decompose_real(|x| eigenmode(&domain, [1, 1], x))?;
        let mut row = Vec::with_capacity(taus.len());
        for &tau in taus {
            let prop = PadePropagator::build(&problem.hamiltonian, tau, p)?;
            let psi = prop.step(&psi0)?;
            let phase = Complex64::new(0.0, -lambda * tau).exp();
            row.push(
                problem
                    .basis
                    .l2_error(&psi, |x| phase * eigenmode(&domain, [1, 1], x))?,
            );
        }
        out.h.push(problem.h());
        out.errors.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConservationRun {
    /// Relative M-norm drift per step.
    pub norm_drift: Vec<f64>,
    pub energy: ExpectationSeries,
}

impl ConservationRun {
    /// `max_n |⟨E⟩_n − ⟨E⟩₀| / |⟨E⟩₀|`.
    pub fn energy_drift(&self) -> f64 {
        self.energy.max_deviation() / self.energy.values[0].abs()
    }
}

pub fn conservation_run(
    problem: &Problem,
    p: usize,
    tau: f64,
    steps: usize,
    psi0: &CVector,
) -> Result<ConservationRun> {
    let prop = Arc::new(PadePropagator::build(&problem.hamiltonian, tau, p)?);
    let states = DiscreteGroup::forward(prop).trajectory(steps, psi0)?;
    let n0 = problem.gram.m_norm(psi0)?;
    let norm_drift = states
        .iter()
        .map(|s| Ok((problem.gram.m_norm(s)? - n0).abs() / n0))
        .collect::<Result<_>>()?;
    let energy = ExpectationSeries::record(&problem.hamiltonian, &states)?;
    Ok(ConservationRun { norm_drift, energy })
}

#[derive(Debug, Clone)]
pub struct CommutatorCheck {
    pub label: String,
    pub residual: f64,
}

/// `[H, q(H)]` for polynomials of degree 1 to 3 (scaled by `Σ|a_j|‖H‖^{1+j}`)
/// and the negative control `[H, V]` for the coordinate potential `Σ x_i²`
/// (scaled by `‖H‖‖V‖`), both in Frobenius norm.
pub fn commutator_checks(problem: &Problem) -> Result<(Vec<CommutatorCheck>, CommutatorCheck)> {
    let polys: [(&str, &[f64]); 3] = [
        ("1+2H", &[1.0, 2.0]),
        ("H^2+3H", &[0.0, 3.0, 1.0]),
        ("H^3-H^2+0.5", &[0.5, 0.0, -1.0, 1.0]),
    ];
    let h = &problem.hamiltonian;
    let checks = polys
        .iter()
        .map(|(label, c)| {
            Ok(CommutatorCheck {
                label: label.to_string(),
                residual: polynomial_commutator_residual(h, c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let v = assemble_potential(&problem.basis, problem.gram.clone(), |x| {
        x.iter().map(|c| c * c).sum()
    })?;
    let control = CommutatorCheck {
        label: "[H0, X^2+Y^2]".into(),
        residual: relative_commutator(problem.kinetic.operator(), &v)?,
    };
    Ok((checks, control))
}

#[derive(Debug, Clone, Copy)]
pub struct AdjointResiduals {
    pub pairing: f64,
    pub involution: f64,
    pub antihomomorphism: f64,
    pub routes: f64,
}

/// Worst relative residuals of the M-adjoint identities over random complex matrices.
pub fn adjoint_identities(gram: &GramMatrix, trials: usize, seed: u64) -> Result<AdjointResiduals> {
    let mut rng = seeded_rng(seed);
    let n = gram.dim();
    let mut worst = AdjointResiduals {
        pairing: 0.0,
        involution: 0.0,
        antihomomorphism: 0.0,
        routes: 0.0,
    };
    let rel = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    for _ in 0..trials {
        let a = unigroup_core::linalg::random_cmatrix(&mut rng, n);
        let b = unigroup_core::linalg::random_cmatrix(&mut rng, n);
        let u = random_cvector(&mut rng, n);
        let v = random_cvector(&mut rng, n);
        let a_dag = gram.m_adjoint(&a)?;
        let lhs = gram.m_inner(&(&a * &u), &v)?;
        let rhs = gram.m_inner(&u, &(&a_dag * &v))?;
        let scale = gram.m_norm(&(&a * &u))? * gram.m_norm(&v)?
            + gram.m_norm(&u)? * gram.m_norm(&(&a_dag * &v))?;
        worst.pairing = worst.pairing.max(rel((lhs - rhs).norm(), scale));
        worst.involution = worst
            .involution
            .max(rel(max_abs(&(gram.m_adjoint(&a_dag)? - &a)), max_abs(&a)));
        let ab_dag = gram.m_adjoint(&(&a * &b))?;
        let ba = gram.m_adjoint(&b)? * &a_dag;
        worst.antihomomorphism = worst
            .antihomomorphism
            .max(rel(max_abs(&(&ab_dag - ba)), max_abs(&ab_dag)));
        worst.routes = worst.routes.max(rel(
            max_abs(&(gram.m_adjoint_via_mass(&a)? - &a_dag)),
            max_abs(&a_dag),
        ));
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct NlsSettings {
    pub alpha: Complex64,
    pub exponent: u32,
    pub p: usize,
    pub substeps: usize,
    /// Window length; when absent it is chosen so that `K` equals `target_contraction` at `Ψ₀`.
    pub tau: Option<f64>,
    pub target_contraction: f64,
    pub windows: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct NlsWindow {
    pub record: WindowRecord,
    pub oracle: OracleCheck,
    /// `Kⁿ/(1 − K)·(2‖Ψ₀‖_M + M_V τ)` at the accepted iteration count.
    pub a_priori: f64,
}

impl NlsWindow {
    pub fn ratios_within_contraction(&self) -> bool {
        self.oracle
            .state
            .ratios
            .iter()
            .all(|r| *r <= self.record.contraction)
    }
}

#[derive(Debug, Clone)]
pub struct NlsRun {
    pub tau: f64,
    pub windows: Vec<NlsWindow>,
    pub endpoints: Vec<CVector>,
}

/// Windowed Picard evolution with a tolerance-refined self-oracle on every window.
pub fn nls_run(problem: &Problem, psi0: &CVector, s: &NlsSettings) -> Result<NlsRun> {
    let term = NonlinearTerm::power_law(s.alpha, s.exponent, problem.gram.clone(), psi0)?;
    let tau = match s.tau {
        Some(t) => t,
        None if term.lipschitz() > 0.0 => s.target_contraction / term.lipschitz(),
        None => return Err(Error::InvalidStep(0.0)),
    };
    let prop = Arc::new(PadePropagator::build(
        &problem.hamiltonian,
        tau / s.substeps as f64,
        s.p,
    )?);
    let rule = QuadratureRule::for_order(s.p, s.substeps, tau)?;
    let scheme = DuhamelScheme::new(DiscreteGroup::forward(prop), rule, term)?;
    let mut current = psi0.clone();
    let mut endpoints = vec![current.clone()];
    let mut windows = Vec::with_capacity(s.windows);
    for index in 0..s.windows {
        let wrap = |source: Error| Error::Window {
            index,
            source: Box::new(source),
        };
        let window = scheme.rebased(&current).map_err(wrap)?;
        let oracle = window
            .self_oracle(&current, s.tol, s.max_iter)
            .map_err(wrap)?;
        let (traj, state) = window.picard(&current, s.tol, s.max_iter).map_err(wrap)?;
        let k = state.contraction;
        let norm0 = problem.gram.m_norm(&current)?;
        let a_priori = k.powi(state.iterations as i32) / (1.0 - k)
            * (2.0 * norm0 + window.term().sup_bound() * tau);
        current = traj.last().expect("k + 1 samples").clone();
        let record = WindowRecord {
            window: index,
            contraction: k,
            lipschitz: window.term().lipschitz(),
            radius: state.radius,
            iterations: state.iterations,
            bound: state.bound,
            max_ratio: state.max_ratio(),
            m_norm: problem.gram.m_norm(&current)?,
        };
        windows.push(NlsWindow {
            record,
            oracle,
            a_priori,
        });
        endpoints.push(current.clone());
    }
    Ok(NlsRun {
        tau,
        windows,
        endpoints,
    })
}
