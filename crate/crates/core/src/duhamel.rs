//! Nonlinear evolution `i∂ₜΨ = HΨ + V(Ψ)` in integrating-factor form,
//! solved window by window with Picard iteration.
//!
//! On a window of length `τ` split into `k` sub-steps of the Padé group `Û`
//! the fixed-point map acts on trajectories `Φ = (Φ⁰, …, Φᵏ)`:
//!
//! `Ŝ(Φ)ⁱ = ÛⁱΨ₀ − i Σ_{j≤i} w_j⁽ⁱ⁾ Ûⁱ⁻ʲ V(Φʲ)`
//!
//! where `w⁽ⁱ⁾` is the quadrature rule on the first `i` sub-steps. `Û` is an
//! M-isometry and `Σ_j |w_j⁽ⁱ⁾| ≤ τ`, so `Ŝ` contracts with `K = c_V τ` in the
//! sup-over-samples M-norm whenever the iterates stay inside the ball where
//! `c_V` is a Lipschitz constant of `V`.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::gram::GramMatrix;
use crate::linalg::seeded_rng;
use crate::operators::ParticularOperator;
use crate::propagator::DiscreteGroup;
use crate::{CVector, Error, Result};

/// Iterate differences below this fraction of the trajectory size are
/// treated as round-off when forming contraction ratios.
pub const RATIO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Kind {
    Zero,
    Linear(ParticularOperator),
    /// `α |Ψ|ⁿ Ψ`, applied coefficient by coefficient.
    PowerLaw {
        alpha: Complex64,
        exponent: u32,
    },
}

/// How the working ball follows the state from window to window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Unbounded,
    Fixed(f64),
    /// `factor · max_k |Ψ₀_k|` at the start of each window.
    Scaled(f64),
}

/// A nonlinearity with its Lipschitz data on the working ball
/// `{x : max_k |x_k| ≤ r}`.
#[derive(Debug, Clone)]
pub struct NonlinearTerm {
    kind: Kind,
    gram: Arc<GramMatrix>,
    radius_rule: Radius,
    radius: f64,
    lipschitz: f64,
    sup_bound: f64,
}

impl NonlinearTerm {
    pub fn zero(gram: Arc<GramMatrix>) -> Self {
        Self {
            kind: Kind::Zero,
            gram,
            radius_rule: Radius::Unbounded,
            radius: f64::INFINITY,
            lipschitz: 0.0,
            sup_bound: 0.0,
        }
    }

    /// `V(Ψ) = AΨ`, globally Lipschitz with `c_V = ‖A‖_M`.
    pub fn linear(op: ParticularOperator) -> Result<Self> {
        let lipschitz = op.m_norm()?;
        Ok(Self::linear_with_constant(op, lipschitz))
    }

    /// `V(Ψ) = AΨ` with a caller-supplied Lipschitz constant (e.g. a sup
    /// bound of a potential on the domain).
    pub fn linear_with_constant(op: ParticularOperator, lipschitz: f64) -> Self {
        let gram = op.gram().clone();
        Self {
            kind: Kind::Linear(op),
            gram,
            radius_rule: Radius::Unbounded,
            radius: f64::INFINITY,
            lipschitz,
            sup_bound: f64::INFINITY,
        }
    }

    /// `V(Ψ) = α|Ψ|ⁿΨ` on the ball of radius `2·max|Ψ₀|`, re-based every window.
    ///
    /// Pointwise `||x|ⁿx − |y|ⁿy| ≤ (n+1) rⁿ |x − y| ≤ 2n rⁿ |x − y|`, and a
    /// coefficientwise Lipschitz bound `L` gives `κ L` in the M-norm with
    /// `κ = √(λ_max/λ_min)` of the mass matrix, so `c_V = 2κ|α| n rⁿ`.
    pub fn power_law(
        alpha: Complex64,
        exponent: u32,
        gram: Arc<GramMatrix>,
        psi0: &CVector,
    ) -> Result<Self> {
        Self::power_law_with_radius(alpha, exponent, gram, Radius::Scaled(2.0), psi0)
    }

    pub fn power_law_with_radius(
        alpha: Complex64,
        exponent: u32,
        gram: Arc<GramMatrix>,
        rule: Radius,
        psi0: &CVector,
    ) -> Result<Self> {
        if exponent == 0 {
            return Err(Error::InvalidDomain(
                "power-law exponent must be at least 1".into(),
            ));
        }
        if !(alpha.re.is_finite() && alpha.im.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        let mut term = Self {
            kind: Kind::PowerLaw { alpha, exponent },
            gram,
            radius_rule: rule,
            radius: 0.0,
            lipschitz: 0.0,
            sup_bound: 0.0,
        };
        term.rebase(psi0)?;
        Ok(term)
    }

    /// Recomputes the ball and constants for a window starting at `psi0`.
    pub fn rebase(&mut self, psi0: &CVector) -> Result<()> {
        if psi0.len() != self.gram.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gram.dim(),
                got: psi0.len(),
            });
        }
        let Kind::PowerLaw { alpha, exponent } = self.kind else {
            return Ok(());
        };
        let radius = match self.radius_rule {
            Radius::Unbounded => f64::INFINITY,
            Radius::Fixed(r) => r,
            Radius::Scaled(f) => f * sup_abs(psi0),
        };
        let n = exponent as i32;
        let kappa = self.gram.norm_equivalence();
        self.radius = radius;
        self.lipschitz = 2.0 * kappa * alpha.norm() * exponent as f64 * radius.powi(n);
        // ‖V(x)‖_M ≤ √λ_max ‖V(x)‖₂ ≤ √λ_max √N |α| r^{n+1}
        self.sup_bound = (self.gram.eigen_ceiling() * self.gram.dim() as f64).sqrt()
            * alpha.norm()
            * radius.powi(n + 1);
        Ok(())
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Bound on `‖V(x)‖_M` over the ball.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn gram(&self) -> &Arc<GramMatrix> {
        &self.gram
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Kind::Zero)
    }

    pub fn eval(&self, psi: &CVector) -> Result<CVector> {
        if psi.len() != self.gram.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gram.dim(),
                got: psi.len(),
            });
        }
        let out = match &self.kind {
            Kind::Zero => CVector::zeros(psi.len()),
            Kind::Linear(op) => op.apply(psi)?,
            Kind::PowerLaw { alpha, exponent } => {
                psi.map(|z| z * *alpha * z.norm().powi(*exponent as i32))
            }
        };
        if let Some(index) = out
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(out)
    }

    fn check_ball(&self, psi: &CVector) -> Result<()> {
        let sup = sup_abs(psi);
        if sup > self.radius {
            return Err(Error::LeftLipschitzBall {
                sup,
                radius: self.radius,
            });
        }
        Ok(())
    }

    /// Largest observed `‖V(u) − V(v)‖_M / ‖u − v‖_M` over random pairs in
    /// the ball (radius capped at 1 for unbounded terms).
    pub fn spot_check(&self, pairs: usize, seed: u64) -> Result<f64> {
        let mut rng = seeded_rng(seed);
        let n = self.gram.dim();
        let r = if self.radius.is_finite() {
            self.radius
        } else {
            1.0
        };
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let mut sample = || {
                CVector::from_fn(n, |_, _| {
                    let rho = r * rng.gen::<f64>().sqrt();
                    Complex64::from_polar(rho, rng.gen_range(0.0..std::f64::consts::TAU))
                })
            };
            let u = sample();
            let v = sample();
            let num = self.gram.m_norm(&(self.eval(&u)? - self.eval(&v)?))?;
            let den = self.gram.m_norm(&(&u - &v))?;
            if den > 0.0 {
                worst = worst.max(num / den);
            }
        }
        Ok(worst)
    }
}

fn sup_abs(psi: &CVector) -> f64 {
    psi.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Trapezoid,
    Simpson,
}

/// Composite quadrature on the `k` sub-steps of a window of length `tau`.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureRule {
    kind: RuleKind,
    k: usize,
    tau: f64,
}

impl QuadratureRule {
    pub fn new(kind: RuleKind, k: usize, tau: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidStep(tau));
        }
        if kind == RuleKind::Simpson && k % 2 == 1 {
            return Err(Error::OddSimpson(k));
        }
        Ok(Self { kind, k, tau })
    }

    /// Trapezoid for `p = 1`, Simpson for higher Padé orders.
    pub fn for_order(p: usize, k: usize, tau: f64) -> Result<Self> {
        Self::new(
            if p <= 1 {
                RuleKind::Trapezoid
            } else {
                RuleKind::Simpson
            },
            k,
            tau,
        )
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn substeps(&self) -> usize {
        self.k
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Weights over the full window.
    pub fn weights(&self) -> Vec<f64> {
        self.prefix_weights(self.k)
    }

    /// Weights for `∫₀^{iτ/k}` on the samples `0..=i`. Simpson prefixes of odd
    /// length end with a three-eighths panel (or a trapezoid when `i = 1`);
    /// all weights are positive.
    pub fn prefix_weights(&self, i: usize) -> Vec<f64> {
        let dt = self.tau / self.k as f64;
        let mut w = vec![0.0; i + 1];
        if i == 0 {
            return w;
        }
        match self.kind {
            RuleKind::Trapezoid => {
                for j in 0..i {
                    w[j] += 0.5 * dt;
                    w[j + 1] += 0.5 * dt;
                }
            }
            RuleKind::Simpson => {
                if i == 1 {
                    w[0] += 0.5 * dt;
                    w[1] += 0.5 * dt;
                    return w;
                }
                let simpson_end = if i.is_multiple_of(2) { i } else { i - 3 };
                for j in (0..simpson_end).step_by(2) {
                    w[j] += dt / 3.0;
                    w[j + 1] += 4.0 * dt / 3.0;
                    w[j + 2] += dt / 3.0;
                }
                if i % 2 == 1 {
                    let s = simpson_end;
                    for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                        w[s + o] += 3.0 * dt / 8.0 * c;
                    }
                }
            }
        }
        w
    }
}

/// One window of the fully discrete fixed-point map.
#[derive(Debug, Clone)]
pub struct DuhamelScheme {
    group: DiscreteGroup,
    rule: QuadratureRule,
    term: NonlinearTerm,
}

/// Diagnostics of a converged Picard solve.
#[derive(Debug, Clone)]
pub struct PicardState {
    pub iterations: usize,
    pub contraction: f64,
    pub delta_first: f64,
    /// Rigorous bound on the distance from the last iterate to the fixed point.
    pub bound: f64,
    /// `sup_i ‖Φₙⁱ − Φₙ₋₁ⁱ‖_M` for `n = 1, 2, …`.
    pub differences: Vec<f64>,
    /// Successive difference ratios above the round-off floor.
    pub ratios: Vec<f64>,
    pub radius: f64,
}

impl PicardState {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

impl DuhamelScheme {
    /// `group` steps by `τ/k`; `rule` spans the window `τ`.
    pub fn new(group: DiscreteGroup, rule: QuadratureRule, term: NonlinearTerm) -> Result<Self> {
        let sub = group.propagator().tau();
        let expected = rule.tau() / rule.substeps() as f64;
        if (sub - expected).abs() > 1e-12 * expected {
            return Err(Error::InvalidStep(sub));
        }
        if !term.gram().same_as(group.propagator().hamiltonian().gram()) {
            return Err(Error::GramMismatch);
        }
        Ok(Self { group, rule, term })
    }

    pub fn term(&self) -> &NonlinearTerm {
        &self.term
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn group(&self) -> &DiscreteGroup {
        &self.group
    }

    pub fn window(&self) -> f64 {
        self.rule.tau()
    }

    /// `K = c_V τ`.
    pub fn contraction(&self) -> f64 {
        self.term.lipschitz() * self.rule.tau()
    }

    fn gram(&self) -> &GramMatrix {
        self.term.gram()
    }

    /// `ÛⁱΨ₀` for `i = 0..=k`.
    pub fn free_trajectory(&self, psi0: &CVector) -> Result<Vec<CVector>> {
        self.group.trajectory(self.rule.substeps(), psi0)
    }

    /// `Ŝ(Φ)` given the precomputed free trajectory.
    fn apply_map(&self, free: &[CVector], phi: &[CVector]) -> Result<Vec<CVector>> {
        let k = self.rule.substeps();
        if phi.len() != k + 1 {
            return Err(Error::DimensionMismatch {
                expected: k + 1,
                got: phi.len(),
            });
        }
        let mut out: Vec<CVector> = free.to_vec();
        if self.term.is_zero() {
            return Ok(out);
        }
        // propagated[j][m] = Ûᵐ V(Φʲ)
        let mut propagated: Vec<Vec<CVector>> = Vec::with_capacity(k + 1);
        for (j, sample) in phi.iter().enumerate() {
            let v = self.term.eval(sample)?;
            propagated.push(self.group.trajectory(k - j, &v)?);
        }
        let minus_i = Complex64::new(0.0, -1.0);
        for (i, target) in out.iter_mut().enumerate().skip(1) {
            let weights = self.rule.prefix_weights(i);
            for (j, w) in weights.iter().enumerate() {
                *target += &propagated[j][i - j] * (minus_i * *w);
            }
        }
        Ok(out)
    }

    /// `Ŝ(Φ)` for a window starting at `psi0`.
    pub fn step(&self, psi0: &CVector, phi: &[CVector]) -> Result<Vec<CVector>> {
        let k = self.contraction();
        if k >= 1.0 {
            return Err(Error::ContractionViolated(k));
        }
        let free = self.free_trajectory(psi0)?;
        self.apply_map(&free, phi)
    }

    fn sup_distance(&self, a: &[CVector], b: &[CVector]) -> Result<f64> {
        a.iter().zip(b).try_fold(0.0f64, |acc, (x, y)| {
            Ok(acc.max(self.gram().m_norm(&(x - y))?))
        })
    }

    /// Successive approximations from the constant trajectory `Ψ₀` until the
    /// bound `min(Kⁿ δ₁, K ‖Φₙ − Φₙ₋₁‖)/(1 − K)` drops to `tol`.
    pub fn picard(
        &self,
        psi0: &CVector,
        tol: f64,
        max_iter: usize,
    ) -> Result<(Vec<CVector>, PicardState)> {
        let contraction = self.contraction();
        if contraction.is_nan() || contraction >= 1.0 {
            return Err(Error::ContractionViolated(contraction));
        }
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::InvalidStep(tol));
        }
        self.term.check_ball(psi0)?;
        let free = self.free_trajectory(psi0)?;
        let mut phi = vec![psi0.clone(); self.rule.substeps() + 1];
        let mut state = PicardState {
            iterations: 0,
            contraction,
            delta_first: 0.0,
            bound: f64::INFINITY,
            differences: Vec::new(),
            ratios: Vec::new(),
            radius: self.term.radius(),
        };
        let tail = 1.0 / (1.0 - contraction);
        while state.iterations < max_iter {
            let next = self.apply_map(&free, &phi)?;
            for sample in &next {
                self.term.check_ball(sample)?;
            }
            let diff = self.sup_distance(&next, &phi)?;
            let scale = next.iter().try_fold(0.0f64, |acc, x| {
                Ok::<f64, Error>(acc.max(self.gram().m_norm(x)?))
            })?;
            if let Some(&prev) = state.differences.last() {
                if prev > RATIO_FLOOR * scale && diff > RATIO_FLOOR * scale {
                    state.ratios.push(diff / prev);
                }
            }
            state.differences.push(diff);
            state.iterations += 1;
            if state.iterations == 1 {
                state.delta_first = diff;
            }
            let a_priori = contraction.powi(state.iterations as i32) * state.delta_first * tail;
            let a_posteriori = if state.iterations > 1 {
                contraction * diff * tail
            } else {
                f64::INFINITY
            };
            state.bound = a_priori.min(a_posteriori);
            phi = next;
            if state.bound <= tol {
                return Ok((phi, state));
            }
        }
        Err(Error::NotConverged {
            iterations: state.iterations,
            bound: state.bound,
        })
    }

    /// The same scheme with the nonlinearity's ball re-based at `psi0`.
    pub fn rebased(&self, psi0: &CVector) -> Result<Self> {
        let mut out = self.clone();
        out.term.rebase(psi0)?;
        Ok(out)
    }

    /// Chains `n_windows` Picard solves, re-basing the ball at each window start.
    pub fn evolve(
        &self,
        psi0: &CVector,
        n_windows: usize,
        tol: f64,
        max_iter: usize,
    ) -> Result<Evolution> {
        let mut current = psi0.clone();
        let mut endpoints = vec![current.clone()];
        let mut windows = Vec::with_capacity(n_windows);
        for index in 0..n_windows {
            let wrap = |source: Error| Error::Window {
                index,
                source: Box::new(source),
            };
            let scheme = self.rebased(&current).map_err(wrap)?;
            let (traj, state) = scheme.picard(&current, tol, max_iter).map_err(wrap)?;
            current = traj.last().expect("trajectory has k + 1 samples").clone();
            windows.push(WindowRecord {
                window: index,
                contraction: state.contraction,
                lipschitz: scheme.term.lipschitz(),
                radius: state.radius,
                iterations: state.iterations,
                bound: state.bound,
                max_ratio: state.max_ratio(),
                m_norm: self.gram().m_norm(&current).map_err(wrap)?,
            });
            endpoints.push(current.clone());
        }
        Ok(Evolution { endpoints, windows })
    }

    /// Solves one window at `tol` and again at `tol/10`; the second run is the
    /// reference for the first run's error bound.
    pub fn self_oracle(&self, psi0: &CVector, tol: f64, max_iter: usize) -> Result<OracleCheck> {
        let (coarse, state) = self.picard(psi0, tol, max_iter)?;
        let (fine, fine_state) = self.picard(psi0, tol / 10.0, max_iter)?;
        Ok(OracleCheck {
            bound: state.bound,
            reference_bound: fine_state.bound,
            measured: self.sup_distance(&coarse, &fine)?,
            state,
        })
    }
}

/// Comparison of a Picard solve with a tighter reference solve.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub bound: f64,
    pub reference_bound: f64,
    pub measured: f64,
    pub state: PicardState,
}

impl OracleCheck {
    /// The distance to the reference can exceed the bound by at most the
    /// reference's own bound.
    pub fn holds(&self) -> bool {
        self.measured <= self.bound + self.reference_bound
    }
}

#[derive(Debug, Clone)]
pub struct WindowRecord {
    pub window: usize,
    pub contraction: f64,
    pub lipschitz: f64,
    pub radius: f64,
    pub iterations: usize,
    pub bound: f64,
    pub max_ratio: f64,
    pub m_norm: f64,
}

impl WindowRecord {
    pub const CSV_HEADER: &'static str = "window,K,c_V,radius,iterations,bound,max_ratio,m_norm";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e}",
            self.window,
            self.contraction,
            self.lipschitz,
            self.radius,
            self.iterations,
            self.bound,
            self.max_ratio,
            self.m_norm
        )
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    /// `Ψ₀` followed by every window endpoint.
    pub endpoints: Vec<CVector>,
    pub windows: Vec<WindowRecord>,
}

impl Evolution {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(WindowRecord::CSV_HEADER);
        s.push('\n');
        for w in &self.windows {
            let _ = writeln!(s, "{}", w.csv_row());
        }
        s
    }
}
