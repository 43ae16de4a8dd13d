//! Diagonal Padé time stepping `R_pp(−iτH) = D⁻¹S` with `S = N_pp(−iτH)` and
//! `D = N_pp(iτH)`.
//!
//! For an M-self-adjoint `H` the step is unitary in the M-norm: in the
//! symmetric frame `W H W⁻¹ = V Λ V*` and the step becomes
//! `V R_pp(−iτΛ) V*` with every `|R_pp(−iτλ)| = 1`. The step matrix is never
//! formed in [`PadePropagator::step`]; each step runs through the `p` linear
//! factors of `D⁻¹S`. The reverse step `Û† = R_pp(iτH)` inverts each factor.

use std::sync::Arc;

use log::warn;
use nalgebra::{Dyn, LU};
use num_complex::Complex64;

use crate::linalg::{cc_mul, hermitian_eigen, is_real, rc_mul, spectral_norm, to_complex};
use crate::operators::ParticularOperator;
use crate::{CMatrix, CVector, Error, RMatrix, Result};
use nalgebra::DVector;

/// Largest supported diagonal order; beyond it the coefficients lose
/// relative accuracy against the round-off of the polynomial evaluation.
pub const MAX_PADE_ORDER: usize = 6;

/// Dense symmetric eigensolves above this size are refused.
pub const MAX_DENSE_DIM: usize = 10_000;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `c_j = (p+q−j)! p! / ((p+q)! j! (p−j)!)` for `j = 0..=p`.
pub fn pade_coefficients(p: usize, q: usize) -> Result<Vec<f64>> {
    if p != q || p == 0 || p > MAX_PADE_ORDER {
        return Err(Error::UnsupportedPadeOrder { p, q });
    }
    Ok((0..=p)
        .map(|j| {
            factorial(p + q - j) * factorial(p)
                / (factorial(p + q) * factorial(j) * factorial(p - j))
        })
        .collect())
}

/// `(N_pq(A), D_pq(A)) = (Σ c_j Aʲ, Σ c_j (−A)ʲ)`.
pub fn pade_polynomials(p: usize, q: usize, a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let c = pade_coefficients(p, q)?;
    let n = a.nrows();
    let mut num = CMatrix::zeros(n, n);
    let mut den = CMatrix::zeros(n, n);
    let mut power = CMatrix::identity(n, n);
    for (j, cj) in c.iter().enumerate() {
        if j > 0 {
            power = cc_mul(&power, a);
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        num += power.scale(*cj);
        den += power.scale(sign * cj);
    }
    Ok((num, den))
}

/// Scalar `R_pp(z) = N_pp(z) / N_pp(−z)`.
pub fn pade_scalar(p: usize, z: Complex64) -> Result<Complex64> {
    let c = pade_coefficients(p, p)?;
    let eval = |w: Complex64| {
        c.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, cj| acc * w + cj)
    };
    Ok(eval(z) / eval(-z))
}

/// First `terms` Taylor coefficients of `R_pp(z)` at 0, by power-series division.
pub fn pade_series(p: usize, terms: usize) -> Result<Vec<f64>> {
    let c = pade_coefficients(p, p)?;
    let num = |k: usize| if k <= p { c[k] } else { 0.0 };
    let den = |k: usize| {
        if k <= p {
            if k.is_multiple_of(2) {
                c[k]
            } else {
                -c[k]
            }
        } else {
            0.0
        }
    };
    let mut r = Vec::with_capacity(terms);
    for k in 0..terms {
        let s: f64 = (1..=k).map(|j| den(j) * r[k - j]).sum();
        r.push((num(k) - s) / den(0));
    }
    Ok(r)
}

/// `|1/(2p+1)! − c_{p,2p+1}|`, the leading local error constant.
///
/// Since `D(0) = 1`, the first nonzero coefficient of `e^z − R(z)` equals
/// that of `D(z)e^z − N(z)`, namely `Σ_j (−1)ʲ c_j / (2p+1−j)!`. Scaled by
/// `(2p)!(2p+1)!` every term is an integer, so the sum is formed exactly
/// instead of cancelling in floating point.
pub fn local_error_constant(p: usize) -> Result<f64> {
    pade_coefficients(p, p)?;
    let fact = |n: usize| -> i128 { (1..=n as i128).product() };
    let binom = |n: usize, k: usize| fact(n) / (fact(k) * fact(n - k));
    let sum: i128 = (0..=p)
        .map(|j| {
            let term = binom(2 * p + 1, j) * fact(2 * p - j) * fact(p) / fact(p - j);
            if j % 2 == 0 {
                term
            } else {
                -term
            }
        })
        .sum();
    Ok(sum.abs() as f64 / (fact(2 * p) as f64 * fact(2 * p + 1) as f64))
}

/// Builds `Σ c_j (s τ)^j Hʲ` for `s = ±i` from real or complex powers of `H`.
fn step_factors(h: &CMatrix, tau: f64, p: usize) -> Result<(CMatrix, CMatrix)> {
    let c = pade_coefficients(p, p)?;
    let n = h.nrows();
    let mut s = CMatrix::zeros(n, n);
    let mut d = CMatrix::zeros(n, n);
    // (−iτ)^j and (iτ)^j
    let mut minus = Complex64::new(1.0, 0.0);
    let mut plus = Complex64::new(1.0, 0.0);
    let mut add = |power: &CMatrix, j: usize, minus: Complex64, plus: Complex64| {
        s += power.map(|z| z * minus * c[j]);
        d += power.map(|z| z * plus * c[j]);
    };
    if is_real(h) {
        let hr: RMatrix = h.map(|z| z.re);
        let mut power = RMatrix::identity(n, n);
        for j in 0..=p {
            if j > 0 {
                power = &power * &hr;
                minus *= Complex64::new(0.0, -tau);
                plus *= Complex64::new(0.0, tau);
            }
            add(&to_complex(&power), j, minus, plus);
        }
    } else {
        let mut power = CMatrix::identity(n, n);
        for j in 0..=p {
            if j > 0 {
                power = cc_mul(&power, h);
                minus *= Complex64::new(0.0, -tau);
                plus *= Complex64::new(0.0, tau);
            }
            add(&power, j, minus, plus);
        }
    }
    Ok((s, d))
}

/// Roots of `N_pp(z) = Σ c_j zʲ`, from the companion matrix and polished by Newton steps.
pub fn pade_roots(p: usize) -> Result<Vec<Complex64>> {
    let c = pade_coefficients(p, p)?;
    let mut companion = RMatrix::zeros(p, p);
    for k in 0..p {
        companion[(0, k)] = -c[p - 1 - k] / c[p];
        if k + 1 < p {
            companion[(k + 1, k)] = 1.0;
        }
    }
    let mut roots: Vec<Complex64> = companion.complex_eigenvalues().iter().copied().collect();
    for z in &mut roots {
        for _ in 0..3 {
            let (mut f, mut df) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for &cj in c.iter().rev() {
                df = df * *z + f;
                f = f * *z + cj;
            }
            if df.norm() > 0.0 {
                *z -= f / df;
            }
        }
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(roots)
}

/// One-step map `Û = D⁻¹S`.
///
/// With `N_pp(z) = c_p ∏ (z − n_j)` and the roots closed under conjugation,
/// `Û = ∏_j (iτH − n̄_j)⁻¹(−iτH − n_j)`. Each factor is M-unitary on its
/// own, so the step is applied factor by factor and round-off does not grow
/// with powers of `τ‖H‖`.
#[derive(Debug, Clone)]
pub struct PadePropagator {
    p: usize,
    tau: f64,
    hamiltonian: ParticularOperator,
    roots: Vec<Complex64>,
    /// LU of `iτH − n̄_j`, used by forward steps.
    forward_lu: Vec<LU<Complex64, Dyn, Dyn>>,
    /// LU of `−iτH − n_j`, used by reverse steps.
    reverse_lu: Vec<LU<Complex64, Dyn, Dyn>>,
    real_h: Option<RMatrix>,
    h_tau: f64,
}

impl PadePropagator {
    pub fn build(hamiltonian: &ParticularOperator, tau: f64, p: usize) -> Result<Self> {
        let roots = pade_roots(p)?;
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidStep(tau));
        }
        if !hamiltonian.is_hermitian() {
            return Err(Error::NotSelfAdjoint {
                residual: hamiltonian.self_adjoint_residual(),
            });
        }
        let n = hamiltonian.dim();
        if n > MAX_DENSE_DIM {
            return Err(Error::DimensionMismatch {
                expected: MAX_DENSE_DIM,
                got: n,
            });
        }
        let sym = hamiltonian
            .gram()
            .to_symmetric_frame(hamiltonian.matrix())?;
        let norm = crate::linalg::hermitian_eigenvalues(&sym)
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.abs()));
        let h_tau = tau * norm;
        if h_tau >= 1.0 {
            warn!("h_tau = {h_tau:.3} is outside the Picard regime (h_tau < 1)");
        }

        let h = hamiltonian.matrix();
        let shifted = |scale: Complex64, shift: Complex64| {
            let mut m = h * scale;
            for k in 0..n {
                m[(k, k)] -= shift;
            }
            m
        };
        let i_tau = Complex64::new(0.0, tau);
        let mut forward_lu = Vec::with_capacity(p);
        let mut reverse_lu = Vec::with_capacity(p);
        for r in &roots {
            let f = LU::new(shifted(i_tau, r.conj()));
            let b = LU::new(shifted(-i_tau, *r));
            if !f.is_invertible() || !b.is_invertible() {
                return Err(Error::SingularDenominator);
            }
            forward_lu.push(f);
            reverse_lu.push(b);
        }
        let real_h = is_real(h).then(|| h.map(|z| z.re));
        Ok(Self {
            p,
            tau,
            hamiltonian: hamiltonian.clone(),
            roots,
            forward_lu,
            reverse_lu,
            real_h,
            h_tau,
        })
    }

    /// The unhalved Crank–Nicolson step `(1 + iτH)⁻¹(1 − iτH)`, which is
    /// `R₁₁` at step `2τ`. Kept for comparison runs.
    pub fn unhalved_crank_nicolson(hamiltonian: &ParticularOperator, tau: f64) -> Result<Self> {
        Self::build(hamiltonian, 2.0 * tau, 1)
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn hamiltonian(&self) -> &ParticularOperator {
        &self.hamiltonian
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    /// `S = N_pp(−iτH)`, formed on request.
    pub fn numerator(&self) -> CMatrix {
        step_factors(self.hamiltonian.matrix(), self.tau, self.p)
            .expect("order checked at build")
            .0
    }

    /// `D = N_pp(iτH)`, the M-adjoint of `S`, formed on request.
    pub fn denominator(&self) -> CMatrix {
        step_factors(self.hamiltonian.matrix(), self.tau, self.p)
            .expect("order checked at build")
            .1
    }

    /// `τ·‖W H W⁻¹‖₂`.
    pub fn h_tau(&self) -> f64 {
        self.h_tau
    }

    pub fn in_picard_regime(&self) -> bool {
        self.h_tau < 1.0
    }

    fn check(&self, psi: &CVector) -> Result<()> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.len(),
            });
        }
        Ok(())
    }

    /// `(sτH − shift) X` without forming the shifted matrix.
    fn shifted_apply(&self, x: &CMatrix, scale: Complex64, shift: Complex64) -> CMatrix {
        let hx = match &self.real_h {
            Some(hr) => rc_mul(hr, x),
            None => self.hamiltonian.matrix() * x,
        };
        let mut y = hx * scale;
        y.zip_apply(x, |a, b| *a -= shift * b);
        y
    }

    fn chain(&self, x: CMatrix, forward: bool) -> CMatrix {
        let i_tau = Complex64::new(0.0, self.tau);
        let mut x = x;
        for (j, r) in self.roots.iter().enumerate() {
            x = if forward {
                let y = self.shifted_apply(&x, -i_tau, *r);
                self.forward_lu[j].solve(&y)
            } else {
                let y = self.shifted_apply(&x, i_tau, r.conj());
                self.reverse_lu[j].solve(&y)
            }
            .expect("factors checked invertible at build");
        }
        x
    }

    /// `Û Ψ`.
    pub fn step(&self, psi: &CVector) -> Result<CVector> {
        self.check(psi)?;
        Ok(self
            .chain(
                CMatrix::from_column_slice(psi.len(), 1, psi.as_slice()),
                true,
            )
            .column(0)
            .into_owned())
    }

    /// `Û† Ψ = R_pp(iτH) Ψ`.
    pub fn step_back(&self, psi: &CVector) -> Result<CVector> {
        self.check(psi)?;
        Ok(self
            .chain(
                CMatrix::from_column_slice(psi.len(), 1, psi.as_slice()),
                false,
            )
            .column(0)
            .into_owned())
    }

    /// Dense `Û`, for error measurement at small sizes.
    pub fn step_matrix(&self) -> CMatrix {
        self.chain(CMatrix::identity(self.dim(), self.dim()), true)
    }

    /// Dense `Û†`.
    pub fn reverse_step_matrix(&self) -> CMatrix {
        self.chain(CMatrix::identity(self.dim(), self.dim()), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// The powers `Ûᵏ` (forward) or `(Û†)ᵏ` (reverse).
#[derive(Debug, Clone)]
pub struct DiscreteGroup {
    propagator: Arc<PadePropagator>,
    direction: Direction,
}

impl DiscreteGroup {
    pub fn new(propagator: Arc<PadePropagator>, direction: Direction) -> Self {
        Self {
            propagator,
            direction,
        }
    }

    pub fn forward(propagator: Arc<PadePropagator>) -> Self {
        Self::new(propagator, Direction::Forward)
    }

    pub fn propagator(&self) -> &Arc<PadePropagator> {
        &self.propagator
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn reversed(&self) -> Self {
        let direction = match self.direction {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        };
        Self::new(self.propagator.clone(), direction)
    }

    pub fn apply(&self, k: usize, psi: &CVector) -> Result<CVector> {
        self.propagator.check(psi)?;
        let mut state = psi.clone();
        for _ in 0..k {
            state = match self.direction {
                Direction::Forward => self.propagator.step(&state)?,
                Direction::Reverse => self.propagator.step_back(&state)?,
            };
        }
        Ok(state)
    }

    /// All iterates `Ψ₀, ÛΨ₀, …, ÛᵏΨ₀`.
    pub fn trajectory(&self, k: usize, psi: &CVector) -> Result<Vec<CVector>> {
        let mut out = Vec::with_capacity(k + 1);
        out.push(psi.clone());
        for i in 0..k {
            out.push(self.apply(1, &out[i])?);
        }
        Ok(out)
    }
}

/// Exact `e^{−itH}` from the eigendecomposition of the symmetric-frame
/// Hamiltonian.
#[derive(Debug, Clone)]
pub struct DenseExponential {
    hamiltonian: ParticularOperator,
    eigenvalues: DVector<f64>,
    eigenvectors: CMatrix,
}

impl DenseExponential {
    pub fn new(hamiltonian: &ParticularOperator) -> Result<Self> {
        if !hamiltonian.is_hermitian() {
            return Err(Error::NotSelfAdjoint {
                residual: hamiltonian.self_adjoint_residual(),
            });
        }
        let sym = hamiltonian
            .gram()
            .to_symmetric_frame(hamiltonian.matrix())?;
        let (eigenvalues, eigenvectors) = hermitian_eigen(&sym);
        Ok(Self {
            hamiltonian: hamiltonian.clone(),
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Eigenvector columns in the symmetric frame.
    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    /// `‖W H W⁻¹‖₂`.
    pub fn norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |acc, l| acc.max(l.abs()))
    }

    /// `V f(Λ) V*` for a scalar function of the eigenvalues.
    pub fn spectral_function<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, l) in self.eigenvalues.iter().enumerate() {
            let fj = f(*l);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= fj;
            }
        }
        cc_mul(&scaled, &v.adjoint())
    }

    /// `W e^{−itH} W⁻¹`.
    pub fn symmetric(&self, t: f64) -> CMatrix {
        self.spectral_function(|l| Complex64::new(0.0, -t * l).exp())
    }

    /// `e^{−itH}` in coefficient space.
    pub fn matrix(&self, t: f64) -> Result<CMatrix> {
        self.hamiltonian
            .gram()
            .from_symmetric_frame(&self.symmetric(t))
    }

    /// `e^{−itH} Ψ` without forming the dense exponential.
    pub fn apply(&self, t: f64, psi: &CVector) -> Result<CVector> {
        let gram = self.hamiltonian.gram();
        let w = gram.apply_sqrt(psi);
        let mut coords = self.eigenvectors.adjoint() * w;
        for (z, l) in coords.iter_mut().zip(self.eigenvalues.iter()) {
            *z *= Complex64::new(0.0, -t * l).exp();
        }
        Ok(gram.apply_inv_sqrt(&(&self.eigenvectors * coords)))
    }
}

/// Measured error in the M-operator norm next to its a-priori bound.
#[derive(Debug, Clone, Copy)]
pub struct StepError {
    pub steps: usize,
    pub h_tau: f64,
    pub measured: f64,
    pub bound: f64,
}

impl StepError {
    pub fn within_bound(&self) -> bool {
        self.measured <= self.bound
    }
}

/// `‖e^{−iτH} − Û‖` against `|1/(2p+1)! − c_{p,2p+1}| h_τ^{2p+1}`.
pub fn single_step_error(prop: &PadePropagator, oracle: &DenseExponential) -> Result<StepError> {
    let gram = prop.hamiltonian().gram();
    let u = gram.to_symmetric_frame(&prop.step_matrix())?;
    let measured = spectral_norm(&(oracle.symmetric(prop.tau()) - u));
    let p = prop.order();
    let bound = local_error_constant(p)? * prop.h_tau().powi(2 * p as i32 + 1);
    Ok(StepError {
        steps: 1,
        h_tau: prop.h_tau(),
        measured,
        bound,
    })
}

fn matrix_power(a: &CMatrix, mut k: usize) -> CMatrix {
    let n = a.nrows();
    let mut result = CMatrix::identity(n, n);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = cc_mul(&result, &base);
        }
        k >>= 1;
        if k > 0 {
            base = cc_mul(&base, &base);
        }
    }
    result
}

/// `‖e^{−imτH} − Ûᵐ‖` against `(m^{2p+1}/(2p+1)!) h_τ^{2p+1}`.
pub fn multi_step_error(
    prop: &PadePropagator,
    steps: usize,
    oracle: &DenseExponential,
) -> Result<StepError> {
    if steps == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let gram = prop.hamiltonian().gram();
    let u = gram.to_symmetric_frame(&prop.step_matrix())?;
    let um = matrix_power(&u, steps);
    let measured = spectral_norm(&(oracle.symmetric(steps as f64 * prop.tau()) - um));
    let e = 2 * prop.order() as i32 + 1;
    let bound = (steps as f64).powi(e) / factorial(e as usize) * prop.h_tau().powi(e);
    Ok(StepError {
        steps,
        h_tau: prop.h_tau(),
        measured,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::{assemble_mass, GramMatrix};
    use crate::linalg::{max_abs, random_cvector, random_hermitian, seeded_rng};
    use crate::mesh::{Domain, Grid};
    use crate::operators::assemble_kinetic;
    use crate::projection::NodalBasis;

    fn scalar(h: f64) -> ParticularOperator {
        let m = CMatrix::from_element(1, 1, Complex64::new(h, 0.0));
        ParticularOperator::new(m, Arc::new(GramMatrix::identity(1))).unwrap()
    }

    fn kinetic_1d(level: u32) -> ParticularOperator {
        let basis = NodalBasis::new(Grid::build(Domain::interval(1.0).unwrap(), level).unwrap());
        let gram = Arc::new(assemble_mass(&basis).unwrap());
        assemble_kinetic(&basis, gram).unwrap().into_operator()
    }

    fn random_operator(seed: u64, n: usize) -> ParticularOperator {
        let mut rng = seeded_rng(seed);
        ParticularOperator::new(
            random_hermitian(&mut rng, n),
            Arc::new(GramMatrix::identity(n)),
        )
        .unwrap()
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(pade_coefficients(1, 1).unwrap(), vec![1.0, 0.5]);
        let c2 = pade_coefficients(2, 2).unwrap();
        assert_eq!(c2[1], 0.5);
        assert!((c2[2] - 1.0 / 12.0).abs() < 1e-16);
        let a = CMatrix::from_element(1, 1, Complex64::new(0.3, 0.0));
        let (n, d) = pade_polynomials(1, 1, &a).unwrap();
        assert!((n[(0, 0)].re - 1.15).abs() < 1e-15 && (d[(0, 0)].re - 0.85).abs() < 1e-15);
        let (n2, _) = pade_polynomials(2, 2, &a).unwrap();
        assert!((n2[(0, 0)].re - (1.0 + 0.15 + 0.09 / 12.0)).abs() < 1e-15);
        let (n0, d0) = pade_polynomials(3, 3, &CMatrix::zeros(4, 4)).unwrap();
        assert_eq!(n0, CMatrix::identity(4, 4));
        assert_eq!(d0, CMatrix::identity(4, 4));
    }

    #[test]
    fn roots_of_numerator() {
        assert!((pade_roots(1).unwrap()[0] - Complex64::new(-2.0, 0.0)).norm() < 1e-15);
        // 1 + z/2 + z²/12 has roots −3 ± i√3
        let r2 = pade_roots(2).unwrap();
        assert!((r2[0] - Complex64::new(-3.0, -3f64.sqrt())).norm() < 1e-14);
        assert!((r2[1] - Complex64::new(-3.0, 3f64.sqrt())).norm() < 1e-14);
        for p in 1..=MAX_PADE_ORDER {
            let roots = pade_roots(p).unwrap();
            let c = pade_coefficients(p, p).unwrap();
            assert_eq!(roots.len(), p);
            for r in &roots {
                let value = c
                    .iter()
                    .rev()
                    .fold(Complex64::new(0.0, 0.0), |acc, cj| acc * r + cj);
                assert!(value.norm() < 1e-13, "p={p} root {r}");
                assert!(r.re < 0.0);
                assert!(roots.iter().any(|s| (s - r.conj()).norm() < 1e-12));
            }
        }
    }

    #[test]
    fn factored_step_matches_quotient() {
        for p in 1..=4 {
            let h = random_operator(30 + p as u64, 6);
            let prop = PadePropagator::build(&h, 0.7, p).unwrap();
            let quotient = LU::new(prop.denominator())
                .solve(&prop.numerator())
                .unwrap();
            assert!(max_abs(&(prop.step_matrix() - &quotient)) < 1e-12, "p={p}");
            let back = LU::new(prop.numerator())
                .solve(&prop.denominator())
                .unwrap();
            assert!(
                max_abs(&(prop.reverse_step_matrix() - back)) < 1e-12,
                "p={p}"
            );
        }
    }

    #[test]
    fn unitary_far_outside_picard_regime() {
        let h = kinetic_1d(4);
        let mut rng = seeded_rng(12);
        let psi = random_cvector(&mut rng, h.dim());
        let n0 = h.gram().m_norm(&psi).unwrap();
        for p in [3, 6] {
            let prop = Arc::new(PadePropagator::build(&h, 0.01, p).unwrap());
            assert!(prop.h_tau() > 400.0);
            let group = DiscreteGroup::forward(prop);
            let end = group.apply(500, &psi).unwrap();
            assert!(
                (h.gram().m_norm(&end).unwrap() - n0).abs() <= 1e-11 * n0,
                "p={p}"
            );
            let back = group.reversed().apply(500, &end).unwrap();
            assert!(
                h.gram().m_norm(&(back - &psi)).unwrap() <= 1e-10 * n0,
                "p={p}"
            );
        }
    }

    #[test]
    fn rejects_unsupported_orders() {
        let a = CMatrix::identity(2, 2);
        assert!(matches!(
            pade_polynomials(1, 2, &a),
            Err(Error::UnsupportedPadeOrder { .. })
        ));
        assert!(pade_polynomials(7, 7, &a).is_err());
        assert!(pade_polynomials(0, 0, &a).is_err());
    }

    #[test]
    fn series_matches_exponential_to_order_2p() {
        for p in 1..=MAX_PADE_ORDER {
            let s = pade_series(p, 2 * p + 2).unwrap();
            for (k, c) in s.iter().take(2 * p + 1).enumerate() {
                assert!(
                    (c - 1.0 / factorial(k)).abs() < 1e-13 * (1.0 / factorial(k)).max(1e-300),
                    "p {p} k {k}"
                );
            }
            // leading constant (p!)² / ((2p)! (2p+1)!)
            let closed = factorial(p).powi(2) / (factorial(2 * p) * factorial(2 * p + 1));
            assert!((local_error_constant(p).unwrap() - closed).abs() < 1e-12 * closed);
        }
        assert!((local_error_constant(1).unwrap() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_step_example() {
        let prop = PadePropagator::build(&scalar(1.0), 0.1, 1).unwrap();
        let u = prop
            .step(&CVector::from_element(1, Complex64::new(1.0, 0.0)))
            .unwrap()[0];
        let expected = Complex64::new(1.0, -0.05) / Complex64::new(1.0, 0.05);
        assert!((u - expected).norm() < 1e-15);
        assert!((u.norm() - 1.0).abs() < 1e-15);
        assert!((pade_scalar(1, Complex64::new(0.0, -0.1)).unwrap() - expected).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = scalar(1.0);
        assert!(matches!(
            PadePropagator::build(&h, 0.0, 1),
            Err(Error::InvalidStep(_))
        ));
        assert!(PadePropagator::build(&h, -1.0, 1).is_err());
        assert!(PadePropagator::build(&h, f64::NAN, 1).is_err());
        let skew = ParticularOperator::new(
            CMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(0.0, 0.0),
                    Complex64::new(1.0, 0.0),
                    Complex64::new(-1.0, 0.0),
                    Complex64::new(0.0, 0.0),
                ],
            ),
            Arc::new(GramMatrix::identity(2)),
        )
        .unwrap();
        assert!(matches!(
            PadePropagator::build(&skew, 0.1, 1),
            Err(Error::NotSelfAdjoint { .. })
        ));
    }

    #[test]
    fn eigenvalues_lie_on_unit_circle() {
        for p in 1..=3 {
            let h = kinetic_1d(2);
            let prop = PadePropagator::build(&h, 0.01, p).unwrap();
            let u = h.gram().to_symmetric_frame(&prop.step_matrix()).unwrap();
            // unitary in the symmetric frame: U*U = I
            let defect = max_abs(&(u.adjoint() * &u - CMatrix::identity(u.nrows(), u.nrows())));
            assert!(defect < 1e-11, "p {p}: {defect}");
            let eig = u.clone().eigenvalues();
            if let Some(eig) = eig {
                assert!(eig.iter().all(|z| (z.norm() - 1.0).abs() < 1e-11));
            }
        }
    }

    #[test]
    fn shares_eigenvectors_with_hamiltonian() {
        let h = random_operator(11, 12);
        let prop = PadePropagator::build(&h, 0.05, 2).unwrap();
        let oracle = DenseExponential::new(&h).unwrap();
        let expected =
            oracle.spectral_function(|l| pade_scalar(2, Complex64::new(0.0, -0.05 * l)).unwrap());
        assert!(max_abs(&(prop.step_matrix() - expected)) < 1e-12);
    }

    #[test]
    fn small_step_is_near_identity() {
        let h = kinetic_1d(1);
        let prop = PadePropagator::build(&h, 1e-4, 1).unwrap();
        let gram = h.gram();
        let n = prop.dim();
        let d = gram
            .operator_norm(&(prop.step_matrix() - CMatrix::identity(n, n)))
            .unwrap();
        assert!(d <= prop.h_tau() * (1.0 + 1e-3));
    }

    #[test]
    fn reverse_is_m_adjoint_both_routes() {
        let h = kinetic_1d(2);
        let prop = PadePropagator::build(&h, 0.02, 2).unwrap();
        let u = prop.step_matrix();
        let via_w = h.gram().m_adjoint(&u).unwrap();
        let via_m = h.gram().m_adjoint_via_mass(&u).unwrap();
        let rev = prop.reverse_step_matrix();
        assert!(max_abs(&(&via_w - &via_m)) < 1e-11 * max_abs(&via_w));
        assert!(max_abs(&(&rev - &via_w)) < 1e-11 * max_abs(&rev));
        let n = u.nrows();
        assert!(max_abs(&(cc_mul(&rev, &u) - CMatrix::identity(n, n))) < 1e-11);
    }

    #[test]
    fn group_law_and_reversal() {
        let h = kinetic_1d(2);
        let prop = Arc::new(PadePropagator::build(&h, 0.01, 1).unwrap());
        let group = DiscreteGroup::forward(prop.clone());
        let mut rng = seeded_rng(5);
        let psi = random_cvector(&mut rng, prop.dim());
        assert_eq!(group.apply(0, &psi).unwrap(), psi);
        let direct = group.apply(40, &psi).unwrap();
        let split = group.apply(15, &group.apply(25, &psi).unwrap()).unwrap();
        assert!((&direct - &split).norm() <= 1e-10 * 40.0 * psi.norm());
        let back = group.reversed().apply(40, &direct).unwrap();
        assert!((back - &psi).norm() <= 1e-10 * 40.0 * psi.norm());
        let traj = group.trajectory(3, &psi).unwrap();
        assert_eq!(traj.len(), 4);
        assert!((&traj[3] - group.apply(3, &psi).unwrap()).norm() == 0.0);
        assert!(group.apply(1, &CVector::zeros(3)).is_err());
    }

    #[test]
    fn norm_drift_over_thousand_steps() {
        let h = kinetic_1d(2);
        let prop = Arc::new(PadePropagator::build(&h, 0.01, 1).unwrap());
        let gram = h.gram().clone();
        let mut rng = seeded_rng(8);
        let psi = random_cvector(&mut rng, prop.dim());
        let n0 = gram.m_norm(&psi).unwrap();
        let out = DiscreteGroup::forward(prop).apply(1000, &psi).unwrap();
        assert!((gram.m_norm(&out).unwrap() - n0).abs() <= 1e-10 * n0);
    }

    #[test]
    fn zero_hamiltonian_has_zero_error() {
        let h = ParticularOperator::zero(Arc::new(GramMatrix::identity(4)));
        let prop = PadePropagator::build(&h, 0.1, 2).unwrap();
        let oracle = DenseExponential::new(&h).unwrap();
        assert_eq!(single_step_error(&prop, &oracle).unwrap().measured, 0.0);
    }

    #[test]
    fn oracle_apply_matches_dense() {
        let h = kinetic_1d(1);
        let oracle = DenseExponential::new(&h).unwrap();
        let mut rng = seeded_rng(2);
        let psi = random_cvector(&mut rng, h.dim());
        let dense = oracle.matrix(0.3).unwrap() * &psi;
        assert!((oracle.apply(0.3, &psi).unwrap() - dense).norm() < 1e-12 * psi.norm());
    }

    #[test]
    fn single_step_within_local_bound() {
        let h = kinetic_1d(2);
        let oracle = DenseExponential::new(&h).unwrap();
        for p in 1..=3 {
            for h_tau in [0.5, 0.25, 0.125] {
                let prop = PadePropagator::build(&h, h_tau / oracle.norm(), p).unwrap();
                let e = single_step_error(&prop, &oracle).unwrap();
                assert!(
                    e.within_bound() || e.measured < 1e-14,
                    "p {p} h_tau {h_tau}: {e:?}"
                );
            }
        }
    }

    #[test]
    fn multi_step_example_p1_m8() {
        let h = kinetic_1d(2);
        let oracle = DenseExponential::new(&h).unwrap();
        let prop = PadePropagator::build(&h, 0.5 / oracle.norm(), 1).unwrap();
        let e = multi_step_error(&prop, 8, &oracle).unwrap();
        assert!((e.bound - 512.0 / 6.0 * 0.125).abs() < 1e-12);
        assert!(e.measured < e.bound);
        let one = multi_step_error(&prop, 1, &oracle).unwrap();
        let single = single_step_error(&prop, &oracle).unwrap();
        assert!((one.measured - single.measured).abs() < 1e-14);
    }

    #[test]
    fn unhalved_crank_nicolson_uses_double_step() {
        let h = scalar(2.0);
        let prop = PadePropagator::unhalved_crank_nicolson(&h, 0.1).unwrap();
        let u = prop
            .step(&CVector::from_element(1, Complex64::new(1.0, 0.0)))
            .unwrap()[0];
        let expected = Complex64::new(1.0, -0.2) / Complex64::new(1.0, 0.2);
        assert!((u - expected).norm() < 1e-15);
    }
}
