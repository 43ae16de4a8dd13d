//! Expectation values and discrete constants of motion.

use std::fmt::Write as _;

use crate::gram::GramMatrix;
use crate::operators::{commutator, ParticularOperator};
use crate::propagator::DiscreteGroup;
use crate::{CVector, Complex64, Error, Result};

/// Relative commutator size below which an observable counts as compatible
/// with the Hamiltonian.
pub const COMMUTATOR_TOL: f64 = 1e-11;

/// Allowed drift `max_n |⟨A⟩_n − ⟨A⟩₀| / (1 + |⟨A⟩₀|)` for a compatible observable.
pub const DRIFT_TOL: f64 = 1e-9;

/// `⟨BΨ, Ψ⟩_M / ⟨Ψ, Ψ⟩_M` including its imaginary part.
pub fn expectation_complex(b: &ParticularOperator, psi: &CVector) -> Result<Complex64> {
    let gram = b.gram();
    let norm_sq = gram.m_inner(psi, psi)?.re;
    if norm_sq == 0.0 {
        return Err(Error::ZeroState);
    }
    Ok(gram.m_inner(&b.apply(psi)?, psi)? / norm_sq)
}

/// Real part of [`expectation_complex`].
pub fn expectation(b: &ParticularOperator, psi: &CVector) -> Result<f64> {
    Ok(expectation_complex(b, psi)?.re)
}

/// `Ψ / ‖Ψ‖_M`.
pub fn normalize(gram: &GramMatrix, psi: &CVector) -> Result<CVector> {
    let n = gram.m_norm(psi)?;
    if n == 0.0 {
        return Err(Error::ZeroState);
    }
    Ok(psi.unscale(n))
}

#[derive(Debug, Clone, Default)]
pub struct ExpectationSeries {
    pub times: Vec<usize>,
    pub values: Vec<f64>,
    /// Largest `|Im⟨B⟩_n| / max(|⟨B⟩_n|, 1)` seen while recording.
    pub max_imaginary: f64,
}

impl ExpectationSeries {
    /// `⟨B⟩_n` along a trajectory indexed `0, 1, …`.
    pub fn record(b: &ParticularOperator, states: &[CVector]) -> Result<Self> {
        let mut series = Self::default();
        for (n, psi) in states.iter().enumerate() {
            series.push(n, expectation_complex(b, psi)?);
        }
        Ok(series)
    }

    pub fn push(&mut self, n: usize, value: Complex64) {
        self.times.push(n);
        self.values.push(value.re);
        self.max_imaginary = self
            .max_imaginary
            .max(value.im.abs() / value.norm().max(1.0));
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `max_n |⟨B⟩_n − ⟨B⟩₀|`.
    pub fn max_deviation(&self) -> f64 {
        let Some(&first) = self.values.first() else {
            return 0.0;
        };
        self.values
            .iter()
            .fold(0.0, |acc, v| acc.max((v - first).abs()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,value\n");
        for (n, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(s, "{n},{v:.17e}");
        }
        s
    }
}

/// `δ_τ⟨E⟩_n = (⟨E⟩_{n+1} − ⟨E⟩_n) / τ`.
pub fn energy_variation(series: &ExpectationSeries, tau: f64) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: series.len(),
        });
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidStep(tau));
    }
    Ok(series
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]) / tau)
        .collect())
}

#[derive(Debug, Clone)]
pub struct ConstantOfMotionReport {
    /// `‖[A, H]‖ / (‖A‖ ‖H‖)` in the M-operator norm.
    pub commutator_residual: f64,
    pub compatible: bool,
    /// `max_n |⟨A⟩_n − ⟨A⟩₀| / (1 + |⟨A⟩₀|)`; absent when the commutator check fails.
    pub drift: Option<f64>,
    pub series: Option<ExpectationSeries>,
}

impl ConstantOfMotionReport {
    pub fn passed(&self) -> bool {
        self.compatible && self.drift.is_some_and(|d| d <= DRIFT_TOL)
    }

    pub fn verdict(&self) -> &'static str {
        match (self.compatible, self.passed()) {
            (false, _) => "not compatible",
            (true, true) => "constant",
            (true, false) => "drifted",
        }
    }
}

/// Checks `[A, H] = 0` and, only then, that `⟨A⟩_n` stays constant along
/// `n_steps` steps of `group` from `psi0`.
pub fn verify_constant_of_motion(
    a: &ParticularOperator,
    h: &ParticularOperator,
    group: &DiscreteGroup,
    psi0: &CVector,
    n_steps: usize,
) -> Result<ConstantOfMotionReport> {
    let c = commutator(a, h)?;
    let gram = a.gram();
    let scale = a.m_norm()? * h.m_norm()?;
    let resid = gram.operator_norm(c.matrix())?;
    let commutator_residual = if scale > 0.0 { resid / scale } else { resid };
    let compatible = commutator_residual <= COMMUTATOR_TOL;
    if !compatible {
        return Ok(ConstantOfMotionReport {
            commutator_residual,
            compatible,
            drift: None,
            series: None,
        });
    }
    let states = group.trajectory(n_steps, psi0)?;
    let series = ExpectationSeries::record(a, &states)?;
    let drift = series.max_deviation() / (1.0 + series.values[0].abs());
    Ok(ConstantOfMotionReport {
        commutator_residual,
        compatible,
        drift: Some(drift),
        series: Some(series),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::assemble_mass;
    use crate::linalg::{random_cvector, seeded_rng};
    use crate::mesh::{Domain, Grid};
    use crate::operators::{assemble_kinetic, assemble_potential};
    use crate::projection::NodalBasis;
    use crate::propagator::{DenseExponential, PadePropagator};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn setup(level: u32) -> (NodalBasis, Arc<GramMatrix>, ParticularOperator) {
        let basis = NodalBasis::new(Grid::build(Domain::interval(1.0).unwrap(), level).unwrap());
        let gram = Arc::new(assemble_mass(&basis).unwrap());
        let h = assemble_kinetic(&basis, gram.clone())
            .unwrap()
            .into_operator();
        (basis, gram, h)
    }

    #[test]
    fn identity_and_scalar_expectations() {
        let (_, gram, _) = setup(1);
        let mut rng = seeded_rng(1);
        let psi = random_cvector(&mut rng, gram.dim());
        let id = ParticularOperator::identity(gram.clone());
        assert!((expectation(&id, &psi).unwrap() - 1.0).abs() < 1e-14);
        let c = id.scale(Complex64::new(2.5, 0.0)).unwrap();
        assert!((expectation(&c, &psi).unwrap() - 2.5).abs() < 1e-14);
        assert!(matches!(
            expectation(&id, &CVector::zeros(gram.dim())),
            Err(Error::ZeroState)
        ));
    }

    #[test]
    fn ground_state_energy_is_smallest_eigenvalue() {
        let (_, gram, h) = setup(2);
        let oracle = DenseExponential::new(&h).unwrap();
        let v0 = oracle.eigenvectors().column(0).into_owned();
        let psi = gram.apply_inv_sqrt(&v0);
        let e = expectation(&h, &psi).unwrap();
        let lambda = oracle.eigenvalues()[0];
        assert!((e - lambda).abs() < 1e-11 * lambda);
    }

    #[test]
    fn normalize_examples() {
        let (_, gram, _) = setup(1);
        let mut rng = seeded_rng(2);
        let psi = random_cvector(&mut rng, gram.dim());
        let unit = normalize(&gram, &psi).unwrap();
        assert!((gram.m_norm(&unit).unwrap() - 1.0).abs() < 1e-13);
        assert!((normalize(&gram, &unit).unwrap() - &unit).norm() < 1e-13);
        let alpha = Complex64::new(-2.0, 3.0);
        let scaled = normalize(&gram, &(&psi * alpha)).unwrap();
        assert!((scaled - &unit * (alpha / alpha.norm())).norm() < 1e-13);
        assert!(normalize(&gram, &CVector::zeros(gram.dim())).is_err());
    }

    #[test]
    fn energy_variation_examples() {
        let flat = ExpectationSeries {
            times: vec![0, 1, 2],
            values: vec![3.0; 3],
            max_imaginary: 0.0,
        };
        assert_eq!(energy_variation(&flat, 0.1).unwrap(), vec![0.0, 0.0]);
        let ramp = ExpectationSeries {
            times: vec![0, 1],
            values: vec![1.0, 1.5],
            max_imaginary: 0.0,
        };
        assert!((energy_variation(&ramp, 0.5).unwrap()[0] - 1.0).abs() < 1e-15);
        let single = ExpectationSeries {
            times: vec![0],
            values: vec![1.0],
            max_imaginary: 0.0,
        };
        assert!(energy_variation(&single, 0.1).is_err());
    }

    #[test]
    fn constants_of_motion() {
        let (basis, gram, h) = setup(2);
        let prop = Arc::new(PadePropagator::build(&h, 0.01, 1).unwrap());
        let group = DiscreteGroup::forward(prop);
        let psi0 = basis.decompose_real(|x| x[0] * (1.0 - x[0])).unwrap();

        let id = ParticularOperator::identity(gram.clone());
        let r = verify_constant_of_motion(&id, &h, &group, &psi0, 50).unwrap();
        assert!(r.passed() && r.commutator_residual == 0.0);

        let r = verify_constant_of_motion(&h, &h, &group, &psi0, 200).unwrap();
        assert!(r.passed(), "{r:?}");
        let series = r.series.unwrap();
        let e0 = series.values[0];
        let dmax = energy_variation(&series, 0.01)
            .unwrap()
            .iter()
            .fold(0.0f64, |a, d| a.max(d.abs()));
        assert!(dmax * 0.01 / e0.abs() <= 1e-10);

        let q = h.polynomial(&[1.0, -0.5, 0.02]).unwrap();
        assert!(verify_constant_of_motion(&q, &h, &group, &psi0, 100)
            .unwrap()
            .passed());

        let v = assemble_potential(&basis, gram, |x| x[0] * x[0]).unwrap();
        let r = verify_constant_of_motion(&v, &h, &group, &psi0, 100).unwrap();
        assert!(!r.compatible && r.drift.is_none());
        assert_eq!(r.verdict(), "not compatible");
    }

    #[test]
    fn series_csv_has_header_and_rows() {
        let (_, gram, h) = setup(1);
        let mut rng = seeded_rng(6);
        let states: Vec<CVector> = (0..3)
            .map(|_| random_cvector(&mut rng, gram.dim()))
            .collect();
        let s = ExpectationSeries::record(&h, &states).unwrap();
        let csv = s.to_csv();
        assert_eq!(csv.lines().next(), Some("n,value"));
        assert_eq!(csv.lines().count(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn self_adjoint_expectations_are_real_and_scale_free(seed in any::<u64>(), re in -5.0f64..5.0, im in -5.0f64..5.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let (basis, gram, h) = setup(1);
            let v = assemble_potential(&basis, gram.clone(), |x| (3.0 * x[0]).cos()).unwrap();
            let total = h.add(&v).unwrap();
            let mut rng = seeded_rng(seed);
            let psi = random_cvector(&mut rng, gram.dim());
            let z = expectation_complex(&total, &psi).unwrap();
            prop_assert!(z.im.abs() <= 1e-11 * z.norm());
            let scaled = expectation(&total, &(&psi * Complex64::new(re, im))).unwrap();
            prop_assert!((scaled - z.re).abs() <= 1e-12 * z.re.abs());
        }
    }
}
