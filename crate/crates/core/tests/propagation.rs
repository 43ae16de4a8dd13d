//! Padé propagation checked against scalar formulas on eigenvectors.

use std::sync::Arc;

use proptest::prelude::*;
use unigroup_core::gram::assemble_mass;
use unigroup_core::linalg::{random_cvector, seeded_rng};
use unigroup_core::mesh::{Domain, Grid};
use unigroup_core::operators::{assemble_kinetic, assemble_potential, ParticularOperator};
use unigroup_core::projection::NodalBasis;
use unigroup_core::propagator::{
    local_error_constant, pade_scalar, DenseExponential, DiscreteGroup, PadePropagator,
};
use unigroup_core::Complex64;

fn harmonic(dim: usize, level: u32) -> ParticularOperator {
    let domain = if dim == 1 {
        Domain::interval(1.0).unwrap()
    } else {
        Domain::square(1.0).unwrap()
    };
    let basis = NodalBasis::new(Grid::build(domain, level).unwrap());
    let gram = Arc::new(assemble_mass(&basis).unwrap());
    let v = assemble_potential(&basis, gram.clone(), |x| {
        x.iter().map(|c| 10.0 * c * c).sum()
    })
    .unwrap();
    assemble_kinetic(&basis, gram)
        .unwrap()
        .operator()
        .add(&v)
        .unwrap()
}

#[test]
fn error_constants_match_factorial_formula() {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    assert!((local_error_constant(1).unwrap() - 1.0 / 12.0).abs() < 1e-17);
    assert!((local_error_constant(2).unwrap() - 1.0 / 720.0).abs() < 1e-18);
    for p in 1..=6u32 {
        let closed = fact(p).powi(2) / (fact(2 * p) * fact(2 * p + 1));
        let exact = local_error_constant(p as usize).unwrap();
        assert!((exact - closed).abs() <= 1e-14 * closed, "p={p}");
    }
}

#[test]
fn eigenvectors_pick_up_scalar_pade_phase() {
    let h = harmonic(2, 1);
    let oracle = DenseExponential::new(&h).unwrap();
    for p in 1..=4 {
        let tau = 0.05;
        let prop = PadePropagator::build(&h, tau, p).unwrap();
        for k in [0, 7, oracle.eigenvalues().len() - 1] {
            let lambda = oracle.eigenvalues()[k];
            let v = h
                .gram()
                .apply_inv_sqrt(&oracle.eigenvectors().column(k).into_owned());
            let phase = pade_scalar(p, Complex64::new(0.0, -tau * lambda)).unwrap();
            assert!((phase.norm() - 1.0).abs() < 1e-14);
            let diff = prop.step(&v).unwrap() - &v * phase;
            assert!(diff.norm() <= 1e-11 * v.norm(), "p={p} k={k}");
        }
    }
}

#[test]
fn single_step_error_approaches_leading_term() {
    // |R(−iy) − e^{−iy}| ≈ C_p y^{2p+1} for the top eigenvalue
    let h = harmonic(1, 3);
    let oracle = DenseExponential::new(&h).unwrap();
    let top = oracle.norm();
    for p in 1..=2 {
        let y: f64 = 0.05;
        let prop = PadePropagator::build(&h, y / top, p).unwrap();
        let u = h.gram().to_symmetric_frame(&prop.step_matrix()).unwrap();
        let err = unigroup_core::linalg::spectral_norm(&(oracle.symmetric(y / top) - u));
        let predicted = local_error_constant(p).unwrap() * y.powi(2 * p as i32 + 1);
        assert!(
            (err / predicted - 1.0).abs() < 0.01,
            "p={p}: {err} vs {predicted}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_reversal_and_group_law(seed in any::<u64>(), p in 1usize..=4, tau in 1e-3f64..0.5, a in 1usize..20, b in 1usize..20) {
        let h = harmonic(1, 2);
        let prop = Arc::new(PadePropagator::build(&h, tau, p).unwrap());
        let group = DiscreteGroup::forward(prop);
        let mut rng = seeded_rng(seed);
        let psi = random_cvector(&mut rng, h.dim());
        let gram = h.gram();
        let n0 = gram.m_norm(&psi).unwrap();

        let ab = group.apply(a + b, &psi).unwrap();
        let split = group.apply(a, &group.apply(b, &psi).unwrap()).unwrap();
        prop_assert!(gram.m_norm(&(&ab - split)).unwrap() <= 1e-12 * n0 * (a + b) as f64);
        prop_assert!((gram.m_norm(&ab).unwrap() - n0).abs() <= 1e-12 * n0 * (a + b) as f64);
        let back = group.reversed().apply(a + b, &ab).unwrap();
        prop_assert!(gram.m_norm(&(back - &psi)).unwrap() <= 1e-12 * n0 * (a + b) as f64);
    }

    #[test]
    fn expectation_of_hamiltonian_is_conserved(seed in any::<u64>(), p in 1usize..=3, tau in 1e-3f64..1.0) {
        let h = harmonic(2, 1);
        let prop = Arc::new(PadePropagator::build(&h, tau, p).unwrap());
        let mut rng = seeded_rng(seed);
        let psi = random_cvector(&mut rng, h.dim());
        let states = DiscreteGroup::forward(prop).trajectory(25, &psi).unwrap();
        let e0 = unigroup_core::observables::expectation(&h, &psi).unwrap();
        for s in &states {
            let e = unigroup_core::observables::expectation(&h, s).unwrap();
            prop_assert!((e - e0).abs() <= 1e-11 * e0.abs());
        }
    }
}
