//! Tensor-product hat basis with interpolation-based decomposition.
//!
//! `decompose` samples a field at the interior nodes and `summate` expands a
//! coefficient vector back into the piecewise (bi)linear interpolant. The hat
//! functions satisfy `b_j(node_k) = δ_jk`, so `decompose ∘ summate` is the
//! identity on coefficient vectors.

use num_complex::Complex64;

use crate::convergence::loglog_slope;
use crate::mesh::{Domain, Grid};
use crate::quadrature::gauss4_on;
use crate::{CVector, Error, Result};

/// Errors below this are treated as exact reproduction.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct NodalBasis {
    grid: Grid,
}

impl NodalBasis {
    pub fn new(grid: Grid) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.n_dofs()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value of basis function `k` at `point`.
    pub fn eval_basis(&self, k: usize, point: &[f64]) -> f64 {
        let idx = self.grid.multi_index(k);
        (0..self.grid.dim())
            .map(|axis| {
                let h = self.grid.spacing(axis);
                let centre = (idx[axis] + 1) as f64 * h;
                (1.0 - (point[axis] - centre).abs() / h).max(0.0)
            })
            .product()
    }

    /// Nodal samples of `field`.
    pub fn decompose<F>(&self, field: F) -> Result<CVector>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let mut out = CVector::zeros(self.len());
        for (k, node) in self.grid.nodes().enumerate() {
            let v = field(node);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFinite { index: k });
            }
            out[k] = v;
        }
        Ok(out)
    }

    /// Real-valued convenience wrapper around [`NodalBasis::decompose`].
    pub fn decompose_real<F>(&self, field: F) -> Result<CVector>
    where
        F: Fn(&[f64]) -> f64,
    {
        self.decompose(|p| Complex64::new(field(p), 0.0))
    }

    pub fn summate<'a>(&'a self, coeffs: &'a CVector) -> Result<Expansion<'a>> {
        if coeffs.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: coeffs.len(),
            });
        }
        Ok(Expansion {
            basis: self,
            coeffs,
        })
    }

    /// Coefficient at per-axis node numbers that include the boundary
    /// (0 and `cells` are boundary nodes, where the value is zero).
    fn boundary_padded(&self, coeffs: &CVector, full: [usize; 2]) -> Complex64 {
        let cells = self.grid.cells();
        let dim = self.grid.dim();
        if full[..dim].iter().any(|&i| i == 0 || i >= cells) {
            return Complex64::new(0.0, 0.0);
        }
        let n = self.grid.axis_len();
        match dim {
            1 => coeffs[full[0] - 1],
            _ => coeffs[(full[0] - 1) * n + (full[1] - 1)],
        }
    }

    /// Continuum L² norm of `summate(coeffs) − field`, integrated with the
    /// 4-point Gauss rule on every cell (tensorized in 2D).
    pub fn l2_error<F>(&self, coeffs: &CVector, field: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let expansion = self.summate(coeffs)?;
        let g = &self.grid;
        let cells = g.cells();
        let mut acc = 0.0;
        match g.dim() {
            1 => {
                let h = g.spacing(0);
                for c in 0..cells {
                    let (a, b) = (c as f64 * h, (c + 1) as f64 * h);
                    for (x, w) in gauss4_on(a, b) {
                        let p = [x];
                        acc += w * (expansion.eval(&p) - field(&p)).norm_sqr();
                    }
                }
            }
            _ => {
                let (hx, hy) = (g.spacing(0), g.spacing(1));
                for cx in 0..cells {
                    let qx = gauss4_on(cx as f64 * hx, (cx + 1) as f64 * hx);
                    for cy in 0..cells {
                        let qy = gauss4_on(cy as f64 * hy, (cy + 1) as f64 * hy);
                        for &(x, wx) in &qx {
                            for &(y, wy) in &qy {
                                let p = [x, y];
                                acc += wx * wy * (expansion.eval(&p) - field(&p)).norm_sqr();
                            }
                        }
                    }
                }
            }
        }
        Ok(acc.sqrt())
    }

    /// `‖P(A v) − A P v‖` for the multiplication operator `A = mult`.
    pub fn commutation_defect<F, G>(&self, mult: F, field: G) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
        G: Fn(&[f64]) -> Complex64,
    {
        let coeffs_v = self.decompose(&field)?;
        let coeffs_av = self.decompose(|p| mult(p) * field(p))?;
        let expansion_v = self.summate(&coeffs_v)?;
        // L² norm of I(Av) − A·I(v): reuse l2_error with the second term as the "field".
        self.l2_error(&coeffs_av, |p| mult(p) * expansion_v.eval(p))
    }
}

/// The function `Σ x_k b_k`, evaluable anywhere in the closed domain.
#[derive(Debug, Clone, Copy)]
pub struct Expansion<'a> {
    basis: &'a NodalBasis,
    coeffs: &'a CVector,
}

impl Expansion<'_> {
    pub fn eval(&self, point: &[f64]) -> Complex64 {
        let g = self.basis.grid();
        let cells = g.cells();
        let mut cell = [0usize; 2];
        let mut local = [0.0f64; 2];
        for axis in 0..g.dim() {
            let h = g.spacing(axis);
            let s = point[axis] / h;
            let c = (s.floor().max(0.0) as usize).min(cells - 1);
            cell[axis] = c;
            local[axis] = (s - c as f64).clamp(0.0, 1.0);
        }
        match g.dim() {
            1 => {
                let a = self.basis.boundary_padded(self.coeffs, [cell[0], 0]);
                let b = self.basis.boundary_padded(self.coeffs, [cell[0] + 1, 0]);
                a * (1.0 - local[0]) + b * local[0]
            }
            _ => {
                let (cx, cy) = (cell[0], cell[1]);
                let (sx, sy) = (local[0], local[1]);
                let v00 = self.basis.boundary_padded(self.coeffs, [cx, cy]);
                let v10 = self.basis.boundary_padded(self.coeffs, [cx + 1, cy]);
                let v01 = self.basis.boundary_padded(self.coeffs, [cx, cy + 1]);
                let v11 = self.basis.boundary_padded(self.coeffs, [cx + 1, cy + 1]);
                v00 * ((1.0 - sx) * (1.0 - sy))
                    + v10 * (sx * (1.0 - sy))
                    + v01 * ((1.0 - sx) * sy)
                    + v11 * (sx * sy)
            }
        }
    }
}

/// Interpolation errors on a sequence of levels and the fitted order.
#[derive(Debug, Clone)]
pub struct ApproximationOrder {
    pub levels: Vec<u32>,
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

/// Fits `‖P v − v‖ ≈ c h^ν` over the given levels.
pub fn measure_approximation_order<F>(
    domain: &Domain,
    levels: &[u32],
    field: F,
) -> Result<ApproximationOrder>
where
    F: Fn(&[f64]) -> Complex64,
{
    if levels.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: levels.len(),
        });
    }
    let mut h = Vec::with_capacity(levels.len());
    let mut errors = Vec::with_capacity(levels.len());
    for &level in levels {
        let basis = NodalBasis::new(Grid::build(domain.clone(), level)?);
        let coeffs = basis.decompose(&field)?;
        let err = basis.l2_error(&coeffs, &field)?;
        if err < ROUNDOFF_FLOOR {
            return Err(Error::OrderUndefined { level, error: err });
        }
        h.push(basis.grid().h());
        errors.push(err);
    }
    let slope = loglog_slope(&h, &errors)?;
    Ok(ApproximationOrder {
        levels: levels.to_vec(),
        h,
        errors,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn basis(dim: usize, level: u32) -> NodalBasis {
        let domain = if dim == 1 {
            Domain::interval(1.0)
        } else {
            Domain::square(1.0)
        };
        NodalBasis::new(Grid::build(domain.unwrap(), level).unwrap())
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn decompose_zero_and_sine() {
        let b = basis(1, 0);
        assert_eq!(b.decompose(|_| c(0.0)).unwrap(), CVector::zeros(3));
        let s = b.decompose_real(|p| (PI * p[0]).sin()).unwrap();
        let expected = [(PI / 4.0).sin(), 1.0, (3.0 * PI / 4.0).sin()];
        for k in 0..3 {
            assert!((s[k] - c(expected[k])).norm() < 1e-15);
        }
    }

    #[test]
    fn decompose_of_basis_function_is_unit_vector() {
        for dim in [1, 2] {
            let b = basis(dim, 1);
            let k = 2;
            let coeffs = b.decompose_real(|p| b.eval_basis(k, p)).unwrap();
            for j in 0..b.len() {
                let expected = if j == k { 1.0 } else { 0.0 };
                assert_eq!(coeffs[j], c(expected));
            }
        }
    }

    #[test]
    fn decompose_rejects_non_finite() {
        let b = basis(1, 0);
        let err = b
            .decompose_real(|p| if p[0] == 0.5 { f64::NAN } else { 0.0 })
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
    }

    #[test]
    fn summate_unit_vector_is_hat() {
        let b = basis(2, 0);
        let mut e = CVector::zeros(b.len());
        e[4] = c(1.0);
        let f = b.summate(&e).unwrap();
        for (k, node) in b.grid().nodes().enumerate() {
            let expected = if k == 4 { 1.0 } else { 0.0 };
            assert_eq!(f.eval(node), c(expected));
        }
        // between nodes the hat agrees with the direct product formula
        let p = [0.4, 0.55];
        assert!((f.eval(&p).re - b.eval_basis(4, &p)).abs() < 1e-15);
    }

    #[test]
    fn summate_rejects_wrong_length() {
        let b = basis(1, 0);
        assert!(b.summate(&CVector::zeros(4)).is_err());
    }

    #[test]
    fn interpolation_property_on_levels_0_to_3() {
        let v = |p: &[f64]| c(p[0] * (1.0 - p[0]));
        for level in 0..=3 {
            let b = basis(1, level);
            let coeffs = b.decompose(v).unwrap();
            let f = b.summate(&coeffs).unwrap();
            for node in b.grid().nodes() {
                assert_eq!(f.eval(node), v(node));
            }
        }
    }

    #[test]
    fn sine_has_order_two_in_1d_and_2d() {
        let d1 = Domain::interval(1.0).unwrap();
        let o1 =
            measure_approximation_order(&d1, &[0, 1, 2, 3, 4], |p| c((PI * p[0]).sin())).unwrap();
        assert!((1.9..=2.1).contains(&o1.slope), "1D slope {}", o1.slope);

        let d2 = Domain::square(1.0).unwrap();
        let o2 = measure_approximation_order(&d2, &[0, 1, 2, 3], |p| {
            c((PI * p[0]).sin() * (PI * p[1]).sin())
        })
        .unwrap();
        assert!((1.9..=2.1).contains(&o2.slope), "2D slope {}", o2.slope);
    }

    #[test]
    fn hat_on_its_own_grid_has_undefined_order() {
        let b = basis(1, 0);
        let hat = |p: &[f64]| c(b.eval_basis(1, p));
        let d = Domain::interval(1.0).unwrap();
        let err = measure_approximation_order(&d, &[0, 1], hat).unwrap_err();
        assert!(matches!(err, Error::OrderUndefined { level: 0, .. }));
    }

    #[test]
    fn multiplication_almost_commutes_at_rate_h_squared() {
        let mult = |p: &[f64]| p[0] * p[0] + p[1] * p[1];
        let v = |p: &[f64]| c((PI * p[0]).sin() * (PI * p[1]).sin());
        let defects: Vec<f64> = (0..4)
            .map(|m| basis(2, m).commutation_defect(mult, v).unwrap())
            .collect();
        let hs: Vec<f64> = (0..4).map(|m| 0.25 / 2f64.powi(m)).collect();
        let slope = loglog_slope(&hs, &defects).unwrap();
        assert!(slope >= 1.9, "defects {defects:?}, slope {slope}");
    }

    proptest! {
        #[test]
        fn decompose_summate_is_identity(values in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 49)) {
            let b = basis(2, 1);
            let x = CVector::from_iterator(49, values.iter().map(|&(r, i)| Complex64::new(r, i)));
            let f = b.summate(&x).unwrap();
            let back = b.decompose(|p| f.eval(p)).unwrap();
            prop_assert_eq!(back, x);
        }

        #[test]
        fn expansion_vanishes_on_boundary(values in proptest::collection::vec(-1.0f64..1.0, 49), t in 0.0f64..1.0) {
            let b = basis(2, 1);
            let x = CVector::from_iterator(49, values.iter().map(|&r| c(r)));
            let f = b.summate(&x).unwrap();
            for p in [[0.0, t], [1.0, t], [t, 0.0], [t, 1.0]] {
                prop_assert_eq!(f.eval(&p), c(0.0));
            }
        }
    }
}
