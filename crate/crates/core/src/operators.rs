//! Matrix representations of Hamiltonian terms on the hat basis.
//!
//! The kinetic term is built as an exact factorization
//! `H₀ = α M⁻¹ Cᵀ M' C` with `C` sampling gradients at points where the
//! product of two gradients is integrated exactly and `M'` the diagonal of
//! the matching quadrature weights. The weak identity
//! `⟨H₀u, v⟩_M = α ⟨Cu, Cv⟩_{M'}` then holds to round-off, which makes `H₀`
//! M-self-adjoint and, for `α = +1`, positive. `H₀` discretizes `−Δ`.
//!
//! Potentials are nodal values `V(node_k)` acting diagonally in the
//! symmetric frame, i.e. `𝕍 = W⁻¹ diag(V_k) W`. Two such operators commute,
//! their eigenvalues are exactly the nodal values, and they are M-self-adjoint,
//! so sums `H₀ + 𝕍` stay self-adjoint.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::gram::{mass_1d, GramMatrix};
use crate::linalg::{
    self, cc_mul, hermitian_eigenvalues, max_abs, rc_mul_vec, seeded_rng, to_complex,
};
use crate::projection::NodalBasis;
use crate::quadrature::GAUSS2_NODES;
use crate::{CMatrix, CVector, Error, RMatrix, Result};

/// Self-adjointness tolerance, relative to `‖A‖_max`.
pub const SELF_ADJOINT_TOL: f64 = 1e-11;

/// A complex matrix acting on coefficient vectors, tied to the inner product
/// it is measured in.
#[derive(Debug, Clone)]
pub struct ParticularOperator {
    matrix: CMatrix,
    gram: Arc<GramMatrix>,
    hermitian: bool,
}

impl ParticularOperator {
    /// Wraps `matrix`; the self-adjoint flag is set by checking
    /// `‖A − A†‖_max ≤ 1e-11 ‖A‖_max`.
    pub fn new(matrix: CMatrix, gram: Arc<GramMatrix>) -> Result<Self> {
        if matrix.nrows() != gram.dim() || matrix.ncols() != gram.dim() {
            return Err(Error::DimensionMismatch {
                expected: gram.dim(),
                got: matrix.nrows(),
            });
        }
        let residual = gram.self_adjoint_residual(&matrix)?;
        Ok(Self {
            matrix,
            gram,
            hermitian: residual <= SELF_ADJOINT_TOL,
        })
    }

    pub fn from_real(matrix: &RMatrix, gram: Arc<GramMatrix>) -> Result<Self> {
        Self::new(to_complex(matrix), gram)
    }

    pub fn identity(gram: Arc<GramMatrix>) -> Self {
        let n = gram.dim();
        Self {
            matrix: CMatrix::identity(n, n),
            gram,
            hermitian: true,
        }
    }

    pub fn zero(gram: Arc<GramMatrix>) -> Self {
        let n = gram.dim();
        Self {
            matrix: CMatrix::zeros(n, n),
            gram,
            hermitian: true,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn gram(&self) -> &Arc<GramMatrix> {
        &self.gram
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn self_adjoint_residual(&self) -> f64 {
        self.gram
            .self_adjoint_residual(&self.matrix)
            .unwrap_or(f64::INFINITY)
    }

    pub fn apply(&self, u: &CVector) -> Result<CVector> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(&self.matrix * u)
    }

    pub fn adjoint(&self) -> Result<Self> {
        Self::new(self.gram.m_adjoint(&self.matrix)?, self.gram.clone())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.gram.same_as(&other.gram) {
            return Err(Error::GramMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Self::new(&self.matrix + &other.matrix, self.gram.clone())
    }

    pub fn scale(&self, c: Complex64) -> Result<Self> {
        Self::new(self.matrix.map(|z| z * c), self.gram.clone())
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Self::new(cc_mul(&self.matrix, &other.matrix), self.gram.clone())
    }

    /// `Σ coeffs[j] A^j`.
    pub fn polynomial(&self, coeffs: &[f64]) -> Result<Self> {
        let c: Vec<Complex64> = coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(
            linalg::matrix_polynomial(&self.matrix, &c),
            self.gram.clone(),
        )
    }

    /// Operator norm in the M-geometry.
    pub fn m_norm(&self) -> Result<f64> {
        self.gram.operator_norm(&self.matrix)
    }

    /// Eigenvalues of the symmetric-frame matrix `W A W⁻¹` (Hermitian part),
    /// ascending. For a self-adjoint kinetic term these are the generalized
    /// eigenvalues of the stiffness/mass pencil.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        Ok(hermitian_eigenvalues(
            &self.gram.to_symmetric_frame(&self.matrix)?,
        ))
    }
}

/// `[A, B] = AB − BA`.
pub fn commutator(a: &ParticularOperator, b: &ParticularOperator) -> Result<ParticularOperator> {
    a.check_compatible(b)?;
    let ab = cc_mul(&a.matrix, &b.matrix);
    let ba = cc_mul(&b.matrix, &a.matrix);
    ParticularOperator::new(ab - ba, a.gram.clone())
}

/// Sparse gradient sampler `C`: each row is one gradient component sampled
/// at one quadrature point of one cell.
#[derive(Debug, Clone)]
pub struct GradientSampler {
    n_dofs: usize,
    rows: Vec<Vec<(usize, f64)>>,
    weights: DVector<f64>,
}

impl GradientSampler {
    pub fn new(n_dofs: usize, rows: Vec<Vec<(usize, f64)>>, weights: DVector<f64>) -> Result<Self> {
        if rows.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: weights.len(),
            });
        }
        if let Some(&(j, _)) = rows.iter().flatten().find(|(j, _)| *j >= n_dofs) {
            return Err(Error::DimensionMismatch {
                expected: n_dofs,
                got: j + 1,
            });
        }
        Ok(Self {
            n_dofs,
            rows,
            weights,
        })
    }

    /// Tensor hat basis: one sample per cell in 1D (gradients are cellwise
    /// constant); in 2D each partial derivative is linear in the transverse
    /// coordinate, so two Gauss points across the cell integrate its square
    /// exactly.
    pub fn for_basis(basis: &NodalBasis) -> Self {
        let g = basis.grid();
        let cells = g.cells();
        let n = g.axis_len();
        let mut rows = Vec::new();
        let mut weights = Vec::new();
        match g.dim() {
            1 => {
                let h = g.spacing(0);
                for c in 0..cells {
                    let mut row = Vec::with_capacity(2);
                    if c >= 1 {
                        row.push((c - 1, -1.0 / h));
                    }
                    if c + 1 < cells {
                        row.push((c, 1.0 / h));
                    }
                    rows.push(row);
                    weights.push(h);
                }
            }
            _ => {
                let (hx, hy) = (g.spacing(0), g.spacing(1));
                let dof = |i: usize, j: usize| -> Option<usize> {
                    (i >= 1 && i < cells && j >= 1 && j < cells).then(|| (i - 1) * n + (j - 1))
                };
                let gauss: Vec<f64> = GAUSS2_NODES.iter().map(|t| 0.5 * (1.0 + t)).collect();
                let w = 0.5 * hx * hy;
                for cx in 0..cells {
                    for cy in 0..cells {
                        let corners = [
                            (dof(cx, cy), 0.0, 0.0),
                            (dof(cx + 1, cy), 1.0, 0.0),
                            (dof(cx, cy + 1), 0.0, 1.0),
                            (dof(cx + 1, cy + 1), 1.0, 1.0),
                        ];
                        // ∂/∂x of corner (a, b) at local y = t: (2a − 1)/hx · (b t + (1 − b)(1 − t))
                        for &t in &gauss {
                            let row = corners
                                .iter()
                                .filter_map(|&(d, a, b)| {
                                    d.map(|d| {
                                        (d, (2.0 * a - 1.0) / hx * (b * t + (1.0 - b) * (1.0 - t)))
                                    })
                                })
                                .collect();
                            rows.push(row);
                            weights.push(w);
                        }
                        for &s in &gauss {
                            let row = corners
                                .iter()
                                .filter_map(|&(d, a, b)| {
                                    d.map(|d| {
                                        (d, (2.0 * b - 1.0) / hy * (a * s + (1.0 - a) * (1.0 - s)))
                                    })
                                })
                                .collect();
                            rows.push(row);
                            weights.push(w);
                        }
                    }
                }
            }
        }
        Self {
            n_dofs: g.n_dofs(),
            rows,
            weights: DVector::from_vec(weights),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// Diagonal of the gradient-space gram matrix `M'`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn apply(&self, u: &CVector) -> CVector {
        CVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(j, c)| u[j] * c).sum::<Complex64>()),
        )
    }

    /// `⟨x, y⟩_{M'} = y* M' x`.
    pub fn weighted_inner(&self, x: &CVector, y: &CVector) -> Complex64 {
        x.iter()
            .zip(y.iter())
            .zip(self.weights.iter())
            .map(|((a, b), w)| b.conj() * a * *w)
            .sum()
    }

    pub fn to_dense(&self) -> RMatrix {
        let mut c = RMatrix::zeros(self.rows.len(), self.n_dofs);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                c[(i, j)] += v;
            }
        }
        c
    }

    /// `Cᵀ M' C`.
    pub fn gram_product(&self) -> RMatrix {
        let mut k = RMatrix::zeros(self.n_dofs, self.n_dofs);
        for (row, w) in self.rows.iter().zip(self.weights.iter()) {
            for &(i, a) in row {
                for &(j, b) in row {
                    k[(i, j)] += w * a * b;
                }
            }
        }
        k
    }
}

/// `α M⁻¹ Cᵀ M' C` with its factors.
#[derive(Debug, Clone)]
pub struct FactoredOperator {
    sampler: GradientSampler,
    alpha: f64,
    stiffness: RMatrix,
    assembled: ParticularOperator,
}

impl FactoredOperator {
    /// Assembles `α M⁻¹ Cᵀ M' C` directly from the factors.
    pub fn from_factors(
        sampler: GradientSampler,
        alpha: f64,
        gram: Arc<GramMatrix>,
    ) -> Result<Self> {
        if sampler.n_dofs() != gram.dim() {
            return Err(Error::DimensionMismatch {
                expected: gram.dim(),
                got: sampler.n_dofs(),
            });
        }
        let stiffness = sampler.gram_product();
        Self::with_stiffness(sampler, alpha, stiffness, gram)
    }

    fn with_stiffness(
        sampler: GradientSampler,
        alpha: f64,
        stiffness: RMatrix,
        gram: Arc<GramMatrix>,
    ) -> Result<Self> {
        let h = gram.solve_real(&stiffness) * alpha;
        let assembled = ParticularOperator::from_real(&h, gram)?;
        Ok(Self {
            sampler,
            alpha,
            stiffness,
            assembled,
        })
    }

    pub fn sampler(&self) -> &GradientSampler {
        &self.sampler
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `Cᵀ M' C` (the stiffness matrix for the kinetic term).
    pub fn stiffness(&self) -> &RMatrix {
        &self.stiffness
    }

    pub fn operator(&self) -> &ParticularOperator {
        &self.assembled
    }

    pub fn into_operator(self) -> ParticularOperator {
        self.assembled
    }
}

/// 1D P1 stiffness `(1/h)·tridiag(−1, 2, −1)`, assembled cell by cell.
pub fn stiffness_1d(cells: usize, h: f64) -> RMatrix {
    let n = cells - 1;
    let mut k = RMatrix::zeros(n, n);
    let local = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
    for c in 0..cells {
        let dofs = [c.checked_sub(1), if c + 1 < cells { Some(c) } else { None }];
        for (a, da) in dofs.iter().enumerate() {
            for (b, db) in dofs.iter().enumerate() {
                if let (Some(i), Some(j)) = (da, db) {
                    k[(*i, *j)] += local[a][b];
                }
            }
        }
    }
    k
}

/// Discrete `−Δ` with homogeneous Dirichlet conditions:
/// `H₀ = M⁻¹K`, `K_ij = ∫∇b_i·∇b_j` in closed form
/// (`K = K_x ⊗ M_y + M_x ⊗ K_y` in 2D).
pub fn assemble_kinetic(basis: &NodalBasis, gram: Arc<GramMatrix>) -> Result<FactoredOperator> {
    let g = basis.grid();
    if gram.dim() != g.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: g.n_dofs(),
            got: gram.dim(),
        });
    }
    let cells = g.cells();
    let stiffness = match g.dim() {
        1 => stiffness_1d(cells, g.spacing(0)),
        _ => {
            let (hx, hy) = (g.spacing(0), g.spacing(1));
            stiffness_1d(cells, hx).kronecker(&mass_1d(cells, hy))
                + mass_1d(cells, hx).kronecker(&stiffness_1d(cells, hy))
        }
    };
    FactoredOperator::with_stiffness(GradientSampler::for_basis(basis), 1.0, stiffness, gram)
}

/// Nodal samples of a real potential.
pub fn nodal_potential<F>(basis: &NodalBasis, potential: F) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let values: Vec<f64> = basis.grid().nodes().map(&potential).collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(DVector::from_vec(values))
}

/// Multiplication by a real potential: `W⁻¹ diag(V(node_k)) W`.
pub fn assemble_potential<F>(
    basis: &NodalBasis,
    gram: Arc<GramMatrix>,
    potential: F,
) -> Result<ParticularOperator>
where
    F: Fn(&[f64]) -> f64,
{
    let values = nodal_potential(basis, potential)?;
    if values.len() != gram.dim() {
        return Err(Error::DimensionMismatch {
            expected: gram.dim(),
            got: values.len(),
        });
    }
    let diag = CMatrix::from_diagonal(&values.map(|v| Complex64::new(v, 0.0)));
    let matrix = gram.from_symmetric_frame(&diag)?;
    ParticularOperator::new(matrix, gram)
}

#[derive(Debug, Clone)]
pub struct PairingViolation {
    pub trial: usize,
    pub residual: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct FactorizationReport {
    pub trials: usize,
    pub max_pairing_residual: f64,
    /// Smallest `α·Re⟨H₀u, u⟩_M / ‖Cu‖²_{M'}` seen (1 for an exact positive factorization).
    pub min_energy: f64,
    pub pairing_violations: Vec<PairingViolation>,
    pub sign_violations: Vec<PairingViolation>,
}

impl FactorizationReport {
    pub fn passed(&self) -> bool {
        self.pairing_violations.is_empty() && self.sign_violations.is_empty()
    }
}

/// Checks `⟨H₀u, v⟩_M = α⟨Cu, Cv⟩_{M'}` and the sign of `⟨H₀u, u⟩_M` on
/// random coefficient vectors.
pub fn verify_exact_factorization(
    f: &FactoredOperator,
    trials: usize,
    seed: u64,
) -> FactorizationReport {
    const TOL: f64 = 1e-11;
    let mut rng = seeded_rng(seed);
    let gram = f.assembled.gram();
    let n = gram.dim();
    let mut report = FactorizationReport {
        trials,
        max_pairing_residual: 0.0,
        min_energy: f64::INFINITY,
        pairing_violations: Vec::new(),
        sign_violations: Vec::new(),
    };
    for trial in 0..trials {
        let u = random_state(&mut rng, n);
        let v = random_state(&mut rng, n);
        let hu = f.assembled.matrix() * &u;
        let lhs = gram
            .m_inner(&hu, &v)
            .expect("dimensions checked at assembly");
        let cu = f.sampler.apply(&u);
        let cv = f.sampler.apply(&v);
        let rhs = f.sampler.weighted_inner(&cu, &cv) * f.alpha;
        let cu_norm = f.sampler.weighted_inner(&cu, &cu).re.sqrt();
        let cv_norm = f.sampler.weighted_inner(&cv, &cv).re.sqrt();
        let scale = f.alpha.abs() * cu_norm * cv_norm;
        let residual = (lhs - rhs).norm();
        report.max_pairing_residual = report.max_pairing_residual.max(if scale > 0.0 {
            residual / scale
        } else {
            residual
        });
        if residual > TOL * scale {
            report.pairing_violations.push(PairingViolation {
                trial,
                residual,
                scale,
            });
        }

        let energy = gram.m_inner(&hu, &u).expect("dimensions checked").re * f.alpha.signum();
        let energy_scale = cu_norm * cu_norm * f.alpha.abs();
        if energy_scale > 0.0 {
            report.min_energy = report.min_energy.min(energy / energy_scale);
        }
        if energy < -TOL * energy_scale {
            report.sign_violations.push(PairingViolation {
                trial,
                residual: -energy,
                scale: energy_scale,
            });
        }
    }
    report
}

fn random_state<R: Rng>(rng: &mut R, n: usize) -> CVector {
    linalg::random_cvector(rng, n)
}

/// Residual `‖[A, q(A)]‖_F / Σ_j |a_j| ‖A‖_F^{1+j}` for `q = Σ a_j x^j`.
pub fn polynomial_commutator_residual(a: &ParticularOperator, coeffs: &[f64]) -> Result<f64> {
    let q = a.polynomial(coeffs)?;
    let c = commutator(a, &q)?;
    let s = linalg::frobenius(a.matrix());
    let scale: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| c.abs() * s.powi(1 + j as i32))
        .sum();
    let resid = linalg::frobenius(c.matrix());
    Ok(if scale > 0.0 { resid / scale } else { resid })
}

/// Relative commutator size `‖[A, B]‖_F / (‖A‖_F ‖B‖_F)`.
pub fn relative_commutator(a: &ParticularOperator, b: &ParticularOperator) -> Result<f64> {
    let c = commutator(a, b)?;
    let scale = linalg::frobenius(a.matrix()) * linalg::frobenius(b.matrix());
    let resid = linalg::frobenius(c.matrix());
    Ok(if scale > 0.0 { resid / scale } else { resid })
}

/// `max |entry|` of a commutator, handy for exact-zero checks.
pub fn commutator_max_abs(a: &ParticularOperator, b: &ParticularOperator) -> Result<f64> {
    Ok(max_abs(commutator(a, b)?.matrix()))
}

/// Applies the real symmetric-frame diagonal `diag(values)` as `W⁻¹ D W u`
/// without forming the dense operator.
pub fn apply_nodal_diagonal(gram: &GramMatrix, values: &DVector<f64>, u: &CVector) -> CVector {
    let wu = rc_mul_vec(gram.sqrt(), u);
    let scaled = wu.zip_map(values, |z, v| z * v);
    gram.apply_inv_sqrt(&scaled)
}
