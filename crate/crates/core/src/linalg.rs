//! Dense helpers shared by the assembly and propagation modules.
//!
//! Complex products are split into real GEMMs so they run through the
//! blocked real kernel instead of the generic scalar loop.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{CMatrix, CVector, RMatrix};

pub fn split(a: &CMatrix) -> (RMatrix, RMatrix) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

pub fn join(re: &RMatrix, im: &RMatrix) -> CMatrix {
    re.zip_map(im, Complex64::new)
}

pub fn to_complex(a: &RMatrix) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn is_real(a: &CMatrix) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// `r * c` for real `r` and complex `c`.
pub fn rc_mul(r: &RMatrix, c: &CMatrix) -> CMatrix {
    let (re, im) = split(c);
    join(&(r * re), &(r * im))
}

/// `c * r` for complex `c` and real `r`.
pub fn cr_mul(c: &CMatrix, r: &RMatrix) -> CMatrix {
    let (re, im) = split(c);
    join(&(re * r), &(im * r))
}

pub fn cc_mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let a_real = ai.iter().all(|&x| x == 0.0);
    let b_real = bi.iter().all(|&x| x == 0.0);
    match (a_real, b_real) {
        (true, true) => to_complex(&(ar * br)),
        (true, false) => join(&(&ar * br), &(&ar * bi)),
        (false, true) => join(&(&ar * &br), &(&ai * &br)),
        (false, false) => {
            let re = &ar * &br - &ai * &bi;
            let im = &ar * &bi + &ai * &br;
            join(&re, &im)
        }
    }
}

/// Real matrix times complex vector.
pub fn rc_mul_vec(r: &RMatrix, v: &CVector) -> CVector {
    let re = r * v.map(|z| z.re);
    let im = r * v.map(|z| z.im);
    re.zip_map(&im, Complex64::new)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_real(a: &RMatrix) -> f64 {
    a.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if is_real(a) {
        let svd = SVD::new(a.map(|z| z.re), false, false);
        return svd.singular_values.max();
    }
    let svd = SVD::new(a.clone(), false, false);
    svd.singular_values.max()
}

/// Eigenvalues of the Hermitian part `(A + A*)/2`, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let sym = (a + a.adjoint()).scale(0.5);
    let mut vals: Vec<f64> = if is_real(&sym) {
        sym.map(|z| z.re)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect()
    } else {
        sym.symmetric_eigenvalues().iter().copied().collect()
    };
    vals.sort_by(|x, y| x.total_cmp(y));
    vals
}

/// Eigen-decomposition of the Hermitian part of `a`: eigenvalues ascending with
/// matching unitary eigenvector columns.
pub fn hermitian_eigen(a: &CMatrix) -> (DVector<f64>, CMatrix) {
    let sym = (a + a.adjoint()).scale(0.5);
    let (vals, vecs) = if is_real(&sym) {
        let eig = SymmetricEigen::new(sym.map(|z| z.re));
        (eig.eigenvalues, to_complex(&eig.eigenvectors))
    } else {
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let sorted_vals = DVector::from_iterator(vals.len(), order.iter().map(|&i| vals[i]));
    let sorted_vecs = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, order[c])]);
    (sorted_vals, sorted_vecs)
}

pub fn kron(a: &RMatrix, b: &RMatrix) -> RMatrix {
    a.kronecker(b)
}

/// Sum of `coeffs[j] * a^j`.
pub fn matrix_polynomial(a: &CMatrix, coeffs: &[Complex64]) -> CMatrix {
    let n = a.nrows();
    let mut acc = CMatrix::zeros(n, n);
    let mut power = CMatrix::identity(n, n);
    for (j, &c) in coeffs.iter().enumerate() {
        if j > 0 {
            power = cc_mul(&power, a);
        }
        if c != Complex64::new(0.0, 0.0) {
            acc += power.map(|z| z * c);
        }
    }
    acc
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries with independent uniform real and imaginary parts in `[-1, 1)`.
pub fn random_cvector<R: Rng>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

pub fn random_cmatrix<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Random Hermitian matrix (Euclidean sense).
pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let a = random_cmatrix(rng, n);
    (&a + a.adjoint()).scale(0.5)
}
