//! Dense complex-matrix kernels: Hermitian eigendecomposition, matrix
//! exponential, self-adjoint logarithm of a unitary, polar re-unitarization
//! and complex log-determinants.

use std::f64::consts::{PI, TAU};

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Numerical thresholds shared by the whole crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative Hermiticity defect accepted by `herm_eig`.
    pub hermitian: f64,
    /// Unitarity defect accepted by `selfadjoint_log_unitary`.
    pub unitary: f64,
    /// Smallest/largest singular value ratio below which a matrix is singular.
    pub singular: f64,
    /// Relative distance below which an eigenvalue counts as touching the level.
    pub level_tie: f64,
    /// Absolute gap margin below which a family violates the gap assumption.
    pub gap: f64,
    /// Off-diagonal block leakage accepted when splitting along F+ and F-.
    pub block_leakage: f64,
    /// Allowed deviation of |det Hol| from 1.
    pub holonomy_modulus: f64,
    /// Allowed imaginary part of a phase integral.
    pub real_phase: f64,
    /// Minimal |det| of a Wilson-loop projector product.
    pub degenerate_product: f64,
    /// Minimal relative singular value of Id - T(2π).
    pub invertibility: f64,
    /// Unitarity defect tolerated before re-unitarization of an ODE step.
    pub ode_unitarity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-9,
            unitary: 1e-8,
            singular: 1e-12,
            level_tie: 1e-8,
            gap: 1e-6,
            block_leakage: 1e-5,
            holonomy_modulus: 1e-4,
            real_phase: 1e-6,
            degenerate_product: 1e-8,
            invertibility: 1e-12,
            ode_unitarity: 1e-6,
        }
    }
}

/// Builds a matrix from row-major entries, rejecting NaN and infinities.
pub fn matrix_from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> Result<CMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidMatrix("dimensions must be positive".into()));
    }
    if entries.len() != rows * cols {
        return Err(Error::InvalidMatrix(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let m = CMatrix::from_row_slice(rows, cols, entries);
    check_finite(&m)?;
    Ok(m)
}

pub fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidMatrix("non-finite entry".into()))
    }
}

fn require_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidMatrix(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Frobenius norm of `m - m†`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

/// Frobenius norm of `v†v - Id`.
pub fn unitarity_defect(v: &CMatrix) -> f64 {
    (v.adjoint() * v - identity(v.ncols())).norm()
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn smallest_singular_value(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Reduces an angle to (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

/// Distance between two angles on the circle, in [0, π].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

#[derive(Clone, Debug)]
pub struct HermitianEig {
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: CMatrix,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&self.eigenvalues.map(real));
        &self.eigenvectors * d * self.eigenvectors.adjoint()
    }
}

pub fn herm_eig(h: &CMatrix) -> Result<HermitianEig> {
    herm_eig_with(h, &Tolerances::default())
}

pub fn herm_eig_with(h: &CMatrix, tol: &Tolerances) -> Result<HermitianEig> {
    let n = require_square(h)?;
    check_finite(h)?;
    let defect = hermiticity_defect(h);
    if defect > tol.hermitian * h.norm().max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    let eig = SymmetricEigen::try_new(hermitian_part(h), f64::EPSILON, 10_000 * n.max(1))
        .ok_or(Error::ConvergenceFailure("Hermitian eigensolver"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Matrix exponential by Padé scaling and squaring.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    require_square(a)?;
    check_finite(a)?;
    Ok(a.exp())
}

/// `exp(-i t a)` for Hermitian `a`, through its eigendecomposition. Exactly
/// unitary up to rounding for every `t`.
pub fn unitary_flow(eig: &HermitianEig, t: f64) -> CMatrix {
    let phases = eig
        .eigenvalues
        .map(|x| Complex64::from_polar(1.0, -t * x));
    &eig.eigenvectors * CMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint()
}

/// Eigenvalues of a general square matrix, from its complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    require_square(m)?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000 * m.nrows())
        .ok_or(Error::ConvergenceFailure("Schur decomposition"))?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().cloned().collect())
}

pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Self-adjoint `a` with `exp(2πi a) = v` and spectrum in [0, 1).
///
/// `v` is normal, so its Schur form is diagonal; degenerate eigenphases are
/// handled blockwise by the unitary Schur basis.
pub fn selfadjoint_log_unitary(v: &CMatrix) -> Result<CMatrix> {
    selfadjoint_log_unitary_with(v, &Tolerances::default())
}

pub fn selfadjoint_log_unitary_with(v: &CMatrix, tol: &Tolerances) -> Result<CMatrix> {
    let n = require_square(v)?;
    check_finite(v)?;
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let defect = unitarity_defect(v);
    if defect > tol.unitary {
        return Err(Error::NotUnitary { defect });
    }
    let schur = Schur::try_new(v.clone(), f64::EPSILON, 10_000 * n)
        .ok_or(Error::ConvergenceFailure("Schur decomposition"))?;
    let (q, t) = schur.unpack();
    let fractions = DVector::from_iterator(
        n,
        t.diagonal().iter().map(|z| {
            let mut phase = z.arg().rem_euclid(TAU);
            if phase >= TAU {
                phase -= TAU;
            }
            real(phase / TAU)
        }),
    );
    let a = &q * CMatrix::from_diagonal(&fractions) * q.adjoint();
    Ok(hermitian_part(&a))
}

/// Unitary factor of the polar decomposition `m = W P`.
pub fn polar_unitary(m: &CMatrix) -> Result<CMatrix> {
    polar_unitary_with(m, &Tolerances::default())
}

pub fn polar_unitary_with(m: &CMatrix, tol: &Tolerances) -> Result<CMatrix> {
    require_square(m)?;
    check_finite(m)?;
    if m.is_empty() {
        return Ok(m.clone());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(smin > tol.singular * smax) {
        return Err(Error::SingularInput {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    Ok(u * v_t)
}

/// Complex logarithm of the determinant, computed from an LU factorization.
/// The imaginary part is reduced to (−π, π].
pub fn log_det(m: &CMatrix) -> Result<Complex64> {
    require_square(m)?;
    if m.is_empty() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let lu = m.clone().lu();
    let mut acc = Complex64::new(0.0, 0.0);
    for z in lu.u().diagonal().iter() {
        if *z == Complex64::new(0.0, 0.0) || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::SingularInput { ratio: 0.0 });
        }
        acc += z.ln();
    }
    if lu.p().determinant::<f64>() < 0.0 {
        acc.im += PI;
    }
    acc.im = wrap_angle(acc.im);
    Ok(acc)
}

/// Reduces the imaginary part of a complex logarithm to (−π, π].
pub fn reduce_log(z: Complex64) -> Complex64 {
    Complex64::new(z.re, wrap_angle(z.im))
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn diag(values: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&DVector::from_iterator(
            values.len(),
            values.iter().map(|&x| real(x)),
        ))
    }

    #[test]
    fn eig_of_diagonal_is_sorted_permutation() {
        let e = herm_eig(&diag(&[2.0, -1.0])).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[-1.0, 2.0]);
        assert!((e.eigenvectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((e.eigenvectors[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_of_pauli_x() {
        let sx = matrix_from_rows(2, 2, &[real(0.0), real(1.0), real(1.0), real(0.0)]).unwrap();
        let e = herm_eig(&sx).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        // lower eigenvector ∝ (1, -1)/√2 up to phase
        let v = e.eigenvectors.column(0);
        let overlap = (v[0] - v[1]).norm() / 2f64.sqrt();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let h = random_hermitian(&mut rng(7), 6);
        let e = herm_eig(&h).unwrap();
        assert!((e.reconstruct() - &h).norm() <= 1e-12 * h.norm());
        assert!(unitarity_defect(&e.eigenvectors) <= 1e-12);
        assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = matrix_from_rows(2, 2, &[real(0.0), real(1.0), real(0.0), real(0.0)]).unwrap();
        assert!(matches!(herm_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn construction_rejects_nan() {
        let r = matrix_from_rows(1, 1, &[c64(f64::NAN, 0.0)]);
        assert!(matches!(r, Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn expm_basic_cases() {
        assert!((expm(&CMatrix::zeros(3, 3)).unwrap() - identity(3)).norm() < 1e-15);
        let a = CMatrix::from_diagonal(&DVector::from_vec(vec![c64(0.0, PI), real(0.0)]));
        assert!((expm(&a).unwrap() - diag(&[-1.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn expm_of_skew_hermitian_is_unitary() {
        let h = random_hermitian(&mut rng(11), 4);
        let u = expm(&(h * I)).unwrap();
        assert!(unitarity_defect(&u) <= 1e-12);
    }

    #[test]
    fn log_of_identity_and_minus_one() {
        assert!(selfadjoint_log_unitary(&identity(3)).unwrap().norm() < 1e-15);
        let a = selfadjoint_log_unitary(&diag(&[-1.0])).unwrap();
        assert!((a[(0, 0)] - real(0.5)).norm() < 1e-15);
    }

    #[test]
    fn log_of_random_unitary_exponentiates_back() {
        let v = random_unitary(&mut rng(3), 3);
        let a = selfadjoint_log_unitary(&v).unwrap();
        assert!(hermiticity_defect(&a) < 1e-14);
        let back = expm(&(a.clone() * c64(0.0, TAU))).unwrap();
        assert!((back - &v).norm() <= 1e-10);
        let spec = herm_eig(&a).unwrap().eigenvalues;
        assert!(spec.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn log_of_degenerate_unitary() {
        let w = random_unitary(&mut rng(5), 4);
        let v = &w * diag(&[-1.0, -1.0, 1.0, 1.0]) * w.adjoint();
        let a = selfadjoint_log_unitary(&v).unwrap();
        let back = expm(&(a * c64(0.0, TAU))).unwrap();
        assert!((back - &v).norm() <= 1e-10);
    }

    #[test]
    fn log_rejects_non_unitary() {
        let r = selfadjoint_log_unitary(&diag(&[2.0]));
        assert!(matches!(r, Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn polar_fixed_point_and_scalar() {
        let u = random_unitary(&mut rng(9), 4);
        assert!((polar_unitary(&u).unwrap() - &u).norm() < 1e-14);
        let s = identity(3).scale(1.01);
        assert!((polar_unitary(&s).unwrap() - identity(3)).norm() < 1e-14);
    }

    #[test]
    fn polar_of_perturbed_unitary() {
        let mut r = rng(13);
        let u = random_unitary(&mut r, 4);
        let e = random_matrix(&mut r, 4);
        let e = e.scale(1e-4 / e.norm());
        let w = polar_unitary(&(&u + e)).unwrap();
        assert!(unitarity_defect(&w) <= 1e-13);
        assert!((w - &u).norm() <= 2e-4);
    }

    #[test]
    fn polar_rejects_singular() {
        let m = diag(&[1.0, 0.0]);
        assert!(matches!(polar_unitary(&m), Err(Error::SingularInput { .. })));
    }

    #[test]
    fn log_det_matches_determinant() {
        let m = random_matrix(&mut rng(17), 5);
        let l = log_det(&m).unwrap();
        let d = m.determinant();
        assert!((l.exp() - d).norm() <= 1e-12 * d.norm());
        assert!(log_det(&diag(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn schur_eigenvalues_of_triangular() {
        let m = matrix_from_rows(2, 2, &[c64(0.5, 0.5), real(3.0), real(0.0), real(-2.0)]).unwrap();
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - real(-2.0)).norm() < 1e-12);
        assert!((ev[1] - c64(0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn angle_helpers() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!(circular_distance(PI - 1e-3, -PI + 1e-3) < 2.1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn eigenvalues_shift_with_identity(seed in any::<u64>(), shift in -5.0f64..5.0) {
            let h = random_hermitian(&mut rng(seed), 5);
            let e0 = herm_eig(&h).unwrap().eigenvalues;
            let e1 = herm_eig(&(&h + identity(5).scale(shift))).unwrap().eigenvalues;
            for (a, b) in e0.iter().zip(e1.iter()) {
                prop_assert!((a + shift - b).abs() < 1e-12);
            }
        }

        #[test]
        fn expm_inverse_pair(seed in any::<u64>()) {
            let a = random_matrix(&mut rng(seed), 4);
            let p = expm(&a).unwrap() * expm(&(-a)).unwrap();
            prop_assert!((p - identity(4)).norm() < 1e-10);
        }

        #[test]
        fn log_inverts_exponential(seed in any::<u64>()) {
            let mut r = rng(seed);
            let w = random_unitary(&mut r, 3);
            let spectrum: Vec<f64> = (0..3).map(|_| r.random_range(0.0..1.0 - 1e-6)).collect();
            let a = &w * diag(&spectrum) * w.adjoint();
            let v = expm(&(a.clone() * c64(0.0, TAU))).unwrap();
            let back = selfadjoint_log_unitary(&v).unwrap();
            prop_assert!((back - a).norm() < 1e-8);
        }
    }
}
