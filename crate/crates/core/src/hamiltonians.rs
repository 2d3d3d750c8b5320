//! Smooth 2π-periodic Hermitian families `H(t)` in closed form.
//!
//! Every family is stored as a finite Fourier series
//! `H(t) = C_0 + Σ_k (C_k e^{ikt} + C_k† e^{-ikt})`, or as the operator it
//! induces on an exterior power of such a series. Closed forms give exact
//! derivatives and periodicity.

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::ExteriorBasis;
use crate::linalg::{
    c64, check_finite, herm_eig, hermiticity_defect, operator_norm, real, CMatrix, Tolerances,
};

/// Complex matrix as rows of `[re, im]` pairs.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_rows(m: &CMatrix) -> MatrixRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_rows_spec(rows: &MatrixRows) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::BadSpec("empty matrix".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::BadSpec("ragged matrix rows".into()));
    }
    let m = CMatrix::from_fn(n, cols, |i, j| c64(rows[i][j][0], rows[i][j][1]));
    check_finite(&m).map_err(|_| Error::BadSpec("non-finite matrix entry".into()))?;
    Ok(m)
}

fn default_coupling() -> f64 {
    0.6
}

/// Serializable description of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `b0 (sinθ cos t σx + sinθ sin t σy + cosθ σz)`.
    SpinHalf { theta: f64, b0: f64 },
    /// Constant diagonal matrix.
    DiagConst { energies: Vec<f64> },
    /// `C_0` Hermitian, `harmonics[k-1] = C_k`.
    Fourier {
        c0: MatrixRows,
        #[serde(default)]
        harmonics: Vec<MatrixRows>,
    },
    /// Seeded random Fourier series whose spectrum keeps a gap around 0,
    /// with `n_minus` eigenvalues below it (default `n / 2`).
    RandomGapped {
        n: usize,
        harmonics: usize,
        seed: u64,
        target_gap: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_minus: Option<usize>,
        #[serde(default = "default_coupling")]
        coupling: f64,
    },
}

impl FamilySpec {
    pub fn spin_half(theta: f64, b0: f64) -> Self {
        FamilySpec::SpinHalf { theta, b0 }
    }

    pub fn diag_const(energies: &[f64]) -> Self {
        FamilySpec::DiagConst {
            energies: energies.to_vec(),
        }
    }

    pub fn random_gapped(n: usize, harmonics: usize, seed: u64, n_minus: usize) -> Self {
        FamilySpec::RandomGapped {
            n,
            harmonics,
            seed,
            target_gap: 0.2,
            n_minus: Some(n_minus),
            coupling: default_coupling(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FamilySpec::SpinHalf { theta, b0 } => format!("spin_half(theta={theta}, b0={b0})"),
            FamilySpec::DiagConst { energies } => format!("diag_const({energies:?})"),
            FamilySpec::Fourier { c0, harmonics } => {
                format!("fourier(N={}, K={})", c0.len(), harmonics.len())
            }
            FamilySpec::RandomGapped { n, harmonics, seed, .. } => {
                format!("random_gapped(N={n}, K={harmonics}, seed={seed})")
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Fourier {
        c0: CMatrix,
        harmonics: Vec<CMatrix>,
    },
    Exterior {
        base: Box<PeriodicHamiltonian>,
        basis: ExteriorBasis,
    },
}

#[derive(Clone, Debug)]
pub struct PeriodicHamiltonian {
    dim: usize,
    spec: Option<FamilySpec>,
    repr: Repr,
}

pub fn build_family(spec: &FamilySpec) -> Result<PeriodicHamiltonian> {
    PeriodicHamiltonian::build(spec)
}

impl PeriodicHamiltonian {
    pub fn build(spec: &FamilySpec) -> Result<Self> {
        let mut fam = match spec {
            FamilySpec::SpinHalf { theta, b0 } => {
                if !theta.is_finite() || !b0.is_finite() {
                    return Err(Error::BadSpec("non-finite spin-1/2 parameters".into()));
                }
                let (s, c) = theta.sin_cos();
                let c0 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[real(b0 * c), real(0.0), real(0.0), real(-b0 * c)],
                );
                let c1 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[real(0.0), real(0.0), real(b0 * s), real(0.0)],
                );
                Self::from_fourier(c0, vec![c1])?
            }
            FamilySpec::DiagConst { energies } => {
                if energies.is_empty() || energies.iter().any(|e| !e.is_finite()) {
                    return Err(Error::BadSpec("energies must be finite and non-empty".into()));
                }
                let c0 = CMatrix::from_diagonal(&DVector::from_iterator(
                    energies.len(),
                    energies.iter().map(|&e| real(e)),
                ));
                Self::from_fourier(c0, Vec::new())?
            }
            FamilySpec::Fourier { c0, harmonics } => {
                let c0 = matrix_from_rows_spec(c0)?;
                let harmonics = harmonics
                    .iter()
                    .map(matrix_from_rows_spec)
                    .collect::<Result<Vec<_>>>()?;
                Self::from_fourier(c0, harmonics)?
            }
            FamilySpec::RandomGapped {
                n,
                harmonics,
                seed,
                target_gap,
                n_minus,
                coupling,
            } => random_gapped(*n, *harmonics, *seed, *target_gap, n_minus.unwrap_or(n / 2), *coupling)?,
        };
        fam.spec = Some(spec.clone());
        Ok(fam)
    }

    pub fn from_fourier(c0: CMatrix, harmonics: Vec<CMatrix>) -> Result<Self> {
        let n = c0.nrows();
        if n == 0 || c0.ncols() != n {
            return Err(Error::BadSpec("C_0 must be square and non-empty".into()));
        }
        if harmonics.iter().any(|c| c.nrows() != n || c.ncols() != n) {
            return Err(Error::BadSpec("harmonic dimensions differ from C_0".into()));
        }
        if hermiticity_defect(&c0) > 1e-12 * c0.norm().max(1.0) {
            return Err(Error::BadSpec("C_0 must be Hermitian".into()));
        }
        Ok(PeriodicHamiltonian {
            dim: n,
            spec: None,
            repr: Repr::Fourier {
                c0: (&c0 + c0.adjoint()).scale(0.5),
                harmonics,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> Option<&FamilySpec> {
        self.spec.as_ref()
    }

    pub fn label(&self) -> String {
        match (&self.spec, &self.repr) {
            (Some(spec), _) => spec.label(),
            (None, Repr::Exterior { base, basis }) => {
                format!("exterior^{}({})", basis.degree(), base.label())
            }
            (None, Repr::Fourier { harmonics, .. }) => {
                format!("fourier(N={}, K={})", self.dim, harmonics.len())
            }
        }
    }

    /// `H(t)`. The argument is reduced modulo 2π first, so `H(2π) == H(0)`
    /// bit for bit.
    pub fn eval(&self, t: f64) -> CMatrix {
        match &self.repr {
            Repr::Fourier { c0, harmonics } => {
                let t = t.rem_euclid(TAU);
                let mut h = c0.clone();
                for (k, ck) in harmonics.iter().enumerate() {
                    let phase = Complex64::from_polar(1.0, (k + 1) as f64 * t);
                    let term = ck * phase;
                    h += &term + term.adjoint();
                }
                h
            }
            Repr::Exterior { base, basis } => basis.induced(&base.eval(t)),
        }
    }

    /// `dH/dt`, term by term.
    pub fn eval_derivative(&self, t: f64) -> CMatrix {
        match &self.repr {
            Repr::Fourier { c0, harmonics } => {
                let t = t.rem_euclid(TAU);
                let mut d = CMatrix::zeros(c0.nrows(), c0.ncols());
                for (k, ck) in harmonics.iter().enumerate() {
                    let kk = (k + 1) as f64;
                    let phase = Complex64::from_polar(1.0, kk * t) * c64(0.0, kk);
                    let term = ck * phase;
                    d += &term + term.adjoint();
                }
                d
            }
            Repr::Exterior { base, basis } => basis.induced(&base.eval_derivative(t)),
        }
    }

    /// The same loop traversed backwards, `t ↦ H(−t)`.
    pub fn reversed(&self) -> Self {
        let repr = match &self.repr {
            Repr::Fourier { c0, harmonics } => Repr::Fourier {
                c0: c0.clone(),
                harmonics: harmonics.iter().map(|c| c.adjoint()).collect(),
            },
            Repr::Exterior { base, basis } => Repr::Exterior {
                base: Box::new(base.reversed()),
                basis: basis.clone(),
            },
        };
        PeriodicHamiltonian {
            dim: self.dim,
            spec: None,
            repr,
        }
    }

    /// The family `H_k(t)` induced on Λ^k C^N.
    pub fn exterior_power(&self, k: usize) -> Result<Self> {
        let basis = ExteriorBasis::new(self.dim, k)?;
        Ok(PeriodicHamiltonian {
            dim: basis.dim(),
            spec: None,
            repr: Repr::Exterior {
                base: Box::new(self.clone()),
                basis,
            },
        })
    }

    /// Scales the family, `H ↦ factor · H`.
    pub fn scaled(&self, factor: f64) -> Self {
        let repr = match &self.repr {
            Repr::Fourier { c0, harmonics } => Repr::Fourier {
                c0: c0.scale(factor),
                harmonics: harmonics.iter().map(|c| c.scale(factor)).collect(),
            },
            Repr::Exterior { base, basis } => Repr::Exterior {
                base: Box::new(base.scaled(factor)),
                basis: basis.clone(),
            },
        };
        PeriodicHamiltonian {
            dim: self.dim,
            spec: None,
            repr,
        }
    }

    /// A bound on `sup_t ‖H(t)‖`.
    pub fn norm_bound(&self) -> f64 {
        match &self.repr {
            Repr::Fourier { c0, harmonics } => {
                operator_norm(c0) + 2.0 * harmonics.iter().map(operator_norm).sum::<f64>()
            }
            Repr::Exterior { base, basis } => basis.degree() as f64 * base.norm_bound(),
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re, im)
    })
}

const RANDOM_ATTEMPTS: usize = 200;

fn random_gapped(
    n: usize,
    k_max: usize,
    seed: u64,
    target_gap: f64,
    n_minus: usize,
    coupling: f64,
) -> Result<PeriodicHamiltonian> {
    if n == 0 || n_minus > n {
        return Err(Error::BadSpec(format!("need 0 <= n_minus <= n, n > 0 (n={n}, n_minus={n_minus})")));
    }
    if !(target_gap > 0.0) || !coupling.is_finite() || coupling < 0.0 {
        return Err(Error::BadSpec("target_gap must be positive and coupling non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_ATTEMPTS {
        let v = gaussian_matrix(&mut rng, n).qr().q();
        let energies: Vec<Complex64> = (0..n)
            .map(|i| {
                let mag: f64 = rng.random_range(1.0..2.0);
                real(if i < n_minus { -mag } else { mag })
            })
            .collect();
        let c0 = &v * CMatrix::from_diagonal(&DVector::from_vec(energies)) * v.adjoint();
        let harmonics: Vec<CMatrix> = (1..=k_max)
            .map(|k| {
                let g = gaussian_matrix(&mut rng, n);
                let norm = operator_norm(&g);
                g.scale(coupling * 0.5f64.powi(k as i32) / norm)
            })
            .collect();
        let fam = PeriodicHamiltonian::from_fourier(c0, harmonics)?;
        let level = LevelCurve::default();
        let tol = Tolerances {
            gap: target_gap,
            ..Tolerances::default()
        };
        if gap_margin_with(&fam, &level, DEFAULT_GAP_GRID, &tol).is_ok() {
            return Ok(fam);
        }
    }
    Err(Error::GapNotAchievable {
        target: target_gap,
        attempts: RANDOM_ATTEMPTS,
    })
}

/// The level `λ(t)` separating F⁻ from F⁺.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevelCurve {
    Constant {
        value: f64,
    },
    /// `offset + Σ_k (cos[k-1] cos kt + sin[k-1] sin kt)`.
    Trigonometric {
        offset: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl Default for LevelCurve {
    fn default() -> Self {
        LevelCurve::Constant { value: 0.0 }
    }
}

impl LevelCurve {
    pub fn constant(value: f64) -> Self {
        LevelCurve::Constant { value }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            LevelCurve::Constant { value } => *value,
            LevelCurve::Trigonometric { offset, cos, sin } => {
                let t = t.rem_euclid(TAU);
                let c: f64 = cos
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * t).cos())
                    .sum();
                let s: f64 = sin
                    .iter()
                    .enumerate()
                    .map(|(k, b)| b * ((k + 1) as f64 * t).sin())
                    .sum();
                offset + c + s
            }
        }
    }
}

pub const DEFAULT_GAP_GRID: usize = 256;

/// Minimum over `grid` equally spaced times of the distance from `λ(t)` to
/// the spectrum of `H(t)`.
pub fn gap_margin(fam: &PeriodicHamiltonian, level: &LevelCurve, grid: usize) -> Result<f64> {
    gap_margin_with(fam, level, grid, &Tolerances::default())
}

pub fn gap_margin_with(
    fam: &PeriodicHamiltonian,
    level: &LevelCurve,
    grid: usize,
    tol: &Tolerances,
) -> Result<f64> {
    gap_margin_shifted(fam, level, grid, 0.0, tol)
}

/// As [`gap_margin_with`], on the grid translated by `offset`.
pub fn gap_margin_shifted(
    fam: &PeriodicHamiltonian,
    level: &LevelCurve,
    grid: usize,
    offset: f64,
    tol: &Tolerances,
) -> Result<f64> {
    if grid < 16 {
        return Err(Error::InvalidArgument(format!("gap grid must have >= 16 points, got {grid}")));
    }
    let mut worst = (f64::INFINITY, 0.0);
    for j in 0..grid {
        let t = offset + TAU * j as f64 / grid as f64;
        let lambda = level.at(t);
        let eig = herm_eig(&fam.eval(t))?;
        let margin = eig
            .eigenvalues
            .iter()
            .map(|e| (e - lambda).abs())
            .fold(f64::INFINITY, f64::min);
        if margin < worst.0 {
            worst = (margin, t);
        }
    }
    if worst.0 <= tol.gap {
        return Err(Error::GapViolation {
            t: worst.1,
            margin: worst.0,
        });
    }
    Ok(worst.0)
}
