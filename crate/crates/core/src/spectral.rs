//! Spectral projectors onto F_t⁻ (eigenvalues below the level) and their
//! t-derivatives.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{LevelCurve, PeriodicHamiltonian};
use crate::linalg::{herm_eig_with, CMatrix, HermitianEig, Tolerances};

#[derive(Clone, Debug)]
pub struct SpectralSplit {
    pub t: f64,
    /// Orthogonal projector onto F_t⁻.
    pub projector: CMatrix,
    pub n_minus: usize,
    pub n_plus: usize,
    /// Orthonormal columns spanning F_t⁻ (eigenvectors, ascending energy).
    pub frame: CMatrix,
    /// Orthonormal columns spanning F_t⁺.
    pub complement: CMatrix,
    pub eigenvalues: DVector<f64>,
}

impl SpectralSplit {
    fn from_eig(t: f64, eig: HermitianEig, n_minus: usize) -> Self {
        let n = eig.eigenvalues.len();
        let frame = eig.eigenvectors.columns(0, n_minus).into_owned();
        let complement = eig.eigenvectors.columns(n_minus, n - n_minus).into_owned();
        let projector = &frame * frame.adjoint();
        SpectralSplit {
            t,
            projector,
            n_minus,
            n_plus: n - n_minus,
            frame,
            complement,
            eigenvalues: eig.eigenvalues,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_minus + self.n_plus
    }

    /// `[F⁺ | F⁻]`, the unitary adapted to the splitting C^N = F⁺ ⊕ F⁻.
    pub fn adapted_basis(&self) -> CMatrix {
        let n = self.dim();
        let mut w = CMatrix::zeros(n, n);
        w.columns_mut(0, self.n_plus).copy_from(&self.complement);
        w.columns_mut(self.n_plus, self.n_minus).copy_from(&self.frame);
        w
    }

    /// The same split expressed in another orthonormal frame of F⁻.
    pub fn with_frame(&self, frame: CMatrix) -> Self {
        SpectralSplit {
            frame,
            ..self.clone()
        }
    }
}

/// Projector onto the eigenvectors of `h` with eigenvalues below `level`.
pub fn projector_below(h: &CMatrix, level: f64) -> Result<SpectralSplit> {
    projector_below_with(h, level, 0.0, &Tolerances::default())
}

pub fn projector_below_with(
    h: &CMatrix,
    level: f64,
    t: f64,
    tol: &Tolerances,
) -> Result<SpectralSplit> {
    let eig = herm_eig_with(h, tol)?;
    let scale = eig
        .eigenvalues
        .iter()
        .fold(1.0f64, |acc, e| acc.max(e.abs()));
    let margin = eig
        .eigenvalues
        .iter()
        .map(|e| (e - level).abs())
        .fold(f64::INFINITY, f64::min);
    if margin <= tol.level_tie * scale {
        return Err(Error::GapViolation { t, margin });
    }
    let n_minus = eig.eigenvalues.iter().filter(|&&e| e < level).count();
    Ok(SpectralSplit::from_eig(t, eig, n_minus))
}

/// Projector onto the `rank` lowest eigenvectors of `h`; the `rank`-th and
/// `rank+1`-th eigenvalues must be separated.
pub fn projector_lowest(
    h: &CMatrix,
    rank: usize,
    t: f64,
    tol: &Tolerances,
) -> Result<SpectralSplit> {
    let eig = herm_eig_with(h, tol)?;
    let n = eig.eigenvalues.len();
    if rank > n {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} exceeds dimension {n}"
        )));
    }
    if rank > 0 && rank < n {
        let scale = eig
            .eigenvalues
            .iter()
            .fold(1.0f64, |acc, e| acc.max(e.abs()));
        let margin = eig.eigenvalues[rank] - eig.eigenvalues[rank - 1];
        if margin <= tol.level_tie * scale {
            return Err(Error::GapViolation { t, margin });
        }
    }
    Ok(SpectralSplit::from_eig(t, eig, rank))
}

/// How F_t⁻ is selected from the spectrum of H(t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Eigenvalues below the level curve.
    Below(LevelCurve),
    /// A fixed number of lowest eigenvalues.
    Lowest(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DerivativeMethod {
    /// Central difference of projectors with the given step.
    FiniteDifference { step: f64 },
    /// First-order eigenvector perturbation theory.
    Analytic,
}

impl Default for DerivativeMethod {
    fn default() -> Self {
        DerivativeMethod::FiniteDifference { step: 1e-5 }
    }
}

/// A family together with the rule selecting its lower spectral subspace.
#[derive(Clone, Debug)]
pub struct ProjectorField<'a> {
    pub family: &'a PeriodicHamiltonian,
    pub rule: SplitRule,
    pub tol: Tolerances,
}

impl<'a> ProjectorField<'a> {
    pub fn below(family: &'a PeriodicHamiltonian, level: &LevelCurve) -> Self {
        ProjectorField {
            family,
            rule: SplitRule::Below(level.clone()),
            tol: Tolerances::default(),
        }
    }

    pub fn lowest(family: &'a PeriodicHamiltonian, rank: usize) -> Self {
        ProjectorField {
            family,
            rule: SplitRule::Lowest(rank),
            tol: Tolerances::default(),
        }
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn split(&self, t: f64) -> Result<SpectralSplit> {
        let h = self.family.eval(t);
        match &self.rule {
            SplitRule::Below(level) => projector_below_with(&h, level.at(t), t, &self.tol),
            SplitRule::Lowest(rank) => projector_lowest(&h, *rank, t, &self.tol),
        }
    }

    /// `Ṗ_t`, together with the split at `t`.
    pub fn derivative(
        &self,
        t: f64,
        method: DerivativeMethod,
    ) -> Result<(SpectralSplit, CMatrix)> {
        let split = self.split(t)?;
        let dp = match method {
            DerivativeMethod::FiniteDifference { step } => {
                if !(step > 0.0) {
                    return Err(Error::InvalidArgument(
                        "finite-difference step must be positive".into(),
                    ));
                }
                let ahead = self.split(t + step)?;
                let behind = self.split(t - step)?;
                if ahead.n_minus != split.n_minus || behind.n_minus != split.n_minus {
                    return Err(Error::GapViolation { t, margin: 0.0 });
                }
                (ahead.projector - behind.projector).scale(0.5 / step)
            }
            DerivativeMethod::Analytic => {
                analytic_derivative(&split, &self.family.eval_derivative(t))
            }
        };
        Ok((split, dp))
    }
}

/// `Ṗ = Σ_{i below, j above} (v_j v_j† Ḣ v_i v_i† + h.c.) / (E_i − E_j)`.
fn analytic_derivative(split: &SpectralSplit, dh: &CMatrix) -> CMatrix {
    let n = split.dim();
    let k = split.n_minus;
    let coupling = split.complement.adjoint() * dh * &split.frame;
    let weighted = CMatrix::from_fn(n - k, k, |j, i| {
        coupling[(j, i)] / (split.eigenvalues[i] - split.eigenvalues[k + j])
    });
    let half = &split.complement * weighted * split.frame.adjoint();
    &half + half.adjoint()
}

/// `Ṗ_t` for the projector below `level` at time `t`.
pub fn projector_derivative(
    family: &PeriodicHamiltonian,
    level: &LevelCurve,
    t: f64,
    method: DerivativeMethod,
) -> Result<CMatrix> {
    Ok(ProjectorField::below(family, level).derivative(t, method)?.1)
}
