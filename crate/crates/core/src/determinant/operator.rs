use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{LevelCurve, PeriodicHamiltonian};
use crate::linalg::{CMatrix, I};
use crate::spectral::ProjectorField;

pub type CoefficientFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

#[derive(Clone)]
pub enum Coefficient {
    Closed(CoefficientFn),
    /// Values at `t = jπ/n`, `j = 0..=2n`: the nodes and midpoints of an
    /// `n`-step grid.
    Sampled(Arc<Vec<CMatrix>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorLabel {
    Generic,
    /// `D_m = −i d/dt − i m H(t)`.
    Dm { m: f64 },
    /// `D_m* = −i d/dt + i m H(t)`.
    DmConjugate { m: f64 },
    DHat { m: f64 },
    DTilde { m: f64, s: f64 },
}

/// `𝒟 = −i d/dt + A(t)` on 2π-periodic C^N-valued functions.
#[derive(Clone)]
pub struct FirstOrderOperator {
    pub dim: usize,
    pub coefficient: Coefficient,
    pub label: OperatorLabel,
    /// Number of growing directions of the monodromy, when known.
    pub unstable_dim: Option<usize>,
}

impl fmt::Debug for FirstOrderOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.coefficient {
            Coefficient::Closed(_) => "closed".to_string(),
            Coefficient::Sampled(s) => format!("sampled({} steps)", (s.len() - 1) / 2),
        };
        f.debug_struct("FirstOrderOperator")
            .field("dim", &self.dim)
            .field("coefficient", &kind)
            .field("label", &self.label)
            .field("unstable_dim", &self.unstable_dim)
            .finish()
    }
}

impl FirstOrderOperator {
    pub fn new(
        dim: usize,
        coefficient: impl Fn(f64) -> CMatrix + Send + Sync + 'static,
        label: OperatorLabel,
    ) -> Self {
        FirstOrderOperator {
            dim,
            coefficient: Coefficient::Closed(Arc::new(coefficient)),
            label,
            unstable_dim: None,
        }
    }

    pub fn constant(a: CMatrix) -> Self {
        let dim = a.nrows();
        FirstOrderOperator::new(dim, move |_| a.clone(), OperatorLabel::Generic)
    }

    pub fn sampled(dim: usize, samples: Vec<CMatrix>, label: OperatorLabel) -> Result<Self> {
        if samples.len() < 3 || samples.len() % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "sampled coefficient needs 2n+1 values, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|a| a.shape() != (dim, dim)) {
            return Err(Error::InvalidArgument("sampled coefficient has wrong shape".into()));
        }
        Ok(FirstOrderOperator {
            dim,
            coefficient: Coefficient::Sampled(Arc::new(samples)),
            label,
            unstable_dim: None,
        })
    }

    /// `D_m`, with `A(t) = −i m H(t)`; the unstable dimension is `N⁻` for the
    /// level 0.
    pub fn d_m(family: &PeriodicHamiltonian, m: f64) -> Result<Self> {
        Self::adiabatic(family, m, -1.0)
    }

    /// `D_m*`, with `A(t) = +i m H(t)`; the unstable dimension is `N⁺`.
    pub fn d_m_conjugate(family: &PeriodicHamiltonian, m: f64) -> Result<Self> {
        Self::adiabatic(family, m, 1.0)
    }

    fn adiabatic(family: &PeriodicHamiltonian, m: f64, sign: f64) -> Result<Self> {
        let split = ProjectorField::below(family, &LevelCurve::default()).split(0.0)?;
        let fam = family.clone();
        let scale = I * (sign * m);
        let (label, unstable) = if sign < 0.0 {
            (OperatorLabel::Dm { m }, split.n_minus)
        } else {
            (OperatorLabel::DmConjugate { m }, split.n_plus)
        };
        let op = FirstOrderOperator::new(fam.dim(), move |t| fam.eval(t) * scale, label);
        Ok(op.with_unstable_dim(unstable))
    }

    pub fn with_unstable_dim(mut self, k: usize) -> Self {
        self.unstable_dim = Some(k);
        self
    }

    /// Step count fixed by a sampled coefficient.
    pub fn native_steps(&self) -> Option<usize> {
        match &self.coefficient {
            Coefficient::Closed(_) => None,
            Coefficient::Sampled(s) => Some((s.len() - 1) / 2),
        }
    }

    pub fn eval(&self, t: f64) -> Result<CMatrix> {
        match &self.coefficient {
            Coefficient::Closed(f) => Ok(f(t)),
            Coefficient::Sampled(s) => {
                let n = (s.len() - 1) / 2;
                let x = t.rem_euclid(2.0 * PI) * n as f64 / PI;
                let j = x.round();
                if (x - j).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "sampled coefficient has no value at t = {t}"
                    )));
                }
                Ok(s[j as usize].clone())
            }
        }
    }

    /// `A` at `t = jπ/steps`, `j = 0..=2·steps`.
    pub fn half_grid(&self, steps: usize) -> Result<Vec<CMatrix>> {
        match &self.coefficient {
            Coefficient::Closed(f) => Ok((0..=2 * steps)
                .into_par_iter()
                .map(|j| f(PI * j as f64 / steps as f64))
                .collect()),
            Coefficient::Sampled(s) => {
                let n = (s.len() - 1) / 2;
                if steps == 0 || n % steps != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "sampled coefficient on {n} steps cannot be used with {steps} steps"
                    )));
                }
                Ok(s.iter().step_by(n / steps).cloned().collect())
            }
        }
    }

    /// The generator `−iA` of `T' = −iAT` on the half grid.
    pub fn generator_half_grid(&self, steps: usize) -> Result<Vec<CMatrix>> {
        Ok(self
            .half_grid(steps)?
            .into_par_iter()
            .map(|a| a * (-I))
            .collect())
    }
}
