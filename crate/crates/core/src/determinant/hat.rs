use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::monodromy::{
    check_stability, det_pm_bfk, rk4_left, rk4_right_inverse, simpson_trace, Blockwise, DetPair,
    Monodromy, OdeOptions,
};
use super::operator::{FirstOrderOperator, OperatorLabel};
use crate::error::{Error, Result};
use crate::hamiltonians::PeriodicHamiltonian;
use crate::linalg::{herm_eig, identity, spectral_radius, CMatrix, Tolerances, I};
use crate::transport::GaugePath;

/// The operator conjugated into the periodic gauge and written in the
/// F_0⁺ ⊕ F_0⁻ frame, sampled on the gauge grid.
#[derive(Clone, Debug)]
pub struct HatBlocks {
    pub n_plus: usize,
    pub n_minus: usize,
    /// `[F_0⁺ | F_0⁻]`.
    pub frame: CMatrix,
    /// Gauge-grid steps; the monodromy grid has half as many.
    pub grid_steps: usize,
    /// `H̃(t_j)` in frame coordinates.
    pub h_tilde: Vec<CMatrix>,
    /// `𝒰⁻¹𝒰̇ (t_j)` in frame coordinates.
    pub connection: Vec<CMatrix>,
    /// `R(t_j)`: `i` times the off-diagonal blocks of the connection.
    pub coupling: Vec<CMatrix>,
    /// Largest off-diagonal block of `H̃`.
    pub leakage: f64,
    /// `min_t min(spec H̃⁺, −spec H̃⁻)`.
    pub gap: f64,
    pub norm_h: f64,
    pub tol: Tolerances,
}

fn off_diagonal(m: &CMatrix, np: usize) -> CMatrix {
    let n = m.nrows();
    let mut out = m.clone();
    out.view_mut((0, 0), (np, np)).fill(Complex64::new(0.0, 0.0));
    out.view_mut((np, np), (n - np, n - np))
        .fill(Complex64::new(0.0, 0.0));
    out
}

fn block_diagonal(m: &CMatrix, np: usize) -> CMatrix {
    m - off_diagonal(m, np)
}

pub fn build_hat_blocks(family: &PeriodicHamiltonian, gauge: &GaugePath) -> Result<HatBlocks> {
    let periodic = gauge.periodic()?;
    let steps = gauge.steps();
    if steps % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "gauge grid needs an even number of steps, got {steps}"
        )));
    }
    if family.dim() != gauge.dim() {
        return Err(Error::InvalidArgument("family and gauge dimensions differ".into()));
    }
    let split0 = &gauge.split0;
    let (np, nm) = (split0.n_plus, split0.n_minus);
    let w = split0.adapted_basis();

    struct Sample {
        h: CMatrix,
        k: CMatrix,
        leak: f64,
        gap: f64,
        norm: f64,
    }
    let samples: Vec<Sample> = gauge
        .grid
        .par_iter()
        .zip(periodic.gauge.par_iter().zip(periodic.connection.par_iter()))
        .map(|(&t, (calu, conn))| {
            let rot = calu * &w;
            let h = rot.adjoint() * family.eval(t) * &rot;
            let k = w.adjoint() * conn * &w;
            let leak = off_diagonal(&h, np).norm() / 2f64.sqrt();
            let hp = herm_eig(&h.view((0, 0), (np, np)).into_owned())?;
            let hm = herm_eig(&h.view((np, np), (nm, nm)).into_owned())?;
            let above = hp.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let below = hm.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let all = herm_eig(&h)?;
            let norm = all
                .eigenvalues
                .iter()
                .map(|e| e.abs())
                .fold(0.0, f64::max);
            Ok(Sample {
                h,
                k,
                leak,
                gap: above.min(-below),
                norm,
            })
        })
        .collect::<Result<_>>()?;

    let norm_h = samples.iter().map(|s| s.norm).fold(0.0, f64::max);
    let leakage = samples.iter().map(|s| s.leak).fold(0.0, f64::max);
    let limit = gauge.tol.block_leakage * norm_h.max(f64::MIN_POSITIVE);
    if leakage > limit {
        return Err(Error::BlockLeakage { leakage, limit });
    }
    let gap = samples.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min);
    let mut h_tilde = Vec::with_capacity(samples.len());
    let mut connection = Vec::with_capacity(samples.len());
    let mut coupling = Vec::with_capacity(samples.len());
    for s in samples {
        coupling.push(off_diagonal(&s.k, np) * I);
        h_tilde.push(s.h);
        connection.push(s.k);
    }
    Ok(HatBlocks {
        n_plus: np,
        n_minus: nm,
        frame: w,
        grid_steps: steps,
        h_tilde,
        connection,
        coupling,
        leakage,
        gap,
        norm_h,
        tol: gauge.tol,
    })
}

impl HatBlocks {
    pub fn dim(&self) -> usize {
        self.n_plus + self.n_minus
    }

    pub fn monodromy_steps(&self) -> usize {
        self.grid_steps / 2
    }

    /// Generators `M± = −(m H̃± + K±)` of the two diagonal blocks.
    pub fn block_generators(&self, m: f64) -> (Vec<CMatrix>, Vec<CMatrix>) {
        let (np, nm) = (self.n_plus, self.n_minus);
        self.h_tilde
            .par_iter()
            .zip(self.connection.par_iter())
            .map(|(h, k)| {
                let g = -(h * Complex64::from(m) + k);
                (
                    g.view((0, 0), (np, np)).into_owned(),
                    g.view((np, np), (nm, nm)).into_owned(),
                )
            })
            .unzip()
    }

    /// The two diagonal-block operators of `D̂_m`, `A± = i M±`.
    pub fn block_operators(&self, m: f64) -> Result<(FirstOrderOperator, FirstOrderOperator)> {
        let (gp, gm) = self.block_generators(m);
        let to_op = |g: Vec<CMatrix>, dim: usize, unstable: usize| {
            let a = g.into_iter().map(|x| x * I).collect();
            FirstOrderOperator::sampled(dim, a, OperatorLabel::DHat { m })
                .map(|op| op.with_unstable_dim(unstable))
        };
        Ok((
            to_op(gp, self.n_plus, 0)?,
            to_op(gm, self.n_minus, self.n_minus)?,
        ))
    }

    /// `D̃_{m,s} = D̂_m − sR` on C^N, in frame coordinates; `s = 0` is the
    /// block operator `D̂_m` and `s = 1` is `D_m` in the periodic gauge.
    pub fn deformed_operator(&self, m: f64, s: f64) -> Result<FirstOrderOperator> {
        let np = self.n_plus;
        let samples = self
            .h_tilde
            .par_iter()
            .zip(self.connection.par_iter().zip(self.coupling.par_iter()))
            .map(|(h, (k, r))| {
                let a_hat = block_diagonal(&(h * Complex64::new(0.0, -m) - k * I), np);
                a_hat - r * Complex64::from(s)
            })
            .collect();
        let label = if s == 0.0 {
            OperatorLabel::DHat { m }
        } else {
            OperatorLabel::DTilde { m, s }
        };
        Ok(FirstOrderOperator::sampled(self.dim(), samples, label)?.with_unstable_dim(self.n_minus))
    }
}

struct HatIntegration {
    t_plus: CMatrix,
    t_minus_inv: CMatrix,
    logdet_t_minus: Complex64,
    logdet_t_plus: Complex64,
    logdet_t: Complex64,
    checkpoints: Vec<(f64, CMatrix, CMatrix)>,
}

/// Integrates `T⁺' = M⁺T⁺` and `S' = −S M⁻` (S = (T⁻)⁻¹), both decaying.
fn integrate_blocks(
    blocks: &HatBlocks,
    m: f64,
    opts: &OdeOptions,
    checkpoints: &[usize],
) -> Result<HatIntegration> {
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(format!("m must be positive, got {m}")));
    }
    let steps = blocks.monodromy_steps();
    let h = TAU / steps as f64;
    let (gp, gm) = blocks.block_generators(m);
    check_stability(&gp, h, opts)?;
    check_stability(&gm, h, opts)?;
    let mut tp = identity(blocks.n_plus);
    let mut s = identity(blocks.n_minus);
    let mut marks = Vec::new();
    let mut next = checkpoints.iter().peekable();
    while next.peek() == Some(&&0) {
        marks.push((0.0, tp.clone(), s.clone()));
        next.next();
    }
    for j in 0..steps {
        tp = rk4_left([&gp[2 * j], &gp[2 * j + 1], &gp[2 * j + 2]], &tp, h);
        s = rk4_right_inverse([&gm[2 * j], &gm[2 * j + 1], &gm[2 * j + 2]], &s, h);
        while next.peek() == Some(&&(j + 1)) {
            marks.push(((j + 1) as f64 * h, tp.clone(), s.clone()));
            next.next();
        }
    }
    let logdet_t_minus = simpson_trace(&gm, h);
    let logdet_t_plus = simpson_trace(&gp, h);
    Ok(HatIntegration {
        t_plus: tp,
        t_minus_inv: s,
        logdet_t_minus,
        logdet_t_plus,
        logdet_t: logdet_t_plus + logdet_t_minus,
        checkpoints: marks,
    })
}

/// Monodromy of `D̂_m` in blockwise form.
pub fn monodromy_hat(blocks: &HatBlocks, m: f64, opts: &OdeOptions) -> Result<Monodromy> {
    let run = integrate_blocks(blocks, m, opts, &[])?;
    Ok(Monodromy {
        dim: blocks.dim(),
        steps: blocks.monodromy_steps(),
        t2pi: None,
        logdet_t: run.logdet_t,
        blockwise: Some(Blockwise {
            t_plus: run.t_plus,
            t_minus_inv: run.t_minus_inv,
            logdet_t_minus: run.logdet_t_minus,
            logdet_t_plus: run.logdet_t_plus,
            periods: 1,
            subspace_residual: 0.0,
        }),
        tol: opts.tol,
    })
}

/// `log det± D̂_m` without forming the growing block.
pub fn det_phase_hat(blocks: &HatBlocks, m: f64) -> Result<DetPair> {
    det_phase_hat_with(blocks, m, &OdeOptions {
        tol: blocks.tol,
        ..Default::default()
    })
}

pub fn det_phase_hat_with(blocks: &HatBlocks, m: f64, opts: &OdeOptions) -> Result<DetPair> {
    if !(blocks.gap > 0.0) {
        return Err(Error::GapViolation {
            t: 0.0,
            margin: blocks.gap,
        });
    }
    let mon = monodromy_hat(blocks, m, opts)?;
    let op = blocks.deformed_operator(m, 0.0)?;
    let pair = det_pm_bfk(&mon, &op)?;
    let finite = [pair.plus.re, pair.plus.im, pair.minus.im]
        .iter()
        .all(|x| x.is_finite());
    if !finite {
        return Err(Error::OverflowRisk(format!("non-finite determinant at m = {m}")));
    }
    Ok(pair)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub t: f64,
    /// Spectral radius of `T⁺(t)`.
    pub rho_plus: f64,
    /// Spectral radius of `T⁻(t)⁻¹`.
    pub rho_minus_inv: f64,
    /// `e^{−cmt/2}`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralRadiusReport {
    pub m: f64,
    pub gap: f64,
    pub rows: Vec<RadiusRow>,
}

/// Checks `ρ(T⁺(t)) ≤ e^{−cmt/2}` and `ρ(T⁻(t)⁻¹) ≤ e^{−cmt/2}` at `points`
/// equally spaced times in `[0, 2π)`.
pub fn spectral_radius_check(
    blocks: &HatBlocks,
    m: f64,
    points: usize,
) -> Result<SpectralRadiusReport> {
    let steps = blocks.monodromy_steps();
    if points == 0 || steps % points != 0 {
        return Err(Error::InvalidArgument(format!(
            "{points} check points do not divide {steps} steps"
        )));
    }
    let c = blocks.gap;
    if !(c > 0.0) {
        return Err(Error::GapViolation { t: 0.0, margin: c });
    }
    let marks: Vec<usize> = (0..points).map(|k| k * steps / points).collect();
    let opts = OdeOptions {
        tol: blocks.tol,
        ..Default::default()
    };
    let run = integrate_blocks(blocks, m, &opts, &marks)?;
    let mut rows = Vec::with_capacity(points);
    for (t, tp, s) in run.checkpoints {
        let bound = (-c * m * t / 2.0).exp();
        let row = RadiusRow {
            t,
            rho_plus: radius(&tp)?,
            rho_minus_inv: radius(&s)?,
            bound,
        };
        let slack = bound * 1e-9 + 1e-14;
        if row.rho_plus > bound + slack || row.rho_minus_inv > bound + slack {
            return Err(Error::BoundViolation {
                t,
                m,
                detail: format!(
                    "ρ(T⁺) = {:.3e}, ρ((T⁻)⁻¹) = {:.3e}, bound {bound:.3e}",
                    row.rho_plus, row.rho_minus_inv
                ),
            });
        }
        rows.push(row);
    }
    Ok(SpectralRadiusReport { m, gap: c, rows })
}

fn radius(m: &CMatrix) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    spectral_radius(m)
}
