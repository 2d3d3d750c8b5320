use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operator::FirstOrderOperator;
use crate::error::{Error, Result};
use crate::linalg::{
    herm_eig, hermitian_part, identity, log_det, operator_norm, reduce_log,
    smallest_singular_value, CMatrix, Tolerances,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeOptions {
    /// RK4 steps per period; `None` picks the operator's native grid or
    /// [`DEFAULT_STEPS`].
    pub steps: Option<usize>,
    /// Largest admissible `h·‖A‖`.
    pub stability_limit: f64,
    pub overflow_limit: f64,
    pub max_periods: usize,
    pub subspace_tol: f64,
    pub tol: Tolerances,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            steps: None,
            stability_limit: 2.5,
            overflow_limit: 1e250,
            max_periods: 200,
            subspace_tol: 1e-10,
            tol: Tolerances::default(),
        }
    }
}

impl OdeOptions {
    pub fn with_steps(steps: usize) -> Self {
        OdeOptions {
            steps: Some(steps),
            ..Default::default()
        }
    }
}

pub const DEFAULT_STEPS: usize = 2048;

/// `max(2048, 256·m)`.
pub fn default_steps(m: f64) -> usize {
    DEFAULT_STEPS.max((256.0 * m).ceil() as usize)
}

/// `T(2π)` split along an invariant decomposition into a decaying part and
/// a growing part, the latter stored through its inverse.
#[derive(Clone, Debug)]
pub struct Blockwise {
    pub t_plus: CMatrix,
    pub t_minus_inv: CMatrix,
    pub logdet_t_minus: Complex64,
    pub logdet_t_plus: Complex64,
    /// Periods iterated until the invariant subspaces settled.
    pub periods: usize,
    pub subspace_residual: f64,
}

impl Blockwise {
    pub fn unstable_dim(&self) -> usize {
        self.t_minus_inv.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct Monodromy {
    pub dim: usize,
    pub steps: usize,
    /// Dense `T(2π)`, absent on the blockwise route.
    pub t2pi: Option<CMatrix>,
    /// `∫ Tr(−iA) dt`, by Simpson's rule on the half grid.
    pub logdet_t: Complex64,
    pub blockwise: Option<Blockwise>,
    pub tol: Tolerances,
}

impl Monodromy {
    /// `|e^{logdetT} − det T(2π)| / |det T(2π)|` for the dense route.
    pub fn determinant_residual(&self) -> Option<f64> {
        let t = self.t2pi.as_ref()?;
        let det = t.determinant();
        Some((self.logdet_t.exp() - det).norm() / det.norm())
    }

    /// Mismatch between `log det T⁺ + log det T⁻` and `∫ Tr(−iA)` on the
    /// blockwise route: relative in the real part, circular in the phase.
    pub fn blockwise_residual(&self) -> Option<f64> {
        let b = self.blockwise.as_ref()?;
        let sum = b.logdet_t_plus + b.logdet_t_minus;
        let re = (sum.re - self.logdet_t.re).abs() / self.logdet_t.re.abs().max(1.0);
        let im = crate::linalg::circular_distance(sum.im, self.logdet_t.im);
        Some(re.max(im))
    }
}

pub(crate) fn resolve_steps(op: &FirstOrderOperator, opts: &OdeOptions) -> Result<usize> {
    let steps = match (op.native_steps(), opts.steps) {
        (Some(n), Some(s)) if n % s != 0 => {
            return Err(Error::InvalidArgument(format!(
                "operator is sampled on {n} steps; {s} steps requested"
            )))
        }
        (_, Some(s)) => s,
        (Some(n), None) => n,
        (None, None) => DEFAULT_STEPS,
    };
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one step is required".into()));
    }
    Ok(steps)
}

pub(crate) fn check_stability(g: &[CMatrix], h: f64, opts: &OdeOptions) -> Result<()> {
    let worst = g
        .par_iter()
        .map(operator_norm)
        .reduce(|| 0.0, f64::max);
    if h * worst > opts.stability_limit {
        return Err(Error::OdeToleranceFailure(format!(
            "h·‖A‖ = {:.3} exceeds {} with {} steps; increase steps",
            h * worst,
            opts.stability_limit,
            (TAU / h).round()
        )));
    }
    Ok(())
}

/// One RK4 step of `X' = G X` from samples at the start, middle and end.
pub(crate) fn rk4_left(g: [&CMatrix; 3], x: &CMatrix, h: f64) -> CMatrix {
    let half = Complex64::from(0.5 * h);
    let k1 = g[0] * x;
    let k2 = g[1] * (x + &k1 * half);
    let k3 = g[1] * (x + &k2 * half);
    let k4 = g[2] * (x + &k3 * Complex64::from(h));
    x + (k1 + (k2 + k3) * Complex64::from(2.0) + k4) * Complex64::from(h / 6.0)
}

/// One RK4 step of `X' = −X G`.
pub(crate) fn rk4_right_inverse(g: [&CMatrix; 3], x: &CMatrix, h: f64) -> CMatrix {
    let half = Complex64::from(-0.5 * h);
    let k1 = x * g[0];
    let k2 = (x + &k1 * half) * g[1];
    let k3 = (x + &k2 * half) * g[1];
    let k4 = (x + &k3 * Complex64::from(-h)) * g[2];
    x - (k1 + (k2 + k3) * Complex64::from(2.0) + k4) * Complex64::from(h / 6.0)
}

/// `∫ Tr G` over the period by composite Simpson on the half grid.
pub(crate) fn simpson_trace(g: &[CMatrix], h: f64) -> Complex64 {
    let n = (g.len() - 1) / 2;
    (0..n)
        .map(|j| g[2 * j].trace() + g[2 * j + 1].trace() * 4.0 + g[2 * j + 2].trace())
        .sum::<Complex64>()
        * (h / 6.0)
}

/// `T(2π)` by RK4 on `T' = −iA T`, `T(0) = Id`.
pub fn monodromy(op: &FirstOrderOperator, opts: &OdeOptions) -> Result<Monodromy> {
    let steps = resolve_steps(op, opts)?;
    let h = TAU / steps as f64;
    let g = op.generator_half_grid(steps)?;
    check_stability(&g, h, opts)?;
    let mut t = identity(op.dim);
    for j in 0..steps {
        t = rk4_left([&g[2 * j], &g[2 * j + 1], &g[2 * j + 2]], &t, h);
        let norm = t.norm();
        if !(norm <= opts.overflow_limit) {
            return Err(Error::OverflowRisk(format!(
                "‖T(t)‖ reached {norm:.3e} at t = {:.4}; use the blockwise route",
                (j + 1) as f64 * h
            )));
        }
    }
    Ok(Monodromy {
        dim: op.dim,
        steps,
        t2pi: Some(t),
        logdet_t: simpson_trace(&g, h),
        blockwise: None,
        tol: opts.tol,
    })
}

/// Thin QR with the log of the diagonal of R and R⁻¹.
fn qr_step(y: CMatrix) -> Result<(CMatrix, Complex64, CMatrix)> {
    let qr = y.qr();
    let q = qr.q();
    let r = qr.r();
    let logdiag = r.diagonal().iter().map(|z| z.ln()).sum::<Complex64>();
    let rinv = r
        .try_inverse()
        .ok_or(Error::SingularInput { ratio: 0.0 })?;
    Ok((q, logdiag, rinv))
}

/// Propagates an orthonormal frame over one period with QR after every
/// step. Returns the final frame, `R_tot⁻¹` and `log det R_tot`.
fn frame_period(
    g: &[CMatrix],
    h: f64,
    frame: &CMatrix,
    backward: bool,
) -> Result<(CMatrix, CMatrix, Complex64)> {
    let n = (g.len() - 1) / 2;
    let k = frame.ncols();
    let mut q = frame.clone();
    let mut rinv_prod = identity(k);
    let mut logdet = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let j = if backward { n - 1 - i } else { i };
        let y = if backward {
            rk4_left([&g[2 * j + 2], &g[2 * j + 1], &g[2 * j]], &q, -h)
        } else {
            rk4_left([&g[2 * j], &g[2 * j + 1], &g[2 * j + 2]], &q, h)
        };
        let (qn, ld, rinv) = qr_step(y)?;
        q = qn;
        logdet += ld;
        rinv_prod *= rinv;
    }
    Ok((q, rinv_prod, logdet))
}

struct Restriction {
    /// Inverse of the restricted period map, in the converged frame.
    inverse: CMatrix,
    logdet: Complex64,
    periods: usize,
    residual: f64,
}

/// Iterates the period map on a k-frame until its span is invariant, then
/// returns the map restricted to that span. `backward` iterates `T(2π)⁻¹`.
fn invariant_restriction(
    g: &[CMatrix],
    h: f64,
    start: CMatrix,
    backward: bool,
    opts: &OdeOptions,
) -> Result<Restriction> {
    let k = start.ncols();
    if k == 0 {
        return Ok(Restriction {
            inverse: CMatrix::zeros(0, 0),
            logdet: Complex64::new(0.0, 0.0),
            periods: 0,
            residual: 0.0,
        });
    }
    let mut q0 = start;
    for period in 1..=opts.max_periods {
        let (qn, rinv, logdet_r) = frame_period(g, h, &q0, backward)?;
        let residual = (&q0 * q0.adjoint() - &qn * qn.adjoint()).norm();
        if residual <= opts.subspace_tol {
            // map = Q0 (C R_tot) in the Q0 frame, C = Q0† Qn
            let c = q0.adjoint() * &qn;
            let c_inv = c
                .clone()
                .try_inverse()
                .ok_or(Error::SingularInput { ratio: 0.0 })?;
            return Ok(Restriction {
                inverse: rinv * c_inv,
                logdet: log_det(&c)? + logdet_r,
                periods: period,
                residual,
            });
        }
        q0 = qn;
    }
    Err(Error::ConvergenceFailure(
        "invariant subspaces of the monodromy did not settle; no exponential dichotomy",
    ))
}

/// `T(2π)` on the invariant splitting into its `k` growing directions and
/// the remaining decaying ones, without ever forming the growing block.
pub fn monodromy_dichotomy(
    op: &FirstOrderOperator,
    unstable_dim: usize,
    opts: &OdeOptions,
) -> Result<Monodromy> {
    let n = op.dim;
    if unstable_dim > n {
        return Err(Error::InvalidArgument(format!(
            "unstable dimension {unstable_dim} exceeds {n}"
        )));
    }
    let steps = resolve_steps(op, opts)?;
    let h = TAU / steps as f64;
    let g = op.generator_half_grid(steps)?;
    check_stability(&g, h, opts)?;

    // start from the most expanding directions of the generator at t = 0
    let eig = herm_eig(&hermitian_part(&g[0]))?;
    let stable_start = eig.eigenvectors.columns(0, n - unstable_dim).into_owned();
    let unstable_start = eig
        .eigenvectors
        .columns(n - unstable_dim, unstable_dim)
        .into_owned();

    let (unstable, stable) = rayon::join(
        || invariant_restriction(&g, h, unstable_start, false, opts),
        || invariant_restriction(&g, h, stable_start, true, opts),
    );
    let (unstable, stable) = (unstable?, stable?);
    // on the stable span the forward map is the inverse of what was iterated
    let t_plus = stable.inverse;
    let logdet_t_plus = -stable.logdet;
    Ok(Monodromy {
        dim: n,
        steps,
        t2pi: None,
        logdet_t: simpson_trace(&g, h),
        blockwise: Some(Blockwise {
            t_plus,
            t_minus_inv: unstable.inverse,
            logdet_t_minus: unstable.logdet,
            logdet_t_plus,
            periods: unstable.periods.max(stable.periods),
            subspace_residual: unstable.residual.max(stable.residual),
        }),
        tol: opts.tol,
    })
}

/// Complex logs of `det₊ 𝒟` and `det₋ 𝒟`, imaginary parts in (−π, π].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetPair {
    pub plus: Complex64,
    pub minus: Complex64,
}

impl DetPair {
    pub fn phase_plus(&self) -> f64 {
        self.plus.im
    }

    pub fn phase_minus(&self) -> f64 {
        self.minus.im
    }
}

fn invertible_factor(id_minus: &CMatrix, scale: f64, tol: &Tolerances) -> Result<Complex64> {
    if id_minus.is_empty() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let sigma = smallest_singular_value(id_minus);
    if sigma < tol.invertibility * scale.max(1.0) {
        return Err(Error::NonInvertibleOperator { sigma });
    }
    log_det(id_minus)
}

/// `log det₊ = log det(Id − T(2π))` and
/// `log det₋ = iπN + i∫Tr A dt + log det(Id − T(2π))`.
pub fn det_pm_bfk(mon: &Monodromy, op: &FirstOrderOperator) -> Result<DetPair> {
    if mon.dim != op.dim {
        return Err(Error::InvalidArgument("monodromy and operator dimensions differ".into()));
    }
    let tol = &mon.tol;
    let log_plus = if let Some(b) = &mon.blockwise {
        // det(Id − T⁻) = (−1)^k det T⁻ det(Id − (T⁻)⁻¹)
        let k = b.unstable_dim();
        let stable = invertible_factor(
            &(identity(b.t_plus.nrows()) - &b.t_plus),
            b.t_plus.norm(),
            tol,
        )?;
        let unstable = invertible_factor(
            &(identity(k) - &b.t_minus_inv),
            b.t_minus_inv.norm(),
            tol,
        )?;
        stable + Complex64::new(0.0, PI * k as f64) + b.logdet_t_minus + unstable
    } else {
        let t = mon.t2pi.as_ref().expect("dense or blockwise monodromy");
        invertible_factor(&(identity(op.dim) - t), t.norm(), tol)?
    };
    if !(log_plus.re.is_finite() && log_plus.im.is_finite()) {
        return Err(Error::OverflowRisk("log det(Id − T(2π)) is not finite".into()));
    }
    // i∫Tr A = −∫Tr(−iA)
    let log_minus = Complex64::new(0.0, PI * op.dim as f64) - mon.logdet_t + log_plus;
    Ok(DetPair {
        plus: reduce_log(log_plus),
        minus: reduce_log(log_minus),
    })
}
