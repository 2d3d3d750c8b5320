use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hat::{build_hat_blocks, det_phase_hat, HatBlocks};
use super::monodromy::{
    default_steps, det_pm_bfk, monodromy, monodromy_dichotomy, DetPair, OdeOptions,
};
use super::operator::FirstOrderOperator;
use crate::error::{Error, Result};
use crate::hamiltonians::{gap_margin_with, LevelCurve, PeriodicHamiltonian, DEFAULT_GAP_GRID};
use crate::linalg::{circular_distance, wrap_angle, Tolerances};
use crate::spectral::{DerivativeMethod, ProjectorField};
use crate::transport::{
    berry_phase_exterior, berry_phase_holonomy, berry_phase_trace, gauge_path,
    wilson_loop_oracle, BerryPhase, GaugePath, KatoOptions, Method, DEFAULT_WILSON_POINTS,
};

/// How the full (coupled) monodromy is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// RK4 on the dense N×N monodromy; loses `~2πm·c/ln 10` digits.
    Dense,
    /// Invariant-subspace splitting by QR iteration.
    #[default]
    Dichotomy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouteOptions {
    pub route: Route,
    /// Largest m accepted on the dense route.
    pub dense_m_cap: f64,
    pub ode: OdeOptions,
}

impl Default for RouteOptions {
    fn default() -> Self {
        RouteOptions {
            route: Route::Dichotomy,
            dense_m_cap: 20.0,
            ode: OdeOptions::default(),
        }
    }
}

/// `log det± 𝒟` along the chosen route.
pub fn det_pm(op: &FirstOrderOperator, m: f64, opts: &RouteOptions) -> Result<DetPair> {
    let mon = match opts.route {
        Route::Dense => {
            if m > opts.dense_m_cap {
                return Err(Error::OverflowRisk(format!(
                    "m = {m} exceeds the dense-route cap {}",
                    opts.dense_m_cap
                )));
            }
            monodromy(op, &opts.ode)?
        }
        Route::Dichotomy => {
            let k = op.unstable_dim.ok_or_else(|| {
                Error::InvalidArgument("operator has no unstable dimension".into())
            })?;
            monodromy_dichotomy(op, k, &opts.ode)?
        }
    };
    det_pm_bfk(&mon, op)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremOptions {
    /// Kato steps of the gauge grid; defaults to `2·max(2048, 256·m_max)`.
    pub gauge_steps: Option<usize>,
    pub derivative: DerivativeMethod,
    pub gamma_method: Method,
    pub wilson_points: usize,
    /// Also evaluate `D_m` itself along the dichotomy route.
    pub full_route: bool,
    /// Relative growth of Δ(m) tolerated between consecutive m.
    pub slack: f64,
    /// Absolute floor below which Δ(m) counts as zero.
    pub floor: f64,
    pub tol: Tolerances,
}

impl Default for TheoremOptions {
    fn default() -> Self {
        TheoremOptions {
            gauge_steps: None,
            derivative: DerivativeMethod::default(),
            gamma_method: Method::Holonomy,
            wilson_points: DEFAULT_WILSON_POINTS,
            full_route: false,
            slack: 0.1,
            floor: 1e-12,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullPhases {
    pub imlogdet_plus: f64,
    pub imlogdet_minus: f64,
    pub gap_plus: f64,
    pub gap_minus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetPhaseReport {
    pub m: f64,
    pub imlogdet_plus: f64,
    pub imlogdet_minus: f64,
    pub gamma: BerryPhase,
    pub predicted_plus: f64,
    pub predicted_minus: f64,
    pub gap_plus: f64,
    pub gap_minus: f64,
    /// The same comparison for `D_m` itself, when requested.
    pub full: Option<FullPhases>,
}

impl DetPhaseReport {
    pub fn new(m: f64, pair: &DetPair, gamma: BerryPhase, n_plus: usize, n_minus: usize) -> Self {
        let predicted_plus = wrap_angle(n_minus as f64 * std::f64::consts::PI + gamma.gamma);
        let predicted_minus = wrap_angle(n_plus as f64 * std::f64::consts::PI + gamma.gamma);
        let imlogdet_plus = wrap_angle(pair.plus.im);
        let imlogdet_minus = wrap_angle(pair.minus.im);
        DetPhaseReport {
            m,
            imlogdet_plus,
            imlogdet_minus,
            gamma,
            predicted_plus,
            predicted_minus,
            gap_plus: circular_distance(imlogdet_plus, predicted_plus),
            gap_minus: circular_distance(imlogdet_minus, predicted_minus),
            full: None,
        }
    }

    pub fn with_full(mut self, pair: &DetPair) -> Self {
        let plus = wrap_angle(pair.plus.im);
        let minus = wrap_angle(pair.minus.im);
        self.full = Some(FullPhases {
            imlogdet_plus: plus,
            imlogdet_minus: minus,
            gap_plus: circular_distance(plus, self.predicted_plus),
            gap_minus: circular_distance(minus, self.predicted_minus),
        });
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub family: String,
    pub n_plus: usize,
    pub n_minus: usize,
    pub rows: Vec<DetPhaseReport>,
    pub nonincreasing_plus: bool,
    pub nonincreasing_minus: bool,
}

impl TheoremReport {
    pub fn nonincreasing(&self) -> bool {
        self.nonincreasing_plus && self.nonincreasing_minus
    }
}

/// `Δ(m_{k+1}) ≤ (1 + slack)·Δ(m_k) + floor` for every consecutive pair.
pub fn is_nonincreasing(gaps: &[f64], slack: f64, floor: f64) -> bool {
    gaps.windows(2)
        .all(|w| w[1] <= (1.0 + slack) * w[0] + floor)
}

pub fn validate_mlist(mlist: &[f64]) -> Result<()> {
    if mlist.is_empty() {
        return Err(Error::InvalidArgument("m-list is empty".into()));
    }
    if mlist.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidArgument("m-list entries must be positive".into()));
    }
    if mlist.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("m-list must be strictly ascending".into()));
    }
    Ok(())
}

/// The gauge path and hat blocks for the level 0 on a grid of `steps`.
pub fn prepare_blocks(
    family: &PeriodicHamiltonian,
    steps: usize,
    derivative: DerivativeMethod,
    tol: Tolerances,
) -> Result<(GaugePath, HatBlocks)> {
    let level = LevelCurve::default();
    gap_margin_with(family, &level, DEFAULT_GAP_GRID, &tol)?;
    let field = ProjectorField::below(family, &level).with_tolerances(tol);
    let opts = KatoOptions {
        steps,
        derivative,
        tol,
    };
    let path = gauge_path(&field, &opts)?;
    let blocks = build_hat_blocks(family, &path)?;
    Ok((path, blocks))
}

/// γ by the requested method, reusing the gauge path where possible.
pub fn gamma_for(
    family: &PeriodicHamiltonian,
    path: &GaugePath,
    method: Method,
    wilson_points: usize,
    kato: &KatoOptions,
) -> Result<BerryPhase> {
    let level = LevelCurve::default();
    match method {
        Method::Holonomy => berry_phase_holonomy(path, &path.split0),
        Method::Trace => berry_phase_trace(path),
        Method::Wilson => wilson_loop_oracle(
            &ProjectorField::below(family, &level).with_tolerances(kato.tol),
            wilson_points,
        ),
        Method::Exterior => berry_phase_exterior(family, &level, kato),
    }
}

/// Compares `Im log det± D̂_m` with `N∓π + γ` for each m.
pub fn theorem_verify(
    family: &PeriodicHamiltonian,
    mlist: &[f64],
    opts: &TheoremOptions,
) -> Result<TheoremReport> {
    validate_mlist(mlist)?;
    let m_max = *mlist.last().expect("validated");
    let steps = opts.gauge_steps.unwrap_or(2 * default_steps(m_max));
    let (path, blocks) = prepare_blocks(family, steps, opts.derivative, opts.tol)?;
    let kato = KatoOptions {
        steps: steps.min(4096),
        derivative: opts.derivative,
        tol: opts.tol,
    };
    let gamma = gamma_for(family, &path, opts.gamma_method, opts.wilson_points, &kato)?;
    let (np, nm) = (blocks.n_plus, blocks.n_minus);

    let rows: Vec<DetPhaseReport> = mlist
        .par_iter()
        .map(|&m| {
            let pair = det_phase_hat(&blocks, m).map_err(|e| e.context(format!("m = {m}")))?;
            let mut row = DetPhaseReport::new(m, &pair, gamma, np, nm);
            if opts.full_route {
                let op = FirstOrderOperator::d_m(family, m)?;
                let ode = OdeOptions {
                    steps: Some(default_steps(m)),
                    tol: opts.tol,
                    ..Default::default()
                };
                let full = det_pm(&op, m, &RouteOptions {
                    ode,
                    ..Default::default()
                })
                .map_err(|e| e.context(format!("full operator at m = {m}")))?;
                row = row.with_full(&full);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let plus: Vec<f64> = rows.iter().map(|r| r.gap_plus).collect();
    let minus: Vec<f64> = rows.iter().map(|r| r.gap_minus).collect();
    Ok(TheoremReport {
        family: family.label(),
        n_plus: np,
        n_minus: nm,
        nonincreasing_plus: is_nonincreasing(&plus, opts.slack, opts.floor),
        nonincreasing_minus: is_nonincreasing(&minus, opts.slack, opts.floor),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationRow {
    pub s: f64,
    pub imlogdet_plus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationSweep {
    pub m: f64,
    /// `Im log det₊ D̃_{m,0}`.
    pub reference: f64,
    pub rows: Vec<DeformationRow>,
}

impl DeformationSweep {
    /// `max_s |Im log det₊ D̃_{m,s} − Im log det₊ D̃_{m,0}|` on the circle.
    pub fn delta(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| circular_distance(r.imlogdet_plus, self.reference))
            .fold(0.0, f64::max)
    }
}

/// `Im log det₊ D̃_{m,s}` for each s.
pub fn deformation_sweep(
    blocks: &HatBlocks,
    m: f64,
    slist: &[f64],
    opts: &RouteOptions,
) -> Result<DeformationSweep> {
    if slist.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidArgument("s must lie in [0, 1]".into()));
    }
    let opts = RouteOptions {
        ode: OdeOptions {
            steps: None,
            tol: blocks.tol,
            ..opts.ode
        },
        ..*opts
    };
    let phase = |s: f64| -> Result<f64> {
        let op = blocks.deformed_operator(m, s)?;
        det_pm(&op, m, &opts)
            .map(|p| wrap_angle(p.plus.im))
            .map_err(|e| e.context(format!("m = {m}, s = {s}")))
    };
    let reference = phase(0.0)?;
    let rows = slist
        .par_iter()
        .map(|&s| {
            Ok(DeformationRow {
                s,
                imlogdet_plus: if s == 0.0 { reference } else { phase(s)? },
            })
        })
        .collect::<Result<_>>()?;
    Ok(DeformationSweep { m, reference, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateReport {
    pub m: f64,
    /// `Im log det₊ D_m`.
    pub plus_dm: f64,
    /// `Im log det₋ D_m*`.
    pub minus_conjugate: f64,
    /// Circular distance between `plus_dm` and `−minus_conjugate`.
    pub residual: f64,
}

impl ConjugateReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Evaluates `Im log det₊ D_m` and `Im log det₋ D_m*` independently.
pub fn conjugate_identity_check(
    family: &PeriodicHamiltonian,
    m: f64,
    opts: &RouteOptions,
) -> Result<ConjugateReport> {
    gap_margin_with(family, &LevelCurve::default(), DEFAULT_GAP_GRID, &opts.ode.tol)?;
    let ode = OdeOptions {
        steps: Some(opts.ode.steps.unwrap_or(default_steps(m))),
        ..opts.ode
    };
    let opts = RouteOptions { ode, ..*opts };
    let dm = FirstOrderOperator::d_m(family, m)?;
    let conj = FirstOrderOperator::d_m_conjugate(family, m)?;
    let (a, b) = rayon::join(|| det_pm(&dm, m, &opts), || det_pm(&conj, m, &opts));
    let plus_dm = wrap_angle(a?.plus.im);
    let minus_conjugate = wrap_angle(b?.minus.im);
    Ok(ConjugateReport {
        m,
        plus_dm,
        minus_conjugate,
        residual: circular_distance(plus_dm, -minus_conjugate),
    })
}
