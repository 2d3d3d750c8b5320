//! Parallel transport of the lower spectral subspace and the Berry phase.
//!
//! The Kato evolution `U̇ = [Ṗ, P] U`, `U(0) = Id` intertwines `P_t` with
//! `P_0`. Its endpoint restricted to F_0⁻ is the holonomy of `∇ = P d/dt`,
//! whose determinant is `e^{iγ}`. The periodic gauge
//! `𝒰(t) = U(t) exp(−i t a)` closes the loop, and γ becomes the integral
//! `i ∫ Tr(P_0 𝒰⁻¹𝒰̇ P_0) dt`. A Wilson-loop product of projectors and the
//! lowest band of the exterior-power Hamiltonian give two further,
//! independent routes to the same phase.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{LevelCurve, PeriodicHamiltonian};
use crate::linalg::{
    herm_eig, identity, polar_unitary_with, selfadjoint_log_unitary_with, unitarity_defect,
    unitary_flow, wrap_angle, CMatrix, Tolerances, I,
};
use crate::spectral::{DerivativeMethod, ProjectorField, SpectralSplit};

pub const DEFAULT_KATO_STEPS: usize = 2048;
pub const DEFAULT_WILSON_POINTS: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KatoOptions {
    pub steps: usize,
    pub derivative: DerivativeMethod,
    pub tol: Tolerances,
}

impl Default for KatoOptions {
    fn default() -> Self {
        KatoOptions {
            steps: DEFAULT_KATO_STEPS,
            derivative: DerivativeMethod::default(),
            tol: Tolerances::default(),
        }
    }
}

impl KatoOptions {
    pub fn with_steps(steps: usize) -> Self {
        KatoOptions {
            steps,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Holonomy,
    Trace,
    Wilson,
    Exterior,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Holonomy,
        Method::Trace,
        Method::Wilson,
        Method::Exterior,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Holonomy => "holonomy",
            Method::Trace => "trace",
            Method::Wilson => "wilson",
            Method::Exterior => "exterior",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerryPhase {
    /// In (−π, π].
    pub gamma: f64,
    pub method: Method,
}

impl BerryPhase {
    fn new(gamma: f64, method: Method) -> Self {
        BerryPhase {
            gamma: wrap_angle(gamma),
            method,
        }
    }
}

/// The loop `𝒰(t) = U(t) exp(−i t a)` with `exp(2πi a) = U(2π)`.
#[derive(Clone, Debug)]
pub struct PeriodicGauge {
    /// Self-adjoint log of `U⁺`, in coordinates of the F_0⁺ frame.
    pub a_plus: CMatrix,
    /// Self-adjoint log of `U⁻`, in coordinates of the F_0⁻ frame.
    pub a_minus: CMatrix,
    /// `a⁺ ⊕ a⁻` in the standard basis.
    pub log_generator: CMatrix,
    /// `𝒰(t_j)`.
    pub gauge: Vec<CMatrix>,
    /// `𝒰(t_j)⁻¹ 𝒰̇(t_j)`, skew-adjoint.
    pub connection: Vec<CMatrix>,
    /// Largest off-diagonal block of `U(2π)` in the F_0⁺ ⊕ F_0⁻ frame.
    pub leakage: f64,
}

/// Sampled Kato evolution on a uniform grid of `[0, 2π]`.
#[derive(Clone, Debug)]
pub struct GaugePath {
    pub grid: Vec<f64>,
    /// `U(t_j)`.
    pub kato: Vec<CMatrix>,
    /// `[Ṗ_t, P_t]` at `t_j`.
    pub generators: Vec<CMatrix>,
    /// `P_{t_j}`.
    pub projectors: Vec<CMatrix>,
    pub split0: SpectralSplit,
    pub periodic: Option<PeriodicGauge>,
    /// Largest unitarity defect of an RK4 step before re-unitarization.
    pub max_step_defect: f64,
    pub tol: Tolerances,
}

impl GaugePath {
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn step_size(&self) -> f64 {
        TAU / self.steps() as f64
    }

    pub fn dim(&self) -> usize {
        self.split0.dim()
    }

    pub fn endpoint(&self) -> &CMatrix {
        self.kato.last().expect("non-empty path")
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.kato.iter().map(unitarity_defect).fold(0.0, f64::max)
    }

    /// `max_j ‖U⁻¹ P_t U − P_0‖`.
    pub fn intertwining_residual(&self) -> f64 {
        intertwining(&self.kato, &self.projectors, &self.split0.projector)
    }

    /// `max_j |Tr(P_0 U⁻¹ U̇ P_0)|`, which vanishes along the Kato evolution.
    pub fn kato_trace_residual(&self) -> f64 {
        let f0 = &self.split0.frame;
        self.kato
            .iter()
            .zip(&self.generators)
            .map(|(u, g)| (f0.adjoint() * u.adjoint() * g * u * f0).trace().norm())
            .fold(0.0, f64::max)
    }

    /// `‖𝒰(2π) − Id‖` and `‖𝒰(0) − Id‖`.
    pub fn closure_residual(&self) -> Option<f64> {
        let p = self.periodic.as_ref()?;
        let n = self.dim();
        let first = (&p.gauge[0] - identity(n)).norm();
        let last = (p.gauge.last().expect("non-empty") - identity(n)).norm();
        Some(first.max(last))
    }

    /// `max_j ‖𝒰⁻¹ P_t 𝒰 − P_0‖`.
    pub fn periodic_intertwining_residual(&self) -> Option<f64> {
        let p = self.periodic.as_ref()?;
        Some(intertwining(
            &p.gauge,
            &self.projectors,
            &self.split0.projector,
        ))
    }

    pub fn periodic(&self) -> Result<&PeriodicGauge> {
        self.periodic.as_ref().ok_or_else(|| {
            Error::InvalidArgument("gauge path has no periodic part; call build_periodic_gauge".into())
        })
    }
}

fn intertwining(us: &[CMatrix], ps: &[CMatrix], p0: &CMatrix) -> f64 {
    us.iter()
        .zip(ps)
        .map(|(u, p)| (u.adjoint() * p * u - p0).norm())
        .fold(0.0, f64::max)
}

/// Integrates `U̇ = [Ṗ_t, P_t] U`, `U(0) = Id` with classical RK4 and polar
/// re-unitarization after every step.
pub fn kato_evolve(field: &ProjectorField<'_>, opts: &KatoOptions) -> Result<GaugePath> {
    let n = opts.steps;
    if n < 2 {
        return Err(Error::InvalidArgument("Kato evolution needs at least 2 steps".into()));
    }
    let h = TAU / n as f64;
    // RK4 stages sit on the half-step grid
    let samples: Vec<(SpectralSplit, CMatrix)> = (0..=2 * n)
        .into_par_iter()
        .map(|k| field.derivative(0.5 * h * k as f64, opts.derivative))
        .collect::<Result<_>>()?;
    let rank = samples[0].0.n_minus;
    if let Some((s, _)) = samples.iter().find(|(s, _)| s.n_minus != rank) {
        return Err(Error::GapViolation { t: s.t, margin: 0.0 });
    }
    let generators: Vec<CMatrix> = samples
        .iter()
        .map(|(s, dp)| dp * &s.projector - &s.projector * dp)
        .collect();

    let dim = field.dim();
    let mut u = identity(dim);
    let mut kato = Vec::with_capacity(n + 1);
    kato.push(u.clone());
    let mut max_defect = 0.0f64;
    for j in 0..n {
        let (g0, g1, g2) = (&generators[2 * j], &generators[2 * j + 1], &generators[2 * j + 2]);
        let k1 = g0 * &u;
        let k2 = g1 * (&u + &k1 * Complex64::from(0.5 * h));
        let k3 = g1 * (&u + &k2 * Complex64::from(0.5 * h));
        let k4 = g2 * (&u + &k3 * Complex64::from(h));
        let next = &u + (k1 + k2 * Complex64::from(2.0) + k3 * Complex64::from(2.0) + k4)
            * Complex64::from(h / 6.0);
        let defect = unitarity_defect(&next);
        max_defect = max_defect.max(defect);
        if defect > opts.tol.ode_unitarity {
            return Err(Error::OdeToleranceFailure(format!(
                "Kato step at t = {:.4} lost unitarity ({defect:.2e}); increase steps",
                j as f64 * h
            )));
        }
        u = polar_unitary_with(&next, &opts.tol)?;
        kato.push(u.clone());
    }

    let grid: Vec<f64> = (0..=n).map(|j| h * j as f64).collect();
    let projectors = samples
        .iter()
        .step_by(2)
        .map(|(s, _)| s.projector.clone())
        .collect();
    let generators = generators.into_iter().step_by(2).collect();
    let split0 = samples.into_iter().next().expect("non-empty").0;
    Ok(GaugePath {
        grid,
        kato,
        generators,
        projectors,
        split0,
        periodic: None,
        max_step_defect: max_defect,
        tol: opts.tol,
    })
}

/// Kato evolution followed by the periodic gauge construction.
pub fn gauge_path(field: &ProjectorField<'_>, opts: &KatoOptions) -> Result<GaugePath> {
    build_periodic_gauge(kato_evolve(field, opts)?)
}

/// γ from `det(P_0 U(2π) P_0 : F_0⁻ → F_0⁻)`, evaluated in the frame of
/// `split0`.
pub fn berry_phase_holonomy(path: &GaugePath, split0: &SpectralSplit) -> Result<BerryPhase> {
    if split0.n_minus == 0 {
        return Ok(BerryPhase::new(0.0, Method::Holonomy));
    }
    let f0 = &split0.frame;
    let hol = f0.adjoint() * path.endpoint() * f0;
    let det = hol.determinant();
    let modulus = det.norm();
    if (modulus - 1.0).abs() > path.tol.holonomy_modulus {
        return Err(Error::NonUnitaryHolonomy { modulus });
    }
    Ok(BerryPhase::new(det.arg(), Method::Holonomy))
}

/// Adds the periodic gauge `𝒰(t) = U(t) exp(−i t a)` to a Kato path.
pub fn build_periodic_gauge(path: GaugePath) -> Result<GaugePath> {
    let w = path.split0.adapted_basis();
    let (np, nm) = (path.split0.n_plus, path.split0.n_minus);
    let blocks = w.adjoint() * path.endpoint() * &w;
    let leakage = blocks
        .view((0, np), (np, nm))
        .norm()
        .max(blocks.view((np, 0), (nm, np)).norm());
    let limit = path.tol.block_leakage;
    if leakage > limit {
        return Err(Error::BlockLeakage { leakage, limit });
    }
    let u_plus = blocks.view((0, 0), (np, np)).into_owned();
    let u_minus = blocks.view((np, np), (nm, nm)).into_owned();
    let a_plus = selfadjoint_log_unitary_with(&u_plus, &path.tol)?;
    let a_minus = selfadjoint_log_unitary_with(&u_minus, &path.tol)?;
    with_logs(path, a_plus, a_minus, leakage)
}

/// As [`build_periodic_gauge`] with caller-supplied logarithms; they must
/// satisfy `exp(2πi a±) = U±` up to the unitarity tolerance.
pub fn build_periodic_gauge_with_logs(
    path: GaugePath,
    a_plus: CMatrix,
    a_minus: CMatrix,
) -> Result<GaugePath> {
    let w = path.split0.adapted_basis();
    let (np, nm) = (path.split0.n_plus, path.split0.n_minus);
    if a_plus.shape() != (np, np) || a_minus.shape() != (nm, nm) {
        return Err(Error::InvalidArgument("log blocks do not match F± dimensions".into()));
    }
    let blocks = w.adjoint() * path.endpoint() * &w;
    let check = |a: &CMatrix, target: CMatrix| -> Result<()> {
        if a.is_empty() {
            return Ok(());
        }
        let e = (a * Complex64::new(0.0, TAU)).exp();
        let defect = (e - target).norm();
        if defect > path.tol.unitary.max(1e-6) {
            return Err(Error::InvalidArgument(format!(
                "exp(2πi a) differs from the holonomy block by {defect:.2e}"
            )));
        }
        Ok(())
    };
    check(&a_plus, blocks.view((0, 0), (np, np)).into_owned())?;
    check(&a_minus, blocks.view((np, np), (nm, nm)).into_owned())?;
    let leakage = blocks
        .view((0, np), (np, nm))
        .norm()
        .max(blocks.view((np, 0), (nm, np)).norm());
    with_logs(path, a_plus, a_minus, leakage)
}

fn with_logs(
    mut path: GaugePath,
    a_plus: CMatrix,
    a_minus: CMatrix,
    leakage: f64,
) -> Result<GaugePath> {
    let n = path.dim();
    let np = path.split0.n_plus;
    let w = path.split0.adapted_basis();
    let mut block = CMatrix::zeros(n, n);
    block.view_mut((0, 0), (np, np)).copy_from(&a_plus);
    block
        .view_mut((np, np), (n - np, n - np))
        .copy_from(&a_minus);
    let log_generator = &w * block * w.adjoint();
    let flow = herm_eig(&log_generator)?;
    let minus_i_a = &log_generator * (-I);

    let (gauge, connection): (Vec<CMatrix>, Vec<CMatrix>) = path
        .grid
        .par_iter()
        .zip(path.kato.par_iter().zip(path.generators.par_iter()))
        .map(|(&t, (u, g))| {
            let e = unitary_flow(&flow, t);
            let calu = u * &e;
            // 𝒰⁻¹𝒰̇ = e⁻¹ (U⁻¹ [Ṗ,P] U) e − i a, by the product rule
            let conn = e.adjoint() * (u.adjoint() * g * u) * &e + &minus_i_a;
            (calu, conn)
        })
        .unzip();
    path.periodic = Some(PeriodicGauge {
        a_plus,
        a_minus,
        log_generator,
        gauge,
        connection,
        leakage,
    });
    Ok(path)
}

/// γ = i ∫ Tr(P_0 𝒰⁻¹𝒰̇ P_0) dt by the periodic trapezoidal rule.
pub fn berry_phase_trace(path: &GaugePath) -> Result<BerryPhase> {
    let periodic = path.periodic()?;
    let f0 = &path.split0.frame;
    if f0.ncols() == 0 {
        return Ok(BerryPhase::new(0.0, Method::Trace));
    }
    let h = path.step_size();
    let mut integral = Complex64::new(0.0, 0.0);
    for (j, conn) in periodic.connection.iter().enumerate().take(path.steps()) {
        let tr = (f0.adjoint() * conn * f0).trace();
        if tr.re.abs() > 1e-8 * tr.norm().max(1.0) {
            return Err(Error::NonRealPhase { imag: tr.re }.context(format!(
                "trace integrand is not imaginary at t = {:.6}",
                path.grid[j]
            )));
        }
        integral += tr * h;
    }
    let gamma = integral * I;
    if gamma.im.abs() > path.tol.real_phase {
        return Err(Error::NonRealPhase { imag: gamma.im });
    }
    Ok(BerryPhase::new(gamma.re, Method::Trace))
}

/// Discrete holonomy `det(F_0† P_{t_{n−1}} ⋯ P_{t_1} F_0)` on `points`
/// equally spaced samples.
pub fn wilson_loop_oracle(field: &ProjectorField<'_>, points: usize) -> Result<BerryPhase> {
    if points < 64 {
        return Err(Error::InvalidArgument(format!(
            "Wilson loop needs at least 64 points, got {points}"
        )));
    }
    let splits: Vec<SpectralSplit> = (0..points)
        .into_par_iter()
        .map(|j| field.split(TAU * j as f64 / points as f64))
        .collect::<Result<_>>()?;
    let f0 = &splits[0].frame;
    if let Some(s) = splits.iter().find(|s| s.n_minus != f0.ncols()) {
        return Err(Error::GapViolation { t: s.t, margin: 0.0 });
    }
    if f0.ncols() == 0 {
        return Ok(BerryPhase::new(0.0, Method::Wilson));
    }
    let mut transported = f0.clone();
    for s in &splits[1..] {
        transported = &s.projector * transported;
    }
    let det = (f0.adjoint() * transported).determinant();
    let modulus = det.norm();
    if modulus < field.tol.degenerate_product {
        return Err(Error::DegenerateProduct { modulus });
    }
    Ok(BerryPhase::new(det.arg(), Method::Wilson))
}

/// γ as the Berry phase of the isolated lowest level of the operator
/// induced on Λ^k C^N, `k = dim F⁻`.
pub fn berry_phase_exterior(
    family: &PeriodicHamiltonian,
    level: &LevelCurve,
    opts: &KatoOptions,
) -> Result<BerryPhase> {
    let k = ProjectorField::below(family, level)
        .with_tolerances(opts.tol)
        .split(0.0)?
        .n_minus;
    if k == 0 {
        return Err(Error::InvalidArgument(
            "exterior-power route needs at least one eigenvalue below the level".into(),
        ));
    }
    let lifted = family.exterior_power(k)?;
    let field = ProjectorField::lowest(&lifted, 1).with_tolerances(opts.tol);
    let path = kato_evolve(&field, opts)?;
    let gamma = berry_phase_holonomy(&path, &path.split0)?.gamma;
    Ok(BerryPhase::new(gamma, Method::Exterior))
}

/// Settings for computing γ by several routes at once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerryOptions {
    pub kato: KatoOptions,
    pub wilson_points: usize,
    pub methods: Vec<Method>,
}

impl Default for BerryOptions {
    fn default() -> Self {
        BerryOptions {
            kato: KatoOptions::default(),
            wilson_points: DEFAULT_WILSON_POINTS,
            methods: Method::ALL.to_vec(),
        }
    }
}

/// γ by each requested method, in the order given.
pub fn berry_phases(
    family: &PeriodicHamiltonian,
    level: &LevelCurve,
    opts: &BerryOptions,
) -> Result<Vec<BerryPhase>> {
    let field = ProjectorField::below(family, level).with_tolerances(opts.kato.tol);
    let needs_path = opts
        .methods
        .iter()
        .any(|m| matches!(m, Method::Holonomy | Method::Trace));
    let path = if needs_path {
        Some(gauge_path(&field, &opts.kato)?)
    } else {
        None
    };
    opts.methods
        .iter()
        .map(|method| match method {
            Method::Holonomy => {
                let path = path.as_ref().expect("computed above");
                berry_phase_holonomy(path, &path.split0)
            }
            Method::Trace => berry_phase_trace(path.as_ref().expect("computed above")),
            Method::Wilson => wilson_loop_oracle(&field, opts.wilson_points),
            Method::Exterior => berry_phase_exterior(family, level, &opts.kato),
        })
        .collect()
}

/// Largest pairwise circular distance among the phases.
pub fn max_pairwise_spread(phases: &[BerryPhase]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in phases.iter().enumerate() {
        for b in &phases[i + 1..] {
            worst = worst.max(crate::linalg::circular_distance(a.gamma, b.gamma));
        }
    }
    worst
}
