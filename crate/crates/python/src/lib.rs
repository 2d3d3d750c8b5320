//! Python bindings for `berry_det`.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use berry_det::cli::{run_config, Command, RunConfig};
use berry_det::determinant::{
    conjugate_identity_check, default_steps, deformation_sweep, det_pm, det_phase_hat,
    prepare_blocks, theorem_verify, FirstOrderOperator, RouteOptions, TheoremOptions,
};
use berry_det::hamiltonians::{build_family, FamilySpec, LevelCurve, PeriodicHamiltonian};
use berry_det::linalg::Tolerances;
use berry_det::spectral::DerivativeMethod;
use berry_det::transport::{berry_phases, BerryOptions, KatoOptions, Method};

create_exception!(berry_det, BerryDetError, PyValueError);

fn err(e: berry_det::Error) -> PyErr {
    BerryDetError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_method(name: &str) -> PyResult<Method> {
    Method::ALL
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown method {name:?}")))
}

fn parse_command(name: &str) -> PyResult<Command> {
    Ok(match name {
        "berry" => Command::Berry,
        "det" => Command::Det,
        "verify" => Command::Verify,
        "sweep" => Command::Sweep,
        "demo" => Command::Demo,
        _ => return Err(PyValueError::new_err(format!("unknown command {name:?}"))),
    })
}

/// A smooth 2π-periodic Hermitian family H(t).
#[pyclass(name = "Family", module = "berry_det", frozen)]
struct PyFamily {
    spec: FamilySpec,
    inner: PeriodicHamiltonian,
}

impl PyFamily {
    fn from_spec(spec: FamilySpec) -> PyResult<Self> {
        let inner = build_family(&spec).map_err(err)?;
        Ok(PyFamily { spec, inner })
    }
}

#[pymethods]
impl PyFamily {
    #[staticmethod]
    fn spin_half(theta: f64, b0: f64) -> PyResult<Self> {
        Self::from_spec(FamilySpec::spin_half(theta, b0))
    }

    #[staticmethod]
    fn diag_const(energies: Vec<f64>) -> PyResult<Self> {
        Self::from_spec(FamilySpec::diag_const(&energies))
    }

    #[staticmethod]
    #[pyo3(signature = (n, harmonics, seed, n_minus=None))]
    fn random_gapped(n: usize, harmonics: usize, seed: u64, n_minus: Option<usize>) -> PyResult<Self> {
        Self::from_spec(FamilySpec::random_gapped(n, harmonics, seed, n_minus.unwrap_or(n / 2)))
    }

    /// Build from the JSON form of a family table, e.g.
    /// `{"type": "spin_half", "theta": 1.0, "b0": 1.0}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Self::from_spec(spec)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label()
    }

    /// H(t) as a list of rows.
    fn eval(&self, t: f64) -> Vec<Vec<Complex64>> {
        let h = self.inner.eval(t);
        (0..h.nrows())
            .map(|i| (0..h.ncols()).map(|j| h[(i, j)]).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Family({})", self.inner.label())
    }
}

/// Berry phase of the spectral projector below 0, keyed by method name.
#[pyfunction]
#[pyo3(signature = (family, methods=None, steps=2048, wilson_points=8192))]
fn berry_phase<'py>(
    py: Python<'py>,
    family: &PyFamily,
    methods: Option<Vec<String>>,
    steps: usize,
    wilson_points: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let methods = match methods {
        Some(names) => names.iter().map(|n| parse_method(n)).collect::<PyResult<_>>()?,
        None => Method::ALL.to_vec(),
    };
    let opts = BerryOptions {
        kato: KatoOptions::with_steps(steps),
        wilson_points,
        methods,
    };
    let phases = py
        .detach(|| berry_phases(&family.inner, &LevelCurve::default(), &opts))
        .map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    for p in phases {
        dict.set_item(p.method.name(), p.gamma)?;
    }
    Ok(dict.into_any())
}

/// `(log det₊, log det₋)` of the block operator D̂_m in the periodic gauge.
#[pyfunction]
#[pyo3(name = "det_phase_hat", signature = (family, m, steps=None))]
fn det_phase_hat_py(
    py: Python<'_>,
    family: &PyFamily,
    m: f64,
    steps: Option<usize>,
) -> PyResult<(Complex64, Complex64)> {
    let steps = steps.unwrap_or(2 * default_steps(m));
    let pair = py
        .detach(|| {
            let (_, blocks) = prepare_blocks(
                &family.inner,
                steps,
                DerivativeMethod::default(),
                Tolerances::default(),
            )?;
            det_phase_hat(&blocks, m)
        })
        .map_err(err)?;
    Ok((pair.plus, pair.minus))
}

/// `(log det₊, log det₋)` of D_m = −i d/dt − imH(t).
#[pyfunction]
fn det_full(py: Python<'_>, family: &PyFamily, m: f64) -> PyResult<(Complex64, Complex64)> {
    let pair = py
        .detach(|| {
            let op = FirstOrderOperator::d_m(&family.inner, m)?;
            det_pm(&op, m, &RouteOptions::default())
        })
        .map_err(err)?;
    Ok((pair.plus, pair.minus))
}

/// Determinant phases against N∓π + γ over `mlist`.
#[pyfunction]
#[pyo3(signature = (family, mlist, gamma_method="holonomy", full_route=false))]
fn verify<'py>(
    py: Python<'py>,
    family: &PyFamily,
    mlist: Vec<f64>,
    gamma_method: &str,
    full_route: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = TheoremOptions {
        gamma_method: parse_method(gamma_method)?,
        full_route,
        ..Default::default()
    };
    let report = py
        .detach(|| theorem_verify(&family.inner, &mlist, &opts))
        .map_err(err)?;
    to_py(py, &report)
}

/// `Im log det₊ D̃_{m,s}` over `slist` together with its largest excursion.
#[pyfunction]
fn sweep<'py>(
    py: Python<'py>,
    family: &PyFamily,
    m: f64,
    slist: Vec<f64>,
) -> PyResult<(Bound<'py, PyAny>, f64)> {
    let result = py
        .detach(|| {
            let (_, blocks) = prepare_blocks(
                &family.inner,
                2 * default_steps(m),
                DerivativeMethod::default(),
                Tolerances::default(),
            )?;
            deformation_sweep(&blocks, m, &slist, &RouteOptions::default())
        })
        .map_err(err)?;
    Ok((to_py(py, &result)?, result.delta()))
}

/// Residual of `Im log det₊ D_m = −Im log det₋ D_m*`.
#[pyfunction]
fn conjugate_residual(py: Python<'_>, family: &PyFamily, m: f64) -> PyResult<f64> {
    py.detach(|| conjugate_identity_check(&family.inner, m, &RouteOptions::default()))
        .map(|r| r.residual)
        .map_err(err)
}

/// Run a TOML configuration through one of the CLI pipelines.
#[pyfunction]
#[pyo3(signature = (config, command="verify"))]
fn run<'py>(py: Python<'py>, config: &str, command: &str) -> PyResult<Bound<'py, PyAny>> {
    let command = parse_command(command)?;
    let cfg = RunConfig::from_toml_str(config).map_err(err)?;
    let report = py.detach(|| run_config(&cfg, command)).map_err(err)?;
    to_py(py, &report)
}

/// The bundled demo run.
#[pyfunction]
fn demo(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let report = py
        .detach(|| run_config(&RunConfig::demo(), Command::Demo))
        .map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "berry_det")]
pub fn berry_det_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BerryDetError", m.py().get_type::<BerryDetError>())?;
    m.add_class::<PyFamily>()?;
    m.add_function(wrap_pyfunction!(berry_phase, m)?)?;
    m.add_function(wrap_pyfunction!(det_phase_hat_py, m)?)?;
    m.add_function(wrap_pyfunction!(det_full, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(conjugate_residual, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(demo, m)?)?;
    Ok(())
}
