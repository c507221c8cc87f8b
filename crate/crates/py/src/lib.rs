//! Python bindings: thin wrappers around the core types and the
//! solve / optimize / value / simulate entry points.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use omega_dividends::levy::JumpComponent;
use omega_dividends::omega::{self, Segment, SegmentShape};
use omega_dividends::optimizer;
use omega_dividends::policy;
use omega_dividends::sim;
use omega_dividends::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Model(_) | Error::Config(_) | Error::Parse(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Spectrally negative Lévy model with hyperexponential downward jumps.
#[pyclass(name = "LevyModel", skip_from_py_object)]
#[derive(Clone)]
struct PyLevyModel {
    inner: omega_dividends::LevyModel,
}

#[pymethods]
impl PyLevyModel {
    /// Args: mu, sigma, jump_intensity, jump_mixture as [(weight, rate), ...].
    #[new]
    fn new(mu: f64, sigma: f64, jump_intensity: f64, jump_mixture: Vec<(f64, f64)>) -> PyResult<Self> {
        let mixture = jump_mixture
            .into_iter()
            .map(|(weight, rate)| JumpComponent { weight, rate })
            .collect();
        let inner = omega_dividends::LevyModel::new(mu, sigma, jump_intensity, mixture)
            .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn laplace_exponent(&self, theta: f64) -> PyResult<f64> {
        self.inner.laplace_exponent(theta).map_err(to_py_err)
    }

    fn phi_right_inverse(&self, q: f64) -> PyResult<f64> {
        self.inner.phi_right_inverse(q).map_err(to_py_err)
    }

    fn psi_roots(&self, q: f64) -> PyResult<Vec<f64>> {
        self.inner.psi_roots(q).map_err(to_py_err)
    }

    fn mean_drift(&self) -> f64 {
        self.inner.mean_drift()
    }
}

/// Bankruptcy rate function: `phi` far below, piecewise segments on [a, 0),
/// zero on [0, inf).
#[pyclass(name = "BankruptcyRate", skip_from_py_object)]
#[derive(Clone)]
struct PyBankruptcyRate {
    inner: omega_dividends::BankruptcyRate,
}

#[pymethods]
impl PyBankruptcyRate {
    /// Segments: list of ("constant", from, to, value) or
    /// ("linear", from, to, value_at_from, slope) tuples.
    #[new]
    #[pyo3(signature = (a, phi, segments=vec![]))]
    fn new(a: f64, phi: f64, segments: Vec<Bound<'_, PyAny>>) -> PyResult<Self> {
        let mut segs = Vec::new();
        for seg in segments {
            let kind: String = seg.get_item(0)?.extract()?;
            let from: f64 = seg.get_item(1)?.extract()?;
            let to: f64 = seg.get_item(2)?.extract()?;
            let shape = match kind.as_str() {
                "constant" => SegmentShape::Constant {
                    value: seg.get_item(3)?.extract()?,
                },
                "linear" => SegmentShape::Linear {
                    value_at_start: seg.get_item(3)?.extract()?,
                    slope: seg.get_item(4)?.extract()?,
                },
                other => {
                    return Err(PyValueError::new_err(format!(
                        "segment kind must be constant|linear, got {other}"
                    )))
                }
            };
            segs.push(Segment { from, to, shape });
        }
        let inner = omega_dividends::BankruptcyRate::new(a, phi, segs).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Purely exponential Parisian delay at rate phi.
    #[staticmethod]
    fn parisian(phi: f64) -> PyResult<Self> {
        Ok(Self {
            inner: omega_dividends::BankruptcyRate::parisian(phi).map_err(to_py_err)?,
        })
    }

    fn value(&self, x: f64) -> f64 {
        self.inner.value(x)
    }

    fn omega_q(&self, q: f64, x: f64) -> f64 {
        self.inner.omega_q(q, x)
    }
}

/// Solved grid table for the generalised scale function H and H'.
#[pyclass(name = "OmegaScaleTable")]
struct PyOmegaScaleTable {
    inner: omega_dividends::OmegaScaleTable,
}

#[pymethods]
impl PyOmegaScaleTable {
    fn h(&self, x: f64) -> f64 {
        self.inner.h_at(x)
    }

    fn h_prime(&self, x: f64) -> f64 {
        self.inner.h_prime_at(x)
    }

    #[getter]
    fn residual_sup(&self) -> f64 {
        self.inner.residual_sup()
    }

    #[getter]
    fn x_max(&self) -> f64 {
        self.inner.x_max()
    }

    fn grid(&self) -> Vec<f64> {
        self.inner.grid().to_vec()
    }

    fn h_values(&self) -> Vec<f64> {
        self.inner.h_values().to_vec()
    }

    fn h_prime_values(&self) -> Vec<f64> {
        self.inner.h_prime_values().to_vec()
    }
}

/// Result of the barrier optimisation.
#[pyclass(name = "Optimum")]
struct PyOptimum {
    #[pyo3(get)]
    c1_star: f64,
    #[pyo3(get)]
    c2_star: f64,
    #[pyo3(get)]
    case: String,
    #[pyo3(get)]
    a_star: f64,
    #[pyo3(get)]
    beta_max: Option<f64>,
    #[pyo3(get)]
    g_value: f64,
}

/// Solve the Volterra equation for H on [a, x_max] with step h.
#[pyfunction]
fn solve_h(
    model: &PyLevyModel,
    q: f64,
    omega_rate: &PyBankruptcyRate,
    x_max: f64,
    h: f64,
) -> PyResult<PyOmegaScaleTable> {
    let inner =
        omega::solve_h(&model.inner, q, &omega_rate.inner, x_max, h).map_err(to_py_err)?;
    Ok(PyOmegaScaleTable { inner })
}

/// Optimal barrier pair for transaction cost beta.
#[pyfunction]
fn optimize(table: &PyOmegaScaleTable, beta: f64) -> PyResult<PyOptimum> {
    let (barriers, diag) = optimizer::optimize(&table.inner, beta).map_err(to_py_err)?;
    let case = match diag.case {
        optimizer::OptimizerCase::Interior => "interior",
        optimizer::OptimizerCase::CornerBeta => "corner_beta",
        optimizer::OptimizerCase::CornerAstar => "corner_astar",
    };
    Ok(PyOptimum {
        c1_star: barriers.c1,
        c2_star: barriers.c2,
        case: case.to_string(),
        a_star: diag.a_star,
        beta_max: diag.beta_max,
        g_value: diag.g_value,
    })
}

/// Value function of the (c1, c2) strategy at x.
#[pyfunction]
fn value(table: &PyOmegaScaleTable, c1: f64, c2: f64, beta: f64, x: f64) -> PyResult<f64> {
    let barriers = optimizer::BarrierPair::new(c1, c2, beta).map_err(to_py_err)?;
    let vf = policy::ValueFunction::new(&table.inner, barriers).map_err(to_py_err)?;
    Ok(vf.value(x))
}

/// Monte Carlo estimate (estimate, stderr) of the strategy value from x0.
#[pyfunction]
#[pyo3(signature = (model, omega_rate, q, c1, c2, beta, x0, n_paths, dt, t_max, seed, mode="killing_clock"))]
#[allow(clippy::too_many_arguments)]
fn simulate_value(
    model: &PyLevyModel,
    omega_rate: &PyBankruptcyRate,
    q: f64,
    c1: f64,
    c2: f64,
    beta: f64,
    x0: f64,
    n_paths: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
    mode: &str,
) -> PyResult<(f64, f64)> {
    let mode = match mode {
        "killing_clock" => sim::SimMode::KillingClock,
        "discount_weight" => sim::SimMode::DiscountWeight,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be killing_clock|discount_weight, got {other}"
            )))
        }
    };
    let barriers = optimizer::BarrierPair::new(c1, c2, beta).map_err(to_py_err)?;
    let cfg = sim::SimConfig {
        n_paths,
        dt,
        t_max,
        seed,
        mode,
    };
    let est = sim::simulate_value(&model.inner, &omega_rate.inner, q, &barriers, x0, &cfg)
        .map_err(to_py_err)?;
    Ok((est.estimate, est.stderr))
}

#[pymodule]
fn omegadiv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLevyModel>()?;
    m.add_class::<PyBankruptcyRate>()?;
    m.add_class::<PyOmegaScaleTable>()?;
    m.add_class::<PyOptimum>()?;
    m.add_function(wrap_pyfunction!(solve_h, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(value, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_value, m)?)?;
    Ok(())
}
