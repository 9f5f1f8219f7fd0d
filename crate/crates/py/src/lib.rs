use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use submis::bounds::{self, AlphaPolicy, Tolerances};
use submis::classifier;
use submis::expansion::{self, ExpansionReport};
use submis::experiments;
use submis::io;
use submis::model::ProblemInstance;
use submis::numlin::Matrix;
use submis::subspace::{self, Subspace};

fn py_err(e: submis::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn policy(alpha_scale: f64, alpha: Option<f64>) -> PyResult<AlphaPolicy> {
    let p = AlphaPolicy {
        scale: alpha_scale,
        fixed: alpha,
    };
    p.validate().map_err(py_err)?;
    Ok(p)
}

/// Class models (true and mismatched) of a classification problem.
#[pyclass(frozen, module = "pysubmis")]
struct Instance {
    inner: ProblemInstance,
}

#[pymethods]
impl Instance {
    /// Built-in instance by name, e.g. "tableIII-b" or "rob2".
    #[staticmethod]
    fn from_catalog(name: &str) -> PyResult<Self> {
        let named = experiments::catalog_instance(name).map_err(py_err)?;
        Ok(Self { inner: named.instance })
    }

    /// Instance from JSON text; relative CSV paths resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir=None))]
    fn from_json(text: &str, base_dir: Option<&str>) -> PyResult<Self> {
        let inner = io::parse_instance_json(text, base_dir.map(Path::new)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = io::load_instance(Path::new(path)).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        io::instance_to_json(&self.inner)
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim
    }

    /// Signal ranks of the true and the mismatched models.
    fn ranks(&self) -> (Vec<usize>, Vec<usize>) {
        (
            self.inner.true_models.iter().map(|m| m.rank()).collect(),
            self.inner.mismatched_models.iter().map(|m| m.rank()).collect(),
        )
    }

    fn __repr__(&self) -> String {
        format!("Instance(classes={}, ambient_dim={})", self.inner.num_classes(), self.inner.ambient_dim)
    }
}

/// Low-noise expansion of the error bound.
#[pyclass(frozen, module = "pysubmis")]
struct Expansion {
    report: ExpansionReport,
}

#[pymethods]
impl Expansion {
    /// "NoFloor", "FloorConditionsFail" or "FloorNonpositiveD".
    #[getter]
    fn verdict(&self) -> String {
        format!("{:?}", self.report.verdict)
    }

    #[getter]
    fn has_floor(&self) -> bool {
        self.report.verdict.has_floor()
    }

    #[getter]
    fn d(&self) -> f64 {
        self.report.d
    }

    /// Leading constant; None when the error has a floor.
    #[getter]
    fn a(&self) -> Option<f64> {
        self.report.a
    }

    #[getter]
    fn argmin_pairs(&self) -> Vec<(usize, usize)> {
        self.report.argmin_pairs.clone()
    }

    /// `(i, j, reason)` for every pair that breaks a condition.
    #[getter]
    fn failing_pairs(&self) -> Vec<(usize, usize, String)> {
        self.report.failing_pairs.iter().map(|f| (f.i, f.j, f.reason.clone())).collect()
    }

    fn to_json(&self) -> String {
        self.report.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Expansion(verdict={:?}, d={})", self.report.verdict, self.report.d)
    }
}

#[pyfunction]
#[pyo3(signature = (instance, alpha_scale=0.5, alpha=None))]
fn expand(instance: &Instance, alpha_scale: f64, alpha: Option<f64>) -> PyResult<Expansion> {
    let report = expansion::expand(&instance.inner, &policy(alpha_scale, alpha)?, &Tolerances::default()).map_err(py_err)?;
    Ok(Expansion { report })
}

/// Union bound on the error probability at noise variance `sigma2`.
#[pyfunction]
#[pyo3(signature = (instance, sigma2, alpha_scale=0.5, alpha=None))]
fn bound(instance: &Instance, sigma2: f64, alpha_scale: f64, alpha: Option<f64>) -> PyResult<f64> {
    let p = bounds::theorem1_bound(&instance.inner, sigma2, &policy(alpha_scale, alpha)?, &Tolerances::default())
        .map_err(py_err)?;
    Ok(p.bound)
}

/// Bound at each 1/sigma^2 value given in dB.
#[pyfunction]
#[pyo3(signature = (instance, grid_db, alpha_scale=0.5))]
fn bound_curve(instance: &Instance, grid_db: Vec<f64>, alpha_scale: f64) -> PyResult<Vec<f64>> {
    let rows = experiments::sweep_bound(&instance.inner, &grid_db, &policy(alpha_scale, None)?, &Tolerances::default())
        .map_err(py_err)?;
    Ok(rows.iter().map(|r| r.bound.bound).collect())
}

/// Monte Carlo error of the mismatched classifier: `(error, std_error)`.
#[pyfunction]
#[pyo3(signature = (instance, sigma2, trials=100_000, seed=0, matched=false))]
fn monte_carlo(py: Python<'_>, instance: &Instance, sigma2: f64, trials: u64, seed: u64, matched: bool) -> PyResult<(f64, f64)> {
    let inst = &instance.inner;
    let est = py
        .detach(|| {
            if matched {
                classifier::monte_carlo_error_matched(inst, sigma2, trials, seed)
            } else {
                classifier::monte_carlo_error(inst, sigma2, trials, seed)
            }
        })
        .map_err(py_err)?;
    Ok((est.overall_error, est.std_error))
}

fn subspace_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Subspace> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n == 0 || k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("basis must be a nonempty rectangular list of rows"));
    }
    let m = Matrix::from_fn(n, k, |r, c| rows[r][c]);
    Subspace::from_spanning(&m).map_err(py_err)
}

/// Principal-angle cosines (descending) between the column spans of two
/// bases given as lists of rows; also returns `(d_max, d_min)`.
#[pyfunction]
fn principal_angles(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64, f64)> {
    let (ua, ub) = (subspace_from_rows(a)?, subspace_from_rows(b)?);
    let pa = subspace::principal_angles(&ua, &ub).map_err(py_err)?;
    let d_max = subspace::d_max(&ua, &ub).map_err(py_err)?;
    let d_min = subspace::d_min(&ua, &ub).map_err(py_err)?;
    Ok((pa.cosines, d_max, d_min))
}

#[pyfunction]
fn catalog_names() -> Vec<&'static str> {
    experiments::CATALOG_NAMES.to_vec()
}

#[pymodule]
fn pysubmis(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<Expansion>()?;
    m.add_function(wrap_pyfunction!(expand, m)?)?;
    m.add_function(wrap_pyfunction!(bound, m)?)?;
    m.add_function(wrap_pyfunction!(bound_curve, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(principal_angles, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    Ok(())
}
