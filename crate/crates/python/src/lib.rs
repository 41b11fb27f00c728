//! Python bindings: `import pysosnorm`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sosnorm::verify::{check_sandwich_with, constant_asymptotics, CheckOptions};
use sosnorm::{BodySpec, BuildOptions, Error, NormApproximant};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::NotConverged { .. } | Error::Io(_) => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn json_err(err: serde_json::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// A convex body given by generators of its polar.
#[pyclass(name = "Body", module = "pysosnorm", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyBody {
    inner: BodySpec,
}

#[pymethods]
impl PyBody {
    #[staticmethod]
    fn l1(d: usize) -> PyResult<Self> {
        Ok(PyBody {
            inner: sosnorm::make_l1(d).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn linf(d: usize) -> PyResult<Self> {
        Ok(PyBody {
            inner: sosnorm::make_linf(d).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (d, p, samples=256, seed=0))]
    fn lp_sampled(d: usize, p: f64, samples: usize, seed: u64) -> PyResult<Self> {
        Ok(PyBody {
            inner: sosnorm::make_lp_sampled(d, p, samples, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (points, symmetric=true))]
    fn from_polar_vertices(points: Vec<Vec<f64>>, symmetric: bool) -> PyResult<Self> {
        Ok(PyBody {
            inner: sosnorm::from_polar_vertices(points, symmetric).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: BodySpec = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(to_py)?;
        Ok(PyBody { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn label(&self) -> &str {
        &self.inner.label
    }

    #[getter]
    fn symmetric(&self) -> bool {
        self.inner.is_symmetric()
    }

    #[getter]
    fn generators(&self) -> Vec<Vec<f64>> {
        self.inner.generators.clone()
    }

    fn exact_norm(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.exact_norm(&x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Body(label={:?}, d={}, generators={})",
            self.inner.label,
            self.inner.d,
            self.inner.generators.len()
        )
    }
}

/// Sum-of-squares approximant of a body's Minkowski functional.
#[pyclass(name = "Approximant", module = "pysosnorm", frozen)]
pub struct PyApproximant {
    inner: NormApproximant,
}

#[pymethods]
impl PyApproximant {
    #[staticmethod]
    #[pyo3(signature = (body, n, eps=1e-7, dim_cap=3000))]
    fn build(py: Python<'_>, body: &PyBody, n: usize, eps: f64, dim_cap: usize) -> PyResult<Self> {
        let opts = BuildOptions {
            eps,
            dim_cap,
            ..BuildOptions::default()
        };
        let spec = body.inner.clone();
        let inner = py.detach(|| sosnorm::build(&spec, n, opts)).map_err(to_py)?;
        Ok(PyApproximant { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyApproximant {
            inner: NormApproximant::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn sym_dim(&self) -> usize {
        self.inner.sym_dim()
    }

    #[getter]
    fn dim_d(&self) -> usize {
        self.inner.dim_d()
    }

    /// `(effective, theorem)` constants.
    #[getter]
    fn constants(&self) -> (f64, f64) {
        let c = self.inner.constants();
        (c.effective, c.theorem)
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w().to_vec()
    }

    #[getter]
    fn body(&self) -> PyBody {
        PyBody {
            inner: self.inner.body().clone(),
        }
    }

    fn gram(&self) -> Vec<Vec<f64>> {
        let g = self.inner.gram();
        g.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn eval_p(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval_p(&x).map_err(to_py)
    }

    fn eval_r(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval_r(&x).map_err(to_py)
    }

    /// `(lower, upper)` bounds on the Minkowski functional at `x`.
    fn norm_bounds(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let b = self.inner.norm_bounds(&x).map_err(to_py)?;
        Ok((b.lower, b.upper))
    }

    /// `[(exponents, coefficient), ...]` in grlex order.
    #[pyo3(signature = (cap=200_000))]
    fn expand(&self, cap: usize) -> PyResult<Vec<(Vec<u32>, f64)>> {
        let terms = self.inner.expand_monomials_capped(cap).map_err(to_py)?;
        Ok(terms.into_iter().map(|(a, c)| (a.exponents().to_vec(), c)).collect())
    }

    /// Rows `f_k` with `p(x) = sum_k <f_k, veronese(x)>^2`.
    fn sos_factor(&self) -> Vec<Vec<f64>> {
        self.inner.sos_factor()
    }

    /// Runs the sandwich check against the stored body; returns report JSON.
    #[pyo3(signature = (m=10_000, seed=0, tol=1e-7, parallel=true))]
    fn check_sandwich(&self, py: Python<'_>, m: usize, seed: u64, tol: f64, parallel: bool) -> PyResult<String> {
        let opts = CheckOptions { tol, parallel };
        let report = py
            .detach(|| check_sandwich_with(&self.inner, self.inner.body(), m, seed, opts))
            .map_err(to_py)?;
        serde_json::to_string(&report).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Approximant(d={}, n={}, dim_D={}, sym_dim={})",
            self.inner.d(),
            self.inner.n(),
            self.inner.dim_d(),
            self.inner.sym_dim()
        )
    }
}

#[pyfunction]
fn sym_dim(d: usize, n: usize) -> PyResult<usize> {
    sosnorm::sym_dim(d, n).map_err(to_py)
}

#[pyfunction]
fn multi_indices(d: usize, n: usize) -> PyResult<Vec<Vec<u32>>> {
    Ok(sosnorm::multi_indices(d, n)
        .map_err(to_py)?
        .into_iter()
        .map(|a| a.exponents().to_vec())
        .collect())
}

#[pyfunction]
fn veronese(x: Vec<f64>, n: usize) -> PyResult<Vec<f64>> {
    Ok(sosnorm::veronese(&x, n).map_err(to_py)?.coords)
}

/// Worst-case constant and its asymptotic estimates, as JSON.
#[pyfunction]
fn constants(n: usize, d: usize) -> PyResult<String> {
    let report = constant_asymptotics(n, d).map_err(to_py)?;
    serde_json::to_string(&report).map_err(json_err)
}

#[pymodule]
fn pysosnorm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBody>()?;
    m.add_class::<PyApproximant>()?;
    m.add_function(wrap_pyfunction!(sym_dim, m)?)?;
    m.add_function(wrap_pyfunction!(multi_indices, m)?)?;
    m.add_function(wrap_pyfunction!(veronese, m)?)?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    Ok(())
}
