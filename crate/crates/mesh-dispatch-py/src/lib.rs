//! Python bindings: cases, decentralized runs, the centralized reference,
//! and the graph contraction certificate, exposed as plain classes with
//! scalar/tuple/list fields so results drop straight into Python tooling.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mesh_dispatch::admm::{self, RunConfig};
use mesh_dispatch::analysis::{self, DEFINITENESS_THRESHOLD};
use mesh_dispatch::casegen::{self, CaseRanges, CaseStudy};
use mesh_dispatch::error::Error;
use mesh_dispatch::network::metropolis_weights;
use mesh_dispatch::oracle;

fn to_py(err: Error) -> PyErr {
    match &err {
        Error::InvalidModel(_)
        | Error::InvalidTopology(_)
        | Error::InvalidConfig(_)
        | Error::Infeasible(_) => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

/// A coordination scenario: topology, hub parameters, settlement price,
/// and run defaults.
#[pyclass(frozen, name = "Case", module = "mesh_dispatch_py")]
struct PyCase {
    inner: CaseStudy,
}

#[pymethods]
impl PyCase {
    #[getter]
    fn hub_count(&self) -> usize {
        self.inner.hubs.len()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.topology.edges().to_vec()
    }

    #[getter]
    fn zeta(&self) -> (f64, f64) {
        (self.inner.zeta.zeta_e, self.inner.zeta.zeta_g)
    }

    /// The scenario as a JSON document.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner)
            .map_err(|err| PyRuntimeError::new_err(err.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Case(hubs={}, edges={})",
            self.inner.hubs.len(),
            self.inner.topology.edges().len()
        )
    }
}

/// Outcome of one decentralized run.
#[pyclass(frozen, name = "RunResult", module = "mesh_dispatch_py")]
struct PyRunResult {
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    first_eps_iteration: Option<usize>,
    /// Global objective per round.
    #[pyo3(get)]
    welfare: Vec<f64>,
    /// Aggregate `(electricity, gas)` mismatch per round.
    #[pyo3(get)]
    mismatch: Vec<(f64, f64)>,
    /// `max_i |mu_i - mean(mu)|` per round.
    #[pyo3(get)]
    mu_spread: Vec<f64>,
    /// `max_i |e_i|` per round.
    #[pyo3(get)]
    e_norm_max: Vec<f64>,
    /// Worst conservation residual over the whole run.
    #[pyo3(get)]
    lemma1_max: f64,
    /// Final per-node `(r_e, r_g, s_e, s_g, d_e, d_g, alpha)`.
    #[pyo3(get)]
    allocations: Vec<(f64, f64, f64, f64, f64, f64, f64)>,
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult(converged={}, iterations={})",
            if self.converged { "True" } else { "False" },
            self.iterations
        )
    }
}

/// The centralized reference solution.
#[pyclass(frozen, name = "Reference", module = "mesh_dispatch_py")]
struct PyReference {
    #[pyo3(get)]
    f_star: f64,
    #[pyo3(get)]
    mu_star: (f64, f64),
    #[pyo3(get)]
    feasibility_residual: f64,
    #[pyo3(get)]
    dual_gap: f64,
    /// Per-node `(r_e, r_g, s_e, s_g, d_e, d_g, alpha)`.
    #[pyo3(get)]
    allocations: Vec<(f64, f64, f64, f64, f64, f64, f64)>,
}

#[pymethods]
impl PyReference {
    fn __repr__(&self) -> String {
        format!(
            "Reference(f_star={}, mu_star=({}, {}))",
            self.f_star, self.mu_star.0, self.mu_star.1
        )
    }
}

/// Outcome of the contraction certificate.
#[pyclass(frozen, name = "Certificate", module = "mesh_dispatch_py")]
struct PyCertificate {
    #[pyo3(get)]
    gamma_w1: f64,
    #[pyo3(get)]
    p_min_eig: Option<f64>,
    #[pyo3(get)]
    contraction_min_eig: Option<f64>,
    #[pyo3(get)]
    identity_residual: Option<f64>,
    #[pyo3(get)]
    verdict: bool,
}

#[pymethods]
impl PyCertificate {
    fn __repr__(&self) -> String {
        format!(
            "Certificate(verdict={}, gamma_w1={})",
            if self.verdict { "True" } else { "False" },
            self.gamma_w1
        )
    }
}

/// The built-in 14-bus case study.
#[pyfunction]
fn ieee14_case() -> PyCase {
    PyCase {
        inner: casegen::ieee14_case(),
    }
}

/// A random feasible-by-construction scenario with `n` hubs.
#[pyfunction]
fn random_case(n: usize, seed: u64) -> PyResult<PyCase> {
    let inner = casegen::random_case(n, seed, &CaseRanges::default()).map_err(to_py)?;
    Ok(PyCase { inner })
}

fn merged_config(
    case: &CaseStudy,
    rho: Option<f64>,
    epsilon: Option<f64>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    seed: Option<u64>,
    inner_tol: Option<f64>,
) -> RunConfig {
    let base = case.defaults;
    RunConfig {
        rho: rho.unwrap_or(base.rho),
        epsilon: epsilon.unwrap_or(base.epsilon),
        n_min: n_min.unwrap_or(base.n_min),
        n_max: n_max.unwrap_or(base.n_max),
        seed: seed.unwrap_or(base.seed),
        inner_tol: inner_tol.unwrap_or(base.inner_tol),
    }
}

/// Runs the decentralized iteration on a case; keyword arguments override
/// the case defaults.
#[pyfunction]
#[pyo3(signature = (case, *, rho=None, epsilon=None, n_min=None, n_max=None, seed=None, inner_tol=None))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    case: &PyCase,
    rho: Option<f64>,
    epsilon: Option<f64>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    seed: Option<u64>,
    inner_tol: Option<f64>,
) -> PyResult<PyRunResult> {
    let inner = &case.inner;
    let cfg = merged_config(inner, rho, epsilon, n_min, n_max, seed, inner_tol);
    let (trace, states) = py
        .detach(|| admm::run(&inner.hubs, &inner.topology, &cfg))
        .map_err(to_py)?;
    Ok(PyRunResult {
        converged: trace.converged,
        iterations: trace.iterations,
        first_eps_iteration: trace.first_eps_iteration,
        welfare: trace.records.iter().map(|rec| rec.welfare).collect(),
        mismatch: trace
            .records
            .iter()
            .map(|rec| (rec.mismatch.e, rec.mismatch.g))
            .collect(),
        mu_spread: trace.records.iter().map(|rec| rec.mu_spread).collect(),
        e_norm_max: trace.records.iter().map(|rec| rec.e_norm_max).collect(),
        lemma1_max: trace
            .records
            .iter()
            .map(|rec| rec.lemma1_residual)
            .fold(0.0, f64::max),
        allocations: states
            .iter()
            .map(|st| (st.r.e, st.r.g, st.s.e, st.s.g, st.d.e, st.d.g, st.alpha))
            .collect(),
    })
}

/// Solves the centralized reference problem for a case.
#[pyfunction]
#[pyo3(signature = (case, *, tol=1e-6))]
fn solve_centralized(py: Python<'_>, case: &PyCase, tol: f64) -> PyResult<PyReference> {
    let hubs = &case.inner.hubs;
    let sol = py
        .detach(|| oracle::solve_centralized(hubs, tol))
        .map_err(to_py)?;
    let allocations = sol
        .r_star
        .iter()
        .zip(sol.physical_allocations())
        .map(|(r, (s, d, alpha))| (r.e, r.g, s.e, s.g, d.e, d.g, alpha))
        .collect();
    Ok(PyReference {
        f_star: sol.f_star,
        mu_star: (sol.mu_star.e, sol.mu_star.g),
        feasibility_residual: sol.feasibility_residual,
        dual_gap: sol.dual_gap,
        allocations,
    })
}

/// Evaluates the contraction certificate for a case's communication graph.
#[pyfunction]
fn certificate(case: &PyCase) -> PyResult<PyCertificate> {
    let w = metropolis_weights(&case.inner.topology).map_err(to_py)?;
    let report = analysis::lyapunov_certificate(&w, DEFINITENESS_THRESHOLD).map_err(to_py)?;
    Ok(PyCertificate {
        gamma_w1: report.gamma_w1,
        p_min_eig: report.p_min_eig,
        contraction_min_eig: report.contraction_min_eig,
        identity_residual: report.identity_residual,
        verdict: report.verdict,
    })
}

#[pymodule]
fn mesh_dispatch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCase>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyReference>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(ieee14_case, m)?)?;
    m.add_function(wrap_pyfunction!(random_case, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(solve_centralized, m)?)?;
    m.add_function(wrap_pyfunction!(certificate, m)?)?;
    Ok(())
}
