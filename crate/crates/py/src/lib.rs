//! Python bindings: case loading, the end-to-end equilibrium run, the
//! merit-order oracle, and the study sweeps.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trimarket::case::{coupling_map, parse_case, validate, MarketCase, TimeStructure};
use trimarket::kkt::Mode;
use trimarket::solver::adapter_from_config;
use trimarket::study::{
    run_single, rows_to_json, solution_to_json, study_cap_sweep, study_clearing_time,
    study_retrofit, sweep_demand, RetrofitStrategy,
};
use trimarket::verify::merit_order_cem;

fn runtime_err(e: trimarket::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "proposed" => Ok(Mode::Proposed),
        "cap-and-trade" => Ok(Mode::CapAndTrade),
        other => Err(PyValueError::new_err(format!(
            "unknown mode `{other}` (expected `proposed` or `cap-and-trade`)"
        ))),
    }
}

/// A parsed and validated market case.
#[pyclass(name = "MarketCase", skip_from_py_object)]
#[derive(Clone)]
struct PyMarketCase {
    inner: MarketCase,
}

#[pymethods]
impl PyMarketCase {
    /// (errors, warnings) from the domain validator.
    fn validate(&self) -> (Vec<String>, Vec<String>) {
        let report = validate(&self.inner);
        (report.errors, report.warnings)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.time.horizon
    }

    #[getter]
    fn clearing_scalar(&self) -> usize {
        self.inner.time.clearing_scalar
    }

    fn generator_ids(&self) -> Vec<String> {
        self.inner.generators().iter().map(|g| g.id.clone()).collect()
    }
}

/// One computed equilibrium with its verification verdict.
#[pyclass(name = "Equilibrium")]
struct PyEquilibrium {
    #[pyo3(get)]
    status: String,
    #[pyo3(get)]
    verified: bool,
    #[pyo3(get)]
    carbon_prices: Vec<f64>,
    #[pyo3(get)]
    avg_electricity_price: f64,
    #[pyo3(get)]
    avg_gas_price: f64,
    #[pyo3(get)]
    avg_carbon_price: f64,
    #[pyo3(get)]
    total_emission: f64,
    #[pyo3(get)]
    emissions_per_hour: Vec<f64>,
    solution_json: String,
}

#[pymethods]
impl PyEquilibrium {
    /// Full structured solution (dispatch, prices per entity) as JSON.
    fn solution_json(&self) -> &str {
        &self.solution_json
    }
}

/// Parse a case document from a JSON string.
#[pyfunction]
fn load_case(text: &str) -> PyResult<PyMarketCase> {
    let case = parse_case(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyMarketCase { inner: case })
}

/// Parse a case document from a file path.
#[pyfunction]
fn load_case_file(path: &str) -> PyResult<PyMarketCase> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PyValueError::new_err(format!("cannot read {path}: {e}")))?;
    load_case(&text)
}

/// Solve the equilibrium of a case; raises RuntimeError when infeasible.
#[pyfunction]
#[pyo3(signature = (case, mode = "proposed"))]
fn run(py: Python<'_>, case: &PyMarketCase, mode: &str) -> PyResult<PyEquilibrium> {
    let mode = parse_mode(mode)?;
    let case = case.inner.clone();
    let outcome = py
        .detach(|| {
            let adapter = adapter_from_config(&case.solver)?;
            run_single(&case, mode, adapter.as_ref())
        })
        .map_err(runtime_err)?;
    Ok(PyEquilibrium {
        status: outcome.row.status.clone(),
        verified: outcome.verification.pass,
        carbon_prices: outcome.solution.carbon_price.clone(),
        avg_electricity_price: outcome.solution.average_electricity_price(),
        avg_gas_price: outcome.solution.average_gas_price(),
        avg_carbon_price: outcome.solution.average_carbon_price(),
        total_emission: outcome.solution.total_emission(),
        emissions_per_hour: outcome.solution.emissions_per_hour.clone(),
        solution_json: solution_to_json(&case, &outcome.solution).to_string(),
    })
}

/// Merit-order clearing prices per period.
///
/// `offers` are (id, amount, cost) triples already scaled to the period
/// length; `demand` is the exogenous requirement per period.
#[pyfunction]
fn merit_order_prices(
    emissions: Vec<f64>,
    offers: Vec<(String, f64, f64)>,
    demand: f64,
    unmet_penalty: f64,
) -> PyResult<Vec<f64>> {
    let clearing =
        merit_order_cem(&emissions, &offers, demand, unmet_penalty).map_err(runtime_err)?;
    Ok(clearing.into_iter().map(|p| p.price).collect())
}

/// Hour-to-period map (1-indexed periods) for a clearing scalar.
#[pyfunction]
fn hour_to_period(horizon: usize, clearing_scalar: usize) -> PyResult<Vec<usize>> {
    coupling_map(&TimeStructure { horizon, clearing_scalar })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Demand-growth sweep; returns the study rows as a JSON string.
#[pyfunction]
#[pyo3(signature = (case, growths, mode = "proposed"))]
fn sweep_demand_json(
    py: Python<'_>,
    case: &PyMarketCase,
    growths: Vec<f64>,
    mode: &str,
) -> PyResult<String> {
    let mode = parse_mode(mode)?;
    let case = case.inner.clone();
    let rows = py
        .detach(|| sweep_demand(&case, &growths, mode))
        .map_err(runtime_err)?;
    Ok(rows_to_json(&rows).to_string())
}

/// Clearing-time study; returns the study rows as a JSON string.
#[pyfunction]
#[pyo3(signature = (case, scalars, mode = "proposed"))]
fn clearing_time_json(
    py: Python<'_>,
    case: &PyMarketCase,
    scalars: Vec<usize>,
    mode: &str,
) -> PyResult<String> {
    let mode = parse_mode(mode)?;
    let case = case.inner.clone();
    let rows = py
        .detach(|| study_clearing_time(&case, &scalars, mode))
        .map_err(runtime_err)?;
    Ok(rows_to_json(&rows).to_string())
}

/// Retrofit study from a strategies JSON document.
#[pyfunction]
#[pyo3(signature = (case, strategies_json, mode = "proposed"))]
fn retrofit_json(
    py: Python<'_>,
    case: &PyMarketCase,
    strategies_json: &str,
    mode: &str,
) -> PyResult<String> {
    let mode = parse_mode(mode)?;
    let strategies: Vec<RetrofitStrategy> = serde_json::from_str(strategies_json)
        .map_err(|e| PyValueError::new_err(format!("bad strategies document: {e}")))?;
    let case = case.inner.clone();
    let rows = py
        .detach(|| study_retrofit(&case, &strategies, mode))
        .map_err(runtime_err)?;
    Ok(rows_to_json(&rows).to_string())
}

/// Allowance-total sweep; returns the study rows as a JSON string.
#[pyfunction]
#[pyo3(signature = (case, totals, mode = "proposed"))]
fn cap_sweep_json(
    py: Python<'_>,
    case: &PyMarketCase,
    totals: Vec<f64>,
    mode: &str,
) -> PyResult<String> {
    let mode = parse_mode(mode)?;
    let case = case.inner.clone();
    let rows = py
        .detach(|| study_cap_sweep(&case, &totals, mode))
        .map_err(runtime_err)?;
    Ok(rows_to_json(&rows).to_string())
}

#[pymodule]
fn trimarket_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarketCase>()?;
    m.add_class::<PyEquilibrium>()?;
    m.add_function(wrap_pyfunction!(load_case, m)?)?;
    m.add_function(wrap_pyfunction!(load_case_file, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(merit_order_prices, m)?)?;
    m.add_function(wrap_pyfunction!(hour_to_period, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_demand_json, m)?)?;
    m.add_function(wrap_pyfunction!(clearing_time_json, m)?)?;
    m.add_function(wrap_pyfunction!(retrofit_json, m)?)?;
    m.add_function(wrap_pyfunction!(cap_sweep_json, m)?)?;
    Ok(())
}
