//! Python bindings. Structured results cross the boundary as JSON strings;
//! the Python side decodes them with `json.loads`.

use std::path::PathBuf;

use dpsyn_core::pipeline::{self, PipelineConfig, WorkloadConfig};
use dpsyn_core::theory::{kl_divergence as kl, run_battery, BatteryConfig};
use dpsyn_core::{accountant, datagen, dataset, marginal, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_json(value: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn rho_to_epsilon(rho: f64, delta: f64) -> PyResult<f64> {
    accountant::rho_to_epsilon(rho, delta).map_err(py_err)
}

#[pyfunction]
fn epsilon_to_rho(epsilon: f64, delta: f64) -> PyResult<f64> {
    accountant::epsilon_to_rho(epsilon, delta).map_err(py_err)
}

/// Gaussian σ that spends exactly `rho` at the given L2 sensitivity.
#[pyfunction]
#[pyo3(signature = (rho, sensitivity = 1.0))]
fn sigma_for_rho(rho: f64, sensitivity: f64) -> PyResult<f64> {
    Ok(accountant::sigma_for_rho(rho, sensitivity).map_err(py_err)?.sigma)
}

#[pyfunction]
fn expected_l1_noise(cell_count: usize, sigma: f64) -> f64 {
    marginal::expected_l1_noise(cell_count, sigma)
}

#[pyfunction]
fn kl_divergence(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    kl(&p, &q).map_err(py_err)
}

/// Write one of the bundled datasets as `data.csv` plus `domain.json` into
/// `directory`. Names: chain, mixed, heavy.
#[pyfunction]
fn generate_dataset(name: &str, n: usize, seed: u64, directory: PathBuf) -> PyResult<()> {
    let ds = match name {
        "chain" => datagen::chain_correlated(n, seed),
        "mixed" => datagen::mixed_ten(n, seed),
        "heavy" => datagen::heavy_tailed(n, seed),
        other => return Err(PyValueError::new_err(format!("unknown dataset `{other}`"))),
    }
    .map_err(py_err)?;
    let write = || -> dpsyn_core::Result<()> {
        std::fs::create_dir_all(&directory)?;
        std::fs::write(directory.join("domain.json"), ds.domain().to_json()?)?;
        dataset::write_dataset(std::fs::File::create(directory.join("data.csv"))?, &ds)
    };
    write().map_err(py_err)
}

/// Run the full pipeline from a JSON config; returns the run report as JSON.
#[pyfunction]
fn run_pipeline(config_json: &str) -> PyResult<String> {
    let cfg = PipelineConfig::from_json(config_json).map_err(py_err)?;
    to_json(&pipeline::run_pipeline(&cfg).map_err(py_err)?)
}

#[pyfunction]
fn run_preprocess(config_json: &str) -> PyResult<String> {
    let cfg = PipelineConfig::from_json(config_json).map_err(py_err)?;
    to_json(&pipeline::run_preprocess(&cfg).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (synthetic, test, domain, artifacts = None, seed = 0))]
fn evaluate(synthetic: PathBuf, test: PathBuf, domain: PathBuf, artifacts: Option<PathBuf>, seed: u64) -> PyResult<String> {
    let report = pipeline::evaluate_files(&synthetic, &test, &domain, artifacts.as_deref(), &WorkloadConfig::default(), seed).map_err(py_err)?;
    to_json(&report)
}

#[pyfunction]
#[pyo3(signature = (lemma_instances = 1000, theorem_instances = 1000, seed = 0))]
fn verify_theory(lemma_instances: usize, theorem_instances: usize, seed: u64) -> PyResult<String> {
    let cfg = BatteryConfig {
        lemma_instances,
        theorem_instances,
        seed,
        ..BatteryConfig::default()
    };
    to_json(&run_battery(&cfg, kl).map_err(py_err)?)
}

#[pymodule]
fn dpsyn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(rho_to_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_to_rho, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_for_rho, m)?)?;
    m.add_function(wrap_pyfunction!(expected_l1_noise, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(run_preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_theory, m)?)?;
    Ok(())
}
