//! Python bindings: the parameter lab, the simulator, and the trace
//! checkers, driven in-process. Structured results cross the boundary as
//! JSON strings; `json.loads` on the Python side gives plain dicts.

use ccreg::checker::check_all;
use ccreg::engine::{replay, run};
use ccreg::params::{
    beta_interval, gamma_interval, table1, validate_algo, validate_system, validate_table1_row,
    AlgoParams, SystemParams,
};
use ccreg::rational::{parse_rational, Rat};
use ccreg::report::build_report;
use ccreg::scenarios::{presets, ScenarioConfig};
use ccreg::trace::Trace;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter};

fn val_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn rat(s: &str, what: &str) -> PyResult<Rat> {
    Rat::parse(s).map_err(|e| val_err(format!("bad {what}: {e}")))
}

/// Validate system and (optionally) algorithm parameters. Rationals are
/// decimal or `n/d` strings. Returns the validation report as JSON.
#[pyfunction]
#[pyo3(signature = (alpha, delta, n_min, gamma=None, beta=None, eps="0.001"))]
fn validate_params(
    alpha: &str,
    delta: &str,
    n_min: u64,
    gamma: Option<&str>,
    beta: Option<&str>,
    eps: &str,
) -> PyResult<String> {
    let system =
        SystemParams::new(rat(alpha, "alpha")?, rat(delta, "delta")?, n_min, 1000).map_err(val_err)?;
    let eps = parse_rational(eps).map_err(val_err)?;
    let report = match (gamma, beta) {
        (Some(g), Some(b)) => {
            let algo = AlgoParams::new(rat(g, "gamma")?, rat(b, "beta")?).map_err(val_err)?;
            validate_algo(&system, &algo, &eps).map_err(val_err)?
        }
        (None, None) => validate_system(&system).map_err(val_err)?,
        _ => return Err(val_err("gamma and beta go together")),
    };
    serde_json::to_string(&report).map_err(run_err)
}

/// Feasible join-bound and quorum-bound intervals as JSON, with exact
/// rational endpoints and float renderings.
#[pyfunction]
fn feasible_intervals(alpha: &str, delta: &str, n_min: u64) -> PyResult<String> {
    let system =
        SystemParams::new(rat(alpha, "alpha")?, rat(delta, "delta")?, n_min, 1000).map_err(val_err)?;
    let g = gamma_interval(&system).map_err(val_err)?;
    let b = beta_interval(&system.alpha.0, &system.delta.0);
    let json = serde_json::json!({
        "gamma": g,
        "gamma_float": [ccreg::rational::to_f64(&g.lo.0), ccreg::rational::to_f64(&g.hi.0)],
        "beta": b,
        "beta_float": [ccreg::rational::to_f64(&b.lo.0), ccreg::rational::to_f64(&b.hi.0)],
    });
    serde_json::to_string(&json).map_err(run_err)
}

/// The built-in known-good parameter rows with their validation reports
/// (at the given tolerance), as JSON.
#[pyfunction]
#[pyo3(signature = (eps="0.001"))]
fn table1_rows(eps: &str) -> PyResult<String> {
    let eps = parse_rational(eps).map_err(val_err)?;
    let mut rows = Vec::new();
    for row in table1() {
        let report = validate_table1_row(&row, &eps).map_err(val_err)?;
        rows.push(serde_json::json!({ "row": row, "valid": report.valid, "report": report }));
    }
    serde_json::to_string(&rows).map_err(run_err)
}

#[pyfunction]
fn preset_names() -> Vec<String> {
    presets::NAMES.iter().map(|s| s.to_string()).collect()
}

/// A built-in scenario configuration as JSON, ready to edit or feed to
/// `SimTrace.run`.
#[pyfunction]
#[pyo3(signature = (name, seed=0))]
fn preset_config(name: &str, seed: u64) -> PyResult<String> {
    let cfg = presets::by_name(name, seed)
        .ok_or_else(|| val_err(format!("unknown preset {name}; have {:?}", presets::NAMES)))?;
    serde_json::to_string_pretty(&cfg).map_err(run_err)
}

/// A recorded simulation run.
#[pyclass]
struct SimTrace {
    inner: Trace,
}

#[pymethods]
impl SimTrace {
    /// Run a scenario from its JSON configuration.
    #[staticmethod]
    fn run(config_json: &str) -> PyResult<SimTrace> {
        let cfg: ScenarioConfig = serde_json::from_str(config_json).map_err(val_err)?;
        let trace = run(&cfg).map_err(run_err)?;
        Ok(SimTrace { inner: trace })
    }

    /// Run a built-in scenario.
    #[staticmethod]
    #[pyo3(signature = (name, seed=0))]
    fn run_preset(name: &str, seed: u64) -> PyResult<SimTrace> {
        let cfg = presets::by_name(name, seed)
            .ok_or_else(|| val_err(format!("unknown preset {name}")))?;
        let trace = run(&cfg).map_err(run_err)?;
        Ok(SimTrace { inner: trace })
    }

    /// Load a trace from a JSONL file.
    #[staticmethod]
    fn read(path: &str) -> PyResult<SimTrace> {
        let f = File::open(path).map_err(run_err)?;
        let trace = Trace::read_jsonl(BufReader::new(f)).map_err(run_err)?;
        Ok(SimTrace { inner: trace })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(run_err)?;
        self.inner.write_jsonl(BufWriter::new(f)).map_err(run_err)
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    fn record_count(&self) -> usize {
        self.inner.records.len()
    }

    fn config_hash(&self) -> String {
        self.inner.header.config_hash.clone()
    }

    /// Run every checker; returns `(exit_code, report_json)` where the
    /// code is 0 pass, 2 fail, 3 not fully checked.
    #[pyo3(signature = (bruteforce_cap=8))]
    fn check(&self, bruteforce_cap: usize) -> PyResult<(i32, String)> {
        let report = check_all(&self.inner, bruteforce_cap).map_err(run_err)?;
        let json = serde_json::to_string(&report).map_err(run_err)?;
        Ok((report.exit_code(), json))
    }

    /// Latency and count summary as JSON.
    fn report(&self) -> PyResult<String> {
        serde_json::to_string(&build_report(&self.inner, None)).map_err(run_err)
    }

    /// Re-execute the recorded schedule and verify the trace reproduces
    /// itself exactly.
    fn replay_closes(&self) -> bool {
        replay(&self.inner).map(|regen| regen == self.inner).unwrap_or(false)
    }
}

#[pymodule]
fn ccreg_sim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate_params, m)?)?;
    m.add_function(wrap_pyfunction!(feasible_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(table1_rows, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_class::<SimTrace>()?;
    Ok(())
}
