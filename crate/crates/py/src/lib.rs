//! Python bindings. Structured results (reports, summaries) cross the
//! boundary as JSON and are decoded with the standard `json` module.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ardnet_core as core;
use core::ard::{compute_ard, ArdVector, Norm};
use core::dynamics::{sample_network, SweepConfig};
use core::experiment::{resolve_query_set, run_experiment as run_core_experiment, ExperimentConfig, Preset, Study as CoreStudy};
use core::meanfield::{log_c_mf, MeanFieldOptions};
use core::oracle::log_c_exact;
use core::sampler::{credible_interval, run_chain, TraceFilter};
use core::validate::{oracle_validate as core_oracle_validate, Suite};
use core::{CovariateTable, Theta};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

fn err(e: core::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn from_json<'py>(py: Python<'py>, s: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (s,))
}

fn to_json(value: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// A directed network on `n` nodes without self-links.
#[pyclass(module = "ardnet", from_py_object)]
#[derive(Clone)]
struct Network {
    inner: core::Network,
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (n, edges = Vec::new()))]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Network {
            inner: core::Network::from_edges(n, &edges).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn has_link(&self, i: usize, j: usize) -> PyResult<bool> {
        let n = self.inner.n();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("node index out of range for n = {n}")));
        }
        Ok(self.inner.has_link(i, j))
    }

    fn link_count(&self) -> usize {
        self.inner.link_count()
    }

    fn __len__(&self) -> usize {
        self.inner.link_count()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Network(n={}, links={})", self.inner.n(), self.inner.link_count())
    }
}

/// A resolved study: model, covariates, query set and sampler defaults.
#[pyclass(module = "ardnet")]
struct Study {
    inner: CoreStudy,
    seed: u64,
}

impl Study {
    fn theta(&self, theta: Option<Vec<f64>>) -> PyResult<Theta> {
        let flat = theta.unwrap_or_else(|| self.inner.theta_true.clone());
        Theta::from_flat(&self.inner.model, &flat).map_err(err)
    }

    fn check(&self, g: &Network) -> PyResult<()> {
        if g.inner.n() != self.inner.x.n() {
            return Err(PyValueError::new_err(format!(
                "network has {} nodes, study has {}",
                g.inner.n(),
                self.inner.x.n()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl Study {
    /// `covariates` maps attribute names to per-node values and replaces the
    /// synthetic ages.
    #[new]
    #[pyo3(signature = (preset = "design1", n = 15, queries = None, covariates = None, seed = 0))]
    fn new(
        preset: &str,
        n: usize,
        queries: Option<String>,
        covariates: Option<BTreeMap<String, Vec<f64>>>,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = ExperimentConfig::for_preset(preset.parse::<Preset>().map_err(err)?);
        cfg.n = n;
        cfg.query_set = queries;
        cfg.seed = seed;
        let mut inner = cfg.resolve().map_err(err)?;
        if let Some(cols) = covariates {
            let rows = cols.values().next().map_or(0, Vec::len);
            let mut x = CovariateTable::new(rows);
            for (name, values) in cols {
                x.insert(&name, values).map_err(err)?;
            }
            core::BoundModel::new(&inner.model, &x).map_err(err)?;
            core::ard::BoundQuerySet::new(&inner.queries, &x).map_err(err)?;
            inner.x = x;
        }
        Ok(Study { inner, seed })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.x.n()
    }

    #[getter]
    fn theta_true(&self) -> Vec<f64> {
        self.inner.theta_true.clone()
    }

    #[getter]
    fn coordinate_names(&self) -> Vec<String> {
        self.inner.coordinate_names.clone()
    }

    #[getter]
    fn query_names(&self) -> Vec<String> {
        self.inner.queries.queries().iter().map(|q| q.name.clone()).collect()
    }

    fn covariate(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.x.get(name).map_err(err)?.to_vec())
    }

    /// Draws a network from the stationary law by Glauber sweeps.
    #[pyo3(signature = (theta = None, sweeps = 200, seed = None))]
    fn simulate(&self, py: Python<'_>, theta: Option<Vec<f64>>, sweeps: usize, seed: Option<u64>) -> PyResult<Network> {
        let theta = self.theta(theta)?;
        let cfg = SweepConfig::new(sweeps, seed.unwrap_or(self.seed));
        let s = &self.inner;
        let g = py.detach(|| sample_network(&s.x, &s.model, &theta, &cfg)).map_err(err)?;
        Ok(Network { inner: g })
    }

    /// Respondent-major answers to the study's query set.
    fn ard(&self, network: &Network) -> PyResult<Vec<u32>> {
        self.check(network)?;
        Ok(compute_ard(&network.inner, &self.inner.x, &self.inner.queries).map_err(err)?.values)
    }

    #[pyo3(signature = (network, theta = None))]
    fn potential(&self, network: &Network, theta: Option<Vec<f64>>) -> PyResult<f64> {
        self.check(network)?;
        core::model::potential(&network.inner, &self.inner.x, &self.inner.model, &self.theta(theta)?).map_err(err)
    }

    /// Mean-field lower bound on the log normalizing constant.
    #[pyo3(signature = (theta = None))]
    fn log_c_mf(&self, theta: Option<Vec<f64>>) -> PyResult<f64> {
        let theta = self.theta(theta)?;
        let lc = log_c_mf(&self.inner.x, &self.inner.model, &theta, &MeanFieldOptions::default()).map_err(err)?;
        if !lc.converged {
            return Err(PyRuntimeError::new_err("mean-field iteration did not converge"));
        }
        Ok(lc.value)
    }

    /// Exact log normalizing constant by enumeration (n <= 5).
    #[pyo3(signature = (theta = None))]
    fn log_c_exact(&self, theta: Option<Vec<f64>>) -> PyResult<f64> {
        log_c_exact(&self.inner.x, &self.inner.model, &self.theta(theta)?).map_err(err)
    }

    /// Runs the posterior sampler on observed answers `psi0` and returns a
    /// dict with the trace, per-round diagnostics and credible intervals.
    #[pyo3(signature = (psi0, rounds = None, draws = None, delta0 = None, sweeps = None, norm = None, seed = None, level = 0.9))]
    #[allow(clippy::too_many_arguments)]
    fn estimate<'py>(
        &self,
        py: Python<'py>,
        psi0: Vec<u32>,
        rounds: Option<usize>,
        draws: Option<usize>,
        delta0: Option<f64>,
        sweeps: Option<usize>,
        norm: Option<&str>,
        seed: Option<u64>,
        level: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let s = &self.inner;
        let psi0 = ArdVector {
            respondents: s.x.n(),
            questions: s.queries.len(),
            values: psi0,
        };
        let mut cfg = s.sampler.clone();
        cfg.rounds = rounds.unwrap_or(cfg.rounds);
        cfg.draws_per_round = draws.unwrap_or(cfg.draws_per_round);
        cfg.delta0 = delta0.or(cfg.delta0);
        cfg.sweeps_per_proposal = sweeps.unwrap_or(cfg.sweeps_per_proposal);
        if let Some(nm) = norm {
            cfg.norm = nm.parse::<Norm>().map_err(err)?;
        }
        cfg.rng_seed = seed.unwrap_or(self.seed);
        let (chain, ci) = py
            .detach(|| {
                let chain = run_chain(&psi0, &s.x, &s.model, &s.queries, &cfg)?;
                let filter = TraceFilter {
                    burn_in_rounds: cfg.burn_in(),
                    drop_rounds: chain.flagged_rounds.clone(),
                    feasible_only: true,
                };
                let ci = credible_interval(&chain.records, level, &filter)?;
                Ok((chain, ci))
            })
            .map_err(err)?;
        let out = serde_json::json!({
            "coordinate_names": s.coordinate_names,
            "theta": chain.records.iter().map(|r| &r.theta).collect::<Vec<_>>(),
            "delta": chain.records.iter().map(|r| r.delta).collect::<Vec<_>>(),
            "accepted": chain.records.iter().map(|r| r.accepted).collect::<Vec<_>>(),
            "ard_distance": chain.records.iter().map(|r| r.ard_distance).collect::<Vec<_>>(),
            "round_delta": chain.round_delta,
            "round_acceptance": chain.round_acceptance,
            "flagged_rounds": chain.flagged_rounds,
            "meanfield_failures": chain.meanfield_failures,
            "delta0": chain.delta0,
            "interval": ci,
        });
        from_json(py, &to_json(&out)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Study(n={}, queries={:?}, coordinates={:?})",
            self.inner.x.n(),
            self.inner.query_name,
            self.inner.coordinate_names
        )
    }
}

/// Cross-checks against exhaustive enumeration; returns the report dict.
#[pyfunction]
#[pyo3(signature = (suite, seed = 0))]
fn oracle_validate<'py>(py: Python<'py>, suite: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let suite: Suite = suite.parse().map_err(err)?;
    let report = py.detach(|| core_oracle_validate(suite, seed)).map_err(err)?;
    from_json(py, &to_json(&report)?)
}

/// Runs a simulation study from a JSON config string; artifacts are
/// written when `out_dir` is given. Returns the summary dict.
#[pyfunction]
#[pyo3(signature = (config = "{}", out_dir = None))]
fn run_experiment<'py>(py: Python<'py>, config: &str, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(config).map_err(err)?;
    let report = py.detach(|| run_core_experiment(&cfg, out_dir.as_deref())).map_err(err)?;
    from_json(py, &report.summary.to_json())
}

/// A query set (builtin name or JSON file) as a JSON string.
#[pyfunction]
fn export_queries(name: &str) -> PyResult<String> {
    Ok(resolve_query_set(name).map_err(err)?.to_json())
}

#[pymodule(name = "ardnet")]
fn ardnet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<Study>()?;
    m.add_function(wrap_pyfunction!(oracle_validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(export_queries, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
