//! Python bindings: maps, instances, the solvers, restarts, validation, the
//! oracle and runtime tail statistics.

use std::sync::Arc;
use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mapf_rrr::analysis::{self, RuntimeSample};
use mapf_rrr::budget::StopSignal;
use mapf_rrr::campaign::build_solver;
use mapf_rrr::grid::{Cell, GridMap as CoreMap, VertexId};
use mapf_rrr::instance::{self, Highway, HighwayPolarity, KivaTemplate, MapfInstance};
use mapf_rrr::randomize::RandomizationPolicy;
use mapf_rrr::restart::{self, RestartSchedule, SolverSpec, TrialOutcome, TrialSolver};
use mapf_rrr::solution::{Path, Solution, SolveOutcome};
use mapf_rrr::MapfError;

fn py_err(e: MapfError) -> PyErr {
    match e {
        MapfError::Io(e) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

type Steps = Vec<Vec<(u32, u32)>>;

fn to_cells(map: &CoreMap, paths: &[Path]) -> Steps {
    paths
        .iter()
        .map(|p| {
            p.steps()
                .iter()
                .map(|&v| {
                    let c = map.cell(v);
                    (c.row, c.col)
                })
                .collect()
        })
        .collect()
}

fn from_cells(map: &CoreMap, paths: &Steps) -> PyResult<Vec<Path>> {
    paths
        .iter()
        .map(|p| {
            p.iter()
                .map(|&(r, c)| {
                    map.vertex_at(Cell::new(r, c))
                        .ok_or_else(|| PyValueError::new_err(format!("cell ({r},{c}) is blocked or out of bounds")))
                })
                .collect::<PyResult<Vec<VertexId>>>()
                .map(Path::raw)
        })
        .collect()
}

/// Grid map with `.` free and `@` blocked cells.
#[pyclass(frozen, skip_from_py_object, module = "mapf_rrr_py")]
#[derive(Clone)]
struct GridMap {
    inner: Arc<CoreMap>,
}

#[pymethods]
impl GridMap {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let inner = CoreMap::parse(text).map_err(py_err)?;
        Ok(GridMap { inner: Arc::new(inner) })
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    fn is_blocked(&self, row: u32, col: u32) -> bool {
        self.inner.is_blocked(Cell::new(row, col))
    }

    fn serialize(&self) -> String {
        self.inner.serialize()
    }

    fn __repr__(&self) -> String {
        format!("GridMap({}x{}, {} free)", self.inner.width(), self.inner.height(), self.inner.num_vertices())
    }
}

/// Agents with starts and goals on a map, plus an optional highway.
#[pyclass(frozen, skip_from_py_object, module = "mapf_rrr_py")]
#[derive(Clone)]
struct Instance {
    inner: Arc<MapfInstance>,
}

#[pymethods]
impl Instance {
    /// Builds an instance from map text, scenario CSV and optional highway CSV.
    #[staticmethod]
    #[pyo3(signature = (map, scenario, highway = None))]
    fn load(map: &GridMap, scenario: &str, highway: Option<&str>) -> PyResult<Self> {
        let mut inst = MapfInstance::load_scenario(scenario, map.inner.clone()).map_err(py_err)?;
        if let Some(text) = highway {
            inst.highway = Some(Highway::parse(text, &map.inner).map_err(py_err)?);
        }
        Ok(Instance { inner: Arc::new(inst) })
    }

    /// Kiva-like warehouse instance; `highway` is `None`, `"positive"` or `"negative"`.
    #[staticmethod]
    #[pyo3(signature = (agents, seed, highway = None, pod_rows = 4, pod_cols = 6, corridor_width = 1, open_margin = 4))]
    fn kiva(
        agents: usize,
        seed: u64,
        highway: Option<&str>,
        pod_rows: u32,
        pod_cols: u32,
        corridor_width: u32,
        open_margin: u32,
    ) -> PyResult<Self> {
        let t = KivaTemplate {
            pod_rows,
            pod_cols,
            corridor_width,
            open_margin,
        };
        let inst = instance::generate_kiva_instance(&t, agents, seed).map_err(py_err)?;
        let polarity = match highway {
            None => None,
            Some("positive") => Some(HighwayPolarity::Positive),
            Some("negative") => Some(HighwayPolarity::Negative),
            Some(other) => return Err(PyValueError::new_err(format!("unknown highway {other}"))),
        };
        let hwy = polarity.map(|p| instance::make_highway(&t, p)).transpose().map_err(py_err)?;
        Ok(Instance {
            inner: Arc::new(inst.with_highway(hwy)),
        })
    }

    #[getter]
    fn map(&self) -> GridMap {
        GridMap {
            inner: self.inner.map.clone(),
        }
    }

    #[getter]
    fn num_agents(&self) -> usize {
        self.inner.num_agents()
    }

    /// `(start, goal)` cell pairs in agent order.
    #[getter]
    fn agents(&self) -> Vec<((u32, u32), (u32, u32))> {
        let m = &self.inner.map;
        self.inner
            .agents
            .iter()
            .map(|a| {
                let (s, g) = (m.cell(a.start), m.cell(a.goal));
                ((s.row, s.col), (g.row, g.col))
            })
            .collect()
    }

    #[getter]
    fn has_highway(&self) -> bool {
        self.inner.highway.is_some()
    }

    fn save_scenario(&self) -> String {
        self.inner.save_scenario()
    }

    fn save_highway(&self) -> Option<String> {
        self.inner.highway.as_ref().map(|h| h.serialize(&self.inner.map))
    }

    fn __repr__(&self) -> String {
        format!("Instance({} agents on {})", self.inner.num_agents(), self.map().__repr__())
    }
}

/// Result of one solve or one restart run.
#[pyclass(frozen, get_all, module = "mapf_rrr_py")]
struct Outcome {
    status: String,
    cost: Option<u64>,
    runtime_ms: f64,
    expansions_high: u64,
    expansions_low: u64,
    /// Per-agent `(row, col)` steps when solved.
    paths: Option<Steps>,
    /// One dict per trial for restart runs, empty for single solves.
    trials: Vec<Py<PyDict>>,
}

#[pymethods]
impl Outcome {
    #[getter]
    fn solved(&self) -> bool {
        self.status == "solved"
    }

    fn __repr__(&self) -> String {
        format!("Outcome(status={:?}, cost={:?}, runtime_ms={:.3})", self.status, self.cost, self.runtime_ms)
    }
}

fn make_solver(
    inst: &MapfInstance,
    solver: &str,
    w: f64,
    inflation: f64,
    random: &str,
    bias_p: f64,
) -> PyResult<SolverSpec> {
    let policy = RandomizationPolicy::preset(random, bias_p).map_err(py_err)?;
    let spec = build_solver(solver, w, inflation, policy, inst.highway.clone()).map_err(py_err)?;
    spec.validate(inst).map_err(py_err)?;
    Ok(spec)
}

fn trial_dict<'py>(py: Python<'py>, o: &TrialOutcome) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", o.seed)?;
    d.set_item("status", o.status.as_str())?;
    d.set_item("runtime_ms", o.runtime.as_secs_f64() * 1000.0)?;
    d.set_item("cost", o.cost)?;
    d.set_item("expansions_high", o.expansions_high)?;
    d.set_item("expansions_low", o.expansions_low)?;
    Ok(d.unbind())
}

fn outcome_from_solve(map: &CoreMap, o: SolveOutcome) -> Outcome {
    Outcome {
        status: o.status.as_str().to_string(),
        cost: o.cost(),
        runtime_ms: o.runtime.as_secs_f64() * 1000.0,
        expansions_high: o.expansions_high,
        expansions_low: o.expansions_low,
        paths: o.solution.map(|s| to_cells(map, &s.paths)),
        trials: Vec::new(),
    }
}

/// Runs one solver once. `solver` is `cbs`, `ecbs`, `cbs_hwy`, `iecbs` or `mstar`.
#[pyfunction]
#[pyo3(signature = (instance, solver, w = 1.0, inflation = 1.0, budget_s = 60.0, seed = 0, random = "none", bias_p = 0.5))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    instance: &Instance,
    solver: &str,
    w: f64,
    inflation: f64,
    budget_s: f64,
    seed: u64,
    random: &str,
    bias_p: f64,
) -> PyResult<Outcome> {
    let inst = instance.inner.clone();
    let spec = make_solver(&inst, solver, w, inflation, random, bias_p)?;
    let budget = Duration::try_from_secs_f64(budget_s).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = py
        .detach(|| spec.solve(&inst, &StopSignal::after(budget), seed))
        .map_err(py_err)?;
    Ok(outcome_from_solve(&inst.map, out))
}

/// Rapid randomized restarts: `budget_s` divided evenly among `restarts` trials.
#[pyfunction]
#[pyo3(signature = (instance, solver, budget_s, restarts, seed = 0, w = 1.0, inflation = 1.0, random = "permute", bias_p = 0.5, parallel = false))]
#[allow(clippy::too_many_arguments)]
fn run_rrr(
    py: Python<'_>,
    instance: &Instance,
    solver: &str,
    budget_s: f64,
    restarts: usize,
    seed: u64,
    w: f64,
    inflation: f64,
    random: &str,
    bias_p: f64,
    parallel: bool,
) -> PyResult<Outcome> {
    let inst = instance.inner.clone();
    let spec = make_solver(&inst, solver, w, inflation, random, bias_p)?;
    let budget = Duration::try_from_secs_f64(budget_s).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut schedule = RestartSchedule::new(budget, restarts).map_err(py_err)?;
    if parallel {
        schedule = schedule.parallel(restarts);
    }
    let result = py
        .detach(|| restart::run_rrr(&inst, &spec, &schedule, seed))
        .map_err(py_err)?;
    let trials = result
        .outcomes
        .iter()
        .map(|o| trial_dict(py, o))
        .collect::<PyResult<Vec<_>>>()?;
    let runtime: Duration = result.outcomes.iter().map(|o| o.runtime).sum();
    Ok(Outcome {
        status: result.status.as_str().to_string(),
        cost: result.solution.as_ref().map(Solution::cost),
        runtime_ms: runtime.as_secs_f64() * 1000.0,
        expansions_high: result.outcomes.iter().map(|o| o.expansions_high).sum(),
        expansions_low: result.outcomes.iter().map(|o| o.expansions_low).sum(),
        paths: result.solution.map(|s| to_cells(&inst.map, &s.paths)),
        trials,
    })
}

/// Checks paths (lists of `(row, col)`) against the instance.
#[pyfunction]
fn validate<'py>(py: Python<'py>, instance: &Instance, paths: Steps) -> PyResult<Bound<'py, PyDict>> {
    let paths = from_cells(&instance.inner.map, &paths)?;
    let report = analysis::validate(&instance.inner, &paths).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("valid", report.is_solution())?;
    d.set_item("cost", report.cost)?;
    d.set_item("conflicts", report.conflicts.iter().map(|c| c.to_string()).collect::<Vec<_>>())?;
    d.set_item(
        "defects",
        report
            .defects
            .iter()
            .map(|(a, d)| format!("agent {a}: {d:?}"))
            .collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Exact optimal sum of travel times for tiny instances, `None` if infeasible.
#[pyfunction]
#[pyo3(signature = (instance, horizon = None))]
fn oracle_optimal(py: Python<'_>, instance: &Instance, horizon: Option<u64>) -> PyResult<Option<u64>> {
    let inst = instance.inner.clone();
    let horizon = horizon.unwrap_or((inst.map.num_vertices() * inst.num_agents()) as u64);
    py.detach(|| analysis::oracle_optimal(&inst, horizon)).map_err(py_err)
}

/// Median, MAD, survival curve and tail fit of runtimes in milliseconds.
/// `censored[i]` marks runs that hit their budget.
#[pyfunction]
#[pyo3(signature = (runtimes_ms, censored = None))]
fn tail_stats<'py>(py: Python<'py>, runtimes_ms: Vec<f64>, censored: Option<Vec<bool>>) -> PyResult<Bound<'py, PyDict>> {
    let censored = censored.unwrap_or_else(|| vec![false; runtimes_ms.len()]);
    if censored.len() != runtimes_ms.len() {
        return Err(PyValueError::new_err("runtimes_ms and censored differ in length"));
    }
    let sample = RuntimeSample {
        runs: runtimes_ms.into_iter().zip(censored).collect(),
    };
    let s = analysis::tail_stats(&sample);
    let d = PyDict::new(py);
    d.set_item("median", s.median)?;
    d.set_item("mad", s.mad)?;
    d.set_item("survival", s.survival)?;
    d.set_item("tail_slope", s.tail_slope)?;
    d.set_item("tail_r2", s.tail_r2)?;
    d.set_item("max_over_median", s.max_over_median)?;
    Ok(d)
}

#[pymodule]
fn mapf_rrr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GridMap>()?;
    m.add_class::<Instance>()?;
    m.add_class::<Outcome>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_rrr, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(tail_stats, m)?)?;
    Ok(())
}
