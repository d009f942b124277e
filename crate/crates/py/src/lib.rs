//! Python bindings: a `Scenario` class carrying one grid instance through
//! simulation, the exact and harmony-search solvers, LP export and
//! checking, weight sweeps, and receding-horizon runs, plus module-level
//! crosswalk capacity helpers.
//!
//! Schedules cross the boundary as the same `junction,interval,stage` CSV
//! text the command-line tool reads and writes, so artifacts move freely
//! between both front ends.

use pyo3::exceptions::{PyOverflowError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use crossflow::dhs::{self, DhsParams, PedDhsProblem};
use crossflow::error::Error;
use crossflow::exact::{solve_exact_network, PedObjective};
use crossflow::integrate::{sweep_weights, veh_layer, JointSolver, WeightedProblem};
use crossflow::milp::lp::write_lp;
use crossflow::milp::{build_milp, check_trace};
use crossflow::mpc::{run_mpc, MpcConfig, MpcObjective, MpcSolver, PredictionNoise};
use crossflow::ped::{simulate, CrosswalkGeometry};
use crossflow::scenario::{generate_default, Scenario as CoreScenario};
use crossflow::schedule::StageSchedule;
use crossflow::topology::{CouplingMode, CouplingPairing, Stage, StageCoupling};
use crossflow::unhappiness::{unhappiness_cost, UnhappinessConfig};
use crossflow::veh::simulate_veh;

/// Guard trips (search space or exponent limits) surface as OverflowError,
/// everything else as ValueError, mirroring the process exit codes 3 and 2.
fn to_py(e: Error) -> PyErr {
    if e.exit_code() == 3 {
        PyOverflowError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse_objective(name: &str) -> PyResult<PedObjective> {
    match name {
        "delay" => Ok(PedObjective::Delay),
        "unhappiness" => Ok(PedObjective::Unhappiness),
        other => Err(PyValueError::new_err(format!(
            "objective must be 'delay' or 'unhappiness', got {other:?}"
        ))),
    }
}

fn parse_coupling(pairing: &str, mode: &str) -> PyResult<StageCoupling> {
    let pairing = match pairing {
        "parallel" => CouplingPairing::Parallel,
        "crossed" => CouplingPairing::Crossed,
        other => {
            return Err(PyValueError::new_err(format!(
                "pairing must be 'parallel' or 'crossed', got {other:?}"
            )))
        }
    };
    let mode = match mode {
        "exclusive" => CouplingMode::Exclusive,
        "relaxed" => CouplingMode::Relaxed,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be 'exclusive' or 'relaxed', got {other:?}"
            )))
        }
    };
    Ok(StageCoupling { pairing, mode })
}

fn unhappiness_config(exponent_in_seconds: bool) -> UnhappinessConfig {
    UnhappinessConfig {
        exponent_in_seconds,
        ..UnhappinessConfig::default()
    }
}

/// One grid instance: topology plus pedestrian and vehicle demand.
#[pyclass(module = "crossflow_py")]
struct Scenario {
    inner: CoreScenario,
}

impl Scenario {
    fn schedule_from(&self, csv: Option<&str>) -> PyResult<StageSchedule> {
        let schedule = match csv {
            Some(text) => StageSchedule::from_csv(text).map_err(to_py)?,
            None => StageSchedule::filled(
                self.inner.grid.n_junctions(),
                self.inner.grid.steps,
                Stage::Horizontal,
            ),
        };
        schedule
            .check_shape(self.inner.grid.n_junctions(), self.inner.grid.steps)
            .map_err(to_py)?;
        Ok(schedule)
    }
}

#[pymethods]
impl Scenario {
    /// Seeded random instance on a rows-by-cols grid with default demand
    /// ranges and the 15 s interval.
    #[staticmethod]
    fn generate(rows: usize, cols: usize, steps: usize, seed: u64) -> PyResult<Scenario> {
        let inner = generate_default(rows, cols, steps, seed).map_err(to_py)?;
        Ok(Scenario { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Scenario> {
        let inner = CoreScenario::from_json(text).map_err(to_py)?;
        Ok(Scenario { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.grid.rows
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.grid.cols
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.grid.steps
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.grid.delta
    }

    #[getter]
    fn n_junctions(&self) -> usize {
        self.inner.grid.n_junctions()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario({}x{}, steps={}, delta={})",
            self.inner.grid.rows, self.inner.grid.cols, self.inner.grid.steps, self.inner.grid.delta
        )
    }

    /// Run both flow layers under a schedule (constant horizontal when
    /// omitted) and return costs plus the full traces as CSV text.
    #[pyo3(signature = (schedule_csv=None, pairing="parallel", mode="exclusive", exponent_in_seconds=true))]
    fn simulate(
        &self,
        py: Python<'_>,
        schedule_csv: Option<&str>,
        pairing: &str,
        mode: &str,
        exponent_in_seconds: bool,
    ) -> PyResult<Py<PyDict>> {
        let schedule = self.schedule_from(schedule_csv)?;
        let cfg = unhappiness_config(exponent_in_seconds);
        let ped = simulate(&self.inner.ped, &schedule).map_err(to_py)?;
        let coupling = parse_coupling(pairing, mode)?;
        let network = self.inner.network();
        let veh = simulate_veh(&network, &self.inner.veh, &veh_layer(&schedule, &coupling))
            .map_err(to_py)?;

        let out = PyDict::new(py);
        out.set_item("ped_delay_raw", ped.raw_delay())?;
        out.set_item("ped_delay_cost", ped.delay_cost())?;
        out.set_item(
            "ped_unhappiness",
            unhappiness_cost(&self.inner.ped, &ped, &cfg).map_err(to_py)?,
        )?;
        out.set_item("veh_delay_raw", veh.raw_delay())?;
        out.set_item("veh_delay_cost", veh.delay_cost())?;
        out.set_item("veh_exited", veh.total_exited())?;
        out.set_item("veh_dropped", veh.total_dropped())?;
        out.set_item("ped_trace_csv", ped.to_csv(&self.inner.ped, &cfg).map_err(to_py)?)?;
        out.set_item("veh_trace_csv", veh.to_csv(self.inner.veh.params.length_speed_ratio))?;
        Ok(out.into())
    }

    /// Optimal schedule for the pedestrian objective.
    #[pyo3(signature = (objective="delay", exponent_in_seconds=true))]
    fn solve_exact(
        &self,
        py: Python<'_>,
        objective: &str,
        exponent_in_seconds: bool,
    ) -> PyResult<Py<PyDict>> {
        let solve = solve_exact_network(
            &self.inner.ped,
            parse_objective(objective)?,
            &unhappiness_config(exponent_in_seconds),
        )
        .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("cost", solve.cost)?;
        out.set_item("schedule_csv", solve.schedule.to_csv())?;
        out.set_item("schedule_hash", solve.schedule.hash_id())?;
        Ok(out.into())
    }

    /// Harmony-search schedule for the pedestrian objective.
    #[pyo3(signature = (seed=0, objective="delay", memory_size=1000, iterations=1000,
                        hmcr=0.95, par=0.5, bandwidth=1.0, exponent_in_seconds=true))]
    #[allow(clippy::too_many_arguments)]
    fn solve_dhs(
        &self,
        py: Python<'_>,
        seed: u64,
        objective: &str,
        memory_size: usize,
        iterations: usize,
        hmcr: f64,
        par: f64,
        bandwidth: f64,
        exponent_in_seconds: bool,
    ) -> PyResult<Py<PyDict>> {
        let problem = PedDhsProblem::new(
            &self.inner.ped,
            parse_objective(objective)?,
            unhappiness_config(exponent_in_seconds),
        )
        .map_err(to_py)?;
        let params = DhsParams {
            memory_size,
            iterations,
            hmcr,
            par,
            bandwidth,
        };
        let run = dhs::run(&problem, &params, seed).map_err(to_py)?;
        let schedule = StageSchedule::from_bits(
            self.inner.grid.n_junctions(),
            self.inner.grid.steps,
            &run.best_bits,
        )
        .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("cost", run.best_cost)?;
        out.set_item("schedule_csv", schedule.to_csv())?;
        out.set_item("trace_csv", run.trace_to_csv())?;
        Ok(out.into())
    }

    /// Minimize the scaled blend of pedestrian and vehicle delay at a given
    /// pedestrian weight.
    #[pyo3(signature = (weight, pairing="parallel", mode="exclusive", solver="exact",
                        seed=0, iterations=1000, memory_size=1000))]
    #[allow(clippy::too_many_arguments)]
    fn solve_weighted(
        &self,
        py: Python<'_>,
        weight: f64,
        pairing: &str,
        mode: &str,
        solver: &str,
        seed: u64,
        iterations: usize,
        memory_size: usize,
    ) -> PyResult<Py<PyDict>> {
        let problem = WeightedProblem::new(&self.inner, parse_coupling(pairing, mode)?, weight)
            .map_err(to_py)?;
        let solver = match solver {
            "exact" => JointSolver::Exact,
            "dhs" => JointSolver::Dhs {
                params: DhsParams {
                    iterations,
                    memory_size,
                    ..DhsParams::default()
                },
                seed,
            },
            other => {
                return Err(PyValueError::new_err(format!(
                    "solver must be 'exact' or 'dhs', got {other:?}"
                )))
            }
        };
        let solve = problem.solve(&solver).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("weighted_cost", solve.scaled.u)?;
        out.set_item("ped_ratio", solve.scaled.ped_ratio)?;
        out.set_item("veh_ratio", solve.scaled.veh_ratio)?;
        out.set_item("ped_delay_raw", solve.costs.ped_raw)?;
        out.set_item("veh_delay_raw", solve.costs.veh_raw)?;
        out.set_item("schedule_csv", solve.schedule.to_csv())?;
        out.set_item("veh_schedule_csv", solve.veh_schedule.to_csv())?;
        Ok(out.into())
    }

    /// The pedestrian integer program in LP text format.
    fn export_lp(&self) -> PyResult<String> {
        let milp = build_milp(&self.inner.ped).map_err(to_py)?;
        Ok(write_lp(&milp.model))
    }

    /// Simulate a schedule and check the trace against every program row.
    #[pyo3(signature = (schedule_csv=None))]
    fn check_milp(&self, py: Python<'_>, schedule_csv: Option<&str>) -> PyResult<Py<PyDict>> {
        let schedule = self.schedule_from(schedule_csv)?;
        let milp = build_milp(&self.inner.ped).map_err(to_py)?;
        let trace = simulate(&self.inner.ped, &schedule).map_err(to_py)?;
        let report = check_trace(&milp, &schedule, &trace).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("rows_checked", report.rows_checked)?;
        out.set_item(
            "violations",
            report
                .violations
                .iter()
                .map(|v| (v.row.clone(), v.amount))
                .collect::<Vec<_>>(),
        )?;
        out.set_item("clean", report.is_clean())?;
        Ok(out.into())
    }

    /// Solve across a weight grid (ascending from 0) and bracket the
    /// weights where the schedule turns over.
    #[pyo3(signature = (weights, refine=true, pairing="parallel", mode="exclusive"))]
    fn sweep_weights(
        &self,
        py: Python<'_>,
        weights: Vec<f64>,
        refine: bool,
        pairing: &str,
        mode: &str,
    ) -> PyResult<Py<PyDict>> {
        let problem = WeightedProblem::new(&self.inner, parse_coupling(pairing, mode)?, 0.0)
            .map_err(to_py)?;
        let sweep = sweep_weights(&problem, &weights, refine).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("sweep_csv", sweep.to_csv())?;
        out.set_item(
            "turning",
            sweep
                .turning
                .iter()
                .map(|t| (t.lower, t.upper, t.sf))
                .collect::<Vec<_>>(),
        )?;
        out.set_item("resolution", sweep.resolution)?;
        Ok(out.into())
    }

    /// Receding-horizon execution: plan over a sliding window, apply the
    /// first interval, observe the true demand, repeat.
    #[pyo3(signature = (window, objective="delay", weight=1.0, solver="exact", seed=0,
                        noise_amplitude=None, exponent_in_seconds=true))]
    #[allow(clippy::too_many_arguments)]
    fn mpc(
        &self,
        py: Python<'_>,
        window: usize,
        objective: &str,
        weight: f64,
        solver: &str,
        seed: u64,
        noise_amplitude: Option<f64>,
        exponent_in_seconds: bool,
    ) -> PyResult<Py<PyDict>> {
        let objective = match objective {
            "weighted" => MpcObjective::Weighted {
                weight,
                coupling: StageCoupling::default(),
            },
            "delay" => MpcObjective::Delay,
            "unhappiness" => MpcObjective::Unhappiness,
            other => {
                return Err(PyValueError::new_err(format!(
                    "objective must be 'delay', 'unhappiness' or 'weighted', got {other:?}"
                )))
            }
        };
        let solver = match solver {
            "exact" => MpcSolver::Exact,
            "dhs" => MpcSolver::Dhs {
                params: DhsParams::default(),
                seed,
            },
            other => {
                return Err(PyValueError::new_err(format!(
                    "solver must be 'exact' or 'dhs', got {other:?}"
                )))
            }
        };
        let mut config = MpcConfig::new(window, objective, solver);
        config.unhappiness = unhappiness_config(exponent_in_seconds);
        if let Some(amplitude) = noise_amplitude {
            config.noise = Some(PredictionNoise { amplitude, seed });
        }
        let run = run_mpc(&self.inner, &config).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("realized_ped_cost", run.realized_ped_cost())?;
        if let Some(cost) = run.realized_veh_cost() {
            out.set_item("realized_veh_cost", cost)?;
        }
        out.set_item("applied_csv", run.schedule_csv())?;
        out.set_item("steps_csv", run.to_csv())?;
        Ok(out.into())
    }
}

/// Seconds for a platoon of `n_ped` pedestrians to clear one crosswalk.
#[pyfunction]
#[pyo3(signature = (n_ped, length=8.5, width=4.0, walk_speed=1.2, startup=3.2))]
fn crossing_time(n_ped: i64, length: f64, width: f64, walk_speed: f64, startup: f64) -> f64 {
    CrosswalkGeometry {
        length,
        width,
        walk_speed,
        startup,
    }
    .crossing_time(n_ped)
}

/// (first, continuing) per-interval crosswalk capacities.
#[pyfunction]
#[pyo3(signature = (delta=15.0, length=8.5, width=4.0, walk_speed=1.2, startup=3.2))]
fn stage_caps(
    delta: f64,
    length: f64,
    width: f64,
    walk_speed: f64,
    startup: f64,
) -> PyResult<(i64, i64)> {
    let caps = CrosswalkGeometry {
        length,
        width,
        walk_speed,
        startup,
    }
    .stage_caps(delta)
    .map_err(to_py)?;
    Ok((caps.first, caps.cont))
}

#[pymodule]
fn crossflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(crossing_time, m)?)?;
    m.add_function(wrap_pyfunction!(stage_caps, m)?)?;
    Ok(())
}
