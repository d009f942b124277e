//! Receding-horizon execution of the schedulers.
//!
//! Each step builds a fresh prediction window from the current plant state
//! (corner volumes, previous stage, vehicle volumes and green runs),
//! optimizes over the window, applies only the first interval to the plant
//! through the simulators, and records the realized costs.  Demand past the
//! end of the experiment is extended by holding its last value so late
//! windows stay full.  Optionally the predicted pedestrian arrivals are
//! perturbed by seeded multiplicative noise while the plant keeps the true
//! series.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

use crate::dhs::{self, DhsParams, PedDhsProblem};
use crate::error::{Error, Result};
use crate::exact::{solve_exact_network, PedObjective};
use crate::integrate::{JointSolver, WeightedProblem};
use crate::num::floor_count;
use crate::ped::{step_junction, JunctionDemand, PedJunctionTrace, PedScenario, PedTrace};
use crate::scenario::Scenario;
use crate::schedule::StageSchedule;
use crate::topology::{GridSpec, Stage, StageCoupling, NUM_CORNERS};
use crate::unhappiness::{unhappiness_cost, UnhappinessConfig};
use crate::veh::{step_network, VehScenario, VehState, VehTrace};

/// What each window minimizes.
#[derive(Clone, Debug, PartialEq)]
pub enum MpcObjective {
    Delay,
    Unhappiness,
    Weighted { weight: f64, coupling: StageCoupling },
}

/// Which search solves each window.
#[derive(Clone, Debug, PartialEq)]
pub enum MpcSolver {
    Exact,
    Dhs { params: DhsParams, seed: u64 },
}

/// Multiplicative perturbation of predicted pedestrian arrivals: each
/// predicted count is scaled by a fresh uniform factor in
/// `[1 - amplitude, 1 + amplitude)` and floored at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionNoise {
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcConfig {
    /// Prediction window length in intervals.
    pub horizon: usize,
    pub objective: MpcObjective,
    pub solver: MpcSolver,
    pub unhappiness: UnhappinessConfig,
    pub noise: Option<PredictionNoise>,
}

impl MpcConfig {
    pub fn new(horizon: usize, objective: MpcObjective, solver: MpcSolver) -> MpcConfig {
        MpcConfig {
            horizon,
            objective,
            solver,
            unhappiness: UnhappinessConfig::default(),
            noise: None,
        }
    }
}

/// One executed step.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcStep {
    /// Full optimized window profile; its first interval was applied.
    pub planned: StageSchedule,
    pub applied_row: Vec<Stage>,
    pub ped_delay_raw: i64,
    /// Present when the weighted objective also advances the vehicle layer.
    pub veh_delay_raw: Option<f64>,
}

/// Full receding-horizon run.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcRun {
    pub horizon: usize,
    pub applied: StageSchedule,
    pub steps: Vec<MpcStep>,
    /// Realized pedestrian trajectory; equals a direct simulation of
    /// `applied` from the initial plant state.
    pub realized_ped: PedTrace,
    pub realized_veh: Option<VehTrace>,
}

impl MpcRun {
    pub fn realized_ped_cost(&self) -> f64 {
        self.realized_ped.delay_cost()
    }

    pub fn realized_veh_cost(&self) -> Option<f64> {
        self.realized_veh.as_ref().map(|t| t.delay_cost())
    }

    /// Unhappiness of the realized trajectory.
    pub fn realized_unhappiness(
        &self,
        plant: &PedScenario,
        cfg: &UnhappinessConfig,
    ) -> Result<f64> {
        unhappiness_cost(plant, &self.realized_ped, cfg)
    }

    /// Per-step realized costs (`veh_delay_raw` empty for pedestrian-only
    /// runs).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,planned_hash,applied,ped_delay_raw,veh_delay_raw\n");
        for (i, step) in self.steps.iter().enumerate() {
            let applied: String = step.applied_row.iter().map(|s| s.short()).collect::<Vec<_>>().join("");
            let veh = step
                .veh_delay_raw
                .map(|v| v.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                step.planned.hash_id(),
                applied,
                step.ped_delay_raw,
                veh
            );
        }
        out
    }

    /// Applied schedule in the standard schedule CSV layout.
    pub fn schedule_csv(&self) -> String {
        self.applied.to_csv()
    }
}

/// Index into a hold-last-extended series.
fn held(idx: usize, len: usize) -> usize {
    idx.min(len - 1)
}

/// Window sub-scenario for the pedestrian layer, starting at plant interval
/// `start` with the given corner volumes and previous stages.
fn ped_window(
    plant: &PedScenario,
    volumes: &[[i64; NUM_CORNERS]],
    prev: &[Option<Stage>],
    start: usize,
    horizon: usize,
    noise: Option<(&mut ChaCha8Rng, f64)>,
) -> PedScenario {
    let total = plant.steps;
    let mut factors: Option<(&mut ChaCha8Rng, f64)> = noise;
    let junctions = (0..plant.n_junctions())
        .map(|j| {
            let src = &plant.junctions[j];
            let mut arrivals = Vec::with_capacity(horizon);
            let mut alpha = Vec::with_capacity(horizon);
            let mut gamma = Vec::with_capacity(horizon);
            for k in 0..horizon {
                let t = held(start + k, total);
                let mut a = src.arrivals[t];
                if let Some((rng, amplitude)) = factors.as_mut() {
                    for item in &mut a {
                        let factor = 1.0 + *amplitude * (2.0 * rng.random::<f64>() - 1.0);
                        *item = floor_count(*item as f64 * factor).max(0);
                    }
                }
                arrivals.push(a);
                alpha.push(src.alpha[t]);
                gamma.push(src.gamma[t]);
            }
            JunctionDemand {
                initial: volumes[j],
                arrivals,
                alpha,
                gamma,
                prev_stage: prev[j],
            }
        })
        .collect();
    PedScenario {
        geometry: plant.geometry,
        delta: plant.delta,
        steps: horizon,
        junctions,
    }
}

/// Window sub-scenario for the vehicle layer: current volumes become the
/// initial ones and the trailing green runs become the pre-horizon history
/// (clipped to the speed memory depth, beyond which history cannot matter).
fn veh_window(
    plant: &VehScenario,
    state: &VehState,
    start: usize,
    horizon: usize,
    total: usize,
) -> VehScenario {
    let depth = plant.params.memory_depth();
    VehScenario {
        params: plant.params.clone(),
        max_volumes: plant.max_volumes.clone(),
        initial: state.volumes.clone(),
        boundary_inflow: plant
            .boundary_inflow
            .iter()
            .map(|series| (0..horizon).map(|k| series[held(start + k, total)]).collect())
            .collect(),
        prehistory: state
            .runs
            .iter()
            .map(|run| match run {
                Some((stage, len)) => vec![*stage; (*len).min(depth + 1)],
                None => Vec::new(),
            })
            .collect(),
    }
}

/// Per-window seed so harmony-search windows stay independent yet the whole
/// run is a pure function of the configured seed.
fn window_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_add((step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Execute a full receding-horizon run over the plant scenario.
pub fn run_mpc(plant: &Scenario, config: &MpcConfig) -> Result<MpcRun> {
    plant.validate()?;
    if config.horizon == 0 {
        return Err(Error::InvalidParameter(
            "prediction horizon must be at least one interval".into(),
        ));
    }
    let total = plant.grid.steps;
    let n_junctions = plant.grid.n_junctions();
    let horizon = config.horizon;
    let network = plant.network();
    let with_vehicles = matches!(config.objective, MpcObjective::Weighted { .. });

    let mut noise_rng = config.noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));

    // Plant state.
    let mut volumes: Vec<[i64; NUM_CORNERS]> =
        plant.ped.junctions.iter().map(|j| j.initial).collect();
    let mut prev: Vec<Option<Stage>> = plant.ped.junctions.iter().map(|j| j.prev_stage).collect();
    let mut veh_state = VehState::initial(&plant.veh);
    let caps = plant.ped.geometry.stage_caps(plant.ped.delta)?;

    // Realized trajectory accumulators.
    let mut ped_stages: Vec<Vec<Stage>> = vec![Vec::with_capacity(total); n_junctions];
    let mut ped_volumes: Vec<Vec<[i64; NUM_CORNERS]>> =
        volumes.iter().map(|&v| vec![v]).collect();
    let mut ped_flows: Vec<Vec<[i64; NUM_CORNERS]>> = vec![Vec::new(); n_junctions];
    let mut ped_caps: Vec<Vec<[i64; 2]>> = vec![Vec::new(); n_junctions];
    let mut ped_delay: Vec<Vec<i64>> = vec![Vec::new(); n_junctions];
    let mut veh_trace = with_vehicles.then(|| VehTrace {
        delta: plant.grid.delta,
        steps: total,
        volumes: vec![veh_state.volumes.clone()],
        outflows: Vec::new(),
        levels: Vec::new(),
        dropped: Vec::new(),
        delay_raw: Vec::new(),
        exited: Vec::new(),
        accepted: Vec::new(),
    });

    let mut steps = Vec::with_capacity(total);
    for t in 0..total {
        let noise = noise_rng
            .as_mut()
            .map(|rng| (rng, config.noise.unwrap().amplitude));
        let window_ped = ped_window(&plant.ped, &volumes, &prev, t, horizon, noise);

        let planned = match &config.objective {
            MpcObjective::Delay | MpcObjective::Unhappiness => {
                let objective = match config.objective {
                    MpcObjective::Delay => PedObjective::Delay,
                    _ => PedObjective::Unhappiness,
                };
                match &config.solver {
                    MpcSolver::Exact => {
                        solve_exact_network(&window_ped, objective, &config.unhappiness)?.schedule
                    }
                    MpcSolver::Dhs { params, seed } => {
                        let problem =
                            PedDhsProblem::new(&window_ped, objective, config.unhappiness)?;
                        let run = dhs::run(&problem, params, window_seed(*seed, t))?;
                        StageSchedule::from_bits(n_junctions, horizon, &run.best_bits)?
                    }
                }
            }
            MpcObjective::Weighted { weight, coupling } => {
                let window = Scenario {
                    grid: GridSpec {
                        steps: horizon,
                        ..plant.grid
                    },
                    ped: window_ped,
                    veh: veh_window(&plant.veh, &veh_state, t, horizon, total),
                    generator: None,
                };
                let problem = WeightedProblem::new(&window, *coupling, *weight)?;
                let solver = match &config.solver {
                    MpcSolver::Exact => JointSolver::Exact,
                    MpcSolver::Dhs { params, seed } => JointSolver::Dhs {
                        params: params.clone(),
                        seed: window_seed(*seed, t),
                    },
                };
                problem.solve(&solver)?.schedule
            }
        };

        let applied_row: Vec<Stage> = (0..n_junctions).map(|j| planned.stage(j, 0)).collect();

        // Advance the pedestrian plant on the true demand.
        let mut ped_delay_raw = 0i64;
        for j in 0..n_junctions {
            let demand = &plant.ped.junctions[j];
            let step = step_junction(
                &caps,
                &volumes[j],
                applied_row[j],
                prev[j],
                &demand.arrivals[t],
                &demand.alpha[t],
                &demand.gamma[t],
            );
            ped_stages[j].push(applied_row[j]);
            ped_volumes[j].push(step.next);
            ped_flows[j].push(step.flows);
            ped_caps[j].push(step.caps);
            ped_delay[j].push(step.delay_raw);
            ped_delay_raw += step.delay_raw;
            volumes[j] = step.next;
            prev[j] = Some(applied_row[j]);
        }

        let mut veh_delay_raw = None;
        if let MpcObjective::Weighted { coupling, .. } = &config.objective {
            let veh_row: Vec<Stage> = applied_row
                .iter()
                .map(|&s| coupling.veh_stage_for(s))
                .collect();
            let step = step_network(&network, &plant.veh, &veh_state, &veh_row, t)?;
            let trace = veh_trace.as_mut().unwrap();
            trace.volumes.push(step.next.volumes.clone());
            trace.outflows.push(step.outflows);
            trace.levels.push(step.levels);
            trace.dropped.push(step.dropped);
            trace.delay_raw.push(step.delay_raw);
            trace.exited.push(step.exited);
            trace.accepted.push(step.accepted);
            veh_delay_raw = Some(step.delay_raw);
            veh_state = step.next;
        }

        steps.push(MpcStep {
            planned,
            applied_row,
            ped_delay_raw,
            veh_delay_raw,
        });
    }

    let applied = StageSchedule::from_fn(n_junctions, total, |j, t| ped_stages[j][t]);
    let realized_ped = PedTrace {
        delta: plant.ped.delta,
        steps: total,
        junctions: (0..n_junctions)
            .map(|j| PedJunctionTrace {
                stages: ped_stages[j].clone(),
                volumes: ped_volumes[j].clone(),
                flows: ped_flows[j].clone(),
                caps: ped_caps[j].clone(),
                delay_raw: ped_delay[j].clone(),
            })
            .collect(),
    };

    Ok(MpcRun {
        horizon,
        applied,
        steps,
        realized_ped,
        realized_veh: veh_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::veh_layer;
    use crate::ped::simulate;
    use crate::scenario::generate_default;
    use crate::veh::simulate_veh;

    fn delay_config(horizon: usize) -> MpcConfig {
        MpcConfig::new(horizon, MpcObjective::Delay, MpcSolver::Exact)
    }

    #[test]
    fn realized_trace_matches_direct_simulation() {
        let plant = generate_default(1, 2, 6, 31).unwrap();
        let run = run_mpc(&plant, &delay_config(3)).unwrap();
        assert_eq!(run.applied.steps(), 6);
        let direct = simulate(&plant.ped, &run.applied).unwrap();
        assert_eq!(run.realized_ped, direct);
    }

    #[test]
    fn one_step_horizon_is_greedy() {
        let plant = generate_default(1, 1, 5, 7).unwrap();
        let run = run_mpc(&plant, &delay_config(1)).unwrap();
        // Greedy reference: at each state pick the stage with the lower
        // one-interval delay, horizontal on ties.
        let caps = plant.ped.geometry.stage_caps(plant.ped.delta).unwrap();
        let demand = &plant.ped.junctions[0];
        let mut volumes = demand.initial;
        let mut prev = demand.prev_stage;
        for t in 0..5 {
            let mut best = Stage::Horizontal;
            let mut best_raw = i64::MAX;
            for stage in Stage::ALL {
                let step = step_junction(
                    &caps,
                    &volumes,
                    stage,
                    prev,
                    &demand.arrivals[t],
                    &demand.alpha[t],
                    &demand.gamma[t],
                );
                if step.delay_raw < best_raw {
                    best_raw = step.delay_raw;
                    best = stage;
                }
            }
            assert_eq!(run.applied.stage(0, t), best, "interval {t}");
            let step = step_junction(
                &caps,
                &volumes,
                best,
                prev,
                &demand.arrivals[t],
                &demand.alpha[t],
                &demand.gamma[t],
            );
            volumes = step.next;
            prev = Some(best);
        }
    }

    #[test]
    fn beats_fixed_schedules_on_stationary_demand() {
        let mut plant = generate_default(1, 1, 6, 13).unwrap();
        let demand = &mut plant.ped.junctions[0];
        for t in 0..6 {
            demand.arrivals[t] = [4, 2, 5, 3];
            demand.alpha[t] = [0.5; 4];
            demand.gamma[t] = [1.0; 4];
        }
        let run = run_mpc(&plant, &delay_config(3)).unwrap();
        for stage in Stage::ALL {
            let fixed = StageSchedule::filled(1, 6, stage);
            let cost = simulate(&plant.ped, &fixed).unwrap().delay_cost();
            assert!(run.realized_ped_cost() <= cost, "fixed {stage:?}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let plant = generate_default(2, 1, 5, 3).unwrap();
        let config = MpcConfig::new(
            2,
            MpcObjective::Delay,
            MpcSolver::Dhs {
                params: DhsParams {
                    memory_size: 30,
                    iterations: 40,
                    ..DhsParams::default()
                },
                seed: 11,
            },
        );
        let a = run_mpc(&plant, &config).unwrap();
        let b = run_mpc(&plant, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_demand_holds_last_value() {
        let plant = generate_default(1, 1, 3, 9).unwrap().ped;
        let volumes = vec![plant.junctions[0].initial];
        let prev = vec![None];
        let window = ped_window(&plant, &volumes, &prev, 2, 4, None);
        assert_eq!(window.steps, 4);
        let last = plant.junctions[0].arrivals[2];
        for k in 1..4 {
            assert_eq!(window.junctions[0].arrivals[k], last);
        }
        window.validate().unwrap();
    }

    #[test]
    fn unhappiness_objective_stays_consistent() {
        let plant = generate_default(1, 1, 5, 17).unwrap();
        let config = MpcConfig::new(3, MpcObjective::Unhappiness, MpcSolver::Exact);
        let run = run_mpc(&plant, &config).unwrap();
        let direct = simulate(&plant.ped, &run.applied).unwrap();
        assert_eq!(run.realized_ped, direct);
        let total = run
            .realized_unhappiness(&plant.ped, &UnhappinessConfig::default())
            .unwrap();
        assert!(total.is_finite() && total >= 0.0);
    }

    #[test]
    fn weighted_objective_advances_both_layers() {
        let plant = generate_default(1, 2, 4, 23).unwrap();
        let config = MpcConfig::new(
            2,
            MpcObjective::Weighted {
                weight: 1.0,
                coupling: StageCoupling::default(),
            },
            MpcSolver::Exact,
        );
        let run = run_mpc(&plant, &config).unwrap();
        let direct_ped = simulate(&plant.ped, &run.applied).unwrap();
        assert_eq!(run.realized_ped, direct_ped);
        let veh_sched = veh_layer(&run.applied, &StageCoupling::default());
        let direct_veh = simulate_veh(&plant.network(), &plant.veh, &veh_sched).unwrap();
        assert_eq!(run.realized_veh.as_ref().unwrap(), &direct_veh);
        assert!(run.steps.iter().all(|s| s.veh_delay_raw.is_some()));
    }

    #[test]
    fn noise_is_deterministic_and_plant_stays_true() {
        let plant = generate_default(1, 1, 5, 41).unwrap();
        let mut config = delay_config(3);
        config.noise = Some(PredictionNoise {
            amplitude: 0.5,
            seed: 5,
        });
        let a = run_mpc(&plant, &config).unwrap();
        let b = run_mpc(&plant, &config).unwrap();
        assert_eq!(a, b);
        // Whatever the plans, the realized trajectory must still be a true
        // simulation of the applied schedule.
        let direct = simulate(&plant.ped, &a.applied).unwrap();
        assert_eq!(a.realized_ped, direct);
        // Zero amplitude reproduces the noise-free run.
        config.noise = Some(PredictionNoise {
            amplitude: 0.0,
            seed: 5,
        });
        let c = run_mpc(&plant, &config).unwrap();
        let clean = run_mpc(&plant, &delay_config(3)).unwrap();
        assert_eq!(c.applied, clean.applied);
    }

    #[test]
    fn csv_reports_one_row_per_step() {
        let plant = generate_default(1, 1, 4, 3).unwrap();
        let run = run_mpc(&plant, &delay_config(2)).unwrap();
        let csv = run.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,planned_hash,applied,ped_delay_raw,veh_delay_raw");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(','), "no vehicle column for ped runs");
        assert_eq!(run.schedule_csv(), run.applied.to_csv());
    }

    #[test]
    fn guards_propagate() {
        let plant = generate_default(1, 1, 3, 3).unwrap();
        let config = delay_config(25);
        assert!(matches!(
            run_mpc(&plant, &config),
            Err(Error::HorizonTooLarge { .. })
        ));
        assert!(run_mpc(&plant, &delay_config(0)).is_err());
    }
}
