//! Exact schedule optimisation for the pedestrian objectives.
//!
//! Junctions do not exchange pedestrians, so both pedestrian objectives
//! decompose into independent per-junction problems over 2^N stage
//! sequences.  Exhaustive enumeration and depth-first branch-and-bound both
//! visit candidates in lexicographic order (horizontal first) and accept
//! strict improvements only, so they return the same, lexicographically
//! smallest optimum.  These solvers are the ground truth the heuristic and
//! integer-program paths are checked against.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ped::{simulate_junction, step_junction, JunctionDemand, PedScenario, StageCaps};
use crate::schedule::StageSchedule;
use crate::topology::{Stage, NUM_CORNERS};
use crate::unhappiness::{junction_unhappiness, UnhappinessConfig};

/// Hard limit on exhaustively searchable horizons (2^24 schedules).
pub const MAX_EXACT_STEPS: usize = 24;

/// Which pedestrian objective a solve targets.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PedObjective {
    Delay,
    Unhappiness,
}

/// Admissible lower bound used while pruning.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum BoundKind {
    /// Remaining cost bounded by zero; always sound.
    #[default]
    Zero,
    /// For delay only: propagate a lower bound on the unservable queue
    /// through the remaining intervals.  Falls back to zero for the
    /// unhappiness objective.
    Queue,
}

/// Optimal stage sequence and cost of one junction.
#[derive(Clone, Debug, PartialEq)]
pub struct JunctionSolve {
    pub stages: Vec<Stage>,
    pub cost: f64,
}

/// Optimal schedule and cost of a whole (pedestrian-only) network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSolve {
    pub schedule: StageSchedule,
    pub cost: f64,
    pub per_junction: Vec<f64>,
}

fn check_horizon(steps: usize) -> Result<()> {
    if steps > MAX_EXACT_STEPS {
        return Err(Error::HorizonTooLarge {
            steps,
            max: MAX_EXACT_STEPS,
        });
    }
    Ok(())
}

/// Cost of one junction under a fixed stage sequence.
pub fn junction_cost(
    scenario: &PedScenario,
    junction: usize,
    stages: &[Stage],
    objective: PedObjective,
    cfg: &UnhappinessConfig,
) -> Result<f64> {
    let caps = scenario.geometry.stage_caps(scenario.delta)?;
    let demand = &scenario.junctions[junction];
    let trace = simulate_junction(&caps, demand, stages);
    match objective {
        PedObjective::Delay => {
            Ok(trace.delay_raw.iter().sum::<i64>() as f64 * scenario.delta)
        }
        PedObjective::Unhappiness => junction_unhappiness(demand, &trace, scenario.delta, cfg),
    }
}

/// Exhaustive search over all 2^N stage sequences of one junction.
pub fn enumerate_junction(
    scenario: &PedScenario,
    junction: usize,
    objective: PedObjective,
    cfg: &UnhappinessConfig,
) -> Result<JunctionSolve> {
    enumerate_extreme(scenario, junction, objective, cfg, false)
}

/// Exhaustive cost maximisation over one junction's schedules.
pub fn maximize_junction(
    scenario: &PedScenario,
    junction: usize,
    objective: PedObjective,
    cfg: &UnhappinessConfig,
) -> Result<JunctionSolve> {
    enumerate_extreme(scenario, junction, objective, cfg, true)
}

fn enumerate_extreme(
    scenario: &PedScenario,
    junction: usize,
    objective: PedObjective,
    cfg: &UnhappinessConfig,
    maximize: bool,
) -> Result<JunctionSolve> {
    scenario.validate()?;
    let n = scenario.steps;
    check_horizon(n)?;
    let mut stages = vec![Stage::Horizontal; n];
    let mut best: Option<JunctionSolve> = None;
    for idx in 0..(1u64 << n) {
        for (p, slot) in stages.iter_mut().enumerate() {
            *slot = Stage::from_index(((idx >> (n - 1 - p)) & 1) as usize);
        }
        let cost = junction_cost(scenario, junction, &stages, objective, cfg)?;
        let better = match &best {
            None => true,
            Some(b) => {
                if maximize {
                    cost > b.cost
                } else {
                    cost < b.cost
                }
            }
        };
        if better {
            best = Some(JunctionSolve {
                stages: stages.clone(),
                cost,
            });
        }
    }
    Ok(best.expect("horizon has at least one interval"))
}

// --- branch and bound ------------------------------------------------------

/// Open red-run accumulator of one stage during prefix evaluation.
#[derive(Clone, Copy, Default)]
struct OpenRun {
    len: i64,
    blocked: [f64; NUM_CORNERS],
}

struct Search<'a> {
    scenario: &'a PedScenario,
    junction: usize,
    caps: StageCaps,
    demand: &'a JunctionDemand,
    steps: usize,
    delta: f64,
    objective: PedObjective,
    cfg: &'a UnhappinessConfig,
    bound: BoundKind,
    best_cost: f64,
    best: Vec<Stage>,
    current: Vec<Stage>,
}

impl<'a> Search<'a> {
    fn close_run(&self, run: &mut OpenRun, acc: &mut f64) -> Result<()> {
        if run.len == 0 {
            return Ok(());
        }
        let arg = self.cfg.exponent_arg(run.len, self.delta);
        self.cfg.check_arg(arg)?;
        let weight = arg.exp();
        let avg: f64 = run.blocked.iter().sum::<f64>() / run.len as f64;
        *acc += avg * weight;
        *run = OpenRun::default();
        Ok(())
    }

    /// Lower bound on the remaining delay cost after interval `t` with the
    /// given total population, assuming every future interval serves at most
    /// four continuing-capacity crosswalks.
    fn queue_bound(&self, t: usize, population: i64) -> f64 {
        let per_interval_service = 4 * self.caps.cont;
        let mut queue = population;
        let mut raw = 0i64;
        for step in t..self.steps {
            raw += (queue - per_interval_service).max(0);
            let arrivals: i64 = self.demand.arrivals[step].iter().sum();
            queue = (queue + arrivals - per_interval_service).max(0);
        }
        raw as f64 * self.delta
    }

    fn dfs(
        &mut self,
        t: usize,
        volumes: [i64; NUM_CORNERS],
        runs: [OpenRun; 2],
        acc: f64,
    ) -> Result<()> {
        if t == self.steps {
            // The delay accumulator is exact (integer counts times the
            // interval length), but the unhappiness accumulator can differ
            // from the profile-based evaluation by floating-point summation
            // order.  Leaves therefore re-evaluate through the same code
            // path enumeration uses, making both solvers bit-identical.
            let total = match self.objective {
                PedObjective::Delay => acc,
                PedObjective::Unhappiness => junction_cost(
                    self.scenario,
                    self.junction,
                    &self.current,
                    PedObjective::Unhappiness,
                    self.cfg,
                )?,
            };
            if total < self.best_cost {
                self.best_cost = total;
                self.best.copy_from_slice(&self.current);
            }
            return Ok(());
        }

        // The accumulated completed-run cost is a sound lower bound up to
        // floating-point noise; the unhappiness margin keeps pruning safe
        // against that noise.
        let (lb, margin) = match (self.objective, self.bound) {
            (PedObjective::Delay, BoundKind::Queue) => {
                (acc + self.queue_bound(t, volumes.iter().sum()), 0.0)
            }
            (PedObjective::Delay, BoundKind::Zero) => (acc, 0.0),
            (PedObjective::Unhappiness, _) => {
                (acc, 1e-9 * (1.0 + self.best_cost.abs().min(1e300)))
            }
        };
        if lb >= self.best_cost + margin {
            return Ok(());
        }

        for stage in Stage::ALL {
            let prev = if t == 0 {
                self.demand.prev_stage
            } else {
                Some(self.current[t - 1])
            };
            let step = step_junction(
                &self.caps,
                &volumes,
                stage,
                prev,
                &self.demand.arrivals[t],
                &self.demand.alpha[t],
                &self.demand.gamma[t],
            );
            let mut acc_next = acc;
            let mut runs_next = runs;
            match self.objective {
                PedObjective::Delay => {
                    acc_next += step.delay_raw as f64 * self.delta;
                }
                PedObjective::Unhappiness => {
                    // The active stage's run (if any) ended last interval;
                    // the red stage accumulates this interval's blockage.
                    self.close_run(&mut runs_next[stage.index()], &mut acc_next)?;
                    let red = stage.opposite();
                    let run = &mut runs_next[red.index()];
                    run.len += 1;
                    for i in 0..NUM_CORNERS {
                        run.blocked[i] += volumes[i] as f64 * self.demand.eta(t, i, red);
                    }
                }
            }
            self.current[t] = stage;
            self.dfs(t + 1, step.next, runs_next, acc_next)?;
        }
        Ok(())
    }
}

/// Branch-and-bound search over one junction's schedules.  Identical result
/// to `enumerate_junction` for any admissible bound.
pub fn branch_and_bound_junction(
    scenario: &PedScenario,
    junction: usize,
    objective: PedObjective,
    cfg: &UnhappinessConfig,
    bound: BoundKind,
) -> Result<JunctionSolve> {
    scenario.validate()?;
    check_horizon(scenario.steps)?;
    let caps = scenario.geometry.stage_caps(scenario.delta)?;
    let demand = &scenario.junctions[junction];
    let mut search = Search {
        scenario,
        junction,
        caps,
        demand,
        steps: scenario.steps,
        delta: scenario.delta,
        objective,
        cfg,
        bound,
        best_cost: f64::INFINITY,
        best: vec![Stage::Horizontal; scenario.steps],
        current: vec![Stage::Horizontal; scenario.steps],
    };
    search.dfs(0, demand.initial, [OpenRun::default(); 2], 0.0)?;
    Ok(JunctionSolve {
        stages: search.best,
        cost: search.best_cost,
    })
}

/// Exact solve of one junction: branch-and-bound with the zero bound.
pub fn solve_exact_junction(
    scenario: &PedScenario,
    junction: usize,
    objective: PedObjective,
    cfg: &UnhappinessConfig,
) -> Result<JunctionSolve> {
    branch_and_bound_junction(scenario, junction, objective, cfg, BoundKind::Zero)
}

/// Exact solve of every junction independently; the network optimum is the
/// concatenation of per-junction optima because junctions share no
/// pedestrians.
pub fn solve_exact_network(
    scenario: &PedScenario,
    objective: PedObjective,
    cfg: &UnhappinessConfig,
) -> Result<NetworkSolve> {
    scenario.validate()?;
    check_horizon(scenario.steps)?;
    let solves: Vec<JunctionSolve> = (0..scenario.n_junctions())
        .into_par_iter()
        .map(|j| solve_exact_junction(scenario, j, objective, cfg))
        .collect::<Result<_>>()?;
    let mut schedule = StageSchedule::filled(scenario.n_junctions(), scenario.steps, Stage::Horizontal);
    let mut per_junction = Vec::with_capacity(solves.len());
    for (j, solve) in solves.iter().enumerate() {
        schedule.set_junction_row(j, &solve.stages);
        per_junction.push(solve.cost);
    }
    Ok(NetworkSolve {
        schedule,
        cost: per_junction.iter().sum(),
        per_junction,
    })
}

/// Worst-case cost over all schedules, used as the scaling denominator when
/// combining objectives.
pub fn maximize_cost(
    scenario: &PedScenario,
    objective: PedObjective,
    cfg: &UnhappinessConfig,
) -> Result<f64> {
    scenario.validate()?;
    check_horizon(scenario.steps)?;
    let worst: Vec<f64> = (0..scenario.n_junctions())
        .into_par_iter()
        .map(|j| maximize_junction(scenario, j, objective, cfg).map(|s| s.cost))
        .collect::<Result<_>>()?;
    Ok(worst.iter().sum())
}
