//! Coupled pedestrian-vehicle scheduling.
//!
//! Under a stage coupling, each junction-interval still carries one binary
//! decision: the pedestrian stage, with the vehicle stage determined by the
//! pairing.  Both raw delays are integer-valued, so weighted comparisons
//! between schedules reduce to exact integer arithmetic (the interval
//! length cancels out of the scaled objective), and equal-cost ties resolve
//! lexicographically at every weight.  The joint space is enumerated
//! outright and the per-schedule cost table is cached, which keeps weight
//! sweeps cheap and makes the scaling denominators certified maxima.

use rayon::prelude::*;
use std::fmt::Write as _;

use crate::dhs::{self, DhsParams, ScheduleCost};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::schedule::{SignalPlan, StageSchedule};
use crate::topology::{CouplingMode, GridNetwork, Stage, StageCoupling};
use crate::veh::simulate_veh;

/// Largest joint decision space that is enumerated: one bit per
/// junction-interval.  Beyond this the cost table and the certified scaling
/// maxima are out of reach.
pub const MAX_JOINT_BITS: usize = 20;

/// Raw (interval-unit) delays of one joint schedule.  Both values are
/// integer-valued; the vehicle side is kept in `f64` because its cost rows
/// carry the length-speed ratio, which is pinned to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointCosts {
    pub ped_raw: i64,
    pub veh_raw: f64,
}

/// Scaled objective value of one schedule under a weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledCost {
    pub u: f64,
    pub ped_ratio: f64,
    pub veh_ratio: f64,
}

/// A coupled scenario with precomputed per-schedule costs and certified
/// scaling denominators.
pub struct WeightedProblem<'a> {
    pub scenario: &'a Scenario,
    pub network: GridNetwork,
    pub coupling: StageCoupling,
    /// Pedestrian-side weight; the vehicle side always weighs 1.
    pub weight: f64,
    ped_max_raw: i64,
    veh_max_raw: f64,
    /// Per junction, per stage-bit pattern (ascending = lexicographic):
    /// raw pedestrian delay of that junction row.
    ped_table: Vec<Vec<i64>>,
    /// Per joint index: both raw delays.
    joint_table: Vec<JointCosts>,
}

/// Result of one weighted solve.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSolve {
    /// Pedestrian-layer schedule; the vehicle layer is its image under the
    /// coupling.
    pub schedule: StageSchedule,
    pub veh_schedule: StageSchedule,
    pub costs: JointCosts,
    pub scaled: ScaledCost,
}

/// Which search backs a weighted solve.
#[derive(Clone, Debug, PartialEq)]
pub enum JointSolver {
    Exact,
    Dhs { params: DhsParams, seed: u64 },
}

/// Vehicle-layer image of a pedestrian-layer schedule.
pub fn veh_layer(ped: &StageSchedule, coupling: &StageCoupling) -> StageSchedule {
    ped.map(|s| coupling.veh_stage_for(s))
}

/// Collision feasibility of a pedestrian/vehicle plan pair: at each
/// junction-interval the active stages must form one allowed joint mode
/// (Exclusive) or at most one (Relaxed, which additionally permits an
/// all-red junction).
pub fn joint_feasible(ped: &SignalPlan, veh: &SignalPlan, coupling: &StageCoupling) -> bool {
    if ped.n_junctions() != veh.n_junctions() || ped.steps() != veh.steps() {
        return false;
    }
    for j in 0..ped.n_junctions() {
        for t in 0..ped.steps() {
            let ok = match (ped.mode(j, t), veh.mode(j, t)) {
                (Some(p), Some(v)) => v == coupling.veh_stage_for(p),
                (None, None) => coupling.mode == CouplingMode::Relaxed,
                _ => false,
            };
            if !ok {
                return false;
            }
        }
    }
    true
}

impl<'a> WeightedProblem<'a> {
    /// Build the coupled problem: per-junction pedestrian cost tables, the
    /// full joint cost table, and the direction-flipped maxima used as
    /// scaling denominators.
    pub fn new(
        scenario: &'a Scenario,
        coupling: StageCoupling,
        weight: f64,
    ) -> Result<WeightedProblem<'a>> {
        scenario.validate()?;
        if weight < 0.0 || !weight.is_finite() {
            return Err(Error::InvalidParameter(
                "pedestrian weight must be finite and non-negative".into(),
            ));
        }
        let network = scenario.network();
        let n_junctions = scenario.grid.n_junctions();
        let steps = scenario.grid.steps;
        let n_bits = n_junctions * steps;
        if n_bits > MAX_JOINT_BITS {
            return Err(Error::HorizonTooLarge {
                steps: n_bits,
                max: MAX_JOINT_BITS,
            });
        }

        let caps = scenario.ped.geometry.stage_caps(scenario.ped.delta)?;
        let ped_table: Vec<Vec<i64>> = (0..n_junctions)
            .into_par_iter()
            .map(|j| {
                let demand = &scenario.ped.junctions[j];
                (0..1u32 << steps)
                    .map(|bits| {
                        let stages: Vec<Stage> = (0..steps)
                            .map(|t| Stage::from_index((bits >> (steps - 1 - t) & 1) as usize))
                            .collect();
                        let trace = crate::ped::simulate_junction(&caps, demand, &stages);
                        trace.delay_raw.iter().sum()
                    })
                    .collect()
            })
            .collect();

        let row_mask = (1u64 << steps) - 1;
        let ped_raw_of = |idx: u64| -> i64 {
            (0..n_junctions)
                .map(|j| {
                    let row = (idx >> ((n_junctions - 1 - j) * steps)) & row_mask;
                    ped_table[j][row as usize]
                })
                .sum()
        };
        let joint_table: Vec<JointCosts> = (0..1u64 << n_bits)
            .into_par_iter()
            .map(|idx| {
                let ped_sched = StageSchedule::from_index(n_junctions, steps, idx);
                let veh_sched = veh_layer(&ped_sched, &coupling);
                let trace = simulate_veh(&network, &scenario.veh, &veh_sched)?;
                Ok(JointCosts {
                    ped_raw: ped_raw_of(idx),
                    veh_raw: trace.raw_delay(),
                })
            })
            .collect::<Result<_>>()?;

        let ped_max_raw = joint_table.iter().map(|c| c.ped_raw).max().unwrap();
        let veh_max_raw = joint_table
            .iter()
            .map(|c| c.veh_raw)
            .fold(f64::NEG_INFINITY, f64::max);
        if ped_max_raw == 0 {
            return Err(Error::DegenerateScaling {
                which: "pedestrian",
            });
        }
        if veh_max_raw == 0.0 {
            return Err(Error::DegenerateScaling { which: "vehicle" });
        }
        Ok(WeightedProblem {
            scenario,
            network,
            coupling,
            weight,
            ped_max_raw,
            veh_max_raw,
            ped_table,
            joint_table,
        })
    }

    pub fn n_junctions(&self) -> usize {
        self.scenario.grid.n_junctions()
    }

    pub fn steps(&self) -> usize {
        self.scenario.grid.steps
    }

    /// Certified maximum raw pedestrian delay over the joint space.
    pub fn ped_max_raw(&self) -> i64 {
        self.ped_max_raw
    }

    /// Certified maximum raw vehicle delay over the joint space.
    pub fn veh_max_raw(&self) -> f64 {
        self.veh_max_raw
    }

    /// Raw costs of one pedestrian-layer schedule, off the cached table.
    pub fn costs(&self, ped: &StageSchedule) -> Result<JointCosts> {
        ped.check_shape(self.n_junctions(), self.steps())?;
        let idx = schedule_index(ped);
        Ok(self.joint_table[idx as usize])
    }

    /// Scale raw costs into ratios and the weighted objective under
    /// `weight`.
    pub fn scaled_cost(&self, costs: JointCosts) -> ScaledCost {
        self.scaled_with(self.weight, costs)
    }

    fn scaled_with(&self, m: f64, costs: JointCosts) -> ScaledCost {
        let ped_ratio = costs.ped_raw as f64 / self.ped_max_raw as f64;
        let veh_ratio = costs.veh_raw / self.veh_max_raw;
        ScaledCost {
            u: veh_ratio + m * ped_ratio,
            ped_ratio,
            veh_ratio,
        }
    }

    /// Exact strict comparison of two schedules' weighted objectives:
    /// multiplying through by both (positive) denominators turns the
    /// comparison into integer-valued arithmetic, immune to ratio rounding.
    fn strictly_better(&self, m: f64, a: JointCosts, b: JointCosts) -> bool {
        let d = (a.veh_raw - b.veh_raw) * self.ped_max_raw as f64
            + m * (a.ped_raw - b.ped_raw) as f64 * self.veh_max_raw;
        d < 0.0
    }

    fn argmin_weighted(&self, m: f64) -> usize {
        let mut best = 0usize;
        for idx in 1..self.joint_table.len() {
            if self.strictly_better(m, self.joint_table[idx], self.joint_table[best]) {
                best = idx;
            }
        }
        best
    }

    fn solve_at(&self, m: f64) -> JointSolve {
        let idx = self.argmin_weighted(m);
        self.solve_from_index(idx as u64, m)
    }

    fn solve_from_index(&self, idx: u64, m: f64) -> JointSolve {
        let schedule = StageSchedule::from_index(self.n_junctions(), self.steps(), idx);
        let veh_schedule = veh_layer(&schedule, &self.coupling);
        let costs = self.joint_table[idx as usize];
        JointSolve {
            schedule,
            veh_schedule,
            costs,
            scaled: self.scaled_with(m, costs),
        }
    }

    /// Minimize the weighted objective at the problem's weight.
    pub fn solve(&self, solver: &JointSolver) -> Result<JointSolve> {
        self.solve_with_weight(self.weight, solver)
    }

    /// Minimize the weighted objective at an explicit weight.
    pub fn solve_with_weight(&self, m: f64, solver: &JointSolver) -> Result<JointSolve> {
        match solver {
            JointSolver::Exact => Ok(self.solve_at(m)),
            JointSolver::Dhs { params, seed } => {
                let adapter = WeightedCost { problem: self, m };
                let run = dhs::run(&adapter, params, *seed)?;
                let mut idx = 0u64;
                for &b in &run.best_bits {
                    idx = idx << 1 | b as u64;
                }
                Ok(self.solve_from_index(idx, m))
            }
        }
    }

    /// Vehicle-layer optimum ignoring pedestrians (weight 0 endpoint).
    pub fn pure_vehicle_optimum(&self) -> JointSolve {
        self.solve_at(0.0)
    }

    /// Pedestrian raw-delay minimum over the joint space.
    pub fn pure_pedestrian_min_raw(&self) -> i64 {
        self.ped_table
            .iter()
            .map(|row| row.iter().copied().min().unwrap())
            .sum()
    }
}

/// Flattened index of a schedule, inverse of `StageSchedule::from_index`.
fn schedule_index(s: &StageSchedule) -> u64 {
    let mut idx = 0u64;
    for &bit in &s.to_bits() {
        idx = idx << 1 | bit as u64;
    }
    idx
}

/// Weighted objective as a black-box cost for the harmony search.
struct WeightedCost<'a, 'b> {
    problem: &'b WeightedProblem<'a>,
    m: f64,
}

impl ScheduleCost for WeightedCost<'_, '_> {
    fn n_bits(&self) -> usize {
        self.problem.n_junctions() * self.problem.steps()
    }

    fn cost(&self, bits: &[bool]) -> Result<f64> {
        let mut idx = 0u64;
        for &b in bits {
            idx = idx << 1 | b as u64;
        }
        let costs = self.problem.joint_table[idx as usize];
        Ok(self.problem.scaled_with(self.m, costs).u)
    }
}

/// Mean fraction of junction signals that change between consecutive
/// intervals of a schedule.
pub fn switching_frequency_profile(schedule: &StageSchedule) -> Result<f64> {
    let steps = schedule.steps();
    if steps < 2 {
        return Err(Error::InvalidParameter(
            "switching profile needs at least two intervals".into(),
        ));
    }
    let n = schedule.n_junctions();
    let mut changed = 0usize;
    for t in 1..steps {
        for j in 0..n {
            if schedule.stage(j, t) != schedule.stage(j, t - 1) {
                changed += 1;
            }
        }
    }
    Ok(changed as f64 / ((steps - 1) * n) as f64)
}

/// Fraction of junction-interval entries that differ between two schedules
/// of equal shape.
pub fn switching_frequency_turning(a: &StageSchedule, b: &StageSchedule) -> Result<f64> {
    let differing = a.hamming(b)?;
    Ok(differing as f64 / (a.n_junctions() * a.steps()) as f64)
}

/// One evaluated weight of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub weight: f64,
    pub u: f64,
    pub ped_ratio: f64,
    pub veh_ratio: f64,
    pub veh_schedule: StageSchedule,
    /// Entry-difference fraction against the previous evaluated weight's
    /// vehicle schedule (0 at the first point).
    pub sf_turning: f64,
}

/// Bracket around one weight where the optimal vehicle schedule changes.
#[derive(Clone, Debug, PartialEq)]
pub struct TurningPoint {
    /// Largest examined weight still yielding the lower schedule.
    pub lower: f64,
    /// Smallest examined weight yielding the upper schedule.
    pub upper: f64,
    pub sf: f64,
}

/// Full sweep outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub turning: Vec<TurningPoint>,
    pub resolution: f64,
}

impl SweepResult {
    /// CSV of the evaluated grid, one row per weight.  The schedule hash
    /// identifies the vehicle layer (the layer the turning analysis is
    /// about).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("weight,U_D,P_D_ratio,V_D_ratio,schedule_hash,SF_turning\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.weight,
                p.u,
                p.ped_ratio,
                p.veh_ratio,
                p.veh_schedule.hash_id(),
                p.sf_turning
            );
        }
        out
    }
}

/// Default bracket width for turning-weight refinement.
pub const SWEEP_RESOLUTION: f64 = 0.25;

/// Evaluate the weighted optimum across a weight grid and locate the
/// weights where the vehicle schedule turns.
///
/// The grid must be ascending and start at 0 (the pure-vehicle endpoint).
/// With `refine`, each grid gap containing a change is bisected down to
/// [`SWEEP_RESOLUTION`]; a gap hiding several turnings yields the bracket
/// of the first one past the gap's lower schedule.
pub fn sweep_weights(
    problem: &WeightedProblem<'_>,
    grid: &[f64],
    refine: bool,
) -> Result<SweepResult> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::InvalidParameter(
            "weight grid must start at 0".into(),
        ));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "weight grid must be strictly ascending".into(),
        ));
    }

    let solves: Vec<JointSolve> = grid.iter().map(|&m| problem.solve_at(m)).collect();
    let mut points = Vec::with_capacity(grid.len());
    for (i, solve) in solves.iter().enumerate() {
        let sf_turning = if i == 0 {
            0.0
        } else {
            switching_frequency_turning(&solves[i - 1].veh_schedule, &solve.veh_schedule)?
        };
        points.push(SweepPoint {
            weight: grid[i],
            u: solve.scaled.u,
            ped_ratio: solve.scaled.ped_ratio,
            veh_ratio: solve.scaled.veh_ratio,
            veh_schedule: solve.veh_schedule.clone(),
            sf_turning,
        });
    }

    let mut turning = Vec::new();
    for i in 1..grid.len() {
        if solves[i].veh_schedule == solves[i - 1].veh_schedule {
            continue;
        }
        let (mut lo, mut hi) = (grid[i - 1], grid[i]);
        let lo_sched = solves[i - 1].veh_schedule.clone();
        let mut hi_sched = solves[i].veh_schedule.clone();
        if refine {
            while hi - lo > SWEEP_RESOLUTION {
                let mid = (lo + hi) / 2.0;
                let mid_sched = problem.solve_at(mid).veh_schedule;
                if mid_sched == lo_sched {
                    lo = mid;
                } else {
                    hi = mid;
                    hi_sched = mid_sched;
                }
            }
        }
        turning.push(TurningPoint {
            lower: lo,
            upper: hi,
            sf: switching_frequency_turning(&lo_sched, &hi_sched)?,
        });
    }

    Ok(SweepResult {
        points,
        turning,
        resolution: SWEEP_RESOLUTION,
    })
}
