//! Discrete harmony search over binary stage schedules.
//!
//! A schedule is a vector of one bit per junction-interval (the two-stage
//! encoding keeps every vector feasible).  The search keeps a memory of
//! candidate vectors; each iteration improvises a new vector element-wise,
//! either recalling a random memory row (possibly pitch-adjusted by a bit
//! flip) or drawing fresh, and replaces the worst memory entry when the
//! newcomer is strictly better.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exact::{junction_cost, PedObjective};
use crate::ped::PedScenario;
use crate::topology::Stage;
use crate::unhappiness::UnhappinessConfig;

/// Search parameters.  `bandwidth` is the flip probability applied during
/// pitch adjustment: the continuous rule perturbs by `rand() * BW`, which on
/// a binary domain becomes "flip with probability BW".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhsParams {
    pub memory_size: usize,
    pub iterations: usize,
    pub hmcr: f64,
    pub par: f64,
    pub bandwidth: f64,
}

impl Default for DhsParams {
    fn default() -> Self {
        DhsParams {
            memory_size: 1000,
            iterations: 1000,
            hmcr: 0.95,
            par: 0.5,
            bandwidth: 1.0,
        }
    }
}

impl DhsParams {
    pub fn validate(&self) -> Result<()> {
        if self.memory_size == 0 {
            return Err(Error::InvalidParameter("memory size must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.hmcr) || !(0.0..=1.0).contains(&self.par) {
            return Err(Error::InvalidParameter(
                "memory-consideration and adjustment rates must lie in [0, 1]".into(),
            ));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth <= 1.0) {
            return Err(Error::InvalidParameter(
                "bandwidth must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// A black-box cost over binary schedule vectors.
pub trait ScheduleCost {
    fn n_bits(&self) -> usize;
    fn cost(&self, bits: &[bool]) -> Result<f64>;
}

/// The evolving memory of a search run.
pub struct HarmonyMemory {
    vectors: Vec<Vec<bool>>,
    costs: Vec<f64>,
    params: DhsParams,
    rng: ChaCha8Rng,
    n: usize,
}

impl HarmonyMemory {
    /// Index and cost of the current best vector (first among ties).
    pub fn best(&self) -> (usize, f64) {
        let mut best = 0;
        for i in 1..self.costs.len() {
            if self.costs[i] < self.costs[best] {
                best = i;
            }
        }
        (best, self.costs[best])
    }

    fn worst(&self) -> usize {
        let mut worst = 0;
        for i in 1..self.costs.len() {
            if self.costs[i] > self.costs[worst] {
                worst = i;
            }
        }
        worst
    }

    pub fn vector(&self, i: usize) -> &[bool] {
        &self.vectors[i]
    }

    /// Improvise a candidate: per element, recall from a uniformly chosen
    /// memory row with probability HMCR (then flip with probability
    /// PAR * BW), otherwise draw uniformly.
    pub fn improvise(&mut self) -> Vec<bool> {
        let mut candidate = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let bit = if self.rng.random::<f64>() < self.params.hmcr {
                let row = self.rng.random_range(0..self.vectors.len());
                let mut bit = self.vectors[row][k];
                if self.rng.random::<f64>() < self.params.par
                    && self.rng.random::<f64>() < self.params.bandwidth
                {
                    bit = !bit;
                }
                bit
            } else {
                self.rng.random::<bool>()
            };
            candidate.push(bit);
        }
        candidate
    }
}

/// Fill a memory with uniformly drawn vectors and their costs.
pub fn initialize(
    problem: &impl ScheduleCost,
    params: &DhsParams,
    seed: u64,
) -> Result<HarmonyMemory> {
    params.validate()?;
    let n = problem.n_bits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(params.memory_size);
    let mut costs = Vec::with_capacity(params.memory_size);
    for _ in 0..params.memory_size {
        // Continuous rule LB + rand() * (UB - LB) with LB=0, UB=1, rounded
        // onto {0, 1}.
        let v: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= 0.5).collect();
        costs.push(problem.cost(&v)?);
        vectors.push(v);
    }
    Ok(HarmonyMemory {
        vectors,
        costs,
        params: params.clone(),
        rng,
        n,
    })
}

/// Result of a search run.
#[derive(Clone, Debug, PartialEq)]
pub struct DhsRun {
    pub best_bits: Vec<bool>,
    pub best_cost: f64,
    /// Best-in-memory cost after initialisation and after each iteration
    /// (`iterations + 1` entries, non-increasing).
    pub trace: Vec<f64>,
}

impl DhsRun {
    /// Convergence trace as CSV (`iteration,best_cost`), iteration 0 being
    /// the initial memory.
    pub fn trace_to_csv(&self) -> String {
        let mut out = String::from("iteration,best_cost\n");
        for (i, c) in self.trace.iter().enumerate() {
            let _ = writeln!(out, "{i},{c}");
        }
        out
    }
}

/// Run the full search: initialise, improvise `iterations` times with
/// strict-improvement worst-replacement, return the memory best.
pub fn run(problem: &impl ScheduleCost, params: &DhsParams, seed: u64) -> Result<DhsRun> {
    let mut memory = initialize(problem, params, seed)?;
    let mut trace = Vec::with_capacity(params.iterations + 1);
    trace.push(memory.best().1);
    for _ in 0..params.iterations {
        let candidate = memory.improvise();
        let cost = problem.cost(&candidate)?;
        let worst = memory.worst();
        if cost < memory.costs[worst] {
            memory.vectors[worst] = candidate;
            memory.costs[worst] = cost;
        }
        trace.push(memory.best().1);
    }
    let (best, best_cost) = memory.best();
    Ok(DhsRun {
        best_bits: memory.vectors[best].clone(),
        best_cost,
        trace,
    })
}

/// Pedestrian-objective cost over full network schedules, with per-junction
/// memoisation: junctions are independent, so each junction's 2^N sub-costs
/// are cached across the thousands of evaluations of a run.
pub struct PedDhsProblem<'a> {
    scenario: &'a PedScenario,
    objective: PedObjective,
    cfg: UnhappinessConfig,
    cache: RefCell<Vec<HashMap<u32, f64>>>,
}

impl<'a> PedDhsProblem<'a> {
    pub fn new(
        scenario: &'a PedScenario,
        objective: PedObjective,
        cfg: UnhappinessConfig,
    ) -> Result<PedDhsProblem<'a>> {
        scenario.validate()?;
        if scenario.steps > 32 {
            return Err(Error::HorizonTooLarge {
                steps: scenario.steps,
                max: 32,
            });
        }
        Ok(PedDhsProblem {
            scenario,
            objective,
            cfg,
            cache: RefCell::new(vec![HashMap::new(); scenario.n_junctions()]),
        })
    }
}

impl ScheduleCost for PedDhsProblem<'_> {
    fn n_bits(&self) -> usize {
        self.scenario.n_junctions() * self.scenario.steps
    }

    fn cost(&self, bits: &[bool]) -> Result<f64> {
        let steps = self.scenario.steps;
        debug_assert_eq!(bits.len(), self.n_bits());
        let mut total = 0.0;
        let mut cache = self.cache.borrow_mut();
        for j in 0..self.scenario.n_junctions() {
            let row = &bits[j * steps..(j + 1) * steps];
            let mut key = 0u32;
            for (p, &b) in row.iter().enumerate() {
                if b {
                    key |= 1 << p;
                }
            }
            if let Some(&c) = cache[j].get(&key) {
                total += c;
                continue;
            }
            let stages: Vec<Stage> = row
                .iter()
                .map(|&b| if b { Stage::Vertical } else { Stage::Horizontal })
                .collect();
            let c = junction_cost(self.scenario, j, &stages, self.objective, &self.cfg)?;
            cache[j].insert(key, c);
            total += c;
        }
        Ok(total)
    }
}
