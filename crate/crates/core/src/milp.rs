//! Mixed-integer linear encoding of the pedestrian delay scheduling problem.
//!
//! The encoding follows the simulator exactly: stage binaries gate integer
//! flow counts, explicit capacity variables are selected by first-interval
//! and previous-stage indicators through big-M rows, and a pair of
//! epsilon-relaxed inequalities pins each next-interval volume to the
//! integer the simulator computes.  `check_trace` replays a simulation
//! through every generated row; `max_flow_assignment` resolves the unique
//! saturated assignment for a fixed signal schedule by bound propagation
//! over the generated rows, without an external solver.
//!
//! Naming: junctions are 0-based (`j0`), intervals 1-based (`k1`), corners
//! 1-based (`c1`), stages `h`/`v`.

pub mod lp;

use crate::error::{Error, Result};
use crate::num::floor_count;
use crate::ped::{PedScenario, PedTrace};
use crate::schedule::StageSchedule;
use crate::topology::{partner, Stage, NUM_CORNERS};

/// Gap used by the floor-pinning inequalities.  Volume and flow variables
/// are integers and every ratio lives on the 1e-4 grid, so fractional parts
/// of constraint expressions are either zero or at least this large.
pub const EPSILON: f64 = 1e-4;

/// Slack allowed when evaluating rows on floating-point assignments; well
/// below [`EPSILON`] and well above accumulated rounding noise.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

/// One decision variable.  Infinite bounds are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// A linear row: `sum(coeff * var) sense rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

/// Big-M and epsilon values the rows were generated with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MilpMeta {
    pub big_m: f64,
    pub big_m1: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpModel {
    pub name: String,
    pub sense: ObjSense,
    pub objective: Vec<(usize, f64)>,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub meta: MilpMeta,
}

impl MilpModel {
    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn count_kind(&self, kind: VarKind) -> usize {
        self.variables.iter().filter(|v| v.kind == kind).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Structural soundness: every term references a declared variable.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        for (v, _) in &self.objective {
            if *v >= n {
                return Err(Error::Parse(format!(
                    "objective references undeclared variable {v}"
                )));
            }
        }
        for row in &self.constraints {
            for (v, _) in &row.terms {
                if *v >= n {
                    return Err(Error::Parse(format!(
                        "row {} references undeclared variable {v}",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fixed variable order: per junction, per interval, a block of
/// `[theta_H, theta_V, delta_H, delta_V, cap_H, cap_V, flow_H_c1..c4,
/// flow_V_c1..c4, vol_c1..c4]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MilpLayout {
    pub n_junctions: usize,
    pub steps: usize,
}

const BLOCK: usize = 18;
const OFF_THETA: usize = 0;
const OFF_DELTA: usize = 2;
const OFF_CAP: usize = 4;
const OFF_FLOW: usize = 6;
const OFF_VOL: usize = 14;

impl MilpLayout {
    fn base(&self, junction: usize, t: usize) -> usize {
        debug_assert!(junction < self.n_junctions && t < self.steps);
        (junction * self.steps + t) * BLOCK
    }

    pub fn n_variables(&self) -> usize {
        self.n_junctions * self.steps * BLOCK
    }

    pub fn theta(&self, junction: usize, t: usize, stage: Stage) -> usize {
        self.base(junction, t) + OFF_THETA + stage.index()
    }

    pub fn delta(&self, junction: usize, t: usize, stage: Stage) -> usize {
        self.base(junction, t) + OFF_DELTA + stage.index()
    }

    pub fn cap(&self, junction: usize, t: usize, stage: Stage) -> usize {
        self.base(junction, t) + OFF_CAP + stage.index()
    }

    /// Flow leaving `corner` over the stage-`stage` crossing at interval `t`.
    pub fn flow(&self, junction: usize, t: usize, stage: Stage, corner: usize) -> usize {
        debug_assert!(corner < NUM_CORNERS);
        self.base(junction, t) + OFF_FLOW + stage.index() * NUM_CORNERS + corner
    }

    pub fn vol(&self, junction: usize, t: usize, corner: usize) -> usize {
        debug_assert!(corner < NUM_CORNERS);
        self.base(junction, t) + OFF_VOL + corner
    }
}

/// A generated model together with its variable layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PedMilp {
    pub model: MilpModel,
    pub layout: MilpLayout,
}

/// Platoon service rate in pedestrians per second of green window: single
/// file at 0.27 s each on narrow crosswalks, 0.81 s per pedestrian-metre of
/// width otherwise.
fn service_rate(width: f64) -> f64 {
    if width <= 3.0 {
        1.0 / 0.27
    } else {
        width / 0.81
    }
}

/// Build the delay-minimizing program for a pedestrian scenario.
///
/// Scenarios carrying pre-horizon signal state are rejected: the encoding
/// pins the first interval of every stage to the first-green capacity via
/// the first-interval indicator, which has no row form for "stage o was
/// green before the horizon".
pub fn build_milp(scenario: &PedScenario) -> Result<PedMilp> {
    scenario.validate()?;
    if scenario.junctions.iter().any(|j| j.prev_stage.is_some()) {
        return Err(Error::InvalidScenario(
            "program encoding requires a fresh signal start (no pre-horizon stage)".into(),
        ));
    }
    let caps = scenario.geometry.stage_caps(scenario.delta)?;
    let n_junctions = scenario.n_junctions();
    let steps = scenario.steps;
    let delta = scenario.delta;
    let layout = MilpLayout { n_junctions, steps };

    let rate = service_rate(scenario.geometry.width);
    // Capacity expressions: first-green fits the window after start-up and
    // crossing, continuing green fits the whole interval.
    let a_first = rate * (delta - scenario.geometry.base_crossing());
    let a_cont = rate * delta;
    debug_assert_eq!(floor_count(a_first), caps.first);
    debug_assert_eq!(floor_count(a_cont), caps.cont);

    // No feasible flow exceeds the continuing capacity, and no volume
    // exceeds everything a junction could ever hold.
    let max_load = scenario
        .junctions
        .iter()
        .map(|j| {
            j.initial.iter().sum::<i64>()
                + j.arrivals.iter().map(|a| a.iter().sum::<i64>()).sum::<i64>()
        })
        .max()
        .unwrap_or(0);
    let big_m = (max_load + caps.cont) as f64;
    let big_m1 = (steps as f64).max(a_cont).ceil() + 1.0;
    let eps = EPSILON;

    let mut variables = Vec::with_capacity(layout.n_variables());
    for j in 0..n_junctions {
        for t in 0..steps {
            let k = t + 1;
            for o in Stage::ALL {
                variables.push(Variable {
                    name: format!("theta_j{j}_k{k}_{}", o.short()),
                    kind: VarKind::Binary,
                    lower: 0.0,
                    upper: 1.0,
                });
            }
            for o in Stage::ALL {
                // The first-interval indicator is constant by definition;
                // pinning it through bounds keeps the capacity rows linear.
                let pinned = if k == 1 { 1.0 } else { 0.0 };
                variables.push(Variable {
                    name: format!("delta_j{j}_k{k}_{}", o.short()),
                    kind: VarKind::Binary,
                    lower: if k == 1 { pinned } else { 0.0 },
                    upper: if k == 1 { pinned } else { 1.0 },
                });
            }
            for o in Stage::ALL {
                variables.push(Variable {
                    name: format!("cap_j{j}_k{k}_{}", o.short()),
                    kind: VarKind::Integer,
                    lower: 0.0,
                    upper: f64::INFINITY,
                });
            }
            for o in Stage::ALL {
                for c in 0..NUM_CORNERS {
                    variables.push(Variable {
                        name: format!("flow_j{j}_k{k}_{}_c{}", o.short(), c + 1),
                        kind: VarKind::Integer,
                        lower: 0.0,
                        upper: f64::INFINITY,
                    });
                }
            }
            for c in 0..NUM_CORNERS {
                let init = scenario.junctions[j].initial[c] as f64;
                variables.push(Variable {
                    name: format!("vol_j{j}_k{k}_c{}", c + 1),
                    kind: VarKind::Integer,
                    lower: if k == 1 { init } else { 0.0 },
                    upper: if k == 1 { init } else { f64::INFINITY },
                });
            }
        }
    }

    let mut constraints = Vec::new();
    for j in 0..n_junctions {
        let demand = &scenario.junctions[j];
        for t in 0..steps {
            let k = t + 1;
            constraints.push(Constraint {
                name: format!("stage_j{j}_k{k}"),
                terms: vec![
                    (layout.theta(j, t, Stage::Horizontal), 1.0),
                    (layout.theta(j, t, Stage::Vertical), 1.0),
                ],
                sense: Sense::Eq,
                rhs: 1.0,
            });
            for o in Stage::ALL {
                for c in 0..NUM_CORNERS {
                    constraints.push(Constraint {
                        name: format!("gate_j{j}_k{k}_{}_c{}", o.short(), c + 1),
                        terms: vec![
                            (layout.flow(j, t, o, c), 1.0),
                            (layout.theta(j, t, o), -big_m),
                        ],
                        sense: Sense::Le,
                        rhs: 0.0,
                    });
                }
            }
            for o in Stage::ALL {
                let s = o.short();
                let d = layout.delta(j, t, o);
                let cap = layout.cap(j, t, o);
                // Two-sided gating ties the indicator to "k = 1".
                constraints.push(Constraint {
                    name: format!("ksel_lo_j{j}_k{k}_{s}"),
                    terms: vec![(d, big_m1)],
                    sense: Sense::Le,
                    rhs: big_m1 + (k - 1) as f64,
                });
                constraints.push(Constraint {
                    name: format!("ksel_hi_j{j}_k{k}_{s}"),
                    terms: vec![(d, big_m1)],
                    sense: Sense::Le,
                    rhs: big_m1 - (k - 1) as f64,
                });
                // First interval: capacity equals the first-green count.
                constraints.push(Constraint {
                    name: format!("cap_first_le_j{j}_k{k}_{s}"),
                    terms: vec![(cap, 1.0), (d, big_m1)],
                    sense: Sense::Le,
                    rhs: a_first + big_m1,
                });
                constraints.push(Constraint {
                    name: format!("cap_first_ge_j{j}_k{k}_{s}"),
                    terms: vec![(cap, -1.0), (d, big_m1)],
                    sense: Sense::Le,
                    rhs: big_m1 - a_first + 1.0 - eps,
                });
                if k >= 2 {
                    let prev = layout.theta(j, t - 1, o);
                    // Previous interval red for this stage: first-green.
                    constraints.push(Constraint {
                        name: format!("cap_red_le_j{j}_k{k}_{s}"),
                        terms: vec![(cap, 1.0), (prev, -big_m1)],
                        sense: Sense::Le,
                        rhs: a_first,
                    });
                    constraints.push(Constraint {
                        name: format!("cap_red_ge_j{j}_k{k}_{s}"),
                        terms: vec![(cap, -1.0), (prev, -big_m1)],
                        sense: Sense::Le,
                        rhs: -a_first + 1.0 - eps,
                    });
                    // Previous interval green: continuing capacity.
                    constraints.push(Constraint {
                        name: format!("cap_green_le_j{j}_k{k}_{s}"),
                        terms: vec![(cap, 1.0), (prev, big_m1)],
                        sense: Sense::Le,
                        rhs: a_cont + big_m1,
                    });
                    constraints.push(Constraint {
                        name: format!("cap_green_ge_j{j}_k{k}_{s}"),
                        terms: vec![(cap, -1.0), (prev, big_m1)],
                        sense: Sense::Le,
                        rhs: big_m1 - a_cont + 1.0 - eps,
                    });
                }
            }
            for o in Stage::ALL {
                for c in 0..NUM_CORNERS {
                    constraints.push(Constraint {
                        name: format!("fcap_j{j}_k{k}_{}_c{}", o.short(), c + 1),
                        terms: vec![(layout.flow(j, t, o, c), 1.0), (layout.cap(j, t, o), -1.0)],
                        sense: Sense::Le,
                        rhs: 0.0,
                    });
                }
            }
            for o in Stage::ALL {
                for c in 0..NUM_CORNERS {
                    let eta = demand.eta(t, c, o);
                    constraints.push(Constraint {
                        name: format!("fdem_j{j}_k{k}_{}_c{}", o.short(), c + 1),
                        terms: vec![(layout.flow(j, t, o, c), 1.0), (layout.vol(j, t, c), -eta)],
                        sense: Sense::Le,
                        rhs: 0.0,
                    });
                }
            }
            if k < steps {
                for c in 0..NUM_CORNERS {
                    let gamma = demand.gamma[t][c];
                    let arrivals = demand.arrivals[t][c] as f64;
                    let stay = 1.0 - gamma;
                    let inflow_h = layout.flow(j, t, Stage::Horizontal, partner(c, Stage::Horizontal));
                    let inflow_v = layout.flow(j, t, Stage::Vertical, partner(c, Stage::Vertical));
                    let out_h = layout.flow(j, t, Stage::Horizontal, c);
                    let out_v = layout.flow(j, t, Stage::Vertical, c);
                    let here = layout.vol(j, t, c);
                    let next = layout.vol(j, t + 1, c);
                    // next >= here + arrivals + (1-gamma) inflow - outflow,
                    // paired with a strict upper gap of 1 - eps: together
                    // they pin `next` to the ceiling of the balance, which
                    // is exactly the simulator's retained-arrival rounding.
                    constraints.push(Constraint {
                        name: format!("dyn_lo_j{j}_k{k}_c{}", c + 1),
                        terms: vec![
                            (here, 1.0),
                            (next, -1.0),
                            (inflow_h, stay),
                            (inflow_v, stay),
                            (out_h, -1.0),
                            (out_v, -1.0),
                        ],
                        sense: Sense::Le,
                        rhs: -arrivals,
                    });
                    constraints.push(Constraint {
                        name: format!("dyn_hi_j{j}_k{k}_c{}", c + 1),
                        terms: vec![
                            (here, -1.0),
                            (next, 1.0),
                            (inflow_h, -stay),
                            (inflow_v, -stay),
                            (out_h, 1.0),
                            (out_v, 1.0),
                        ],
                        sense: Sense::Le,
                        rhs: arrivals + 1.0 - eps,
                    });
                }
            }
        }
    }

    let mut objective = Vec::new();
    for j in 0..n_junctions {
        for t in 0..steps {
            for c in 0..NUM_CORNERS {
                objective.push((layout.vol(j, t, c), delta));
            }
            for o in Stage::ALL {
                for c in 0..NUM_CORNERS {
                    objective.push((layout.flow(j, t, o, c), -delta));
                }
            }
        }
    }

    Ok(PedMilp {
        model: MilpModel {
            name: format!("ped_delay_{n_junctions}j_{steps}k"),
            sense: ObjSense::Minimize,
            objective,
            variables,
            constraints,
            meta: MilpMeta {
                big_m,
                big_m1,
                epsilon: eps,
            },
        },
        layout,
    })
}

/// One violated row or bound.  `amount` is the positive excess.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub row: String,
    pub amount: f64,
}

/// Outcome of evaluating an assignment against every row, bound, and
/// integrality requirement.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub rows_checked: usize,
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluate `x` against all rows and variable requirements of `model`.
pub fn check_assignment(model: &MilpModel, x: &[f64], tol: f64) -> CheckReport {
    assert_eq!(x.len(), model.variables.len(), "assignment length");
    let mut violations = Vec::new();
    let mut rows_checked = 0;
    for row in &model.constraints {
        rows_checked += 1;
        let lhs: f64 = row.terms.iter().map(|&(v, c)| c * x[v]).sum();
        let excess = match row.sense {
            Sense::Le => lhs - row.rhs,
            Sense::Ge => row.rhs - lhs,
            Sense::Eq => (lhs - row.rhs).abs(),
        };
        if excess > tol {
            violations.push(Violation {
                row: row.name.clone(),
                amount: excess,
            });
        }
    }
    for (var, &value) in model.variables.iter().zip(x) {
        rows_checked += 1;
        let excess = (var.lower - value).max(value - var.upper);
        if excess > tol {
            violations.push(Violation {
                row: format!("bound:{}", var.name),
                amount: excess,
            });
        }
        if var.kind != VarKind::Continuous {
            let frac = (value - value.round()).abs();
            if frac > tol {
                violations.push(Violation {
                    row: format!("integer:{}", var.name),
                    amount: frac,
                });
            }
        }
    }
    CheckReport {
        rows_checked,
        violations,
    }
}

/// Map a simulation under `schedule` onto the model's variables.
pub fn trace_assignment(
    pm: &PedMilp,
    schedule: &StageSchedule,
    trace: &PedTrace,
) -> Result<Vec<f64>> {
    let layout = pm.layout;
    if schedule.n_junctions() != layout.n_junctions || schedule.steps() != layout.steps {
        return Err(Error::InvalidSchedule(format!(
            "schedule shape {}x{} does not match model {}x{}",
            schedule.n_junctions(),
            schedule.steps(),
            layout.n_junctions,
            layout.steps
        )));
    }
    if trace.junctions.len() != layout.n_junctions || trace.steps != layout.steps {
        return Err(Error::InvalidParameter(
            "trace shape does not match model".into(),
        ));
    }
    let mut x = vec![0.0; layout.n_variables()];
    for j in 0..layout.n_junctions {
        let junction = &trace.junctions[j];
        for t in 0..layout.steps {
            let active = schedule.stage(j, t);
            for o in Stage::ALL {
                x[layout.theta(j, t, o)] = (active == o) as i64 as f64;
                x[layout.delta(j, t, o)] = (t == 0) as i64 as f64;
                x[layout.cap(j, t, o)] = junction.caps[t][o.index()] as f64;
                for c in 0..NUM_CORNERS {
                    let flow = if active == o { junction.flows[t][c] } else { 0 };
                    x[layout.flow(j, t, o, c)] = flow as f64;
                }
            }
            for c in 0..NUM_CORNERS {
                x[layout.vol(j, t, c)] = junction.volumes[t][c] as f64;
            }
        }
    }
    Ok(x)
}

/// Check a simulated trace against every generated row.
pub fn check_trace(
    pm: &PedMilp,
    schedule: &StageSchedule,
    trace: &PedTrace,
) -> Result<CheckReport> {
    let x = trace_assignment(pm, schedule, trace)?;
    Ok(check_assignment(&pm.model, &x, CHECK_TOL))
}

/// Fix the stage binaries to `schedule` and maximize every flow variable by
/// propagating bounds through the generated rows, interval by interval.
///
/// Capacities and next-interval volumes are pinned by their rows to a
/// single integer; flow variables take the floor of their tightest upper
/// bound, which is the served-flow maximum.  Works entirely off the model's
/// rows and bounds, so it independently cross-checks the row generator
/// against the simulator.
pub fn max_flow_assignment(pm: &PedMilp, schedule: &StageSchedule) -> Result<Vec<f64>> {
    let layout = pm.layout;
    let model = &pm.model;
    if schedule.n_junctions() != layout.n_junctions || schedule.steps() != layout.steps {
        return Err(Error::InvalidSchedule(format!(
            "schedule shape {}x{} does not match model {}x{}",
            schedule.n_junctions(),
            schedule.steps(),
            layout.n_junctions,
            layout.steps
        )));
    }

    let n = model.variables.len();
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, row) in model.constraints.iter().enumerate() {
        for &(v, _) in &row.terms {
            rows_of[v].push(r);
        }
    }

    let mut x = vec![0.0f64; n];
    let mut known = vec![false; n];

    // Resolve one integer variable from every row whose other variables are
    // already known, plus its own bounds.
    let resolve = |v: usize, x: &[f64], known: &[bool]| -> Result<f64> {
        let var = &model.variables[v];
        let mut upper = var.upper;
        let mut lower = var.lower;
        for &r in &rows_of[v] {
            let row = &model.constraints[r];
            let mut coeff = 0.0;
            let mut rest = 0.0;
            let mut usable = true;
            for &(w, c) in &row.terms {
                if w == v {
                    coeff += c;
                } else if known[w] {
                    rest += c * x[w];
                } else {
                    usable = false;
                    break;
                }
            }
            if !usable || coeff == 0.0 {
                continue;
            }
            let bound = (row.rhs - rest) / coeff;
            match (row.sense, coeff > 0.0) {
                (Sense::Le, true) => upper = upper.min(bound),
                (Sense::Le, false) => lower = lower.max(bound),
                (Sense::Ge, true) => lower = lower.max(bound),
                (Sense::Ge, false) => upper = upper.min(bound),
                (Sense::Eq, _) => {
                    upper = upper.min(bound);
                    lower = lower.max(bound);
                }
            }
        }
        let value = floor_count(upper).max(0) as f64;
        if value + CHECK_TOL < lower {
            return Err(Error::InvalidScenario(format!(
                "no feasible integer for {} in [{lower}, {upper}]",
                var.name
            )));
        }
        Ok(value)
    };

    for j in 0..layout.n_junctions {
        for t in 0..layout.steps {
            let active = schedule.stage(j, t);
            for o in Stage::ALL {
                let v = layout.theta(j, t, o);
                x[v] = (active == o) as i64 as f64;
                known[v] = true;
                let d = layout.delta(j, t, o);
                x[d] = (t == 0) as i64 as f64;
                known[d] = true;
            }
            if t == 0 {
                for c in 0..NUM_CORNERS {
                    let v = layout.vol(j, t, c);
                    x[v] = model.variables[v].lower;
                    known[v] = true;
                }
            }
            for o in Stage::ALL {
                let v = layout.cap(j, t, o);
                x[v] = resolve(v, &x, &known)?;
                known[v] = true;
            }
            for o in Stage::ALL {
                for c in 0..NUM_CORNERS {
                    let v = layout.flow(j, t, o, c);
                    x[v] = resolve(v, &x, &known)?;
                    known[v] = true;
                }
            }
            if t + 1 < layout.steps {
                for c in 0..NUM_CORNERS {
                    let v = layout.vol(j, t + 1, c);
                    x[v] = resolve(v, &x, &known)?;
                    known[v] = true;
                }
            }
        }
    }
    Ok(x)
}
