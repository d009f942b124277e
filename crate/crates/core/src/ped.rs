//! Pedestrian corner-hopping flow model.
//!
//! Each junction holds four corner volumes.  During an interval the active
//! stage releases two crosswalks; every corner sends the diverted share of
//! its volume along its released stream, capped by the crosswalk capacity,
//! and a departure fraction of the pedestrians that just arrived at their
//! destination corner leaves the system.  Junctions do not exchange
//! pedestrians, so network quantities decompose into per-junction sums.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::num::floor_count;
use crate::schedule::StageSchedule;
use crate::topology::{partner, Stage, NUM_CORNERS};
use crate::unhappiness::{blocked_averages, red_run_profile, UnhappinessConfig};

/// Crosswalk geometry and walking parameters, shared by all crosswalks of an
/// instance.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosswalkGeometry {
    /// Crosswalk length in metres.
    pub length: f64,
    /// Crosswalk width in metres.
    pub width: f64,
    /// Walking speed in metres per second.
    pub walk_speed: f64,
    /// Start-up lost time in seconds.
    pub startup: f64,
}

impl Default for CrosswalkGeometry {
    fn default() -> Self {
        CrosswalkGeometry {
            length: 8.5,
            width: 4.0,
            walk_speed: 1.2,
            startup: 3.2,
        }
    }
}

/// Per-interval crosswalk capacities of one geometry.  `first` applies to
/// the first interval of a green run (the start-up time and one full
/// crossing must fit before anyone else is served), `cont` to every later
/// interval of the run, where the whole interval serves pedestrians.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCaps {
    pub first: i64,
    pub cont: i64,
}

impl CrosswalkGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.length) && ok(self.width) && ok(self.walk_speed) && ok(self.startup)) {
            return Err(Error::InvalidParameter(format!(
                "crosswalk geometry must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    /// Base crossing duration without any platoon: start-up plus walk time.
    pub fn base_crossing(&self) -> f64 {
        self.startup + self.length / self.walk_speed
    }

    /// Time for a platoon of `n_ped` pedestrians to clear the crosswalk.
    /// Narrow crosswalks (width <= 3 m) serve pedestrians in single file at
    /// 0.27 s each; wider ones serve 0.81 s per pedestrian-metre of width.
    pub fn crossing_time(&self, n_ped: i64) -> f64 {
        let headway = if self.width <= 3.0 {
            0.27 * n_ped as f64
        } else {
            0.81 * n_ped as f64 / self.width
        };
        self.base_crossing() + headway
    }

    /// Largest platoon clearing within `window` seconds of service time.
    fn platoon_fitting(&self, window: f64) -> i64 {
        let n = if self.width <= 3.0 {
            window / 0.27
        } else {
            window * self.width / 0.81
        };
        floor_count(n).max(0)
    }

    /// First-green and continuing-green capacities for a signal interval of
    /// `delta` seconds.  Errors when the interval cannot even fit the
    /// start-up and walk time, which would make every green useless.
    pub fn stage_caps(&self, delta: f64) -> Result<StageCaps> {
        self.validate()?;
        let window = delta - self.base_crossing();
        if window <= 0.0 {
            return Err(Error::GeometryTooTight {
                delta,
                startup: self.startup,
                crossing: self.length / self.walk_speed,
            });
        }
        Ok(StageCaps {
            first: self.platoon_fitting(window),
            cont: self.platoon_fitting(delta),
        })
    }
}

/// Crosswalk capacity at interval `k` (numbered from 1).  The first interval
/// of the horizon and any interval following a red one get the first-green
/// capacity; an interval whose predecessor was green for the same stage gets
/// the larger continuing capacity.
pub fn capacity(
    geometry: &CrosswalkGeometry,
    delta: f64,
    k: usize,
    prev_green: bool,
) -> Result<i64> {
    let caps = geometry.stage_caps(delta)?;
    Ok(if k <= 1 || !prev_green {
        caps.first
    } else {
        caps.cont
    })
}

/// Demand and routing parameters for one junction over the horizon.  All
/// series are indexed by interval; `alpha` is the share of each corner's
/// volume heading horizontally (the rest heads vertically) and `gamma` the
/// fraction of crosswalk arrivals that leaves the system at the destination
/// corner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctionDemand {
    pub initial: [i64; NUM_CORNERS],
    pub arrivals: Vec<[i64; NUM_CORNERS]>,
    pub alpha: Vec<[f64; NUM_CORNERS]>,
    pub gamma: Vec<[f64; NUM_CORNERS]>,
    /// Stage that was green in the interval before the horizon, if any.
    /// `None` means the signals start fresh, so every stage begins on the
    /// first-green capacity.
    pub prev_stage: Option<Stage>,
}

impl JunctionDemand {
    /// Uniform zero-demand junction, useful as a building block in tests.
    pub fn empty(steps: usize) -> JunctionDemand {
        JunctionDemand {
            initial: [0; NUM_CORNERS],
            arrivals: vec![[0; NUM_CORNERS]; steps],
            alpha: vec![[0.5; NUM_CORNERS]; steps],
            gamma: vec![[0.0; NUM_CORNERS]; steps],
            prev_stage: None,
        }
    }

    /// Diverted share of corner `i` under `stage` at interval `t`.
    pub fn eta(&self, t: usize, corner: usize, stage: Stage) -> f64 {
        match stage {
            Stage::Horizontal => self.alpha[t][corner],
            Stage::Vertical => 1.0 - self.alpha[t][corner],
        }
    }

    fn validate(&self, steps: usize, junction: usize) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidScenario(msg));
        if self.arrivals.len() != steps || self.alpha.len() != steps || self.gamma.len() != steps {
            return err(format!(
                "junction {junction}: demand series must have {steps} intervals"
            ));
        }
        if self.initial.iter().any(|&p| p < 0) {
            return err(format!("junction {junction}: negative initial volume"));
        }
        for t in 0..steps {
            if self.arrivals[t].iter().any(|&a| a < 0) {
                return err(format!("junction {junction}: negative arrivals at {t}"));
            }
            let in_unit = |x: f64| (0.0..=1.0).contains(&x);
            if !self.alpha[t].iter().all(|&a| in_unit(a)) {
                return err(format!("junction {junction}: diversion ratio outside [0,1]"));
            }
            if !self.gamma[t].iter().all(|&g| in_unit(g)) {
                return err(format!("junction {junction}: departure ratio outside [0,1]"));
            }
        }
        Ok(())
    }
}

/// Pedestrian side of a scenario: geometry, discretisation, and per-junction
/// demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedScenario {
    pub geometry: CrosswalkGeometry,
    pub delta: f64,
    pub steps: usize,
    pub junctions: Vec<JunctionDemand>,
}

impl PedScenario {
    pub fn n_junctions(&self) -> usize {
        self.junctions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.junctions.is_empty() {
            return Err(Error::InvalidScenario("no junctions".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidScenario("horizon has zero intervals".into()));
        }
        self.geometry.stage_caps(self.delta)?;
        for (j, demand) in self.junctions.iter().enumerate() {
            demand.validate(self.steps, j)?;
        }
        Ok(())
    }

    /// Scenario restricted to a single junction, preserving all parameters.
    pub fn single(&self, junction: usize) -> PedScenario {
        PedScenario {
            geometry: self.geometry,
            delta: self.delta,
            steps: self.steps,
            junctions: vec![self.junctions[junction].clone()],
        }
    }
}

/// Outcome of advancing one junction by one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct PedStep {
    /// Capacity per stage for this interval, indexed by `Stage::index`.
    pub caps: [i64; 2],
    /// Count sent out of each corner along its released stream.
    pub flows: [i64; NUM_CORNERS],
    /// Count arriving at each corner over the crosswalks.
    pub inflows: [i64; NUM_CORNERS],
    /// Count leaving the system at each corner.
    pub departed: [i64; NUM_CORNERS],
    /// Corner volumes at the start of the next interval.
    pub next: [i64; NUM_CORNERS],
    /// Sum of waiting pedestrians over the interval, in count units
    /// (multiply by the interval length for person-seconds).
    pub delay_raw: i64,
}

/// Advance one junction by one interval under `stage`.  `prev` is the stage
/// green in the previous interval (or before the horizon), which selects
/// between first-green and continuing capacity.
pub fn step_junction(
    caps: &StageCaps,
    volumes: &[i64; NUM_CORNERS],
    stage: Stage,
    prev: Option<Stage>,
    arrivals: &[i64; NUM_CORNERS],
    alpha: &[f64; NUM_CORNERS],
    gamma: &[f64; NUM_CORNERS],
) -> PedStep {
    let cap_for = |o: Stage| if prev == Some(o) { caps.cont } else { caps.first };
    let interval_caps = [cap_for(Stage::Horizontal), cap_for(Stage::Vertical)];
    let cap = interval_caps[stage.index()];

    let mut flows = [0i64; NUM_CORNERS];
    for i in 0..NUM_CORNERS {
        let eta = match stage {
            Stage::Horizontal => alpha[i],
            Stage::Vertical => 1.0 - alpha[i],
        };
        flows[i] = floor_count(volumes[i] as f64 * eta).min(cap);
    }

    let mut inflows = [0i64; NUM_CORNERS];
    let mut departed = [0i64; NUM_CORNERS];
    let mut next = [0i64; NUM_CORNERS];
    let mut delay_raw = 0i64;
    for i in 0..NUM_CORNERS {
        inflows[i] = flows[partner(i, stage)];
        departed[i] = floor_count(gamma[i] * inflows[i] as f64);
        next[i] = volumes[i] - flows[i] + arrivals[i] + inflows[i] - departed[i];
        delay_raw += volumes[i] - flows[i];
    }

    PedStep {
        caps: interval_caps,
        flows,
        inflows,
        departed,
        next,
        delay_raw,
    }
}

/// Simulation record of one junction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedJunctionTrace {
    pub stages: Vec<Stage>,
    /// Corner volumes, one entry per interval boundary (`steps + 1` rows).
    pub volumes: Vec<[i64; NUM_CORNERS]>,
    /// Outgoing crosswalk count per corner and interval.
    pub flows: Vec<[i64; NUM_CORNERS]>,
    /// Capacity per stage and interval, indexed by `Stage::index`.
    pub caps: Vec<[i64; 2]>,
    /// Waiting count per interval (all corners).
    pub delay_raw: Vec<i64>,
}

impl PedJunctionTrace {
    /// Crosswalk arrivals at corner `i` during interval `t`, reconstructed
    /// from the partner map.
    pub fn inflow(&self, t: usize, corner: usize) -> i64 {
        self.flows[t][partner(corner, self.stages[t])]
    }
}

/// Simulation record of the whole pedestrian layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedTrace {
    pub delta: f64,
    pub steps: usize,
    pub junctions: Vec<PedJunctionTrace>,
}

impl PedTrace {
    /// Total waiting in count-interval units.
    pub fn raw_delay(&self) -> i64 {
        self.junctions
            .iter()
            .map(|j| j.delay_raw.iter().sum::<i64>())
            .sum()
    }

    /// Total pedestrian delay in person-seconds.
    pub fn delay_cost(&self) -> f64 {
        self.raw_delay() as f64 * self.delta
    }

    /// CSV with one row per junction, interval, and corner.  The trailing
    /// columns describe the interval's red stage: the length of the red run
    /// ending at this interval (zero if none ends), the average volume
    /// blocked over that run, and its contribution to the unhappiness
    /// objective.
    pub fn to_csv(&self, scenario: &PedScenario, cfg: &UnhappinessConfig) -> Result<String> {
        let mut out = String::from(
            "junction,interval,corner,volume,stage,capacity,flow_count,step_delay,phi,p_bar,unhappiness_term\n",
        );
        for (j, tr) in self.junctions.iter().enumerate() {
            let demand = &scenario.junctions[j];
            let mut profiles = Vec::new();
            for o in Stage::ALL {
                let greens: Vec<bool> = tr.stages.iter().map(|&s| s == o).collect();
                let profile = red_run_profile(&greens);
                let avg =
                    blocked_averages(&profile, &greens, &tr.volumes, |t, i| demand.eta(t, i, o));
                profiles.push((profile, avg));
            }
            for t in 0..self.steps {
                let stage = tr.stages[t];
                let red = stage.opposite();
                let (profile, avg) = &profiles[red.index()];
                let phi = profile.phi[t];
                for i in 0..NUM_CORNERS {
                    let p_bar = avg.p_bar[t][i];
                    let term = if phi > 0 {
                        let arg = cfg.exponent_arg(phi, self.delta);
                        cfg.check_arg(arg)?;
                        p_bar * arg.exp()
                    } else {
                        0.0
                    };
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        j,
                        t + 1,
                        i + 1,
                        tr.volumes[t][i],
                        stage,
                        tr.caps[t][stage.index()],
                        tr.flows[t][i],
                        (tr.volumes[t][i] - tr.flows[t][i]) as f64 * self.delta,
                        phi,
                        p_bar,
                        term
                    );
                }
            }
        }
        Ok(out)
    }
}

/// Simulate one junction over the horizon.
pub fn simulate_junction(
    caps: &StageCaps,
    demand: &JunctionDemand,
    stages: &[Stage],
) -> PedJunctionTrace {
    let steps = stages.len();
    let mut volumes = Vec::with_capacity(steps + 1);
    let mut flows = Vec::with_capacity(steps);
    let mut caps_out = Vec::with_capacity(steps);
    let mut delay_raw = Vec::with_capacity(steps);

    let mut current = demand.initial;
    volumes.push(current);
    for t in 0..steps {
        let prev = if t == 0 {
            demand.prev_stage
        } else {
            Some(stages[t - 1])
        };
        let step = step_junction(
            caps,
            &current,
            stages[t],
            prev,
            &demand.arrivals[t],
            &demand.alpha[t],
            &demand.gamma[t],
        );
        caps_out.push(step.caps);
        flows.push(step.flows);
        delay_raw.push(step.delay_raw);
        current = step.next;
        volumes.push(current);
    }

    PedJunctionTrace {
        stages: stages.to_vec(),
        volumes,
        flows,
        caps: caps_out,
        delay_raw,
    }
}

/// Simulate the whole pedestrian layer under a schedule.
pub fn simulate(scenario: &PedScenario, schedule: &StageSchedule) -> Result<PedTrace> {
    scenario.validate()?;
    schedule.check_shape(scenario.n_junctions(), scenario.steps)?;
    let caps = scenario.geometry.stage_caps(scenario.delta)?;
    let junctions = scenario
        .junctions
        .iter()
        .enumerate()
        .map(|(j, demand)| simulate_junction(&caps, demand, schedule.junction_row(j)))
        .collect();
    Ok(PedTrace {
        delta: scenario.delta,
        steps: scenario.steps,
        junctions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_geometry() -> CrosswalkGeometry {
        CrosswalkGeometry::default()
    }

    #[test]
    fn crossing_time_wide_crosswalk() {
        let g = default_geometry();
        let base = 3.2 + 8.5 / 1.2;
        assert!((g.crossing_time(0) - base).abs() < 1e-9);
        // 23 pedestrians on a 4 m crosswalk add 0.81*23/4 s.
        assert!((g.crossing_time(23) - 14.940_833_333_333_334).abs() < 1e-9);
    }

    #[test]
    fn crossing_time_narrow_crosswalk() {
        let g = CrosswalkGeometry {
            width: 3.0,
            ..default_geometry()
        };
        let expected = 3.2 + 8.5 / 1.2 + 0.27 * 10.0;
        assert!((g.crossing_time(10) - expected).abs() < 1e-9);
    }

    #[test]
    fn default_capacities() {
        let caps = default_geometry().stage_caps(15.0).unwrap();
        assert_eq!(caps.first, 23);
        assert_eq!(caps.cont, 74);
    }

    #[test]
    fn narrow_capacities() {
        let g = CrosswalkGeometry {
            width: 3.0,
            ..default_geometry()
        };
        let caps = g.stage_caps(15.0).unwrap();
        assert_eq!(caps.first, 17); // (15 - 3.2 - 8.5/1.2) / 0.27
        assert_eq!(caps.cont, 55); // 15 / 0.27
    }

    #[test]
    fn capacity_selects_on_signal_history() {
        let g = default_geometry();
        assert_eq!(capacity(&g, 15.0, 1, false).unwrap(), 23);
        assert_eq!(capacity(&g, 15.0, 1, true).unwrap(), 23); // k=1 always starts
        assert_eq!(capacity(&g, 15.0, 2, false).unwrap(), 23);
        assert_eq!(capacity(&g, 15.0, 2, true).unwrap(), 74);
    }

    #[test]
    fn capacity_consistent_with_crossing_time() {
        // The first-green capacity is the largest platoon whose crossing
        // time fits in the interval.
        let g = default_geometry();
        let caps = g.stage_caps(15.0).unwrap();
        assert!(g.crossing_time(caps.first) <= 15.0 + 1e-9);
        assert!(g.crossing_time(caps.first + 1) > 15.0);
    }

    #[test]
    fn too_short_interval_rejected() {
        let g = default_geometry();
        match g.stage_caps(10.0) {
            Err(Error::GeometryTooTight { .. }) => {}
            other => panic!("expected geometry error, got {other:?}"),
        }
    }

    #[test]
    fn step_moves_pedestrians_along_released_streams() {
        let caps = StageCaps { first: 23, cont: 74 };
        let volumes = [10, 0, 6, 0];
        let alpha = [0.5; 4];
        let gamma = [0.0; 4];
        let arrivals = [0; 4];
        let step = step_junction(
            &caps,
            &volumes,
            Stage::Horizontal,
            None,
            &arrivals,
            &alpha,
            &gamma,
        );
        assert_eq!(step.flows, [5, 0, 3, 0]);
        assert_eq!(step.inflows, [0, 5, 0, 3]);
        assert_eq!(step.next, [5, 5, 3, 3]);
        assert_eq!(step.delay_raw, 5 + 3 + 0 + 0 + 10 - 10); // 18 - 10 sent
        assert_eq!(step.delay_raw, 8);
    }

    #[test]
    fn step_caps_flow_at_capacity() {
        let caps = StageCaps { first: 3, cont: 74 };
        let step = step_junction(
            &caps,
            &[100, 0, 0, 0],
            Stage::Horizontal,
            None,
            &[0; 4],
            &[1.0; 4],
            &[0.0; 4],
        );
        assert_eq!(step.flows[0], 3);
        assert_eq!(step.caps, [3, 3]);
    }

    #[test]
    fn step_applies_departures_to_crosswalk_arrivals_only() {
        let caps = StageCaps { first: 23, cont: 74 };
        let step = step_junction(
            &caps,
            &[10, 0, 0, 0],
            Stage::Horizontal,
            None,
            &[0; 4],
            &[1.0, 1.0, 1.0, 1.0],
            &[0.0, 0.5, 0.0, 0.0],
        );
        // Corner 1 receives 10 and half depart.
        assert_eq!(step.inflows[1], 10);
        assert_eq!(step.departed[1], 5);
        assert_eq!(step.next, [0, 5, 0, 0]);
    }

    #[test]
    fn continuing_capacity_needs_same_stage() {
        let caps = StageCaps { first: 23, cont: 74 };
        let s = step_junction(
            &caps,
            &[0; 4],
            Stage::Horizontal,
            Some(Stage::Horizontal),
            &[0; 4],
            &[0.5; 4],
            &[0.0; 4],
        );
        assert_eq!(s.caps, [74, 23]);
        let s = step_junction(
            &caps,
            &[0; 4],
            Stage::Horizontal,
            Some(Stage::Vertical),
            &[0; 4],
            &[0.5; 4],
            &[0.0; 4],
        );
        assert_eq!(s.caps, [23, 74]);
        let s = step_junction(
            &caps,
            &[0; 4],
            Stage::Horizontal,
            None,
            &[0; 4],
            &[0.5; 4],
            &[0.0; 4],
        );
        assert_eq!(s.caps, [23, 23]);
    }

    #[test]
    fn simulate_checks_shapes() {
        let scenario = PedScenario {
            geometry: default_geometry(),
            delta: 15.0,
            steps: 3,
            junctions: vec![JunctionDemand::empty(3)],
        };
        let bad = StageSchedule::filled(1, 4, Stage::Horizontal);
        assert!(simulate(&scenario, &bad).is_err());
        let good = StageSchedule::filled(1, 3, Stage::Horizontal);
        let trace = simulate(&scenario, &good).unwrap();
        assert_eq!(trace.junctions[0].volumes.len(), 4);
        assert_eq!(trace.raw_delay(), 0);
    }

    #[test]
    fn delay_scales_with_interval_length() {
        let mut demand = JunctionDemand::empty(2);
        demand.initial = [7, 0, 0, 0];
        demand.alpha = vec![[0.0; 4]; 2]; // everyone wants to go vertically
        let scenario = PedScenario {
            geometry: default_geometry(),
            delta: 15.0,
            steps: 2,
            junctions: vec![demand],
        };
        // Horizontal-only schedule strands all 7 pedestrians both intervals.
        let sched = StageSchedule::filled(1, 2, Stage::Horizontal);
        let trace = simulate(&scenario, &sched).unwrap();
        assert_eq!(trace.raw_delay(), 14);
        assert!((trace.delay_cost() - 14.0 * 15.0).abs() < 1e-9);
    }
}
