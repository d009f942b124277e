//! Scenario container, deterministic generation, and the JSON file format.
//!
//! A scenario bundles the grid, pedestrian demand, and vehicle demand of one
//! instance.  Generated scenarios are fully determined by a seed and value
//! ranges; the file they serialise to is byte-stable, so seeds stand in for
//! whole data sets in experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::quantize_ratio;
use crate::ped::{CrosswalkGeometry, JunctionDemand, PedScenario};
use crate::topology::{build_grid, GridNetwork, GridSpec, Stage, NUM_CORNERS};
use crate::veh::{VehParams, VehScenario};

pub const FORMAT_NAME: &str = "crossflow-scenario";
pub const FORMAT_VERSION: u32 = 1;

/// Value ranges for scenario generation.  Integer ranges are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenRanges {
    pub ped_initial: (i64, i64),
    pub ped_arrivals: (i64, i64),
    pub gamma: (f64, f64),
    pub veh_initial: (i64, i64),
    pub veh_inflow: (i64, i64),
    pub veh_max_volume: i64,
}

impl Default for GenRanges {
    fn default() -> Self {
        GenRanges {
            ped_initial: (0, 30),
            ped_arrivals: (0, 5),
            gamma: (0.0, 0.5),
            veh_initial: (0, 50),
            veh_inflow: (0, 20),
            veh_max_volume: 100,
        }
    }
}

impl GenRanges {
    pub fn validate(&self) -> Result<()> {
        let int_range = |name: &str, (lo, hi): (i64, i64)| {
            if lo < 0 || hi < lo {
                Err(Error::InvalidParameter(format!(
                    "range {name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})"
                )))
            } else {
                Ok(())
            }
        };
        int_range("ped_initial", self.ped_initial)?;
        int_range("ped_arrivals", self.ped_arrivals)?;
        int_range("veh_initial", self.veh_initial)?;
        int_range("veh_inflow", self.veh_inflow)?;
        let (glo, ghi) = self.gamma;
        if !(0.0..=1.0).contains(&glo) || !(0.0..=1.0).contains(&ghi) || ghi < glo {
            return Err(Error::InvalidParameter(format!(
                "gamma range must lie in [0, 1], got ({glo}, {ghi})"
            )));
        }
        if self.veh_max_volume <= 0 {
            return Err(Error::InvalidParameter(
                "vehicle max volume must be positive".into(),
            ));
        }
        if self.veh_initial.1 > self.veh_max_volume {
            return Err(Error::InvalidParameter(
                "vehicle initial range exceeds link capacity".into(),
            ));
        }
        Ok(())
    }
}

/// Seeded generator settings, recorded in the scenario file so instances
/// can be rebuilt from their seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub ranges: GenRanges,
}

/// A complete instance: grid plus both demand layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub grid: GridSpec,
    pub ped: PedScenario,
    pub veh: VehScenario,
    pub generator: Option<GenSpec>,
}

impl Scenario {
    pub fn network(&self) -> GridNetwork {
        build_grid(self.grid).expect("validated grid")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let network = build_grid(self.grid)?;
        if self.ped.n_junctions() != self.grid.n_junctions() {
            return Err(Error::InvalidScenario(format!(
                "pedestrian data covers {} junctions, grid has {}",
                self.ped.n_junctions(),
                self.grid.n_junctions()
            )));
        }
        if self.ped.delta != self.grid.delta || self.ped.steps != self.grid.steps {
            return Err(Error::InvalidScenario(
                "pedestrian discretisation disagrees with the grid".into(),
            ));
        }
        self.ped.validate()?;
        self.veh.validate(&network)?;
        Ok(())
    }
}

/// Generate a scenario from a seed.  The draw order (pedestrian junctions
/// first, then vehicle links) is part of the reproducibility contract: the
/// same seed and ranges always produce the identical scenario.
pub fn generate(grid: GridSpec, gen: GenSpec) -> Result<Scenario> {
    grid.validate()?;
    gen.ranges.validate()?;
    let network = build_grid(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    let r = &gen.ranges;

    let draw_int = |rng: &mut ChaCha8Rng, (lo, hi): (i64, i64)| rng.random_range(lo..=hi);
    // Ratios are drawn on the 1e-4 grid so serialised files stay compact and
    // floor computations sit away from representation boundaries.
    let draw_ratio = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        let lo4 = (lo * 10_000.0).round() as i64;
        let hi4 = (hi * 10_000.0).round() as i64;
        quantize_ratio(rng.random_range(lo4..=hi4) as f64 / 10_000.0)
    };

    let mut junctions = Vec::with_capacity(grid.n_junctions());
    for _ in 0..grid.n_junctions() {
        let mut initial = [0i64; NUM_CORNERS];
        for v in &mut initial {
            *v = draw_int(&mut rng, r.ped_initial);
        }
        let mut arrivals = Vec::with_capacity(grid.steps);
        let mut alpha = Vec::with_capacity(grid.steps);
        let mut gamma = Vec::with_capacity(grid.steps);
        for _ in 0..grid.steps {
            let mut row = [0i64; NUM_CORNERS];
            for v in &mut row {
                *v = draw_int(&mut rng, r.ped_arrivals);
            }
            arrivals.push(row);
            let mut arow = [0.0f64; NUM_CORNERS];
            for v in &mut arow {
                *v = draw_ratio(&mut rng, 0.0, 1.0);
            }
            alpha.push(arow);
            let mut grow = [0.0f64; NUM_CORNERS];
            for v in &mut grow {
                *v = draw_ratio(&mut rng, r.gamma.0, r.gamma.1);
            }
            gamma.push(grow);
        }
        junctions.push(JunctionDemand {
            initial,
            arrivals,
            alpha,
            gamma,
            prev_stage: None,
        });
    }

    let n_links = network.veh.n_links();
    let mut veh = VehScenario {
        params: VehParams::default(),
        max_volumes: vec![r.veh_max_volume; n_links],
        initial: vec![0; n_links],
        boundary_inflow: vec![vec![0; grid.steps]; n_links],
        prehistory: vec![Vec::new(); grid.n_junctions()],
    };
    for l in 0..n_links {
        veh.initial[l] = draw_int(&mut rng, r.veh_initial);
    }
    for l in 0..n_links {
        if network.veh.links[l].kind == crate::topology::LinkKind::Boundary {
            for t in 0..grid.steps {
                veh.boundary_inflow[l][t] = draw_int(&mut rng, r.veh_inflow);
            }
        }
    }

    let scenario = Scenario {
        grid,
        ped: PedScenario {
            geometry: CrosswalkGeometry::default(),
            delta: grid.delta,
            steps: grid.steps,
            junctions,
        },
        veh,
        generator: Some(gen),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Generate with default ranges; the common entry point for seeded
/// experiment instances.
pub fn generate_default(rows: usize, cols: usize, steps: usize, seed: u64) -> Result<Scenario> {
    generate(
        GridSpec::new(rows, cols, 15.0, steps)?,
        GenSpec {
            seed,
            ranges: GenRanges::default(),
        },
    )
}

// --- file format -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    format: String,
    version: u32,
    grid: GridSpec,
    pedestrian: PedFile,
    vehicle: VehFile,
    generator: Option<GenSpec>,
}

#[derive(Serialize, Deserialize)]
struct PedFile {
    geometry: CrosswalkGeometry,
    junctions: Vec<PedJunctionFile>,
}

#[derive(Serialize, Deserialize)]
struct PedJunctionFile {
    initial: [i64; NUM_CORNERS],
    arrivals: Vec<[i64; NUM_CORNERS]>,
    alpha: Vec<[f64; NUM_CORNERS]>,
    /// Complement of `alpha`, stored redundantly; the loader checks that
    /// every pair sums to one.
    beta: Vec<[f64; NUM_CORNERS]>,
    gamma: Vec<[f64; NUM_CORNERS]>,
    prev_stage: Option<Stage>,
}

#[derive(Serialize, Deserialize)]
struct VehFile {
    params: VehParams,
    max_volumes: Vec<i64>,
    initial: Vec<i64>,
    boundary_inflow: Vec<Vec<i64>>,
    prehistory: Vec<Vec<Stage>>,
}

impl Scenario {
    /// Serialise to the versioned JSON format.  Output is byte-stable for a
    /// given scenario.
    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            grid: self.grid,
            pedestrian: PedFile {
                geometry: self.ped.geometry,
                junctions: self
                    .ped
                    .junctions
                    .iter()
                    .map(|j| PedJunctionFile {
                        initial: j.initial,
                        arrivals: j.arrivals.clone(),
                        alpha: j.alpha.clone(),
                        beta: j
                            .alpha
                            .iter()
                            .map(|row| {
                                let mut b = [0.0; NUM_CORNERS];
                                for i in 0..NUM_CORNERS {
                                    b[i] = 1.0 - row[i];
                                }
                                b
                            })
                            .collect(),
                        gamma: j.gamma.clone(),
                        prev_stage: j.prev_stage,
                    })
                    .collect(),
            },
            vehicle: VehFile {
                params: self.veh.params.clone(),
                max_volumes: self.veh.max_volumes.clone(),
                initial: self.veh.initial.clone(),
                boundary_inflow: self.veh.boundary_inflow.clone(),
                prehistory: self.veh.prehistory.clone(),
            },
            generator: self.generator.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("serializable scenario");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        if file.format != FORMAT_NAME {
            return Err(Error::Parse(format!(
                "not a scenario file (format {:?})",
                file.format
            )));
        }
        if file.version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported scenario version {}",
                file.version
            )));
        }
        for (j, junction) in file.pedestrian.junctions.iter().enumerate() {
            if junction.beta.len() != junction.alpha.len() {
                return Err(Error::InvalidScenario(format!(
                    "junction {j}: alpha and beta series differ in length"
                )));
            }
            for (t, (a_row, b_row)) in junction.alpha.iter().zip(&junction.beta).enumerate() {
                for i in 0..NUM_CORNERS {
                    if (a_row[i] + b_row[i] - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidScenario(format!(
                            "junction {j} interval {} corner {}: diversion shares sum to {}, not 1",
                            t + 1,
                            i + 1,
                            a_row[i] + b_row[i]
                        )));
                    }
                }
            }
        }
        let scenario = Scenario {
            grid: file.grid,
            ped: PedScenario {
                geometry: file.pedestrian.geometry,
                delta: file.grid.delta,
                steps: file.grid.steps,
                junctions: file
                    .pedestrian
                    .junctions
                    .into_iter()
                    .map(|j| JunctionDemand {
                        initial: j.initial,
                        arrivals: j.arrivals,
                        alpha: j.alpha,
                        gamma: j.gamma,
                        prev_stage: j.prev_stage,
                    })
                    .collect(),
            },
            veh: VehScenario {
                params: file.vehicle.params,
                max_volumes: file.vehicle.max_volumes,
                initial: file.vehicle.initial,
                boundary_inflow: file.vehicle.boundary_inflow,
                prehistory: file.vehicle.prehistory,
            },
            generator: file.generator,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_default(2, 2, 3, 42).unwrap();
        let b = generate_default(2, 2, 3, 42).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = generate_default(2, 2, 3, 43).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn round_trip_preserves_scenario() {
        let a = generate_default(2, 3, 4, 7).unwrap();
        let back = Scenario::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn zero_ranges_give_zero_demand() {
        let gen = GenSpec {
            seed: 1,
            ranges: GenRanges {
                ped_initial: (0, 0),
                ped_arrivals: (0, 0),
                gamma: (0.0, 0.0),
                veh_initial: (0, 0),
                veh_inflow: (0, 0),
                veh_max_volume: 100,
            },
        };
        let s = generate(GridSpec::new(1, 1, 15.0, 3).unwrap(), gen).unwrap();
        assert_eq!(s.ped.junctions[0].initial, [0; 4]);
        assert!(s.veh.initial.iter().all(|&v| v == 0));
        assert!(s.veh.boundary_inflow.iter().flatten().all(|&v| v == 0));
    }

    #[test]
    fn generated_ratios_are_on_grid_and_in_range() {
        let s = generate_default(1, 2, 5, 99).unwrap();
        for j in &s.ped.junctions {
            for t in 0..5 {
                for i in 0..NUM_CORNERS {
                    let a = j.alpha[t][i];
                    assert!((0.0..=1.0).contains(&a));
                    let scaled = a * 10_000.0;
                    assert!((scaled - scaled.round()).abs() < 1e-6);
                    let g = j.gamma[t][i];
                    assert!((0.0..=0.5).contains(&g));
                }
            }
        }
    }

    #[test]
    fn alpha_beta_mismatch_rejected() {
        let s = generate_default(1, 1, 2, 5).unwrap();
        let text = s.to_json();
        // Corrupt one beta entry.
        let file: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut file = file;
        file["pedestrian"]["junctions"][0]["beta"][0][0] = serde_json::json!(0.9999999);
        let broken = serde_json::to_string(&file).unwrap();
        let err = Scenario::from_json(&broken);
        // Either the sum check or (if alpha was ~0) validation catches it.
        assert!(err.is_err() || s.ped.junctions[0].alpha[0][0] < 1e-7);
    }

    #[test]
    fn wrong_format_rejected() {
        assert!(Scenario::from_json("{\"format\":\"other\",\"version\":1}").is_err());
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut ranges = GenRanges::default();
        ranges.ped_arrivals = (5, 2);
        assert!(ranges.validate().is_err());
        let mut ranges = GenRanges::default();
        ranges.gamma = (0.2, 1.5);
        assert!(ranges.validate().is_err());
        let mut ranges = GenRanges::default();
        ranges.veh_initial = (0, 200);
        assert!(ranges.validate().is_err());
    }
}
