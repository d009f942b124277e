//! Canned experiment recipes over seeded generated instances: solver
//! scaling tables, harmony-search gap tables, and switching-frequency
//! comparisons between the two pedestrian objectives.
//!
//! Each recipe is a pure function of its arguments, so tables regenerate
//! byte-identically from a recorded manifest.  Wall-clock measurements are
//! kept out of the main tables and reported through separate timing CSVs.

use std::fmt::Write as _;
use std::time::Instant;

use crate::dhs::{self, DhsParams, PedDhsProblem};
use crate::error::Result;
use crate::exact::{solve_exact_network, PedObjective};
use crate::integrate::switching_frequency_profile;
use crate::milp::build_milp;
use crate::scenario::{generate, GenRanges, GenSpec, Scenario};
use crate::topology::GridSpec;
use crate::unhappiness::UnhappinessConfig;

/// Instance seed for a table cell, decorrelated across the cell coordinates
/// with splitmix-style odd multipliers.
fn cell_seed(base: u64, a: u64, b: u64, c: u64) -> u64 {
    base.wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB))
}

fn seeded_instance(rows: usize, cols: usize, steps: usize, seed: u64) -> Result<Scenario> {
    generate(
        GridSpec::new(rows, cols, 15.0, steps)?,
        GenSpec {
            seed,
            ranges: GenRanges::default(),
        },
    )
}

fn grid_label(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}

/// One row of the scaling table: problem shape, integer-program size, and
/// the optimal delay found by the decomposed exact solver.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingCell {
    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub horizon_seconds: f64,
    pub variables: usize,
    pub constraints: usize,
    pub binaries: usize,
    pub integers: usize,
    pub objective: f64,
    pub method: &'static str,
    pub solve_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingTable {
    pub cells: Vec<ScalingCell>,
}

impl ScalingTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "grid,steps,horizon_seconds,junctions,variables,constraints,binaries,integers,objective,method\n",
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                grid_label(c.rows, c.cols),
                c.steps,
                c.horizon_seconds,
                c.rows * c.cols,
                c.variables,
                c.constraints,
                c.binaries,
                c.integers,
                c.objective,
                c.method
            );
        }
        out
    }

    /// Wall-clock companion to [`ScalingTable::to_csv`]; not reproducible
    /// across machines and therefore kept out of the main table.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from("grid,steps,solve_seconds\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{:.6}",
                grid_label(c.rows, c.cols),
                c.steps,
                c.solve_seconds
            );
        }
        out
    }
}

/// Build the integer program for each cell, record its size, and solve the
/// cell exactly.  `sizes` are `(rows, cols)` grids; `steps_list` horizon
/// lengths in intervals.
pub fn scaling_table(
    sizes: &[(usize, usize)],
    steps_list: &[usize],
    base_seed: u64,
) -> Result<ScalingTable> {
    let mut cells = Vec::new();
    for (si, &(rows, cols)) in sizes.iter().enumerate() {
        for (hi, &steps) in steps_list.iter().enumerate() {
            let scenario = seeded_instance(
                rows,
                cols,
                steps,
                cell_seed(base_seed, si as u64, hi as u64, 0),
            )?;
            let milp = build_milp(&scenario.ped)?;
            let start = Instant::now();
            let solve = solve_exact_network(
                &scenario.ped,
                PedObjective::Delay,
                &UnhappinessConfig::default(),
            )?;
            let solve_seconds = start.elapsed().as_secs_f64();
            cells.push(ScalingCell {
                rows,
                cols,
                steps,
                horizon_seconds: steps as f64 * scenario.grid.delta,
                variables: milp.model.n_variables(),
                constraints: milp.model.n_constraints(),
                binaries: milp.model.count_kind(crate::milp::VarKind::Binary),
                integers: milp.model.count_kind(crate::milp::VarKind::Integer),
                objective: solve.cost,
                method: "exact",
                solve_seconds,
            });
        }
    }
    Ok(ScalingTable { cells })
}

/// One seeded instance of the exact-vs-harmony-search comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GapRow {
    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub seed: u64,
    pub exact_cost: f64,
    pub dhs_cost: f64,
    /// `100 * (dhs - exact) / exact`; zero when the costs agree exactly.
    pub gap_percent: f64,
    pub dhs_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
}

impl GapTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid,steps,seed,exact_cost,dhs_cost,gap_percent\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                grid_label(r.rows, r.cols),
                r.steps,
                r.seed,
                r.exact_cost,
                r.dhs_cost,
                r.gap_percent
            );
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("grid,steps,seed,dhs_seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6}",
                grid_label(r.rows, r.cols),
                r.steps,
                r.seed,
                r.dhs_seconds
            );
        }
        out
    }

    pub fn median_gap(&self) -> f64 {
        let mut gaps: Vec<f64> = self.rows.iter().map(|r| r.gap_percent).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).expect("finite gaps"));
        if gaps.is_empty() {
            return 0.0;
        }
        let n = gaps.len();
        if n % 2 == 1 {
            gaps[n / 2]
        } else {
            0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
        }
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap_percent).fold(0.0, f64::max)
    }
}

/// Compare the harmony search against the exact optimum on seeded delay
/// instances.  The gap is non-negative because the exact cost is the true
/// minimum of the same objective.
pub fn gap_table(
    sizes: &[(usize, usize)],
    steps_list: &[usize],
    n_seeds: usize,
    base_seed: u64,
    params: &DhsParams,
) -> Result<GapTable> {
    let cfg = UnhappinessConfig::default();
    let mut rows = Vec::new();
    for (si, &(r, c)) in sizes.iter().enumerate() {
        for (hi, &steps) in steps_list.iter().enumerate() {
            for k in 0..n_seeds {
                let seed = cell_seed(base_seed, si as u64, hi as u64, k as u64);
                let scenario = seeded_instance(r, c, steps, seed)?;
                let exact = solve_exact_network(&scenario.ped, PedObjective::Delay, &cfg)?;
                let problem = PedDhsProblem::new(&scenario.ped, PedObjective::Delay, cfg)?;
                let start = Instant::now();
                let run = dhs::run(&problem, params, seed)?;
                let dhs_seconds = start.elapsed().as_secs_f64();
                let gap_percent = if run.best_cost <= exact.cost {
                    0.0
                } else if exact.cost > 0.0 {
                    100.0 * (run.best_cost - exact.cost) / exact.cost
                } else {
                    f64::INFINITY
                };
                rows.push(GapRow {
                    rows: r,
                    cols: c,
                    steps,
                    seed,
                    exact_cost: exact.cost,
                    dhs_cost: run.best_cost,
                    gap_percent,
                    dhs_seconds,
                });
            }
        }
    }
    Ok(GapTable { rows })
}

/// Switching frequency of the exact optimum under both pedestrian
/// objectives, per seeded instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SfRow {
    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub seed: u64,
    pub sf_delay: f64,
    pub sf_unhappiness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfTable {
    pub rows: Vec<SfRow>,
}

impl SfTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid,steps,seed,sf_delay,sf_unhappiness\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                grid_label(r.rows, r.cols),
                r.steps,
                r.seed,
                r.sf_delay,
                r.sf_unhappiness
            );
        }
        out
    }

    /// Fraction of instances where the unhappiness objective switches
    /// strictly more often than the delay objective.
    pub fn separation_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let hits = self
            .rows
            .iter()
            .filter(|r| r.sf_unhappiness > r.sf_delay)
            .count();
        hits as f64 / self.rows.len() as f64
    }
}

/// Solve each seeded instance exactly under both objectives and report the
/// schedule switching frequencies.  Horizons must span at least two
/// intervals for the frequency to be defined.
pub fn sf_comparison(
    sizes: &[(usize, usize)],
    steps_list: &[usize],
    n_seeds: usize,
    base_seed: u64,
    cfg: &UnhappinessConfig,
) -> Result<SfTable> {
    let mut rows = Vec::new();
    for (si, &(r, c)) in sizes.iter().enumerate() {
        for (hi, &steps) in steps_list.iter().enumerate() {
            for k in 0..n_seeds {
                let seed = cell_seed(base_seed, si as u64, hi as u64, k as u64);
                let scenario = seeded_instance(r, c, steps, seed)?;
                let delay = solve_exact_network(&scenario.ped, PedObjective::Delay, cfg)?;
                let unhappy = solve_exact_network(&scenario.ped, PedObjective::Unhappiness, cfg)?;
                rows.push(SfRow {
                    rows: r,
                    cols: c,
                    steps,
                    seed,
                    sf_delay: switching_frequency_profile(&delay.schedule)?,
                    sf_unhappiness: switching_frequency_profile(&unhappy.schedule)?,
                });
            }
        }
    }
    Ok(SfTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Stage;

    #[test]
    fn scaling_row_is_fully_populated() {
        let table = scaling_table(&[(3, 3)], &[2], 7).unwrap();
        assert_eq!(table.cells.len(), 1);
        let cell = &table.cells[0];
        assert_eq!(cell.horizon_seconds, 30.0);
        assert_eq!(cell.variables, 9 * 2 * 18);
        assert!(cell.constraints > 0);
        assert_eq!(cell.binaries, 9 * 2 * 4);
        assert_eq!(cell.integers, 9 * 2 * 14);
        assert!(cell.objective.is_finite() && cell.objective >= 0.0);
        assert_eq!(cell.method, "exact");
        assert!(cell.solve_seconds >= 0.0);
    }

    #[test]
    fn longer_horizon_never_shrinks_the_program() {
        let table = scaling_table(&[(2, 2)], &[2, 3, 5], 1).unwrap();
        for pair in table.cells.windows(2) {
            assert!(pair[1].variables > pair[0].variables);
            assert!(pair[1].constraints > pair[0].constraints);
        }
    }

    #[test]
    fn program_size_reference_point() {
        // Frozen size of the generated integer program at 3x3, five
        // intervals; guards against accidental row or variable drift.
        let table = scaling_table(&[(3, 3)], &[5], 3).unwrap();
        assert_eq!(table.cells[0].variables, 810);
        assert_eq!(table.cells[0].constraints, 2061);
    }

    #[test]
    fn gap_is_zero_on_covered_instances() {
        let params = DhsParams {
            memory_size: 50,
            iterations: 300,
            bandwidth: 0.1,
            ..DhsParams::default()
        };
        let table = gap_table(&[(1, 1)], &[5], 4, 11, &params).unwrap();
        assert_eq!(table.rows.len(), 4);
        for row in &table.rows {
            assert_eq!(row.gap_percent, 0.0, "seed {}", row.seed);
            assert_eq!(row.dhs_cost, row.exact_cost);
        }
        assert_eq!(table.median_gap(), 0.0);
        assert_eq!(table.max_gap(), 0.0);
    }

    #[test]
    fn gap_is_never_negative_even_for_weak_search() {
        let params = DhsParams {
            memory_size: 5,
            iterations: 3,
            ..DhsParams::default()
        };
        let table = gap_table(&[(2, 2)], &[4], 3, 5, &params).unwrap();
        for row in &table.rows {
            assert!(row.gap_percent >= 0.0);
            assert!(row.dhs_cost >= row.exact_cost);
        }
        assert!(table.max_gap() >= table.median_gap());
    }

    #[test]
    fn sf_rows_are_valid_frequencies() {
        let table = sf_comparison(&[(3, 3)], &[2], 3, 21, &UnhappinessConfig::default()).unwrap();
        assert_eq!(table.rows.len(), 3);
        for row in &table.rows {
            assert!((0.0..=1.0).contains(&row.sf_delay));
            assert!((0.0..=1.0).contains(&row.sf_unhappiness));
        }
        let f = table.separation_fraction();
        assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn zero_demand_gives_constant_schedules() {
        let spec = GenSpec {
            seed: 9,
            ranges: GenRanges {
                ped_initial: (0, 0),
                ped_arrivals: (0, 0),
                veh_initial: (0, 0),
                veh_inflow: (0, 0),
                ..GenRanges::default()
            },
        };
        let scenario = generate(GridSpec::new(2, 2, 15.0, 3).unwrap(), spec).unwrap();
        let cfg = UnhappinessConfig::default();
        for objective in [PedObjective::Delay, PedObjective::Unhappiness] {
            let solve = solve_exact_network(&scenario.ped, objective, &cfg).unwrap();
            assert_eq!(solve.cost, 0.0);
            for j in 0..4 {
                assert!(solve
                    .schedule
                    .junction_row(j)
                    .iter()
                    .all(|&s| s == Stage::Horizontal));
            }
            assert_eq!(switching_frequency_profile(&solve.schedule).unwrap(), 0.0);
        }
    }

    #[test]
    fn tables_regenerate_identically() {
        let a = scaling_table(&[(2, 2)], &[3], 17).unwrap();
        let b = scaling_table(&[(2, 2)], &[3], 17).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());

        let params = DhsParams {
            memory_size: 10,
            iterations: 20,
            ..DhsParams::default()
        };
        let g1 = gap_table(&[(1, 2)], &[3], 2, 23, &params).unwrap();
        let g2 = gap_table(&[(1, 2)], &[3], 2, 23, &params).unwrap();
        assert_eq!(g1.to_csv(), g2.to_csv());

        let s1 = sf_comparison(&[(2, 1)], &[2], 2, 29, &UnhappinessConfig::default()).unwrap();
        let s2 = sf_comparison(&[(2, 1)], &[2], 2, 29, &UnhappinessConfig::default()).unwrap();
        assert_eq!(s1.to_csv(), s2.to_csv());
    }

    #[test]
    fn csv_headers_are_stable() {
        let table = scaling_table(&[(1, 1)], &[2], 1).unwrap();
        assert!(table.to_csv().starts_with(
            "grid,steps,horizon_seconds,junctions,variables,constraints,binaries,integers,objective,method\n"
        ));
        assert!(table.timings_csv().starts_with("grid,steps,solve_seconds\n"));
        let gaps = gap_table(&[(1, 1)], &[2], 1, 1, &DhsParams {
            memory_size: 5,
            iterations: 5,
            ..DhsParams::default()
        })
        .unwrap();
        assert!(gaps
            .to_csv()
            .starts_with("grid,steps,seed,exact_cost,dhs_cost,gap_percent\n"));
        assert!(gaps.timings_csv().starts_with("grid,steps,seed,dhs_seconds\n"));
    }
}
