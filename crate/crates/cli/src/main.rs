//! Command-line front end: scenario generation, simulation, solving, LP
//! export and checking, receding-horizon runs, weight sweeps, and canned
//! report tables.
//!
//! Every run first writes `manifest.json` (tool version plus the full
//! argument vector) into the output directory.  All other outputs are pure
//! functions of the arguments, so re-running a manifest's argv reproduces
//! every file byte for byte.  Wall-clock tables are the one exception and
//! are only written when `--timings` is passed.
//!
//! Exit codes: 0 on success, 2 on argument or scenario validation errors,
//! 3 when a solver guard trips (search space too large, exponent
//! saturation).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crossflow::dhs::{self, DhsParams, PedDhsProblem};
use crossflow::error::{Error, Result};
use crossflow::exact::{solve_exact_network, PedObjective};
use crossflow::experiments::{gap_table, scaling_table, sf_comparison};
use crossflow::integrate::{sweep_weights, veh_layer, JointSolver, WeightedProblem};
use crossflow::milp::lp::export_lp;
use crossflow::milp::{build_milp, check_trace};
use crossflow::mpc::{run_mpc, MpcConfig, MpcObjective, MpcSolver, PredictionNoise};
use crossflow::ped::simulate;
use crossflow::scenario::{generate, GenRanges, GenSpec, Scenario};
use crossflow::schedule::StageSchedule;
use crossflow::topology::{CouplingMode, CouplingPairing, GridSpec, Stage, StageCoupling};
use crossflow::unhappiness::{unhappiness_cost, UnhappinessConfig};
use crossflow::veh::simulate_veh;

#[derive(Parser)]
#[command(
    name = "crossflow",
    version,
    about = "Traffic signal scheduling for mixed pedestrian and vehicle flows on grid networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random scenario file.
    GenScenario(GenScenarioCmd),
    /// Simulate both flow layers under a schedule.
    Simulate(SimulateCmd),
    /// Solve a scenario to optimality.
    SolveExact(SolveCmd),
    /// Solve a scenario with the discrete harmony search.
    SolveDhs(SolveDhsCmd),
    /// Write the pedestrian integer program as an LP file.
    ExportMilp(ExportMilpCmd),
    /// Check a simulated trace against every integer-program row.
    CheckMilp(CheckMilpCmd),
    /// Receding-horizon execution over a scenario.
    MpcRun(MpcRunCmd),
    /// Sweep the pedestrian weight and locate turning weights.
    SweepWeights(SweepWeightsCmd),
    /// Produce a canned experiment table.
    Report(ReportCmd),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Delay,
    Unhappiness,
    Weighted,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PairingArg {
    Parallel,
    Crossed,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CouplingModeArg {
    Exclusive,
    Relaxed,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Exact,
    Dhs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TableArg {
    Scaling,
    Gap,
    Sf,
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Scenario file; omit to generate one from --grid/--steps/--seed.
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,

    /// Grid dimensions when generating, e.g. 3x3.
    #[arg(long, value_name = "RxC")]
    grid: Option<String>,

    /// Horizon length in intervals when generating.
    #[arg(long, value_name = "N")]
    steps: Option<usize>,

    /// Horizon in seconds (must divide by the 15 s interval); for mpc-run
    /// this sets the prediction window instead.
    #[arg(long, value_name = "SECONDS")]
    horizon: Option<f64>,

    /// Objective to optimize or report.
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Delay)]
    objective: ObjectiveArg,

    /// Pedestrian weight of the weighted objective.
    #[arg(long, value_name = "M", default_value_t = 1.0)]
    weight: f64,

    /// Seed for scenario generation and stochastic solvers.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Format of the summary file.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    /// Cap the worker thread count.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Measure red runs in interval counts instead of seconds in the
    /// unhappiness exponent (keeps long horizons inside range).
    #[arg(long)]
    exp_in_intervals: bool,

    /// How vehicle stages pair with pedestrian stages.
    #[arg(long, value_enum, default_value_t = PairingArg::Parallel)]
    pairing: PairingArg,

    /// Whether dark (all-red) junctions are allowed in feasibility checks.
    #[arg(long, value_enum, default_value_t = CouplingModeArg::Exclusive)]
    coupling_mode: CouplingModeArg,
}

impl Common {
    fn coupling(&self) -> StageCoupling {
        StageCoupling {
            pairing: match self.pairing {
                PairingArg::Parallel => CouplingPairing::Parallel,
                PairingArg::Crossed => CouplingPairing::Crossed,
            },
            mode: match self.coupling_mode {
                CouplingModeArg::Exclusive => CouplingMode::Exclusive,
                CouplingModeArg::Relaxed => CouplingMode::Relaxed,
            },
        }
    }

    fn unhappiness_config(&self) -> UnhappinessConfig {
        UnhappinessConfig {
            exponent_in_seconds: !self.exp_in_intervals,
            ..UnhappinessConfig::default()
        }
    }
}

/// Harmony-search parameters with the standard defaults.
#[derive(Args)]
struct DhsArgs {
    /// Harmony memory size.
    #[arg(long, default_value_t = 1000)]
    hms: usize,

    /// Number of improvisations.
    #[arg(long, default_value_t = 1000)]
    ni: usize,

    /// Memory-consideration rate.
    #[arg(long, default_value_t = 0.95)]
    hmcr: f64,

    /// Pitch-adjustment rate.
    #[arg(long, default_value_t = 0.5)]
    par: f64,

    /// Flip probability of an adjusted element.
    #[arg(long, default_value_t = 1.0)]
    bw: f64,
}

impl DhsArgs {
    fn params(&self) -> DhsParams {
        DhsParams {
            memory_size: self.hms,
            iterations: self.ni,
            hmcr: self.hmcr,
            par: self.par,
            bandwidth: self.bw,
        }
    }
}

#[derive(Args)]
struct GenScenarioCmd {
    #[command(flatten)]
    common: Common,

    /// Initial corner volume range, e.g. 0..30.
    #[arg(long, value_name = "LO..HI", default_value = "0..30")]
    ped_initial: String,

    /// Per-interval corner arrival range.
    #[arg(long, value_name = "LO..HI", default_value = "0..5")]
    ped_arrivals: String,

    /// Departure (leaving-share) ratio range.
    #[arg(long, value_name = "LO..HI", default_value = "0..0.5")]
    gamma: String,

    /// Initial link volume range.
    #[arg(long, value_name = "LO..HI", default_value = "0..50")]
    veh_initial: String,

    /// Boundary link inflow range per interval.
    #[arg(long, value_name = "LO..HI", default_value = "0..20")]
    veh_inflow: String,

    /// Maximal volume of every link.
    #[arg(long, default_value_t = 100)]
    veh_max: i64,
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    common: Common,

    /// Schedule CSV (junction,interval,stage); defaults to constant
    /// horizontal.
    #[arg(long, value_name = "FILE")]
    schedule: Option<PathBuf>,
}

#[derive(Args)]
struct SolveCmd {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SolveDhsCmd {
    #[command(flatten)]
    common: Common,

    #[command(flatten)]
    dhs: DhsArgs,
}

#[derive(Args)]
struct ExportMilpCmd {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CheckMilpCmd {
    #[command(flatten)]
    common: Common,

    /// Schedule CSV to simulate and check; defaults to constant horizontal.
    #[arg(long, value_name = "FILE")]
    schedule: Option<PathBuf>,
}

#[derive(Args)]
struct MpcRunCmd {
    #[command(flatten)]
    common: Common,

    /// Prediction window in intervals (alternative to --horizon seconds).
    #[arg(long, value_name = "N")]
    window: Option<usize>,

    /// Window solver.
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    solver: SolverArg,

    #[command(flatten)]
    dhs: DhsArgs,

    /// Relative amplitude of multiplicative noise on predicted pedestrian
    /// arrivals; the plant always sees the true series.
    #[arg(long, value_name = "A")]
    noise_amplitude: Option<f64>,

    /// Seed of the prediction noise; defaults to --seed.
    #[arg(long, value_name = "S")]
    noise_seed: Option<u64>,
}

#[derive(Args)]
struct SweepWeightsCmd {
    #[command(flatten)]
    common: Common,

    /// Explicit comma-separated weight grid starting at 0.
    #[arg(long, value_name = "W0,W1,..")]
    weights: Option<String>,

    /// Largest weight of the default uniform grid.
    #[arg(long, default_value_t = 8.0)]
    max_weight: f64,

    /// Spacing of the default uniform grid.
    #[arg(long, default_value_t = 0.5)]
    weight_step: f64,

    /// Skip bisection refinement of turning weights.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Args)]
struct ReportCmd {
    #[command(flatten)]
    common: Common,

    /// Which table to produce.
    #[arg(long, value_enum)]
    table: TableArg,

    /// Comma-separated grid sizes, e.g. 3x3,5x5.
    #[arg(long, default_value = "3x3")]
    sizes: String,

    /// Comma-separated horizon lengths in intervals.
    #[arg(long, value_name = "N1,N2,..", default_value = "2")]
    steps_list: String,

    /// Seeded instances per cell (gap and sf tables).
    #[arg(long, default_value_t = 5)]
    instances: usize,

    /// Also write the wall-clock companion CSV (not reproducible).
    #[arg(long)]
    timings: bool,

    #[command(flatten)]
    dhs: DhsArgs,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenScenario(cmd) => cmd_gen_scenario(cmd),
        Command::Simulate(cmd) => cmd_simulate(cmd),
        Command::SolveExact(cmd) => cmd_solve_exact(cmd),
        Command::SolveDhs(cmd) => cmd_solve_dhs(cmd),
        Command::ExportMilp(cmd) => cmd_export_milp(cmd),
        Command::CheckMilp(cmd) => cmd_check_milp(cmd),
        Command::MpcRun(cmd) => cmd_mpc_run(cmd),
        Command::SweepWeights(cmd) => cmd_sweep_weights(cmd),
        Command::Report(cmd) => cmd_report(cmd),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(serde::Serialize)]
struct Manifest {
    format: &'static str,
    version: &'static str,
    argv: Vec<String>,
}

/// Create the output directory, record the manifest, and apply the thread
/// cap.  Called before any computation so even failed runs are recorded.
fn prepare(common: &Common) -> Result<()> {
    if let Some(threads) = common.threads {
        if threads == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        // Ignored if a pool already exists; thread count never affects
        // output bytes, only wall time.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    fs::create_dir_all(&common.out).map_err(|e| Error::Io {
        path: common.out.clone(),
        source: e,
    })?;
    let manifest = Manifest {
        format: "crossflow-run",
        version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().skip(1).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&common.out.join("manifest.json"), &(text + "\n"))
}

/// Key/value run summary in the requested format.
fn write_summary(common: &Common, pairs: &[(&str, String)]) -> Result<()> {
    match common.format {
        FormatArg::Csv => {
            let mut out = String::from("key,value\n");
            for (k, v) in pairs {
                out.push_str(k);
                out.push(',');
                out.push_str(v);
                out.push('\n');
            }
            write_file(&common.out.join("summary.csv"), &out)
        }
        FormatArg::Json => {
            let mut map = serde_json::Map::new();
            for (k, v) in pairs {
                // Numbers only when formatting round-trips; hash ids are
                // hex strings and always stay strings.
                let numeric = !k.ends_with("_hash");
                let value = match v.parse::<i64>() {
                    Ok(n) if numeric && n.to_string() == *v => serde_json::Value::from(n),
                    _ => match v.parse::<f64>() {
                        Ok(x) if numeric && x.to_string() == *v => serde_json::Value::from(x),
                        _ => serde_json::Value::from(v.clone()),
                    },
                };
                map.insert((*k).to_string(), value);
            }
            let text = serde_json::to_string_pretty(&serde_json::Value::Object(map))
                .expect("summary serializes");
            write_file(&common.out.join("summary.json"), &(text + "\n"))
        }
    }
}

fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let (rows, cols) = text
        .split_once('x')
        .ok_or_else(|| invalid(format!("grid {text:?} is not of the form RxC")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| invalid(format!("bad grid dimension {s:?}")))
    };
    Ok((parse(rows)?, parse(cols)?))
}

fn steps_from_seconds(seconds: f64, delta: f64) -> Result<usize> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let ratio = seconds / delta;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(invalid(format!(
            "horizon {seconds} s is not a whole number of {delta} s intervals"
        )));
    }
    Ok(ratio.round() as usize)
}

/// Interval used for generated scenarios.
const GEN_DELTA: f64 = 15.0;

fn generation_steps(common: &Common, allow_horizon: bool) -> Result<usize> {
    if let Some(steps) = common.steps {
        return Ok(steps);
    }
    if allow_horizon {
        if let Some(seconds) = common.horizon {
            return steps_from_seconds(seconds, GEN_DELTA);
        }
        return Err(invalid("--steps or --horizon is required without --scenario"));
    }
    Err(invalid("--steps is required without --scenario"))
}

/// Load the scenario file, or generate one with the default demand ranges.
/// `horizon_is_window` marks commands where --horizon configures a
/// prediction window rather than the scenario length.
fn load_or_generate(common: &Common, horizon_is_window: bool) -> Result<Scenario> {
    if let Some(path) = &common.scenario {
        return Scenario::load(path);
    }
    let grid = common
        .grid
        .as_deref()
        .ok_or_else(|| invalid("--grid is required without --scenario"))?;
    let (rows, cols) = parse_grid(grid)?;
    let steps = generation_steps(common, !horizon_is_window)?;
    generate(
        GridSpec::new(rows, cols, GEN_DELTA, steps)?,
        GenSpec {
            seed: common.seed,
            ranges: GenRanges::default(),
        },
    )
}

fn load_schedule(
    path: &Option<PathBuf>,
    scenario: &Scenario,
) -> Result<StageSchedule> {
    let schedule = match path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            StageSchedule::from_csv(&text)?
        }
        None => StageSchedule::filled(
            scenario.grid.n_junctions(),
            scenario.grid.steps,
            Stage::Horizontal,
        ),
    };
    schedule.check_shape(scenario.grid.n_junctions(), scenario.grid.steps)?;
    Ok(schedule)
}

fn parse_range_f64(text: &str) -> Result<(f64, f64)> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| invalid(format!("range {text:?} is not of the form LO..HI")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid(format!("bad range bound {s:?}")))
    };
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if lo > hi {
        return Err(invalid(format!("range {text:?} is reversed")));
    }
    Ok((lo, hi))
}

fn parse_range_i64(text: &str) -> Result<(i64, i64)> {
    let (lo, hi) = parse_range_f64(text)?;
    if lo.fract() != 0.0 || hi.fract() != 0.0 {
        return Err(invalid(format!("range {text:?} must be integral")));
    }
    Ok((lo as i64, hi as i64))
}

fn cmd_gen_scenario(cmd: &GenScenarioCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let grid = common
        .grid
        .as_deref()
        .ok_or_else(|| invalid("gen-scenario requires --grid"))?;
    let (rows, cols) = parse_grid(grid)?;
    let steps = generation_steps(common, true)?;
    let ranges = GenRanges {
        ped_initial: parse_range_i64(&cmd.ped_initial)?,
        ped_arrivals: parse_range_i64(&cmd.ped_arrivals)?,
        gamma: parse_range_f64(&cmd.gamma)?,
        veh_initial: parse_range_i64(&cmd.veh_initial)?,
        veh_inflow: parse_range_i64(&cmd.veh_inflow)?,
        veh_max_volume: cmd.veh_max,
    };
    let scenario = generate(
        GridSpec::new(rows, cols, GEN_DELTA, steps)?,
        GenSpec {
            seed: common.seed,
            ranges,
        },
    )?;
    write_file(&common.out.join("scenario.json"), &scenario.to_json())?;
    write_summary(
        common,
        &[
            ("grid", format!("{rows}x{cols}")),
            ("steps", steps.to_string()),
            ("seed", common.seed.to_string()),
            ("junctions", (rows * cols).to_string()),
        ],
    )
}

fn cmd_simulate(cmd: &SimulateCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let scenario = load_or_generate(common, false)?;
    let schedule = load_schedule(&cmd.schedule, &scenario)?;
    let cfg = common.unhappiness_config();

    let ped = simulate(&scenario.ped, &schedule)?;
    let veh_schedule = veh_layer(&schedule, &common.coupling());
    let network = scenario.network();
    let veh = simulate_veh(&network, &scenario.veh, &veh_schedule)?;

    write_file(&common.out.join("ped_trace.csv"), &ped.to_csv(&scenario.ped, &cfg)?)?;
    write_file(
        &common.out.join("veh_trace.csv"),
        &veh.to_csv(scenario.veh.params.length_speed_ratio),
    )?;
    let unhappiness = unhappiness_cost(&scenario.ped, &ped, &cfg)?;
    write_summary(
        common,
        &[
            ("schedule_hash", schedule.hash_id()),
            ("ped_delay_raw", ped.raw_delay().to_string()),
            ("ped_delay_cost", ped.delay_cost().to_string()),
            ("ped_unhappiness", unhappiness.to_string()),
            ("veh_delay_raw", veh.raw_delay().to_string()),
            ("veh_delay_cost", veh.delay_cost().to_string()),
            ("veh_exited", veh.total_exited().to_string()),
            ("veh_dropped", veh.total_dropped().to_string()),
        ],
    )
}

fn solve_objective(common: &Common) -> Result<PedObjective> {
    match common.objective {
        ObjectiveArg::Delay => Ok(PedObjective::Delay),
        ObjectiveArg::Unhappiness => Ok(PedObjective::Unhappiness),
        ObjectiveArg::Weighted => Err(invalid(
            "weighted objective is handled by the coupled solver path",
        )),
    }
}

fn cmd_solve_exact(cmd: &SolveCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let scenario = load_or_generate(common, false)?;
    if common.objective == ObjectiveArg::Weighted {
        let problem = WeightedProblem::new(&scenario, common.coupling(), common.weight)?;
        let solve = problem.solve(&JointSolver::Exact)?;
        return write_joint_outputs(common, &solve);
    }
    let objective = solve_objective(common)?;
    let solve = solve_exact_network(&scenario.ped, objective, &common.unhappiness_config())?;
    write_file(&common.out.join("schedule.csv"), &solve.schedule.to_csv())?;
    write_summary(
        common,
        &[
            ("cost", solve.cost.to_string()),
            ("schedule_hash", solve.schedule.hash_id()),
            ("junctions", solve.per_junction.len().to_string()),
        ],
    )
}

fn write_joint_outputs(
    common: &Common,
    solve: &crossflow::integrate::JointSolve,
) -> Result<()> {
    write_file(&common.out.join("schedule.csv"), &solve.schedule.to_csv())?;
    write_file(&common.out.join("veh_schedule.csv"), &solve.veh_schedule.to_csv())?;
    write_summary(
        common,
        &[
            ("weight", common.weight.to_string()),
            ("weighted_cost", solve.scaled.u.to_string()),
            ("ped_ratio", solve.scaled.ped_ratio.to_string()),
            ("veh_ratio", solve.scaled.veh_ratio.to_string()),
            ("ped_delay_raw", solve.costs.ped_raw.to_string()),
            ("veh_delay_raw", solve.costs.veh_raw.to_string()),
            ("schedule_hash", solve.schedule.hash_id()),
        ],
    )
}

fn cmd_solve_dhs(cmd: &SolveDhsCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let scenario = load_or_generate(common, false)?;
    let params = cmd.dhs.params();
    if common.objective == ObjectiveArg::Weighted {
        let problem = WeightedProblem::new(&scenario, common.coupling(), common.weight)?;
        let solve = problem.solve(&JointSolver::Dhs {
            params,
            seed: common.seed,
        })?;
        return write_joint_outputs(common, &solve);
    }
    let objective = solve_objective(common)?;
    let problem =
        PedDhsProblem::new(&scenario.ped, objective, common.unhappiness_config())?;
    let run = dhs::run(&problem, &params, common.seed)?;
    let schedule = StageSchedule::from_bits(
        scenario.grid.n_junctions(),
        scenario.grid.steps,
        &run.best_bits,
    )?;
    write_file(&common.out.join("schedule.csv"), &schedule.to_csv())?;
    write_file(&common.out.join("dhs_trace.csv"), &run.trace_to_csv())?;
    write_summary(
        common,
        &[
            ("cost", run.best_cost.to_string()),
            ("schedule_hash", schedule.hash_id()),
            ("iterations", params.iterations.to_string()),
            ("memory_size", params.memory_size.to_string()),
            ("seed", common.seed.to_string()),
        ],
    )
}

fn cmd_export_milp(cmd: &ExportMilpCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let scenario = load_or_generate(common, false)?;
    let milp = build_milp(&scenario.ped)?;
    export_lp(&milp.model, &common.out.join("model.lp"))?;
    write_summary(
        common,
        &[
            ("variables", milp.model.n_variables().to_string()),
            ("constraints", milp.model.n_constraints().to_string()),
            (
                "binaries",
                milp.model
                    .count_kind(crossflow::milp::VarKind::Binary)
                    .to_string(),
            ),
            (
                "integers",
                milp.model
                    .count_kind(crossflow::milp::VarKind::Integer)
                    .to_string(),
            ),
            ("big_m", milp.model.meta.big_m.to_string()),
            ("big_m1", milp.model.meta.big_m1.to_string()),
        ],
    )
}

fn cmd_check_milp(cmd: &CheckMilpCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let scenario = load_or_generate(common, false)?;
    let schedule = load_schedule(&cmd.schedule, &scenario)?;
    let milp = build_milp(&scenario.ped)?;
    let trace = simulate(&scenario.ped, &schedule)?;
    let report = check_trace(&milp, &schedule, &trace)?;

    let mut rows = String::from("row,amount\n");
    for v in &report.violations {
        rows.push_str(&format!("{},{}\n", v.row, v.amount));
    }
    write_file(&common.out.join("violations.csv"), &rows)?;
    write_summary(
        common,
        &[
            ("rows_checked", report.rows_checked.to_string()),
            ("violations", report.violations.len().to_string()),
            ("clean", report.is_clean().to_string()),
            ("schedule_hash", schedule.hash_id()),
        ],
    )
}

fn cmd_mpc_run(cmd: &MpcRunCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let plant = load_or_generate(common, true)?;
    let window = match (cmd.window, common.horizon) {
        (Some(n), _) => n,
        (None, Some(seconds)) => steps_from_seconds(seconds, plant.grid.delta)?,
        (None, None) => {
            return Err(invalid("mpc-run needs --window or --horizon"));
        }
    };
    let objective = match common.objective {
        ObjectiveArg::Delay => MpcObjective::Delay,
        ObjectiveArg::Unhappiness => MpcObjective::Unhappiness,
        ObjectiveArg::Weighted => MpcObjective::Weighted {
            weight: common.weight,
            coupling: common.coupling(),
        },
    };
    let solver = match cmd.solver {
        SolverArg::Exact => MpcSolver::Exact,
        SolverArg::Dhs => MpcSolver::Dhs {
            params: cmd.dhs.params(),
            seed: common.seed,
        },
    };
    let mut config = MpcConfig::new(window, objective, solver);
    config.unhappiness = common.unhappiness_config();
    if let Some(amplitude) = cmd.noise_amplitude {
        config.noise = Some(PredictionNoise {
            amplitude,
            seed: cmd.noise_seed.unwrap_or(common.seed),
        });
    }

    let run = run_mpc(&plant, &config)?;
    write_file(&common.out.join("mpc_steps.csv"), &run.to_csv())?;
    write_file(&common.out.join("applied_schedule.csv"), &run.schedule_csv())?;
    let mut pairs = vec![
        ("window", window.to_string()),
        ("steps", plant.grid.steps.to_string()),
        ("realized_ped_cost", run.realized_ped_cost().to_string()),
        ("applied_hash", run.applied.hash_id()),
    ];
    if let Some(cost) = run.realized_veh_cost() {
        pairs.push(("realized_veh_cost", cost.to_string()));
    }
    write_summary(common, &pairs)
}

fn cmd_sweep_weights(cmd: &SweepWeightsCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let scenario = load_or_generate(common, false)?;
    let grid: Vec<f64> = match &cmd.weights {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("bad weight {s:?}")))
            })
            .collect::<Result<_>>()?,
        None => {
            if !(cmd.weight_step > 0.0 && cmd.max_weight >= 0.0) {
                return Err(invalid("--weight-step must be positive"));
            }
            let n = (cmd.max_weight / cmd.weight_step).round() as usize;
            (0..=n).map(|k| k as f64 * cmd.weight_step).collect()
        }
    };
    let problem = WeightedProblem::new(&scenario, common.coupling(), 0.0)?;
    let sweep = sweep_weights(&problem, &grid, !cmd.no_refine)?;

    write_file(&common.out.join("sweep.csv"), &sweep.to_csv())?;
    let mut turning = String::from("lower,upper,sf\n");
    for t in &sweep.turning {
        turning.push_str(&format!("{},{},{}\n", t.lower, t.upper, t.sf));
    }
    write_file(&common.out.join("turning.csv"), &turning)?;
    write_summary(
        common,
        &[
            ("points", sweep.points.len().to_string()),
            ("turnings", sweep.turning.len().to_string()),
            ("resolution", sweep.resolution.to_string()),
            ("ped_max_raw", problem.ped_max_raw().to_string()),
            ("veh_max_raw", problem.veh_max_raw().to_string()),
        ],
    )
}

fn parse_sizes(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',').map(|s| parse_grid(s.trim())).collect()
}

fn parse_steps_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("bad interval count {s:?}")))
        })
        .collect()
}

fn cmd_report(cmd: &ReportCmd) -> Result<()> {
    let common = &cmd.common;
    prepare(common)?;
    let sizes = parse_sizes(&cmd.sizes)?;
    let steps = parse_steps_list(&cmd.steps_list)?;
    match cmd.table {
        TableArg::Scaling => {
            let table = scaling_table(&sizes, &steps, common.seed)?;
            write_file(&common.out.join("scaling.csv"), &table.to_csv())?;
            if cmd.timings {
                write_file(&common.out.join("scaling_timings.csv"), &table.timings_csv())?;
            }
            write_summary(common, &[("cells", table.cells.len().to_string())])
        }
        TableArg::Gap => {
            let table = gap_table(&sizes, &steps, cmd.instances, common.seed, &cmd.dhs.params())?;
            write_file(&common.out.join("gap.csv"), &table.to_csv())?;
            if cmd.timings {
                write_file(&common.out.join("gap_timings.csv"), &table.timings_csv())?;
            }
            write_summary(
                common,
                &[
                    ("rows", table.rows.len().to_string()),
                    ("median_gap_percent", table.median_gap().to_string()),
                    ("max_gap_percent", table.max_gap().to_string()),
                ],
            )
        }
        TableArg::Sf => {
            let table = sf_comparison(
                &sizes,
                &steps,
                cmd.instances,
                common.seed,
                &common.unhappiness_config(),
            )?;
            write_file(&common.out.join("sf.csv"), &table.to_csv())?;
            write_summary(
                common,
                &[
                    ("rows", table.rows.len().to_string()),
                    ("separation_fraction", table.separation_fraction().to_string()),
                ],
            )
        }
    }
}
