//! Property suite: structural invariants of the flow models, the red-run
//! bookkeeping, the solvers, and the schedule codecs under randomized
//! inputs.

use proptest::prelude::*;

use crossflow::dhs::{self, DhsParams, PedDhsProblem, ScheduleCost};
use crossflow::error::Error;
use crossflow::exact::PedObjective;
use crossflow::mpc::{run_mpc, MpcConfig, MpcObjective, MpcSolver};
use crossflow::milp::{build_milp, check_trace};
use crossflow::num::floor_count;
use crossflow::ped::{
    simulate, step_junction, CrosswalkGeometry, JunctionDemand, PedScenario,
};
use crossflow::scenario::generate_default;
use crossflow::schedule::StageSchedule;
use crossflow::topology::{
    build_grid, partner, stage_streams, GridSpec, LinkKind, Stage, NUM_CORNERS,
};
use crossflow::unhappiness::{
    blocked_averages, red_run_profile, unhappiness_cost, UnhappinessConfig,
};
use crossflow::veh::{simulate_veh, step_network, VehState};

fn arb_stage() -> impl Strategy<Value = Stage> {
    prop_oneof![Just(Stage::Horizontal), Just(Stage::Vertical)]
}

fn arb_ratio() -> impl Strategy<Value = f64> {
    (0..=10_000i64).prop_map(|q| q as f64 / 10_000.0)
}

#[test]
fn partner_is_an_involution_and_a_derangement() {
    for stage in Stage::ALL {
        for corner in 0..NUM_CORNERS {
            let p = partner(corner, stage);
            assert_ne!(p, corner);
            assert_eq!(partner(p, stage), corner);
        }
    }
}

#[test]
fn streams_partition_the_corners() {
    for stage in Stage::ALL {
        let streams = stage_streams(stage);
        let mut sources = [false; NUM_CORNERS];
        let mut dests = [false; NUM_CORNERS];
        for (src, dst) in streams {
            assert!(!sources[src] && !dests[dst], "corner reused");
            sources[src] = true;
            dests[dst] = true;
            assert_eq!(partner(src, stage), dst);
        }
        assert!(sources.iter().all(|&b| b) && dests.iter().all(|&b| b));
    }
}

proptest! {
    #[test]
    fn grid_link_structure_holds(rows in 1usize..=4, cols in 1usize..=4) {
        let network = build_grid(GridSpec::new(rows, cols, 15.0, 2).unwrap()).unwrap();
        let topo = &network.veh;
        prop_assert_eq!(topo.n_links(), rows * (cols + 1) + cols * (rows + 1));
        let boundary = topo.links.iter().filter(|l| l.kind == LinkKind::Boundary).count();
        prop_assert_eq!(boundary, rows + cols);
        prop_assert_eq!(topo.exit_links().count(), rows + cols);
        // Every junction has one incoming and one outgoing link per
        // orientation, and flows resolve sinks-first.
        for j in 0..rows * cols {
            prop_assert_eq!(topo.links[topo.in_h[j]].to_junction, Some(j));
            prop_assert_eq!(topo.links[topo.in_v[j]].to_junction, Some(j));
            prop_assert_eq!(topo.links[topo.out_h[j]].from_junction, Some(j));
            prop_assert_eq!(topo.links[topo.out_v[j]].from_junction, Some(j));
        }
        let position: Vec<usize> = {
            let mut pos = vec![0; topo.n_links()];
            for (i, &l) in topo.resolution_order.iter().enumerate() {
                pos[l] = i;
            }
            pos
        };
        prop_assert_eq!(topo.resolution_order.len(), topo.n_links());
        for l in 0..topo.n_links() {
            if let Some(next) = topo.successor(l) {
                prop_assert!(position[next] < position[l], "link {} resolved before its successor", l);
            }
        }
    }

    #[test]
    fn ped_step_conserves_and_respects_caps(
        volumes in prop::array::uniform4(0i64..=300),
        arrivals in prop::array::uniform4(0i64..=25),
        alpha in prop::array::uniform4(arb_ratio()),
        gamma in prop::array::uniform4(arb_ratio()),
        stage in arb_stage(),
        prev in prop::option::of(arb_stage()),
    ) {
        let caps = CrosswalkGeometry::default().stage_caps(15.0).unwrap();
        let step = step_junction(&caps, &volumes, stage, prev, &arrivals, &alpha, &gamma);

        for o in Stage::ALL {
            let expected = if prev == Some(o) { caps.cont } else { caps.first };
            prop_assert_eq!(step.caps[o.index()], expected);
        }
        let mut sent = 0;
        let mut received = 0;
        for i in 0..NUM_CORNERS {
            prop_assert_eq!(
                step.next[i],
                volumes[i] - step.flows[i] + arrivals[i] + step.inflows[i] - step.departed[i]
            );
            prop_assert!(step.next[i] >= 0);
            prop_assert!((0..=volumes[i]).contains(&step.flows[i]));
            prop_assert!(step.flows[i] <= step.caps[stage.index()]);
            prop_assert_eq!(step.inflows[i], step.flows[partner(i, stage)]);
            prop_assert!((0..=step.inflows[i]).contains(&step.departed[i]));
            sent += step.flows[i];
            received += step.inflows[i];
        }
        prop_assert_eq!(sent, received);
        prop_assert_eq!(step.delay_raw, volumes.iter().sum::<i64>() - sent);
    }

    #[test]
    fn ped_simulation_composes_from_single_steps(
        seed in 0u64..1000,
        idx in 0u64..256,
        steps in 1usize..=4,
    ) {
        let scenario = generate_default(2, 1, steps, seed).unwrap().ped;
        let schedule = StageSchedule::from_index(2, steps, idx & ((1 << (2 * steps)) - 1));
        let trace = simulate(&scenario, &schedule).unwrap();
        let caps = scenario.geometry.stage_caps(scenario.delta).unwrap();
        for j in 0..2 {
            let demand = &scenario.junctions[j];
            let jt = &trace.junctions[j];
            prop_assert_eq!(jt.volumes.len(), steps + 1);
            prop_assert_eq!(&jt.volumes[0], &demand.initial);
            let mut current = demand.initial;
            for t in 0..steps {
                let prev = if t == 0 { demand.prev_stage } else { Some(schedule.stage(j, t - 1)) };
                let step = step_junction(
                    &caps, &current, schedule.stage(j, t), prev,
                    &demand.arrivals[t], &demand.alpha[t], &demand.gamma[t],
                );
                prop_assert_eq!(&jt.flows[t], &step.flows);
                prop_assert_eq!(jt.delay_raw[t], step.delay_raw);
                current = step.next;
                prop_assert_eq!(&jt.volumes[t + 1], &current);
            }
        }
    }

    #[test]
    fn crossing_caps_monotone_in_width_and_interval(
        w_lo in 5u32..=80,
        w_hi in 5u32..=80,
        d_lo in 130u32..=400,
        d_hi in 130u32..=400,
    ) {
        let (w_lo, w_hi) = (w_lo.min(w_hi), w_lo.max(w_hi));
        let (d_lo, d_hi) = (d_lo.min(d_hi), d_lo.max(d_hi));
        let geom = |w: u32| CrosswalkGeometry { width: w as f64 / 10.0, ..Default::default() };
        // Wider crosswalk, same interval.
        let a = geom(w_lo).stage_caps(d_hi as f64 / 10.0).unwrap();
        let b = geom(w_hi).stage_caps(d_hi as f64 / 10.0).unwrap();
        prop_assert!(a.first <= b.first && a.cont <= b.cont);
        // Longer interval, same width.
        let c = geom(w_hi).stage_caps(d_lo as f64 / 10.0).unwrap();
        prop_assert!(c.first <= b.first && c.cont <= b.cont);
        // Continuing green always serves at least the first green.
        for caps in [a, b, c] {
            prop_assert!(caps.cont >= caps.first);
            prop_assert!(caps.first >= 0);
        }
    }

    #[test]
    fn red_runs_partition_red_intervals(greens in prop::collection::vec(any::<bool>(), 1..=24)) {
        let profile = red_run_profile(&greens);
        let n = greens.len();
        let reds = greens.iter().filter(|&&g| !g).count() as i64;
        prop_assert_eq!(profile.phi.iter().sum::<i64>(), reds);
        for t in 0..n {
            let phi = profile.phi[t];
            if phi > 0 {
                // Only the last interval of a red run carries its length.
                prop_assert!(!greens[t]);
                prop_assert!(t + 1 == n || greens[t + 1]);
                let run_start = t + 1 - phi as usize;
                prop_assert!(greens[..run_start].len() == run_start);
                prop_assert!(greens[run_start..=t].iter().all(|&g| !g));
                prop_assert!(run_start == 0 || greens[run_start - 1]);
            }
        }
    }

    #[test]
    fn blocked_attribution_is_exhaustive(
        greens in prop::collection::vec(any::<bool>(), 1..=16),
        volume_seed in prop::collection::vec(0i64..=200, 17 * NUM_CORNERS),
        eta_seed in prop::collection::vec(0..=10_000i64, 16 * NUM_CORNERS),
    ) {
        let n = greens.len();
        let volumes: Vec<[i64; NUM_CORNERS]> = (0..=n)
            .map(|t| std::array::from_fn(|i| volume_seed[t * NUM_CORNERS + i]))
            .collect();
        let eta = |t: usize, i: usize| eta_seed[t * NUM_CORNERS + i] as f64 / 10_000.0;
        let profile = red_run_profile(&greens);
        let avg = blocked_averages(&profile, &greens, &volumes, eta);

        for i in 0..NUM_CORNERS {
            let attributed: f64 = (0..n).map(|t| avg.p_tilde[t][i]).sum();
            let blocked: f64 = (0..n)
                .filter(|&t| !greens[t])
                .map(|t| volumes[t][i] as f64 * eta(t, i))
                .sum();
            prop_assert!((attributed - blocked).abs() <= 1e-9 * (1.0 + blocked.abs()));
            for t in 0..n {
                if profile.phi[t] > 0 {
                    let spread = avg.p_bar[t][i] * profile.phi[t] as f64;
                    prop_assert!((spread - avg.p_tilde[t][i]).abs() <= 1e-9 * (1.0 + spread.abs()));
                } else {
                    prop_assert_eq!(avg.p_tilde[t][i], 0.0);
                    prop_assert_eq!(avg.p_bar[t][i], 0.0);
                }
            }
        }
    }

    #[test]
    fn veh_step_keeps_the_ledger(
        seed in 0u64..10_000,
        stages in prop::collection::vec(arb_stage(), 4),
    ) {
        let scenario = generate_default(2, 2, 1, seed).unwrap();
        let network = scenario.network();
        let state = VehState::initial(&scenario.veh);
        let step = step_network(&network, &scenario.veh, &state, &stages, 0).unwrap();

        for (l, link) in network.veh.links.iter().enumerate() {
            if let Some(j) = link.to_junction {
                if stages[j] != link.orientation {
                    prop_assert_eq!(step.outflows[l], 0);
                    prop_assert_eq!(step.levels[l], 0.0);
                }
            }
            prop_assert!((0..=state.volumes[l]).contains(&step.outflows[l]));
            if step.outflows[l] > 0 {
                let cap = floor_count(step.levels[l] * scenario.veh.params.saturation_count);
                prop_assert!(step.outflows[l] <= cap);
            }
            prop_assert!(step.dropped[l] >= 0);
            prop_assert!((0..=scenario.veh.max_volumes[l]).contains(&step.next.volumes[l]));
        }
        let before: i64 = state.volumes.iter().sum();
        let after: i64 = step.next.volumes.iter().sum();
        prop_assert_eq!(after, before - step.exited + step.accepted);
        let offered: i64 = scenario.veh.boundary_inflow.iter().map(|s| s[0]).sum();
        prop_assert_eq!(step.accepted, offered - step.dropped.iter().sum::<i64>());
    }

    #[test]
    fn veh_simulation_composes_from_single_steps(
        seed in 0u64..1000,
        idx in 0u64..4096,
        steps in 1usize..=3,
    ) {
        let scenario = generate_default(2, 2, steps, seed).unwrap();
        let network = scenario.network();
        let schedule = StageSchedule::from_index(4, steps, idx & ((1 << (4 * steps)) - 1));
        let trace = simulate_veh(&network, &scenario.veh, &schedule).unwrap();
        prop_assert_eq!(trace.volumes.len(), steps + 1);
        prop_assert_eq!(&trace.volumes[0], &scenario.veh.initial);

        let mut state = VehState::initial(&scenario.veh);
        let mut raw = 0.0;
        for t in 0..steps {
            let row: Vec<Stage> = (0..4).map(|j| schedule.stage(j, t)).collect();
            let step = step_network(&network, &scenario.veh, &state, &row, t).unwrap();
            prop_assert_eq!(&trace.outflows[t], &step.outflows);
            prop_assert_eq!(&trace.volumes[t + 1], &step.next.volumes);
            prop_assert_eq!(trace.delay_raw[t], step.delay_raw);
            raw += step.delay_raw;
            state = step.next;
        }
        prop_assert_eq!(trace.raw_delay(), raw);
    }

    #[test]
    fn longer_green_runs_never_slow_a_link(history in 0usize..=4, seed in 0u64..500) {
        // A link that has been green for longer moves at least as fast.
        let mut scenario = generate_default(1, 1, 1, seed).unwrap();
        let network = scenario.network();
        let in_h = network.veh.in_h[0];
        scenario.veh.initial[in_h] = scenario.veh.max_volumes[in_h];
        let short = {
            scenario.veh.prehistory[0] = Vec::new();
            let state = VehState::initial(&scenario.veh);
            step_network(&network, &scenario.veh, &state, &[Stage::Horizontal], 0).unwrap()
        };
        let long = {
            scenario.veh.prehistory[0] = vec![Stage::Horizontal; history];
            let state = VehState::initial(&scenario.veh);
            step_network(&network, &scenario.veh, &state, &[Stage::Horizontal], 0).unwrap()
        };
        prop_assert!(long.levels[in_h] >= short.levels[in_h]);
        prop_assert!(long.outflows[in_h] >= short.outflows[in_h]);
    }

    #[test]
    fn harmony_search_trace_is_sound(seed in 0u64..200) {
        let scenario = generate_default(1, 1, 4, seed).unwrap().ped;
        let problem =
            PedDhsProblem::new(&scenario, PedObjective::Delay, UnhappinessConfig::default())
                .unwrap();
        let params = DhsParams {
            memory_size: 12,
            iterations: 30,
            ..DhsParams::default()
        };
        let run = dhs::run(&problem, &params, seed).unwrap();
        prop_assert_eq!(run.trace.len(), params.iterations + 1);
        prop_assert!(run.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*run.trace.last().unwrap(), run.best_cost);
        prop_assert_eq!(run.best_bits.len(), 4);
        prop_assert_eq!(problem.cost(&run.best_bits).unwrap(), run.best_cost);
    }

    #[test]
    fn schedules_round_trip_through_their_codecs(
        n in 1usize..=3,
        steps in 1usize..=6,
        idx in any::<u64>(),
    ) {
        let idx = idx & ((1u64 << (n * steps)) - 1);
        let schedule = StageSchedule::from_index(n, steps, idx);
        let bits = schedule.to_bits();
        prop_assert_eq!(bits.len(), n * steps);
        let back = StageSchedule::from_bits(n, steps, &bits).unwrap();
        prop_assert_eq!(&back, &schedule);
        let csv = schedule.to_csv();
        let parsed = StageSchedule::from_csv(&csv).unwrap();
        prop_assert_eq!(&parsed, &schedule);
        prop_assert_eq!(schedule.hamming(&schedule).unwrap(), 0);
        prop_assert_eq!(&StageSchedule::from_index(n, steps, idx), &schedule);
    }

    #[test]
    fn milp_rows_hold_on_simulated_traces(seed in 0u64..300, idx in 0u64..16) {
        let scenario = generate_default(1, 1, 4, seed).unwrap().ped;
        let milp = build_milp(&scenario).unwrap();
        let schedule = StageSchedule::from_index(1, 4, idx);
        let trace = simulate(&scenario, &schedule).unwrap();
        let report = check_trace(&milp, &schedule, &trace).unwrap();
        prop_assert!(report.is_clean(), "violations: {:?}", report.violations);
    }

    #[test]
    fn receding_horizon_runs_replay_exactly(
        seed in 0u64..100,
        horizon in 1usize..=3,
    ) {
        let plant = generate_default(1, 1, 3, seed).unwrap();
        let config = MpcConfig::new(horizon, MpcObjective::Delay, MpcSolver::Exact);
        let run = run_mpc(&plant, &config).unwrap();
        let direct = simulate(&plant.ped, &run.applied).unwrap();
        prop_assert_eq!(&run.realized_ped, &direct);
    }
}

#[test]
fn unhappiness_guard_trips_on_overflowing_runs() {
    let steps = 48;
    let scenario = PedScenario {
        geometry: CrosswalkGeometry::default(),
        delta: 15.0,
        steps,
        junctions: vec![JunctionDemand {
            initial: [10, 10, 10, 10],
            ..JunctionDemand::empty(steps)
        }],
    };
    // Constant horizontal keeps the vertical stage red for 48 intervals:
    // 720 s exceeds the 700 exponent bound.
    let schedule = StageSchedule::filled(1, steps, Stage::Horizontal);
    let trace = simulate(&scenario, &schedule).unwrap();
    let cfg = UnhappinessConfig::default();
    match unhappiness_cost(&scenario, &trace, &cfg) {
        Err(Error::ExponentOverflow { arg, bound }) => {
            assert_eq!(arg, 720.0);
            assert_eq!(bound, 700.0);
        }
        other => panic!("expected exponent overflow, got {other:?}"),
    }
    // Counting runs in intervals instead of seconds stays in range.
    let counted = UnhappinessConfig { exponent_in_seconds: false, ..cfg };
    let cost = unhappiness_cost(&scenario, &trace, &counted).unwrap();
    assert!(cost.is_finite() && cost > 0.0);
}
