mod common;

use common::{dense_oracle, instance_strategy, Instance};
use nwn_core::circuit::{kcl_residual, Circuit, EdgeState, MemristorParams, NodalSolver, KCL_TOLERANCE};
use nwn_core::topology::NetworkGraph;
use proptest::prelude::*;

fn pinned(inst: &Instance) -> Vec<usize> {
    inst.sources.iter().chain(&inst.grounds).copied().collect()
}

fn solve(inst: &Instance, volts: &[f64]) -> Vec<f64> {
    let mut solver = NodalSolver::new(&inst.graph, &inst.sources, &inst.grounds).unwrap();
    solver.solve(&inst.g, volts).unwrap().node_voltages
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_dense_elimination(inst in instance_strategy(40)) {
        let v = solve(&inst, &inst.volts);
        let oracle = dense_oracle(&inst);
        for (a, b) in v.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn kirchhoff_residual_within_contract(inst in instance_strategy(60)) {
        let v = solve(&inst, &inst.volts);
        prop_assert!(kcl_residual(&inst.graph, &inst.g, &v, &pinned(&inst)) < KCL_TOLERANCE);
    }

    #[test]
    fn superposition_at_frozen_state(inst in instance_strategy(40), alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let b2: Vec<f64> = inst.volts.iter().map(|v| 0.7 - v * v).collect();
        let mix: Vec<f64> = inst.volts.iter().zip(&b2).map(|(x, y)| alpha * x + beta * y).collect();
        let (v1, v2, vm) = (solve(&inst, &inst.volts), solve(&inst, &b2), solve(&inst, &mix));
        for k in 0..vm.len() {
            prop_assert!((vm[k] - (alpha * v1[k] + beta * v2[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn voltages_stay_within_boundary_range(inst in instance_strategy(40)) {
        // Maximum principle for a resistive network.
        let v = solve(&inst, &inst.volts);
        let hi = inst.volts.iter().copied().fold(0.0, f64::max);
        let lo = inst.volts.iter().copied().fold(0.0, f64::min);
        prop_assert!(v.iter().all(|&x| x <= hi + 1e-12 && x >= lo - 1e-12));
    }

    #[test]
    fn passive_at_every_step(inst in instance_strategy(30), drive in prop::collection::vec(-1.0..1.0f64, 20)) {
        let params = MemristorParams { k_grow: 50.0, ..MemristorParams::default() };
        let mut c = Circuit::new(&inst.graph, &inst.sources, &inst.grounds, params, inst.state(&params)).unwrap();
        for d in drive {
            let volts: Vec<f64> = inst.volts.iter().map(|v| v * d).collect();
            let sol = c.step(&volts, 0.01).unwrap();
            prop_assert!(sol.delivered_power() >= -1e-12);
        }
    }

    #[test]
    fn conductance_stays_in_bounds(
        inst in instance_strategy(30),
        drive in prop::collection::vec(-20.0..20.0f64, 30),
        k_grow in 0.0..2000.0f64,
        k_decay in 0.0..50.0f64,
    ) {
        let params = MemristorParams { k_grow, k_decay, ..MemristorParams::default() };
        let mut c = Circuit::new(&inst.graph, &inst.sources, &inst.grounds, params, inst.state(&params)).unwrap();
        for d in drive {
            let volts: Vec<f64> = inst.volts.iter().map(|v| v * d).collect();
            c.step(&volts, 0.05).unwrap();
            prop_assert!(c.state().conductances().iter().all(|&g| g >= params.g_off && g <= params.g_on));
            prop_assert!(c.state().filaments().iter().all(|&s| (0.0..=1.0).contains(&s)));
        }
    }

    #[test]
    fn fading_memory_under_zero_drive(inst in instance_strategy(30)) {
        let params = MemristorParams::default();
        let mut c = Circuit::new(&inst.graph, &inst.sources, &inst.grounds, params, inst.state(&params)).unwrap();
        let zero = vec![0.0; inst.sources.len()];
        let mut prev = c.state().filaments().to_vec();
        for _ in 0..50 {
            c.step(&zero, 0.1).unwrap();
            let now = c.state().filaments();
            for (a, b) in prev.iter().zip(now) {
                prop_assert!(*a == 0.0 && *b == 0.0 || b < a);
            }
            prev = now.to_vec();
        }
        let (mean_g, _) = c.state().conductance_stats();
        prop_assert!(mean_g - params.g_off < 0.1 * (params.g_on - params.g_off));
    }
}

fn trajectory(graph: &NetworkGraph, sub_steps: usize) -> Vec<f64> {
    let params = MemristorParams { k_grow: 20.0, k_decay: 1.0, sub_steps, ..MemristorParams::default() };
    let mut c =
        Circuit::new(graph, &[0], &[graph.n_nodes() - 1], params, EdgeState::pristine(graph.n_edges(), &params))
            .unwrap();
    for k in 0..40 {
        let v = 0.3 * (0.25 * k as f64).sin();
        c.step(&[v], 0.02).unwrap();
    }
    c.state().filaments().to_vec()
}

#[test]
fn sub_steps_converge_at_first_order() {
    for seed in [1, 2, 3] {
        let graph = NetworkGraph::random_connected(12, 20, seed).unwrap();
        let reference = trajectory(&graph, 1000);
        let dev =
            |k: usize| trajectory(&graph, k).iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let (d1, d10, d100) = (dev(1), dev(10), dev(100));
        assert!(d1 > 0.0);
        assert!(d10 <= 0.5 * d1, "seed {seed}: {d1} -> {d10}");
        assert!(d100 <= 0.5 * d10, "seed {seed}: {d10} -> {d100}");
    }
}

#[test]
fn repeated_solves_on_a_drifting_state_stay_exact() {
    // Long stepping exercises the warm-started path of the solver.
    for (n, m) in [(60, 80), (60, 1200), (120, 7000)] {
        let graph = NetworkGraph::random_connected(n, m, 5).unwrap();
        let params = MemristorParams { k_grow: 500.0, k_decay: 2.0, ..MemristorParams::default() };
        let sources = [0, 1, 2];
        let grounds = [n - 1];
        let mut c = Circuit::new(&graph, &sources, &grounds, params, EdgeState::pristine(m, &params)).unwrap();
        for k in 0..300 {
            let t = k as f64 * 0.005;
            let volts = [0.2 * (3.0 * t).sin(), 0.1 * (5.0 * t).cos(), 0.05];
            let g = c.state().conductances().to_vec();
            let sol = c.step(&volts, 0.005).unwrap();
            let inst = Instance {
                graph: graph.clone(),
                g,
                sources: sources.to_vec(),
                grounds: grounds.to_vec(),
                volts: volts.to_vec(),
            };
            let oracle = dense_oracle(&inst);
            for (a, b) in sol.node_voltages.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10, "step {k}: {a} vs {b}");
            }
            let pinned = [0, 1, 2, n - 1];
            assert!(kcl_residual(&graph, &inst.g, &sol.node_voltages, &pinned) < KCL_TOLERANCE);
        }
    }
}
