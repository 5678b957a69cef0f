use crate::circuit::{Circuit, EdgeState};
use crate::error::Result;
use crate::reservoir::identity_wiring;
use crate::rng::derive_seed;
use crate::topology::NetworkGraph;

use super::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PulseResult {
    pub graph: NetworkGraph,
    pub input_node: usize,
    pub ground_nodes: Vec<usize>,
    pub times: Vec<f64>,
    pub input_v: Vec<f64>,
    pub activity: Vec<f64>,
    pub mean_g: Vec<f64>,
    /// `(requested time, conductances after the first step reaching it)`.
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

impl PulseResult {
    /// Index of the step with the highest activity.
    pub fn peak(&self) -> (usize, f64) {
        self.activity
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, a)| if a > best.1 { (i, a) } else { best })
    }

    /// Index of the last step with the pulse on, if any.
    pub fn pulse_end(&self) -> Option<usize> {
        self.input_v.iter().rposition(|&v| v != 0.0)
    }
}

/// The pulse voltage at time `t`.
pub fn pulse_voltage(cfg: &ExperimentConfig, t: f64) -> f64 {
    let p = &cfg.pulse;
    if t >= p.start && t < p.start + p.duration {
        p.amplitude
    } else {
        0.0
    }
}

/// Single-node pulse on a network built from the config; node placement is
/// drawn from `seed`.
pub fn run_pulse(cfg: &ExperimentConfig, seed: u64) -> Result<PulseResult> {
    cfg.validate(super::config::ExperimentKind::Pulse)?;
    let graph = cfg.network.build(None, derive_seed(seed, &[0]))?;
    run_pulse_on(cfg, graph, seed)
}

pub fn run_pulse_on(cfg: &ExperimentConfig, graph: NetworkGraph, seed: u64) -> Result<PulseResult> {
    let p = &cfg.pulse;
    let wiring = identity_wiring(&graph, 1, cfg.wiring.n_grounds, derive_seed(seed, &[1]))?;
    let pristine = EdgeState::pristine(graph.n_edges(), &cfg.memristor);
    let mut circuit = Circuit::new(&graph, &wiring.input_nodes, &wiring.ground_nodes, cfg.memristor, pristine)?;
    let n_steps = (p.total_time / p.dt).round() as usize;
    let mut snapshot_times = p.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;
    let mut result = PulseResult {
        input_node: wiring.input_nodes[0],
        ground_nodes: wiring.ground_nodes.clone(),
        times: Vec::with_capacity(n_steps),
        input_v: Vec::with_capacity(n_steps),
        activity: Vec::with_capacity(n_steps),
        mean_g: Vec::with_capacity(n_steps),
        snapshots: Vec::new(),
        graph: graph.clone(),
    };
    for k in 0..n_steps {
        let t = k as f64 * p.dt;
        let v = pulse_voltage(cfg, t);
        let solution = circuit.step(&[v], p.dt)?;
        let active = solution.edge_drops.iter().filter(|d| d.abs() > cfg.memristor.v_threshold).count();
        result.times.push(t);
        result.input_v.push(v);
        result.activity.push(active as f64 / graph.n_edges().max(1) as f64);
        result.mean_g.push(circuit.state().conductance_stats().0);
        // Conductances after this step belong to time t + dt.
        while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= t + p.dt * 1.5 {
            result.snapshots.push((snapshot_times[next_snapshot], circuit.state().conductances().to_vec()));
            next_snapshot += 1;
        }
    }
    Ok(result)
}
