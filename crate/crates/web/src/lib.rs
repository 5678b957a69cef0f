//! Browser bindings: each exported function runs a small simulation and
//! returns its result as a JSON string for the demo page to plot.

use nwn_core::circuit::{EdgeState, MemristorParams};
use nwn_core::experiment::config::GeneratorKind;
use nwn_core::experiment::io_map::run_io_map_on;
use nwn_core::experiment::pulse::run_pulse_on;
use nwn_core::experiment::ExperimentConfig;
use nwn_core::rng::derive_seed;
use nwn_core::topology::NetworkGraph;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn memristor(k_grow: f64, k_decay: f64) -> MemristorParams {
    MemristorParams { k_grow, k_decay, ..ExperimentConfig::default().memristor }
}

/// Every `stride`-th element, so the page never receives more than a few
/// thousand points per curve.
fn thin(values: &[f64], stride: usize) -> Vec<f64> {
    values.iter().step_by(stride.max(1)).copied().collect()
}

/// DC pulse into one node of a random network.
pub fn pulse_json(
    n_nodes: usize,
    n_edges: usize,
    amplitude: f64,
    duration: f64,
    k_grow: f64,
    k_decay: f64,
    seed: u64,
) -> Result<String, String> {
    let mut cfg = ExperimentConfig::default();
    cfg.network.generator = GeneratorKind::Random;
    cfg.network.n_nodes = n_nodes;
    cfg.network.n_edges = Some(n_edges);
    cfg.memristor = memristor(k_grow, k_decay);
    cfg.pulse.amplitude = amplitude;
    cfg.pulse.duration = duration;
    cfg.pulse.total_time = (duration * 2.5).max(1.0);
    cfg.pulse.snapshot_times = vec![duration, cfg.pulse.total_time];
    cfg.validate(nwn_core::experiment::ExperimentKind::Pulse).map_err(|e| e.to_string())?;
    let graph = NetworkGraph::random_connected(n_nodes, n_edges, derive_seed(seed, &[0])).map_err(|e| e.to_string())?;
    let r = run_pulse_on(&cfg, graph, seed).map_err(|e| e.to_string())?;
    let stride = r.times.len() / 2000 + 1;
    let (peak_k, peak) = r.peak();
    Ok(json!({
        "times": thin(&r.times, stride),
        "input_v": thin(&r.input_v, stride),
        "activity": thin(&r.activity, stride),
        "mean_g": thin(&r.mean_g, stride),
        "peak_activity": peak,
        "peak_time": r.times[peak_k],
        "input_node": r.input_node,
    })
    .to_string())
}

/// Fourier-mode drive of 100-node networks at several edge counts.
pub fn io_map_json(edge_counts: &[usize], steps: usize, seed: u64) -> Result<String, String> {
    let mut cfg = ExperimentConfig::default();
    cfg.network.n_nodes = 100;
    cfg.network.edge_counts = edge_counts.to_vec();
    cfg.fourier.steps = steps;
    cfg.validate(nwn_core::experiment::ExperimentKind::IoMap).map_err(|e| e.to_string())?;
    let graphs = edge_counts
        .iter()
        .enumerate()
        .map(|(k, &m)| NetworkGraph::random_connected(100, m, derive_seed(seed, &[k as u64, 0])))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let r = run_io_map_on(&cfg, graphs, seed).map_err(|e| e.to_string())?;
    let stride = steps / 1000 + 1;
    let input_sum: Vec<f64> =
        (0..r.inputs.nrows()).map(|t| (0..r.inputs.ncols()).map(|c| r.inputs[(t, c)]).sum()).collect();
    let networks: Vec<_> = r
        .networks
        .iter()
        .map(|net| {
            let readouts: Vec<Vec<f64>> = (0..net.readouts.ncols().min(4))
                .map(|c| thin(&net.readouts.col(c).iter().copied().collect::<Vec<_>>(), stride))
                .collect();
            json!({
                "n_edges": net.graph.n_edges(),
                "density": net.graph.density(),
                "corr_mean": net.diversity.map(|d| d.mean),
                "corr_min": net.diversity.map(|d| d.min),
                "input_locality": net.input_locality(),
                "readouts": readouts,
            })
        })
        .collect();
    Ok(json!({
        "times": thin(&r.times, stride),
        "input_sum": thin(&input_sum, stride),
        "networks": networks,
    })
    .to_string())
}

/// One junction between a sinusoidal source and ground: voltage, filament
/// state and conductance over time.
pub fn junction_json(
    amplitude: f64,
    frequency: f64,
    k_grow: f64,
    k_decay: f64,
    duration: f64,
) -> Result<String, String> {
    let params = memristor(k_grow, k_decay);
    params.validate().map_err(|e| e.to_string())?;
    if !(duration > 0.0 && duration <= 100.0) {
        return Err("duration must lie in (0, 100] s".into());
    }
    let dt = 0.005;
    let steps = (duration / dt) as usize;
    let mut state = EdgeState::pristine(1, &params);
    let (mut t, mut v, mut g) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..steps {
        let time = k as f64 * dt;
        let volts = amplitude * (2.0 * std::f64::consts::PI * frequency * time).sin();
        state.advance(&[volts], dt, &params).map_err(|e| e.to_string())?;
        t.push(time);
        v.push(volts);
        g.push(state.conductances()[0]);
    }
    let stride = steps / 2000 + 1;
    Ok(json!({ "times": thin(&t, stride), "voltage": thin(&v, stride), "conductance": thin(&g, stride) }).to_string())
}

#[wasm_bindgen]
pub fn pulse(
    n_nodes: usize,
    n_edges: usize,
    amplitude: f64,
    duration: f64,
    k_grow: f64,
    k_decay: f64,
    seed: u32,
) -> Result<String, JsValue> {
    pulse_json(n_nodes, n_edges, amplitude, duration, k_grow, k_decay, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn io_map(edge_counts: Vec<u32>, steps: usize, seed: u32) -> Result<String, JsValue> {
    let counts: Vec<usize> = edge_counts.into_iter().map(|m| m as usize).collect();
    io_map_json(&counts, steps, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn junction(amplitude: f64, frequency: f64, k_grow: f64, k_decay: f64, duration: f64) -> Result<String, JsValue> {
    junction_json(amplitude, frequency, k_grow, k_decay, duration).map_err(|e| JsValue::from_str(&e))
}
