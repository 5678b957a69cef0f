//! Input layer, ground placement and readout collection around a [`Circuit`].

use std::fmt::Write as _;

use faer::Mat;
use rand::seq::index::sample;
use rand::Rng;

use crate::circuit::{mean_std, Circuit, EdgeState, MemristorParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::topology::NetworkGraph;

/// Which nodes are driven, grounded and read, and how input signals mix onto
/// the driven nodes: `r_in = W_in u + b_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWiring {
    pub input_nodes: Vec<usize>,
    pub ground_nodes: Vec<usize>,
    /// Every remaining node, ascending.
    pub readout_nodes: Vec<usize>,
    /// `N_in x N_u`.
    pub w_in: Mat<f64>,
    pub b_in: Vec<f64>,
    pub seed: u64,
}

fn split_nodes(
    graph: &NetworkGraph,
    n_inputs: usize,
    n_grounds: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let n = graph.n_nodes();
    if n_inputs == 0 || n_grounds == 0 {
        return Err(Error::param("n_inputs", "need at least one input and one ground node"));
    }
    if n_inputs + n_grounds >= n {
        return Err(Error::param(
            "n_inputs",
            format!("{n_inputs} inputs + {n_grounds} grounds leave no readout node among {n}"),
        ));
    }
    let n_out = n - n_inputs - n_grounds;
    if n_out < n_inputs {
        return Err(Error::param("n_inputs", format!("{n_out} readout nodes is fewer than {n_inputs} input nodes")));
    }
    let mut rng = seeded(seed);
    let picked = sample(&mut rng, n, n_inputs + n_grounds).into_vec();
    let inputs = picked[..n_inputs].to_vec();
    let grounds = picked[n_inputs..].to_vec();
    let mut used = vec![false; n];
    for &v in &picked {
        used[v] = true;
    }
    let readouts = (0..n).filter(|&v| !used[v]).collect();
    Ok((inputs, grounds, readouts))
}

/// Random wiring: distinct input and ground nodes sampled uniformly,
/// `W_in ~ U(-win_range, win_range)`, `b_in ~ U(-bias_range, bias_range)`.
pub fn make_wiring(
    graph: &NetworkGraph,
    n_inputs: usize,
    n_grounds: usize,
    n_u: usize,
    win_range: f64,
    bias_range: f64,
    seed: u64,
) -> Result<ReservoirWiring> {
    if n_u == 0 {
        return Err(Error::param("n_u", "need at least one input signal"));
    }
    for (name, r) in [("win_range", win_range), ("bias_range", bias_range)] {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::param(name, "must be finite and non-negative"));
        }
    }
    let (input_nodes, ground_nodes, readout_nodes) = split_nodes(graph, n_inputs, n_grounds, seed)?;
    // Weights come from a second stream so node placement does not depend on n_u.
    let mut rng = seeded(derive_seed(seed, &[1]));
    let mut uniform = |range: f64| if range > 0.0 { rng.gen_range(-range..=range) } else { 0.0 };
    let mut w_in = Mat::zeros(n_inputs, n_u);
    for i in 0..n_inputs {
        for j in 0..n_u {
            w_in[(i, j)] = uniform(win_range);
        }
    }
    let b_in = (0..n_inputs).map(|_| uniform(bias_range)).collect();
    Ok(ReservoirWiring { input_nodes, ground_nodes, readout_nodes, w_in, b_in, seed })
}

/// One signal per input node (`W_in = I`, `b_in = 0`) on randomly placed nodes.
pub fn identity_wiring(graph: &NetworkGraph, n_inputs: usize, n_grounds: usize, seed: u64) -> Result<ReservoirWiring> {
    let (input_nodes, ground_nodes, readout_nodes) = split_nodes(graph, n_inputs, n_grounds, seed)?;
    Ok(ReservoirWiring {
        input_nodes,
        ground_nodes,
        readout_nodes,
        w_in: Mat::identity(n_inputs, n_inputs),
        b_in: vec![0.0; n_inputs],
        seed,
    })
}

impl ReservoirWiring {
    pub fn n_inputs(&self) -> usize {
        self.input_nodes.len()
    }

    pub fn n_u(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn n_readouts(&self) -> usize {
        self.readout_nodes.len()
    }

    /// Checks disjointness and coverage against `graph`.
    pub fn validate(&self, graph: &NetworkGraph) -> Result<()> {
        let n = graph.n_nodes();
        let mut seen = vec![false; n];
        for &v in self.input_nodes.iter().chain(&self.ground_nodes).chain(&self.readout_nodes) {
            if v >= n {
                return Err(Error::NodeOutOfRange { node: v, n_nodes: n });
            }
            if seen[v] {
                return Err(Error::BoundaryOverlap(v));
            }
            seen[v] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidGraph("wiring does not cover every node".into()));
        }
        if self.w_in.nrows() != self.input_nodes.len() || self.b_in.len() != self.input_nodes.len() {
            return Err(Error::Dimension("W_in / b_in rows must match input nodes".into()));
        }
        if self.ground_nodes.is_empty() {
            return Err(Error::Empty("ground node set"));
        }
        Ok(())
    }

    /// `W_in u + b_in` written into `out`.
    pub fn input_voltages_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.w_in.row(i);
            *o = self.b_in[i] + row.iter().zip(u).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    pub fn input_voltages(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_inputs()];
        self.input_voltages_into(u, &mut out);
        out
    }

    /// Full-precision TOML text for exact replay.
    pub fn to_toml(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
        let floats = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "input_nodes = [{}]", list(&self.input_nodes));
        let _ = writeln!(out, "ground_nodes = [{}]", list(&self.ground_nodes));
        let _ = writeln!(out, "readout_nodes = [{}]", list(&self.readout_nodes));
        let _ = writeln!(out, "b_in = [{}]", floats(&mut self.b_in.iter().copied()));
        let _ = writeln!(out, "w_in = [");
        for i in 0..self.w_in.nrows() {
            let _ = writeln!(out, "  [{}],", floats(&mut self.w_in.row(i).iter().copied()));
        }
        let _ = writeln!(out, "]");
        out
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            seed: u64,
            input_nodes: Vec<usize>,
            ground_nodes: Vec<usize>,
            readout_nodes: Vec<usize>,
            b_in: Vec<f64>,
            w_in: Vec<Vec<f64>>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Parse { what: "wiring", reason: e.to_string() })?;
        let n_u = raw.w_in.first().map_or(0, Vec::len);
        if raw.w_in.len() != raw.input_nodes.len() || raw.w_in.iter().any(|r| r.len() != n_u) {
            return Err(Error::Dimension("w_in must have one row of equal length per input node".into()));
        }
        Ok(ReservoirWiring {
            w_in: Mat::from_fn(raw.w_in.len(), n_u, |i, j| raw.w_in[i][j]),
            input_nodes: raw.input_nodes,
            ground_nodes: raw.ground_nodes,
            readout_nodes: raw.readout_nodes,
            b_in: raw.b_in,
            seed: raw.seed,
        })
    }
}

/// Per-step observables of one driven step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub activity: f64,
    /// Mean and standard deviation over edges of `|dG/dt| / (g_on - g_off)`.
    pub mean_abs_dg: f64,
    pub std_abs_dg: f64,
    /// Conductance statistics after the step.
    pub mean_g: f64,
    pub std_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirTrace {
    pub times: Vec<f64>,
    /// `T x N_out`, columns in `readout_nodes` order.
    pub readouts: Mat<f64>,
    pub activity: Vec<f64>,
    pub mean_abs_dg: Vec<f64>,
    pub std_abs_dg: Vec<f64>,
    pub mean_g: Vec<f64>,
    pub std_g: Vec<f64>,
}

impl ReservoirTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t,mean_g,std_g,mean_abs_dG_dt,active_fraction`, optionally followed
    /// by every readout voltage.
    pub fn to_csv(&self, with_readouts: bool) -> String {
        let mut out = String::from("t,mean_g,std_g,mean_abs_dG_dt,active_fraction");
        if with_readouts {
            for k in 0..self.readouts.ncols() {
                let _ = write!(out, ",r{k}");
            }
        }
        out.push('\n');
        for t in 0..self.len() {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                self.times[t], self.mean_g[t], self.std_g[t], self.mean_abs_dg[t], self.activity[t]
            );
            if with_readouts {
                for k in 0..self.readouts.ncols() {
                    let _ = write!(out, ",{}", self.readouts[(t, k)]);
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A driven network: circuit session plus wiring and the running clock.
#[derive(Debug)]
pub struct Reservoir {
    circuit: Circuit,
    wiring: ReservoirWiring,
    dt: f64,
    steps_taken: usize,
    volts: Vec<f64>,
    g_before: Vec<f64>,
}

impl Reservoir {
    pub fn new(
        graph: &NetworkGraph,
        wiring: ReservoirWiring,
        params: MemristorParams,
        state: EdgeState,
        dt: f64,
    ) -> Result<Self> {
        wiring.validate(graph)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive and finite"));
        }
        let circuit = Circuit::new(graph, &wiring.input_nodes, &wiring.ground_nodes, params, state)?;
        Ok(Reservoir {
            volts: vec![0.0; wiring.n_inputs()],
            g_before: Vec::with_capacity(graph.n_edges()),
            circuit,
            wiring,
            dt,
            steps_taken: 0,
        })
    }

    pub fn wiring(&self) -> &ReservoirWiring {
        &self.wiring
    }

    pub fn state(&self) -> &EdgeState {
        self.circuit.state()
    }

    pub fn params(&self) -> &MemristorParams {
        self.circuit.params()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Simulated time of the next step.
    pub fn time(&self) -> f64 {
        self.steps_taken as f64 * self.dt
    }

    /// Restores an edge state and rewinds the clock.
    pub fn reset(&mut self, state: EdgeState) -> Result<()> {
        self.circuit.set_state(state)?;
        self.steps_taken = 0;
        Ok(())
    }

    pub fn into_state(self) -> EdgeState {
        self.circuit.into_state()
    }

    /// Drives one step with input `u`, writing the readout voltages into
    /// `readout`.
    pub fn step_into(&mut self, u: &[f64], readout: &mut [f64]) -> Result<StepStats> {
        if u.len() != self.wiring.n_u() {
            return Err(Error::Dimension(format!(
                "input has {} entries, wiring expects {}",
                u.len(),
                self.wiring.n_u()
            )));
        }
        if readout.len() != self.wiring.n_readouts() {
            return Err(Error::Dimension("readout buffer length".into()));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "input signal", step: self.steps_taken });
        }
        self.wiring.input_voltages_into(u, &mut self.volts);
        self.g_before.clear();
        self.g_before.extend_from_slice(self.circuit.state().conductances());
        let solution = self.circuit.step(&self.volts, self.dt)?;
        for (r, &node) in readout.iter_mut().zip(&self.wiring.readout_nodes) {
            *r = solution.node_voltages[node];
        }
        let params = *self.circuit.params();
        let n_edges = solution.edge_drops.len();
        let activity = if n_edges == 0 {
            0.0
        } else {
            solution.edge_drops.iter().filter(|v| v.abs() > params.v_threshold).count() as f64 / n_edges as f64
        };
        let norm = 1.0 / (self.dt * (params.g_on - params.g_off));
        let g_after = self.circuit.state().conductances();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for (a, b) in self.g_before.iter().zip(g_after) {
            let rate = (b - a).abs() * norm;
            sum += rate;
            sum_sq += rate * rate;
        }
        let (mean_abs_dg, std_abs_dg) = if n_edges == 0 {
            (0.0, 0.0)
        } else {
            let m = sum / n_edges as f64;
            (m, (sum_sq / n_edges as f64 - m * m).max(0.0).sqrt())
        };
        let (mean_g, std_g) = mean_std(g_after);
        self.steps_taken += 1;
        Ok(StepStats { activity, mean_abs_dg, std_abs_dg, mean_g, std_g })
    }

    pub fn step(&mut self, u: &[f64]) -> Result<(Vec<f64>, StepStats)> {
        let mut readout = vec![0.0; self.wiring.n_readouts()];
        let stats = self.step_into(u, &mut readout)?;
        Ok((readout, stats))
    }

    /// Drives every row of `u` in order and records the trace.
    pub fn drive(&mut self, u: &Mat<f64>) -> Result<ReservoirTrace> {
        let t_len = u.nrows();
        let mut trace = ReservoirTrace {
            times: Vec::with_capacity(t_len),
            readouts: Mat::zeros(t_len, self.wiring.n_readouts()),
            activity: Vec::with_capacity(t_len),
            mean_abs_dg: Vec::with_capacity(t_len),
            std_abs_dg: Vec::with_capacity(t_len),
            mean_g: Vec::with_capacity(t_len),
            std_g: Vec::with_capacity(t_len),
        };
        let mut row = vec![0.0; u.ncols()];
        let mut readout = vec![0.0; self.wiring.n_readouts()];
        for t in 0..t_len {
            for (j, x) in row.iter_mut().enumerate() {
                *x = u[(t, j)];
            }
            let time = self.time();
            let stats = self.step_into(&row, &mut readout).map_err(|e| match e {
                Error::NonFinite { what, .. } => Error::NonFinite { what, step: t },
                other => other,
            })?;
            for (k, &r) in readout.iter().enumerate() {
                trace.readouts[(t, k)] = r;
            }
            trace.times.push(time);
            trace.activity.push(stats.activity);
            trace.mean_abs_dg.push(stats.mean_abs_dg);
            trace.std_abs_dg.push(stats.std_abs_dg);
            trace.mean_g.push(stats.mean_g);
            trace.std_g.push(stats.std_g);
        }
        Ok(trace)
    }
}

/// Pure form of [`Reservoir::drive`]: returns the trace and the final state.
pub fn drive(
    graph: &NetworkGraph,
    wiring: &ReservoirWiring,
    state: &EdgeState,
    u: &Mat<f64>,
    dt: f64,
    params: &MemristorParams,
) -> Result<(ReservoirTrace, EdgeState)> {
    let mut reservoir = Reservoir::new(graph, wiring.clone(), *params, state.clone(), dt)?;
    let trace = reservoir.drive(u)?;
    Ok((trace, reservoir.into_state()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> NetworkGraph {
        NetworkGraph::random_connected(100, 261, 3).unwrap()
    }

    #[test]
    fn wiring_shapes_and_determinism() {
        let g = net();
        let w = make_wiring(&g, 24, 1, 3, 1.0, 0.05, 9).unwrap();
        assert_eq!((w.w_in.nrows(), w.w_in.ncols()), (24, 3));
        assert_eq!(w.n_readouts(), 75);
        w.validate(&g).unwrap();
        let mut sorted = w.input_nodes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
        assert_eq!(w, make_wiring(&g, 24, 1, 3, 1.0, 0.05, 9).unwrap());
        assert_ne!(w, make_wiring(&g, 24, 1, 3, 1.0, 0.05, 10).unwrap());
        assert!(w.w_in.col_iter().all(|c| c.iter().all(|v| v.abs() <= 1.0)));
        assert!(w.b_in.iter().all(|v| v.abs() <= 0.05));
    }

    #[test]
    fn wiring_rejects_too_few_nodes() {
        let g = net();
        assert!(make_wiring(&g, 99, 1, 3, 1.0, 0.0, 1).is_err());
        assert!(make_wiring(&g, 60, 1, 3, 1.0, 0.0, 1).is_err());
        assert!(make_wiring(&g, 10, 0, 3, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn zero_weight_range_gives_constant_drive() {
        let g = net();
        let w = make_wiring(&g, 5, 1, 3, 0.0, 0.05, 2).unwrap();
        assert_eq!(w.input_voltages(&[1.0, -4.0, 9.0]), w.b_in);
        assert_eq!(w.input_voltages(&[0.0, 0.0, 0.0]), w.b_in);
    }

    #[test]
    fn zero_drive_reads_zero() {
        let g = net();
        let params = MemristorParams::default();
        let w = make_wiring(&g, 24, 1, 3, 1.0, 0.0, 4).unwrap();
        let (trace, state) =
            drive(&g, &w, &EdgeState::pristine(g.n_edges(), &params), &Mat::zeros(50, 3), 0.005, &params).unwrap();
        assert!(trace.readouts.col_iter().all(|c| c.iter().all(|&v| v == 0.0)));
        assert!(trace.activity.iter().all(|&a| a == 0.0));
        assert_eq!(state, EdgeState::pristine(g.n_edges(), &params));
    }

    #[test]
    fn wiring_toml_round_trip() {
        let g = net();
        let w = make_wiring(&g, 7, 2, 3, 1.0, 0.05, 5).unwrap();
        assert_eq!(ReservoirWiring::from_toml(&w.to_toml()).unwrap(), w);
    }

    #[test]
    fn memory_and_reset() {
        let g = net();
        let params = MemristorParams::default();
        let w = make_wiring(&g, 10, 1, 2, 1.0, 0.05, 8).unwrap();
        let u = Mat::from_fn(200, 2, |t, j| 0.3 * ((t as f64) * 0.05 + j as f64).sin());
        let pristine = EdgeState::pristine(g.n_edges(), &params);
        let mut res = Reservoir::new(&g, w, params, pristine.clone(), 0.005).unwrap();
        let first = res.drive(&u).unwrap();
        let second = res.drive(&u).unwrap();
        assert_ne!(first.readouts, second.readouts);
        res.reset(pristine).unwrap();
        let again = res.drive(&u).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn dg_statistics_are_normalised() {
        // Single junction between a source and ground.
        let g = NetworkGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let params = MemristorParams { k_grow: 10.0, k_decay: 0.0, ..Default::default() };
        let w = ReservoirWiring {
            input_nodes: vec![0],
            ground_nodes: vec![2],
            readout_nodes: vec![1],
            w_in: Mat::identity(1, 1),
            b_in: vec![0.0],
            seed: 0,
        };
        let mut res = Reservoir::new(&g, w, params, EdgeState::pristine(2, &params), 0.01).unwrap();
        let (r, stats) = res.step(&[0.5]).unwrap();
        assert!((r[0] - 0.25).abs() < 1e-12);
        // Each drop is 0.25 V: ds = 10 * 0.24 * 0.01 on both edges.
        let expect = 10.0 * 0.24;
        assert!((stats.mean_abs_dg - expect).abs() < 1e-9, "{}", stats.mean_abs_dg);
        assert!(stats.std_abs_dg < 1e-9);
        assert_eq!(stats.activity, 1.0);
    }
}
