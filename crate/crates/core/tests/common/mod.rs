#![allow(dead_code)]

use nwn_core::circuit::{EdgeState, MemristorParams};
use nwn_core::topology::{max_edges, NetworkGraph};
use proptest::prelude::*;

/// A solvable circuit: connected graph, conductances, pinned nodes, drive.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: NetworkGraph,
    pub g: Vec<f64>,
    pub sources: Vec<usize>,
    pub grounds: Vec<usize>,
    pub volts: Vec<f64>,
}

impl Instance {
    pub fn state(&self, params: &MemristorParams) -> EdgeState {
        let span = params.g_on - params.g_off;
        EdgeState::from_filaments(self.g.iter().map(|g| (g - params.g_off) / span).collect(), params).unwrap()
    }
}

/// Random connected graph with 3..=max_nodes nodes and a random edge count.
pub fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = NetworkGraph> {
    (3..=max_nodes, any::<u64>(), 0.0..1.0f64).prop_map(|(n, seed, fill)| {
        let lo = n - 1;
        let m = lo + ((max_edges(n) - lo) as f64 * fill * fill).round() as usize;
        NetworkGraph::random_connected(n, m, seed).unwrap()
    })
}

pub fn instance_strategy(max_nodes: usize) -> impl Strategy<Value = Instance> {
    (graph_strategy(max_nodes), any::<u64>()).prop_map(|(graph, seed)| {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let mut rng = nwn_core::rng::seeded(seed);
        let p = MemristorParams::default();
        let g = (0..graph.n_edges()).map(|_| rng.gen_range(p.g_off..=p.g_on)).collect();
        let mut nodes: Vec<usize> = (0..graph.n_nodes()).collect();
        nodes.shuffle(&mut rng);
        let n_sources = rng.gen_range(1..=3.min(graph.n_nodes() - 1));
        let n_grounds = rng.gen_range(1..=2.min(graph.n_nodes() - n_sources));
        let sources = nodes[..n_sources].to_vec();
        let grounds = nodes[n_sources..n_sources + n_grounds].to_vec();
        let volts = (0..n_sources).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Instance { graph, g, sources, grounds, volts }
    })
}

/// Dense Gaussian elimination with partial pivoting on the full nodal
/// system, pinned rows replaced by `V = value`.
pub fn dense_oracle(inst: &Instance) -> Vec<f64> {
    let n = inst.graph.n_nodes();
    let mut a = vec![vec![0.0; n + 1]; n];
    for (&(i, j), &g) in inst.graph.edges().iter().zip(&inst.g) {
        a[i][i] += g;
        a[j][j] += g;
        a[i][j] -= g;
        a[j][i] -= g;
    }
    let pinned =
        inst.sources.iter().zip(&inst.volts).map(|(&s, &v)| (s, v)).chain(inst.grounds.iter().map(|&g| (g, 0.0)));
    for (node, v) in pinned {
        a[node].iter_mut().for_each(|x| *x = 0.0);
        a[node][node] = 1.0;
        a[node][n] = v;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][n] - s) / a[row][row];
    }
    x
}

/// Solves `A x = b` for a small dense system by Gaussian elimination with
/// partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Ridge weights from the normal equations `(R^T R + λ I) w = R^T y`, one
/// output column at a time, rows before `washout` ignored. Returns
/// `N_y x N_out` as nested vectors.
pub fn ridge_oracle(r: &faer::Mat<f64>, y: &faer::Mat<f64>, lambda: f64, washout: usize) -> Vec<Vec<f64>> {
    let n_out = r.ncols();
    let gram: Vec<Vec<f64>> = (0..n_out)
        .map(|i| {
            (0..n_out)
                .map(|j| {
                    (washout..r.nrows()).map(|t| r[(t, i)] * r[(t, j)]).sum::<f64>() + if i == j { lambda } else { 0.0 }
                })
                .collect()
        })
        .collect();
    (0..y.ncols())
        .map(|c| {
            let rhs = (0..n_out).map(|i| (washout..r.nrows()).map(|t| r[(t, i)] * y[(t, c)]).sum()).collect();
            gauss_solve(gram.clone(), rhs)
        })
        .collect()
}

/// Random regression problem with a planted linear map plus noise.
pub fn regression_instance(seed: u64, rows: usize, n_out: usize, n_y: usize) -> (faer::Mat<f64>, faer::Mat<f64>) {
    use rand::Rng;
    let mut rng = nwn_core::rng::seeded(seed);
    let r = faer::Mat::from_fn(rows, n_out, |_, _| rng.gen_range(-1.0..1.0));
    let w: Vec<f64> = (0..n_out * n_y).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = faer::Mat::from_fn(rows, n_y, |t, c| {
        (0..n_out).map(|i| r[(t, i)] * w[c * n_out + i]).sum::<f64>() + 0.01 * ((t * 7 + c) as f64).sin()
    });
    (r, y)
}

/// A point on the Lorenz attractor after a long transient.
pub fn attractor_point(params: &nwn_core::signals::LorenzParams) -> [f64; 3] {
    let traj = nwn_core::signals::lorenz_trajectory(params, 4000, 0).unwrap();
    [traj[(0, 0)], traj[(0, 1)], traj[(0, 2)]]
}

/// `y` advanced by `span` seconds with `steps` equal RK4 steps.
pub fn rk4_advance(params: &nwn_core::signals::LorenzParams, mut y: [f64; 3], span: f64, steps: usize) -> [f64; 3] {
    let h = span / steps as f64;
    for _ in 0..steps {
        y = params.rk4_step(y, h);
    }
    y
}

pub fn max_gap(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max)
}

/// Error of the integrator's first sample from `y0` against a 1e-6 step
/// reference.
pub fn rk4_one_step_error(params: &nwn_core::signals::LorenzParams) -> f64 {
    let y = params.y0;
    let traj = nwn_core::signals::lorenz_integrate(params, 1).unwrap();
    let coarse = [traj[(1, 0)], traj[(1, 1)], traj[(1, 2)]];
    let fine = rk4_advance(params, y, params.dt, (params.dt / 1e-6).round() as usize);
    max_gap(coarse, fine)
}

/// Ratio of the errors at a fixed horizon for step `dt` and `dt / 2`,
/// against a 1e-6 step reference. Fourth order gives about 16.
pub fn rk4_order_ratio(params: &nwn_core::signals::LorenzParams, span_steps: usize) -> f64 {
    let y = attractor_point(params);
    let span = params.dt * span_steps as f64;
    let reference = rk4_advance(params, y, span, (span / 1e-6).round() as usize);
    let e1 = max_gap(rk4_advance(params, y, span, span_steps), reference);
    let e2 = max_gap(rk4_advance(params, y, span, 2 * span_steps), reference);
    e1 / e2
}
