use faer::Mat;

use crate::circuit::EdgeState;
use crate::error::Result;
use crate::metrics::{input_correlations, readout_diversity, Diversity};
use crate::reservoir::{identity_wiring, Reservoir, ReservoirWiring};
use crate::rng::derive_seed;
use crate::signals::fourier_square_modes;
use crate::topology::NetworkGraph;

use super::config::{ExperimentConfig, ExperimentKind, GeneratorKind};

#[derive(Debug, Clone)]
pub struct IoMapNetwork {
    pub graph: NetworkGraph,
    pub wiring: ReservoirWiring,
    /// `T x N_out`.
    pub readouts: Mat<f64>,
    /// `None` when fewer than two readouts vary.
    pub diversity: Option<Diversity>,
    /// Per varying readout: best single-input correlation, correlation with
    /// the input sum.
    pub input_correlations: Vec<(f64, f64)>,
}

impl IoMapNetwork {
    /// Fraction of readouts closer to one input than to the input sum.
    pub fn input_locality(&self) -> f64 {
        if self.input_correlations.is_empty() {
            return 0.0;
        }
        let local = self.input_correlations.iter().filter(|(best, sum)| best > sum).count();
        local as f64 / self.input_correlations.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct IoMapResult {
    pub times: Vec<f64>,
    /// Drive voltages, `T x n_modes`.
    pub inputs: Mat<f64>,
    pub networks: Vec<IoMapNetwork>,
}

/// Fourier-mode drive of every configured edge count, one mode per input node.
pub fn run_io_map(cfg: &ExperimentConfig, seed: u64) -> Result<IoMapResult> {
    cfg.validate(ExperimentKind::IoMap)?;
    let graphs = match cfg.network.generator {
        GeneratorKind::Random => cfg
            .network
            .edge_counts
            .iter()
            .map(|&m| NetworkGraph::random_connected(cfg.network.n_nodes, m, derive_seed(seed, &[m as u64, 0])))
            .collect::<Result<Vec<_>>>()?,
        _ => vec![cfg.network.build(None, derive_seed(seed, &[0, 0]))?],
    };
    run_io_map_on(cfg, graphs, seed)
}

pub fn run_io_map_on(cfg: &ExperimentConfig, graphs: Vec<NetworkGraph>, seed: u64) -> Result<IoMapResult> {
    let f = &cfg.fourier;
    let times: Vec<f64> = (0..f.steps).map(|k| k as f64 * f.dt).collect();
    let modes = fourier_square_modes(f.n_modes, f.period, &times)?;
    let inputs = Mat::from_fn(modes.nrows(), modes.ncols(), |i, j| modes[(i, j)] * f.voltage);
    let mut networks = Vec::with_capacity(graphs.len());
    for graph in graphs {
        // Same input placement across networks of the same size.
        let wiring = identity_wiring(&graph, f.n_modes, cfg.wiring.n_grounds, derive_seed(seed, &[u64::MAX, 1]))?;
        let pristine = EdgeState::pristine(graph.n_edges(), &cfg.memristor);
        let mut reservoir = Reservoir::new(&graph, wiring.clone(), cfg.memristor, pristine, f.dt)?;
        let readouts = reservoir.drive(&inputs)?.readouts;
        let diversity = readout_diversity(&readouts).ok();
        let input_correlations = input_correlations(&readouts, &inputs).unwrap_or_default();
        networks.push(IoMapNetwork { graph, wiring, readouts, diversity, input_correlations });
    }
    Ok(IoMapResult { times, inputs, networks })
}
