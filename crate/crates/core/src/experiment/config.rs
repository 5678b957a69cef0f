use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::MemristorParams;
use crate::error::{Error, Result};
use crate::readout::RidgeConfig;
use crate::signals::LorenzParams;
use crate::topology::{edges_for_density, max_edges, NetworkGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Pulse,
    IoMap,
    Forecast,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Pulse => "pulse",
            ExperimentKind::IoMap => "io-map",
            ExperimentKind::Forecast => "forecast",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Random,
    Spatial,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub generator: GeneratorKind,
    pub n_nodes: usize,
    /// Exact edge count for single-network runs; overrides `density`.
    pub n_edges: Option<usize>,
    pub density: Option<f64>,
    /// Densities visited by a sweep.
    pub densities: Vec<f64>,
    /// Edge counts visited by io-map.
    pub edge_counts: Vec<usize>,
    pub wire_length: f64,
    pub edge_list: Option<PathBuf>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            generator: GeneratorKind::Random,
            n_nodes: 500,
            n_edges: None,
            density: Some(0.08),
            densities: vec![0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64, 0.99],
            edge_counts: vec![261, 1517, 4950],
            wire_length: 0.1,
            edge_list: None,
        }
    }
}

impl NetworkSpec {
    pub fn edge_count(&self) -> Result<usize> {
        match (self.n_edges, self.density) {
            (Some(m), _) => Ok(m),
            (None, Some(d)) => Ok(edges_for_density(self.n_nodes, d)),
            (None, None) => Err(Error::Config("network: set n_edges or density".into())),
        }
    }

    /// Builds the graph for one run. `density` overrides the configured one.
    pub fn build(&self, n_edges: Option<usize>, seed: u64) -> Result<NetworkGraph> {
        match self.generator {
            GeneratorKind::Random => {
                let m = match n_edges {
                    Some(m) => m,
                    None => self.edge_count()?,
                };
                NetworkGraph::random_connected(self.n_nodes, m, seed)
            }
            GeneratorKind::Spatial => NetworkGraph::nanowire_spatial(self.n_nodes, self.wire_length, seed),
            GeneratorKind::File => {
                let path = self
                    .edge_list
                    .as_ref()
                    .ok_or_else(|| Error::Config("network.edge_list is required for generator = \"file\"".into()))?;
                NetworkGraph::read_edge_list(path)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WiringSpec {
    pub n_inputs: usize,
    pub n_grounds: usize,
    pub win_range: f64,
    pub bias_range: f64,
}

impl Default for WiringSpec {
    fn default() -> Self {
        WiringSpec { n_inputs: 24, n_grounds: 1, win_range: 1.0, bias_range: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSpec {
    pub spinup_steps: usize,
    pub voltage_scale: f64,
    pub train_steps: usize,
    pub forecast_steps: usize,
    pub theta: f64,
    pub lyapunov_max: f64,
    /// Closed-loop runs stop once `|y_hat|` exceeds this multiple of the
    /// largest normalised training magnitude.
    pub divergence_factor: f64,
    /// Stop the closed loop at the first threshold crossing (sweeps only
    /// need the forecast time).
    pub stop_at_crossing: bool,
}

impl Default for ForecastSpec {
    fn default() -> Self {
        ForecastSpec {
            spinup_steps: 5000,
            voltage_scale: 0.22,
            train_steps: 27_000,
            forecast_steps: 4000,
            theta: 0.4,
            lyapunov_max: 0.91,
            divergence_factor: 10.0,
            stop_at_crossing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourierSpec {
    pub n_modes: usize,
    pub period: f64,
    /// Amplitude multiplier applied to every mode, volts.
    pub voltage: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Default for FourierSpec {
    fn default() -> Self {
        FourierSpec { n_modes: 10, period: 2.0, voltage: 0.5, dt: 0.005, steps: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSpec {
    pub amplitude: f64,
    pub start: f64,
    pub duration: f64,
    pub total_time: f64,
    pub dt: f64,
    /// Times at which every edge conductance is dumped.
    pub snapshot_times: Vec<f64>,
}

impl Default for PulseSpec {
    fn default() -> Self {
        PulseSpec {
            amplitude: 0.5,
            start: 0.0,
            duration: 4.0,
            total_time: 10.0,
            dt: 0.01,
            snapshot_times: vec![1.0, 2.0, 3.9, 5.0, 9.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub plots: bool,
    /// Include every readout voltage in trace CSVs.
    pub readouts: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("nwn-out"), plots: false, readouts: false }
    }
}

/// Every tunable of every experiment. All fields are optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    pub realizations: usize,
    pub jobs: usize,
    pub network: NetworkSpec,
    pub memristor: MemristorParams,
    pub wiring: WiringSpec,
    pub lorenz: LorenzParams,
    pub forecast: ForecastSpec,
    pub ridge: RidgeConfig,
    pub fourier: FourierSpec,
    pub pulse: PulseSpec,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            base_seed: 1,
            realizations: 30,
            jobs: 1,
            network: NetworkSpec::default(),
            memristor: MemristorParams::default(),
            wiring: WiringSpec::default(),
            lorenz: LorenzParams::default(),
            forecast: ForecastSpec::default(),
            ridge: RidgeConfig::default(),
            fourier: FourierSpec::default(),
            pulse: PulseSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { what: "config", reason: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The fully resolved configuration, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks everything the given experiment will touch.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        self.memristor.validate()?;
        self.ridge.validate()?;
        self.lorenz.validate()?;
        let net = &self.network;
        if net.n_nodes < 2 {
            return Err(Error::param("n_nodes", "need at least 2 nodes"));
        }
        if net.generator == GeneratorKind::Spatial && !(net.wire_length > 0.0 && net.wire_length <= 1.0) {
            return Err(Error::param("wire_length", "must lie in (0, 1]"));
        }
        if self.jobs == 0 {
            return Err(Error::param("jobs", "must be at least 1"));
        }
        let check_density = |d: f64| -> Result<()> {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::param("density", format!("{d} outside (0, 1]")));
            }
            // Unclamped count: a density too low for a connected graph is an error here.
            let m = (d * max_edges(net.n_nodes) as f64).round() as usize;
            if m + 1 < net.n_nodes || m > max_edges(net.n_nodes) {
                return Err(Error::InfeasibleEdgeCount {
                    n_nodes: net.n_nodes,
                    n_edges: m,
                    min: net.n_nodes - 1,
                    max: max_edges(net.n_nodes),
                });
            }
            Ok(())
        };
        let check_edges = |m: usize| -> Result<()> {
            if m + 1 < net.n_nodes || m > max_edges(net.n_nodes) {
                return Err(Error::InfeasibleEdgeCount {
                    n_nodes: net.n_nodes,
                    n_edges: m,
                    min: net.n_nodes - 1,
                    max: max_edges(net.n_nodes),
                });
            }
            Ok(())
        };
        let w = &self.wiring;
        for (name, v) in [("win_range", w.win_range), ("bias_range", w.bias_range)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and non-negative"));
            }
        }
        match kind {
            ExperimentKind::Pulse => {
                let p = &self.pulse;
                positive("pulse.dt", p.dt)?;
                positive("pulse.total_time", p.total_time)?;
                if !(p.amplitude.is_finite() && p.start >= 0.0 && p.duration >= 0.0) {
                    return Err(Error::param("pulse", "amplitude must be finite, start and duration non-negative"));
                }
                if net.generator == GeneratorKind::Random {
                    check_edges(net.edge_count()?)?;
                }
                if net.n_nodes < 3 {
                    return Err(Error::param("n_nodes", "pulse needs an input, a ground and a readout"));
                }
            }
            ExperimentKind::IoMap => {
                let f = &self.fourier;
                positive("fourier.period", f.period)?;
                positive("fourier.dt", f.dt)?;
                if f.n_modes == 0 || f.steps < 3 || !f.voltage.is_finite() {
                    return Err(Error::param("fourier", "need n_modes >= 1, steps >= 3 and a finite voltage"));
                }
                if net.generator == GeneratorKind::Random {
                    if net.edge_counts.is_empty() {
                        return Err(Error::Config("network.edge_counts is empty".into()));
                    }
                    net.edge_counts.iter().try_for_each(|&m| check_edges(m))?;
                }
                if 2 * f.n_modes + w.n_grounds > net.n_nodes {
                    return Err(Error::param("n_modes", "too many modes for the network size"));
                }
            }
            ExperimentKind::Forecast | ExperimentKind::Sweep => {
                let f = &self.forecast;
                positive("voltage_scale", f.voltage_scale)?;
                positive("theta", f.theta)?;
                positive("lyapunov_max", f.lyapunov_max)?;
                positive("divergence_factor", f.divergence_factor)?;
                if f.train_steps <= self.ridge.washout_steps + 1 {
                    return Err(Error::param("train_steps", "must exceed ridge.washout_steps + 1"));
                }
                if f.forecast_steps < 2 {
                    return Err(Error::param("forecast_steps", "need at least 2 steps"));
                }
                if w.n_inputs == 0 || w.n_grounds == 0 || 2 * w.n_inputs + w.n_grounds > net.n_nodes {
                    return Err(Error::param(
                        "n_inputs",
                        "need inputs and grounds, with at least as many readouts as inputs",
                    ));
                }
                if kind == ExperimentKind::Sweep {
                    if net.generator != GeneratorKind::Random {
                        return Err(Error::Config("sweeps need network.generator = \"random\"".into()));
                    }
                    if net.densities.is_empty() || self.realizations == 0 {
                        return Err(Error::Config("sweep needs densities and realizations >= 1".into()));
                    }
                    net.densities.iter().try_for_each(|&d| check_density(d))?;
                } else if net.generator == GeneratorKind::Random {
                    check_edges(net.edge_count()?)?;
                }
            }
        }
        Ok(())
    }
}
