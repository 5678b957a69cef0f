//! Experiments: pulse response, input-output mapping, Lorenz
//! forecasting and density sweeps.

pub mod config;
pub mod forecast;
pub mod io_map;
pub mod output;
pub mod plot;
pub mod pulse;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, ExperimentKind};
pub use forecast::{forecast_on, lorenz_data, ForecastOutcome, LorenzData};
pub use io_map::{run_io_map, IoMapResult};
pub use pulse::{run_pulse, PulseResult};
pub use run::{run_experiment, RunSummary};
pub use sweep::{run_density_sweep, SweepResult, SweepRow};
