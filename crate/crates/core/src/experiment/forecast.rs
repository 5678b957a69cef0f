use faer::Mat;

use crate::circuit::EdgeState;
use crate::error::{Error, Result};
use crate::metrics::{error_normalizer, forecast_time};
use crate::readout::{ridge_fit, TrainedReadout};
use crate::reservoir::{make_wiring, Reservoir, ReservoirTrace, ReservoirWiring, StepStats};
use crate::signals::{lorenz_trajectory, NormalizationStats};
use crate::topology::NetworkGraph;

use super::config::ExperimentConfig;

/// Everything produced by one teacher-forced training plus closed-loop run.
#[derive(Debug, Clone)]
pub struct ForecastOutcome {
    pub wiring: ReservoirWiring,
    pub readout: TrainedReadout,
    pub stats: NormalizationStats,
    /// Normalised true continuation, one row per closed-loop step.
    pub truth: Mat<f64>,
    /// Closed-loop predictions; fewer rows than `truth` when the loop
    /// stopped early.
    pub prediction: Mat<f64>,
    /// `E_f` per closed-loop step; steps after an early stop are `+inf`.
    pub errors: Vec<f64>,
    pub forecast_time: f64,
    /// Mean `E_f` of the one-step predictions after the washout.
    pub train_nmse: f64,
    /// Mean active fraction over the training drive after the washout.
    pub mean_activity: f64,
    /// Closed-loop step at which `|y_hat|` left the divergence bound or
    /// became non-finite.
    pub diverged_at: Option<usize>,
    /// Training drive observables (readout columns dropped).
    pub train_trace: ReservoirTrace,
    pub closed_loop_stats: Vec<StepStats>,
    pub final_state: EdgeState,
}

/// Lorenz data for a run, normalised with statistics of the training part.
pub struct LorenzData {
    pub scaled: Mat<f64>,
    pub stats: NormalizationStats,
}

pub fn lorenz_data(cfg: &ExperimentConfig) -> Result<LorenzData> {
    let f = &cfg.forecast;
    let raw = lorenz_trajectory(&cfg.lorenz, f.spinup_steps, f.train_steps + f.forecast_steps)?;
    let train = raw.subrows(0, f.train_steps + 1).to_owned();
    let stats = NormalizationStats::fit(&train, f.voltage_scale)?;
    Ok(LorenzData { scaled: stats.transform(&raw), stats })
}

/// Trains on `graph` with a wiring drawn from `wiring_seed`, then forecasts
/// autonomously. `data` can be shared between runs with the same config.
pub fn forecast_on(
    cfg: &ExperimentConfig,
    graph: &NetworkGraph,
    wiring_seed: u64,
    data: &LorenzData,
) -> Result<ForecastOutcome> {
    let f = &cfg.forecast;
    let w = &cfg.wiring;
    let n_train = f.train_steps;
    let n_y = data.scaled.ncols();
    let wiring = make_wiring(graph, w.n_inputs, w.n_grounds, n_y, w.win_range, w.bias_range, wiring_seed)?;
    let pristine = EdgeState::pristine(graph.n_edges(), &cfg.memristor);
    let mut reservoir = Reservoir::new(graph, wiring.clone(), cfg.memristor, pristine, cfg.lorenz.dt)?;

    // Teacher forcing: u(t) = y(t - dt), the readout explains y(t) - u(t).
    let u_train = data.scaled.subrows(0, n_train).to_owned();
    let residual = Mat::from_fn(n_train, n_y, |t, c| data.scaled[(t + 1, c)] - data.scaled[(t, c)]);
    let mut trace = reservoir.drive(&u_train)?;
    let readout = ridge_fit(&trace.readouts, &residual, &cfg.ridge)?.with_wiring_seed(wiring_seed);

    let washout = cfg.ridge.washout_steps;
    let fitted_rows = n_train - washout;
    let mut one_step = Mat::zeros(fitted_rows, n_y);
    let mut r = vec![0.0; wiring.n_readouts()];
    let mut u = vec![0.0; n_y];
    let mut y_hat = vec![0.0; n_y];
    for t in washout..n_train {
        for k in 0..r.len() {
            r[k] = trace.readouts[(t, k)];
        }
        for c in 0..n_y {
            u[c] = data.scaled[(t, c)];
        }
        readout.predict_into(&r, &u, &mut y_hat)?;
        for c in 0..n_y {
            one_step[(t - washout, c)] = y_hat[c];
        }
    }
    let train_target = data.scaled.subrows(washout + 1, fitted_rows).to_owned();
    let train_nmse = crate::metrics::training_nmse(&train_target, &one_step)?;
    let mean_activity = trace.activity[washout..].iter().sum::<f64>() / fitted_rows as f64;
    trace.readouts = Mat::zeros(0, 0);

    // Closed loop continues from the last teacher-forced prediction.
    let truth = data.scaled.subrows(n_train + 1, f.forecast_steps).to_owned();
    let normalizer = error_normalizer(&truth)?;
    let bound = (0..n_y)
        .flat_map(|c| data.scaled.col(c).iter().take(n_train + 1).map(|v| v.abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
        * f.divergence_factor;
    u.copy_from_slice(&one_step.row(fitted_rows - 1).iter().copied().collect::<Vec<_>>());
    let mut prediction = Vec::with_capacity(f.forecast_steps);
    let mut errors = Vec::with_capacity(f.forecast_steps);
    let mut closed_loop_stats = Vec::with_capacity(f.forecast_steps);
    let mut diverged_at = None;
    for k in 0..f.forecast_steps {
        let stats = match reservoir.step_into(&u, &mut r) {
            Ok(s) => s,
            Err(Error::NonFinite { .. }) => {
                diverged_at = Some(k);
                break;
            }
            Err(e) => return Err(e),
        };
        closed_loop_stats.push(stats);
        readout.predict_into(&r, &u, &mut y_hat)?;
        if y_hat.iter().any(|v| !(v.abs() <= bound)) {
            diverged_at = Some(k);
            break;
        }
        let err = (0..n_y).map(|c| (truth[(k, c)] - y_hat[c]).powi(2)).sum::<f64>() / normalizer;
        prediction.push(y_hat.clone());
        errors.push(err);
        u.copy_from_slice(&y_hat);
        if f.stop_at_crossing && !(err <= f.theta) {
            break;
        }
    }
    let completed = prediction.len();
    errors.resize(f.forecast_steps, f64::INFINITY);
    let forecast_time = forecast_time(&errors, f.theta, f.lyapunov_max, cfg.lorenz.dt);

    Ok(ForecastOutcome {
        stats: data.stats.clone(),
        prediction: Mat::from_fn(completed, n_y, |i, j| prediction[i][j]),
        truth,
        errors,
        forecast_time,
        train_nmse,
        mean_activity,
        diverged_at,
        train_trace: trace,
        closed_loop_stats,
        final_state: reservoir.into_state(),
        wiring,
        readout,
    })
}
