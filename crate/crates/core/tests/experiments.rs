use std::path::Path;

use faer::Mat;
use nwn_core::experiment::sweep::{aggregate, SweepRow, ROW_HEADER};
use nwn_core::experiment::{forecast_on, lorenz_data, run_density_sweep, run_experiment, run_io_map, run_pulse};
use nwn_core::experiment::{ExperimentConfig, ExperimentKind};
use nwn_core::metrics::{error_normalizer, training_nmse};
use nwn_core::readout::TrainedReadout;
use nwn_core::topology::NetworkGraph;

fn quiet(_: &SweepRow, _: bool) {}

fn small_pulse() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        "[network]\nn_nodes = 40\nn_edges = 90\n[pulse]\namplitude = 0.5\nduration = 1.0\ntotal_time = 2.0\ndt = 0.01\nsnapshot_times = [0.5, 1.5]\n\
         [memristor]\nk_grow = 10.0\nk_decay = 0.5\n",
    )
    .unwrap()
}

fn small_forecast() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        "realizations = 2\n[network]\nn_nodes = 40\ndensity = 0.2\ndensities = [0.1, 0.3]\n\
         [wiring]\nn_inputs = 6\n[forecast]\nspinup_steps = 200\ntrain_steps = 400\nforecast_steps = 120\n\
         [ridge]\nwashout_steps = 50\n[memristor]\nk_grow = 200.0\nk_decay = 2.0\n",
    )
    .unwrap()
}

#[test]
fn zero_amplitude_pulse_is_inert() {
    let mut cfg = small_pulse();
    cfg.pulse.amplitude = 0.0;
    let r = run_pulse(&cfg, 3).unwrap();
    assert!(r.activity.iter().all(|&a| a == 0.0));
    assert!(r.mean_g.iter().all(|&g| (g - cfg.memristor.g_off).abs() < 1e-15));
    assert_eq!(r.snapshots.len(), 2);
}

#[test]
fn longer_pulses_never_lower_the_final_conductance() {
    for seed in [1, 2, 3] {
        let short = small_pulse();
        let mut long = short.clone();
        long.pulse.duration *= 2.0;
        long.pulse.total_time = long.pulse.duration;
        let mut short_on = short.clone();
        short_on.pulse.total_time = short.pulse.duration;
        let g_end = |cfg: &ExperimentConfig| *run_pulse(cfg, seed).unwrap().mean_g.last().unwrap();
        assert!(g_end(&long) >= g_end(&short_on), "seed {seed}");
    }
}

#[test]
fn zero_amplitude_modes_read_zero() {
    let cfg = ExperimentConfig::from_toml(
        "[network]\nn_nodes = 40\nedge_counts = [60, 300]\n[fourier]\nvoltage = 0.0\nsteps = 50\n",
    )
    .unwrap();
    let r = run_io_map(&cfg, 1).unwrap();
    for net in &r.networks {
        assert!(net.readouts.col_iter().all(|c| c.iter().all(|&v| v == 0.0)));
        assert!(net.diversity.is_none());
    }
}

#[test]
fn zero_weights_reproduce_the_persistence_error() {
    // With W_out = 0 the one-step prediction is y(t - dt); the error is
    // recomputed here without the library's readout path.
    let cfg = small_forecast();
    let data = lorenz_data(&cfg).unwrap();
    let (washout, train) = (cfg.ridge.washout_steps, cfg.forecast.train_steps);
    let zero = TrainedReadout { w_out: Mat::zeros(3, 10), config: cfg.ridge, training_rows: 0, wiring_seed: None };
    let rows = train - washout;
    let target = Mat::from_fn(rows, 3, |t, c| data.scaled[(washout + t + 1, c)]);
    let predicted = Mat::from_fn(rows, 3, |t, c| {
        let u: Vec<f64> = (0..3).map(|k| data.scaled[(washout + t, k)]).collect();
        zero.predict(&[0.5; 10], &u).unwrap()[c]
    });
    let norm = error_normalizer(&target).unwrap();
    let by_hand = (0..rows)
        .map(|t| {
            (0..3).map(|c| (data.scaled[(washout + t + 1, c)] - data.scaled[(washout + t, c)]).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / rows as f64
        / norm;
    let got = training_nmse(&target, &predicted).unwrap();
    assert!((got - by_hand).abs() < 1e-12 * by_hand, "{got} vs {by_hand}");
}

#[test]
fn forecast_replays_are_bit_identical() {
    let cfg = small_forecast();
    let data = lorenz_data(&cfg).unwrap();
    let graph = NetworkGraph::random_connected(40, 156, 9).unwrap();
    let a = forecast_on(&cfg, &graph, 4, &data).unwrap();
    let b = forecast_on(&cfg, &graph, 4, &data).unwrap();
    assert_eq!(a.readout, b.readout);
    assert_eq!(a.prediction, b.prediction);
    assert_eq!(a.errors, b.errors);
    assert_eq!(a.final_state, b.final_state);
    assert!(a.forecast_time >= 0.0);
    assert!(a.train_nmse.is_finite());
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn single_cell_sweep_has_one_row() {
    let mut cfg = small_forecast();
    cfg.realizations = 1;
    cfg.network.densities = vec![0.2];
    let r = run_density_sweep(&cfg, None, &quiet).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.aggregates.len(), 1);
    assert_eq!(r.aggregates[0].forecast_time.count, 1);
}

#[test]
fn sweeps_are_deterministic_resumable_and_order_free() {
    let cfg = small_forecast();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_density_sweep(&cfg, Some(d1.path()), &quiet).unwrap();
    assert_eq!(first.rows.len(), 4);

    let mut parallel = cfg.clone();
    parallel.jobs = 3;
    run_density_sweep(&parallel, Some(d2.path()), &quiet).unwrap();
    assert_eq!(read(d1.path(), "sweep_rows.csv"), read(d2.path(), "sweep_rows.csv"));

    // Resume: drop one finished cell and corrupt the aggregates.
    std::fs::remove_file(d1.path().join("runs/d01_r0001.csv")).unwrap();
    std::fs::write(d1.path().join("sweep_summary.csv"), "garbage").unwrap();
    let count = std::sync::Mutex::new((0, 0));
    run_density_sweep(&cfg, Some(d1.path()), &|_, was_resumed| {
        let mut c = count.lock().unwrap();
        if was_resumed {
            c.0 += 1
        } else {
            c.1 += 1
        }
    })
    .unwrap();
    assert_eq!(*count.lock().unwrap(), (3, 1));
    assert_eq!(read(d1.path(), "sweep_rows.csv"), read(d2.path(), "sweep_rows.csv"));
    assert_eq!(read(d1.path(), "sweep_summary.csv"), read(d2.path(), "sweep_summary.csv"));

    // Listing the densities the other way round keeps every cell's numbers.
    let mut reversed = cfg.clone();
    reversed.network.densities.reverse();
    let back = run_density_sweep(&reversed, None, &quiet).unwrap();
    for row in &first.rows {
        let twin = back.rows.iter().find(|r| r.n_edges == row.n_edges && r.realization == row.realization).unwrap();
        assert_eq!((twin.seed, twin.t_f_lyapunov, twin.train_nmse), (row.seed, row.t_f_lyapunov, row.train_nmse));
    }
}

#[test]
fn aggregates_recompute_from_row_file() {
    let cfg = small_forecast();
    let dir = tempfile::tempdir().unwrap();
    let result = run_density_sweep(&cfg, Some(dir.path()), &quiet).unwrap();
    let text = read(dir.path(), "sweep_rows.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(ROW_HEADER));
    let rows: Vec<SweepRow> = lines.map(|l| SweepRow::from_csv_line(l).unwrap()).collect();
    assert_eq!(rows.len(), cfg.network.densities.len() * cfg.realizations);

    // Independent pass over the parsed rows.
    for agg in aggregate(&rows).unwrap().iter().zip(&result.aggregates) {
        assert_eq!(agg.0, agg.1);
    }
    for (di, agg) in result.aggregates.iter().enumerate() {
        let mut t: Vec<f64> = rows.iter().filter(|r| r.density_index == di).map(|r| r.t_f_lyapunov).collect();
        t.sort_by(f64::total_cmp);
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        assert!((agg.forecast_time.mean - mean).abs() < 1e-12);
        assert_eq!(agg.forecast_time.max, *t.last().unwrap());
    }
}

#[test]
fn every_run_echoes_a_replayable_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_pulse();
    cfg.output.plots = true;
    run_experiment(ExperimentKind::Pulse, &cfg, dir.path(), &quiet).unwrap();
    let echoed = ExperimentConfig::from_toml(&read(dir.path(), "config.resolved.toml")).unwrap();
    assert_eq!(echoed, cfg);
    for name in ["pulse_trace.csv", "pulse_snapshots.csv", "network.edges", "pulse.svg"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let again = tempfile::tempdir().unwrap();
    run_experiment(ExperimentKind::Pulse, &echoed, again.path(), &quiet).unwrap();
    assert_eq!(read(dir.path(), "pulse_trace.csv"), read(again.path(), "pulse_trace.csv"));
}

#[test]
fn forecast_run_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_forecast();
    let summary = run_experiment(ExperimentKind::Forecast, &cfg, dir.path(), &quiet).unwrap();
    assert!(summary.iter().any(|(k, _)| k == "t_f_lyapunov"));
    for name in
        ["config.resolved.toml", "forecast_series.csv", "attractor.csv", "metrics.csv", "readout.csv", "wiring.toml"]
    {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let metrics = read(dir.path(), "metrics.csv");
    assert!(metrics.starts_with("seed,n_nodes,n_edges,density,t_f_lyapunov,train_nmse,mean_activity"));
}

#[test]
fn validation_happens_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_forecast();
    cfg.forecast.train_steps = 10;
    assert!(run_experiment(ExperimentKind::Forecast, &cfg, dir.path(), &quiet).is_err());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}
