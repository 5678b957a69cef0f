//! Experiment entry points that write their artifacts to a directory.

use std::fmt::Write as _;
use std::path::Path;

use faer::Mat;

use crate::error::Result;
use crate::topology::NetworkGraph;

use super::config::{ExperimentConfig, ExperimentKind};
use super::forecast::{forecast_on, lorenz_data, ForecastOutcome};
use super::io_map::run_io_map;
use super::output::{matrix_csv, numbered, write_atomic};
use super::plot::{line_plot, Series};
use super::pulse::run_pulse;
use super::sweep::{run_density_sweep, SweepRow};
use crate::rng::derive_seed;

/// Headline numbers of a finished run, in print order.
pub type RunSummary = Vec<(String, String)>;

const CONFIG_ECHO: &str = "config.resolved.toml";

/// Validates, echoes the resolved config into `out_dir` and runs `kind`.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    progress: &(dyn Fn(&SweepRow, bool) + Sync),
) -> Result<RunSummary> {
    cfg.validate(kind)?;
    write_atomic(
        &out_dir.join(CONFIG_ECHO),
        &format!("# nwn {} resolved configuration\n{}", kind.name(), cfg.to_toml()),
    )?;
    match kind {
        ExperimentKind::Pulse => pulse_artifacts(cfg, out_dir),
        ExperimentKind::IoMap => io_map_artifacts(cfg, out_dir),
        ExperimentKind::Forecast => forecast_artifacts(cfg, out_dir),
        ExperimentKind::Sweep => sweep_artifacts(cfg, out_dir, progress),
    }
}

fn write_graph(graph: &NetworkGraph, path: &Path) -> Result<()> {
    write_atomic(path, &graph.to_edge_list())
}

fn pulse_artifacts(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let r = run_pulse(cfg, cfg.base_seed)?;
    write_graph(&r.graph, &dir.join("network.edges"))?;
    let mut trace = String::from("t,input_v,active_fraction,mean_g\n");
    for k in 0..r.times.len() {
        let _ = writeln!(trace, "{},{},{},{}", r.times[k], r.input_v[k], r.activity[k], r.mean_g[k]);
    }
    write_atomic(&dir.join("pulse_trace.csv"), &trace)?;
    let mut snaps = String::from("edge,i,j");
    for (t, _) in &r.snapshots {
        let _ = write!(snaps, ",g_t{t}");
    }
    snaps.push('\n');
    for (e, &(i, j)) in r.graph.edges().iter().enumerate() {
        let _ = write!(snaps, "{e},{i},{j}");
        for (_, g) in &r.snapshots {
            let _ = write!(snaps, ",{}", g[e]);
        }
        snaps.push('\n');
    }
    write_atomic(&dir.join("pulse_snapshots.csv"), &snaps)?;
    if cfg.output.plots {
        let svg = line_plot(
            "Pulse response",
            "t (s)",
            &[
                Series { label: "input (V)", x: &r.times, y: &r.input_v },
                Series { label: "active fraction", x: &r.times, y: &r.activity },
                Series { label: "mean g", x: &r.times, y: &r.mean_g },
            ],
        );
        write_atomic(&dir.join("pulse.svg"), &svg)?;
    }
    let (peak_k, peak) = r.peak();
    Ok(vec![
        ("input_node".into(), r.input_node.to_string()),
        ("peak_activity".into(), format!("{peak:.4}")),
        ("peak_time".into(), format!("{:.3}", r.times[peak_k])),
        ("final_mean_g".into(), format!("{:.6}", r.mean_g.last().copied().unwrap_or(f64::NAN))),
    ])
}

fn io_map_artifacts(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let r = run_io_map(cfg, cfg.base_seed)?;
    write_atomic(&dir.join("io_inputs.csv"), &matrix_csv(&numbered("u", r.inputs.ncols()), Some(&r.times), &r.inputs))?;
    let mut summary = String::from(
        "n_nodes,n_edges,density,corr_mean,corr_min,corr_max,used_readouts,constant_readouts,input_locality\n",
    );
    let mut out = RunSummary::new();
    for net in &r.networks {
        let m = net.graph.n_edges();
        write_graph(&net.graph, &dir.join(format!("network_m{m}.edges")))?;
        let header: Vec<String> = net.wiring.readout_nodes.iter().map(|v| format!("node{v}")).collect();
        write_atomic(&dir.join(format!("io_readouts_m{m}.csv")), &matrix_csv(&header, Some(&r.times), &net.readouts))?;
        let (mean, min, max, used, dropped) = match net.diversity {
            Some(d) => (d.mean, d.min, d.max, d.used_columns, d.dropped_constant),
            None => (f64::NAN, f64::NAN, f64::NAN, 0, net.readouts.ncols()),
        };
        let _ = writeln!(
            summary,
            "{},{m},{},{mean},{min},{max},{used},{dropped},{}",
            net.graph.n_nodes(),
            net.graph.density(),
            net.input_locality()
        );
        out.push((format!("corr_mean[m={m}]"), format!("{mean:.5}")));
        if cfg.output.plots {
            let cols: Vec<Vec<f64>> =
                (0..net.readouts.ncols().min(5)).map(|c| net.readouts.col(c).iter().copied().collect()).collect();
            let labels: Vec<String> = (0..cols.len()).map(|c| header[c].clone()).collect();
            let series: Vec<Series> =
                cols.iter().zip(&labels).map(|(y, l)| Series { label: l, x: &r.times, y }).collect();
            write_atomic(
                &dir.join(format!("io_readouts_m{m}.svg")),
                &line_plot(&format!("Readouts, {m} edges"), "t (s)", &series),
            )?;
        }
    }
    write_atomic(&dir.join("io_map_summary.csv"), &summary)?;
    Ok(out)
}

/// Forecast artifacts for one outcome.
pub fn write_forecast(
    cfg: &ExperimentConfig,
    graph: &NetworkGraph,
    o: &ForecastOutcome,
    seed: u64,
    dir: &Path,
) -> Result<()> {
    let dt = cfg.lorenz.dt;
    let t0 = cfg.forecast.train_steps as f64 * dt;
    let truth_raw = o.stats.inverse(&o.truth);
    let pred_raw = o.stats.inverse(&o.prediction);
    let mut series = String::from("t,lyapunov_time,y1,y2,y3,y1_hat,y2_hat,y3_hat,error\n");
    for k in 0..o.truth.nrows() {
        let t = t0 + (k + 1) as f64 * dt;
        let _ = write!(series, "{t},{},", cfg.forecast.lyapunov_max * (k as f64) * dt);
        let _ = write!(series, "{},{},{},", truth_raw[(k, 0)], truth_raw[(k, 1)], truth_raw[(k, 2)]);
        if k < pred_raw.nrows() {
            let _ = write!(series, "{},{},{},", pred_raw[(k, 0)], pred_raw[(k, 1)], pred_raw[(k, 2)]);
        } else {
            series.push_str(",,,");
        }
        let _ = writeln!(series, "{}", o.errors[k]);
    }
    write_atomic(&dir.join("forecast_series.csv"), &series)?;
    write_atomic(&dir.join("attractor.csv"), &matrix_csv(&["y1".into(), "y2".into(), "y3".into()], None, &pred_raw))?;
    write_atomic(
        &dir.join("metrics.csv"),
        &format!(
            "seed,n_nodes,n_edges,density,t_f_lyapunov,train_nmse,mean_activity,diverged_at\n{seed},{},{},{},{},{},{},{}\n",
            graph.n_nodes(),
            graph.n_edges(),
            graph.density(),
            o.forecast_time,
            o.train_nmse,
            o.mean_activity,
            o.diverged_at.map(|k| k.to_string()).unwrap_or_default()
        ),
    )?;
    let mut trace = String::from("phase,t,mean_g,std_g,mean_abs_dG_dt,std_abs_dG_dt,active_fraction\n");
    let tt = &o.train_trace;
    for k in 0..tt.len() {
        let _ = writeln!(
            trace,
            "train,{},{},{},{},{},{}",
            tt.times[k], tt.mean_g[k], tt.std_g[k], tt.mean_abs_dg[k], tt.std_abs_dg[k], tt.activity[k]
        );
    }
    for (k, s) in o.closed_loop_stats.iter().enumerate() {
        let _ = writeln!(
            trace,
            "forecast,{},{},{},{},{},{}",
            t0 + k as f64 * dt,
            s.mean_g,
            s.std_g,
            s.mean_abs_dg,
            s.std_abs_dg,
            s.activity
        );
    }
    write_atomic(&dir.join("trace.csv"), &trace)?;
    write_atomic(&dir.join("readout.csv"), &o.readout.to_csv())?;
    write_atomic(&dir.join("wiring.toml"), &o.wiring.to_toml())?;
    write_graph(graph, &dir.join("network.edges"))?;
    if cfg.output.plots {
        let lt: Vec<f64> = (0..o.truth.nrows()).map(|k| cfg.forecast.lyapunov_max * k as f64 * dt).collect();
        let col = |m: &Mat<f64>, c: usize| -> Vec<f64> { m.col(c).iter().copied().collect() };
        let (y1, y1_hat) = (col(&truth_raw, 0), col(&pred_raw, 0));
        let svg = line_plot(
            "Closed-loop forecast, y1",
            "Lyapunov times",
            &[
                Series { label: "true", x: &lt, y: &y1 },
                Series { label: "predicted", x: &lt[..y1_hat.len()], y: &y1_hat },
            ],
        );
        write_atomic(&dir.join("forecast_y1.svg"), &svg)?;
        let errors: Vec<f64> = o.errors.iter().map(|e| e.min(10.0)).collect();
        let theta = vec![cfg.forecast.theta; lt.len()];
        let svg = line_plot(
            "Relative forecast error",
            "Lyapunov times",
            &[Series { label: "E_f", x: &lt, y: &errors }, Series { label: "theta", x: &lt, y: &theta }],
        );
        write_atomic(&dir.join("forecast_error.svg"), &svg)?;
        let (x, z) = (col(&pred_raw, 0), col(&pred_raw, 2));
        let (xt, zt) = (col(&truth_raw, 0), col(&truth_raw, 2));
        let svg = line_plot(
            "Attractor projection (y1, y3)",
            "y1",
            &[Series { label: "true", x: &xt, y: &zt }, Series { label: "predicted", x: &x, y: &z }],
        );
        write_atomic(&dir.join("attractor.svg"), &svg)?;
    }
    Ok(())
}

fn forecast_artifacts(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let seed = cfg.base_seed;
    let graph = cfg.network.build(None, derive_seed(seed, &[0]))?;
    let data = lorenz_data(cfg)?;
    let o = forecast_on(cfg, &graph, derive_seed(seed, &[1]), &data)?;
    write_forecast(cfg, &graph, &o, seed, dir)?;
    Ok(vec![
        ("n_edges".into(), graph.n_edges().to_string()),
        ("density".into(), format!("{:.5}", graph.density())),
        ("t_f_lyapunov".into(), format!("{:.4}", o.forecast_time)),
        ("train_nmse".into(), format!("{:.4e}", o.train_nmse)),
        ("mean_activity".into(), format!("{:.4}", o.mean_activity)),
        ("diverged_at".into(), o.diverged_at.map(|k| k.to_string()).unwrap_or_else(|| "none".into())),
    ])
}

fn sweep_artifacts(
    cfg: &ExperimentConfig,
    dir: &Path,
    progress: &(dyn Fn(&SweepRow, bool) + Sync),
) -> Result<RunSummary> {
    let r = run_density_sweep(cfg, Some(dir), progress)?;
    if cfg.output.plots {
        let d: Vec<f64> = r.aggregates.iter().map(|a| a.density).collect();
        let pick = |f: fn(&super::sweep::SweepAggregate) -> f64| -> Vec<f64> { r.aggregates.iter().map(f).collect() };
        let (mean, p25, p75) =
            (pick(|a| a.forecast_time.mean), pick(|a| a.forecast_time.p25), pick(|a| a.forecast_time.p75));
        let svg = line_plot(
            "Forecast time vs density",
            "density",
            &[
                Series { label: "mean t_f", x: &d, y: &mean },
                Series { label: "p25", x: &d, y: &p25 },
                Series { label: "p75", x: &d, y: &p75 },
            ],
        );
        write_atomic(&dir.join("sweep.svg"), &svg)?;
    }
    Ok(r.aggregates
        .iter()
        .map(|a| {
            (
                format!("density={:.4}", a.density),
                format!(
                    "t_f mean {:.3} median {:.3} best {:.3} activity {:.3}",
                    a.forecast_time.mean, a.forecast_time.median, a.forecast_time.max, a.mean_activity
                ),
            )
        })
        .collect())
}
