use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::metrics::{summarize, Summary};
use crate::rng::derive_seed;
use crate::topology::{edges_for_density, NetworkGraph};

use super::config::{ExperimentConfig, ExperimentKind};
use super::forecast::{forecast_on, lorenz_data, ForecastOutcome, LorenzData};
use super::output::write_atomic;

/// One (density, realization) cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub density_index: usize,
    pub realization: usize,
    pub seed: u64,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub density: f64,
    pub t_f_lyapunov: f64,
    pub train_nmse: f64,
    pub mean_activity: f64,
    pub diverged_at: Option<usize>,
}

pub const ROW_HEADER: &str =
    "density_index,realization,seed,n_nodes,n_edges,density,t_f_lyapunov,train_nmse,mean_activity,diverged_at";

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.density_index,
            self.realization,
            self.seed,
            self.n_nodes,
            self.n_edges,
            self.density,
            self.t_f_lyapunov,
            self.train_nmse,
            self.mean_activity,
            self.diverged_at.map(|k| k.to_string()).unwrap_or_default()
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Parse { what: "sweep row", reason: format!("{reason}: `{line}`") };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return Err(bad("expected 10 fields"));
        }
        macro_rules! p {
            ($i:expr) => {
                f[$i].parse().map_err(|_| bad("unparsable field"))?
            };
        }
        Ok(SweepRow {
            density_index: p!(0),
            realization: p!(1),
            seed: p!(2),
            n_nodes: p!(3),
            n_edges: p!(4),
            density: p!(5),
            t_f_lyapunov: p!(6),
            train_nmse: p!(7),
            mean_activity: p!(8),
            diverged_at: if f[9].is_empty() { None } else { Some(p!(9)) },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAggregate {
    pub density: f64,
    pub n_edges: usize,
    pub forecast_time: Summary,
    pub mean_train_nmse: f64,
    pub mean_activity: f64,
    pub diverged: usize,
}

pub const AGGREGATE_HEADER: &str =
    "density,n_edges,runs,t_f_mean,t_f_std,t_f_p25,t_f_median,t_f_p75,t_f_best,train_nmse_mean,activity_mean,diverged";

impl SweepAggregate {
    pub fn to_csv_line(&self) -> String {
        let s = &self.forecast_time;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.density,
            self.n_edges,
            s.count,
            s.mean,
            s.std,
            s.p25,
            s.median,
            s.p75,
            s.max,
            self.mean_train_nmse,
            self.mean_activity,
            self.diverged
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Ordered by density index, then realization.
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
}

/// Per-density summaries recomputed from rows.
pub fn aggregate(rows: &[SweepRow]) -> Result<Vec<SweepAggregate>> {
    let mut indices: Vec<usize> = rows.iter().map(|r| r.density_index).collect();
    indices.sort_unstable();
    indices.dedup();
    indices
        .into_iter()
        .map(|di| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.density_index == di).collect();
            let n = group.len() as f64;
            let t_f: Vec<f64> = group.iter().map(|r| r.t_f_lyapunov).collect();
            Ok(SweepAggregate {
                density: group[0].density,
                n_edges: group[0].n_edges,
                forecast_time: summarize(&t_f)?,
                mean_train_nmse: group.iter().map(|r| r.train_nmse).sum::<f64>() / n,
                mean_activity: group.iter().map(|r| r.mean_activity).sum::<f64>() / n,
                diverged: group.iter().filter(|r| r.diverged_at.is_some()).count(),
            })
        })
        .collect()
}

pub fn rows_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{ROW_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv_line());
    }
    out
}

pub fn aggregates_csv(aggregates: &[SweepAggregate]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for a in aggregates {
        let _ = writeln!(out, "{}", a.to_csv_line());
    }
    out
}

/// Seed of one sweep cell. Keyed on the edge count rather than the position
/// in the density list, so reordering or extending the list leaves every
/// existing cell unchanged.
pub fn cell_seed(base_seed: u64, n_edges: usize, realization: usize) -> u64 {
    derive_seed(base_seed, &[n_edges as u64, realization as u64])
}

fn cell_edges(cfg: &ExperimentConfig, density_index: usize) -> usize {
    edges_for_density(cfg.network.n_nodes, cfg.network.densities[density_index])
}

/// Graph and full forecast of one sweep cell.
pub fn run_cell(
    cfg: &ExperimentConfig,
    data: &LorenzData,
    density_index: usize,
    realization: usize,
) -> Result<(SweepRow, ForecastOutcome)> {
    let n_edges = cell_edges(cfg, density_index);
    let seed = cell_seed(cfg.base_seed, n_edges, realization);
    let n = cfg.network.n_nodes;
    let graph = NetworkGraph::random_connected(n, n_edges, derive_seed(seed, &[0]))?;
    let outcome = forecast_on(cfg, &graph, derive_seed(seed, &[1]), data)?;
    let row = SweepRow {
        density_index,
        realization,
        seed,
        n_nodes: n,
        n_edges: graph.n_edges(),
        density: graph.density(),
        t_f_lyapunov: outcome.forecast_time,
        train_nmse: outcome.train_nmse,
        mean_activity: outcome.mean_activity,
        diverged_at: outcome.diverged_at,
    };
    Ok((row, outcome))
}

fn run_file(dir: &Path, di: usize, ri: usize) -> std::path::PathBuf {
    dir.join("runs").join(format!("d{di:02}_r{ri:04}.csv"))
}

fn load_finished(dir: &Path, di: usize, ri: usize, seed: u64) -> Option<SweepRow> {
    let text = std::fs::read_to_string(run_file(dir, di, ri)).ok()?;
    let row = SweepRow::from_csv_line(text.lines().nth(1)?).ok()?;
    (row.seed == seed && row.density_index == di && row.realization == ri).then_some(row)
}

/// Runs every (density, realization) cell on `cfg.jobs` worker threads.
/// With an output directory each finished cell is written to its own file
/// and cells already on disk are skipped, so an interrupted sweep resumes.
pub fn run_density_sweep(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    progress: &(dyn Fn(&SweepRow, bool) + Sync),
) -> Result<SweepResult> {
    cfg.validate(ExperimentKind::Sweep)?;
    let data = lorenz_data(cfg)?;
    let cells: Vec<(usize, usize)> =
        (0..cfg.network.densities.len()).flat_map(|di| (0..cfg.realizations).map(move |ri| (di, ri))).collect();
    let slots: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; cells.len()]);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);

    let worker = || loop {
        if abort.load(Ordering::Relaxed) {
            return;
        }
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(di, ri)) = cells.get(k) else { return };
        let seed = cell_seed(cfg.base_seed, cell_edges(cfg, di), ri);
        if let Some(row) = out_dir.and_then(|d| load_finished(d, di, ri, seed)) {
            progress(&row, true);
            slots.lock().unwrap()[k] = Some(row);
            continue;
        }
        let result = run_cell(cfg, &data, di, ri).and_then(|(row, _)| {
            if let Some(dir) = out_dir {
                write_atomic(&run_file(dir, di, ri), &format!("{ROW_HEADER}\n{}\n", row.to_csv_line()))?;
            }
            Ok(row)
        });
        match result {
            Ok(row) => {
                progress(&row, false);
                slots.lock().unwrap()[k] = Some(row);
            }
            Err(e) => {
                abort.store(true, Ordering::Relaxed);
                first_error.lock().unwrap().get_or_insert(e);
                return;
            }
        }
    };
    std::thread::scope(|scope| {
        for _ in 1..cfg.jobs.min(cells.len()) {
            scope.spawn(worker);
        }
        worker();
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let rows: Vec<SweepRow> = slots.into_inner().unwrap().into_iter().map(|r| r.expect("every cell ran")).collect();
    let aggregates = aggregate(&rows)?;
    if let Some(dir) = out_dir {
        write_atomic(&dir.join("sweep_rows.csv"), &rows_csv(&rows))?;
        write_atomic(&dir.join("sweep_summary.csv"), &aggregates_csv(&aggregates))?;
    }
    Ok(SweepResult { rows, aggregates })
}
