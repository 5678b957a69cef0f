//! Forecast error and horizon, conductance-rate statistics and readout
//! diversity.

use faer::Mat;

use crate::error::{Error, Result};

pub const DEFAULT_THETA: f64 = 0.4;
pub const DEFAULT_LYAPUNOV_MAX: f64 = 0.91;

/// Time-averaged squared deviation of `y` from its time mean, the normaliser
/// of the relative forecast error.
pub fn error_normalizer(y: &Mat<f64>) -> Result<f64> {
    let t = y.nrows();
    if t < 2 {
        return Err(Error::param("rows", "need at least 2 samples"));
    }
    let mut total = 0.0;
    for c in 0..y.ncols() {
        let col = y.col(c);
        let mean = col.iter().sum::<f64>() / t as f64;
        total += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let norm = total / t as f64;
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::param("y", "constant target has no error normaliser"));
    }
    Ok(norm)
}

/// `E_f(t) = |y(t) - y_hat(t)|^2 / <|y - <y>|^2>`.
pub fn forecast_error(y: &Mat<f64>, y_hat: &Mat<f64>) -> Result<Vec<f64>> {
    let norm = error_normalizer(y)?;
    forecast_error_with(y, y_hat, norm)
}

/// [`forecast_error`] with an externally supplied normaliser.
pub fn forecast_error_with(y: &Mat<f64>, y_hat: &Mat<f64>, normalizer: f64) -> Result<Vec<f64>> {
    if y.nrows() != y_hat.nrows() || y.ncols() != y_hat.ncols() {
        return Err(Error::Dimension(format!(
            "y is {}x{}, y_hat is {}x{}",
            y.nrows(),
            y.ncols(),
            y_hat.nrows(),
            y_hat.ncols()
        )));
    }
    if !(normalizer > 0.0) {
        return Err(Error::param("normalizer", "must be positive"));
    }
    Ok((0..y.nrows())
        .map(|t| {
            (0..y.ncols())
                .map(|c| {
                    let d = y[(t, c)] - y_hat[(t, c)];
                    d * d
                })
                .sum::<f64>()
                / normalizer
        })
        .collect())
}

/// Forecast horizon in Lyapunov times, ending at the first step whose error
/// exceeds `theta`. A NaN error counts as an exceedance.
pub fn forecast_time(errors: &[f64], theta: f64, lyapunov_max: f64, dt: f64) -> f64 {
    let last_ok = match errors.iter().position(|e| !(*e <= theta)) {
        Some(0) => return 0.0,
        Some(k) => k - 1,
        None => errors.len().saturating_sub(1),
    };
    lyapunov_max * dt * last_ok as f64
}

/// Per-step mean and standard deviation over edges of
/// `|dG/dt| / (g_on - g_off)` from a `T x E` conductance trace.
pub fn dg_statistics(g_trace: &Mat<f64>, dt: f64, g_range: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if g_trace.nrows() < 2 {
        return Err(Error::param("rows", "need at least 2 samples"));
    }
    if !(dt > 0.0 && g_range > 0.0) {
        return Err(Error::param("dt", "dt and conductance range must be positive"));
    }
    let e = g_trace.ncols();
    let mut means = Vec::with_capacity(g_trace.nrows() - 1);
    let mut stds = Vec::with_capacity(g_trace.nrows() - 1);
    let mut rates = vec![0.0; e];
    for t in 1..g_trace.nrows() {
        for (k, r) in rates.iter_mut().enumerate() {
            *r = (g_trace[(t, k)] - g_trace[(t - 1, k)]).abs() / dt / g_range;
        }
        let (m, s) = crate::circuit::mean_std(&rates);
        means.push(m);
        stds.push(s);
    }
    Ok((means, stds))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diversity {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub used_columns: usize,
    pub dropped_constant: usize,
}

fn centered_unit_columns(m: &Mat<f64>) -> (Vec<Vec<f64>>, usize) {
    let t = m.nrows() as f64;
    let mut cols = Vec::new();
    let mut dropped = 0;
    for c in 0..m.ncols() {
        let col = m.col(c);
        let mean = col.iter().sum::<f64>() / t;
        let centred: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(norm > 1e-12 * scale.max(f64::MIN_POSITIVE) * t.sqrt()) || !norm.is_finite() {
            dropped += 1;
            continue;
        }
        cols.push(centred.into_iter().map(|v| v / norm).collect());
    }
    (cols, dropped)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pearson correlation over every pair of non-constant readout columns.
pub fn readout_diversity(readouts: &Mat<f64>) -> Result<Diversity> {
    if readouts.nrows() < 3 {
        return Err(Error::param("rows", "need at least 3 samples"));
    }
    let (cols, dropped) = centered_unit_columns(readouts);
    if cols.len() < 2 {
        return Err(Error::Empty("non-constant readout columns (need 2)"));
    }
    let (mut sum, mut min, mut max, mut pairs) = (0.0, f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let r = dot(&cols[i], &cols[j]);
            sum += r;
            min = min.min(r);
            max = max.max(r);
            pairs += 1;
        }
    }
    Ok(Diversity { mean: sum / pairs as f64, min, max, used_columns: cols.len(), dropped_constant: dropped })
}

/// For each readout column, its largest correlation with any single input
/// column and its correlation with the sum of all inputs.
pub fn input_correlations(readouts: &Mat<f64>, inputs: &Mat<f64>) -> Result<Vec<(f64, f64)>> {
    if readouts.nrows() != inputs.nrows() || readouts.nrows() < 3 {
        return Err(Error::Dimension("readouts and inputs need the same row count (>= 3)".into()));
    }
    let (ins, _) = centered_unit_columns(inputs);
    let total = Mat::from_fn(inputs.nrows(), 1, |t, _| (0..inputs.ncols()).map(|c| inputs[(t, c)]).sum());
    let (sum_col, _) = centered_unit_columns(&total);
    let (outs, _) = centered_unit_columns(readouts);
    if ins.is_empty() || sum_col.is_empty() {
        return Err(Error::Empty("non-constant input columns"));
    }
    Ok(outs
        .iter()
        .map(|r| {
            let best = ins.iter().map(|i| dot(r, i)).fold(f64::NEG_INFINITY, f64::max);
            (best, dot(r, &sum_col[0]))
        })
        .collect())
}

/// Mean of `E_f` over teacher-forced one-step predictions.
pub fn training_nmse(y: &Mat<f64>, y_hat: &Mat<f64>) -> Result<f64> {
    let errs = forecast_error(y, y_hat)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Summary of a sample: mean, population std, quartiles (linear interpolation)
/// and max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mean, std) = crate::circuit::mean_std(values);
    Ok(Summary {
        count: values.len(),
        mean,
        std,
        p25: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        p75: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}
