//! Linear output layer with a skip connection: `y_hat = W_out r_out + u`.
//!
//! `W_out` is fitted by Tikhonov-regularised least squares on the residual
//! target `y - u`, solved through a Householder QR of the stacked system
//! `[R; sqrt(λ) I]` rather than the normal equations.

use std::fmt::Write as _;
use std::path::Path;

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeConfig {
    pub tikhonov: f64,
    /// Leading rows excluded from the fit.
    pub washout_steps: usize,
    /// Divide each readout column by its standard deviation before the fit
    /// (folded back into `W_out`, so the layer stays linear).
    pub standardize: bool,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig { tikhonov: 1e-6, washout_steps: 1000, standardize: false }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tikhonov >= 0.0 && self.tikhonov.is_finite()) {
            return Err(Error::param("tikhonov", "must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedReadout {
    /// `N_y x N_out`.
    pub w_out: Mat<f64>,
    pub config: RidgeConfig,
    pub training_rows: usize,
    pub wiring_seed: Option<u64>,
}

/// Fits `W_out = argmin |R W^T - targets|^2 + λ |W|^2` over the rows after the
/// washout. `targets` should already be the residual `y - u`.
pub fn ridge_fit(readouts: &Mat<f64>, targets: &Mat<f64>, config: &RidgeConfig) -> Result<TrainedReadout> {
    config.validate()?;
    if readouts.nrows() != targets.nrows() {
        return Err(Error::Dimension(format!("{} readout rows vs {} target rows", readouts.nrows(), targets.nrows())));
    }
    let washout = config.washout_steps;
    if readouts.nrows() <= washout {
        return Err(Error::Empty("training set after washout"));
    }
    let rows = readouts.nrows() - washout;
    let (n_out, n_y) = (readouts.ncols(), targets.ncols());
    if n_out == 0 || n_y == 0 {
        return Err(Error::Empty("readout or target columns"));
    }
    let r = readouts.subrows(washout, rows);
    let y = targets.subrows(washout, rows);
    for (what, m) in [("readouts", r), ("targets", y)] {
        for c in 0..m.ncols() {
            if let Some(i) = m.col(c).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, step: washout + i });
            }
        }
    }

    let scale: Vec<f64> = if config.standardize {
        (0..n_out)
            .map(|c| {
                let col = r.col(c);
                let mean = col.iter().sum::<f64>() / rows as f64;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; n_out]
    };

    let sqrt_lambda = config.tikhonov.sqrt();
    let stacked = Mat::from_fn(rows + n_out, n_out, |i, j| {
        if i < rows {
            r[(i, j)] / scale[j]
        } else if i - rows == j {
            sqrt_lambda
        } else {
            0.0
        }
    });
    let mut rhs = Mat::from_fn(rows + n_out, n_y, |i, j| if i < rows { y[(i, j)] } else { 0.0 });
    stacked.qr().solve_lstsq_in_place(rhs.as_mut());

    let w_out = Mat::from_fn(n_y, n_out, |i, j| rhs[(j, i)] / scale[j]);
    if let Some(bad) = w_out.col_iter().flat_map(|c| c.iter()).find(|v| !v.is_finite()) {
        return Err(Error::Solver(format!(
            "ridge solution is not finite ({bad}); the readouts are rank deficient, use tikhonov > 0"
        )));
    }
    Ok(TrainedReadout { w_out, config: *config, training_rows: rows, wiring_seed: None })
}

impl TrainedReadout {
    pub fn n_outputs(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn n_readouts(&self) -> usize {
        self.w_out.ncols()
    }

    pub fn with_wiring_seed(mut self, seed: u64) -> Self {
        self.wiring_seed = Some(seed);
        self
    }

    /// `W_out r_out + u`.
    pub fn predict(&self, r_out: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_outputs()];
        self.predict_into(r_out, u, &mut out)?;
        Ok(out)
    }

    pub fn predict_into(&self, r_out: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        if r_out.len() != self.n_readouts() || u.len() != self.n_outputs() || out.len() != self.n_outputs() {
            return Err(Error::Dimension(format!(
                "W_out is {}x{}, got r_out of {} and u of {}",
                self.n_outputs(),
                self.n_readouts(),
                r_out.len(),
                u.len()
            )));
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.w_out.row(i);
            *o = u[i] + row.iter().zip(r_out).map(|(w, r)| w * r).sum::<f64>();
        }
        Ok(())
    }

    /// One row per output dimension after a `#` header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let seed = self.wiring_seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
        let _ = writeln!(
            out,
            "# tikhonov={},washout_steps={},standardize={},wiring_seed={},training_rows={}",
            self.config.tikhonov, self.config.washout_steps, self.config.standardize, seed, self.training_rows
        );
        for i in 0..self.w_out.nrows() {
            let row: Vec<String> = self.w_out.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Parse { what: "readout csv", reason };
        let mut lines = text.lines();
        let header = lines.next().and_then(|l| l.strip_prefix('#')).ok_or_else(|| bad("missing `#` header".into()))?;
        let mut config = RidgeConfig::default();
        let mut wiring_seed = None;
        let mut training_rows = 0;
        for field in header.trim().split(',') {
            let (key, value) = field.split_once('=').ok_or_else(|| bad(format!("bad header field `{field}`")))?;
            let parse_err = |_| bad(format!("bad value for {key}"));
            match key {
                "tikhonov" => config.tikhonov = value.parse().map_err(|_| bad("tikhonov".into()))?,
                "washout_steps" => config.washout_steps = value.parse().map_err(parse_err)?,
                "standardize" => config.standardize = value.parse().map_err(|_| bad("standardize".into()))?,
                "wiring_seed" if value == "none" => wiring_seed = None,
                "wiring_seed" => wiring_seed = Some(value.parse().map_err(|_| bad("wiring_seed".into()))?),
                "training_rows" => training_rows = value.parse().map_err(parse_err)?,
                _ => return Err(bad(format!("unknown header field `{key}`"))),
            }
        }
        let rows: Vec<Vec<f64>> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("`{v}`: {e}")))).collect())
            .collect::<Result<_>>()?;
        let n_out = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || rows.iter().any(|r| r.len() != n_out) {
            return Err(bad("ragged or empty weight matrix".into()));
        }
        Ok(TrainedReadout {
            w_out: Mat::from_fn(rows.len(), n_out, |i, j| rows[i][j]),
            config,
            training_rows,
            wiring_seed,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}
