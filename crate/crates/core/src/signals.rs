//! Drive and teacher signals: Lorenz63 trajectories, z-score voltage scaling
//! and the square-wave Fourier battery.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    /// Sampling interval, seconds.
    pub dt: f64,
    /// RK4 steps per sampling interval.
    pub substeps: usize,
    pub y0: [f64; 3],
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0, dt: 0.005, substeps: 4, y0: [1.0, 1.0, 1.0] }
    }
}

impl LorenzParams {
    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive and finite"));
        }
        if !(self.sigma.is_finite() && self.rho.is_finite() && self.beta.is_finite()) {
            return Err(Error::param("lorenz", "sigma, rho and beta must be finite"));
        }
        if self.y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("y0", "initial state must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn rhs(&self, y: [f64; 3]) -> [f64; 3] {
        [self.sigma * (y[1] - y[0]), y[0] * (self.rho - y[2]) - y[1], y[0] * y[1] - self.beta * y[2]]
    }

    /// Advances one sampling interval `dt` in `substeps` RK4 steps.
    #[inline]
    pub fn sample_step(&self, mut y: [f64; 3]) -> [f64; 3] {
        let h = self.dt / self.substeps as f64;
        for _ in 0..self.substeps {
            y = self.rk4_step(y, h);
        }
        y
    }

    /// One classical fourth-order Runge-Kutta step of size `h`.
    #[inline]
    pub fn rk4_step(&self, y: [f64; 3], h: f64) -> [f64; 3] {
        let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
        let k1 = self.rhs(y);
        let k2 = self.rhs(add(y, k1, 0.5 * h));
        let k3 = self.rhs(add(y, k2, 0.5 * h));
        let k4 = self.rhs(add(y, k3, h));
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        ]
    }
}

/// RK4 trajectory from `params.y0`: `n_steps + 1` rows spaced `dt` apart.
pub fn lorenz_integrate(params: &LorenzParams, n_steps: usize) -> Result<Mat<f64>> {
    lorenz_trajectory(params, 0, n_steps)
}

/// Like [`lorenz_integrate`] but first discards `spinup_steps` steps so the
/// returned trajectory starts on the attractor.
pub fn lorenz_trajectory(params: &LorenzParams, spinup_steps: usize, n_steps: usize) -> Result<Mat<f64>> {
    params.validate()?;
    let mut y = params.y0;
    for k in 0..spinup_steps {
        y = params.sample_step(y);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "Lorenz state", step: k + 1 });
        }
    }
    let mut out = Mat::zeros(n_steps + 1, 3);
    for k in 0..=n_steps {
        if k > 0 {
            y = params.sample_step(y);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "Lorenz state", step: spinup_steps + k });
            }
        }
        for c in 0..3 {
            out[(k, c)] = y[c];
        }
    }
    Ok(out)
}

/// Largest Lyapunov exponent by the two-trajectory (Benettin) method: a
/// companion orbit is kept `separation` away from the reference and pulled
/// back along the current separation direction every `renormalize_every`
/// steps. Returns the exponent per unit time.
pub fn largest_lyapunov(
    params: &LorenzParams,
    transient_steps: usize,
    n_steps: usize,
    renormalize_every: usize,
    separation: f64,
) -> Result<f64> {
    params.validate()?;
    if n_steps == 0 || renormalize_every == 0 || !(separation > 0.0) {
        return Err(Error::param("lyapunov", "need positive step counts and separation"));
    }
    let h = params.dt;
    let mut y = params.y0;
    for _ in 0..transient_steps {
        y = params.sample_step(y);
    }
    let mut z = [y[0] + separation, y[1], y[2]];
    let mut log_sum = 0.0;
    let mut elapsed = 0usize;
    while elapsed < n_steps {
        let chunk = renormalize_every.min(n_steps - elapsed);
        for _ in 0..chunk {
            y = params.sample_step(y);
            z = params.sample_step(z);
        }
        elapsed += chunk;
        let d = [z[0] - y[0], z[1] - y[1], z[2] - y[2]];
        let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if !(dist.is_finite() && dist > 0.0) {
            return Err(Error::NonFinite { what: "Lyapunov separation", step: elapsed });
        }
        log_sum += (dist / separation).ln();
        let f = separation / dist;
        z = [y[0] + d[0] * f, y[1] + d[1] * f, y[2] + d[2] * f];
    }
    Ok(log_sum / (n_steps as f64 * h))
}

/// Per-column z-score statistics plus the voltage the unit-variance signal is
/// scaled to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub voltage_scale: f64,
}

impl NormalizationStats {
    /// Fits statistics on `raw` (population standard deviation).
    pub fn fit(raw: &Mat<f64>, voltage_scale: f64) -> Result<Self> {
        let t = raw.nrows();
        if t < 2 {
            return Err(Error::param("rows", "need at least 2 samples to normalise"));
        }
        if !(voltage_scale > 0.0 && voltage_scale.is_finite()) {
            return Err(Error::param("voltage_scale", "must be positive"));
        }
        let mut mean = Vec::with_capacity(raw.ncols());
        let mut std = Vec::with_capacity(raw.ncols());
        for c in 0..raw.ncols() {
            let col = raw.col(c);
            let m = col.iter().sum::<f64>() / t as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t as f64;
            let s = var.sqrt();
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::ConstantColumn(c));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(NormalizationStats { mean, std, voltage_scale })
    }

    pub fn transform(&self, raw: &Mat<f64>) -> Mat<f64> {
        Mat::from_fn(raw.nrows(), raw.ncols(), |i, j| (raw[(i, j)] - self.mean[j]) / self.std[j] * self.voltage_scale)
    }

    pub fn inverse(&self, scaled: &Mat<f64>) -> Mat<f64> {
        Mat::from_fn(scaled.nrows(), scaled.ncols(), |i, j| {
            scaled[(i, j)] / self.voltage_scale * self.std[j] + self.mean[j]
        })
    }

    pub fn inverse_row(&self, scaled: &[f64]) -> Vec<f64> {
        scaled.iter().enumerate().map(|(j, v)| v / self.voltage_scale * self.std[j] + self.mean[j]).collect()
    }
}

/// Z-scores each column of `raw` and multiplies by `voltage_scale`.
pub fn normalize(raw: &Mat<f64>, voltage_scale: f64) -> Result<(Mat<f64>, NormalizationStats)> {
    let stats = NormalizationStats::fit(raw, voltage_scale)?;
    Ok((stats.transform(raw), stats))
}

/// The first `n_modes` odd harmonics of a unit square wave, one per column:
/// `(4/π) sin((2k-1) 2π t / period) / (2k-1)` for `k = 1..=n_modes`.
pub fn fourier_square_modes(n_modes: usize, period: f64, times: &[f64]) -> Result<Mat<f64>> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::param("period", "must be positive"));
    }
    let omega = 2.0 * PI / period;
    Ok(Mat::from_fn(times.len(), n_modes, |i, k| {
        let h = (2 * k + 1) as f64;
        4.0 / PI * (h * omega * times[i]).sin() / h
    }))
}
