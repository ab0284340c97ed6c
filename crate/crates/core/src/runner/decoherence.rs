//! Collective dephasing applied after the fact to multiple-quantum
//! intensities, and the statistic that checks whether the regular and
//! chaotic regimes still separate once it is applied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// I₀(t) → I₀(t)·e^{−ΓNt}, elementwise on the physical time grid.
///
/// With a parametric enhancement the caller passes the compressed grid
/// t/enhancement; Γ itself is never rescaled.
pub fn apply_dephasing_decay(i0: &[f64], times: &[f64], gamma_per_ms: f64, n_spins: usize) -> Vec<f64> {
    let rate = gamma_per_ms * n_spins as f64;
    i0.iter().zip(times).map(|(v, t)| v * (-rate * t).exp()).collect()
}

/// Physical times of a run whose couplings are all multiplied by `factor`.
pub fn enhanced_grid(times: &[f64], factor: f64) -> Vec<f64> {
    times.iter().map(|t| t / factor).collect()
}

/// Mean of a series and its standard error from `blocks` contiguous block
/// means, which absorbs the autocorrelation of a time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowAverage {
    pub mean: f64,
    pub stderr: f64,
    pub points: usize,
}

pub fn window_average(values: &[f64], blocks: usize) -> Result<WindowAverage> {
    let n = values.len();
    if n == 0 {
        return Err(Error::param("window", "averaging window has no grid points"));
    }
    let blocks = blocks.clamp(1, n);
    let means: Vec<f64> = (0..blocks)
        .map(|b| {
            let part = &values[b * n / blocks..(b + 1) * n / blocks];
            part.iter().sum::<f64>() / part.len() as f64
        })
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if blocks < 2 {
        0.0
    } else {
        let bm = means.iter().sum::<f64>() / blocks as f64;
        let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (blocks - 1) as f64;
        (var / blocks as f64).sqrt()
    };
    Ok(WindowAverage { mean, stderr, points: n })
}

/// Difference between the chaotic (B < B_c) and regular (B ≥ B_c) time
/// averages of an entropy estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub chaotic_mean: f64,
    pub regular_mean: f64,
    pub difference: f64,
    /// 1.96·sqrt(se_c² + se_r²).
    pub ci95: f64,
}

impl Separation {
    /// Positive with the 95% interval excluding zero.
    pub fn significant(&self) -> bool {
        self.difference - self.ci95 > 0.0
    }
}

fn pooled(group: &[WindowAverage]) -> (f64, f64) {
    let k = group.len() as f64;
    let mean = group.iter().map(|a| a.mean).sum::<f64>() / k;
    let se = group.iter().map(|a| a.stderr * a.stderr).sum::<f64>().sqrt() / k;
    (mean, se)
}

/// Pools the per-field averages on each side of B_c.
pub fn separation(chaotic: &[WindowAverage], regular: &[WindowAverage]) -> Result<Separation> {
    if chaotic.is_empty() || regular.is_empty() {
        return Err(Error::param(
            "field_ratios",
            "separation needs field ratios on both sides of the critical field",
        ));
    }
    let (c, sc) = pooled(chaotic);
    let (r, sr) = pooled(regular);
    Ok(Separation {
        chaotic_mean: c,
        regular_mean: r,
        difference: c - r,
        ci95: 1.96 * (sc * sc + sr * sr).sqrt(),
    })
}
