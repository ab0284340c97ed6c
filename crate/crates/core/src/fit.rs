//! Exponential-growth fits and scrambling times for variance-like series.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Ordinary least squares y = a + b·x with a 95% interval on the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub slope_ci95: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Contract("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::Contract(format!("linear fit needs at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("degenerate abscissa in linear fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = (sse / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::Numerical(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit {
        intercept,
        slope,
        slope_stderr,
        slope_ci95: t * slope_stderr,
        r_squared,
        points: n,
    })
}

/// Rules for picking the exponential window of a growing series.
///
/// The window opens once the series exceeds `onset_factor` times its t=0
/// value and closes at `end_fraction` of the saturation maximum. When the
/// t=0 value is zero or below (a quantity that starts exactly at zero, up to
/// sampling noise), the opening is instead placed `max_decades` below the
/// closing value; the same cap also applies when the onset rule would open
/// more decades than that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindowPolicy {
    pub onset_factor: f64,
    pub end_fraction: f64,
    pub max_decades: f64,
    pub min_decades: f64,
    /// A local maximum counts as saturation only above this fraction of the global maximum.
    pub saturation_fraction: f64,
}

impl Default for FitWindowPolicy {
    fn default() -> Self {
        FitWindowPolicy {
            onset_factor: 10.0,
            end_fraction: 0.1,
            max_decades: 3.0,
            min_decades: 1.5,
            saturation_fraction: 0.5,
        }
    }
}

/// Growth rate from a log-linear fit with its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub rate: f64,
    pub ci95: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub points: usize,
    pub r_squared: f64,
}

impl ExponentFit {
    pub fn low(&self) -> f64 {
        self.rate - self.ci95
    }

    pub fn high(&self) -> f64 {
        self.rate + self.ci95
    }
}

/// Time of the first saturation maximum, or the grid end if none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScramblingTime {
    pub t_ms: f64,
    pub index: usize,
    /// True when no maximum was found and the end of the grid is reported.
    pub at_end: bool,
}

fn is_local_max(s: &[f64], i: usize) -> bool {
    let prev_ok = i == 0 || s[i] >= s[i - 1];
    let next_ok = i + 1 >= s.len() || s[i] > s[i + 1];
    prev_ok && next_ok && i + 1 < s.len()
}

fn saturation_index(series: &[f64], from: usize, policy: &FitWindowPolicy) -> Option<usize> {
    let global = series[from..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (from.max(1)..series.len()).find(|&i| is_local_max(series, i) && series[i] >= policy.saturation_fraction * global)
}

/// First local maximum of the series that reaches the saturation level.
pub fn scrambling_time(times: &[f64], series: &[f64]) -> Result<ScramblingTime> {
    scrambling_time_with(times, series, &FitWindowPolicy::default())
}

pub fn scrambling_time_with(times: &[f64], series: &[f64], policy: &FitWindowPolicy) -> Result<ScramblingTime> {
    if times.len() != series.len() || times.is_empty() {
        return Err(Error::Contract("time grid and series must be non-empty and equal length".into()));
    }
    Ok(match saturation_index(series, 0, policy) {
        Some(i) => ScramblingTime {
            t_ms: times[i],
            index: i,
            at_end: false,
        },
        None => ScramblingTime {
            t_ms: *times.last().expect("non-empty"),
            index: times.len() - 1,
            at_end: true,
        },
    })
}

/// Exponential rate of a growing series (e.g. 1 − F or a variance).
pub fn extract_growth_rate(times: &[f64], series: &[f64], policy: &FitWindowPolicy) -> Result<ExponentFit> {
    if times.len() != series.len() || times.len() < 3 {
        return Err(Error::Contract("time grid and series must have equal length ≥ 3".into()));
    }
    let peak_idx = saturation_index(series, 0, policy)
        .ok_or_else(|| Error::NoExponentialWindow("no saturation maximum on the grid".into()))?;
    let peak = series[peak_idx];
    let end_value = policy.end_fraction * peak;
    let base = series[0];
    let cap = end_value * 10f64.powf(-policy.max_decades);
    let start_value = if base > 0.0 { (policy.onset_factor * base).max(cap) } else { cap };
    if !(peak > 0.0) || (peak / start_value).log10() < policy.min_decades {
        return Err(Error::NoExponentialWindow(format!(
            "growth of {:.2} decades before saturation (need {})",
            (peak / start_value.max(f64::MIN_POSITIVE)).log10(),
            policy.min_decades
        )));
    }
    let start = (0..peak_idx)
        .find(|&i| series[i] > start_value)
        .ok_or_else(|| Error::NoExponentialWindow("series never leaves the onset region".into()))?;
    let end = (start..=peak_idx)
        .find(|&i| series[i] >= end_value)
        .unwrap_or(peak_idx);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (start..=end)
        .filter(|&i| series[i] > 0.0)
        .map(|i| (times[i], series[i].ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::NoExponentialWindow(format!(
            "only {} grid points inside the window",
            xs.len()
        )));
    }
    let f = linear_fit(&xs, &ys)?;
    Ok(ExponentFit {
        rate: f.slope,
        ci95: f.slope_ci95,
        window_start: times[start],
        window_end: times[end],
        points: xs.len(),
        r_squared: f.r_squared,
    })
}

/// λ_Q from 1 − F (or (1 − F)/δφ²) with the default window policy.
pub fn extract_lambda_q(times: &[f64], series: &[f64], policy: &FitWindowPolicy) -> Result<ExponentFit> {
    extract_growth_rate(times, series, policy)
}
