//! Mean-field dynamics of the collective spin and the boson mode, maximal
//! Lyapunov exponents and the (field, energy) chaos map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Classical image of a product state: spin components in spin units
/// (|S| = N/2) and the boson quadratures α = α_R + iα_I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
}

impl PhasePoint {
    pub fn new(sx: f64, sy: f64, sz: f64, alpha_re: f64, alpha_im: f64) -> Self {
        PhasePoint {
            sx,
            sy,
            sz,
            alpha_re,
            alpha_im,
        }
    }

    /// S = (−N/2, 0, 0), α = 0.
    pub fn critical(n_spins: usize) -> Self {
        PhasePoint::new(-(n_spins as f64) / 2.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.sx, self.sy, self.sz, self.alpha_re, self.alpha_im]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        PhasePoint::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn spin_norm(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    /// |α|², the classical boson number.
    pub fn occupation(&self) -> f64 {
        self.alpha_re * self.alpha_re + self.alpha_im * self.alpha_im
    }
}

/// Coordinates the flow is integrated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variables {
    /// S and α as they are.
    Bare,
    /// s = 2S/N and β = α/√N, whose equations do not depend on N.
    Rescaled,
}

/// Mean-field vector field of the Dicke Hamiltonian.
///
/// In bare variables
///   dS_x/dt = −k₁ α_R S_y,  dS_y/dt = k₁ α_R S_x − ω_B S_z,  dS_z/dt = ω_B S_y,
///   dα_R/dt = σ ω_δ α_I,    dα_I/dt = −σ (ω_δ α_R + k₂ S_z),
/// with k₁ = 4ω_g/√N and k₂ = 2ω_g/√N. σ = +1 is the Heisenberg equation for
/// ⟨a⟩; σ = −1 is the same flow written for ⟨a⟩*, which leaves every
/// observable built from α_R and |α|² unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub n_spins: usize,
    pub variables: Variables,
    pub sigma: f64,
    k1: f64,
    k2: f64,
    delta: f64,
    field: f64,
    // E = e₁ α_R S_z + ω_δ|α|² + e₃ S_x in the working variables
    e1: f64,
    e3: f64,
    energy_scale: f64,
}

/// Default phase-rotation sign: matches the boson rows as printed alongside
/// the model (dα_R/dt = −ω_δ α_I).
pub const DEFAULT_SIGMA: f64 = -1.0;

impl MeanField {
    pub fn new(p: &ModelParams, variables: Variables) -> Self {
        Self::with_sigma(p, variables, DEFAULT_SIGMA)
    }

    pub fn with_sigma(p: &ModelParams, variables: Variables, sigma: f64) -> Self {
        let n = p.n_spins as f64;
        let (wg, wd, wb) = (p.omega_g(), p.omega_delta(), p.omega_b());
        let sigma = if sigma < 0.0 { -1.0 } else { 1.0 };
        match variables {
            Variables::Bare => MeanField {
                n_spins: p.n_spins,
                variables,
                sigma,
                k1: 4.0 * wg / n.sqrt(),
                k2: 2.0 * wg / n.sqrt(),
                delta: wd,
                field: wb,
                e1: 4.0 * wg / n.sqrt(),
                e3: wb,
                energy_scale: 1.0,
            },
            Variables::Rescaled => MeanField {
                n_spins: p.n_spins,
                variables,
                sigma,
                k1: 4.0 * wg,
                k2: wg,
                delta: wd,
                field: wb,
                e1: 2.0 * wg,
                e3: wb / 2.0,
                energy_scale: n,
            },
        }
    }

    fn spin_scale(&self) -> f64 {
        match self.variables {
            Variables::Bare => 1.0,
            Variables::Rescaled => 2.0 / self.n_spins as f64,
        }
    }

    fn boson_scale(&self) -> f64 {
        match self.variables {
            Variables::Bare => 1.0,
            Variables::Rescaled => 1.0 / (self.n_spins as f64).sqrt(),
        }
    }

    /// Bare point to working coordinates.
    pub fn encode(&self, x: &PhasePoint) -> [f64; 5] {
        let (s, b) = (self.spin_scale(), self.boson_scale());
        [x.sx * s, x.sy * s, x.sz * s, x.alpha_re * b, x.alpha_im * b]
    }

    /// Working coordinates back to a bare point.
    pub fn decode(&self, y: &[f64]) -> PhasePoint {
        let (s, b) = (self.spin_scale(), self.boson_scale());
        PhasePoint::new(y[0] / s, y[1] / s, y[2] / s, y[3] / b, y[4] / b)
    }

    pub fn rhs(&self, y: &[f64]) -> [f64; 5] {
        let [sx, sy, sz, ar, ai] = [y[0], y[1], y[2], y[3], y[4]];
        [
            -self.k1 * ar * sy,
            self.k1 * ar * sx - self.field * sz,
            self.field * sy,
            self.sigma * self.delta * ai,
            -self.sigma * (self.delta * ar + self.k2 * sz),
        ]
    }

    /// ∂F_i/∂y_j in the working variables.
    pub fn jacobian(&self, y: &[f64]) -> [[f64; 5]; 5] {
        let [sx, sy, sz, ar, _] = [y[0], y[1], y[2], y[3], y[4]];
        let _ = sz;
        let (k1, k2, b, d, s) = (self.k1, self.k2, self.field, self.delta, self.sigma);
        [
            [0.0, -k1 * ar, 0.0, -k1 * sy, 0.0],
            [k1 * ar, 0.0, -b, k1 * sx, 0.0],
            [0.0, b, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, s * d],
            [0.0, 0.0, -s * k2, -s * d, 0.0],
        ]
    }

    /// Mean-field energy (4ω_g/√N)α_R S_z + ω_δ|α|² + ω_B S_x of a bare point.
    pub fn energy(&self, x: &PhasePoint) -> f64 {
        let y = self.encode(x);
        self.energy_scale * (self.e1 * y[3] * y[2] + self.delta * (y[3] * y[3] + y[4] * y[4]) + self.e3 * y[0])
    }
}

/// Relative and absolute error targets for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rtol: 1e-10, atol: 1e-12 }
    }
}

// Dormand–Prince 5(4) tableau with Hairer's dense-output weights.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Adaptive Dormand–Prince integration of `dy/dt = f(y)` from `t0`, calling
/// `visit(i, y(grid[i]))` through dense output at each (ascending) grid time.
///
/// `h` is the initial step guess and is updated to the last accepted step.
pub fn dopri5<const D: usize>(
    f: impl Fn(&[f64; D]) -> [f64; D],
    mut y: [f64; D],
    t0: f64,
    grid: &[f64],
    tol: Tolerance,
    h: &mut f64,
    mut visit: impl FnMut(usize, &[f64; D]) -> Result<()>,
) -> Result<[f64; D]> {
    let Some(&t_end) = grid.last() else {
        return Ok(y);
    };
    let mut t = t0;
    let mut next = 0;
    while next < grid.len() && grid[next] <= t0 {
        visit(next, &y)?;
        next += 1;
    }
    let combine = |y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]| -> [f64; D] {
        let mut out = *y;
        for (c, k) in terms {
            for i in 0..D {
                out[i] += h * c * k[i];
            }
        }
        out
    };
    let mut k1 = f(&y);
    if *h <= 0.0 || !h.is_finite() {
        *h = 1e-3;
    }
    while t < t_end {
        let step = h.min(t_end - t);
        let hmin = 1e-14 * t.abs().max(1.0);
        if step < hmin && t_end - t > hmin {
            return Err(Error::StepUnderflow { t });
        }
        let k2 = f(&combine(&y, step, &[(A21, &k1)]));
        let k3 = f(&combine(&y, step, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&combine(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&combine(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(&combine(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = combine(&y, step, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(&y_new);
        let mut err = 0.0;
        for i in 0..D {
            let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / D as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Numerical(format!("non-finite error estimate at t = {t}")));
        }
        if err <= 1.0 {
            let t_new = t + step;
            while next < grid.len() && grid[next] <= t_new {
                let theta = (grid[next] - t) / step;
                let mut out = [0.0; D];
                for i in 0..D {
                    let r2 = y_new[i] - y[i];
                    let r3 = step * k1[i] - r2;
                    let r4 = r2 - step * k7[i] - r3;
                    let r5 = step
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    out[i] = y[i] + theta * (r2 + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)));
                }
                if grid[next] == t_new {
                    out = y_new;
                }
                visit(next, &out)?;
                next += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // keep the natural step when the last one was clipped to the grid end
            *h = (step * fac).max(if step < *h { *h } else { 0.0 });
        } else {
            *h = step * (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(y)
}

/// Sampled trajectory in bare variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
}

impl Trajectory {
    pub fn energies(&self, mf: &MeanField) -> Vec<f64> {
        self.points.iter().map(|x| mf.energy(x)).collect()
    }
}

/// Integrates the mean-field flow from t = 0 and samples it on `grid`.
pub fn integrate(x0: &PhasePoint, mf: &MeanField, grid: &[f64], tol: Tolerance) -> Result<Trajectory> {
    let mut points = Vec::with_capacity(grid.len());
    let mut h = 0.0;
    dopri5(|y| mf.rhs(y), mf.encode(x0), 0.0, grid, tol, &mut h, |_, y| {
        points.push(mf.decode(y));
        Ok(())
    })?;
    Ok(Trajectory {
        times: grid.to_vec(),
        points,
    })
}

/// Running-average exponent with its convergence diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Accumulated log growth divided by elapsed time (ms⁻¹).
    pub lambda: f64,
    /// |λ(t_end) − λ(2t_end/3)|.
    pub drift: f64,
    /// Drift below 2% of max(|λ|, `floor`).
    pub converged: bool,
    pub t_end: f64,
    /// (t, running estimate) at every renormalization.
    pub history: Vec<(f64, f64)>,
}

/// Exponents below this (ms⁻¹) count as zero when judging relative drift.
pub const LYAPUNOV_FLOOR: f64 = 0.05;

fn summarize(history: Vec<(f64, f64)>, t_end: f64) -> LyapunovEstimate {
    let lambda = history.last().map_or(0.0, |h| h.1);
    let cut = t_end * 2.0 / 3.0;
    let earlier = history.iter().find(|(t, _)| *t >= cut).map_or(lambda, |h| h.1);
    let drift = (lambda - earlier).abs();
    LyapunovEstimate {
        lambda,
        drift,
        converged: drift <= 0.02 * lambda.abs().max(LYAPUNOV_FLOOR),
        t_end,
        history,
    }
}

/// Settings for tangent-space and twin-trajectory exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOptions {
    pub t_end: f64,
    pub renorm_interval: f64,
    pub tol: Tolerance,
    /// Initial tangent (or separation) direction in working variables.
    pub direction: [f64; 5],
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions {
            t_end: 200.0,
            renorm_interval: 0.1,
            tol: Tolerance::default(),
            direction: [1.0, 1.0, 1.0, 1.0, 1.0],
        }
    }
}

impl LyapunovOptions {
    fn validate(&self) -> Result<[f64; 5]> {
        if !(self.t_end > 0.0 && self.renorm_interval > 0.0 && self.renorm_interval <= self.t_end) {
            return Err(Error::param("t_end", "need 0 < renorm_interval ≤ t_end"));
        }
        let norm = self.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::param("direction", "initial direction must be non-zero"));
        }
        Ok(self.direction.map(|v| v / norm))
    }

    fn segments(&self) -> usize {
        (self.t_end / self.renorm_interval).round().max(1.0) as usize
    }
}

/// Base integration chunk for tangent dynamics (ms). The reference
/// trajectory is always advanced in these chunks, so its step pattern does
/// not depend on how often the tangent vector is renormalized.
pub const TANGENT_CHUNK_MS: f64 = 0.1;

/// Maximal Lyapunov exponent by the tangent-space method: the fundamental
/// matrix obeys dΦ/dt = M(x(t))Φ from Φ = 1 on each chunk, the chunk
/// matrices are applied to a single tangent vector, and that vector is
/// rescaled to unit length once per renormalization interval.
pub fn lyapunov_max(x0: &PhasePoint, mf: &MeanField, opts: &LyapunovOptions) -> Result<LyapunovEstimate> {
    let mut v = opts.validate()?;
    let chunk = TANGENT_CHUNK_MS.min(opts.renorm_interval);
    let per_renorm = (opts.renorm_interval / chunk).round().max(1.0) as usize;
    let chunks = (opts.t_end / chunk).round().max(1.0) as usize;
    let flow = |y: &[f64; 30]| -> [f64; 30] {
        let mut out = [0.0; 30];
        out[..5].copy_from_slice(&mf.rhs(&y[..5]));
        let m = mf.jacobian(&y[..5]);
        for i in 0..5 {
            for j in 0..5 {
                out[5 + 5 * i + j] = (0..5).map(|k| m[i][k] * y[5 + 5 * k + j]).sum();
            }
        }
        out
    };
    let mut x = mf.encode(x0);
    let mut acc = 0.0;
    let mut h = 0.0;
    let mut history = Vec::with_capacity(chunks / per_renorm + 1);
    for c in 0..chunks {
        let mut y = [0.0; 30];
        y[..5].copy_from_slice(&x);
        for i in 0..5 {
            y[5 + 6 * i] = 1.0;
        }
        let y = dopri5(flow, y, 0.0, &[chunk], opts.tol, &mut h, |_, _| Ok(()))?;
        x.copy_from_slice(&y[..5]);
        let mut w = [0.0; 5];
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = (0..5).map(|k| y[5 + 5 * i + k] * v[k]).sum();
        }
        v = w;
        if (c + 1) % per_renorm == 0 || c + 1 == chunks {
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Numerical("tangent vector collapsed or overflowed".into()));
            }
            acc += norm.ln();
            v = v.map(|a| a / norm);
            let t = (c + 1) as f64 * chunk;
            history.push((t, acc / t));
        }
    }
    Ok(summarize(history, chunks as f64 * chunk))
}

/// Observable whose twin-trajectory separation defines an exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparationObservable {
    /// n = α_R² + α_I².
    Occupation,
    /// α_R, linear in the phase-space coordinates.
    Quadrature,
}

impl SeparationObservable {
    fn eval(&self, x: &PhasePoint) -> f64 {
        match self {
            SeparationObservable::Occupation => x.occupation(),
            SeparationObservable::Quadrature => x.alpha_re,
        }
    }
}

/// Exponent of |O(x₁(t)) − O(x₂(t))| for twin trajectories started a distance
/// `epsilon` apart (working variables). The separation is re-seeded to length
/// `epsilon` along its current direction after each interval and the growth of
/// the observable difference across the interval is accumulated.
///
/// Separations that do not grow exponentially (regular motion) are reported
/// as [`Error::NoExponentialWindow`].
pub fn lambda_c(
    x0: &PhasePoint,
    mf: &MeanField,
    observable: SeparationObservable,
    epsilon: f64,
    opts: &LyapunovOptions,
) -> Result<LyapunovEstimate> {
    let mut u = opts.validate()?;
    if !(epsilon > 0.0 && epsilon < 1e-3) {
        return Err(Error::param("epsilon", "twin separation must lie in (0, 1e-3)"));
    }
    let segments = opts.segments();
    let tau = opts.t_end / segments as f64;
    let pair = |y: &[f64; 10]| -> [f64; 10] {
        let mut out = [0.0; 10];
        out[..5].copy_from_slice(&mf.rhs(&y[..5]));
        out[5..].copy_from_slice(&mf.rhs(&y[5..]));
        out
    };
    let mut x = mf.encode(x0);
    let mut acc = 0.0;
    let mut h = 0.0;
    let mut history = Vec::with_capacity(segments);
    for s in 0..segments {
        let mut y = [0.0; 10];
        y[..5].copy_from_slice(&x);
        for i in 0..5 {
            y[5 + i] = x[i] + epsilon * u[i];
        }
        let start = (observable.eval(&mf.decode(&y[..5])) - observable.eval(&mf.decode(&y[5..]))).abs();
        let y = dopri5(pair, y, 0.0, &[tau], opts.tol, &mut h, |_, _| Ok(()))?;
        let end = (observable.eval(&mf.decode(&y[..5])) - observable.eval(&mf.decode(&y[5..]))).abs();
        if start > 0.0 && end > 0.0 {
            acc += (end / start).ln();
        }
        x.copy_from_slice(&y[..5]);
        let d: Vec<f64> = (0..5).map(|i| y[5 + i] - y[i]).collect();
        let norm = d.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numerical("twin separation collapsed".into()));
        }
        for i in 0..5 {
            u[i] = d[i] / norm;
        }
        history.push(((s + 1) as f64 * tau, acc / ((s + 1) as f64 * tau)));
    }
    let est = summarize(history, opts.t_end);
    if !est.converged || est.lambda < LYAPUNOV_FLOOR {
        return Err(Error::NoExponentialWindow(format!(
            "twin separation grows sub-exponentially (running rate {:.3e} ms⁻¹, drift {:.1e})",
            est.lambda, est.drift
        )));
    }
    Ok(est)
}

/// Exponent of the linearized flow at S = (−N/2, 0, 0), α = 0, from the
/// characteristic roots κ = [(ω_δ² + ω_B²) ± √((ω_δ² − ω_B²)² + 16ω_g²ω_δω_B)]/2
/// of ν² = −κ. Zero in the normal phase.
pub fn critical_point_exponent(p: &ModelParams) -> f64 {
    let (g, d, b) = (p.omega_g(), p.omega_delta(), p.omega_b());
    let disc = ((d * d - b * b).powi(2) + 16.0 * g * g * d * b).sqrt();
    let kappa = 0.5 * (d * d + b * b - disc);
    if kappa < 0.0 {
        (-kappa).sqrt()
    } else {
        0.0
    }
}

/// Chaos-map settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub field_ratios: Vec<f64>,
    /// Ascending bin edges in E/|E_c|.
    pub energy_edges: Vec<f64>,
    pub samples_per_field: usize,
    /// Boson amplitudes are drawn uniformly on the disk |α| ≤ √N·r_max.
    pub r_max: f64,
    pub seed: u64,
    pub lyapunov: LyapunovOptions,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            field_ratios: vec![0.1, 0.2, 0.4, 0.6, 0.8, 1.2, 1.6, 2.5, 4.0],
            energy_edges: (0..=24).map(|i| -3.0 + 0.25 * i as f64).collect(),
            samples_per_field: 400,
            r_max: 1.5,
            seed: 1,
            lyapunov: LyapunovOptions {
                t_end: 50.0,
                ..LyapunovOptions::default()
            },
        }
    }
}

/// One (field, energy-bin) cell of the chaos map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub field_ratio: f64,
    pub sqrt_bc_over_b: f64,
    pub energy_lo: f64,
    pub energy_hi: f64,
    /// Largest λ_L in the bin, `None` for an empty bin.
    pub lambda_max: Option<f64>,
    pub samples: usize,
}

impl ScanCell {
    pub fn energy_center(&self) -> f64 {
        0.5 * (self.energy_lo + self.energy_hi)
    }
}

/// Uniform spin direction and boson amplitude in the disk, in bare variables.
pub fn random_product_point(n_spins: usize, r_max: f64, rng: &mut impl Rng) -> PhasePoint {
    let j = n_spins as f64 / 2.0;
    let cos_t: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let sin_t = (1.0 - cos_t * cos_t).sqrt();
    let rad = (n_spins as f64).sqrt() * r_max * rng.random::<f64>().sqrt();
    let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    PhasePoint::new(j * sin_t * phi.cos(), j * sin_t * phi.sin(), j * cos_t, rad * ang.cos(), rad * ang.sin())
}

/// λ_L over random product states, binned by field and normalized energy.
pub fn phase_diagram_scan(p: &ModelParams, cfg: &ScanConfig) -> Result<Vec<ScanCell>> {
    if cfg.energy_edges.len() < 2 || cfg.energy_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("energy_edges", "need at least two ascending edges"));
    }
    let mut cells = Vec::new();
    for (fi, &ratio) in cfg.field_ratios.iter().enumerate() {
        let pf = p.clone().with_field_ratio(ratio)?;
        let mf = MeanField::new(&pf, Variables::Rescaled);
        let ec = pf.critical_energy().abs();
        let samples: Vec<(f64, f64)> = (0..cfg.samples_per_field)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((fi as u64) << 32) | i as u64);
                let x = random_product_point(pf.n_spins, cfg.r_max, &mut rng);
                let e = mf.energy(&x) / ec;
                Ok((e, lyapunov_max(&x, &mf, &cfg.lyapunov)?.lambda))
            })
            .collect::<Result<_>>()?;
        for w in cfg.energy_edges.windows(2) {
            let inside: Vec<f64> = samples
                .iter()
                .filter(|(e, _)| *e >= w[0] && *e < w[1])
                .map(|s| s.1)
                .collect();
            cells.push(ScanCell {
                field_ratio: ratio,
                sqrt_bc_over_b: (1.0 / ratio).sqrt(),
                energy_lo: w[0],
                energy_hi: w[1],
                lambda_max: inside.iter().copied().reduce(f64::max),
                samples: inside.len(),
            });
        }
    }
    Ok(cells)
}
