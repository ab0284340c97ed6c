//! Truncated-Wigner ensembles: phase-space sampling of product initial
//! states, classical evolution of every sample and reconstruction of
//! quantum moments at sizes far beyond exact diagonalization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{dopri5, MeanField, PhasePoint, Tolerance, Variables};
use crate::error::{Error, Result};
use crate::fit::{extract_growth_rate, ExponentFit, FitWindowPolicy};
use crate::model::{BosonState, InitialState, ModelParams};

/// Number of jackknife blocks used for standard errors.
pub const DEFAULT_BLOCKS: usize = 20;

/// Size above which the rescaled variables are used by default.
pub const RESCALE_ABOVE: usize = 1000;

/// Phase-space samples of one initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerEnsemble {
    pub n_spins: usize,
    pub seed: u64,
    pub recipe: InitialState,
    pub points: Vec<PhasePoint>,
}

impl WignerEnsemble {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Short label of the sampling recipe, written into run manifests.
    pub fn tag(&self) -> String {
        let pol = match self.recipe.polarization.sign() < 0.0 {
            true => "down",
            false => "up",
        };
        let boson = match self.recipe.boson {
            BosonState::Fock(_) => "vacuum".to_string(),
            BosonState::Coherent { re, im } => format!("coherent({re},{im})"),
        };
        format!(
            "gaussian-spin(theta={},phi={},{pol})+{boson}",
            self.recipe.axis.theta, self.recipe.axis.phi
        )
    }
}

/// Draws `count` samples of a spin coherent state ⊗ vacuum or boson
/// coherent state.
///
/// The boson quadratures are Gaussian with variance 1/4 around the coherent
/// amplitude. The spin keeps its longitudinal component at ±N/2 and gets
/// Gaussian transverse components of variance N/4. Sample i uses its own
/// ChaCha stream, so the ensemble does not depend on the thread count.
pub fn sample_initial(recipe: &InitialState, n_spins: usize, count: usize, seed: u64) -> Result<WignerEnsemble> {
    if n_spins == 0 {
        return Err(Error::param("n_spins", "must be at least 1"));
    }
    if count < 2 {
        return Err(Error::param("trajectories", format!("need at least 2 samples, got {count}")));
    }
    let (ar, ai) = match recipe.boson {
        BosonState::Fock(0) => (0.0, 0.0),
        BosonState::Fock(n) => {
            return Err(Error::param(
                "boson",
                format!("Fock state |{n}⟩ has no Gaussian Wigner function; only vacuum and coherent states are sampled"),
            ))
        }
        BosonState::Coherent { re, im } => (re, im),
    };
    let n = n_spins as f64;
    let boson = Normal::new(0.0, 0.5).expect("finite");
    let spin = Normal::new(0.0, n.sqrt() / 2.0).expect("finite");
    let (st, ct) = recipe.axis.theta.sin_cos();
    let (sp, cp) = recipe.axis.phi.sin_cos();
    let long = [st * cp, st * sp, ct].map(|c| c * recipe.polarization.sign() * n / 2.0);
    let e1 = [ct * cp, ct * sp, -st];
    let e2 = [-sp, cp, 0.0];
    let points = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (u, v) = (spin.sample(&mut rng), spin.sample(&mut rng));
            let (br, bi) = (boson.sample(&mut rng), boson.sample(&mut rng));
            let s: [f64; 3] = std::array::from_fn(|k| long[k] + u * e1[k] + v * e2[k]);
            PhasePoint::new(s[0], s[1], s[2], ar + br, ai + bi)
        })
        .collect();
    Ok(WignerEnsemble {
        n_spins,
        seed,
        recipe: *recipe,
        points,
    })
}

/// Observables whose moments are reconstructed from the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwaObservable {
    /// X = (a + a†)/2.
    Quadrature,
    Sy,
    /// n̂ = a†a, whose Weyl symbol is |α|² − 1/2.
    Number,
}

impl TwaObservable {
    pub const ALL: [TwaObservable; 3] = [TwaObservable::Quadrature, TwaObservable::Sy, TwaObservable::Number];

    pub fn tag(self) -> &'static str {
        match self {
            TwaObservable::Quadrature => "X",
            TwaObservable::Sy => "S_y",
            TwaObservable::Number => "n",
        }
    }

    /// Weyl symbol evaluated on a sample.
    pub fn symbol(self, x: &PhasePoint) -> f64 {
        match self {
            TwaObservable::Quadrature => x.alpha_re,
            TwaObservable::Sy => x.sy,
            TwaObservable::Number => x.occupation() - 0.5,
        }
    }

    /// Added to the sample variance of the symbol to give the quantum
    /// variance: the symbol of n̂² is (|α|² − 1/2)² − 1/4.
    pub fn variance_correction(self) -> f64 {
        match self {
            TwaObservable::Number => -0.25,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwaOptions {
    pub variables: Variables,
    pub tol: Tolerance,
    pub blocks: usize,
    /// Largest energy drift of any trajectory, relative to max(|E₀|, ω_B N/2).
    pub energy_tolerance: f64,
}

impl TwaOptions {
    /// Rescaled variables above [`RESCALE_ABOVE`] spins, bare below.
    pub fn for_size(n_spins: usize) -> Self {
        TwaOptions {
            variables: if n_spins > RESCALE_ABOVE {
                Variables::Rescaled
            } else {
                Variables::Bare
            },
            tol: Tolerance::default(),
            blocks: DEFAULT_BLOCKS,
            energy_tolerance: 1e-6,
        }
    }
}

/// Ensemble mean and quantum variance of one observable on the time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub observable: TwaObservable,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub stderr_mean: Vec<f64>,
    pub stderr_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub trajectories: usize,
    pub blocks: usize,
    pub series: Vec<ObservableSeries>,
    pub max_energy_drift: f64,
}

impl MomentSeries {
    pub fn get(&self, obs: TwaObservable) -> &ObservableSeries {
        self.series
            .iter()
            .find(|s| s.observable == obs)
            .expect("every observable is reconstructed")
    }
}

const NOBS: usize = TwaObservable::ALL.len();

/// Symbols of every observable along one trajectory, plus its energy drift.
fn run_trajectory(
    x0: &PhasePoint,
    mf: &MeanField,
    grid: &[f64],
    tol: Tolerance,
    scale: f64,
) -> Result<(Vec<[f64; NOBS]>, f64)> {
    let mut values = Vec::with_capacity(grid.len());
    let mut h = 0.0;
    let e0 = mf.energy(x0);
    let mut drift = 0.0f64;
    dopri5(|y| mf.rhs(y), mf.encode(x0), 0.0, grid, tol, &mut h, |_, y| {
        let x = mf.decode(y);
        drift = drift.max((mf.energy(&x) - e0).abs() / scale.max(e0.abs()));
        values.push(TwaObservable::ALL.map(|o| o.symbol(&x)));
        Ok(())
    })?;
    Ok((values, drift))
}

/// Evolves every sample with the mean-field flow and reduces the ensemble
/// to means and variances of X, S_y and n̂ with jackknife errors.
///
/// Samples are reduced block by block in index order, so the totals are
/// bit-identical for any number of worker threads.
pub fn evolve_ensemble(ens: &WignerEnsemble, p: &ModelParams, grid: &[f64], opts: &TwaOptions) -> Result<MomentSeries> {
    p.validate()?;
    if p.n_spins != ens.n_spins {
        return Err(Error::Contract(format!(
            "ensemble sampled for N = {} but parameters have N = {}",
            ens.n_spins, p.n_spins
        )));
    }
    if grid.is_empty() || grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("times", "grid must be non-empty, non-negative and strictly ascending"));
    }
    let r = ens.len();
    let blocks = opts.blocks.clamp(2, r);
    let mf = MeanField::new(p, opts.variables);
    let scale = p.omega_b() * p.n_spins as f64 / 2.0;
    let nt = grid.len();
    // offsets keep the sums of squares well conditioned at large N
    let (shift, _) = run_trajectory(&ens.points[0], &mf, grid, opts.tol, scale)?;
    let mut s1 = vec![vec![[0.0; NOBS]; nt]; blocks];
    let mut s2 = vec![vec![[0.0; NOBS]; nt]; blocks];
    let mut counts = vec![0usize; blocks];
    let mut max_drift = 0.0f64;
    for b in 0..blocks {
        let (lo, hi) = (b * r / blocks, (b + 1) * r / blocks);
        let runs: Vec<Result<(Vec<[f64; NOBS]>, f64)>> = ens.points[lo..hi]
            .par_iter()
            .map(|x0| run_trajectory(x0, &mf, grid, opts.tol, scale))
            .collect();
        for (i, run) in runs.into_iter().enumerate() {
            let (values, drift) = run?;
            if drift > opts.energy_tolerance {
                return Err(Error::Contract(format!(
                    "trajectory {} drifted in energy by {drift:.2e} (limit {:.1e})",
                    lo + i,
                    opts.energy_tolerance
                )));
            }
            max_drift = max_drift.max(drift);
            for (t, v) in values.iter().enumerate() {
                for o in 0..NOBS {
                    let d = v[o] - shift[t][o];
                    s1[b][t][o] += d;
                    s2[b][t][o] += d * d;
                }
            }
        }
        counts[b] = hi - lo;
    }
    let moments = |n: f64, a: f64, q: f64| -> (f64, f64) {
        let m = a / n;
        (m, (q - n * m * m) / (n - 1.0))
    };
    let mut series: Vec<ObservableSeries> = TwaObservable::ALL
        .iter()
        .map(|&o| ObservableSeries {
            observable: o,
            mean: vec![0.0; nt],
            variance: vec![0.0; nt],
            stderr_mean: vec![0.0; nt],
            stderr_var: vec![0.0; nt],
        })
        .collect();
    let bf = blocks as f64;
    for t in 0..nt {
        for (o, out) in series.iter_mut().enumerate() {
            let a: f64 = (0..blocks).map(|b| s1[b][t][o]).sum();
            let q: f64 = (0..blocks).map(|b| s2[b][t][o]).sum();
            let (m, v) = moments(r as f64, a, q);
            let leave_out: Vec<(f64, f64)> = (0..blocks)
                .map(|b| moments((r - counts[b]) as f64, a - s1[b][t][o], q - s2[b][t][o]))
                .collect();
            let jack = |f: &dyn Fn(&(f64, f64)) -> f64| -> f64 {
                let avg = leave_out.iter().map(f).sum::<f64>() / bf;
                ((bf - 1.0) / bf * leave_out.iter().map(|x| (f(x) - avg).powi(2)).sum::<f64>()).sqrt()
            };
            out.mean[t] = m + shift[t][o];
            out.variance[t] = v + out.observable.variance_correction();
            out.stderr_mean[t] = jack(&|x| x.0);
            out.stderr_var[t] = jack(&|x| x.1);
        }
    }
    Ok(MomentSeries {
        times: grid.to_vec(),
        trajectories: r,
        blocks,
        series,
        max_energy_drift: max_drift,
    })
}

/// Growth rate of the ensemble variance of one observable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwaExponent {
    pub observable: TwaObservable,
    pub fit: Option<ExponentFit>,
    /// Why no window was found, when `fit` is empty.
    pub reason: Option<String>,
}

/// Fits e^{λ_Q t} to the ensemble-mean variance of each observable with the
/// same window policy as the exact FOTOC series.
pub fn extract_exponents(m: &MomentSeries, policy: &FitWindowPolicy) -> Result<Vec<TwaExponent>> {
    m.series
        .iter()
        .map(|s| match extract_growth_rate(&m.times, &s.variance, policy) {
            Ok(f) => Ok(TwaExponent {
                observable: s.observable,
                fit: Some(f),
                reason: None,
            }),
            Err(Error::NoExponentialWindow(why)) => Ok(TwaExponent {
                observable: s.observable,
                fit: None,
                reason: Some(why),
            }),
            Err(e) => Err(e),
        })
        .collect()
}
