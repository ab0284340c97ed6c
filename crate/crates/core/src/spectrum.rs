//! Level statistics across the excited-state transition, thermal and
//! diagonal ensembles, and long-time distributions of M_z and n.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::model::StateVector;
use crate::mqc::{partial_trace_spins, renyi2};
use crate::propagate::EigenSystem;

/// Side of the critical energy a window covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyWindow {
    Below,
    Above,
}

impl EnergyWindow {
    pub fn tag(self) -> &'static str {
        match self {
            EnergyWindow::Below => "E<E_c",
            EnergyWindow::Above => "E>E_c",
        }
    }
}

/// Whether statistics are taken per parity sector or on the merged spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParityPolicy {
    Resolved,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacingOptions {
    /// Degree of the polynomial fitted to the level staircase.
    pub degree: usize,
    /// Fraction of levels dropped at each edge of a window.
    pub trim: f64,
    pub bins: usize,
    /// Histogram range is [0, max(s_max, largest spacing)].
    pub s_max: f64,
    pub min_levels: usize,
}

impl Default for SpacingOptions {
    fn default() -> Self {
        SpacingOptions {
            degree: 7,
            trim: 0.05,
            bins: 40,
            s_max: 4.0,
            min_levels: 50,
        }
    }
}

/// Probability density on fixed bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0.0; bins];
        for &s in samples {
            let i = (((s - lo) / width) as usize).min(bins - 1);
            counts[i] += 1.0;
        }
        let total = samples.len().max(1) as f64 * width;
        Histogram {
            edges,
            density: counts.into_iter().map(|c| c / total).collect(),
        }
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().zip(self.edges.windows(2)).map(|(d, w)| d * (w[1] - w[0])).sum()
    }
}

/// Kolmogorov–Smirnov distances for one unfolding degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeCheck {
    pub degree: usize,
    pub ks_wigner: f64,
    pub ks_poisson: f64,
}

/// Spacing statistics of one energy window in one parity sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingStats {
    pub window: EnergyWindow,
    /// Parity label, `None` for the merged spectrum.
    pub sector: Option<u8>,
    /// Levels left after edge trimming.
    pub levels: usize,
    /// False when fewer than `min_levels` remain; the statistics are then NaN.
    pub sufficient: bool,
    /// Degree actually used, lowered from the requested one if the fitted
    /// staircase was not monotone.
    pub degree: usize,
    pub spacings: Vec<f64>,
    pub histogram: Histogram,
    pub mean_ratio: f64,
    pub ks_wigner: f64,
    pub ks_poisson: f64,
    pub degree_sensitivity: Vec<DegreeCheck>,
}

/// Wigner surmise CDF, 1 − exp(−πs²/4).
pub fn wigner_cdf(s: f64) -> f64 {
    1.0 - (-std::f64::consts::PI * s * s / 4.0).exp()
}

pub fn poisson_cdf(s: f64) -> f64 {
    1.0 - (-s).exp()
}

/// sup |F_emp − F| over the sample.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Mean of min(g_i, g_{i+1}) / max(g_i, g_{i+1}) over consecutive gaps of
/// sorted levels. Needs no unfolding.
pub fn mean_gap_ratio(levels: &[f64]) -> f64 {
    let gaps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<f64> = gaps
        .windows(2)
        .filter(|g| g[0].max(g[1]) > 0.0)
        .map(|g| g[0].min(g[1]) / g[0].max(g[1]))
        .collect();
    ratios.iter().sum::<f64>() / ratios.len() as f64
}

/// Fitted staircase N(E) at each sorted level, with the degree used.
///
/// The degree is lowered until the fit increases across the levels.
pub fn unfold(levels: &[f64], degree: usize) -> Result<(Vec<f64>, usize)> {
    let n = levels.len();
    if n < 3 {
        return Err(Error::InsufficientStatistics { levels: n, required: 3 });
    }
    let (lo, hi) = (levels[0], levels[n - 1]);
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    if !(half > 0.0) {
        return Err(Error::Numerical("degenerate level window".into()));
    }
    let x: Vec<f64> = levels.iter().map(|e| (e - mid) / half).collect();
    let count: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
    for d in (1..=degree.min(n - 2)).rev() {
        let a = Array2::from_shape_fn((n, d + 1), |(i, k)| x[i].powi(k as i32));
        let c = linalg::least_squares(&a, &count)?;
        let eps: Vec<f64> = x.iter().map(|&v| c.iter().rev().fold(0.0, |acc, ck| acc * v + ck)).collect();
        if eps.windows(2).all(|w| w[1] > w[0]) {
            return Ok((eps, d));
        }
    }
    Err(Error::Numerical("no monotone staircase fit".into()))
}

/// Nearest-neighbour spacings of an unfolded sequence, scaled to unit mean.
pub fn normalized_spacings(unfolded: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = unfolded.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    s.into_iter().map(|v| v / mean).collect()
}

fn window_stats(
    window: EnergyWindow,
    sector: Option<u8>,
    mut levels: Vec<f64>,
    opts: &SpacingOptions,
) -> Result<SpacingStats> {
    levels.sort_by(f64::total_cmp);
    let cut = (opts.trim * levels.len() as f64).floor() as usize;
    let kept: Vec<f64> = levels[cut..levels.len() - cut].to_vec();
    if kept.len() < opts.min_levels {
        return Ok(SpacingStats {
            window,
            sector,
            levels: kept.len(),
            sufficient: false,
            degree: opts.degree,
            spacings: Vec::new(),
            histogram: Histogram::new(&[], 0.0, opts.s_max, opts.bins),
            mean_ratio: f64::NAN,
            ks_wigner: f64::NAN,
            ks_poisson: f64::NAN,
            degree_sensitivity: Vec::new(),
        });
    }
    let (eps, degree) = unfold(&kept, opts.degree)?;
    let spacings = normalized_spacings(&eps);
    let top = spacings.iter().copied().fold(opts.s_max, f64::max);
    let mut degree_sensitivity = Vec::new();
    for d in [opts.degree.saturating_sub(2).max(1), opts.degree + 2] {
        let (e, used) = unfold(&kept, d)?;
        let s = normalized_spacings(&e);
        degree_sensitivity.push(DegreeCheck {
            degree: used,
            ks_wigner: ks_distance(&s, wigner_cdf),
            ks_poisson: ks_distance(&s, poisson_cdf),
        });
    }
    Ok(SpacingStats {
        window,
        sector,
        levels: kept.len(),
        sufficient: true,
        degree,
        histogram: Histogram::new(&spacings, 0.0, top, opts.bins),
        mean_ratio: mean_gap_ratio(&kept),
        ks_wigner: ks_distance(&spacings, wigner_cdf),
        ks_poisson: ks_distance(&spacings, poisson_cdf),
        degree_sensitivity,
        spacings,
    })
}

/// Level sets labelled by parity sector.
pub type SectorLevels = Vec<(Option<u8>, Vec<f64>)>;

/// Statistics below and above `e_c` for each labelled level set.
pub fn level_statistics_of(levels: &SectorLevels, e_c: f64, policy: ParityPolicy, opts: &SpacingOptions) -> Result<Vec<SpacingStats>> {
    let sets: SectorLevels = match policy {
        ParityPolicy::Resolved => levels.clone(),
        ParityPolicy::Mixed => vec![(None, levels.iter().flat_map(|(_, e)| e.iter().copied()).collect())],
    };
    let mut out = Vec::new();
    for (sector, e) in sets {
        for window in [EnergyWindow::Below, EnergyWindow::Above] {
            let part: Vec<f64> = e
                .iter()
                .copied()
                .filter(|&x| match window {
                    EnergyWindow::Below => x < e_c,
                    EnergyWindow::Above => x > e_c,
                })
                .collect();
            out.push(window_stats(window, sector, part, opts)?);
        }
    }
    Ok(out)
}

fn sector_levels(es: &EigenSystem) -> SectorLevels {
    es.sectors().iter().map(|s| (s.parity, s.energies.clone())).collect()
}

/// Spacing statistics of every level of the eigensystem.
pub fn level_statistics(es: &EigenSystem, e_c: f64, policy: ParityPolicy, opts: &SpacingOptions) -> Result<Vec<SpacingStats>> {
    level_statistics_of(&sector_levels(es), e_c, policy, opts)
}

/// Levels of `coarse` that the larger cutoff `fine` reproduces, per sector.
///
/// Truncation errors grow with energy, so each sector keeps the longest
/// prefix of its ascending spectrum whose levels move by less than `tol`
/// times the local mean spacing.
pub fn converged_levels(coarse: &EigenSystem, fine: &EigenSystem, tol: f64) -> Result<SectorLevels> {
    if coarse.sectors().len() != fine.sectors().len() {
        return Err(Error::Contract("eigensystems have different sector layouts".into()));
    }
    Ok(coarse
        .sectors()
        .iter()
        .zip(fine.sectors())
        .map(|(a, b)| {
            let (ea, eb) = (&a.energies, &b.energies);
            let n = ea.len().min(eb.len());
            let keep = (0..n)
                .find(|&i| {
                    let lo = i.saturating_sub(2);
                    let hi = (i + 2).min(n - 1);
                    let spacing = (ea[hi] - ea[lo]) / (hi - lo).max(1) as f64;
                    (ea[i] - eb[i]).abs() > tol * spacing
                })
                .unwrap_or(n);
            (a.parity, ea[..keep].to_vec())
        })
        .collect())
}

/// Sample mean of a statistic and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub mean: f64,
    pub stderr: f64,
}

fn reference(values: &[f64]) -> Reference {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Reference {
        mean,
        stderr: (var / n).sqrt(),
    }
}

/// ⟨r⟩ of real symmetric Gaussian matrices (central half of each spectrum).
pub fn goe_gap_ratio(matrices: usize, dim: usize, seed: u64) -> Result<Reference> {
    let values = (0..matrices)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut a = Array2::<f64>::zeros((dim, dim));
            for r in 0..dim {
                for c in 0..=r {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    let x = if r == c { x * std::f64::consts::SQRT_2 } else { x };
                    a[[r, c]] = x;
                    a[[c, r]] = x;
                }
            }
            let (e, _) = linalg::symmetric_eigen(a, false)?;
            Ok(mean_gap_ratio(&e[dim / 4..3 * dim / 4]))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(reference(&values))
}

/// ⟨r⟩ of uncorrelated levels (sorted uniform samples).
pub fn poisson_gap_ratio(spectra: usize, len: usize, seed: u64) -> Reference {
    let values: Vec<f64> = (0..spectra)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut e: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
            e.sort_by(f64::total_cmp);
            mean_gap_ratio(&e)
        })
        .collect();
    reference(&values)
}

/// Marginal distributions of M_z (index k = m + N/2) and of n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    pub p_m: Vec<f64>,
    pub p_n: Vec<f64>,
}

impl Distributions {
    pub fn m_values(&self) -> Vec<f64> {
        let j = (self.p_m.len() - 1) as f64 / 2.0;
        (0..self.p_m.len()).map(|k| k as f64 - j).collect()
    }

    /// Larger of the two total-variation distances.
    pub fn distance(&self, other: &Distributions) -> f64 {
        total_variation(&self.p_m, &other.p_m).max(total_variation(&self.p_n, &other.p_n))
    }
}

/// ½ Σ |p − q|.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Reduced spin matrix (S_z basis) and boson populations of Σ_j w_j |E_j⟩⟨E_j|,
/// skipping weights below `floor`.
fn mixture_marginals(es: &EigenSystem, weights: &[Vec<f64>], floor: f64) -> Result<(Array2<f64>, Vec<f64>)> {
    if !es.has_vectors() {
        return Err(Error::Contract("eigensystem was computed without eigenvectors".into()));
    }
    let (nb, ns) = es.dims();
    let mut rho = Array2::<f64>::zeros((ns, ns));
    let mut p_n = vec![0.0; nb];
    for (s, w) in es.sectors().iter().zip(weights) {
        let v = s.vectors.as_ref().expect("checked");
        let picked: Vec<usize> = (0..w.len()).filter(|&j| w[j] > floor).collect();
        // rows sqrt(w_j)·ψ_j reshaped to (n, r) and stacked
        let mut stack = Array2::<f64>::zeros((picked.len() * nb, ns));
        for (row, &j) in picked.iter().enumerate() {
            let sw = w[j].sqrt();
            for (a, &i) in s.indices.iter().enumerate() {
                let x = sw * v[[j, a]];
                stack[[row * nb + i / ns, i % ns]] = x;
                p_n[i / ns] += x * x;
            }
        }
        rho = rho + stack.t().dot(&stack);
    }
    let rho = match es.frame() {
        Some(xb) => xb.t().dot(&rho).dot(xb),
        None => rho,
    };
    Ok((rho, p_n))
}

/// Canonical ensemble whose mean energy matches a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnsemble {
    pub beta: f64,
    pub target_energy: f64,
    pub energy: f64,
    /// |⟨H⟩_β − target| / max(|target|, 1).
    pub residual: f64,
    /// The target lies above the infinite-temperature mean, so β < 0.
    pub negative_branch: bool,
    /// Boltzmann weights per sector.
    pub weights: Vec<Vec<f64>>,
}

impl ThermalEnsemble {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }
}

fn boltzmann(es: &EigenSystem, beta: f64) -> (Vec<Vec<f64>>, f64) {
    let all = es.energies();
    let shift = if beta >= 0.0 { all[0] } else { *all.last().expect("non-empty") };
    let mut z = 0.0;
    let mut e = 0.0;
    let w: Vec<Vec<f64>> = es
        .sectors()
        .iter()
        .map(|s| {
            s.energies
                .iter()
                .map(|&x| {
                    let b = (-beta * (x - shift)).exp();
                    z += b;
                    e += b * x;
                    b
                })
                .collect()
        })
        .collect();
    (w.into_iter().map(|v| v.into_iter().map(|b| b / z).collect()).collect(), e / z)
}

/// Solves ⟨H⟩_β = `target` by bracketing and bisection in β.
pub fn thermal_ensemble(es: &EigenSystem, target: f64) -> Result<ThermalEnsemble> {
    let all = es.energies();
    let (e0, e1) = (all[0], *all.last().expect("non-empty"));
    if !(target > e0 && target < e1) {
        return Err(Error::param(
            "target_energy",
            format!("{target} lies outside the spectral range [{e0}, {e1}]"),
        ));
    }
    let mean_at = |b: f64| boltzmann(es, b).1;
    let infinite = mean_at(0.0);
    let negative = target > infinite;
    let sign = if negative { -1.0 } else { 1.0 };
    // ⟨H⟩ decreases with β; search along the branch that crosses the target
    let mut lo = 0.0;
    let mut hi = sign / (e1 - e0);
    while sign * (mean_at(hi) - target) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi.abs() > 1e12 {
            return Err(Error::Numerical("could not bracket the inverse temperature".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if sign * (mean_at(mid) - target) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let (weights, energy) = boltzmann(es, beta);
    let residual = (energy - target).abs() / target.abs().max(1.0);
    if residual > 1e-8 {
        return Err(Error::Numerical(format!("energy matching stalled at residual {residual:.2e}")));
    }
    Ok(ThermalEnsemble {
        beta,
        target_energy: target,
        energy,
        residual,
        negative_branch: negative,
        weights,
    })
}

/// Reduced spin density matrix (S_z basis) of the thermal state.
pub fn thermal_reduced_spin(es: &EigenSystem, th: &ThermalEnsemble) -> Result<Array2<f64>> {
    Ok(mixture_marginals(es, &th.weights, 1e-16)?.0)
}

/// Thermal S₂(ρ_{L_A}) for each subsystem size.
pub fn thermal_renyi_profile(es: &EigenSystem, th: &ThermalEnsemble, sizes: &[usize]) -> Result<Vec<(usize, f64)>> {
    let rho = thermal_reduced_spin(es, th)?.mapv(|x| C64::new(x, 0.0));
    let n = es.dims().1 - 1;
    sizes
        .iter()
        .map(|&l| Ok((l, renyi2(partial_trace_spins(rho.view(), n, l)?.view()))))
        .collect()
}

/// Dephased ensemble Σ |c_j|² |E_j⟩⟨E_j| of an initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalEnsemble {
    pub weights: Vec<Vec<f64>>,
    pub energy: f64,
    pub distributions: Distributions,
}

pub fn diagonal_ensemble(es: &EigenSystem, psi0: &StateVector) -> Result<DiagonalEnsemble> {
    let c = es.coefficients(psi0)?;
    let weights = c.weights();
    let energy = es.mean_energy(&c);
    let (rho, p_n) = mixture_marginals(es, &weights, 0.0)?;
    Ok(DiagonalEnsemble {
        weights,
        energy,
        distributions: Distributions {
            p_m: rho.diag().to_vec(),
            p_n,
        },
    })
}

/// Instantaneous P(M_z), P(n) averaged over the grid.
pub fn time_averaged_distributions(es: &EigenSystem, psi0: &StateVector, times: &[f64]) -> Result<Distributions> {
    if times.is_empty() {
        return Err(Error::param("times", "averaging window has no grid points"));
    }
    let c = es.coefficients(psi0)?;
    let (nb, ns) = es.dims();
    let per_time: Vec<(Vec<f64>, Vec<f64>)> = times
        .par_iter()
        .map(|&t| {
            let psi = es.state_at(&c, t);
            let mut p_m = vec![0.0; ns];
            let mut p_n = vec![0.0; nb];
            for (i, z) in psi.iter().enumerate() {
                let w = z.norm_sqr();
                p_m[i % ns] += w;
                p_n[i / ns] += w;
            }
            (p_m, p_n)
        })
        .collect();
    let k = times.len() as f64;
    let mut out = Distributions {
        p_m: vec![0.0; ns],
        p_n: vec![0.0; nb],
    };
    for (pm, pn) in per_time {
        out.p_m.iter_mut().zip(pm).for_each(|(a, b)| *a += b / k);
        out.p_n.iter_mut().zip(pn).for_each(|(a, b)| *a += b / k);
    }
    Ok(out)
}
