//! Multiple-quantum intensities, the purity decomposition of the
//! spin-phonon entanglement, collective-spin partial traces and the FOTOC
//! entropy estimators built from them.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};
use crate::model::{spin, BlochAxis, DensityMatrix, ModelParams, StateVector};
use crate::propagate::{Generator, Propagator};

/// Populations below this count as unoccupied when sizing Fourier grids.
pub const OCCUPIED_THRESHOLD: f64 = 1e-12;

/// Intensities I_M for offsets M = −M_max..=M_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MqcSpectrum {
    pub generator: String,
    pub m_max: usize,
    pub intensities: Vec<f64>,
    pub t_ms: Option<f64>,
}

impl MqcSpectrum {
    pub fn offsets(&self) -> impl Iterator<Item = i64> + '_ {
        let m = self.m_max as i64;
        -m..=m
    }

    /// I_M, zero outside the stored range.
    pub fn intensity(&self, offset: i64) -> f64 {
        let i = offset + self.m_max as i64;
        if i < 0 {
            return 0.0;
        }
        self.intensities.get(i as usize).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.intensities.iter().sum()
    }

    /// max |I_M − I_{−M}|.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.intensities.len();
        (0..n)
            .map(|i| (self.intensities[i] - self.intensities[n - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_intensity(&self) -> f64 {
        self.intensities.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest blockwise difference against another spectrum.
    pub fn max_difference(&self, other: &MqcSpectrum) -> f64 {
        let m = self.m_max.max(other.m_max) as i64;
        (-m..=m)
            .map(|k| (self.intensity(k) - other.intensity(k)).abs())
            .fold(0.0, f64::max)
    }
}

/// A generator with an integer-spaced spectrum on one factor.
#[derive(Debug, Clone, Copy)]
enum Graded {
    Spin(BlochAxis),
    Number,
}

fn graded(generator: Generator) -> Result<Graded> {
    match generator {
        Generator::SpinAxis(a) => Ok(Graded::Spin(a)),
        Generator::Sy => Ok(Graded::Spin(BlochAxis::Y)),
        Generator::Number => Ok(Graded::Number),
        Generator::Quadrature => Err(Error::UnsupportedGenerator(
            "X = (a + a†)/2 has a continuous-like spectrum without integer spacing".into(),
        )),
    }
}

fn support(pops: &[f64]) -> usize {
    pops.iter().rposition(|&p| p > OCCUPIED_THRESHOLD).unwrap_or(0)
}

/// I_M = Σ_j p_{j+M} p_j for a population vector in the generator eigenbasis.
fn autocorrelation(p: &[f64], m_max: usize) -> Vec<f64> {
    let m = m_max as i64;
    (-m..=m)
        .map(|off| {
            (0..p.len() as i64)
                .filter_map(|j| {
                    let k = j + off;
                    (k >= 0 && (k as usize) < p.len()).then(|| p[k as usize] * p[j as usize])
                })
                .sum()
        })
        .collect()
}

/// Populations of the S_r eigenstates |m_r⟩ (ascending m) for a spin density matrix.
pub fn axis_populations(rho_spin: ArrayView2<C64>, rotation: ArrayView2<C64>) -> Vec<f64> {
    let rr = rho_spin.dot(&rotation);
    (0..rotation.ncols())
        .map(|j| {
            rotation
                .column(j)
                .iter()
                .zip(rr.column(j))
                .map(|(u, v)| (u.conj() * v).re)
                .sum()
        })
        .collect()
}

/// Rotation matrix whose columns are the S_r eigenvectors, reusing a cached S_x basis.
fn rotation_with(n_spins: usize, x_basis: &Array2<f64>, axis: BlochAxis) -> Array2<C64> {
    let d = spin::wigner_d_from_x_basis(n_spins, x_basis, axis.theta);
    let ms = spin::projections(n_spins);
    Array2::from_shape_fn(d.raw_dim(), |(a, b)| C64::from_polar(1.0, -axis.phi * ms[a]) * d[[a, b]])
}

/// Intensities of a pure state; I_M reduces to the autocorrelation of the
/// generator-basis populations.
pub fn block_decompose_pure(psi: &StateVector, generator: Generator) -> Result<MqcSpectrum> {
    let (pops, m_max) = match graded(generator)? {
        Graded::Spin(axis) => {
            let r = spin::rotation(psi.n_spins(), axis);
            (axis_populations(psi.reduced_spin().view(), r.view()), psi.n_spins())
        }
        Graded::Number => {
            let p = psi.boson_populations();
            let m = support(&p);
            (p, m)
        }
    };
    Ok(MqcSpectrum {
        generator: generator.tag(),
        m_max,
        intensities: autocorrelation(&pops, m_max),
        t_ms: None,
    })
}

/// I_M as the squared Frobenius norm of the M-th coherence block of ρ in
/// the generator eigenbasis.
pub fn block_decompose(rho: &DensityMatrix, generator: Generator) -> Result<MqcSpectrum> {
    let (nb, ns) = rho.dims();
    let (rotated, m_max, on_spin) = match graded(generator)? {
        Graded::Spin(axis) => {
            let r = spin::rotation(rho.n_spins(), axis);
            (Some(rho.rotate_spin(linalg::adjoint(r.view()).view())), rho.n_spins(), true)
        }
        Graded::Number => {
            let pops: Vec<f64> = rho.reduced_boson().diag().iter().map(|z| z.re).collect();
            (None, support(&pops), false)
        }
    };
    let r = rotated.as_ref().unwrap_or(rho);
    let mut out = vec![0.0; 2 * m_max + 1];
    for ((i, j), z) in r.matrix().indexed_iter() {
        let (ni, ki) = (i / ns, i % ns);
        let (nj, kj) = (j / ns, j % ns);
        let off = if on_spin {
            ki as i64 - kj as i64
        } else {
            ni as i64 - nj as i64
        };
        if let Some(slot) = usize::try_from(off + m_max as i64).ok().and_then(|k| out.get_mut(k)) {
            *slot += z.norm_sqr();
        }
    }
    debug_assert!(nb * ns == r.matrix().nrows());
    Ok(MqcSpectrum {
        generator: generator.tag(),
        m_max,
        intensities: out,
        t_ms: None,
    })
}

/// Discrete Fourier coefficients c_M = (1/K) Σ_k F(φ_k) e^{−iMφ_k} of FOTOC
/// samples on the grid φ_k = 2πk/K.
pub fn fourier_coefficients(fidelity: &[f64], m_max: usize) -> Vec<C64> {
    let k = fidelity.len() as f64;
    let m = m_max as i64;
    (-m..=m)
        .map(|off| {
            fidelity
                .iter()
                .enumerate()
                .map(|(j, &f)| C64::from_polar(f, -(off as f64) * 2.0 * PI * j as f64 / k))
                .sum::<C64>()
                / k
        })
        .collect()
}

/// Echo fidelities F(t, φ_k) on the equally spaced grid φ_k = 2πk/K.
pub fn fotoc_angle_scan<P: Propagator + ?Sized>(
    psi0: &StateVector,
    psi_t: &StateVector,
    prop: &P,
    p: &ModelParams,
    generator: Generator,
    t: f64,
    points: usize,
) -> Result<Vec<f64>> {
    let spectrum = generator.local_spectrum(p)?;
    (0..points)
        .into_par_iter()
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / points as f64;
            Ok(prop.echo_overlap(psi0, psi_t, t, &spectrum.unitary(phi))?.norm_sqr())
        })
        .collect()
}

/// Intensities recovered from FOTOCs F(t, φ) = Σ_M I_M e^{iMφ} by a discrete
/// Fourier transform over the rotation angle.
///
/// `points` defaults to 2·M_max + 1 and smaller grids are refused. M_max is N
/// for a spin axis and the occupied Fock support of ψ(t) for n̂.
pub fn intensities_via_fourier<P: Propagator + ?Sized>(
    psi0: &StateVector,
    prop: &P,
    p: &ModelParams,
    generator: Generator,
    t: f64,
    points: Option<usize>,
) -> Result<MqcSpectrum> {
    let kind = graded(generator)?;
    let mut psi_t = None;
    prop.propagate(psi0, &[t], &mut |_, s| {
        psi_t = Some(s.clone());
        Ok(())
    })?;
    let psi_t = psi_t.ok_or_else(|| Error::Contract("propagator produced no state".into()))?;
    let m_max = match kind {
        Graded::Spin(_) => p.n_spins,
        Graded::Number => support(&psi_t.boson_populations()),
    };
    let required = 2 * m_max + 1;
    let points = points.unwrap_or(required);
    if points < required {
        return Err(Error::Aliasing {
            points,
            m_max,
            required,
        });
    }
    let f = fotoc_angle_scan(psi0, &psi_t, prop, p, generator, t, points)?;
    let coeffs = fourier_coefficients(&f, m_max);
    Ok(MqcSpectrum {
        generator: generator.tag(),
        m_max,
        intensities: coeffs.iter().map(|c| c.re).collect(),
        t_ms: Some(t),
    })
}

/// The four terms of a pure bipartite state ψ[x, y] in a fixed product basis:
/// Tr ρ_x² = I₀(x) + I₀(y) − D + C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BipartiteTerms {
    /// Σ_x P(x)², the zero-offset intensity for the left grading.
    pub i0_left: f64,
    /// Σ_y P(y)², the zero-offset intensity for the right grading.
    pub i0_right: f64,
    /// Σ |ψ[x,y]|⁴.
    pub d_diag: f64,
    /// Σ_{x≠x', y≠y'} ψ[x,y] ψ*[x',y] ψ[x',y'] ψ*[x,y'].
    pub c_off: f64,
}

/// Evaluates [`BipartiteTerms`]; the coherence sum is built from the left
/// reduced matrix ρ_x[x,x'] = Σ_y ψ[x,y]ψ*[x',y].
pub fn bipartite_terms(psi: ArrayView2<C64>) -> BipartiteTerms {
    let pops = psi.mapv(|z| z.norm_sqr());
    let p_left = pops.sum_axis(Axis(1));
    let p_right = pops.sum_axis(Axis(0));
    let i0_left = p_left.iter().map(|p| p * p).sum();
    let i0_right = p_right.iter().map(|p| p * p).sum();
    let d_diag = pops.iter().map(|p| p * p).sum();
    let rho_left = psi.dot(&psi.t().mapv(|z| z.conj()));
    let overlap = pops.dot(&pops.t());
    let nx = psi.nrows();
    let mut c_off = 0.0;
    for x in 0..nx {
        for x2 in 0..nx {
            if x != x2 {
                // Σ_{y≠y'} ψ[x,y]ψ*[x',y]ψ[x',y']ψ*[x,y'] = |ρ_x[x,x']|² − Σ_y P[x,y]P[x',y]
                c_off += rho_left[[x, x2]].norm_sqr() - overlap[[x, x2]];
            }
        }
    }
    BipartiteTerms {
        i0_left,
        i0_right,
        d_diag,
        c_off,
    }
}

/// Tr ρ_ph² = I₀^{S_r} + I₀^{n̂} − D_diag + C_off with the directly computed purity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityDecomposition {
    pub i0_spin: f64,
    pub i0_boson: f64,
    pub d_diag: f64,
    pub c_off: f64,
    /// Tr ρ_ph² from the phonon reduced density matrix.
    pub direct_purity: f64,
    pub axis: BlochAxis,
}

impl PurityDecomposition {
    pub fn reconstructed(&self) -> f64 {
        self.i0_spin + self.i0_boson - self.d_diag + self.c_off
    }

    pub fn residual(&self) -> f64 {
        self.reconstructed() - self.direct_purity
    }

    /// −log I₀^{S_r}.
    pub fn sf_spin(&self) -> f64 {
        -self.i0_spin.ln()
    }

    /// −log I₀^{n̂}.
    pub fn sf_boson(&self) -> f64 {
        -self.i0_boson.ln()
    }

    /// −log(I₀^{S_r} + I₀^{n̂}).
    pub fn sf_spin_boson(&self) -> f64 {
        -(self.i0_spin + self.i0_boson).ln()
    }

    pub fn s2(&self) -> f64 {
        -self.direct_purity.ln()
    }
}

fn purity(m: ArrayView2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// −log Tr ρ² for a (reduced) density matrix.
pub fn renyi2(rho: ArrayView2<C64>) -> f64 {
    -purity(rho).ln()
}

/// Decomposition for a pure state with the spin written in the S_r eigenbasis.
pub fn purity_decomposition(psi: &StateVector, axis: BlochAxis) -> PurityDecomposition {
    let r = spin::rotation(psi.n_spins(), axis);
    purity_decomposition_with(psi, axis, r.view())
}

fn purity_decomposition_with(psi: &StateVector, axis: BlochAxis, rotation: ArrayView2<C64>) -> PurityDecomposition {
    // ψ_r[m, n] = Σ_k R*[k, m] ψ[n, k]
    let spin_major = linalg::adjoint(rotation).dot(&psi.as_matrix().t());
    let t = bipartite_terms(spin_major.view());
    PurityDecomposition {
        i0_spin: t.i0_left,
        i0_boson: t.i0_right,
        d_diag: t.d_diag,
        c_off: t.c_off,
        direct_purity: purity(psi.reduced_boson().view()),
        axis,
    }
}

/// Decomposition evaluated element by element from a density matrix. The
/// identity only holds for pure global states, which is checked.
pub fn purity_decomposition_density(rho: &DensityMatrix, axis: BlochAxis) -> Result<PurityDecomposition> {
    let p = rho.purity();
    if (p - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "purity decomposition needs a pure global state (Tr ρ² = {p})"
        )));
    }
    let r = spin::rotation(rho.n_spins(), axis);
    let rr = rho.rotate_spin(linalg::adjoint(r.view()).view());
    let (nb, ns) = rr.dims();
    let mut i0_spin = 0.0;
    let mut i0_boson = 0.0;
    let mut d_diag = 0.0;
    let mut c_off = ZERO;
    for n in 0..nb {
        for n2 in 0..nb {
            for m in 0..ns {
                i0_spin += rr.at(n, m, n2, m).norm_sqr();
            }
        }
        for m in 0..ns {
            for m2 in 0..ns {
                i0_boson += rr.at(n, m, n, m2).norm_sqr();
            }
            d_diag += rr.at(n, m, n, m).re.powi(2);
        }
    }
    for n in 0..nb {
        for n2 in (0..nb).filter(|&x| x != n) {
            for m in 0..ns {
                let a = rr.at(n, m, n2, m);
                for m2 in (0..ns).filter(|&x| x != m) {
                    c_off += a * rr.at(n2, m2, n, m2);
                }
            }
        }
    }
    Ok(PurityDecomposition {
        i0_spin,
        i0_boson,
        d_diag,
        c_off: c_off.re,
        direct_purity: purity(rho.reduced_boson().view()),
        axis,
    })
}

/// How the FOTOC rotation axis is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisStrategy {
    /// Largest var(S_r) at the evaluation time.
    MaxVariance,
    /// Smallest |S_F^{S_r,n̂} − S₂|. Needs the exact entropy it is meant to
    /// estimate, so it is only useful for validating the other strategy.
    MinResidual,
}

/// Polar grid θ_i = πi/n_theta, φ_j = 2πj/n_phi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for AxisGrid {
    fn default() -> Self {
        AxisGrid { n_theta: 24, n_phi: 48 }
    }
}

impl AxisGrid {
    /// Axes in lexicographic (θ, φ) order.
    pub fn axes(&self) -> Vec<BlochAxis> {
        (0..self.n_theta)
            .flat_map(|i| {
                (0..self.n_phi).map(move |j| {
                    BlochAxis::new(
                        PI * i as f64 / self.n_theta as f64,
                        2.0 * PI * j as f64 / self.n_phi as f64,
                    )
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisChoice {
    pub axis: BlochAxis,
    /// var(S_r) or the residual, depending on the strategy.
    pub score: f64,
}

/// Symmetrized covariance ⟨{S_a, S_b}⟩/2 − ⟨S_a⟩⟨S_b⟩ of a spin density matrix.
pub fn spin_covariance(rho_spin: ArrayView2<C64>, n_spins: usize) -> [[f64; 3]; 3] {
    let ops = [spin::sx(n_spins), spin::sy(n_spins), spin::sz(n_spins)].map(|m| m.to_dense());
    let tr = |m: &Array2<C64>| -> f64 { (0..m.nrows()).map(|i| rho_spin.row(i).dot(&m.column(i))).sum::<C64>().re };
    let mean = [tr(&ops[0]), tr(&ops[1]), tr(&ops[2])];
    let mut cov = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let ab = ops[a].dot(&ops[b]);
            let ba = ops[b].dot(&ops[a]);
            cov[a][b] = 0.5 * (tr(&ab) + tr(&ba)) - mean[a] * mean[b];
        }
    }
    cov
}

/// Picks the FOTOC rotation axis for a state on the given grid. Ties keep the
/// lexicographically first (θ, φ).
pub fn optimize_axis(psi: &StateVector, strategy: AxisStrategy, grid: &AxisGrid) -> Result<AxisChoice> {
    if grid.n_theta == 0 || grid.n_phi == 0 {
        return Err(Error::param("axis_grid", "grid needs at least one θ and one φ value"));
    }
    let rho_s = psi.reduced_spin();
    let n = psi.n_spins();
    let axes = grid.axes();
    let scores: Vec<f64> = match strategy {
        AxisStrategy::MaxVariance => {
            let c = spin_covariance(rho_s.view(), n);
            axes.iter()
                .map(|a| {
                    let r = a.unit_vector();
                    (0..3).map(|i| (0..3).map(|j| r[i] * c[i][j] * r[j]).sum::<f64>()).sum::<f64>()
                })
                .collect()
        }
        AxisStrategy::MinResidual => {
            let s2 = renyi2(psi.reduced_boson().view());
            let i0_boson: f64 = psi.boson_populations().iter().map(|p| p * p).sum();
            let xb = spin::x_basis(n);
            axes.par_iter()
                .map(|a| {
                    let pops = axis_populations(rho_s.view(), rotation_with(n, &xb, *a).view());
                    let i0: f64 = pops.iter().map(|p| p * p).sum();
                    // negate so that larger is better in the shared selection below
                    -(-(i0 + i0_boson).ln() - s2).abs()
                })
                .collect()
        }
    };
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] + 1e-12 * scores[best].abs().max(1.0) {
            best = i;
        }
    }
    let score = match strategy {
        AxisStrategy::MaxVariance => scores[best],
        AxisStrategy::MinResidual => -scores[best],
    };
    Ok(AxisChoice { axis: axes[best], score })
}

/// S₂(ρ_ph) and the FOTOC estimators for one state and axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenyiSpinPhonon {
    /// −log Tr ρ_ph² from the exact partial trace over the spins.
    pub s2: f64,
    /// −log Tr ρ_spin², equal to `s2` for a pure global state.
    pub s2_spin: f64,
    pub sf_spin: f64,
    pub sf_boson: f64,
    pub sf_spin_boson: f64,
    pub decomposition: PurityDecomposition,
}

/// Entropy and estimators; without an axis the max-variance axis on the
/// default grid is used.
pub fn renyi_spin_phonon(psi: &StateVector, axis: Option<BlochAxis>) -> Result<RenyiSpinPhonon> {
    let axis = match axis {
        Some(a) => a,
        None => optimize_axis(psi, AxisStrategy::MaxVariance, &AxisGrid::default())?.axis,
    };
    let d = purity_decomposition(psi, axis);
    Ok(RenyiSpinPhonon {
        s2: d.s2(),
        s2_spin: renyi2(psi.reduced_spin().view()),
        sf_spin: d.sf_spin(),
        sf_boson: d.sf_boson(),
        sf_spin_boson: d.sf_spin_boson(),
        decomposition: d,
    })
}

/// Clebsch–Gordan amplitudes for splitting the symmetric N-spin sector into
/// L_A and N − L_A spins.
///
/// Only the stretched coupling J = j_A + j_B occurs, where
/// ⟨j_A m_A; j_B m_B | J M⟩ = sqrt[C(L_A, k_A) C(N−L_A, k−k_A) / C(N, k)] with
/// k counting raised spins. The binomials are evaluated in log space so the
/// table stays finite for any N.
#[derive(Debug, Clone)]
pub struct CgTable {
    pub n_spins: usize,
    pub l_a: usize,
    /// coeff[k_A][k_B] for the component |k_A⟩|k_B⟩ of |k_A + k_B⟩.
    coeff: Array2<f64>,
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

impl CgTable {
    fn build(n_spins: usize, l_a: usize) -> Self {
        let l_b = n_spins - l_a;
        let coeff = Array2::from_shape_fn((l_a + 1, l_b + 1), |(ka, kb)| {
            (0.5 * (ln_binomial(l_a, ka) + ln_binomial(l_b, kb) - ln_binomial(n_spins, ka + kb))).exp()
        });
        CgTable { n_spins, l_a, coeff }
    }

    /// Shared table for (N, L_A), built once per process.
    pub fn get(n_spins: usize, l_a: usize) -> Result<Arc<CgTable>> {
        if l_a == 0 || l_a > n_spins {
            return Err(Error::param("l_a", format!("subsystem size must lie in 1..={n_spins}, got {l_a}")));
        }
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<CgTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        Ok(guard
            .entry((n_spins, l_a))
            .or_insert_with(|| Arc::new(CgTable::build(n_spins, l_a)))
            .clone())
    }

    pub fn coefficient(&self, k_a: usize, k_b: usize) -> f64 {
        self.coeff[[k_a, k_b]]
    }

    pub fn complement_dim(&self) -> usize {
        self.n_spins - self.l_a + 1
    }
}

/// Reduced density matrix of L_A spins from a density matrix on the
/// symmetric sector (the boson is already traced out, or never present).
pub fn partial_trace_spins(rho_spin: ArrayView2<C64>, n_spins: usize, l_a: usize) -> Result<Array2<C64>> {
    if rho_spin.dim() != (n_spins + 1, n_spins + 1) {
        return Err(Error::Contract(format!(
            "spin density matrix {:?} does not match N = {n_spins}",
            rho_spin.dim()
        )));
    }
    let cg = CgTable::get(n_spins, l_a)?;
    let nb = cg.complement_dim();
    Ok(Array2::from_shape_fn((l_a + 1, l_a + 1), |(a, a2)| {
        (0..nb)
            .map(|b| rho_spin[[a + b, a2 + b]] * (cg.coefficient(a, b) * cg.coefficient(a2, b)))
            .sum()
    }))
}

/// ψ resolved as Ψ[k_A, k_B, n] on subsystem ⊗ complement spins ⊗ boson.
fn resolve(psi: &StateVector, cg: &CgTable) -> Array3<C64> {
    let m = psi.as_matrix();
    let nb = cg.complement_dim();
    Array3::from_shape_fn((cg.l_a + 1, nb, m.nrows()), |(a, b, n)| m[[n, a + b]] * cg.coefficient(a, b))
}

/// Subsystem FOTOC estimate of S₂(ρ_{L_A}) next to the exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsystemEstimate {
    pub l_a: usize,
    pub axis: BlochAxis,
    /// Exact −log Tr ρ_A² from the Clebsch–Gordan partial trace.
    pub s2: f64,
    pub i0_subsystem: f64,
    pub i0_complement: f64,
    pub d_diag: f64,
    pub c_off: f64,
}

impl SubsystemEstimate {
    /// −log(I₀^A + I₀^{A_c}).
    pub fn estimator(&self) -> f64 {
        -(self.i0_subsystem + self.i0_complement).ln()
    }

    pub fn residual(&self) -> f64 {
        self.i0_subsystem + self.i0_complement - self.d_diag + self.c_off - (-self.s2).exp()
    }
}

/// I₀ terms for rotations e^{iφS_{r,A}} on the subsystem and the joint
/// e^{iφS_{r,A_c}} e^{iθn̂} on its complement, plus the exact entropy.
pub fn subsystem_fotoc_renyi(psi: &StateVector, l_a: usize, axis: BlochAxis) -> Result<SubsystemEstimate> {
    let n = psi.n_spins();
    let cg = CgTable::get(n, l_a)?;
    let s2 = renyi2(partial_trace_spins(psi.reduced_spin().view(), n, l_a)?.view());
    let big = resolve(psi, &cg);
    let (da, db, dn) = big.dim();
    let ra = spin::rotation(l_a, axis);
    let rb = spin::rotation(n - l_a, axis);
    // rotate the subsystem index: Ψ'[j, b, n] = Σ_a R_A*[a, j] Ψ[a, b, n]
    let flat = big.into_shape_with_order((da, db * dn)).expect("contiguous");
    let rotated_a = linalg::adjoint(ra.view()).dot(&flat);
    // rotate the complement spins: Ψ''[j, c, n] = Σ_b R_B*[b, c] Ψ'[j, b, n]
    let rbh = linalg::adjoint(rb.view());
    let mut rotated = Array3::<C64>::zeros((da, db, dn));
    let view = rotated_a.into_shape_with_order((da, db, dn)).expect("contiguous");
    for j in 0..da {
        rotated.index_axis_mut(Axis(0), j).assign(&rbh.dot(&view.index_axis(Axis(0), j)));
    }
    let split = rotated.into_shape_with_order((da, db * dn)).expect("contiguous");
    let t = bipartite_terms(split.view());
    Ok(SubsystemEstimate {
        l_a,
        axis,
        s2,
        i0_subsystem: t.i0_left,
        i0_complement: t.i0_right,
        d_diag: t.d_diag,
        c_off: t.c_off,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coherent_spin_state, BosonState, InitialState, Polarization, StateRecipe};
    use crate::propagate::EigenSystem;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(n_spins: usize, n_max: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = (n_max + 1) * (n_spins + 1);
        let amps = (0..d)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        StateVector::normalized(amps, n_max + 1, n_spins + 1, StateRecipe::Custom("random".into())).unwrap()
    }

    fn random_axis(seed: u64) -> BlochAxis {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BlochAxis::new(rng.random::<f64>() * PI, rng.random::<f64>() * 2.0 * PI)
    }

    fn params(n: usize, n_max: usize) -> ModelParams {
        ModelParams::reference(n, n_max).unwrap()
    }

    #[test]
    fn eigenstate_product_has_only_zero_offset() {
        let p = params(4, 5);
        let psi = coherent_spin_state(&p, BlochAxis::Z, Polarization::Up, 2).unwrap();
        for g in [Generator::SpinAxis(BlochAxis::Z), Generator::Number] {
            let s = block_decompose(&psi.to_density(), g).unwrap();
            assert_abs_diff_eq!(s.intensity(0), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.total(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_level_coherence() {
        let p = params(4, 2);
        let mut amps = vec![ZERO; p.dim()];
        amps[1] = C64::new(1.0, 0.0);
        amps[3] = C64::new(1.0, 0.0);
        let psi = StateVector::normalized(amps, 3, 5, StateRecipe::Custom("pair".into())).unwrap();
        let s = block_decompose(&psi.to_density(), Generator::SpinAxis(BlochAxis::Z)).unwrap();
        assert_abs_diff_eq!(s.intensity(0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.intensity(2), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(s.intensity(-2), 0.25, epsilon = 1e-12);
        let fast = block_decompose_pure(&psi, Generator::SpinAxis(BlochAxis::Z)).unwrap();
        assert!(s.max_difference(&fast) < 1e-14);
    }

    #[test]
    fn exact_grid_reproduces_two_level_intensities() {
        // |m⟩ + |m+2⟩ with the boson in vacuum, propagated for zero time
        let p = params(4, 2);
        let mut amps = vec![ZERO; p.dim()];
        amps[1] = C64::new(1.0, 0.0);
        amps[3] = C64::new(1.0, 0.0);
        let psi = StateVector::normalized(amps, 3, 5, StateRecipe::Custom("pair".into())).unwrap();
        let es = EigenSystem::dicke(&p).unwrap();
        let g = Generator::SpinAxis(BlochAxis::Z);
        let s = intensities_via_fourier(&psi, &es, &p, g, 0.0, Some(9)).unwrap();
        assert_abs_diff_eq!(s.intensity(0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.intensity(2), 0.25, epsilon = 1e-12);
        assert!(matches!(
            intensities_via_fourier(&psi, &es, &p, g, 0.0, Some(8)),
            Err(Error::Aliasing { required: 9, .. })
        ));
    }

    #[test]
    fn fourier_matches_blocks_on_evolved_state() {
        let p = params(6, 24).with_field_ratio(0.2).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let es = EigenSystem::dicke(&p).unwrap();
        let psi_t = es.evolve(&psi0, 1.0).unwrap();
        for g in [Generator::SpinAxis(BlochAxis::new(0.7, 1.9)), Generator::Number, Generator::Sy] {
            let fourier = intensities_via_fourier(&psi0, &es, &p, g, 1.0, None).unwrap();
            let blocks = block_decompose(&psi_t.to_density(), g).unwrap();
            assert!(fourier.max_difference(&blocks) < 1e-10, "{g:?}");
            let angles = fotoc_angle_scan(&psi0, &psi_t, &es, &p, g, 1.0, 2 * fourier.m_max + 1).unwrap();
            let coeffs = fourier_coefficients(&angles, fourier.m_max);
            assert!(coeffs.iter().all(|c| c.im.abs() < 1e-10));
        }
    }

    #[test]
    fn quadrature_is_not_graded() {
        let p = params(2, 3);
        let psi = InitialState::critical().prepare(&p).unwrap();
        assert!(matches!(
            block_decompose_pure(&psi, Generator::Quadrature),
            Err(Error::UnsupportedGenerator(_))
        ));
    }

    #[test]
    fn rotation_covariance() {
        let psi = random_state(3, 3, 7);
        let axis = random_axis(8);
        let rho = psi.to_density();
        let r = spin::rotation(3, axis);
        let along_r = block_decompose(&rho, Generator::SpinAxis(axis)).unwrap();
        let moved = rho.rotate_spin(linalg::adjoint(r.view()).view());
        let along_z = block_decompose(&moved, Generator::SpinAxis(BlochAxis::Z)).unwrap();
        assert!(along_r.max_difference(&along_z) < 1e-9);
    }

    #[test]
    fn product_state_decomposition() {
        let p = params(6, 4);
        let psi = InitialState::critical().prepare(&p).unwrap();
        let d = purity_decomposition(&psi, BlochAxis::X);
        assert_abs_diff_eq!(d.c_off, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.direct_purity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.residual(), 0.0, epsilon = 1e-12);
        let r = renyi_spin_phonon(&psi, Some(BlochAxis::X)).unwrap();
        assert_abs_diff_eq!(r.s2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn density_and_pure_paths_agree() {
        let psi = random_state(4, 3, 3);
        let axis = random_axis(4);
        let a = purity_decomposition(&psi, axis);
        let b = purity_decomposition_density(&psi.to_density(), axis).unwrap();
        for (x, y) in [
            (a.i0_spin, b.i0_spin),
            (a.i0_boson, b.i0_boson),
            (a.d_diag, b.d_diag),
            (a.c_off, b.c_off),
            (a.direct_purity, b.direct_purity),
        ] {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(b.residual().abs() < 1e-12);
    }

    #[test]
    fn mixed_state_is_rejected_by_decomposition() {
        let (nb, ns) = (2, 3);
        let d = nb * ns;
        let rho = DensityMatrix::new(Array2::from_diag_elem(d, C64::new(1.0 / d as f64, 0.0)), nb, ns).unwrap();
        assert!(purity_decomposition_density(&rho, BlochAxis::Z).is_err());
    }

    #[test]
    fn max_variance_axis_is_transverse_for_x_polarized_state() {
        let p = params(8, 2);
        let psi = coherent_spin_state(&p, BlochAxis::X, Polarization::Down, 0).unwrap();
        let c = optimize_axis(&psi, AxisStrategy::MaxVariance, &AxisGrid::default()).unwrap();
        assert_abs_diff_eq!(c.axis.unit_vector()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.score, 2.0, epsilon = 1e-12);
        // lexicographic tie-break lands on the pole
        assert_eq!(c.axis, BlochAxis::new(0.0, 0.0));
    }

    #[test]
    fn min_residual_is_no_worse_than_max_variance() {
        let p = params(10, 40).with_field_ratio(0.1).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let psi = EigenSystem::dicke(&p).unwrap().evolve(&psi0, 6.0).unwrap();
        let grid = AxisGrid { n_theta: 12, n_phi: 24 };
        let mv = optimize_axis(&psi, AxisStrategy::MaxVariance, &grid).unwrap();
        let mr = optimize_axis(&psi, AxisStrategy::MinResidual, &grid).unwrap();
        let a = renyi_spin_phonon(&psi, Some(mv.axis)).unwrap();
        let b = renyi_spin_phonon(&psi, Some(mr.axis)).unwrap();
        assert!((b.sf_spin_boson - b.s2).abs() <= (a.sf_spin_boson - a.s2).abs() + 1e-12);
        assert_abs_diff_eq!(mr.score, (b.sf_spin_boson - b.s2).abs(), epsilon = 1e-9);
    }

    #[test]
    fn cg_coefficients_are_normalized() {
        let cg = CgTable::get(9, 4).unwrap();
        for k in 0..=9usize {
            let s: f64 = (0..=4usize)
                .filter(|&a| k >= a && k - a <= 5)
                .map(|a| cg.coefficient(a, k - a).powi(2))
                .sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        assert!(CgTable::get(9, 0).is_err());
        assert!(CgTable::get(9, 10).is_err());
        let big = CgTable::get(400, 200).unwrap();
        assert!(big.coeff.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn coherent_state_reduces_to_coherent_state() {
        let p = params(12, 1);
        let axis = BlochAxis::new(1.1, 0.4);
        let psi = coherent_spin_state(&p, axis, Polarization::Up, 0).unwrap();
        for l_a in [1, 5, 12] {
            let rho = partial_trace_spins(psi.reduced_spin().view(), 12, l_a).unwrap();
            assert_abs_diff_eq!(purity(rho.view()), 1.0, epsilon = 1e-12);
            let sub = crate::model::coherent_spin_amplitudes(l_a, axis, Polarization::Up);
            let fid: C64 = (0..=l_a)
                .flat_map(|i| (0..=l_a).map(move |j| (i, j)))
                .map(|(i, j)| sub[i].conj() * rho[[i, j]] * sub[j])
                .sum();
            assert_abs_diff_eq!(fid.re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn subsystem_terms_close_the_identity() {
        let psi = random_state(6, 4, 11);
        for l_a in 1..=6 {
            let e = subsystem_fotoc_renyi(&psi, l_a, random_axis(l_a as u64)).unwrap();
            assert!(e.residual().abs() < 1e-12, "l_a={l_a}: {}", e.residual());
            let bound = e.d_diag.abs() + e.c_off.abs();
            let err = ((e.i0_subsystem + e.i0_complement) - (-e.s2).exp()).abs();
            assert!(err <= bound + 1e-12);
        }
    }

    #[test]
    fn product_state_subsystem_terms() {
        let p = params(8, 3);
        let psi = InitialState::critical().prepare(&p).unwrap();
        let e = subsystem_fotoc_renyi(&psi, 3, BlochAxis::X).unwrap();
        assert_abs_diff_eq!(e.s2, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.i0_subsystem, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.i0_complement, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.d_diag, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.c_off, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fock_superposition_boson_intensities() {
        let p = params(2, 14);
        let psi = InitialState {
            axis: BlochAxis::Z,
            polarization: Polarization::Up,
            boson: BosonState::Coherent { re: 0.8, im: 0.1 },
        }
        .prepare(&p)
        .unwrap();
        let s = block_decompose_pure(&psi, Generator::Number).unwrap();
        let d = block_decompose(&psi.to_density(), Generator::Number).unwrap();
        assert!(s.max_difference(&d) < 1e-14);
        assert_abs_diff_eq!(s.total(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spectrum_invariants(seed in 0u64..10_000, theta in 0.0f64..PI, phi in 0.0f64..6.28) {
            let psi = random_state(4, 4, seed);
            let rho = psi.to_density();
            for g in [Generator::SpinAxis(BlochAxis::new(theta, phi)), Generator::Number] {
                let s = block_decompose(&rho, g).unwrap();
                prop_assert!((s.total() - 1.0).abs() < 1e-9);
                prop_assert!(s.symmetry_defect() < 1e-10);
                prop_assert!(s.min_intensity() >= -1e-12);
                let fast = block_decompose_pure(&psi, g).unwrap();
                prop_assert!(s.max_difference(&fast) < 1e-12);
            }
        }

        #[test]
        fn purity_identity_and_schmidt_symmetry(seed in 0u64..10_000, theta in 0.0f64..PI, phi in 0.0f64..6.28) {
            let psi = random_state(5, 5, seed);
            let d = purity_decomposition(&psi, BlochAxis::new(theta, phi));
            prop_assert!(d.residual().abs() < 1e-9);
            let r = renyi_spin_phonon(&psi, Some(d.axis)).unwrap();
            prop_assert!((r.s2 - r.s2_spin).abs() < 1e-9);
        }
    }
}
