//! Time evolution, the echo protocol and FOTOCs.
//!
//! Two propagators share the [`Propagator`] trait: [`EigenSystem`] (dense,
//! parity-resolved diagonalization) and [`ChebyshevPropagator`] (sparse
//! polynomial expansion for spaces too large to diagonalize).

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, C64, ONE, ZERO};
use crate::model::{
    self, boson, spin, BlochAxis, Factor, InitialState, ModelParams, Operator, OperatorTag, StateRecipe, StateVector,
};

/// Largest block handed to the dense eigensolver unless explicitly allowed.
pub const DEFAULT_MAX_BLOCK: usize = 8192;

/// Observable whose small rotation e^{iδφG} perturbs the echo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    /// X = (a + a†)/2.
    Quadrature,
    Sy,
    Number,
    SpinAxis(BlochAxis),
}

impl Generator {
    pub fn tag(&self) -> String {
        match self {
            Generator::Quadrature => "X".into(),
            Generator::Sy => "S_y".into(),
            Generator::Number => "n".into(),
            Generator::SpinAxis(a) => format!("S_r(theta={},phi={})", a.theta, a.phi),
        }
    }

    pub fn factor(&self) -> Factor {
        match self {
            Generator::Quadrature | Generator::Number => Factor::Boson,
            Generator::Sy | Generator::SpinAxis(_) => Factor::Spin,
        }
    }

    pub fn operator(&self, p: &ModelParams) -> Operator {
        match self {
            Generator::Quadrature => {
                Operator::boson_local(OperatorTag::Quadrature, p.spin_dim(), boson::quadrature(p.n_max))
            }
            Generator::Number => Operator::boson_local(OperatorTag::Number, p.spin_dim(), boson::number(p.n_max)),
            Generator::Sy => Operator::spin_local(OperatorTag::Sy, p.boson_dim(), spin::sy(p.n_spins)),
            Generator::SpinAxis(a) => model::rotation_generator(p, *a),
        }
    }

    /// Eigen-decomposition of the generator on its own factor.
    pub fn local_spectrum(&self, p: &ModelParams) -> Result<LocalSpectrum> {
        match self {
            Generator::Number => {
                let d = p.boson_dim();
                Ok(LocalSpectrum {
                    factor: Factor::Boson,
                    eigenvalues: (0..d).map(|n| n as f64).collect(),
                    vectors: Array2::from_diag_elem(d, ONE),
                })
            }
            Generator::Quadrature => {
                let x = boson::quadrature(p.n_max).to_dense().mapv(|z| z.re);
                let (w, v) = linalg::symmetric_eigen(x, true)?;
                let v = v.expect("vectors requested");
                Ok(LocalSpectrum {
                    factor: Factor::Boson,
                    eigenvalues: w,
                    vectors: v.t().mapv(|x| C64::new(x, 0.0)),
                })
            }
            Generator::Sy => Ok(Self::spin_spectrum(p, BlochAxis::Y)),
            Generator::SpinAxis(a) => Ok(Self::spin_spectrum(p, *a)),
        }
    }

    fn spin_spectrum(p: &ModelParams, axis: BlochAxis) -> LocalSpectrum {
        LocalSpectrum {
            factor: Factor::Spin,
            eigenvalues: spin::projections(p.n_spins),
            vectors: spin::rotation(p.n_spins, axis),
        }
    }
}

/// Eigenvalues and eigenvector columns of a generator on one factor.
#[derive(Debug, Clone)]
pub struct LocalSpectrum {
    pub factor: Factor,
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the eigenvector for `eigenvalues[j]`.
    pub vectors: Array2<C64>,
}

impl LocalSpectrum {
    /// e^{i·angle·G} on the local factor.
    pub fn unitary(&self, angle: f64) -> LocalUnitary {
        let v = &self.vectors;
        let d = v.nrows();
        let mut scaled = v.clone();
        for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
            let ph = C64::from_polar(1.0, angle * self.eigenvalues[j]);
            col.mapv_inplace(|z| z * ph);
        }
        let m = scaled.dot(&linalg::adjoint(v.view()));
        debug_assert_eq!(m.dim(), (d, d));
        LocalUnitary {
            factor: self.factor,
            matrix: m,
        }
    }
}

/// Unitary acting on one factor of the product space.
#[derive(Debug, Clone)]
pub struct LocalUnitary {
    pub factor: Factor,
    pub matrix: Array2<C64>,
}

impl LocalUnitary {
    pub fn apply(&self, psi: &[C64], dims: (usize, usize)) -> Vec<C64> {
        let m = ArrayView2::from_shape(dims, psi).expect("state dims");
        let out = match self.factor {
            Factor::Boson => self.matrix.dot(&m),
            Factor::Spin => m.dot(&self.matrix.t()),
        };
        out.into_raw_vec_and_offset().0
    }
}

/// One parity (or whole-space) block of the spectrum.
#[derive(Debug, Clone)]
pub struct EigenSector {
    /// Parity label 0/1, or `None` for an unresolved spectrum.
    pub parity: Option<u8>,
    /// Flat indices (in the frame basis) spanned by this block.
    pub indices: Vec<usize>,
    pub energies: Vec<f64>,
    /// Rows are eigenvectors over `indices`; absent for energy-only runs.
    pub vectors: Option<Array2<f64>>,
}

/// Eigen-decomposition of H, stored per symmetry sector.
///
/// For the Dicke Hamiltonian the blocks live in the |n⟩⊗|m_x⟩ basis where the
/// parity exp[iπ(n̂ + S_x + N/2)] is diagonal and H is real; states are kept
/// in the S_z basis and rotated on the fly.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    fingerprint: String,
    params: Option<ModelParams>,
    n_boson: usize,
    n_spin: usize,
    /// Rows are the frame spin basis vectors in the S_z basis.
    frame: Option<Array2<f64>>,
    sectors: Vec<EigenSector>,
}

/// Expansion of a state in the energy eigenbasis, per sector.
#[derive(Debug, Clone)]
pub struct EigenCoefficients {
    pub per_sector: Vec<Vec<C64>>,
}

impl EigenCoefficients {
    /// |c_j|² per sector.
    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.per_sector.iter().map(|c| c.iter().map(|z| z.norm_sqr()).collect()).collect()
    }
}

impl EigenSystem {
    /// Parity-resolved diagonalization of the Dicke Hamiltonian.
    pub fn dicke(p: &ModelParams) -> Result<Self> {
        Self::dicke_with(p, true, DEFAULT_MAX_BLOCK)
    }

    /// Energies only (no eigenvectors), for level statistics.
    pub fn dicke_energies(p: &ModelParams) -> Result<Self> {
        Self::dicke_with(p, false, DEFAULT_MAX_BLOCK)
    }

    pub fn dicke_with(p: &ModelParams, vectors: bool, max_block: usize) -> Result<Self> {
        p.validate()?;
        let (xb, blocks) = parity_blocks(p)?;
        if let Some(big) = blocks.iter().map(|(idx, _)| idx.len()).max() {
            if big > max_block {
                return Err(Error::ResourceLimit(format!(
                    "parity block of dimension {big} exceeds the dense ceiling {max_block}"
                )));
            }
        }
        let mut sectors = Vec::with_capacity(2);
        for (s, (indices, block)) in blocks.into_iter().enumerate() {
            let (energies, v) = linalg::symmetric_eigen(block, vectors)?;
            sectors.push(EigenSector {
                parity: Some(s as u8),
                indices,
                energies,
                vectors: v,
            });
        }
        Ok(EigenSystem {
            fingerprint: p.fingerprint(),
            params: Some(*p),
            n_boson: p.boson_dim(),
            n_spin: p.spin_dim(),
            frame: Some(xb),
            sectors,
        })
    }

    pub fn params(&self) -> Option<&ModelParams> {
        self.params.as_ref()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn sectors(&self) -> &[EigenSector] {
        &self.sectors
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_boson, self.n_spin)
    }

    pub fn dim(&self) -> usize {
        self.n_boson * self.n_spin
    }

    pub fn has_vectors(&self) -> bool {
        self.sectors.iter().all(|s| s.vectors.is_some())
    }

    /// All eigenvalues, ascending.
    pub fn energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.sectors.iter().flat_map(|s| s.energies.iter().copied()).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Same eigenvectors with all energies multiplied by `factor` (H → factor·H).
    pub fn scaled(&self, factor: f64) -> EigenSystem {
        let mut out = self.clone();
        for s in &mut out.sectors {
            s.energies.iter_mut().for_each(|e| *e *= factor);
        }
        if let Some(p) = self.params.and_then(|p| p.enhanced(factor).ok()) {
            out.fingerprint = p.fingerprint();
            out.params = Some(p);
        }
        out
    }

    /// S_z-basis amplitudes → frame amplitudes.
    pub fn to_frame(&self, psi: &[C64]) -> Vec<C64> {
        match &self.frame {
            None => psi.to_vec(),
            Some(xb) => {
                let m = ArrayView2::from_shape((self.n_boson, self.n_spin), psi).expect("dims");
                linalg::complex_times_real(m, xb.t()).into_raw_vec_and_offset().0
            }
        }
    }

    /// Frame amplitudes → S_z-basis amplitudes.
    pub fn from_frame(&self, psi: &[C64]) -> Vec<C64> {
        match &self.frame {
            None => psi.to_vec(),
            Some(xb) => {
                let m = ArrayView2::from_shape((self.n_boson, self.n_spin), psi).expect("dims");
                linalg::complex_times_real(m, xb.view()).into_raw_vec_and_offset().0
            }
        }
    }

    /// Spin frame rows (|m_x⟩ in the S_z basis), identity if unresolved.
    pub fn frame(&self) -> Option<&Array2<f64>> {
        self.frame.as_ref()
    }

    fn require_vectors(&self) -> Result<()> {
        if self.has_vectors() {
            Ok(())
        } else {
            Err(Error::Contract("eigensystem was computed without eigenvectors".into()))
        }
    }

    pub fn coefficients(&self, psi: &StateVector) -> Result<EigenCoefficients> {
        self.require_vectors()?;
        if psi.dims() != self.dims() {
            return Err(Error::Contract("state and eigensystem dimensions differ".into()));
        }
        let f = self.to_frame(psi.amplitudes());
        let per_sector = self
            .sectors
            .iter()
            .map(|s| {
                let x: Vec<C64> = s.indices.iter().map(|&i| f[i]).collect();
                linalg::real_matvec(s.vectors.as_ref().expect("checked").view(), &x)
            })
            .collect();
        Ok(EigenCoefficients { per_sector })
    }

    /// Σ_j c_j e^{−iE_j t} |E_j⟩ in the S_z basis. Negative `t` runs backwards.
    pub fn state_at(&self, c: &EigenCoefficients, t: f64) -> Vec<C64> {
        let mut f = vec![ZERO; self.dim()];
        for (s, cs) in self.sectors.iter().zip(&c.per_sector) {
            let phased: Vec<C64> = cs
                .iter()
                .zip(&s.energies)
                .map(|(z, &e)| z * C64::from_polar(1.0, -e * t))
                .collect();
            let x = linalg::real_matvec_t(s.vectors.as_ref().expect("vectors").view(), &phased);
            for (&i, v) in s.indices.iter().zip(x) {
                f[i] = v;
            }
        }
        self.from_frame(&f)
    }

    /// ψ(t) = V e^{−iEt} V† ψ(0).
    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        let c = self.coefficients(psi)?;
        Ok(StateVector::from_parts(
            self.state_at(&c, t),
            self.n_boson,
            self.n_spin,
            StateRecipe::Evolved {
                from: Box::new(psi.recipe().clone()),
                t_ms: t,
            },
        ))
    }

    /// Σ_j |c_j|² E_j.
    pub fn mean_energy(&self, c: &EigenCoefficients) -> f64 {
        self.sectors
            .iter()
            .zip(&c.per_sector)
            .map(|(s, cs)| cs.iter().zip(&s.energies).map(|(z, e)| z.norm_sqr() * e).sum::<f64>())
            .sum()
    }

    /// Dense V diag(E) V† in the S_z basis (small systems only).
    pub fn reconstruct(&self) -> Result<Array2<C64>> {
        self.require_vectors()?;
        let d = self.dim();
        let mut h = Array2::<C64>::zeros((d, d));
        for col in 0..d {
            let mut e = vec![ZERO; d];
            e[col] = ONE;
            let psi = StateVector::from_parts(e, self.n_boson, self.n_spin, StateRecipe::Custom("basis".into()));
            let c = self.coefficients(&psi)?;
            let hc = EigenCoefficients {
                per_sector: c
                    .per_sector
                    .iter()
                    .zip(&self.sectors)
                    .map(|(cs, s)| cs.iter().zip(&s.energies).map(|(z, e)| z * *e).collect())
                    .collect(),
            };
            let v = self.state_at(&hc, 0.0);
            for (r, z) in v.into_iter().enumerate() {
                h[[r, col]] = z;
            }
        }
        Ok(h)
    }

    /// Largest |V V† − 1| entry per sector.
    pub fn orthonormality_defect(&self) -> f64 {
        self.sectors
            .iter()
            .filter_map(|s| s.vectors.as_ref())
            .map(|v| {
                let g = v.dot(&v.t());
                g.indexed_iter()
                    .map(|((i, j), x)| (x - if i == j { 1.0 } else { 0.0 }).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Dense diagonalization of an arbitrary real-symmetric operator.
///
/// The Dicke Hamiltonian is real in the S_z basis. A Hermitian operator
/// with imaginary entries is reported as unsupported; a non-Hermitian one
/// violates the contract.
pub fn diagonalize(h: &Operator) -> Result<EigenSystem> {
    let (nb, ns) = h.dims();
    let csr = h.to_csr();
    let defect = csr.hermiticity_defect();
    if defect > 1e-12 {
        return Err(Error::Contract(format!("operator is not Hermitian (defect {defect:.2e})")));
    }
    if !csr.is_real() {
        return Err(Error::UnsupportedGenerator("complex Hermitian operators are not diagonalized".into()));
    }
    if h.dim() > DEFAULT_MAX_BLOCK {
        return Err(Error::ResourceLimit(format!("dense dimension {} above ceiling", h.dim())));
    }
    let dense = csr.to_dense().mapv(|z| z.re);
    let (energies, v) = linalg::symmetric_eigen(dense, true)?;
    Ok(EigenSystem {
        fingerprint: format!("operator:{:?}", h.tag()),
        params: None,
        n_boson: nb,
        n_spin: ns,
        frame: None,
        sectors: vec![EigenSector {
            parity: None,
            indices: (0..h.dim()).collect(),
            energies,
            vectors: v,
        }],
    })
}

/// Real symmetric parity blocks of H in the |n⟩⊗|m_x⟩ frame.
fn parity_blocks(p: &ModelParams) -> Result<(Array2<f64>, Vec<(Vec<usize>, Array2<f64>)>)> {
    let n = p.n_spins;
    let ns = p.spin_dim();
    let nb = p.boson_dim();
    let xb = spin::x_basis(n);
    let ms = spin::projections(n);
    // S_z in the frame: sz_x[r, r'] = Σ_k xb[r,k] m_k xb[r',k]
    let mut sz_x = Array2::<f64>::zeros((ns, ns));
    for r in 0..ns {
        for r2 in 0..ns {
            sz_x[[r, r2]] = (0..ns).map(|k| xb[[r, k]] * ms[k] * xb[[r2, k]]).sum();
        }
    }
    let coupling = 2.0 * p.omega_g() / (n as f64).sqrt();
    let mut out = Vec::with_capacity(2);
    for s in 0..2usize {
        let indices: Vec<usize> = (0..nb * ns).filter(|&i| (i / ns + i % ns) % 2 == s).collect();
        let mut pos = vec![usize::MAX; nb * ns];
        for (a, &i) in indices.iter().enumerate() {
            pos[i] = a;
        }
        let dim = indices.len();
        let mut h = Array2::<f64>::zeros((dim, dim));
        for (a, &i) in indices.iter().enumerate() {
            let (bn, r) = (i / ns, i % ns);
            h[[a, a]] = p.omega_delta() * bn as f64 + p.omega_b() * ms[r];
            if bn + 1 < nb {
                let amp = coupling * ((bn + 1) as f64).sqrt();
                for r2 in 0..ns {
                    let v = sz_x[[r, r2]];
                    let j = (bn + 1) * ns + r2;
                    if pos[j] == usize::MAX {
                        if v.abs() > 1e-10 {
                            return Err(Error::Numerical(format!("parity mixing element {v:.3e}")));
                        }
                        continue;
                    }
                    let b = pos[j];
                    h[[a, b]] += amp * v;
                    h[[b, a]] += amp * v;
                }
            }
        }
        out.push((indices, h));
    }
    Ok((xb, out))
}

/// Something that can evolve a state along an ascending time grid.
pub trait Propagator: Sync {
    fn dims(&self) -> (usize, usize);

    /// Calls `visit(i, ψ(t_i))` for every grid time in order.
    fn propagate(
        &self,
        psi0: &StateVector,
        times: &[f64],
        visit: &mut dyn FnMut(usize, &StateVector) -> Result<()>,
    ) -> Result<()>;

    /// ⟨ψ₀| U†(t) W U(t) |ψ₀⟩ given ψ(t) = U(t)ψ₀.
    ///
    /// The default evaluates ⟨ψ(t)|W|ψ(t)⟩, which is the same number.
    fn echo_overlap(&self, _psi0: &StateVector, psi_t: &StateVector, _t: f64, kick: &LocalUnitary) -> Result<C64> {
        let w = kick.apply(psi_t.amplitudes(), psi_t.dims());
        Ok(linalg::inner(psi_t.amplitudes(), &w))
    }
}

impl Propagator for EigenSystem {
    fn dims(&self) -> (usize, usize) {
        (self.n_boson, self.n_spin)
    }

    fn propagate(
        &self,
        psi0: &StateVector,
        times: &[f64],
        visit: &mut dyn FnMut(usize, &StateVector) -> Result<()>,
    ) -> Result<()> {
        let c = self.coefficients(psi0)?;
        for (i, &t) in times.iter().enumerate() {
            let s = StateVector::from_parts(
                self.state_at(&c, t),
                self.n_boson,
                self.n_spin,
                StateRecipe::Evolved {
                    from: Box::new(psi0.recipe().clone()),
                    t_ms: t,
                },
            );
            visit(i, &s)?;
        }
        Ok(())
    }

    /// Literal echo: rotate ψ(t), evolve back with conjugated phases, overlap with ψ₀.
    fn echo_overlap(&self, psi0: &StateVector, psi_t: &StateVector, t: f64, kick: &LocalUnitary) -> Result<C64> {
        let w = kick.apply(psi_t.amplitudes(), psi_t.dims());
        let ws = StateVector::from_parts(w, self.n_boson, self.n_spin, StateRecipe::Custom("kicked".into()));
        let back = self.state_at(&self.coefficients(&ws)?, -t);
        Ok(linalg::inner(psi0.amplitudes(), &back))
    }
}

/// Chebyshev expansion of e^{−iHt} using sparse products only.
#[derive(Debug, Clone)]
pub struct ChebyshevPropagator {
    h: CsrMatrix,
    n_boson: usize,
    n_spin: usize,
    centre: f64,
    half_width: f64,
    max_step: f64,
}

impl ChebyshevPropagator {
    pub fn new(h: &Operator) -> Result<Self> {
        let (nb, ns) = h.dims();
        let csr = h.to_csr();
        let (lo, hi) = csr.gershgorin_bounds();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Numerical("non-finite spectral bounds".into()));
        }
        let half_width = ((hi - lo) / 2.0).max(1e-12) * 1.01;
        Ok(ChebyshevPropagator {
            h: csr,
            n_boson: nb,
            n_spin: ns,
            centre: (hi + lo) / 2.0,
            half_width,
            max_step: 40.0,
        })
    }

    pub fn dicke(p: &ModelParams) -> Result<Self> {
        Self::new(&model::build_hamiltonian(p)?)
    }

    fn apply_scaled(&self, x: &[C64], out: &mut [C64]) {
        // out = (H − c)/a · x
        out.iter_mut().for_each(|z| *z = ZERO);
        self.h.matvec_acc(x, C64::new(1.0 / self.half_width, 0.0), out);
        let s = self.centre / self.half_width;
        out.iter_mut().zip(x).for_each(|(o, xi)| *o -= xi * s);
    }

    /// e^{−iH dt} ψ for one step.
    pub fn step(&self, psi: &[C64], dt: f64) -> Vec<C64> {
        if dt == 0.0 {
            return psi.to_vec();
        }
        let tau = self.half_width * dt.abs();
        let kmax = (tau * 1.5 + 60.0) as usize;
        let j = linalg::bessel_j_sequence(tau, kmax);
        let mut last = kmax;
        while last > tau as usize + 1 && j[last].abs() < 1e-18 {
            last -= 1;
        }
        let sign = if dt > 0.0 { 1.0 } else { -1.0 };
        // (−i·sign)^k
        let minus_i = C64::new(0.0, -sign);
        let mut t_prev = psi.to_vec();
        let mut t_cur = vec![ZERO; psi.len()];
        self.apply_scaled(&t_prev, &mut t_cur);
        let mut acc: Vec<C64> = psi.iter().map(|z| z * j[0]).collect();
        let mut phase = minus_i;
        for (a, t) in acc.iter_mut().zip(&t_cur) {
            *a += t * (phase * 2.0 * j[1]);
        }
        let mut t_next = vec![ZERO; psi.len()];
        for k in 2..=last.max(1) {
            self.apply_scaled(&t_cur, &mut t_next);
            for (n, p) in t_next.iter_mut().zip(&t_prev) {
                *n = *n * 2.0 - p;
            }
            phase *= minus_i;
            let c = phase * 2.0 * j[k];
            for (a, t) in acc.iter_mut().zip(&t_next) {
                *a += t * c;
            }
            std::mem::swap(&mut t_prev, &mut t_cur);
            std::mem::swap(&mut t_cur, &mut t_next);
        }
        let global = C64::from_polar(1.0, -self.centre * dt);
        acc.iter_mut().for_each(|z| *z *= global);
        acc
    }

    /// ψ(t) from ψ(0), splitting into steps of at most `max_step` in scaled time.
    pub fn evolve(&self, psi: &[C64], t: f64) -> Vec<C64> {
        let n = ((self.half_width * t.abs()) / self.max_step).ceil().max(1.0) as usize;
        let dt = t / n as f64;
        let mut v = psi.to_vec();
        for _ in 0..n {
            v = self.step(&v, dt);
        }
        v
    }
}

impl Propagator for ChebyshevPropagator {
    fn dims(&self) -> (usize, usize) {
        (self.n_boson, self.n_spin)
    }

    fn propagate(
        &self,
        psi0: &StateVector,
        times: &[f64],
        visit: &mut dyn FnMut(usize, &StateVector) -> Result<()>,
    ) -> Result<()> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::Contract("time grid must be non-negative and ascending".into()));
        }
        let mut v = psi0.amplitudes().to_vec();
        let mut now = 0.0;
        for (i, &t) in times.iter().enumerate() {
            v = self.evolve(&v, t - now);
            now = t;
            let s = StateVector::from_parts(
                v.clone(),
                self.n_boson,
                self.n_spin,
                StateRecipe::Evolved {
                    from: Box::new(psi0.recipe().clone()),
                    t_ms: t,
                },
            );
            visit(i, &s)?;
        }
        Ok(())
    }
}

/// Evenly spaced grid `start..=end` with `points` entries.
pub fn time_grid(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|i| start + (end - start) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// FOTOC F_G(t, δφ) together with var[G(t)] on the same grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FotocSeries {
    pub times: Vec<f64>,
    pub dphi: f64,
    pub generator: Generator,
    pub fidelity: Vec<f64>,
    pub variance: Vec<f64>,
    /// Largest cutoff-tail population seen along the run.
    pub max_tail: f64,
}

impl FotocSeries {
    /// (1 − F)/δφ², the quantity compared against var(G).
    pub fn scaled_loss(&self) -> Vec<f64> {
        self.fidelity
            .iter()
            .map(|f| if self.dphi == 0.0 { 0.0 } else { (1.0 - f) / (self.dphi * self.dphi) })
            .collect()
    }

    /// Quantum Fisher information of the pure state, 4·var(G).
    pub fn qfi(&self) -> Vec<f64> {
        self.variance.iter().map(|v| 4.0 * v).collect()
    }

    /// Flags runs whose state leaked into the top Fock rows.
    pub fn check_tail(&self, threshold: f64, n_max: usize) -> Result<()> {
        if self.max_tail > threshold {
            return Err(Error::CutoffTail {
                tail: self.max_tail,
                threshold,
                n_max,
            });
        }
        Ok(())
    }
}

/// Forward-evolve, rotate by e^{iδφG}, evolve back, overlap with ψ₀.
pub fn fotoc<P: Propagator + ?Sized>(
    psi0: &StateVector,
    prop: &P,
    p: &ModelParams,
    generator: Generator,
    dphi: f64,
    times: &[f64],
) -> Result<FotocSeries> {
    let op = generator.operator(p);
    let kick = generator.local_spectrum(p)?.unitary(dphi);
    let mut fidelity = vec![1.0; times.len()];
    let mut variance = vec![0.0; times.len()];
    let mut max_tail = 0.0f64;
    prop.propagate(psi0, times, &mut |i, psi| {
        variance[i] = psi.variance(&op);
        max_tail = max_tail.max(psi.cutoff_tail());
        if dphi != 0.0 {
            let f = prop.echo_overlap(psi0, psi, times[i], &kick)?.norm_sqr();
            if !(f > 0.0) {
                return Err(Error::Contract(format!(
                    "fidelity vanished at t = {} ms; rotation angle too large",
                    times[i]
                )));
            }
            fidelity[i] = f;
        }
        Ok(())
    })?;
    Ok(FotocSeries {
        times: times.to_vec(),
        dphi,
        generator,
        fidelity,
        variance,
        max_tail,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceSeries {
    pub times: Vec<f64>,
    pub variance: Vec<f64>,
}

impl VarianceSeries {
    pub fn qfi(&self) -> Vec<f64> {
        self.variance.iter().map(|v| 4.0 * v).collect()
    }
}

/// var[G(t)] = ⟨G²⟩ − ⟨G⟩² along the trajectory.
pub fn variance_series<P: Propagator + ?Sized>(
    psi0: &StateVector,
    prop: &P,
    p: &ModelParams,
    generator: Generator,
    times: &[f64],
) -> Result<VarianceSeries> {
    let op = generator.operator(p);
    let mut variance = vec![0.0; times.len()];
    prop.propagate(psi0, times, &mut |i, psi| {
        variance[i] = psi.variance(&op);
        Ok(())
    })?;
    Ok(VarianceSeries {
        times: times.to_vec(),
        variance,
    })
}

/// How the boson cutoff is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    pub start: usize,
    pub growth: f64,
    pub tail_threshold: f64,
    pub mean_shift: f64,
    pub max_cutoff: usize,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy {
            start: 32,
            growth: 1.25,
            tail_threshold: 1e-8,
            mean_shift: 1e-6,
            max_cutoff: 4096,
        }
    }
}

impl CutoffPolicy {
    fn next(&self, n: usize) -> usize {
        ((n as f64 * self.growth).round() as usize).max(n + 1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffReport {
    pub n_max: usize,
    pub tail: f64,
    pub mean_shift: f64,
    pub rungs: Vec<(usize, f64)>,
}

/// Smallest rung of the cutoff ladder whose evolved state keeps the
/// top-two-row tail below threshold and whose ⟨n̂⟩(t) agrees with the next
/// rung to the configured relative shift, probed with the sparse propagator.
pub fn select_cutoff(p: &ModelParams, initial: &InitialState, times: &[f64], policy: &CutoffPolicy) -> Result<CutoffReport> {
    let probe = |n_max: usize| -> Result<(f64, Vec<f64>)> {
        let q = p.with_cutoff(n_max)?;
        let prop = ChebyshevPropagator::dicke(&q)?;
        let psi0 = initial.prepare(&q)?;
        let num = boson::number(q.n_max);
        let numop = Operator::boson_local(OperatorTag::Number, q.spin_dim(), num);
        let mut tail = 0.0f64;
        let mut means = vec![0.0; times.len()];
        prop.propagate(&psi0, times, &mut |i, s| {
            tail = tail.max(s.cutoff_tail());
            means[i] = s.expectation(&numop).re;
            Ok(())
        })?;
        Ok((tail, means))
    };
    let mut rungs = Vec::new();
    let mut n = policy.start.max(1);
    let mut current = probe(n)?;
    rungs.push((n, current.0));
    loop {
        let m = policy.next(n);
        if m > policy.max_cutoff {
            return Err(Error::CutoffTail {
                tail: current.0,
                threshold: policy.tail_threshold,
                n_max: n,
            });
        }
        let next = probe(m)?;
        rungs.push((m, next.0));
        let shift = current
            .1
            .iter()
            .zip(&next.1)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        if current.0 < policy.tail_threshold && shift < policy.mean_shift {
            return Ok(CutoffReport {
                n_max: n,
                tail: current.0,
                mean_shift: shift,
                rungs,
            });
        }
        n = m;
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hamiltonian, build_operators, Polarization};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference(n: usize, n_max: usize, ratio: f64) -> ModelParams {
        ModelParams::reference(n, n_max).unwrap().with_field_ratio(ratio).unwrap()
    }

    /// Classic fixed-step RK4 on i dψ/dt = Hψ.
    fn rk4(h: &Operator, psi: &[C64], t: f64, steps: usize) -> Vec<C64> {
        let dt = t / steps as f64;
        let f = |v: &[C64]| -> Vec<C64> { h.apply(v).into_iter().map(|z| z * C64::new(0.0, -1.0)).collect() };
        let mut y = psi.to_vec();
        for _ in 0..steps {
            let k1 = f(&y);
            let y2: Vec<C64> = y.iter().zip(&k1).map(|(a, b)| a + b * (dt / 2.0)).collect();
            let k2 = f(&y2);
            let y3: Vec<C64> = y.iter().zip(&k2).map(|(a, b)| a + b * (dt / 2.0)).collect();
            let k3 = f(&y3);
            let y4: Vec<C64> = y.iter().zip(&k3).map(|(a, b)| a + b * dt).collect();
            let k4 = f(&y4);
            for i in 0..y.len() {
                y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
            }
        }
        y
    }

    #[test]
    fn decoupled_single_spin_spectrum() {
        let p = ModelParams::new(1, 0.0, 0.5, 0.7, 1).unwrap();
        let es = EigenSystem::dicke(&p).unwrap();
        let (wb, wd) = (p.omega_b(), p.omega_delta());
        let mut expect = vec![-wb / 2.0, wb / 2.0, wd - wb / 2.0, wd + wb / 2.0];
        expect.sort_by(f64::total_cmp);
        for (e, x) in es.energies().iter().zip(&expect) {
            assert_relative_eq!(*e, *x, epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let p = ModelParams::new(20, 0.41, 0.73, 1.9, 9).unwrap();
        let es = EigenSystem::dicke(&p).unwrap();
        assert!(es.orthonormality_defect() < 1e-9);
        let h = build_hamiltonian(&p).unwrap().to_dense();
        let r = es.reconstruct().unwrap();
        let diff: f64 = (&h - &r).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let norm: f64 = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-8, "relative residual {}", diff / norm);
    }

    #[test]
    fn generic_path_agrees_with_parity_path() {
        let p = reference(5, 8, 0.6);
        let a = EigenSystem::dicke(&p).unwrap().energies();
        let b = diagonalize(&build_hamiltonian(&p).unwrap()).unwrap().energies();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let p = reference(2, 2, 0.2);
        let ops = build_operators(&p).unwrap();
        assert!(matches!(diagonalize(&ops.a), Err(Error::Contract(_))));
        assert!(matches!(diagonalize(&ops.sy), Err(Error::UnsupportedGenerator(_))));
    }

    #[test]
    fn normal_phase_ground_state_energy() {
        let p = reference(8, 20, 30.0);
        let e0 = EigenSystem::dicke_energies(&p).unwrap().energies()[0];
        let ec = p.critical_energy();
        assert!((e0 - ec).abs() / ec.abs() < 0.01, "{e0} vs {ec}");
    }

    #[test]
    fn evolution_matches_rk4_oracle() {
        let p = reference(4, 8, 0.2);
        let es = EigenSystem::dicke(&p).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let a = es.evolve(&psi0, 1.0).unwrap();
        let b = rk4(&build_hamiltonian(&p).unwrap(), psi0.amplitudes(), 1.0, 20000);
        let ov = linalg::inner(a.amplitudes(), &b).norm();
        assert!(ov > 1.0 - 1e-6, "overlap {ov}");
        assert!((a.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn chebyshev_matches_eigen_propagation() {
        let p = reference(6, 24, 0.2);
        let es = EigenSystem::dicke(&p).unwrap();
        let ch = ChebyshevPropagator::dicke(&p).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let a = es.evolve(&psi0, 2.5).unwrap();
        let b = ch.evolve(psi0.amplitudes(), 2.5);
        let diff = a.amplitudes().iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "max deviation {diff}");
        let back = ch.evolve(&b, -2.5);
        let diff = psi0.amplitudes().iter().zip(&back).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }

    #[test]
    fn energy_is_conserved_and_t0_is_identity() {
        let p = reference(10, 40, 0.2);
        let es = EigenSystem::dicke(&p).unwrap();
        let h = build_hamiltonian(&p).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let s0 = es.evolve(&psi0, 0.0).unwrap();
        assert!(psi0.amplitudes().iter().zip(s0.amplitudes()).all(|(a, b)| (a - b).norm() < 1e-12));
        let e0 = psi0.expectation(&h).re;
        for t in [0.5, 3.0, 7.0] {
            let s = es.evolve(&psi0, t).unwrap();
            assert!((s.norm() - 1.0).abs() < 1e-10);
            assert!(((s.expectation(&h).re - e0) / e0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_angle_fotoc_is_one_and_echo_is_exact() {
        let p = reference(6, 30, 0.2);
        let es = EigenSystem::dicke(&p).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let times = time_grid(0.0, 4.0, 9);
        let f = fotoc(&psi0, &es, &p, Generator::Quadrature, 0.0, &times).unwrap();
        assert!(f.fidelity.iter().all(|&x| x == 1.0));
        let kick = Generator::Quadrature.local_spectrum(&p).unwrap().unitary(0.0);
        let psi_t = es.evolve(&psi0, 3.0).unwrap();
        let ov = es.echo_overlap(&psi0, &psi_t, 3.0, &kick).unwrap();
        assert!(ov.norm() > 1.0 - 1e-9);
    }

    #[test]
    fn decoupled_eigenstate_fotoc_is_stationary() {
        let p = ModelParams::new(6, 0.0, 0.5, 0.7, 6).unwrap();
        let es = EigenSystem::dicke(&p).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let times = time_grid(0.0, 5.0, 11);
        let f = fotoc(&psi0, &es, &p, Generator::SpinAxis(BlochAxis::X), 0.3, &times).unwrap();
        for x in &f.fidelity {
            assert!((x - f.fidelity[0]).abs() < 1e-12);
        }
        // e^{iφS_x} on an S_x eigenstate is a pure phase.
        assert!((f.fidelity[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_fotoc_is_direct_overlap() {
        let p = reference(5, 12, 0.2);
        let es = EigenSystem::dicke(&p).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let dphi = 0.37;
        let f = fotoc(&psi0, &es, &p, Generator::Sy, dphi, &[0.0]).unwrap();
        let w = Generator::Sy.local_spectrum(&p).unwrap().unitary(dphi);
        let direct = linalg::inner(psi0.amplitudes(), &w.apply(psi0.amplitudes(), psi0.dims())).norm_sqr();
        assert!((f.fidelity[0] - direct).abs() < 1e-12);
        assert!(f.fidelity[0] <= 1.0 + 1e-9);
    }

    #[test]
    fn initial_variances() {
        let p = reference(12, 10, 0.2);
        let es = EigenSystem::dicke(&p).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let vx = variance_series(&psi0, &es, &p, Generator::Quadrature, &[0.0]).unwrap();
        let vy = variance_series(&psi0, &es, &p, Generator::Sy, &[0.0]).unwrap();
        assert_relative_eq!(vx.variance[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(vy.variance[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vy.qfi()[0], 12.0, epsilon = 1e-11);
    }

    #[test]
    fn perturbative_identity_small_angle() {
        let n = 20;
        let p = reference(n, 60, 0.2);
        let es = EigenSystem::dicke(&p).unwrap();
        let psi0 = InitialState::critical().prepare(&p).unwrap();
        let times = time_grid(0.0, 1.0, 11);
        let f = fotoc(&psi0, &es, &p, Generator::Sy, 1e-4 / n as f64, &times).unwrap();
        for (l, v) in f.scaled_loss().iter().zip(&f.variance) {
            assert!(((l - v) / v).abs() < 0.05, "{l} vs {v}");
        }
    }

    #[test]
    fn kick_on_boson_and_spin_factors() {
        let p = reference(3, 4, 0.2);
        let s = coherent(&p);
        let u = Generator::Number.local_spectrum(&p).unwrap().unitary(0.5);
        let out = u.apply(s.amplitudes(), s.dims());
        // Vacuum picks up no phase under e^{iφn}.
        assert!(s.amplitudes().iter().zip(&out).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    fn coherent(p: &ModelParams) -> StateVector {
        model::coherent_spin_state(p, BlochAxis::X, Polarization::Down, 0).unwrap()
    }

    #[test]
    fn ceiling_refuses_oversized_blocks() {
        let p = reference(40, 500, 0.2);
        assert!(matches!(EigenSystem::dicke(&p), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn cutoff_ladder_converges() {
        let p = reference(6, 8, 1.5);
        let times = time_grid(0.0, 2.0, 21);
        let r = select_cutoff(&p, &InitialState::critical(), &times, &CutoffPolicy::default()).unwrap();
        assert!(r.tail < 1e-8 && r.mean_shift < 1e-6);
        assert!(r.n_max >= 32);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn fotoc_is_even_in_angle(dphi in 0.001f64..0.2, t in 0.0f64..4.0) {
            let p = reference(4, 14, 0.2);
            let es = EigenSystem::dicke(&p).unwrap();
            let psi0 = InitialState::critical().prepare(&p).unwrap();
            let a = fotoc(&psi0, &es, &p, Generator::Quadrature, dphi, &[t]).unwrap();
            let b = fotoc(&psi0, &es, &p, Generator::Quadrature, -dphi, &[t]).unwrap();
            prop_assert!((a.fidelity[0] - b.fidelity[0]).abs() < 1e-10);
            prop_assert!(a.fidelity[0] <= 1.0 + 1e-9 && a.fidelity[0] >= 0.0);
        }

        #[test]
        fn unitarity_along_the_grid(t in 0.0f64..12.0) {
            let p = reference(5, 20, 0.4);
            let es = EigenSystem::dicke(&p).unwrap();
            let psi0 = InitialState::critical().prepare(&p).unwrap();
            prop_assert!((es.evolve(&psi0, t).unwrap().norm() - 1.0).abs() < 1e-10);
        }
    }
}
