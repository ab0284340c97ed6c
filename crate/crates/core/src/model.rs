//! Truncated spin-boson Hilbert space, collective operators, the Dicke
//! Hamiltonian and product initial states.
//!
//! Basis ordering: `k = n·(N+1) + (m + N/2)` with Fock index `n` outermost.
//! Frequencies are supplied in kHz and converted to rad/ms internally; time
//! is always in ms.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, C64, ONE, ZERO};

/// Physical and numerical parameters of one Dicke system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_spins: usize,
    /// Spin-boson coupling g/2π in kHz.
    pub g_khz: f64,
    /// Boson detuning δ/2π in kHz.
    pub delta_khz: f64,
    /// Transverse field B/2π in kHz.
    pub b_khz: f64,
    /// Largest Fock index kept (inclusive).
    pub n_max: usize,
}

impl ModelParams {
    pub fn new(n_spins: usize, g_khz: f64, delta_khz: f64, b_khz: f64, n_max: usize) -> Result<Self> {
        let p = ModelParams {
            n_spins,
            g_khz,
            delta_khz,
            b_khz,
            n_max,
        };
        p.validate()?;
        Ok(p)
    }

    /// Couplings used throughout the figures: g/2π = 0.66 kHz, δ/2π = 0.5 kHz, B/2π = 0.7 kHz.
    pub fn reference(n_spins: usize, n_max: usize) -> Result<Self> {
        Self::new(n_spins, 0.66, 0.5, 0.7, n_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 1 {
            return Err(Error::param("n_spins", "must be at least 1"));
        }
        if self.n_max < 1 {
            return Err(Error::param("n_max", "boson cutoff must be at least 1"));
        }
        for (name, v) in [("g", self.g_khz), ("delta", self.delta_khz), ("b_field", self.b_khz)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn omega_g(&self) -> f64 {
        TAU * self.g_khz
    }

    pub fn omega_delta(&self) -> f64 {
        TAU * self.delta_khz
    }

    pub fn omega_b(&self) -> f64 {
        TAU * self.b_khz
    }

    /// Critical field B_c/2π = 4g²/δ in kHz.
    pub fn critical_field_khz(&self) -> Result<f64> {
        if self.delta_khz <= 0.0 {
            return Err(Error::param("delta", "critical field needs delta > 0"));
        }
        Ok(4.0 * self.g_khz * self.g_khz / self.delta_khz)
    }

    pub fn field_ratio(&self) -> Result<f64> {
        Ok(self.b_khz / self.critical_field_khz()?)
    }

    /// Same couplings with B set to `ratio · B_c`.
    pub fn with_field_ratio(mut self, ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio >= 0.0) {
            return Err(Error::param("b_field", format!("field ratio must be non-negative, got {ratio}")));
        }
        self.b_khz = ratio * self.critical_field_khz()?;
        Ok(self)
    }

    pub fn with_cutoff(mut self, n_max: usize) -> Result<Self> {
        self.n_max = n_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_spins(mut self, n_spins: usize) -> Result<Self> {
        self.n_spins = n_spins;
        self.validate()?;
        Ok(self)
    }

    /// All three frequencies multiplied by `factor` (parametric enhancement).
    /// Dynamics is unchanged up to a rescaling of time by `1/factor`.
    pub fn enhanced(mut self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::param("enhancement", "must be positive"));
        }
        self.g_khz *= factor;
        self.delta_khz *= factor;
        self.b_khz *= factor;
        Ok(self)
    }

    /// Energy of the excited-state transition, E_c = −ω_B N/2.
    pub fn critical_energy(&self) -> f64 {
        -self.omega_b() * self.n_spins as f64 / 2.0
    }

    pub fn spin_dim(&self) -> usize {
        self.n_spins + 1
    }

    pub fn boson_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.boson_dim()
    }

    /// Total spin j = N/2.
    pub fn spin_j(&self) -> f64 {
        self.n_spins as f64 / 2.0
    }

    /// Stable hex digest identifying these parameters.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.n_spins.to_le_bytes());
        h.update(self.g_khz.to_bits().to_le_bytes());
        h.update(self.delta_khz.to_bits().to_le_bytes());
        h.update(self.b_khz.to_bits().to_le_bytes());
        h.update(self.n_max.to_le_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Position in the product basis: Fock index `n` and spin index `k = m + N/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub n: usize,
    pub k: usize,
}

impl BasisIndex {
    pub fn flatten(self, n_spins: usize) -> usize {
        self.n * (n_spins + 1) + self.k
    }

    pub fn unflatten(index: usize, n_spins: usize) -> Self {
        BasisIndex {
            n: index / (n_spins + 1),
            k: index % (n_spins + 1),
        }
    }

    /// Spin projection m (half-integer for odd N).
    pub fn m(self, n_spins: usize) -> f64 {
        self.k as f64 - n_spins as f64 / 2.0
    }
}

/// Which factor of the product space a local matrix acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Boson,
    Spin,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorTag {
    Sx,
    Sy,
    Sz,
    Annihilation,
    Creation,
    Number,
    Quadrature,
    Identity,
    Hamiltonian,
    Parity,
    SpinAxis(BlochAxis),
    Custom(String),
}

/// One Kronecker term `coeff · (boson ⊗ spin)`; `None` stands for the identity.
#[derive(Debug, Clone)]
struct KronTerm {
    coeff: C64,
    boson: Option<CsrMatrix>,
    spin: Option<CsrMatrix>,
}

/// Sparse operator on the product space stored as a sum of Kronecker terms.
#[derive(Debug, Clone)]
pub struct Operator {
    tag: OperatorTag,
    n_boson: usize,
    n_spin: usize,
    terms: Vec<KronTerm>,
}

impl Operator {
    pub fn spin_local(tag: OperatorTag, n_boson: usize, spin: CsrMatrix) -> Self {
        let n_spin = spin.nrows();
        Operator {
            tag,
            n_boson,
            n_spin,
            terms: vec![KronTerm {
                coeff: ONE,
                boson: None,
                spin: Some(spin),
            }],
        }
    }

    pub fn boson_local(tag: OperatorTag, n_spin: usize, boson: CsrMatrix) -> Self {
        let n_boson = boson.nrows();
        Operator {
            tag,
            n_boson,
            n_spin,
            terms: vec![KronTerm {
                coeff: ONE,
                boson: Some(boson),
                spin: None,
            }],
        }
    }

    pub fn identity(n_boson: usize, n_spin: usize) -> Self {
        Operator {
            tag: OperatorTag::Identity,
            n_boson,
            n_spin,
            terms: vec![KronTerm {
                coeff: ONE,
                boson: None,
                spin: None,
            }],
        }
    }

    pub fn tag(&self) -> &OperatorTag {
        &self.tag
    }

    pub fn with_tag(mut self, tag: OperatorTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn dim(&self) -> usize {
        self.n_boson * self.n_spin
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_boson, self.n_spin)
    }

    /// Sum of two operators on the same space.
    pub fn plus(&self, other: &Operator) -> Operator {
        assert_eq!(self.dims(), other.dims(), "operator dimensions differ");
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Operator {
            tag: OperatorTag::Custom("sum".into()),
            n_boson: self.n_boson,
            n_spin: self.n_spin,
            terms,
        }
    }

    pub fn scaled(&self, s: f64) -> Operator {
        let mut o = self.clone();
        o.terms.iter_mut().for_each(|t| t.coeff *= s);
        o
    }

    /// Product of two operators, expanded term by term.
    pub fn times(&self, other: &Operator) -> Operator {
        assert_eq!(self.dims(), other.dims(), "operator dimensions differ");
        let mul = |a: &Option<CsrMatrix>, b: &Option<CsrMatrix>| match (a, b) {
            (None, None) => None,
            (Some(x), None) | (None, Some(x)) => Some(x.clone()),
            (Some(x), Some(y)) => Some(x.matmul(y)),
        };
        let mut terms = Vec::new();
        for s in &self.terms {
            for o in &other.terms {
                terms.push(KronTerm {
                    coeff: s.coeff * o.coeff,
                    boson: mul(&s.boson, &o.boson),
                    spin: mul(&s.spin, &o.spin),
                });
            }
        }
        Operator {
            tag: OperatorTag::Custom("product".into()),
            n_boson: self.n_boson,
            n_spin: self.n_spin,
            terms,
        }
    }

    /// Applies the operator to a flattened amplitude vector.
    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        assert_eq!(psi.len(), self.dim(), "state dimension mismatch");
        let (nb, ns) = (self.n_boson, self.n_spin);
        let mut out = vec![ZERO; psi.len()];
        let mut tmp = vec![ZERO; psi.len()];
        for term in &self.terms {
            let src: &[C64] = match &term.spin {
                Some(s) => {
                    tmp.iter_mut().for_each(|z| *z = ZERO);
                    for n in 0..nb {
                        s.matvec_acc(&psi[n * ns..(n + 1) * ns], ONE, &mut tmp[n * ns..(n + 1) * ns]);
                    }
                    &tmp
                }
                None => psi,
            };
            match &term.boson {
                Some(b) => {
                    for n in 0..nb {
                        for (n2, v) in b.row(n) {
                            let c = term.coeff * v;
                            let (dst, from) = (&mut out[n * ns..(n + 1) * ns], &src[n2 * ns..(n2 + 1) * ns]);
                            dst.iter_mut().zip(from).for_each(|(d, f)| *d += c * f);
                        }
                    }
                }
                None => out.iter_mut().zip(src).for_each(|(d, f)| *d += term.coeff * f),
            }
        }
        out
    }

    /// Assembled global sparse matrix.
    pub fn to_csr(&self) -> CsrMatrix {
        let ib = CsrMatrix::identity(self.n_boson);
        let is = CsrMatrix::identity(self.n_spin);
        let mut acc: Option<CsrMatrix> = None;
        for t in &self.terms {
            let k = t.boson.as_ref().unwrap_or(&ib).kron(t.spin.as_ref().unwrap_or(&is)).scaled(t.coeff);
            acc = Some(match acc {
                None => k,
                Some(a) => a.add(&k),
            });
        }
        acc.unwrap_or_else(|| CsrMatrix::from_triplets(self.dim(), self.dim(), Vec::new()))
    }

    pub fn to_dense(&self) -> Array2<C64> {
        self.to_csr().to_dense()
    }

    /// Largest |O − O†| entry.
    pub fn hermiticity_defect(&self) -> f64 {
        self.to_csr().hermiticity_defect()
    }

    pub fn expectation(&self, psi: &[C64]) -> C64 {
        linalg::inner(psi, &self.apply(psi))
    }

    /// ⟨O²⟩ − ⟨O⟩² for a Hermitian operator.
    pub fn variance(&self, psi: &[C64]) -> f64 {
        let o = self.apply(psi);
        let mean = linalg::inner(psi, &o).re;
        linalg::norm_sqr(&o) - mean * mean
    }
}

/// Spin operators S_z, S_+ on the (N+1)-dimensional symmetric manifold.
pub mod spin {
    use super::*;

    pub fn projections(n_spins: usize) -> Vec<f64> {
        (0..=n_spins).map(|k| k as f64 - n_spins as f64 / 2.0).collect()
    }

    pub fn sz(n_spins: usize) -> CsrMatrix {
        CsrMatrix::diagonal(&projections(n_spins))
    }

    pub fn raising(n_spins: usize) -> CsrMatrix {
        let j = n_spins as f64 / 2.0;
        let ms = projections(n_spins);
        let t = (0..n_spins)
            .map(|k| {
                let m = ms[k];
                (k + 1, k, C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0))
            })
            .collect();
        CsrMatrix::from_triplets(n_spins + 1, n_spins + 1, t)
    }

    pub fn sx(n_spins: usize) -> CsrMatrix {
        let p = raising(n_spins);
        p.add(&p.adjoint()).scaled(C64::new(0.5, 0.0))
    }

    pub fn sy(n_spins: usize) -> CsrMatrix {
        let p = raising(n_spins);
        p.add(&p.adjoint().scaled(C64::new(-1.0, 0.0))).scaled(C64::new(0.0, -0.5))
    }

    /// S_r = e_r · S for a Bloch axis.
    pub fn along(n_spins: usize, axis: BlochAxis) -> CsrMatrix {
        let [x, y, z] = axis.unit_vector();
        sx(n_spins)
            .scaled(C64::new(x, 0.0))
            .add(&sy(n_spins).scaled(C64::new(y, 0.0)))
            .add(&sz(n_spins).scaled(C64::new(z, 0.0)))
    }

    /// Eigenbasis of S_x: row `r` holds |m_x = r − N/2⟩ in the S_z basis.
    pub fn x_basis(n_spins: usize) -> Array2<f64> {
        let sx = sx(n_spins).to_dense().mapv(|z| z.re);
        let (_, v) = linalg::symmetric_eigen(sx, true).expect("S_x is symmetric and small");
        v.expect("vectors requested")
    }

    /// Wigner small-d matrix d(β)[k', k] = ⟨m'| e^{−iβS_y} |m⟩ in ascending-m order.
    pub fn wigner_d(n_spins: usize, beta: f64) -> Array2<f64> {
        wigner_d_from_x_basis(n_spins, &x_basis(n_spins), beta)
    }

    pub(crate) fn wigner_d_from_x_basis(n_spins: usize, xb: &Array2<f64>, beta: f64) -> Array2<f64> {
        // e^{−iβS_y} = U e^{−iβS_x} U† with U = e^{−iπS_z/2}.
        let ms = projections(n_spins);
        let d = n_spins + 1;
        let phases: Vec<C64> = ms.iter().map(|&m| C64::from_polar(1.0, -beta * m)).collect();
        let mut out = Array2::zeros((d, d));
        for a in 0..d {
            for b in 0..d {
                let mut s = ZERO;
                for r in 0..d {
                    s += phases[r] * (xb[[r, a]] * xb[[r, b]]);
                }
                let u = C64::from_polar(1.0, -FRAC_PI_2 * (ms[a] - ms[b]));
                out[[a, b]] = (u * s).re;
            }
        }
        out
    }

    /// Columns are the S_r eigenvectors |m_r⟩ (ascending m) in the S_z basis:
    /// R(θ, φ) = e^{−iφS_z} e^{−iθS_y}.
    pub fn rotation(n_spins: usize, axis: BlochAxis) -> Array2<C64> {
        let d = wigner_d(n_spins, axis.theta);
        let ms = projections(n_spins);
        Array2::from_shape_fn(d.raw_dim(), |(a, b)| C64::from_polar(1.0, -axis.phi * ms[a]) * d[[a, b]])
    }
}

/// Truncated boson operators on Fock states 0..=n_max.
pub mod boson {
    use super::*;

    pub fn annihilation(n_max: usize) -> CsrMatrix {
        let t = (1..=n_max).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))).collect();
        CsrMatrix::from_triplets(n_max + 1, n_max + 1, t)
    }

    pub fn number(n_max: usize) -> CsrMatrix {
        CsrMatrix::diagonal(&(0..=n_max).map(|n| n as f64).collect::<Vec<_>>())
    }

    /// X = (a + a†)/2.
    pub fn quadrature(n_max: usize) -> CsrMatrix {
        let a = annihilation(n_max);
        a.add(&a.adjoint()).scaled(C64::new(0.5, 0.0))
    }
}

/// Direction on the Bloch sphere in polar/azimuthal angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochAxis {
    pub theta: f64,
    pub phi: f64,
}

impl BlochAxis {
    pub const X: BlochAxis = BlochAxis { theta: FRAC_PI_2, phi: 0.0 };
    pub const Y: BlochAxis = BlochAxis {
        theta: FRAC_PI_2,
        phi: FRAC_PI_2,
    };
    pub const Z: BlochAxis = BlochAxis { theta: 0.0, phi: 0.0 };

    pub fn new(theta: f64, phi: f64) -> Self {
        BlochAxis { theta, phi }
    }

    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::param("axis", "axis vector must be non-zero"));
        }
        let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]);
        Ok(BlochAxis { theta, phi })
    }

    /// Cartesian components with rounding residue (|v| < 1e-15) set to zero,
    /// so the named axes are exact and a state polarized along x maps onto
    /// the mean-field fixed point itself rather than a point 1e-14 away.
    pub fn unit_vector(&self) -> [f64; 3] {
        let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
        [
            snap(self.theta.sin() * self.phi.cos()),
            snap(self.theta.sin() * self.phi.sin()),
            snap(self.theta.cos()),
        ]
    }
}

/// Sign of the extremal projection, m = ±N/2 along the axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    Up,
    Down,
}

impl Polarization {
    pub fn sign(self) -> f64 {
        match self {
            Polarization::Up => 1.0,
            Polarization::Down => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BosonState {
    Fock(usize),
    Coherent { re: f64, im: f64 },
}

/// Recipe for a product initial state: spin coherent state ⊗ boson state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub axis: BlochAxis,
    pub polarization: Polarization,
    pub boson: BosonState,
}

impl InitialState {
    /// |(−N/2)_x⟩ ⊗ |0⟩, which sits at the critical energy E_c.
    pub fn critical() -> Self {
        InitialState {
            axis: BlochAxis::X,
            polarization: Polarization::Down,
            boson: BosonState::Fock(0),
        }
    }

    pub fn prepare(&self, p: &ModelParams) -> Result<StateVector> {
        let spin = coherent_spin_amplitudes(p.n_spins, self.axis, self.polarization);
        let bos = boson_amplitudes(p.n_max, self.boson)?;
        let ns = p.spin_dim();
        let mut amps = vec![ZERO; p.dim()];
        for (n, b) in bos.iter().enumerate() {
            for (k, s) in spin.iter().enumerate() {
                amps[n * ns + k] = b * s;
            }
        }
        Ok(StateVector {
            amps,
            n_boson: p.boson_dim(),
            n_spin: ns,
            recipe: StateRecipe::Initial(*self),
        })
    }

    /// Mean-field image of the state (spin vector and boson amplitude).
    pub fn mean_field(&self, n_spins: usize) -> [f64; 5] {
        let j = n_spins as f64 / 2.0 * self.polarization.sign();
        let [x, y, z] = self.axis.unit_vector();
        let (ar, ai) = match self.boson {
            BosonState::Fock(_) => (0.0, 0.0),
            BosonState::Coherent { re, im } => (re, im),
        };
        [j * x, j * y, j * z, ar, ai]
    }
}

/// Extremal S_r eigenstate on the spin factor, by exact rotation of |m_z = ±N/2⟩.
pub fn coherent_spin_amplitudes(n_spins: usize, axis: BlochAxis, pol: Polarization) -> Vec<C64> {
    let r = spin::rotation(n_spins, axis);
    let col = match pol {
        Polarization::Down => 0,
        Polarization::Up => n_spins,
    };
    r.column(col).to_vec()
}

fn boson_amplitudes(n_max: usize, b: BosonState) -> Result<Vec<C64>> {
    let mut v = vec![ZERO; n_max + 1];
    match b {
        BosonState::Fock(n0) => {
            if n0 > n_max {
                return Err(Error::Cutoff(format!("Fock state {n0} above cutoff n_max = {n_max}")));
            }
            v[n0] = ONE;
        }
        BosonState::Coherent { re, im } => {
            let alpha = C64::new(re, im);
            let mut amp = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
            for (n, slot) in v.iter_mut().enumerate() {
                if n > 0 {
                    amp *= alpha / (n as f64).sqrt();
                }
                *slot = amp;
            }
            let tail = 1.0 - linalg::norm_sqr(&v);
            if tail > 1e-12 {
                return Err(Error::Cutoff(format!(
                    "coherent amplitude |α|² = {:.3} loses {tail:.2e} of its norm at n_max = {n_max}",
                    alpha.norm_sqr()
                )));
            }
        }
    }
    Ok(v)
}

pub fn coherent_spin_state(p: &ModelParams, axis: BlochAxis, pol: Polarization, n0: usize) -> Result<StateVector> {
    InitialState {
        axis,
        polarization: pol,
        boson: BosonState::Fock(n0),
    }
    .prepare(p)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateRecipe {
    Initial(InitialState),
    Evolved { from: Box<StateRecipe>, t_ms: f64 },
    Custom(String),
}

/// Normalized pure state on the product basis.
#[derive(Debug, Clone)]
pub struct StateVector {
    amps: Vec<C64>,
    n_boson: usize,
    n_spin: usize,
    recipe: StateRecipe,
}

impl StateVector {
    /// Wraps amplitudes after checking the norm is 1 within 1e-12.
    pub fn new(amps: Vec<C64>, n_boson: usize, n_spin: usize, recipe: StateRecipe) -> Result<Self> {
        if amps.len() != n_boson * n_spin {
            return Err(Error::Contract(format!(
                "{} amplitudes for a {}x{} space",
                amps.len(),
                n_boson,
                n_spin
            )));
        }
        let norm = linalg::norm_sqr(&amps).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("state norm {norm} differs from 1")));
        }
        Ok(StateVector {
            amps,
            n_boson,
            n_spin,
            recipe,
        })
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(mut amps: Vec<C64>, n_boson: usize, n_spin: usize, recipe: StateRecipe) -> Result<Self> {
        let norm = linalg::norm_sqr(&amps).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Contract("cannot normalize a zero vector".into()));
        }
        amps.iter_mut().for_each(|z| *z /= norm);
        Self::new(amps, n_boson, n_spin, recipe)
    }

    pub(crate) fn from_parts(amps: Vec<C64>, n_boson: usize, n_spin: usize, recipe: StateRecipe) -> Self {
        debug_assert_eq!(amps.len(), n_boson * n_spin);
        StateVector {
            amps,
            n_boson,
            n_spin,
            recipe,
        }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    /// Amplitudes as an (n_max+1) × (N+1) matrix.
    pub fn as_matrix(&self) -> ArrayView2<'_, C64> {
        ArrayView2::from_shape((self.n_boson, self.n_spin), &self.amps).expect("consistent dims")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_boson, self.n_spin)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_spins(&self) -> usize {
        self.n_spin - 1
    }

    pub fn recipe(&self) -> &StateRecipe {
        &self.recipe
    }

    pub fn norm(&self) -> f64 {
        linalg::norm_sqr(&self.amps).sqrt()
    }

    pub fn overlap(&self, other: &StateVector) -> C64 {
        linalg::inner(&self.amps, &other.amps)
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        op.expectation(&self.amps)
    }

    pub fn variance(&self, op: &Operator) -> f64 {
        op.variance(&self.amps)
    }

    /// P(n) summed over the spin.
    pub fn boson_populations(&self) -> Vec<f64> {
        self.as_matrix().rows().into_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum()).collect()
    }

    /// P(m_z) summed over the boson.
    pub fn spin_populations(&self) -> Vec<f64> {
        self.as_matrix()
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// Population in the two highest Fock rows, the cutoff-convergence tail.
    pub fn cutoff_tail(&self) -> f64 {
        let p = self.boson_populations();
        p.iter().rev().take(2).sum()
    }

    /// ρ_spin = Tr_boson |ψ⟩⟨ψ| in the S_z basis.
    pub fn reduced_spin(&self) -> Array2<C64> {
        let m = self.as_matrix();
        // ρ[k, k'] = Σ_n ψ[n,k] ψ*[n,k']
        m.t().dot(&m.mapv(|z| z.conj()))
    }

    /// ρ_ph = Tr_spin |ψ⟩⟨ψ| in the Fock basis.
    pub fn reduced_boson(&self) -> Array2<C64> {
        let m = self.as_matrix();
        m.dot(&m.t().mapv(|z| z.conj()))
    }

    pub fn to_density(&self) -> DensityMatrix {
        let d = self.dim();
        let data = Array2::from_shape_fn((d, d), |(i, j)| self.amps[i] * self.amps[j].conj());
        DensityMatrix {
            data,
            n_boson: self.n_boson,
            n_spin: self.n_spin,
        }
    }
}

/// Density matrix on the product basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    data: Array2<C64>,
    n_boson: usize,
    n_spin: usize,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(data: Array2<C64>, n_boson: usize, n_spin: usize) -> Result<Self> {
        let d = n_boson * n_spin;
        if data.dim() != (d, d) {
            return Err(Error::Contract(format!("density matrix shape {:?} for dimension {d}", data.dim())));
        }
        let herm = linalg::max_abs_diff(data.view(), linalg::adjoint(data.view()).view());
        if herm > 1e-10 {
            return Err(Error::Contract(format!("density matrix not Hermitian (defect {herm:.2e})")));
        }
        let tr: C64 = data.diag().iter().sum();
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::Contract(format!("density matrix trace {tr} differs from 1")));
        }
        let lo = hermitian_eigenvalues(data.view())?.into_iter().fold(f64::INFINITY, f64::min);
        if lo < -1e-10 {
            return Err(Error::Contract(format!("density matrix has eigenvalue {lo:.3e}")));
        }
        Ok(DensityMatrix { data, n_boson, n_spin })
    }

    pub fn matrix(&self) -> ArrayView2<'_, C64> {
        self.data.view()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_boson, self.n_spin)
    }

    pub fn n_spins(&self) -> usize {
        self.n_spin - 1
    }

    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Element ρ[(n,k), (n',k')].
    pub fn at(&self, n: usize, k: usize, n2: usize, k2: usize) -> C64 {
        self.data[[n * self.n_spin + k, n2 * self.n_spin + k2]]
    }

    pub fn reduced_spin(&self) -> Array2<C64> {
        let ns = self.n_spin;
        Array2::from_shape_fn((ns, ns), |(k, k2)| (0..self.n_boson).map(|n| self.at(n, k, n, k2)).sum())
    }

    pub fn reduced_boson(&self) -> Array2<C64> {
        let nb = self.n_boson;
        Array2::from_shape_fn((nb, nb), |(n, n2)| (0..self.n_spin).map(|k| self.at(n, k, n2, k)).sum())
    }

    /// Applies the local unitary `1 ⊗ u` on the spin factor: ρ → (1⊗u) ρ (1⊗u)†.
    pub fn rotate_spin(&self, u: ArrayView2<C64>) -> DensityMatrix {
        let ub = kron_identity_left(self.n_boson, u);
        let data = ub.dot(&self.data).dot(&linalg::adjoint(ub.view()));
        DensityMatrix {
            data,
            n_boson: self.n_boson,
            n_spin: self.n_spin,
        }
    }
}

fn kron_identity_left(n: usize, u: ArrayView2<C64>) -> Array2<C64> {
    let m = u.nrows();
    let mut out = Array2::zeros((n * m, n * m));
    for b in 0..n {
        out.slice_mut(ndarray::s![b * m..(b + 1) * m, b * m..(b + 1) * m]).assign(&u);
    }
    out
}

/// Eigenvalues of a complex Hermitian matrix via its real symmetric embedding
/// [[A, −B], [B, A]] (each eigenvalue appears twice there).
pub fn hermitian_eigenvalues(h: ArrayView2<C64>) -> Result<Vec<f64>> {
    let n = h.nrows();
    let mut big = Array2::zeros((2 * n, 2 * n));
    for ((i, j), z) in h.indexed_iter() {
        big[[i, j]] = z.re;
        big[[i + n, j + n]] = z.re;
        big[[i, j + n]] = -z.im;
        big[[i + n, j]] = z.im;
    }
    let (w, _) = linalg::symmetric_eigen(big, false)?;
    Ok(w.into_iter().step_by(2).collect())
}

/// The named operators of one model instance.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
    pub a: Operator,
    pub a_dag: Operator,
    pub number: Operator,
    pub quadrature: Operator,
    pub identity: Operator,
}

pub fn build_operators(p: &ModelParams) -> Result<OperatorSet> {
    p.validate()?;
    let (nb, ns, n) = (p.boson_dim(), p.spin_dim(), p.n_spins);
    let a = boson::annihilation(p.n_max);
    Ok(OperatorSet {
        sx: Operator::spin_local(OperatorTag::Sx, nb, spin::sx(n)),
        sy: Operator::spin_local(OperatorTag::Sy, nb, spin::sy(n)),
        sz: Operator::spin_local(OperatorTag::Sz, nb, spin::sz(n)),
        a_dag: Operator::boson_local(OperatorTag::Creation, ns, a.adjoint()),
        a: Operator::boson_local(OperatorTag::Annihilation, ns, a),
        number: Operator::boson_local(OperatorTag::Number, ns, boson::number(p.n_max)),
        quadrature: Operator::boson_local(OperatorTag::Quadrature, ns, boson::quadrature(p.n_max)),
        identity: Operator::identity(nb, ns),
    })
}

/// H = (2ω_g/√N)(a+a†)S_z + ω_δ a†a + ω_B S_x in rad/ms.
pub fn build_hamiltonian(p: &ModelParams) -> Result<Operator> {
    p.validate()?;
    let n = p.n_spins;
    let coupling = 2.0 * p.omega_g() / (n as f64).sqrt();
    let a = boson::annihilation(p.n_max);
    let x2 = a.add(&a.adjoint());
    let terms = vec![
        KronTerm {
            coeff: C64::new(coupling, 0.0),
            boson: Some(x2),
            spin: Some(spin::sz(n)),
        },
        KronTerm {
            coeff: C64::new(p.omega_delta(), 0.0),
            boson: Some(boson::number(p.n_max)),
            spin: None,
        },
        KronTerm {
            coeff: C64::new(p.omega_b(), 0.0),
            boson: None,
            spin: Some(spin::sx(n)),
        },
    ];
    Ok(Operator {
        tag: OperatorTag::Hamiltonian,
        n_boson: p.boson_dim(),
        n_spin: p.spin_dim(),
        terms,
    })
}

/// S_r = sinθcosφ S_x + sinθsinφ S_y + cosθ S_z.
pub fn rotation_generator(p: &ModelParams, axis: BlochAxis) -> Operator {
    Operator::spin_local(OperatorTag::SpinAxis(axis), p.boson_dim(), spin::along(p.n_spins, axis))
}

/// Parity exp[iπ(n̂ + S_x + N/2)], the Z₂ symmetry of H.
pub fn parity_operator(p: &ModelParams) -> Operator {
    let xb = spin::x_basis(p.n_spins);
    let ns = p.spin_dim();
    let signs: Vec<f64> = (0..ns).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let spin_part = Array2::from_shape_fn((ns, ns), |(a, b)| {
        C64::new((0..ns).map(|r| signs[r] * xb[[r, a]] * xb[[r, b]]).sum(), 0.0)
    });
    let bos: Vec<f64> = (0..p.boson_dim()).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
    Operator {
        tag: OperatorTag::Parity,
        n_boson: p.boson_dim(),
        n_spin: ns,
        terms: vec![KronTerm {
            coeff: ONE,
            boson: Some(CsrMatrix::diagonal(&bos)),
            spin: Some(CsrMatrix::from_dense(spin_part.view())),
        }],
    }
}
