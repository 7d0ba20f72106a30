//! Six-band (or four-band) Lüttinger–Kohn Hamiltonian with confinement and
//! magnetic terms, in the spinor basis `orbital·bands + band`.
//!
//! Band order: (3/2,3/2), (3/2,1/2), (3/2,−1/2), (3/2,−3/2), (1/2,1/2), (1/2,−1/2).
//!
//! The matrix is kept in two parts: a sparse complex part (k·p, spin-orbit
//! and magnetic terms) and a dense real orbital matrix for the projected
//! potential, acting as `U ⊗ 1_band`.

use std::sync::{Arc, OnceLock};

use faer::sparse::linalg::matmul::sparse_dense_matmul;
use faer::sparse::{SparseRowMat, Triplet};
use faer::{c64, Accum, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::basis::{axis_ops_for, tensor_triplets, Axis, BasisSpec, OperatorLabel};
use crate::error::{Error, Result};
use crate::potential::PotentialField;
use crate::quadrature::{hermite_functions, GaussHermite};
use crate::units::{E_OVER_HBAR, HBAR2_OVER_2M0, MU_B};

/// Band labels as (2J, 2M).
pub const BANDS: [(i32, i32); 6] = [(3, 3), (3, 1), (3, -1), (3, -3), (1, 1), (1, -1)];

/// Band family of each band index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandFamily {
    Heavy,
    Light,
    SplitOff,
}

pub fn band_family(band: usize) -> BandFamily {
    match band {
        0 | 3 => BandFamily::Heavy,
        1 | 2 => BandFamily::Light,
        _ => BandFamily::SplitOff,
    }
}

/// Band b ↔ Θ-partner band with M → −M.
pub const TR_PARTNER: [usize; 6] = [3, 2, 1, 0, 5, 4];
/// (−1)^{J+M} for each band.
pub const TR_SIGN: [f64; 6] = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0];

fn c(re: f64) -> c64 {
    c64::new(re, 0.0)
}

/// Lüttinger parameters and band-structure options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LuttingerParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub kappa: f64,
    /// Spin-orbit splitting (meV).
    pub delta_so: f64,
    /// 6 (with split-off bands) or 4.
    pub band_count: usize,
    /// When false, the band-coupling operators R and S are dropped.
    pub band_coupling: bool,
}

impl Default for LuttingerParams {
    fn default() -> Self {
        Self {
            gamma1: 4.285,
            gamma2: 0.339,
            gamma3: 1.446,
            kappa: -0.4283,
            delta_so: 44.0,
            band_count: 6,
            band_coupling: true,
        }
    }
}

impl LuttingerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0 && self.gamma1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "luttinger.gamma1 must be positive, got {}",
                self.gamma1
            )));
        }
        if !(self.delta_so >= 0.0) || self.delta_so.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "luttinger.delta_so must be >= 0, got {}",
                self.delta_so
            )));
        }
        if !matches!(self.band_count, 4 | 6) {
            return Err(Error::InvalidParameter(format!(
                "luttinger.band_count must be 4 or 6, got {}",
                self.band_count
            )));
        }
        if !(self.gamma2.is_finite() && self.gamma3.is_finite() && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter("luttinger parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Which magnetic contributions are included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagneticTerms {
    pub zeeman: bool,
    pub paramagnetic: bool,
    pub diamagnetic: bool,
}

impl Default for MagneticTerms {
    fn default() -> Self {
        Self::ALL
    }
}

impl MagneticTerms {
    pub const ALL: Self = Self {
        zeeman: true,
        paramagnetic: true,
        diamagnetic: true,
    };
    pub const NONE: Self = Self {
        zeeman: false,
        paramagnetic: false,
        diamagnetic: false,
    };
    pub const ZEEMAN_ONLY: Self = Self {
        zeeman: true,
        paramagnetic: false,
        diamagnetic: false,
    };
}

/// Static magnetic field B·b with b = (sinθcosφ, sinθsinφ, cosθ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagneticField {
    /// |B| in T.
    pub magnitude: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub terms: MagneticTerms,
}

/// Unit vector for polar angle θ and azimuth φ in degrees.
pub fn direction(theta_deg: f64, phi_deg: f64) -> [f64; 3] {
    let (st, ct) = theta_deg.to_radians().sin_cos();
    let (sp, cp) = phi_deg.to_radians().sin_cos();
    [st * cp, st * sp, ct]
}

impl MagneticField {
    pub fn new(magnitude: f64, theta_deg: f64, phi_deg: f64) -> Result<Self> {
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "field magnitude must be >= 0, got {magnitude}"
            )));
        }
        if !(theta_deg.is_finite() && phi_deg.is_finite()) {
            return Err(Error::InvalidParameter("field angles must be finite".into()));
        }
        Ok(Self {
            magnitude,
            theta_deg,
            phi_deg,
            terms: MagneticTerms::ALL,
        })
    }

    pub fn zero() -> Self {
        Self {
            magnitude: 0.0,
            theta_deg: 0.0,
            phi_deg: 0.0,
            terms: MagneticTerms::ALL,
        }
    }

    /// Field along +z.
    pub fn along_z(magnitude: f64) -> Self {
        Self {
            magnitude,
            ..Self::zero()
        }
    }

    /// Field from a Cartesian vector in T.
    pub fn from_vector(b: [f64; 3]) -> Self {
        let magnitude = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        if magnitude == 0.0 {
            return Self::zero();
        }
        let theta_deg = (b[2] / magnitude).clamp(-1.0, 1.0).acos().to_degrees();
        let phi_deg = b[1].atan2(b[0]).to_degrees();
        Self {
            magnitude,
            theta_deg,
            phi_deg,
            terms: MagneticTerms::ALL,
        }
    }

    pub fn with_terms(mut self, terms: MagneticTerms) -> Self {
        self.terms = terms;
        self
    }

    pub fn unit(&self) -> [f64; 3] {
        direction(self.theta_deg, self.phi_deg)
    }

    /// Cartesian components in T.
    pub fn vector(&self) -> [f64; 3] {
        self.unit().map(|u| u * self.magnitude)
    }
}

/// Hermitian matrix H = S + U ⊗ 1_band with sparse S and dense real orbital U.
#[derive(Clone)]
pub struct HamiltonianMatrix {
    pub bands: usize,
    pub orbital_dim: usize,
    triplets: Arc<Vec<(usize, usize, c64)>>,
    potential: Option<Arc<Mat<f64>>>,
    csr: Arc<OnceLock<SparseRowMat<usize, c64>>>,
    /// Gate voltage the potential part corresponds to, if any.
    pub v_g: Option<f64>,
    /// Magnetic field included, if any.
    pub field: Option<MagneticField>,
}

impl std::fmt::Debug for HamiltonianMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianMatrix")
            .field("dim", &self.dim())
            .field("bands", &self.bands)
            .field("sparse_entries", &self.triplets.len())
            .field("has_potential", &self.potential.is_some())
            .field("v_g", &self.v_g)
            .finish()
    }
}

impl HamiltonianMatrix {
    fn from_triplets(bands: usize, orbital_dim: usize, triplets: Vec<(usize, usize, c64)>) -> Self {
        Self {
            bands,
            orbital_dim,
            triplets: Arc::new(triplets),
            potential: None,
            csr: Arc::new(OnceLock::new()),
            v_g: None,
            field: None,
        }
    }

    pub fn zeros(bands: usize, orbital_dim: usize) -> Self {
        Self::from_triplets(bands, orbital_dim, Vec::new())
    }

    /// `U ⊗ 1_band` for a real symmetric orbital matrix `U`.
    pub fn from_orbital_potential(bands: usize, potential: Mat<f64>) -> Self {
        let mut h = Self::zeros(bands, potential.nrows());
        h.potential = Some(Arc::new(potential));
        h
    }

    pub fn dim(&self) -> usize {
        self.bands * self.orbital_dim
    }

    pub fn orbital_potential(&self) -> Option<&Mat<f64>> {
        self.potential.as_deref()
    }

    /// Visits the sparse-part entries (duplicates not merged).
    pub fn for_each_sparse(&self, mut f: impl FnMut(usize, usize, c64)) {
        for &(i, j, v) in self.triplets.iter() {
            f(i, j, v);
        }
    }

    /// Sum of two matrices over the same basis.
    pub fn plus(&self, other: &HamiltonianMatrix) -> Result<HamiltonianMatrix> {
        if self.bands != other.bands || self.orbital_dim != other.orbital_dim {
            return Err(Error::InvalidParameter(format!(
                "cannot add Hamiltonians of shapes {}x{} and {}x{}",
                self.orbital_dim, self.bands, other.orbital_dim, other.bands
            )));
        }
        let triplets = if other.triplets.is_empty() {
            self.triplets.clone()
        } else if self.triplets.is_empty() {
            other.triplets.clone()
        } else {
            let mut t = Vec::with_capacity(self.triplets.len() + other.triplets.len());
            t.extend_from_slice(&self.triplets);
            t.extend_from_slice(&other.triplets);
            Arc::new(t)
        };
        let potential = match (&self.potential, &other.potential) {
            (Some(a), Some(b)) => Some(Arc::new(a.as_ref() + b.as_ref())),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        let csr = if Arc::ptr_eq(&triplets, &self.triplets) {
            self.csr.clone()
        } else if Arc::ptr_eq(&triplets, &other.triplets) {
            other.csr.clone()
        } else {
            Arc::new(OnceLock::new())
        };
        Ok(HamiltonianMatrix {
            bands: self.bands,
            orbital_dim: self.orbital_dim,
            triplets,
            potential,
            csr,
            v_g: self.v_g.or(other.v_g),
            field: self.field.or(other.field),
        })
    }

    pub fn scaled(&self, s: f64) -> HamiltonianMatrix {
        let triplets = self.triplets.iter().map(|&(i, j, v)| (i, j, v * s)).collect();
        let mut h = Self::from_triplets(self.bands, self.orbital_dim, triplets);
        h.potential = self.potential.as_ref().map(|p| Arc::new(p.as_ref() * faer::Scale(s)));
        h.v_g = self.v_g;
        h.field = self.field;
        h
    }

    fn sparse(&self) -> &SparseRowMat<usize, c64> {
        self.csr.get_or_init(|| {
            let t: Vec<Triplet<usize, usize, c64>> =
                self.triplets.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
            SparseRowMat::try_new_from_triplets(self.dim(), self.dim(), &t)
                .expect("Hamiltonian triplet indices are in range by construction")
        })
    }

    /// Y = H·X for a block of column vectors.
    pub fn apply(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let n = self.dim();
        assert_eq!(x.nrows(), n);
        let k = x.ncols();
        let mut y = Mat::<c64>::zeros(n, k);
        if !self.triplets.is_empty() {
            sparse_dense_matmul(y.as_mut(), Accum::Replace, self.sparse().as_ref(), x, c(1.0), Par::Seq);
        }
        if let Some(u) = &self.potential {
            let nb = self.bands;
            let no = self.orbital_dim;
            // Columns of `flat`: (vector, band, re/im).
            let mut flat = Mat::<f64>::zeros(no, 2 * nb * k);
            for col in 0..k {
                for orb in 0..no {
                    for b in 0..nb {
                        let v = x[(orb * nb + b, col)];
                        flat[(orb, 2 * (col * nb + b))] = v.re;
                        flat[(orb, 2 * (col * nb + b) + 1)] = v.im;
                    }
                }
            }
            let prod = u.as_ref() * flat.as_ref();
            for col in 0..k {
                for orb in 0..no {
                    for b in 0..nb {
                        let j = 2 * (col * nb + b);
                        y[(orb * nb + b, col)] += c64::new(prod[(orb, j)], prod[(orb, j + 1)]);
                    }
                }
            }
        }
        y
    }

    /// ⟨u|H|v⟩.
    pub fn matrix_element(&self, u: &[c64], v: &[c64]) -> c64 {
        let vm = MatRef::from_column_major_slice(v, v.len(), 1);
        let hv = self.apply(vm);
        u.iter().enumerate().map(|(i, a)| a.conj() * hv[(i, 0)]).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for &(i, j, v) in self.triplets.iter() {
            if i == j {
                d[i] += v.re;
            }
        }
        if let Some(u) = &self.potential {
            for orb in 0..self.orbital_dim {
                for b in 0..self.bands {
                    d[orb * self.bands + b] += u[(orb, orb)];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let n = self.dim();
        let mut m = Mat::<c64>::zeros(n, n);
        for &(i, j, v) in self.triplets.iter() {
            m[(i, j)] += v;
        }
        if let Some(u) = &self.potential {
            let nb = self.bands;
            for a in 0..self.orbital_dim {
                for b in 0..self.orbital_dim {
                    let v = u[(a, b)];
                    if v != 0.0 {
                        for band in 0..nb {
                            m[(a * nb + band, b * nb + band)] += c(v);
                        }
                    }
                }
            }
        }
        m
    }

    /// Upper bound on ‖H‖ (maximum absolute row sum).
    pub fn norm_bound(&self) -> f64 {
        let mut rows = vec![0.0; self.dim()];
        for &(i, _, v) in self.triplets.iter() {
            rows[i] += v.norm();
        }
        if let Some(u) = &self.potential {
            for a in 0..self.orbital_dim {
                let s: f64 = (0..self.orbital_dim).map(|b| u[(a, b)].abs()).sum();
                for band in 0..self.bands {
                    rows[a * self.bands + band] += s;
                }
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// max|H − H†| / max|H|, from the dense form.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = self.to_dense();
        relative_defect(&m, |i, j| m[(j, i)].conj())
    }

    /// max|ΘHΘ⁻¹ − H| / max|H|, from the dense form.
    pub fn time_reversal_defect(&self) -> f64 {
        let m = self.to_dense();
        let nb = self.bands;
        let map = |i: usize| {
            let (orb, b) = (i / nb, i % nb);
            (orb * nb + TR_PARTNER[b], TR_SIGN[b])
        };
        relative_defect(&m, |i, j| {
            let (pi, si) = map(i);
            let (pj, sj) = map(j);
            m[(pi, pj)].conj() * (si * sj)
        })
    }
}

fn relative_defect(m: &Mat<c64>, other: impl Fn(usize, usize) -> c64) -> f64 {
    let mut max = 0.0f64;
    let mut diff = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            max = max.max(m[(i, j)].norm());
            diff = diff.max((m[(i, j)] - other(i, j)).norm());
        }
    }
    if max == 0.0 {
        0.0
    } else {
        diff / max
    }
}

type Triplets = Vec<(usize, usize, c64)>;

fn push_label(out: &mut Triplets, spec: &BasisSpec, label: OperatorLabel, coef: c64) {
    if coef == c(0.0) {
        return;
    }
    let ops = axis_ops_for(spec, label);
    out.extend(tensor_triplets(spec, [&ops[0], &ops[1], &ops[2]], coef));
}

/// Coefficients c_{αγ} of the kinetic shift a_α = (e/ħ)A_α = Σ_γ c_{αγ} r_γ
/// for the symmetric gauge A = ½ B × r (nm⁻²).
fn gauge_coefficients(b: [f64; 3]) -> [[f64; 3]; 3] {
    let h = 0.5 * E_OVER_HBAR;
    [
        [0.0, -h * b[2], h * b[1]],
        [h * b[2], 0.0, -h * b[0]],
        [-h * b[1], h * b[0], 0.0],
    ]
}

/// Orbital operators K_{αβ} = {π_α, π_β}/2 restricted to the requested orders in B.
/// Only α ≤ β is filled.
fn kinetic_tensor(spec: &BasisSpec, b: [f64; 3], orders: [bool; 3]) -> [[Triplets; 3]; 3] {
    let cg = gauge_coefficients(b);
    let mut k: [[Triplets; 3]; 3] = Default::default();
    for a in 0..3 {
        for bb in a..3 {
            let (ax, bx) = (Axis::from_index(a), Axis::from_index(bb));
            let out = &mut k[a][bb];
            if orders[0] {
                push_label(out, spec, OperatorLabel::MomentumPair(ax, bx), c(1.0));
            }
            if orders[1] {
                for g in 0..3 {
                    let gx = Axis::from_index(g);
                    push_label(out, spec, OperatorLabel::PositionMomentum(gx, ax), c(cg[bb][g]));
                    push_label(out, spec, OperatorLabel::PositionMomentum(gx, bx), c(cg[a][g]));
                }
            }
            if orders[2] {
                for g in 0..3 {
                    for d in 0..3 {
                        let coef = cg[a][g] * cg[bb][d];
                        push_label(
                            out,
                            spec,
                            OperatorLabel::PositionPair(Axis::from_index(g), Axis::from_index(d)),
                            c(coef),
                        );
                    }
                }
            }
        }
    }
    k
}

fn combine(parts: &[(&Triplets, c64)]) -> Triplets {
    let mut out = Vec::with_capacity(parts.iter().map(|(t, _)| t.len()).sum());
    for (t, s) in parts {
        if *s == c(0.0) {
            continue;
        }
        out.extend(t.iter().map(|&(i, j, v)| (i, j, v * *s)));
    }
    out
}

fn adjoint(t: &Triplets) -> Triplets {
    t.iter().map(|&(i, j, v)| (j, i, v.conj())).collect()
}

/// Luttinger operators P, Q, R, S built from a kinetic tensor.
struct LuttingerOps {
    p: Triplets,
    q: Triplets,
    r: Triplets,
    s: Triplets,
}

fn luttinger_ops(k: &[[Triplets; 3]; 3], lut: &LuttingerParams) -> LuttingerOps {
    let cst = HBAR2_OVER_2M0;
    let s3 = 3f64.sqrt();
    let p = combine(&[
        (&k[0][0], c(cst * lut.gamma1)),
        (&k[1][1], c(cst * lut.gamma1)),
        (&k[2][2], c(cst * lut.gamma1)),
    ]);
    let q = combine(&[
        (&k[0][0], c(cst * lut.gamma2)),
        (&k[1][1], c(cst * lut.gamma2)),
        (&k[2][2], c(-2.0 * cst * lut.gamma2)),
    ]);
    let (r, s) = if lut.band_coupling {
        let r = combine(&[
            (&k[0][0], c(-cst * s3 * lut.gamma3)),
            (&k[1][1], c(cst * s3 * lut.gamma3)),
            (&k[0][1], c64::new(0.0, 2.0 * cst * s3 * lut.gamma2)),
        ]);
        let s = combine(&[
            (&k[0][2], c(2.0 * cst * s3 * lut.gamma3)),
            (&k[1][2], c64::new(0.0, -2.0 * cst * s3 * lut.gamma3)),
        ]);
        (r, s)
    } else {
        (Vec::new(), Vec::new())
    };
    LuttingerOps { p, q, r, s }
}

#[derive(Clone, Copy)]
enum Op {
    P,
    Q,
    R,
    RAdj,
    S,
    SAdj,
}

/// Upper triangle (including the diagonal) of the k·p band pattern.
fn kp_pattern() -> Vec<(usize, usize, Vec<(Op, f64)>)> {
    let r2 = 2f64.sqrt();
    let r32 = 1.5f64.sqrt();
    let h2 = 1.0 / r2;
    use Op::*;
    vec![
        (0, 0, vec![(P, 1.0), (Q, 1.0)]),
        (0, 1, vec![(S, -1.0)]),
        (0, 2, vec![(R, 1.0)]),
        (0, 4, vec![(S, -h2)]),
        (0, 5, vec![(R, r2)]),
        (1, 1, vec![(P, 1.0), (Q, -1.0)]),
        (1, 3, vec![(R, 1.0)]),
        (1, 4, vec![(Q, -r2)]),
        (1, 5, vec![(S, r32)]),
        (2, 2, vec![(P, 1.0), (Q, -1.0)]),
        (2, 3, vec![(S, 1.0)]),
        (2, 4, vec![(SAdj, r32)]),
        (2, 5, vec![(Q, r2)]),
        (3, 3, vec![(P, 1.0), (Q, 1.0)]),
        (3, 4, vec![(RAdj, -r2)]),
        (3, 5, vec![(SAdj, -h2)]),
        (4, 4, vec![(P, 1.0)]),
        (5, 5, vec![(P, 1.0)]),
    ]
}

/// Places orbital blocks into the spinor basis, filling the lower triangle by adjoint.
fn spinor_from_ops(bands: usize, ops: &LuttingerOps) -> Triplets {
    let r_adj = adjoint(&ops.r);
    let s_adj = adjoint(&ops.s);
    let get = |o: Op| -> &Triplets {
        match o {
            Op::P => &ops.p,
            Op::Q => &ops.q,
            Op::R => &ops.r,
            Op::RAdj => &r_adj,
            Op::S => &ops.s,
            Op::SAdj => &s_adj,
        }
    };
    let mut out = Vec::new();
    for (b1, b2, terms) in kp_pattern() {
        if b1 >= bands || b2 >= bands {
            continue;
        }
        for (o, coef) in terms {
            for &(i, j, v) in get(o) {
                let w = v * coef;
                out.push((i * bands + b1, j * bands + b2, w));
                if b1 != b2 {
                    out.push((j * bands + b2, i * bands + b1, w.conj()));
                }
            }
        }
    }
    out
}

/// k·p Hamiltonian at zero field, including the spin-orbit shift of the split-off bands.
pub fn assemble_kp(spec: &BasisSpec, lut: &LuttingerParams) -> Result<HamiltonianMatrix> {
    lut.validate()?;
    let k = kinetic_tensor(spec, [0.0; 3], [true, false, false]);
    let ops = luttinger_ops(&k, lut);
    let bands = lut.band_count;
    let mut t = spinor_from_ops(bands, &ops);
    if bands == 6 && lut.delta_so != 0.0 {
        for orb in 0..spec.dim() {
            for b in 4..6 {
                t.push((orb * 6 + b, orb * 6 + b, c(lut.delta_so)));
            }
        }
    }
    Ok(HamiltonianMatrix::from_triplets(bands, spec.dim(), t))
}

/// 6×6 Zeeman–Bloch block in meV for field vector `b` (T).
pub fn zeeman_block(kappa: f64, b: [f64; 3]) -> [[c64; 6]; 6] {
    let bz = b[2];
    let bp = c64::new(b[0], b[1]);
    let bm = bp.conj();
    let q = kappa + 1.0;
    let s3 = 3f64.sqrt();
    let r2 = 2f64.sqrt();
    let r32 = 1.5f64.sqrt();
    let so = 2.0 * kappa + 1.0;
    let z = c(0.0);
    let mut m = [[z; 6]; 6];
    let upper: [(usize, usize, c64); 15] = [
        (0, 0, c(3.0 * kappa * bz)),
        (0, 1, bm * (s3 * kappa)),
        (0, 4, bm * (r32 * q)),
        (1, 1, c(kappa * bz)),
        (1, 2, bm * (2.0 * kappa)),
        (1, 4, c(-r2 * q * bz)),
        (1, 5, bm * (q / r2)),
        (2, 2, c(-kappa * bz)),
        (2, 3, bm * (s3 * kappa)),
        (2, 4, bp * (-q / r2)),
        (2, 5, c(-r2 * q * bz)),
        (3, 3, c(-3.0 * kappa * bz)),
        (3, 5, bp * (-r32 * q)),
        (4, 4, c(so * bz)),
        (4, 5, bm * so),
    ];
    for (i, j, v) in upper {
        m[i][j] = v * MU_B;
        m[j][i] = (v * MU_B).conj();
    }
    m[5][5] = c(-so * bz * MU_B);
    m
}

/// Zeeman–Bloch term ⊗ orbital identity (zero when the mask excludes it).
pub fn assemble_zeeman(spec: &BasisSpec, lut: &LuttingerParams, field: &MagneticField) -> HamiltonianMatrix {
    let bands = lut.band_count;
    let mut h = HamiltonianMatrix::zeros(bands, spec.dim());
    if field.terms.zeeman && field.magnitude != 0.0 {
        let block = zeeman_block(lut.kappa, field.vector());
        let mut t = Vec::new();
        for orb in 0..spec.dim() {
            for (b1, row) in block.iter().enumerate().take(bands) {
                for (b2, &v) in row.iter().enumerate().take(bands) {
                    if v != c(0.0) {
                        t.push((orb * bands + b1, orb * bands + b2, v));
                    }
                }
            }
        }
        h = HamiltonianMatrix::from_triplets(bands, spec.dim(), t);
    }
    h.field = Some(*field);
    h
}

/// Orbital magnetic terms from minimal coupling, split by order in B.
#[derive(Debug, Clone)]
pub struct FieldOrbital {
    pub paramagnetic: HamiltonianMatrix,
    pub diamagnetic: HamiltonianMatrix,
}

/// Paramagnetic (linear in B) and diamagnetic (quadratic) parts of the
/// k·p Hamiltonian under k → k + (e/ħ)A with A = ½ B × r centered at the
/// basis origin; terms excluded by the mask are returned as zero.
pub fn assemble_field_orbital(spec: &BasisSpec, lut: &LuttingerParams, field: &MagneticField) -> FieldOrbital {
    let bands = lut.band_count;
    let b = field.vector();
    let build = |order: usize, enabled: bool| {
        let mut h = if enabled && field.magnitude != 0.0 {
            let mut orders = [false; 3];
            orders[order] = true;
            let k = kinetic_tensor(spec, b, orders);
            let ops = luttinger_ops(&k, lut);
            HamiltonianMatrix::from_triplets(bands, spec.dim(), spinor_from_ops(bands, &ops))
        } else {
            HamiltonianMatrix::zeros(bands, spec.dim())
        };
        h.field = Some(*field);
        h
    };
    FieldOrbital {
        paramagnetic: build(1, field.terms.paramagnetic),
        diamagnetic: build(2, field.terms.diamagnetic),
    }
}

/// All selected magnetic terms at `field`.
pub fn assemble_magnetic(spec: &BasisSpec, lut: &LuttingerParams, field: &MagneticField) -> Result<HamiltonianMatrix> {
    let z = assemble_zeeman(spec, lut, field);
    let o = assemble_field_orbital(spec, lut, field);
    z.plus(&o.paramagnetic)?.plus(&o.diamagnetic)
}

/// ∂H_B/∂B_χ for χ = x, y, z at B = 0: the Zeeman and paramagnetic parts
/// selected by `terms`, per tesla (the diamagnetic part does not contribute).
pub fn field_derivatives(
    spec: &BasisSpec,
    lut: &LuttingerParams,
    terms: MagneticTerms,
) -> Result<[HamiltonianMatrix; 3]> {
    let unit = |a: usize| {
        let mut v = [0.0; 3];
        v[a] = 1.0;
        MagneticField::from_vector(v).with_terms(MagneticTerms {
            diamagnetic: false,
            ..terms
        })
    };
    Ok([
        assemble_magnetic(spec, lut, &unit(0))?,
        assemble_magnetic(spec, lut, &unit(1))?,
        assemble_magnetic(spec, lut, &unit(2))?,
    ])
}

/// Hermite-function tables at the quadrature nodes of one axis.
struct AxisQuadrature {
    positions: Vec<f64>,
    weights: Vec<f64>,
    /// `psi[i][n]` = normalized ψ_n at node i (without the 1/√ℓ factor).
    psi: Vec<Vec<f64>>,
}

fn axis_quadrature(spec: &BasisSpec, axis: usize) -> AxisQuadrature {
    let gh = GaussHermite::new(spec.quadrature_points(axis));
    let ell = spec.lengths[axis];
    AxisQuadrature {
        positions: gh.nodes.iter().map(|t| t * ell).collect(),
        psi: gh
            .nodes
            .iter()
            .map(|&t| hermite_functions(spec.n_max[axis], t))
            .collect(),
        weights: gh.scaled_weights,
    }
}

/// Orbital matrix ⟨n|U|m⟩ by tensor Gauss–Hermite quadrature.
pub fn project_orbital(spec: &BasisSpec, field: &PotentialField) -> Result<Mat<f64>> {
    let q: [AxisQuadrature; 3] = std::array::from_fn(|a| axis_quadrature(spec, a));
    let (nx, ny, nz) = (q[0].positions.len(), q[1].positions.len(), q[2].positions.len());
    let (lx, ly, lz) = (spec.axis_len(0), spec.axis_len(1), spec.axis_len(2));

    let mut values = vec![0.0; nx * ny * nz];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let v = field.eval([q[0].positions[i], q[1].positions[j], q[2].positions[k]]);
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "potential is not finite at ({:.4}, {:.4}, {:.4}) nm",
                        q[0].positions[i], q[1].positions[j], q[2].positions[k]
                    )));
                }
                values[(i * ny + j) * nz + k] = v;
            }
        }
    }

    // Pair tables w_i ψ_n(t_i) ψ_m(t_i), indexed [node][n*L + m].
    let pairs = |a: &AxisQuadrature, l: usize| -> Vec<Vec<f64>> {
        a.psi
            .iter()
            .zip(&a.weights)
            .map(|(psi, w)| {
                let mut row = vec![0.0; l * l];
                for n in 0..l {
                    for m in 0..l {
                        row[n * l + m] = w * psi[n] * psi[m];
                    }
                }
                row
            })
            .collect()
    };
    let (px, py, pz) = (pairs(&q[0], lx), pairs(&q[1], ly), pairs(&q[2], lz));
    let (lz2, ly2, lx2) = (lz * lz, ly * ly, lx * lx);

    // Contract z: t1[i][j][nzmz].
    let mut t1 = vec![0.0; nx * ny * lz2];
    for ij in 0..nx * ny {
        let out = &mut t1[ij * lz2..(ij + 1) * lz2];
        for (k, pzk) in pz.iter().enumerate() {
            let v = values[ij * nz + k];
            for (o, p) in out.iter_mut().zip(pzk) {
                *o += v * p;
            }
        }
    }
    // Contract y: t2[i][nymy][nzmz].
    let mut t2 = vec![0.0; nx * ly2 * lz2];
    for i in 0..nx {
        for (j, pyj) in py.iter().enumerate() {
            let src = &t1[(i * ny + j) * lz2..(i * ny + j + 1) * lz2];
            for (yy, &w) in pyj.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let dst = &mut t2[(i * ly2 + yy) * lz2..(i * ly2 + yy + 1) * lz2];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    // Contract x: u[nxmx][nymy][nzmz].
    let mut u = vec![0.0; lx2 * ly2 * lz2];
    let block = ly2 * lz2;
    for (i, pxi) in px.iter().enumerate() {
        let src = &t2[i * block..(i + 1) * block];
        for (xx, &w) in pxi.iter().enumerate() {
            let dst = &mut u[xx * block..(xx + 1) * block];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }

    let dim = spec.dim();
    let mut out = Mat::<f64>::zeros(dim, dim);
    for a in 0..dim {
        let [ax, ay, az] = spec.quanta(a);
        for b in 0..dim {
            let [bx, by, bz] = spec.quanta(b);
            let idx = ((ax * lx + bx) * ly2 + (ay * ly + by)) * lz2 + az * lz + bz;
            out[(a, b)] = u[idx];
        }
    }
    // Symmetrize away rounding asymmetry.
    for a in 0..dim {
        for b in 0..a {
            let s = 0.5 * (out[(a, b)] + out[(b, a)]);
            out[(a, b)] = s;
            out[(b, a)] = s;
        }
    }
    Ok(out)
}

/// Projected potential ⊗ band identity.
pub fn project_potential(spec: &BasisSpec, bands: usize, field: &PotentialField) -> Result<HamiltonianMatrix> {
    let mut h = HamiltonianMatrix::from_orbital_potential(bands, project_orbital(spec, field)?);
    if field.v_g.is_finite() {
        h.v_g = Some(field.v_g);
    }
    Ok(h)
}

/// H_kp + U + H_B with the magnetic terms selected by the field's mask.
pub fn assemble_total(
    spec: &BasisSpec,
    lut: &LuttingerParams,
    potential: &PotentialField,
    field: &MagneticField,
) -> Result<HamiltonianMatrix> {
    let kp = assemble_kp(spec, lut)?;
    let u = project_potential(spec, lut.band_count, potential)?;
    let mut h = kp.plus(&u)?.plus(&assemble_magnetic(spec, lut, field)?)?;
    h.field = Some(*field);
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, operator_matrix, oscillator_energy};

    fn small_spec() -> BasisSpec {
        build_basis([3, 2, 3], [9.0, 12.0, 25.0], 4.285).unwrap()
    }

    fn max_abs(m: &Mat<c64>) -> f64 {
        let mut x = 0.0f64;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                x = x.max(m[(i, j)].norm());
            }
        }
        x
    }

    #[test]
    fn kp_is_hermitian_and_time_reversal_even() {
        let s = small_spec();
        for bands in [4, 6] {
            let lut = LuttingerParams {
                band_count: bands,
                ..Default::default()
            };
            let h = assemble_kp(&s, &lut).unwrap();
            assert!(h.hermiticity_defect() < 1e-12);
            assert!(h.time_reversal_defect() < 1e-12);
        }
    }

    #[test]
    fn zeeman_traceless_and_time_reversal_odd() {
        let lut = LuttingerParams::default();
        for b in [[0.3, -0.7, 0.2], [1.0, 0.0, 0.0], [0.0, 0.0, 2.0]] {
            let m = zeeman_block(lut.kappa, b);
            let tr: c64 = (0..6).map(|i| m[i][i]).sum();
            assert!(tr.norm() < 1e-15);
            for i in 0..6 {
                for j in 0..6 {
                    let t = m[TR_PARTNER[i]][TR_PARTNER[j]].conj() * (TR_SIGN[i] * TR_SIGN[j]);
                    assert!((t + m[i][j]).norm() < 1e-15, "({i},{j})");
                    assert!((m[i][j] - m[j][i].conj()).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn zeeman_entries() {
        let lut = LuttingerParams::default();
        let z = zeeman_block(lut.kappa, [0.0, 0.0, 1.0]);
        assert!((z[0][0].re - 3.0 * lut.kappa * MU_B).abs() < 1e-15);
        assert!(((z[0][0].re - z[3][3].re) / MU_B - 6.0 * lut.kappa).abs() < 1e-12);
        let z = zeeman_block(lut.kappa, [1.0, 0.0, 0.0]);
        assert_eq!(z[0][0], c(0.0));
        assert_eq!(z[0][3], c(0.0));
        assert_eq!(z[3][3], c(0.0));
        assert!((z[0][1].re - 3f64.sqrt() * lut.kappa * MU_B).abs() < 1e-15);
        let zero = assemble_zeeman(&small_spec(), &lut, &MagneticField::zero());
        assert!(zero.to_dense().norm_max() == 0.0);
    }

    #[test]
    fn magnetic_parity_in_b() {
        let s = small_spec();
        let lut = LuttingerParams::default();
        let f = MagneticField::from_vector([0.4, -0.3, 0.8]);
        let g = MagneticField::from_vector([-0.4, 0.3, -0.8]);
        let a = assemble_field_orbital(&s, &lut, &f);
        let b = assemble_field_orbital(&s, &lut, &g);
        let pa = a.paramagnetic.to_dense();
        let pb = b.paramagnetic.to_dense();
        let da = a.diamagnetic.to_dense();
        let db = b.diamagnetic.to_dense();
        assert!(max_abs(&(&pa + &pb)) < 1e-12 * max_abs(&pa));
        assert!(max_abs(&(&da - &db)) < 1e-12 * max_abs(&da));
        assert!(a.paramagnetic.hermiticity_defect() < 1e-12);
        assert!(a.diamagnetic.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn diamagnetic_is_quadratic() {
        let s = small_spec();
        let lut = LuttingerParams::default();
        let d1 = assemble_field_orbital(&s, &lut, &MagneticField::new(0.7, 40.0, 20.0).unwrap())
            .diamagnetic
            .to_dense();
        let d2 = assemble_field_orbital(&s, &lut, &MagneticField::new(1.4, 40.0, 20.0).unwrap())
            .diamagnetic
            .to_dense();
        let diff = &d2 - &(&d1 * faer::Scale(c(4.0)));
        assert!(max_abs(&diff) <= 1e-12 * max_abs(&d2));
        let zero = assemble_field_orbital(&s, &lut, &MagneticField::zero());
        assert_eq!(zero.paramagnetic.to_dense().norm_max(), 0.0);
        assert_eq!(zero.diamagnetic.to_dense().norm_max(), 0.0);
    }

    #[test]
    fn single_band_paramagnetic_is_angular_momentum() {
        let s = build_basis([2, 2, 1], [10.0, 10.0, 30.0], 4.285).unwrap();
        let lut = LuttingerParams {
            gamma2: 0.0,
            gamma3: 0.0,
            ..Default::default()
        };
        let bz = 0.8;
        let p = assemble_field_orbital(&s, &lut, &MagneticField::along_z(bz))
            .paramagnetic
            .to_dense();
        // Oracle: x k_y − y k_x from dense operator products.
        let x = operator_matrix(&s, OperatorLabel::Position(Axis::X)).to_dense();
        let y = operator_matrix(&s, OperatorLabel::Position(Axis::Y)).to_dense();
        let kx = operator_matrix(&s, OperatorLabel::Momentum(Axis::X)).to_dense();
        let ky = operator_matrix(&s, OperatorLabel::Momentum(Axis::Y)).to_dense();
        let lz = &x * &ky - &y * &kx;
        let scale = HBAR2_OVER_2M0 * lut.gamma1 * E_OVER_HBAR * bz;
        for band in 0..6 {
            for i in 0..s.dim() {
                for j in 0..s.dim() {
                    let want = lz[(i, j)] * scale;
                    let got = p[(i * 6 + band, j * 6 + band)];
                    assert!((got - want).norm() < 1e-12, "{got:?} vs {want:?}");
                }
            }
        }
        // ⟨00|x k_y − y k_x|11⟩ = −i(ℓx/ℓy − ℓy/ℓx)/2, zero for equal lengths.
        let i0 = s.index([0, 0, 0]);
        let i11 = s.index([1, 1, 0]);
        assert!(lz[(i0, i11)].norm() < 1e-14);
        let s2 = build_basis([2, 2, 1], [10.0, 20.0, 30.0], 4.285).unwrap();
        let x = operator_matrix(&s2, OperatorLabel::Position(Axis::X)).to_dense();
        let y = operator_matrix(&s2, OperatorLabel::Position(Axis::Y)).to_dense();
        let kx = operator_matrix(&s2, OperatorLabel::Momentum(Axis::X)).to_dense();
        let ky = operator_matrix(&s2, OperatorLabel::Momentum(Axis::Y)).to_dense();
        let lz = &x * &ky - &y * &kx;
        let (lx, ly) = (s2.lengths[0], s2.lengths[1]);
        let want = -0.5 * (lx / ly - ly / lx);
        let got = lz[(s2.index([0, 0, 0]), s2.index([1, 1, 0]))];
        assert!(
            got.re.abs() < 1e-14 && (got.im - want).abs() < 1e-12,
            "{got:?} vs {want}"
        );
    }

    #[test]
    fn constant_and_harmonic_projection() {
        let s = small_spec();
        let u = project_orbital(&s, &PotentialField::constant(3.5)).unwrap();
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let want = if i == j { 3.5 } else { 0.0 };
                assert!((u[(i, j)] - want).abs() < 1e-12);
            }
        }
        // U = ½ m ω² x² = (ħω/4)(x/ℓ)²·2 → ⟨0|U|0⟩ = ħω/4
        let hw = s.hw[0];
        let ell = s.lengths[0];
        let field = PotentialField::from_fn(move |r| 0.5 * hw * (r[0] / ell).powi(2));
        let u = project_orbital(&s, &field).unwrap();
        assert!((u[(0, 0)] - hw / 4.0).abs() < 1e-12);
        let nan = PotentialField::from_fn(|r| if r[2] > 1.0 { f64::NAN } else { 0.0 });
        assert!(matches!(project_orbital(&s, &nan), Err(Error::Numeric(_))));
    }

    #[test]
    fn harmonic_single_band_spectrum() {
        let g1 = 4.285;
        let hw = [
            oscillator_energy(4.0, g1),
            oscillator_energy(3.0, g1),
            oscillator_energy(1.5, g1),
        ];
        let s = build_basis([4, 4, 4], hw, g1).unwrap();
        let lut = LuttingerParams {
            gamma2: 0.0,
            gamma3: 0.0,
            delta_so: 0.0,
            ..Default::default()
        };
        let ls = s.lengths;
        let field = PotentialField::from_fn(move |r| (0..3).map(|a| 0.5 * hw[a] * (r[a] / ls[a]).powi(2)).sum());
        let h = assemble_total(&s, &lut, &field, &MagneticField::zero()).unwrap();
        let evals = h.to_dense().self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let e0: f64 = hw.iter().sum::<f64>() / 2.0;
        for e in &evals[..6] {
            assert!((e - e0).abs() < 1e-8 * e0, "{e} vs {e0}");
        }
        assert!((evals[6] - (e0 + hw[0])).abs() < 1e-8 * e0);
    }

    #[test]
    fn additivity_and_mask() {
        let s = build_basis([2, 2, 2], [9.0, 12.0, 25.0], 4.285).unwrap();
        let lut = LuttingerParams::default();
        let pot = PotentialField::from_fn(|r| 0.3 * r[0] * r[0] + 0.1 * r[2]);
        let b = MagneticField::new(0.9, 60.0, 30.0).unwrap();
        let h0 = assemble_total(&s, &lut, &pot, &MagneticField::zero())
            .unwrap()
            .to_dense();
        let hb = assemble_total(&s, &lut, &pot, &b).unwrap();
        assert!(hb.hermiticity_defect() < 1e-12);
        let mag = assemble_magnetic(&s, &lut, &b).unwrap().to_dense();
        let d = &hb.to_dense() - &h0;
        assert!(max_abs(&(&d - &mag)) < 1e-12 * max_abs(&h0));
        let off = assemble_total(&s, &lut, &pot, &b.with_terms(MagneticTerms::NONE))
            .unwrap()
            .to_dense();
        assert!(max_abs(&(&off - &h0)) == 0.0);
    }

    #[test]
    fn apply_matches_dense() {
        let s = build_basis([2, 3, 2], [9.0, 12.0, 25.0], 4.285).unwrap();
        let lut = LuttingerParams::default();
        let pot = PotentialField::from_fn(|r| 0.3 * r[0] * r[0] + 0.1 * r[2] + 0.05 * r[1] * r[0]);
        let h = assemble_total(&s, &lut, &pot, &MagneticField::new(0.5, 30.0, 10.0).unwrap()).unwrap();
        let n = h.dim();
        let x = Mat::<c64>::from_fn(n, 3, |i, j| {
            c64::new(((i * 7 + j) % 5) as f64 - 2.0, ((i + 3 * j) % 3) as f64)
        });
        let want = h.to_dense() * &x;
        let got = h.apply(x.as_ref());
        assert!(max_abs(&(&got - &want)) < 1e-10 * max_abs(&want));
        let d = h.diagonal();
        let dense = h.to_dense();
        for i in 0..n {
            assert!((d[i] - dense[(i, i)].re).abs() < 1e-12);
        }
    }
}
