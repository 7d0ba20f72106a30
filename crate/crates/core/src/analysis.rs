//! State characterization (penetration, band weights, parity) and direct
//! Larmor/Rabi frequencies from eigenstate matrix elements.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::hamiltonian::{band_family, BandFamily};
use crate::potential::{DeviceGeometry, RegionId};
use crate::quadrature::{hermite_functions, GaussLegendre};
use crate::solver::{Spectrum, SpinorState};
use crate::units::{GHZ_PER_MEV, MHZ_PER_MEV};

/// ∫_a^b φ_n(x) φ_m(x) dx for the oscillator functions of one axis.
pub fn interval_overlaps(spec: &BasisSpec, axis: usize, a: f64, b: f64) -> Mat<f64> {
    let l = spec.axis_len(axis);
    let ell = spec.lengths[axis];
    // Oscillator functions are negligible beyond the classical turning point plus a margin.
    let reach = (2.0 * spec.n_max[axis] as f64 + 1.0).sqrt() + 12.0;
    let lo = (a / ell).max(-reach);
    let hi = (b / ell).min(reach);
    let mut out = Mat::<f64>::zeros(l, l);
    if hi <= lo {
        return out;
    }
    let gl = GaussLegendre::new(24);
    let panels = ((hi - lo) / 0.5).ceil() as usize;
    let (ts, ws) = gl.composite(lo, hi, panels);
    for (t, w) in ts.iter().zip(&ws) {
        let psi = hermite_functions(spec.n_max[axis], *t);
        for n in 0..l {
            let wn = w * psi[n];
            for m in 0..l {
                out[(n, m)] += wn * psi[m];
            }
        }
    }
    out
}

/// Probability of `state` in `region`, summed over band envelopes.
pub fn penetration(state: &SpinorState, spec: &BasisSpec, geometry: &DeviceGeometry, region: RegionId) -> Result<f64> {
    if state.orbital_dim() != spec.dim() {
        return Err(Error::InvalidParameter("state does not match the basis".into()));
    }
    let nb = state.bands;
    let dim = spec.dim();
    let mut total = 0.0;
    for bx in &geometry.region(region).boxes {
        let o: [Mat<f64>; 3] = std::array::from_fn(|a| interval_overlaps(spec, a, bx[a].0, bx[a].1));
        // ρ_b = Σ_{n,m} c*_{n,b} c_{m,b} Ox Oy Oz
        for n in 0..dim {
            let qn = spec.quanta(n);
            for m in 0..dim {
                let qm = spec.quanta(m);
                let w = o[0][(qn[0], qm[0])] * o[1][(qn[1], qm[1])] * o[2][(qn[2], qm[2])];
                if w == 0.0 {
                    continue;
                }
                let mut acc = 0.0;
                for b in 0..nb {
                    let x = state.coefficients[n * nb + b];
                    let y = state.coefficients[m * nb + b];
                    acc += x.re * y.re + x.im * y.im;
                }
                total += w * acc;
            }
        }
    }
    Ok(total)
}

/// Band weights (P_hh, P_lh, P_so).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandOccupation {
    pub hh: f64,
    pub lh: f64,
    pub so: f64,
}

pub fn band_occupation(state: &SpinorState) -> BandOccupation {
    let nb = state.bands;
    let mut w = [0.0; 3];
    for (i, c) in state.coefficients.iter().enumerate() {
        let k = match band_family(i % nb) {
            BandFamily::Heavy => 0,
            BandFamily::Light => 1,
            BandFamily::SplitOff => 2,
        };
        w[k] += c.norm_sqr();
    }
    BandOccupation {
        hh: w[0],
        lh: w[1],
        so: w[2],
    }
}

/// Envelope reflection symmetries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    /// Mirror through the yz plane (x → −x).
    SigmaYz,
    /// Mirror through the zx plane (y → −y).
    SigmaZx,
    /// Mirror through the xy plane (z → −z).
    SigmaXy,
    /// Inversion r → −r.
    Inversion,
}

impl Symmetry {
    pub const ALL: [Symmetry; 4] = [
        Symmetry::SigmaYz,
        Symmetry::SigmaZx,
        Symmetry::SigmaXy,
        Symmetry::Inversion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Symmetry::SigmaYz => "sigma_yz",
            Symmetry::SigmaZx => "sigma_zx",
            Symmetry::SigmaXy => "sigma_xy",
            Symmetry::Inversion => "sigma_r",
        }
    }
}

/// Σ_b Σ_n |c|² (−1)^{n_γ} (or (−1)^{n_x+n_y+n_z} for inversion).
pub fn symmetry_expectation(state: &SpinorState, spec: &BasisSpec, op: Symmetry) -> f64 {
    let nb = state.bands;
    let mut acc = 0.0;
    for (i, c) in state.coefficients.iter().enumerate() {
        let q = spec.quanta(i / nb);
        let exponent = match op {
            Symmetry::SigmaYz => q[0],
            Symmetry::SigmaZx => q[1],
            Symmetry::SigmaXy => q[2],
            Symmetry::Inversion => q[0] + q[1] + q[2],
        };
        let sign = if exponent % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * c.norm_sqr();
    }
    acc
}

/// f_L = (E⇑ − E⇓)/h of the ground doublet in GHz.
pub fn larmor_direct(spectrum: &Spectrum) -> Result<f64> {
    let (up, down) = spectrum
        .doublet(1)
        .ok_or_else(|| Error::UnpairedDoublet("ground doublet is not labeled".into()))?;
    Ok((up.energy - down.energy).abs() * GHZ_PER_MEV)
}

/// ⟨u|δU ⊗ 1|v⟩ per band for a real symmetric orbital matrix δU.
fn band_elements(u: &SpinorState, v: &SpinorState, du: &Mat<f64>) -> Vec<c64> {
    let nb = u.bands;
    let no = u.orbital_dim();
    assert_eq!(du.nrows(), no, "orbital operator does not match the state");
    // Columns: band b real part, band b imaginary part.
    let vm = Mat::<f64>::from_fn(no, 2 * nb, |o, j| {
        let z = v.coefficients[o * nb + j / 2];
        if j % 2 == 0 {
            z.re
        } else {
            z.im
        }
    });
    let dv = du * &vm;
    (0..nb)
        .map(|b| {
            let mut acc = c64::new(0.0, 0.0);
            for o in 0..no {
                let x = u.coefficients[o * nb + b].conj();
                acc += x * c64::new(dv[(o, 2 * b)], dv[(o, 2 * b + 1)]);
            }
            acc
        })
        .collect()
}

fn element(u: &SpinorState, v: &SpinorState, du: &Mat<f64>) -> c64 {
    band_elements(u, v, du).into_iter().sum()
}

/// f_R^X = |⟨⇑|δU|⇓⟩|/h in MHz; `du` is the projected orbital matrix of δU.
pub fn rabi_x_direct(up: &SpinorState, down: &SpinorState, du: &Mat<f64>) -> f64 {
    element(up, down, du).norm() * MHZ_PER_MEV
}

/// f_R^Z = |⟨⇑|δU|⇑⟩ − ⟨⇓|δU|⇓⟩|/2h in MHz.
pub fn rabi_z_direct(up: &SpinorState, down: &SpinorState, du: &Mat<f64>) -> f64 {
    let a = element(up, up, du).re;
    let b = element(down, down, du).re;
    0.5 * (a - b).abs() * MHZ_PER_MEV
}

/// Band-resolved Rabi matrix elements (meV).
#[derive(Debug, Clone, PartialEq)]
pub struct BandContributions {
    /// ⟨⇑|δU_b|⇓⟩ per band b.
    pub x: Vec<c64>,
    /// (⟨⇑|δU_b|⇑⟩ − ⟨⇓|δU_b|⇓⟩)/2 per band b.
    pub z: Vec<c64>,
}

impl BandContributions {
    pub fn rabi_x_mhz(&self) -> f64 {
        self.x.iter().sum::<c64>().norm() * MHZ_PER_MEV
    }

    pub fn rabi_z_mhz(&self) -> f64 {
        self.z.iter().sum::<c64>().norm() * MHZ_PER_MEV
    }
}

pub fn band_contributions(up: &SpinorState, down: &SpinorState, du: &Mat<f64>) -> BandContributions {
    let x = band_elements(up, down, du);
    let uu = band_elements(up, up, du);
    let dd = band_elements(down, down, du);
    let z = uu.iter().zip(&dd).map(|(a, b)| (a - b) * 0.5).collect();
    BandContributions { x, z }
}

/// Qubit figures of merit at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitMetrics {
    pub v_g: f64,
    pub delta_v_g: f64,
    pub b: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub width: f64,
    pub f_l_ghz: f64,
    pub f_rx_mhz: f64,
    pub f_rz_mhz: f64,
    pub f_rxz_mhz: f64,
}
