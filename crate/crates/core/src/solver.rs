//! Lowest eigenpairs of the hole Hamiltonian, Kramers pairing and
//! time reversal.

use std::io::{BufRead, Write};

use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianMatrix, MagneticField, BANDS, TR_PARTNER, TR_SIGN};

/// Doublet member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Member {
    Up,
    Down,
}

impl Member {
    pub fn symbol(self) -> &'static str {
        match self {
            Member::Up => "up",
            Member::Down => "down",
        }
    }
}

/// Eigenstate expanded over (orbital × band), index `orbital·bands + band`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorState {
    pub coefficients: Vec<c64>,
    pub bands: usize,
    /// Energy in meV.
    pub energy: f64,
    /// Doublet index m ≥ 1 once paired, 0 before.
    pub doublet: usize,
    pub member: Option<Member>,
}

impl SpinorState {
    pub fn new(coefficients: Vec<c64>, bands: usize, energy: f64) -> Self {
        Self {
            coefficients,
            bands,
            energy,
            doublet: 0,
            member: None,
        }
    }

    pub fn orbital_dim(&self) -> usize {
        self.coefficients.len() / self.bands
    }

    pub fn norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &SpinorState) -> c64 {
        inner(&self.coefficients, &other.coefficients)
    }

    pub fn scale(&mut self, s: c64) {
        for c in &mut self.coefficients {
            *c *= s;
        }
    }

    /// Multiplies by a phase making the largest-|c| coefficient real and positive.
    pub fn fix_phase(&mut self) {
        let mut best = c64::new(0.0, 0.0);
        for &c in &self.coefficients {
            // Ties broken toward the lowest index for reproducibility.
            if c.norm() > best.norm() * (1.0 + 1e-9) {
                best = c;
            }
        }
        if best.norm() > 0.0 {
            self.scale(best.conj() / best.norm());
        }
    }
}

fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Θ(ψ ⊗ |J,M⟩) = (−1)^{J+M} ψ* ⊗ |J,−M⟩ on a real orbital basis.
pub fn time_reverse(state: &SpinorState) -> SpinorState {
    let nb = state.bands;
    let mut out = vec![c64::new(0.0, 0.0); state.coefficients.len()];
    for (i, c) in state.coefficients.iter().enumerate() {
        let (orb, b) = (i / nb, i % nb);
        out[orb * nb + TR_PARTNER[b]] = c.conj() * TR_SIGN[b];
    }
    SpinorState {
        coefficients: out,
        bands: nb,
        energy: state.energy,
        doublet: state.doublet,
        member: state.member.map(|m| match m {
            Member::Up => Member::Down,
            Member::Down => Member::Up,
        }),
    }
}

/// Eigensolver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    /// Dense below `dense_threshold`, iterative above.
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub dense_threshold: usize,
    /// Absolute residual tolerance ‖Hv − Ev‖ in meV for the iterative solver.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Auto,
            dense_threshold: 4000,
            tolerance: 1e-6,
            max_iterations: 600,
        }
    }
}

/// How a spectrum was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodUsed {
    Dense,
    Davidson,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub states: Vec<SpinorState>,
    pub method: MethodUsed,
    /// ‖Hv − Ev‖ per state (meV).
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl Spectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    /// Members (⇑, ⇓) of doublet `m` (1-based) after pairing.
    pub fn doublet(&self, m: usize) -> Option<(&SpinorState, &SpinorState)> {
        let up = self
            .states
            .iter()
            .find(|s| s.doublet == m && s.member == Some(Member::Up))?;
        let down = self
            .states
            .iter()
            .find(|s| s.doublet == m && s.member == Some(Member::Down))?;
        Some((up, down))
    }

    pub fn doublet_count(&self) -> usize {
        self.states.iter().map(|s| s.doublet).max().unwrap_or(0)
    }

    /// Mean energy of doublet `m`.
    pub fn doublet_energy(&self, m: usize) -> Option<f64> {
        self.doublet(m).map(|(u, d)| 0.5 * (u.energy + d.energy))
    }

    /// Gap Δ between the first and second doublets (meV).
    pub fn gap(&self) -> Option<f64> {
        match (self.doublet_energy(1), self.doublet_energy(2)) {
            (Some(a), Some(b)) => Some(b - a),
            _ => {
                let e = self.energies();
                (e.len() >= 3).then(|| 0.5 * (e[2] + e.get(3).copied().unwrap_or(e[2])) - 0.5 * (e[0] + e[1]))
            }
        }
    }
}

/// Band-diagonal approximation of H, diagonalized once per band family; used
/// both as Davidson preconditioner and as a source of starting vectors.
pub struct BandPreconditioner {
    bands: usize,
    orbital_dim: usize,
    family: Vec<usize>,
    /// (eigenvalues, eigenvectors) per family representative.
    blocks: Vec<(Vec<f64>, Mat<f64>)>,
}

impl BandPreconditioner {
    pub fn new(h: &HamiltonianMatrix) -> Result<Self> {
        let nb = h.bands;
        let no = h.orbital_dim;
        // Θ-partners share the same orbital block at zero field.
        let reps: Vec<usize> = (0..nb).map(|b| b.min(TR_PARTNER[b])).collect();
        let mut unique: Vec<usize> = reps.clone();
        unique.sort_unstable();
        unique.dedup();
        let family: Vec<usize> = reps
            .iter()
            .map(|r| unique.iter().position(|u| u == r).unwrap())
            .collect();
        let mut mats: Vec<Mat<f64>> = unique.iter().map(|_| Mat::zeros(no, no)).collect();
        h.for_each_sparse(|i, j, v| {
            let (bi, bj) = (i % nb, j % nb);
            if bi == bj {
                if let Some(f) = unique.iter().position(|&u| u == bi) {
                    mats[f][(i / nb, j / nb)] += v.re;
                }
            }
        });
        if let Some(u) = h.orbital_potential() {
            for m in &mut mats {
                *m += u;
            }
        }
        let mut blocks = Vec::with_capacity(mats.len());
        for m in mats {
            let sym = Mat::<f64>::from_fn(no, no, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
            let e = sym
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Numeric(format!("preconditioner eigendecomposition failed: {e:?}")))?;
            let vals: Vec<f64> = (0..no).map(|i| e.S().column_vector()[i]).collect();
            blocks.push((vals, e.U().to_owned()));
        }
        Ok(Self {
            bands: nb,
            orbital_dim: no,
            family,
            blocks,
        })
    }

    /// (B_band − θ)⁻¹ r with guarded denominators.
    fn apply(&self, r: &[c64], theta: f64) -> Vec<c64> {
        let nb = self.bands;
        let no = self.orbital_dim;
        let mut out = vec![c64::new(0.0, 0.0); r.len()];
        for b in 0..nb {
            let (vals, q) = &self.blocks[self.family[b]];
            let rb = Mat::<f64>::from_fn(no, 2, |o, p| {
                let v = r[o * nb + b];
                if p == 0 {
                    v.re
                } else {
                    v.im
                }
            });
            let mut coef = q.transpose() * &rb;
            for i in 0..no {
                let mut d = vals[i] - theta;
                if d.abs() < 1e-8 {
                    d = if d < 0.0 { -1e-8 } else { 1e-8 };
                }
                coef[(i, 0)] /= d;
                coef[(i, 1)] /= d;
            }
            let t = q * &coef;
            for o in 0..no {
                out[o * nb + b] = c64::new(t[(o, 0)], t[(o, 1)]);
            }
        }
        out
    }

    /// The `count` lowest band-diagonal eigenvectors as starting vectors.
    fn starting_vectors(&self, count: usize) -> Vec<Vec<c64>> {
        let nb = self.bands;
        let no = self.orbital_dim;
        let mut cand: Vec<(f64, usize, usize)> = Vec::new();
        for b in 0..nb {
            let (vals, _) = &self.blocks[self.family[b]];
            for (i, &v) in vals.iter().enumerate().take(count) {
                cand.push((v, b, i));
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cand.truncate(count);
        cand.into_iter()
            .map(|(_, b, i)| {
                let q = &self.blocks[self.family[b]].1;
                let mut v = vec![c64::new(0.0, 0.0); no * nb];
                for o in 0..no {
                    v[o * nb + b] = c64::new(q[(o, i)], 0.0);
                }
                v
            })
            .collect()
    }
}

/// The `k` lowest eigenpairs of `h`.
pub fn lowest_eigenpairs(h: &HamiltonianMatrix, k: usize, opts: &SolverOptions) -> Result<Spectrum> {
    lowest_eigenpairs_with(h, k, opts, None, &[])
}

/// As [`lowest_eigenpairs`], optionally reusing a preconditioner and warm-start vectors.
pub fn lowest_eigenpairs_with(
    h: &HamiltonianMatrix,
    k: usize,
    opts: &SolverOptions,
    precond: Option<&BandPreconditioner>,
    guess: &[Vec<c64>],
) -> Result<Spectrum> {
    let n = h.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenpairs of a {n}-dimensional matrix"
        )));
    }
    let dense = match opts.method {
        SolverMethod::Dense => true,
        SolverMethod::Iterative => false,
        SolverMethod::Auto => n < opts.dense_threshold,
    };
    if dense {
        dense_eigenpairs(h, k)
    } else {
        let owned;
        let p = match precond {
            Some(p) => p,
            None => {
                owned = BandPreconditioner::new(h)?;
                &owned
            }
        };
        davidson(h, k, opts, p, guess)
    }
}

fn residual_norm(h: &HamiltonianMatrix, v: &[c64], e: f64) -> f64 {
    let hv = h.apply(faer::MatRef::from_column_major_slice(v, v.len(), 1));
    v.iter()
        .enumerate()
        .map(|(i, x)| (hv[(i, 0)] - x * e).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn dense_eigenpairs(h: &HamiltonianMatrix, k: usize) -> Result<Spectrum> {
    let m = h.to_dense();
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("dense eigendecomposition failed: {e:?}")))?;
    let u = e.U();
    let mut states = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for j in 0..k {
        let energy = e.S().column_vector()[j].re;
        let coefficients: Vec<c64> = (0..m.nrows()).map(|i| u[(i, j)]).collect();
        residuals.push(residual_norm(h, &coefficients, energy));
        states.push(SpinorState::new(coefficients, h.bands, energy));
    }
    Ok(Spectrum {
        states,
        method: MethodUsed::Dense,
        residuals,
        iterations: 0,
    })
}

/// Orthonormalizes `t` against the first `m` columns of `v` (two passes);
/// returns false when nothing new remains.
fn orthonormalize(v: &Mat<c64>, m: usize, t: &mut [c64]) -> bool {
    let n0 = t.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if n0 == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for j in 0..m {
            let col = v.col(j);
            let mut p = c64::new(0.0, 0.0);
            for (i, x) in t.iter().enumerate() {
                p += col[i].conj() * x;
            }
            for (i, x) in t.iter_mut().enumerate() {
                *x -= col[i] * p;
            }
        }
    }
    let n1 = t.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if n1 < 1e-10 * n0 || n1 == 0.0 {
        return false;
    }
    for x in t.iter_mut() {
        *x /= n1;
    }
    true
}

/// Block Davidson with Olsen-corrected band-diagonal preconditioning.
fn davidson(
    h: &HamiltonianMatrix,
    k: usize,
    opts: &SolverOptions,
    precond: &BandPreconditioner,
    guess: &[Vec<c64>],
) -> Result<Spectrum> {
    let n = h.dim();
    let block = (k + (k / 2).max(4)).min(n);
    let max_sub = (4 * block).max(block + 8).min(n);
    let tol = opts.tolerance.max(1e-13 * h.norm_bound());

    let mut v = Mat::<c64>::zeros(n, max_sub);
    let mut w = Mat::<c64>::zeros(n, max_sub);
    let mut m = 0usize;

    let mut initial: Vec<Vec<c64>> = guess.iter().filter(|g| g.len() == n).cloned().collect();
    initial.extend(precond.starting_vectors(block + 4));
    let mut fresh = Vec::new();
    for mut t in initial {
        if m + fresh.len() >= block {
            break;
        }
        let base = m + fresh.len();
        for (j, f) in fresh.iter().enumerate() {
            let f: &Vec<c64> = f;
            for i in 0..n {
                v[(i, m + j)] = f[i];
            }
        }
        if orthonormalize(&v, base, &mut t) {
            fresh.push(t);
        }
    }
    // Top up with unit vectors if the starting set was rank deficient.
    let mut unit = 0usize;
    while fresh.len() < block && unit < n {
        let mut t = vec![c64::new(0.0, 0.0); n];
        t[unit] = c64::new(1.0, 0.0);
        unit += 1;
        for (j, f) in fresh.iter().enumerate() {
            for i in 0..n {
                v[(i, j)] = f[i];
            }
        }
        if orthonormalize(&v, fresh.len(), &mut t) {
            fresh.push(t);
        }
    }

    let mut iterations = 0usize;
    let mut worst;
    loop {
        // Add the new directions and their images.
        if !fresh.is_empty() {
            let add = fresh.len();
            let block_in = Mat::<c64>::from_fn(n, add, |i, j| fresh[j][i]);
            let block_out = h.apply(block_in.as_ref());
            for j in 0..add {
                for i in 0..n {
                    v[(i, m + j)] = block_in[(i, j)];
                    w[(i, m + j)] = block_out[(i, j)];
                }
            }
            m += add;
            fresh.clear();
        }

        let vm = v.subcols(0, m);
        let wm = w.subcols(0, m);
        let t = vm.adjoint() * wm;
        let t = Mat::<c64>::from_fn(m, m, |i, j| (t[(i, j)] + t[(j, i)].conj()) * 0.5);
        let eig = t
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numeric(format!("projected eigenproblem failed: {e:?}")))?;
        let nritz = block.min(m);
        let y = eig.U().subcols(0, nritz);
        let theta: Vec<f64> = (0..nritz).map(|i| eig.S().column_vector()[i].re).collect();
        let x = vm * y;
        let hx = wm * y;

        let mut res_norms = Vec::with_capacity(nritz);
        let mut residuals: Vec<Vec<c64>> = Vec::with_capacity(nritz);
        for j in 0..nritz {
            let r: Vec<c64> = (0..n).map(|i| hx[(i, j)] - x[(i, j)] * theta[j]).collect();
            res_norms.push(r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
            residuals.push(r);
        }
        worst = res_norms[..k.min(nritz)].iter().cloned().fold(0.0, f64::max);
        if nritz >= k && worst < tol {
            let states = (0..k)
                .map(|j| SpinorState::new((0..n).map(|i| x[(i, j)]).collect(), h.bands, theta[j]))
                .collect();
            return Ok(Spectrum {
                states,
                method: MethodUsed::Davidson,
                residuals: res_norms[..k].to_vec(),
                iterations,
            });
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                residual: worst,
            });
        }
        iterations += 1;

        // Corrections for unconverged Ritz pairs.
        let mut corrections = Vec::new();
        for j in 0..nritz {
            if res_norms[j] < tol {
                continue;
            }
            let xj: Vec<c64> = (0..n).map(|i| x[(i, j)]).collect();
            let mr = precond.apply(&residuals[j], theta[j]);
            let mx = precond.apply(&xj, theta[j]);
            let num = inner(&xj, &mr);
            let den = inner(&xj, &mx);
            let eps = if den.norm() > 1e-300 {
                num / den
            } else {
                c64::new(0.0, 0.0)
            };
            let t: Vec<c64> = mr.iter().zip(&mx).map(|(a, b)| a - eps * b).collect();
            corrections.push(t);
        }

        // Restart by collapsing onto the current Ritz vectors.
        if m + corrections.len() > max_sub {
            let keep = (2 * block).min(m).min(max_sub - corrections.len().min(max_sub - block));
            let keep = keep.max(nritz);
            let yk = eig.U().subcols(0, keep);
            let xk = vm * yk;
            let hk = wm * yk;
            for j in 0..keep {
                for i in 0..n {
                    v[(i, j)] = xk[(i, j)];
                    w[(i, j)] = hk[(i, j)];
                }
            }
            m = keep;
        }

        let room = max_sub - m;
        for mut t in corrections.into_iter().take(room) {
            let base = m + fresh.len();
            for (j, f) in fresh.iter().enumerate() {
                for i in 0..n {
                    v[(i, m + j)] = f[i];
                }
            }
            if orthonormalize(&v, base, &mut t) {
                fresh.push(t);
            }
        }
        if fresh.is_empty() {
            return Err(Error::NonConvergence {
                iterations,
                residual: worst,
            });
        }
    }
}

/// Energy tolerance for grouping states into Kramers doublets at zero field (meV).
pub const PAIRING_TOLERANCE: f64 = 1e-6;

/// Expectation-like 2×2 matrix of the band angular momentum M within a doublet.
fn band_m_matrix(a: &SpinorState, b: &SpinorState) -> [[c64; 2]; 2] {
    let nb = a.bands;
    let mut m = [[c64::new(0.0, 0.0); 2]; 2];
    let states = [a, b];
    for (p, sp) in states.iter().enumerate() {
        for (q, sq) in states.iter().enumerate() {
            let mut acc = c64::new(0.0, 0.0);
            for (i, (x, y)) in sp.coefficients.iter().zip(&sq.coefficients).enumerate() {
                acc += x.conj() * y * (0.5 * BANDS[i % nb].1 as f64);
            }
            m[p][q] = acc;
        }
    }
    m
}

/// Rotates a degenerate pair so that the first state has the larger band ⟨M⟩.
fn split_by_band_m(a: &SpinorState, b: &SpinorState) -> SpinorState {
    let m = band_m_matrix(a, b);
    let (m00, m11, m01) = (m[0][0].re, m[1][1].re, m[0][1]);
    let mean = 0.5 * (m00 + m11);
    let half = 0.5 * (m00 - m11);
    let rad = (half * half + m01.norm_sqr()).sqrt();
    let lam = mean + rad;
    // Eigenvector of [[m00, m01], [m01*, m11]] for λ.
    let (u0, u1) = if m01.norm() < 1e-14 * rad.max(1e-300) || rad == 0.0 {
        if m00 >= m11 {
            (c64::new(1.0, 0.0), c64::new(0.0, 0.0))
        } else {
            (c64::new(0.0, 0.0), c64::new(1.0, 0.0))
        }
    } else {
        let u0 = m01;
        let u1 = c64::new(lam - m00, 0.0);
        let nrm = (u0.norm_sqr() + u1.norm_sqr()).sqrt();
        (u0 / nrm, u1 / nrm)
    };
    let coefficients = a
        .coefficients
        .iter()
        .zip(&b.coefficients)
        .map(|(x, y)| x * u0 + y * u1)
        .collect();
    SpinorState::new(coefficients, a.bands, 0.5 * (a.energy + b.energy))
}

/// Reference ⇑/⇓ states used to label doublets at finite field.
pub type Reference<'a> = &'a [(SpinorState, SpinorState)];

/// Groups eigenstates into Kramers doublets and labels the members.
///
/// At zero field, states within [`PAIRING_TOLERANCE`] are grouped (exactly
/// two per group); ⇑ is the combination with the larger band angular
/// momentum, phase-fixed so its largest coefficient is real-positive, and
/// ⇓ = −Θ⇑ so that Θ⇓ = ⇑. At finite field consecutive states are paired;
/// with `reference` doublets, ⇑/⇓ follow the larger overlap and phases are
/// aligned to the reference; otherwise ⇑ is the higher-energy member.
pub fn kramers_pair(spectrum: &Spectrum, field: &MagneticField, reference: Option<Reference<'_>>) -> Result<Spectrum> {
    let zero_field =
        field.magnitude == 0.0 || !(field.terms.zeeman || field.terms.paramagnetic || field.terms.diamagnetic);
    let states = &spectrum.states;
    let mut out = Vec::with_capacity(states.len());
    let mut residuals = Vec::with_capacity(states.len());
    if zero_field {
        let mut i = 0;
        let mut m = 1;
        while i < states.len() {
            let mut j = i + 1;
            while j < states.len() && (states[j].energy - states[j - 1].energy).abs() < PAIRING_TOLERANCE {
                j += 1;
            }
            match j - i {
                2 => {}
                1 => {
                    return Err(Error::UnpairedDoublet(format!(
                        "state {} at {:.9} meV has no Kramers partner within {PAIRING_TOLERANCE} meV",
                        i, states[i].energy
                    )))
                }
                size => {
                    return Err(Error::AmbiguousPairing {
                        first: i,
                        last: j - 1,
                        size,
                    })
                }
            }
            let mut up = split_by_band_m(&states[i], &states[i + 1]);
            up.fix_phase();
            let mut down = time_reverse(&up);
            down.scale(c64::new(-1.0, 0.0));
            up.energy = states[i].energy.max(states[i + 1].energy);
            down.energy = states[i].energy.min(states[i + 1].energy);
            up.doublet = m;
            down.doublet = m;
            up.member = Some(Member::Up);
            down.member = Some(Member::Down);
            residuals.push(spectrum.residuals[i].max(spectrum.residuals[i + 1]));
            residuals.push(spectrum.residuals[i].max(spectrum.residuals[i + 1]));
            out.push(up);
            out.push(down);
            i = j;
            m += 1;
        }
    } else {
        if states.len() % 2 != 0 {
            return Err(Error::UnpairedDoublet(format!(
                "odd number of states ({}) cannot be grouped into doublets",
                states.len()
            )));
        }
        for (p, pair) in states.chunks(2).enumerate() {
            let m = p + 1;
            let (lo, hi) = if pair[0].energy <= pair[1].energy {
                (&pair[0], &pair[1])
            } else {
                (&pair[1], &pair[0])
            };
            let (mut up, mut down) = match reference.and_then(|r| r.get(p)) {
                Some((ru, _)) => {
                    let o_hi = ru.inner(hi).norm_sqr();
                    let o_lo = ru.inner(lo).norm_sqr();
                    if o_lo > o_hi {
                        (lo.clone(), hi.clone())
                    } else {
                        (hi.clone(), lo.clone())
                    }
                }
                None => (hi.clone(), lo.clone()),
            };
            match reference.and_then(|r| r.get(p)) {
                Some((ru, rd)) => {
                    align_phase(&mut up, ru);
                    align_phase(&mut down, rd);
                }
                None => {
                    up.fix_phase();
                    down.fix_phase();
                }
            }
            up.doublet = m;
            down.doublet = m;
            up.member = Some(Member::Up);
            down.member = Some(Member::Down);
            let r = spectrum.residuals[2 * p].max(spectrum.residuals[2 * p + 1]);
            residuals.push(r);
            residuals.push(r);
            out.push(up);
            out.push(down);
        }
    }
    Ok(Spectrum {
        states: out,
        method: spectrum.method,
        residuals,
        iterations: spectrum.iterations,
    })
}

/// Multiplies `s` by a phase making ⟨reference|s⟩ real and positive.
fn align_phase(s: &mut SpinorState, reference: &SpinorState) {
    let o = reference.inner(s);
    if o.norm() > 1e-12 {
        s.scale(o.conj() / o.norm());
    } else {
        s.fix_phase();
    }
}

/// Writes states in the text dump format:
///
/// ```text
/// holekp-states 1
/// bands <B> orbital_dim <D>
/// state <m> <up|down|-> <energy_meV>
/// <re> <im>            (B·D lines, index orbital·B + band)
/// ```
pub fn write_states<W: Write>(mut w: W, states: &[SpinorState]) -> std::io::Result<()> {
    let Some(first) = states.first() else {
        return writeln!(w, "holekp-states 1\nbands 0 orbital_dim 0");
    };
    writeln!(w, "holekp-states 1")?;
    writeln!(w, "bands {} orbital_dim {}", first.bands, first.orbital_dim())?;
    for s in states {
        let member = s.member.map_or("-", Member::symbol);
        writeln!(w, "state {} {} {:.17e}", s.doublet, member, s.energy)?;
        for c in &s.coefficients {
            writeln!(w, "{:.17e} {:.17e}", c.re, c.im)?;
        }
    }
    Ok(())
}

pub fn read_states<R: BufRead>(r: R) -> Result<Vec<SpinorState>> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(Error::Parse {
                location: format!("line {}", i + 1),
                message: e.to_string(),
            }),
            None => Err(Error::Parse {
                location: "end of file".into(),
                message: format!("expected {what}"),
            }),
        }
    };
    let bad = |line: usize, msg: &str| Error::Parse {
        location: format!("line {line}"),
        message: msg.to_string(),
    };
    let (l, magic) = next("header")?;
    if magic.trim() != "holekp-states 1" {
        return Err(bad(l, "not a state dump"));
    }
    let (l, dims) = next("dimensions")?;
    let f: Vec<&str> = dims.split_whitespace().collect();
    let (bands, orb) = match f.as_slice() {
        ["bands", b, "orbital_dim", d] => (
            b.parse::<usize>().map_err(|_| bad(l, "bad band count"))?,
            d.parse::<usize>().map_err(|_| bad(l, "bad orbital dimension"))?,
        ),
        _ => return Err(bad(l, "expected `bands <B> orbital_dim <D>`")),
    };
    let mut out = Vec::new();
    loop {
        let (l, head) = match next("state") {
            Ok(x) => x,
            Err(_) => break,
        };
        if head.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = head.split_whitespace().collect();
        let (m, member, e) = match f.as_slice() {
            ["state", m, mem, e] => (
                m.parse::<usize>().map_err(|_| bad(l, "bad doublet index"))?,
                match *mem {
                    "up" => Some(Member::Up),
                    "down" => Some(Member::Down),
                    "-" => None,
                    _ => return Err(bad(l, "bad member label")),
                },
                e.parse::<f64>().map_err(|_| bad(l, "bad energy"))?,
            ),
            _ => return Err(bad(l, "expected `state <m> <member> <energy>`")),
        };
        let mut coefficients = Vec::with_capacity(bands * orb);
        for _ in 0..bands * orb {
            let (l, row) = next("coefficient")?;
            let mut it = row.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next()) {
                (Some(Ok(re)), Some(Ok(im))) => coefficients.push(c64::new(re, im)),
                _ => return Err(bad(l, "expected `<re> <im>`")),
            }
        }
        out.push(SpinorState {
            coefficients,
            bands,
            energy: e,
            doublet: m,
            member,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::hamiltonian::{assemble_total, LuttingerParams};
    use crate::potential::PotentialField;

    fn random_state(n: usize, bands: usize, seed: u64) -> SpinorState {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut c: Vec<c64> = (0..n * bands).map(|_| c64::new(next(), next())).collect();
        let nrm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut c {
            *z /= nrm;
        }
        SpinorState::new(c, bands, 0.0)
    }

    #[test]
    fn time_reversal_squares_to_minus_one() {
        let s = random_state(7, 6, 3);
        let t2 = time_reverse(&time_reverse(&s));
        for (a, b) in s.coefficients.iter().zip(&t2.coefficients) {
            assert!((a + b).norm() < 1e-15);
        }
        assert!((time_reverse(&s).norm() - s.norm()).abs() < 1e-14);
        assert!(s.inner(&time_reverse(&s)).norm() < 1e-15);
    }

    #[test]
    fn time_reversal_of_pure_heavy_hole() {
        let mut c = vec![c64::new(0.0, 0.0); 6];
        c[0] = c64::new(0.6, 0.8);
        let t = time_reverse(&SpinorState::new(c, 6, 0.0));
        assert!((t.coefficients[3] - c64::new(-0.6, 0.8)).norm() < 1e-15);
        assert_eq!(t.coefficients.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    fn small_problem() -> HamiltonianMatrix {
        let s = build_basis([3, 3, 2], [8.0, 10.0, 30.0], 4.285).unwrap();
        let pot = PotentialField::from_fn(|r| {
            0.4 * r[0] * r[0] + 0.7 * r[1] * r[1] + 3.0 * r[2] * r[2] + 1.5 * r[2] + 0.2 * r[0] * r[1]
        });
        assemble_total(&s, &LuttingerParams::default(), &pot, &MagneticField::zero()).unwrap()
    }

    #[test]
    fn kramers_pairing_at_zero_field() {
        let h = small_problem();
        let sp = lowest_eigenpairs(&h, 8, &SolverOptions::default()).unwrap();
        let paired = kramers_pair(&sp, &MagneticField::zero(), None).unwrap();
        assert_eq!(paired.doublet_count(), 4);
        for m in 1..=4 {
            let (u, d) = paired.doublet(m).unwrap();
            assert!((u.energy - d.energy).abs() < 1e-9);
            assert!((time_reverse(d).inner(u).norm() - 1.0).abs() < 1e-8);
            assert!(u.inner(d).norm() < 1e-8);
            assert!((h.matrix_element(&u.coefficients, &u.coefficients).re - u.energy).abs() < 1e-8);
        }
    }

    #[test]
    fn ambiguous_cluster_is_reported() {
        let mk = |e: f64| SpinorState::new(vec![c64::new(1.0, 0.0); 6], 6, e);
        let sp = Spectrum {
            states: vec![mk(0.0), mk(0.0), mk(0.0), mk(1.0)],
            method: MethodUsed::Dense,
            residuals: vec![0.0; 4],
            iterations: 0,
        };
        match kramers_pair(&sp, &MagneticField::zero(), None) {
            Err(Error::AmbiguousPairing { first, last, size }) => assert_eq!((first, last, size), (0, 2, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn finite_field_labels_follow_energy() {
        let mut a = vec![c64::new(0.0, 0.0); 6];
        a[0] = c64::new(0.0, 1.0);
        let mut b = vec![c64::new(0.0, 0.0); 6];
        b[3] = c64::new(1.0, 0.0);
        let sp = Spectrum {
            states: vec![SpinorState::new(a, 6, -0.05), SpinorState::new(b, 6, 0.05)],
            method: MethodUsed::Dense,
            residuals: vec![0.0; 2],
            iterations: 0,
        };
        let p = kramers_pair(&sp, &MagneticField::along_z(1.0), None).unwrap();
        let (u, d) = p.doublet(1).unwrap();
        assert_eq!(u.energy, 0.05);
        assert_eq!(d.energy, -0.05);
        assert_eq!(u.coefficients[3], c64::new(1.0, 0.0));
        assert_eq!(d.coefficients[0], c64::new(1.0, 0.0));
    }

    #[test]
    fn dense_and_iterative_agree() {
        let h = small_problem();
        let k = 8;
        let d = lowest_eigenpairs(
            &h,
            k,
            &SolverOptions {
                method: SolverMethod::Dense,
                ..Default::default()
            },
        )
        .unwrap();
        let it = lowest_eigenpairs(
            &h,
            k,
            &SolverOptions {
                method: SolverMethod::Iterative,
                tolerance: 1e-8,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(it.method, MethodUsed::Davidson);
        for j in 0..k {
            assert!((d.states[j].energy - it.states[j].energy).abs() < 1e-9, "{j}");
        }
    }

    #[test]
    fn too_many_eigenpairs() {
        let h = small_problem();
        assert!(matches!(
            lowest_eigenpairs(&h, h.dim() + 1, &SolverOptions::default()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn state_dump_round_trip() {
        let mut s = random_state(3, 6, 11);
        s.doublet = 1;
        s.member = Some(Member::Up);
        s.energy = -12.5;
        let t = time_reverse(&s);
        let mut buf = Vec::new();
        write_states(&mut buf, &[s.clone(), t.clone()]).unwrap();
        let back = read_states(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, vec![s, t]);
    }
}
