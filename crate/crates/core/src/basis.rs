//! Truncated 3D harmonic-oscillator product basis and one-body operator
//! matrix elements.
//!
//! Orbital states |nx, ny, nz⟩ are enumerated lexicographically with `nz`
//! running fastest: `index = (nx·(Ny+1) + ny)·(Nz+1) + nz`. Spinor states
//! append the band index innermost, `spinor = orbital·bands + band`.

use std::fmt;
use std::str::FromStr;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::HBAR2_OVER_2M0;

/// Cartesian axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i]
    }

    fn name(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

/// Default lower bound on the number of Gauss–Hermite points per axis.
pub const DEFAULT_QUADRATURE_MIN: usize = 48;

/// Truncated harmonic-oscillator basis with mass m₀/γ₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Highest oscillator quantum number per axis.
    pub n_max: [usize; 3],
    /// Oscillator energies ħω per axis in meV.
    pub hw: [f64; 3],
    /// Basis mass factor: the oscillator mass is m₀/γ₁.
    pub gamma1: f64,
    /// Oscillator lengths ℓ = √(ħ/mω) in nm.
    pub lengths: [f64; 3],
    /// Minimum Gauss–Hermite order used when projecting potentials.
    pub quadrature_min: usize,
}

/// Oscillator length in nm for energy `hw` (meV) and mass m₀/`gamma1`.
pub fn oscillator_length(hw: f64, gamma1: f64) -> f64 {
    (2.0 * HBAR2_OVER_2M0 * gamma1 / hw).sqrt()
}

/// Oscillator energy in meV for length `ell` (nm) and mass m₀/`gamma1`.
pub fn oscillator_energy(ell: f64, gamma1: f64) -> f64 {
    2.0 * HBAR2_OVER_2M0 * gamma1 / (ell * ell)
}

pub fn build_basis(n_max: [usize; 3], hw: [f64; 3], gamma1: f64) -> Result<BasisSpec> {
    if !(gamma1 > 0.0 && gamma1.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma1 must be positive, got {gamma1}"
        )));
    }
    for (a, &w) in hw.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hbar*omega along {} must be positive, got {w}",
                Axis::from_index(a).name()
            )));
        }
    }
    let lengths = hw.map(|w| oscillator_length(w, gamma1));
    Ok(BasisSpec {
        n_max,
        hw,
        gamma1,
        lengths,
        quadrature_min: DEFAULT_QUADRATURE_MIN,
    })
}

impl BasisSpec {
    pub fn with_quadrature_min(mut self, points: usize) -> Self {
        self.quadrature_min = points;
        self
    }

    /// Number of states along one axis.
    pub fn axis_len(&self, axis: usize) -> usize {
        self.n_max[axis] + 1
    }

    /// Orbital dimension Π(n_max+1).
    pub fn dim(&self) -> usize {
        self.n_max.iter().map(|n| n + 1).product()
    }

    pub fn spinor_dim(&self, bands: usize) -> usize {
        self.dim() * bands
    }

    pub fn index(&self, n: [usize; 3]) -> usize {
        (n[0] * self.axis_len(1) + n[1]) * self.axis_len(2) + n[2]
    }

    pub fn quanta(&self, index: usize) -> [usize; 3] {
        let nz = index % self.axis_len(2);
        let rest = index / self.axis_len(2);
        [rest / self.axis_len(1), rest % self.axis_len(1), nz]
    }

    /// Gauss–Hermite order used along `axis`: max(2·n_max+16, quadrature_min).
    pub fn quadrature_points(&self, axis: usize) -> usize {
        (2 * self.n_max[axis] + 16).max(self.quadrature_min)
    }
}

/// Sparse one-dimensional operator on a single oscillator axis.
#[derive(Debug, Clone)]
pub(crate) struct AxisOp {
    pub entries: Vec<(usize, usize, c64)>,
}

impl AxisOp {
    pub fn identity(n: usize) -> Self {
        Self {
            entries: (0..n).map(|i| (i, i, c64::new(1.0, 0.0))).collect(),
        }
    }

    /// x = ℓ(a + a†)/√2
    pub fn position(n: usize, ell: f64) -> Self {
        let mut entries = Vec::new();
        for i in 0..n.saturating_sub(1) {
            let v = ell * ((i + 1) as f64 / 2.0).sqrt();
            entries.push((i, i + 1, c64::new(v, 0.0)));
            entries.push((i + 1, i, c64::new(v, 0.0)));
        }
        Self { entries }
    }

    /// k = −i d/dx = i(a† − a)/(ℓ√2)
    pub fn momentum(n: usize, ell: f64) -> Self {
        let mut entries = Vec::new();
        for i in 0..n.saturating_sub(1) {
            let v = ((i + 1) as f64 / 2.0).sqrt() / ell;
            entries.push((i, i + 1, c64::new(0.0, -v)));
            entries.push((i + 1, i, c64::new(0.0, v)));
        }
        Self { entries }
    }

    /// x² from the ladder algebra (exact in every retained shell).
    pub fn position_squared(n: usize, ell: f64) -> Self {
        Self::quadratic(n, ell * ell / 2.0, 1.0)
    }

    /// k² from the ladder algebra (exact in every retained shell).
    pub fn momentum_squared(n: usize, ell: f64) -> Self {
        Self::quadratic(n, 1.0 / (2.0 * ell * ell), -1.0)
    }

    fn quadratic(n: usize, scale: f64, off_sign: f64) -> Self {
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, c64::new(scale * (2 * i + 1) as f64, 0.0)));
            if i + 2 < n {
                let v = off_sign * scale * (((i + 1) * (i + 2)) as f64).sqrt();
                entries.push((i, i + 2, c64::new(v, 0.0)));
                entries.push((i + 2, i, c64::new(v, 0.0)));
            }
        }
        Self { entries }
    }

    /// Symmetrized {x, k}/2 = i(a†² − a²)/2.
    pub fn position_momentum(n: usize) -> Self {
        let mut entries = Vec::new();
        for i in 0..n.saturating_sub(2) {
            let v = 0.5 * (((i + 1) * (i + 2)) as f64).sqrt();
            entries.push((i + 2, i, c64::new(0.0, v)));
            entries.push((i, i + 2, c64::new(0.0, -v)));
        }
        Self { entries }
    }

    pub fn parity(n: usize) -> Self {
        Self {
            entries: (0..n)
                .map(|i| (i, i, c64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0)))
                .collect(),
        }
    }
}

/// Tensor product of three axis operators as orbital-basis triplets.
pub(crate) fn tensor_triplets(spec: &BasisSpec, ops: [&AxisOp; 3], scale: c64) -> Vec<(usize, usize, c64)> {
    let mut out = Vec::with_capacity(ops.iter().map(|o| o.entries.len()).product());
    for &(ix, jx, vx) in &ops[0].entries {
        for &(iy, jy, vy) in &ops[1].entries {
            let vxy = vx * vy * scale;
            for &(iz, jz, vz) in &ops[2].entries {
                out.push((spec.index([ix, iy, iz]), spec.index([jx, jy, jz]), vxy * vz));
            }
        }
    }
    out
}

/// Identity of a one-body operator in the orbital basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorLabel {
    /// r_α
    Position(Axis),
    /// k_α = −i∂_α
    Momentum(Axis),
    /// r_α r_β
    PositionPair(Axis, Axis),
    /// k_α k_β
    MomentumPair(Axis, Axis),
    /// {r_α, k_β}/2
    PositionMomentum(Axis, Axis),
    /// Reflection α → −α.
    Parity(Axis),
}

impl OperatorLabel {
    /// Whether the operator is Hermitian.
    pub fn is_hermitian(&self) -> bool {
        true
    }
}

impl fmt::Display for OperatorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorLabel::Position(a) => write!(f, "{}", a.name()),
            OperatorLabel::Momentum(a) => write!(f, "k{}", a.name()),
            OperatorLabel::PositionPair(a, b) => write!(f, "{}*{}", a.name(), b.name()),
            OperatorLabel::MomentumPair(a, b) => write!(f, "k{}*k{}", a.name(), b.name()),
            OperatorLabel::PositionMomentum(a, b) => write!(f, "{}*k{}", a.name(), b.name()),
            OperatorLabel::Parity(a) => write!(f, "parity_{}", a.name()),
        }
    }
}

impl FromStr for OperatorLabel {
    type Err = Error;

    /// Parses labels such as `x`, `ky`, `x*z`, `kx*ky`, `x*ky`, `parity_z`.
    fn from_str(s: &str) -> Result<Self> {
        let unsupported = || Error::UnsupportedOperator(s.to_string());
        let axis = |t: &str| match t {
            "x" => Some(Axis::X),
            "y" => Some(Axis::Y),
            "z" => Some(Axis::Z),
            _ => None,
        };
        // (is_momentum, axis)
        let factor = |t: &str| match t.strip_prefix('k') {
            Some(rest) => axis(rest).map(|a| (true, a)),
            None => axis(t).map(|a| (false, a)),
        };
        let t = s.trim();
        if let Some(rest) = t.strip_prefix("parity_") {
            return axis(rest).map(OperatorLabel::Parity).ok_or_else(unsupported);
        }
        let parts: Vec<&str> = t.split('*').map(str::trim).collect();
        match parts.as_slice() {
            [one] => match factor(one).ok_or_else(unsupported)? {
                (true, a) => Ok(OperatorLabel::Momentum(a)),
                (false, a) => Ok(OperatorLabel::Position(a)),
            },
            [a, b] => {
                let fa = factor(a).ok_or_else(unsupported)?;
                let fb = factor(b).ok_or_else(unsupported)?;
                Ok(match (fa, fb) {
                    ((false, a), (false, b)) => OperatorLabel::PositionPair(a, b),
                    ((true, a), (true, b)) => OperatorLabel::MomentumPair(a, b),
                    ((false, r), (true, k)) | ((true, k), (false, r)) => OperatorLabel::PositionMomentum(r, k),
                })
            }
            _ => Err(unsupported()),
        }
    }
}

/// One-body operator in the orbital basis, stored as sparse triplets.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub label: OperatorLabel,
    pub dim: usize,
    pub entries: Vec<(usize, usize, c64)>,
}

impl OperatorMatrix {
    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }
}

pub(crate) fn axis_ops_for(spec: &BasisSpec, label: OperatorLabel) -> [AxisOp; 3] {
    let n = |a: Axis| spec.axis_len(a.index());
    let ell = |a: Axis| spec.lengths[a.index()];
    let mut ops: [AxisOp; 3] = std::array::from_fn(|a| AxisOp::identity(spec.axis_len(a)));
    match label {
        OperatorLabel::Position(a) => ops[a.index()] = AxisOp::position(n(a), ell(a)),
        OperatorLabel::Momentum(a) => ops[a.index()] = AxisOp::momentum(n(a), ell(a)),
        OperatorLabel::Parity(a) => ops[a.index()] = AxisOp::parity(n(a)),
        OperatorLabel::PositionPair(a, b) if a == b => ops[a.index()] = AxisOp::position_squared(n(a), ell(a)),
        OperatorLabel::PositionPair(a, b) => {
            ops[a.index()] = AxisOp::position(n(a), ell(a));
            ops[b.index()] = AxisOp::position(n(b), ell(b));
        }
        OperatorLabel::MomentumPair(a, b) if a == b => ops[a.index()] = AxisOp::momentum_squared(n(a), ell(a)),
        OperatorLabel::MomentumPair(a, b) => {
            ops[a.index()] = AxisOp::momentum(n(a), ell(a));
            ops[b.index()] = AxisOp::momentum(n(b), ell(b));
        }
        OperatorLabel::PositionMomentum(r, k) if r == k => ops[r.index()] = AxisOp::position_momentum(n(r)),
        OperatorLabel::PositionMomentum(r, k) => {
            ops[r.index()] = AxisOp::position(n(r), ell(r));
            ops[k.index()] = AxisOp::momentum(n(k), ell(k));
        }
    }
    ops
}

pub fn operator_matrix(spec: &BasisSpec, label: OperatorLabel) -> OperatorMatrix {
    let ops = axis_ops_for(spec, label);
    OperatorMatrix {
        label,
        dim: spec.dim(),
        entries: tensor_triplets(spec, [&ops[0], &ops[1], &ops[2]], c64::new(1.0, 0.0)),
    }
}

/// Outcome of the basis-frequency search.
#[derive(Debug, Clone)]
pub struct FrequencyOptimization {
    pub hw: [f64; 3],
    pub energy: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when the search stopped on the iteration budget.
    pub converged: bool,
    /// Best energy after each iteration (first entry: initial point).
    pub history: Vec<f64>,
}

/// Derivative-free (Nelder–Mead) minimization of the ground energy returned
/// by `ground_energy` over the oscillator energies ħω, searched in log space.
pub fn optimize_frequencies<F>(mut ground_energy: F, init: [f64; 3], budget: usize) -> Result<FrequencyOptimization>
where
    F: FnMut([f64; 3]) -> Result<f64>,
{
    if init.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "initial hbar*omega must be positive: {init:?}"
        )));
    }
    let mut evaluations = 0usize;
    let mut eval = |p: &[f64; 3]| -> Result<f64> {
        evaluations += 1;
        let e = ground_energy(p.map(f64::exp))?;
        if e.is_finite() {
            Ok(e)
        } else {
            Ok(f64::INFINITY)
        }
    };
    let start = init.map(f64::ln);
    let e0 = eval(&start)?;
    let mut history = vec![e0];
    if budget == 0 {
        log::warn!("frequency optimization budget is zero; returning the initial frequencies");
        return Ok(FrequencyOptimization {
            hw: init,
            energy: e0,
            iterations: 0,
            evaluations,
            converged: false,
            history,
        });
    }

    const STEP: f64 = 0.2;
    let mut simplex: Vec<([f64; 3], f64)> = vec![(start, e0)];
    for a in 0..3 {
        let mut p = start;
        p[a] += STEP;
        let e = eval(&p)?;
        simplex.push((p, e));
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[3].1;
        let size = simplex[1..]
            .iter()
            .map(|(p, _)| (0..3).map(|a| (p[a] - simplex[0].0[a]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-10 * best.abs().max(1.0) && size < 1e-4 {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; 3];
        for (p, _) in &simplex[..3] {
            for a in 0..3 {
                centroid[a] += p[a] / 3.0;
            }
        }
        let along = |t: f64| -> [f64; 3] { std::array::from_fn(|a| centroid[a] + t * (simplex[3].0[a] - centroid[a])) };

        let reflected = along(-1.0);
        let er = eval(&reflected)?;
        if er < simplex[0].1 {
            let expanded = along(-2.0);
            let ee = eval(&expanded)?;
            simplex[3] = if ee < er { (expanded, ee) } else { (reflected, er) };
        } else if er < simplex[2].1 {
            simplex[3] = (reflected, er);
        } else {
            let contracted = if er < simplex[3].1 { along(-0.5) } else { along(0.5) };
            let ec = eval(&contracted)?;
            if ec < er.min(simplex[3].1) {
                simplex[3] = (contracted, ec);
            } else {
                let anchor = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let p: [f64; 3] = std::array::from_fn(|a| anchor[a] + 0.5 * (v.0[a] - anchor[a]));
                    *v = (p, eval(&p)?);
                }
            }
        }
        let current = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        history.push(current.min(*history.last().unwrap()));
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    if !converged {
        log::warn!("frequency optimization stopped after {budget} iterations without converging");
    }
    let (p, e) = simplex[0];
    Ok(FrequencyOptimization {
        hw: p.map(f64::exp),
        energy: e,
        iterations,
        evaluations,
        converged,
        history,
    })
}
