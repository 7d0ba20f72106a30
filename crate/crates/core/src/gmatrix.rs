//! Gyromagnetic matrix of the ground doublet, its principal factors and
//! the closed-form Larmor and Rabi frequencies derived from them.

use faer::{c64, Mat};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::basis::Axis;
use crate::error::{Error, Result};
use crate::hamiltonian::{direction, HamiltonianMatrix};
use crate::solver::SpinorState;
use crate::units::{MU_B, MU_B_OVER_H_GHZ};

/// Tolerance on Ĝ eigenvalue separation below which principal axes are ambiguous.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

/// Tolerance (rad) on principal axes shared by ĝ and ĝ′.
pub const AXIS_TOLERANCE: f64 = 1e-2;

/// Anything that can evaluate ⟨u|M|v⟩.
pub trait MatrixElement {
    fn element(&self, u: &[c64], v: &[c64]) -> c64;
}

impl MatrixElement for HamiltonianMatrix {
    fn element(&self, u: &[c64], v: &[c64]) -> c64 {
        self.matrix_element(u, v)
    }
}

impl MatrixElement for Mat<c64> {
    fn element(&self, u: &[c64], v: &[c64]) -> c64 {
        let mut acc = c64::new(0.0, 0.0);
        for (i, a) in u.iter().enumerate() {
            let mut row = c64::new(0.0, 0.0);
            for (j, b) in v.iter().enumerate() {
                row += self[(i, j)] * b;
            }
            acc += a.conj() * row;
        }
        acc
    }
}

/// ĝ such that H = ½μ_B σ·(ĝB) within the reference doublet.
#[derive(Debug, Clone)]
pub struct GMatrix {
    /// Rows: pseudo-spin X, Y, Z; columns: field components x, y, z.
    pub g: Matrix3<f64>,
    pub v_g: f64,
    /// Reference doublet (⇑, ⇓) the matrix was extracted from.
    pub reference: Option<(SpinorState, SpinorState)>,
}

impl GMatrix {
    pub fn new(g: Matrix3<f64>, v_g: f64) -> Self {
        Self {
            g,
            v_g,
            reference: None,
        }
    }

    /// Zeeman tensor Ĝ = ĝᵀĝ.
    pub fn zeeman_tensor(&self) -> Matrix3<f64> {
        self.g.transpose() * self.g
    }

    /// g* = |ĝb| for a unit vector b.
    pub fn effective_g(&self, b: [f64; 3]) -> f64 {
        (self.g * Vector3::from(b)).norm()
    }
}

/// Builds ĝ from the field derivatives M_χ = ∂H/∂B_χ and the reference doublet.
pub fn extract_g<M: MatrixElement>(
    derivatives: &[M; 3],
    up: &SpinorState,
    down: &SpinorState,
    v_g: f64,
) -> Result<GMatrix> {
    if up.coefficients.len() != down.coefficients.len() || up.coefficients.is_empty() {
        return Err(Error::UnpairedDoublet(
            "reference doublet states are missing or mismatched".into(),
        ));
    }
    let (u, d) = (&up.coefficients[..], &down.coefficients[..]);
    let mut g = Matrix3::zeros();
    for (chi, m) in derivatives.iter().enumerate() {
        let off = m.element(d, u);
        let diag = m.element(u, u).re - m.element(d, d).re;
        g[(0, chi)] = 2.0 / MU_B * off.re;
        g[(1, chi)] = 2.0 / MU_B * off.im;
        g[(2, chi)] = diag / MU_B;
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite g-matrix entry".into()));
    }
    Ok(GMatrix {
        g,
        v_g,
        reference: Some((up.clone(), down.clone())),
    })
}

/// Six field orientations that determine a symmetric tensor.
pub fn six_orientations() -> [[f64; 3]; 6] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [s, s, 0.0],
        [0.0, s, s],
        [s, 0.0, s],
    ]
}

/// Least-squares Ĝ from effective g factors, g*² = bᵀĜb, at ≥ 6 orientations.
pub fn zeeman_tensor_from_splittings(samples: &[([f64; 3], f64)]) -> Result<Matrix3<f64>> {
    if samples.len() < 6 {
        return Err(Error::InvalidParameter(format!(
            "need at least 6 orientations, got {}",
            samples.len()
        )));
    }
    let rows = samples.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(rows, 6);
    let mut rhs = nalgebra::DVector::<f64>::zeros(rows);
    for (k, (b, gs)) in samples.iter().enumerate() {
        a[(k, 0)] = b[0] * b[0];
        a[(k, 1)] = b[1] * b[1];
        a[(k, 2)] = b[2] * b[2];
        a[(k, 3)] = 2.0 * b[0] * b[1];
        a[(k, 4)] = 2.0 * b[1] * b[2];
        a[(k, 5)] = 2.0 * b[0] * b[2];
        rhs[k] = gs * gs;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() < 1e-10 * smax {
        return Err(Error::InvalidParameter(
            "field orientations do not determine the Zeeman tensor".into(),
        ));
    }
    let x = svd
        .solve(&rhs, 1e-12 * smax)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(Matrix3::new(x[0], x[3], x[5], x[3], x[1], x[4], x[5], x[4], x[2]))
}

/// Signed principal g factors with their axes, indexed by the matched lab axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalG {
    /// g_x, g_y, g_z.
    pub values: [f64; 3],
    /// Unit principal axes matched to x, y, z.
    pub axes: [[f64; 3]; 3],
    /// ∂g_α/∂V_G per volt.
    pub derivatives: Option<[f64; 3]>,
    pub v_g: f64,
}

impl PrincipalG {
    /// Diagonal factors along the lab axes.
    pub fn diagonal(values: [f64; 3], derivatives: Option<[f64; 3]>) -> Self {
        Self {
            values,
            axes: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            derivatives,
            v_g: 0.0,
        }
    }

    /// Largest angle (rad) between a principal axis and its lab axis.
    pub fn axis_deviation(&self) -> f64 {
        (0..3)
            .map(|a| self.axes[a][a].abs().min(1.0).acos())
            .fold(0.0, f64::max)
    }

    /// Components of b in the principal frame.
    fn project(&self, b: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (0..3).map(|k| self.axes[a][k] * b[k]).sum())
    }

    /// g* = √Σ(g_α b_α)².
    pub fn effective_g(&self, b: [f64; 3]) -> f64 {
        let p = self.project(b);
        (0..3).map(|a| (self.values[a] * p[a]).powi(2)).sum::<f64>().sqrt()
    }

    fn require_derivatives(&self) -> Result<[f64; 3]> {
        self.derivatives
            .ok_or_else(|| Error::InvalidParameter("principal g factors carry no voltage derivatives".into()))
    }
}

fn rotation_z(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn decompose(gm: &GMatrix, tensor: Matrix3<f64>) -> Result<PrincipalG> {
    let eig = SymmetricEigen::new(tensor);
    let lambda = eig.eigenvalues;
    for i in 0..3 {
        for j in i + 1..3 {
            if (lambda[i] - lambda[j]).abs() < DEGENERACY_TOLERANCE {
                return Err(Error::DegenerateTensor([lambda[0], lambda[1], lambda[2]]));
            }
        }
    }
    // perm[lab axis] = eigenvector index with maximal total overlap.
    let perm = PERMUTATIONS
        .iter()
        .max_by(|p, q| {
            let score = |p: &[usize; 3]| (0..3).map(|a| eig.eigenvectors[(a, p[a])].abs()).sum::<f64>();
            score(p).total_cmp(&score(q))
        })
        .copied()
        .unwrap();
    // Remove the residual pseudo-spin phase gauge before reading signs.
    let g = gm.g;
    let psi = (g[(1, 0)] - g[(0, 1)]).atan2(g[(0, 0)] + g[(1, 1)]);
    let aligned = rotation_z(psi) * g;
    let mut values = [0.0; 3];
    let mut axes = [[0.0; 3]; 3];
    for a in 0..3 {
        let mut v: Vector3<f64> = eig.eigenvectors.column(perm[a]).into_owned();
        if v[a] < 0.0 {
            v = -v;
        }
        let modulus = lambda[perm[a]].max(0.0).sqrt();
        let sign = if (aligned * v)[a] < 0.0 { -1.0 } else { 1.0 };
        values[a] = sign * modulus;
        axes[a] = [v[0], v[1], v[2]];
    }
    Ok(PrincipalG {
        values,
        axes,
        derivatives: None,
        v_g: gm.v_g,
    })
}

/// Principal factors from Ĝ = ĝᵀĝ.
pub fn principal_g(gm: &GMatrix) -> Result<PrincipalG> {
    decompose(gm, gm.zeeman_tensor())
}

/// Principal factors from Ĝ fitted to effective g factors at several orientations;
/// signs still come from ĝ.
pub fn principal_g_from_splittings(gm: &GMatrix, samples: &[([f64; 3], f64)]) -> Result<PrincipalG> {
    decompose(gm, zeeman_tensor_from_splittings(samples)?)
}

/// Forward difference (g(V_G+δV_G) − g(V_G))/δV_G of the principal factors.
pub fn g_derivative(at: &GMatrix, plus: &GMatrix, delta_v: f64) -> Result<PrincipalG> {
    if delta_v == 0.0 || !delta_v.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "voltage step must be nonzero, got {delta_v}"
        )));
    }
    let mut a = principal_g(at)?;
    let b = principal_g(plus)?;
    for k in 0..3 {
        let dot: f64 = (0..3).map(|i| a.axes[k][i] * b.axes[k][i]).sum();
        let angle = dot.abs().min(1.0).acos();
        if angle > AXIS_TOLERANCE {
            return Err(Error::AxisMismatch {
                angle,
                tolerance: AXIS_TOLERANCE,
            });
        }
    }
    a.derivatives = Some(std::array::from_fn(|k| (b.values[k] - a.values[k]) / delta_v));
    Ok(a)
}

/// Larmor frequency f_L = μ_B B g*/h in GHz.
pub fn larmor_from_g(pg: &PrincipalG, b: [f64; 3], field: f64) -> f64 {
    MU_B_OVER_H_GHZ * field * pg.effective_g(b)
}

/// μ_B B δV_G/2h in MHz.
fn rabi_prefactor(field: f64, delta_v: f64) -> f64 {
    MU_B_OVER_H_GHZ * 1.0e3 * field * delta_v / 2.0
}

/// (f_R^X, f_R^Z) in MHz for field direction b.
pub fn rabi_from_g(pg: &PrincipalG, b: [f64; 3], field: f64, delta_v: f64) -> Result<(f64, f64)> {
    let d = pg.require_derivatives()?;
    let p = pg.project(b);
    let gb = Vector3::from(std::array::from_fn::<f64, 3, _>(|a| pg.values[a] * p[a]));
    let dgb = Vector3::from(std::array::from_fn::<f64, 3, _>(|a| d[a] * p[a]));
    let gs = gb.norm();
    if gs == 0.0 {
        return Ok((0.0, 0.0));
    }
    let pre = rabi_prefactor(field, delta_v) / gs;
    Ok((pre * gb.cross(&dgb).norm(), pre * gb.dot(&dgb).abs()))
}

/// Harmonic combination (1/f_X + 1/f_Z)⁻¹; zero if either vanishes.
pub fn combined_rabi(f_x: f64, f_z: f64) -> f64 {
    if f_x == 0.0 || f_z == 0.0 {
        0.0
    } else {
        f_x * f_z / (f_x + f_z)
    }
}

/// Plane containing the field: yz (φ = 90°) or xz (φ = 0°); θ is measured from z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Yz,
    Xz,
}

impl Plane {
    fn in_plane_axis(self) -> usize {
        match self {
            Plane::Yz => 1,
            Plane::Xz => 0,
        }
    }

    pub fn phi_deg(self) -> f64 {
        match self {
            Plane::Yz => 90.0,
            Plane::Xz => 0.0,
        }
    }
}

/// Closed-form (f_R^X, f_R^Z) in MHz at polar angle θ within `plane`.
pub fn rabi_in_plane(pg: &PrincipalG, plane: Plane, theta_deg: f64, field: f64, delta_v: f64) -> Result<(f64, f64)> {
    let d = pg.require_derivatives()?;
    let t = plane.in_plane_axis();
    let (g1, g1p, g3, g3p) = (pg.values[t], d[t], pg.values[2], d[2]);
    let (s, c) = theta_deg.to_radians().sin_cos();
    let den = (g1 * g1 * s * s + g3 * g3 * c * c).sqrt();
    if den == 0.0 {
        return Ok((0.0, 0.0));
    }
    let pre = rabi_prefactor(field, delta_v);
    let fx = pre * (g1 * g3p - g3 * g1p).abs() * (s * c).abs() / den;
    let fz = pre * (g1 * g1p * s * s + g3 * g3p * c * c).abs() / den;
    Ok((fx, fz))
}

/// Optimal field orientations within a plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalAngles {
    pub plane: Plane,
    /// θ maximizing f_R^X.
    pub theta_x_max_deg: f64,
    pub f_x_max_mhz: f64,
    /// θ at which f_R^Z vanishes.
    pub theta_z_min_deg: f64,
    /// Largest f_R^Z over all orientations.
    pub f_z_max_mhz: f64,
    /// Axis along which f_R^Z is largest.
    pub f_z_axis: Axis,
    /// Set when a vanishing in-plane factor forces a 90° limiting angle.
    pub limiting: bool,
}

pub fn optimal_angles(pg: &PrincipalG, plane: Plane, field: f64, delta_v: f64) -> Result<OptimalAngles> {
    let d = pg.require_derivatives()?;
    let t = plane.in_plane_axis();
    let (g1, g1p, g3, g3p) = (pg.values[t], d[t], pg.values[2], d[2]);
    let pre = rabi_prefactor(field, delta_v);
    let mut limiting = false;
    let theta_x = if g1 == 0.0 {
        limiting = true;
        90.0
    } else {
        (g3 / g1).abs().sqrt().atan().to_degrees()
    };
    let f_x_max = if g1 == 0.0 && g3 == 0.0 {
        0.0
    } else {
        pre * (g3 * g1p - g1 * g3p).abs() / (g3.abs() + g1.abs())
    };
    let theta_z = if g1 * g1p == 0.0 {
        limiting = true;
        90.0
    } else {
        ((g3 * g3p) / (g1 * g1p)).abs().sqrt().atan().to_degrees()
    };
    let axis = (0..3).max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs())).unwrap();
    Ok(OptimalAngles {
        plane,
        theta_x_max_deg: theta_x,
        f_x_max_mhz: f_x_max,
        theta_z_min_deg: theta_z,
        f_z_max_mhz: pre * d[axis].abs(),
        f_z_axis: Axis::from_index(axis),
        limiting,
    })
}

/// One orientation of an angular map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularPoint {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub f_l_ghz: f64,
    pub f_rx_mhz: f64,
    pub f_rz_mhz: f64,
    pub f_rxz_mhz: f64,
}

/// CSV header for angular maps.
pub const ANGULAR_MAP_HEADER: [&str; 6] = ["theta_deg", "phi_deg", "f_L_GHz", "f_RX_MHz", "f_RZ_MHz", "f_RXZ_MHz"];

/// Frequencies on θ_i = 180°·i/(n_θ−1), φ_j = 360°·j/n_φ, θ-major.
pub fn angular_map(
    pg: &PrincipalG,
    n_theta: usize,
    n_phi: usize,
    field: f64,
    delta_v: f64,
) -> Result<Vec<AngularPoint>> {
    if n_theta < 2 || n_phi < 2 {
        return Err(Error::InvalidParameter(format!(
            "angular grid must be at least 2x2, got {n_theta}x{n_phi}"
        )));
    }
    pg.require_derivatives()?;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let theta = 180.0 * i as f64 / (n_theta - 1) as f64;
        for j in 0..n_phi {
            let phi = 360.0 * j as f64 / n_phi as f64;
            let b = direction(theta, phi);
            let (fx, fz) = rabi_from_g(pg, b, field, delta_v)?;
            out.push(AngularPoint {
                theta_deg: theta,
                phi_deg: phi,
                f_l_ghz: larmor_from_g(pg, b, field),
                f_rx_mhz: fx,
                f_rz_mhz: fz,
                f_rxz_mhz: combined_rabi(fx, fz),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_M06: ([f64; 3], [f64; 3]) = ([1.342, 1.700, 4.074], [0.553, 1.192, -1.209]);
    const TABLE_M08: ([f64; 3], [f64; 3]) = ([1.222, 1.451, 4.299], [0.639, 1.261, -1.037]);

    fn table(set: ([f64; 3], [f64; 3])) -> PrincipalG {
        PrincipalG::diagonal(set.0, Some(set.1))
    }

    /// Dense 2×2 M_χ = ½μ_B Σ_α ĝ_{αχ} σ_α.
    fn two_level(g: Matrix3<f64>) -> [Mat<c64>; 3] {
        std::array::from_fn(|chi| {
            let (gx, gy, gz) = (g[(0, chi)], g[(1, chi)], g[(2, chi)]);
            let h = 0.5 * MU_B;
            let mut m = Mat::<c64>::zeros(2, 2);
            m[(0, 0)] = c64::new(h * gz, 0.0);
            m[(1, 1)] = c64::new(-h * gz, 0.0);
            m[(0, 1)] = c64::new(h * gx, -h * gy);
            m[(1, 0)] = c64::new(h * gx, h * gy);
            m
        })
    }

    fn basis_states(phase: f64) -> (SpinorState, SpinorState) {
        let up = SpinorState::new(vec![c64::new(phase.cos(), phase.sin()), c64::new(0.0, 0.0)], 2, 0.0);
        let down = SpinorState::new(vec![c64::new(0.0, 0.0), c64::new(1.0, 0.0)], 2, 0.0);
        (up, down)
    }

    fn rotation(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle).matrix()
    }

    #[test]
    fn recovers_synthetic_diagonal() {
        let g = Matrix3::from_diagonal(&Vector3::new(1.3, 1.7, 4.1));
        let (up, down) = basis_states(0.0);
        let gm = extract_g(&two_level(g), &up, &down, 0.0).unwrap();
        assert!((gm.g - g).abs().max() < 1e-10);
    }

    #[test]
    fn phase_rotation_leaves_tensor_invariant() {
        let g = rotation([0.3, -0.2, 1.0], 0.4) * Matrix3::from_diagonal(&Vector3::new(1.3, 1.7, 4.1));
        let m = two_level(g);
        let (u0, d0) = basis_states(0.0);
        let (u1, d1) = basis_states(0.9);
        let a = extract_g(&m, &u0, &d0, 0.0).unwrap();
        let b = extract_g(&m, &u1, &d1, 0.0).unwrap();
        assert!((a.g - b.g).abs().max() > 0.1);
        assert!((a.zeeman_tensor() - b.zeeman_tensor()).abs().max() < 1e-10);
        let pa = principal_g(&a).unwrap();
        let pb = principal_g(&b).unwrap();
        for k in 0..3 {
            assert!((pa.values[k] - pb.values[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn gauge_alignment_restores_signs() {
        // Only the in-plane sign product is gauge invariant; g_z keeps its own sign.
        let g = Matrix3::from_diagonal(&Vector3::new(1.342, 1.7, -4.074));
        let (up, down) = basis_states(2.2);
        let gm = extract_g(&two_level(g), &up, &down, 0.0).unwrap();
        let pg = principal_g(&gm).unwrap();
        assert!((pg.values[0] - 1.342).abs() < 1e-10);
        assert!((pg.values[1] - 1.7).abs() < 1e-10);
        assert!((pg.values[2] + 4.074).abs() < 1e-10);
    }

    #[test]
    fn principal_axes_of_rotated_tensor() {
        let r = rotation([1.0, 2.0, 0.5], 0.3);
        let gm = GMatrix::new(
            r * Matrix3::from_diagonal(&Vector3::new(2.0, 3.0, 4.0)) * r.transpose(),
            0.0,
        );
        let pg = principal_g(&gm).unwrap();
        let mut moduli = pg.values.map(f64::abs);
        moduli.sort_by(f64::total_cmp);
        for (m, want) in moduli.iter().zip([2.0, 3.0, 4.0]) {
            assert!((m - want).abs() < 1e-10);
        }
        for a in 0..3 {
            let col = r.column(a);
            let dot: f64 = (0..3).map(|k| col[k] * pg.axes[a][k]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-10);
            let n: f64 = pg.axes[a].iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn table_tensor_eigenvalues() {
        let gm = GMatrix::new(Matrix3::from_diagonal(&Vector3::from(TABLE_M06.0)), -0.6);
        let mut ev: Vec<f64> = SymmetricEigen::new(gm.zeeman_tensor())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        for (e, want) in ev.iter().zip([1.801_0, 2.890_0, 16.597_5]) {
            assert!((e - want).abs() < 1e-4, "{e} vs {want}");
        }
    }

    #[test]
    fn isotropic_tensor_is_ambiguous() {
        let gm = GMatrix::new(Matrix3::identity() * 2.0, 0.0);
        assert!(matches!(principal_g(&gm), Err(Error::DegenerateTensor(_))));
    }

    #[test]
    fn tensor_from_six_orientations() {
        let r = rotation([0.2, 1.0, -0.4], 0.7);
        let gm = GMatrix::new(r * Matrix3::from_diagonal(&Vector3::new(1.2, -1.6, 3.9)), 0.0);
        let samples: Vec<_> = six_orientations().iter().map(|&b| (b, gm.effective_g(b))).collect();
        let fit = zeeman_tensor_from_splittings(&samples).unwrap();
        assert!((fit - gm.zeeman_tensor()).abs().max() < 1e-10);
        let a = principal_g(&gm).unwrap();
        let b = principal_g_from_splittings(&gm, &samples).unwrap();
        for k in 0..3 {
            assert!((a.values[k] - b.values[k]).abs() < 1e-9);
        }
        assert!(zeeman_tensor_from_splittings(&samples[..5]).is_err());
    }

    #[test]
    fn linear_voltage_dependence() {
        let at = |v: f64| GMatrix::new(Matrix3::from_diagonal(&Vector3::new(1.0 + 0.5 * v, 2.0, 3.0)), v);
        let pg = g_derivative(&at(0.0), &at(0.01), 0.01).unwrap();
        let d = pg.derivatives.unwrap();
        assert!((d[0] - 0.5).abs() < 1e-9 && d[1].abs() < 1e-9 && d[2].abs() < 1e-9);
        assert!(g_derivative(&at(0.0), &at(0.01), 0.0).is_err());
    }

    #[test]
    fn rotated_axes_are_rejected() {
        let a = GMatrix::new(Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)), 0.0);
        let r = rotation([0.0, 0.0, 1.0], 0.05);
        let b = GMatrix::new(a.g * r.transpose(), 0.01);
        assert!(matches!(g_derivative(&a, &b, 0.01), Err(Error::AxisMismatch { .. })));
    }

    #[test]
    fn table_finite_difference_is_bracketed() {
        let d = (TABLE_M06.0[0] - TABLE_M08.0[0]) / 0.2;
        assert!((d - 0.60).abs() < 1e-12);
        assert!(d > TABLE_M06.1[0] && d < TABLE_M08.1[0]);
    }

    #[test]
    fn larmor_values() {
        let pg = table(TABLE_M06);
        let f = larmor_from_g(&pg, [0.0, 0.0, 1.0], 1.0);
        // 13.996 GHz/T × 4.074
        assert!((f - 57.02).abs() < 0.01, "{f}");
        let iso = PrincipalG::diagonal([2.0; 3], None);
        assert!((larmor_from_g(&iso, direction(37.0, 211.0), 1.0) - 27.99).abs() < 0.01);
        assert_eq!(larmor_from_g(&pg, [0.0, 0.0, 1.0], 0.0), 0.0);
    }

    #[test]
    fn rabi_vanishes_on_principal_axes() {
        let pg = table(TABLE_M06);
        for a in 0..3 {
            let mut b = [0.0; 3];
            b[a] = 1.0;
            assert!(rabi_from_g(&pg, b, 1.0, 0.01).unwrap().0.abs() < 1e-12);
        }
        let prop = PrincipalG::diagonal([1.3, 1.7, 4.1], Some([0.13, 0.17, 0.41]));
        for (t, p) in [(10.0, 20.0), (57.0, 90.0), (120.0, 300.0)] {
            assert!(rabi_from_g(&prop, direction(t, p), 1.0, 0.01).unwrap().0 < 1e-12);
        }
    }

    #[test]
    fn table_rabi_at_optimum() {
        let pg = table(TABLE_M06);
        let (fx, _) = rabi_from_g(&pg, direction(57.1, 90.0), 1.0, 0.01).unwrap();
        assert!((fx - 83.8).abs() / 83.8 < 0.01, "{fx}");
    }

    #[test]
    fn table_optimal_angles() {
        let m06 = optimal_angles(&table(TABLE_M06), Plane::Yz, 1.0, 0.01).unwrap();
        assert!((m06.theta_x_max_deg - 57.1).abs() < 0.1);
        assert!((m06.f_x_max_mhz - 83.8).abs() / 83.8 < 0.01);
        assert!((m06.theta_z_min_deg - 57.3).abs() < 0.2);
        assert!((m06.f_z_max_mhz - 83.4).abs() / 83.4 < 0.02);
        assert_eq!(m06.f_z_axis, Axis::Z);
        let m08 = optimal_angles(&table(TABLE_M08), Plane::Yz, 1.0, 0.01).unwrap();
        assert!((m08.theta_x_max_deg - 59.9).abs() < 0.1);
        assert!((m08.f_x_max_mhz - 84.3).abs() / 84.3 < 0.01);
        assert!((m08.theta_z_min_deg - 57.3).abs() < 0.2);
        assert!((m08.f_z_max_mhz - 88.3).abs() / 88.3 < 0.01);
        assert_eq!(m08.f_z_axis, Axis::Y);
        assert!(!m08.limiting);
    }

    #[test]
    fn closed_form_maxima_match_scan() {
        for set in [TABLE_M06, TABLE_M08] {
            let pg = table(set);
            for plane in [Plane::Yz, Plane::Xz] {
                let opt = optimal_angles(&pg, plane, 1.0, 0.01).unwrap();
                let (mut best, mut arg) = (0.0, 0.0);
                for i in 0..=9000 {
                    let t = i as f64 * 0.01;
                    let fx = rabi_in_plane(&pg, plane, t, 1.0, 0.01).unwrap().0;
                    if fx > best {
                        best = fx;
                        arg = t;
                    }
                }
                assert!((arg - opt.theta_x_max_deg).abs() < 0.02);
                assert!((best - opt.f_x_max_mhz).abs() < 1e-6 * best);
                let fz = rabi_in_plane(&pg, plane, opt.theta_z_min_deg, 1.0, 0.01).unwrap().1;
                assert!(fz < 1e-9, "{fz}");
            }
        }
    }

    #[test]
    fn limiting_angle_flagged() {
        let pg = PrincipalG::diagonal([1.0, 0.0, 3.0], Some([0.1, 0.2, 0.3]));
        let opt = optimal_angles(&pg, Plane::Yz, 1.0, 0.01).unwrap();
        assert!(opt.limiting);
        assert_eq!(opt.theta_x_max_deg, 90.0);
        assert!(!optimal_angles(&pg, Plane::Xz, 1.0, 0.01).unwrap().limiting);
    }

    #[test]
    fn harmonic_combination() {
        assert_eq!(combined_rabi(100.0, 100.0), 50.0);
        assert_eq!(combined_rabi(42.0, 0.0), 0.0);
        assert_eq!(combined_rabi(0.0, 42.0), 0.0);
    }

    #[test]
    fn combined_peak_between_component_maxima() {
        let pg = table(TABLE_M06);
        let scan = |f: &dyn Fn(f64) -> f64| {
            (0..=9000)
                .map(|i| i as f64 * 0.01)
                .max_by(|a, b| f(*a).total_cmp(&f(*b)))
                .unwrap()
        };
        let fx = |t| rabi_in_plane(&pg, Plane::Yz, t, 1.0, 0.01).unwrap().0;
        let fz = |t| rabi_in_plane(&pg, Plane::Yz, t, 1.0, 0.01).unwrap().1;
        let fxz = |t| combined_rabi(fx(t), fz(t));
        let (a, b, c) = (scan(&fx), scan(&fz), scan(&fxz));
        assert!(c > a.min(b) && c < a.max(b), "{a} {c} {b}");
    }

    #[test]
    fn map_matches_closed_form_and_symmetry() {
        let pg = table(TABLE_M06);
        let map = angular_map(&pg, 37, 8, 1.0, 0.01).unwrap();
        assert_eq!(map.len(), 37 * 8);
        let at = |t: usize, p: usize| map[t * 8 + p];
        for i in 0..37 {
            // φ = 90° slice
            let pt = at(i, 2);
            let (fx, fz) = rabi_in_plane(&pg, Plane::Yz, pt.theta_deg, 1.0, 0.01).unwrap();
            assert!((pt.f_rx_mhz - fx).abs() < 1e-12 * fx.max(1.0));
            assert!((pt.f_rz_mhz - fz).abs() < 1e-12 * fz.max(1.0));
            for j in 0..8 {
                let a = at(i, j);
                let b = at(36 - i, (j + 4) % 8);
                assert!((a.f_rx_mhz - b.f_rx_mhz).abs() < 1e-9);
                assert!((a.f_l_ghz - b.f_l_ghz).abs() < 1e-9);
            }
        }
        // on-axis orientations: z pole and x, y, −x, −y at the equator
        assert!(at(0, 0).f_rx_mhz < 1e-9 && at(36, 0).f_rx_mhz < 1e-9);
        for j in [0, 2, 4, 6] {
            assert!(at(18, j).f_rx_mhz < 1e-9);
        }
        let best = map.iter().max_by(|a, b| a.f_rx_mhz.total_cmp(&b.f_rx_mhz)).unwrap();
        assert!((best.phi_deg - 90.0).abs() < 1e-12 || (best.phi_deg - 270.0).abs() < 1e-12);
        assert!(angular_map(&pg, 1, 8, 1.0, 0.01).is_err());
    }
}
