//! Operating-point workflow for one device: cached Hamiltonian pieces,
//! Kramers-labeled solves, state reports, direct qubit metrics and the
//! g-matrix at a gate voltage.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    band_occupation, larmor_direct, penetration, rabi_x_direct, rabi_z_direct, symmetry_expectation, BandOccupation,
    QubitMetrics, Symmetry,
};
use crate::basis::{build_basis, optimize_frequencies, BasisSpec, FrequencyOptimization};
use crate::error::{Error, Result};
use crate::gmatrix::{combined_rabi, extract_g, g_derivative, GMatrix, PrincipalG};
use crate::hamiltonian::{
    assemble_kp, assemble_magnetic, field_derivatives, project_orbital, HamiltonianMatrix, LuttingerParams,
    MagneticField, MagneticTerms,
};
use crate::potential::{
    delta_potential, model_potential, DeviceGeometry, ModelPotentialParams, PotentialField, RegionId,
};
use crate::solver::{
    kramers_pair, lowest_eigenpairs_with, time_reverse, BandPreconditioner, SolverMethod, SolverOptions, Spectrum,
    SpinorState,
};

/// Field used to fix the reference doublet for ĝ (T, along z).
pub const REFERENCE_FIELD: f64 = 1e-2;

/// Where U(r) comes from.
#[derive(Clone)]
pub enum PotentialSource {
    Model(ModelPotentialParams),
    /// Externally computed fields, looked up by gate voltage.
    Grids(Vec<PotentialField>),
}

impl PotentialSource {
    pub fn field(&self, geometry: &DeviceGeometry, v_g: f64) -> Result<PotentialField> {
        match self {
            PotentialSource::Model(p) => model_potential(geometry, p, v_g),
            PotentialSource::Grids(fields) => fields
                .iter()
                .find(|f| (f.v_g - v_g).abs() < 1e-9)
                .cloned()
                .ok_or_else(|| Error::InvalidParameter(format!("no imported potential grid for V_G = {v_g} V"))),
        }
    }
}

fn key(v_g: f64) -> u64 {
    v_g.to_bits()
}

/// One device in one basis.
pub struct Device {
    pub spec: BasisSpec,
    pub luttinger: LuttingerParams,
    pub geometry: DeviceGeometry,
    pub source: PotentialSource,
    pub solver: SolverOptions,
    /// Magnetic terms included in every solve and in ∂H/∂B.
    pub terms: MagneticTerms,
    kp: HamiltonianMatrix,
    derivatives: OnceLock<[HamiltonianMatrix; 3]>,
    potentials: Mutex<HashMap<u64, Arc<Mat<f64>>>>,
    preconditioners: Mutex<HashMap<u64, Arc<BandPreconditioner>>>,
}

impl Device {
    pub fn new(
        spec: BasisSpec,
        luttinger: LuttingerParams,
        geometry: DeviceGeometry,
        source: PotentialSource,
        solver: SolverOptions,
    ) -> Result<Self> {
        luttinger.validate()?;
        geometry.validate()?;
        if let PotentialSource::Model(p) = &source {
            p.validate()?;
        }
        let kp = assemble_kp(&spec, &luttinger)?;
        Ok(Self {
            spec,
            luttinger,
            geometry,
            source,
            solver,
            terms: MagneticTerms::ALL,
            kp,
            derivatives: OnceLock::new(),
            potentials: Mutex::new(HashMap::new()),
            preconditioners: Mutex::new(HashMap::new()),
        })
    }

    pub fn bands(&self) -> usize {
        self.luttinger.band_count
    }

    pub fn dim(&self) -> usize {
        self.spec.spinor_dim(self.bands())
    }

    pub fn potential(&self, v_g: f64) -> Result<PotentialField> {
        self.source.field(&self.geometry, v_g)
    }

    /// Projected orbital matrix of U at `v_g` (cached).
    pub fn orbital_potential(&self, v_g: f64) -> Result<Arc<Mat<f64>>> {
        if let Some(u) = self.potentials.lock().unwrap().get(&key(v_g)) {
            return Ok(u.clone());
        }
        let u = Arc::new(project_orbital(&self.spec, &self.potential(v_g)?)?);
        self.potentials.lock().unwrap().insert(key(v_g), u.clone());
        Ok(u)
    }

    /// Projected orbital matrix of δU = U(V_G+δV_G) − U(V_G).
    pub fn delta_orbital(&self, v_g: f64, delta_v: f64) -> Result<Mat<f64>> {
        let du = delta_potential(&self.potential(v_g)?, &self.potential(v_g + delta_v)?)?;
        project_orbital(&self.spec, &du)
    }

    pub fn with_terms(mut self, terms: MagneticTerms) -> Self {
        self.terms = terms;
        self
    }

    /// H_kp + U + H_B; the field's own term mask is replaced by the device's.
    pub fn hamiltonian(&self, v_g: f64, field: &MagneticField) -> Result<HamiltonianMatrix> {
        let field = &field.with_terms(self.terms);
        let u = HamiltonianMatrix::from_orbital_potential(self.bands(), (*self.orbital_potential(v_g)?).clone());
        let mut h = self.kp.plus(&u)?;
        if field.magnitude != 0.0 {
            h = h.plus(&assemble_magnetic(&self.spec, &self.luttinger, field)?)?;
        }
        h.v_g = Some(v_g);
        h.field = Some(*field);
        Ok(h)
    }

    /// M_χ = ∂H/∂B_χ (Zeeman + paramagnetic).
    pub fn field_derivatives(&self) -> Result<&[HamiltonianMatrix; 3]> {
        if let Some(d) = self.derivatives.get() {
            return Ok(d);
        }
        let d = field_derivatives(&self.spec, &self.luttinger, self.terms)?;
        Ok(self.derivatives.get_or_init(|| d))
    }

    fn preconditioner(&self, v_g: f64) -> Result<Arc<BandPreconditioner>> {
        if let Some(p) = self.preconditioners.lock().unwrap().get(&key(v_g)) {
            return Ok(p.clone());
        }
        let p = Arc::new(BandPreconditioner::new(
            &self.hamiltonian(v_g, &MagneticField::zero())?,
        )?);
        self.preconditioners.lock().unwrap().insert(key(v_g), p.clone());
        Ok(p)
    }

    fn uses_dense(&self) -> bool {
        match self.solver.method {
            SolverMethod::Dense => true,
            SolverMethod::Iterative => false,
            SolverMethod::Auto => self.dim() < self.solver.dense_threshold,
        }
    }

    /// The lowest `doublets` Kramers doublets at an operating point.
    pub fn solve(
        &self,
        v_g: f64,
        field: &MagneticField,
        doublets: usize,
        reference: Option<&[(SpinorState, SpinorState)]>,
    ) -> Result<Spectrum> {
        let h = self.hamiltonian(v_g, field)?;
        let precond = if self.uses_dense() {
            None
        } else {
            Some(self.preconditioner(v_g)?)
        };
        let guess: Vec<Vec<_>> = reference
            .map(|r| {
                r.iter()
                    .flat_map(|(u, d)| [u.coefficients.clone(), d.coefficients.clone()])
                    .collect()
            })
            .unwrap_or_default();
        let raw = lowest_eigenpairs_with(&h, 2 * doublets, &self.solver, precond.as_deref(), &guess)?;
        kramers_pair(&raw, &field.with_terms(self.terms), reference)
    }

    /// Ground doublet at a weak z field, with ⇓ = −Θ⇑.
    pub fn reference_doublet(&self, v_g: f64) -> Result<(SpinorState, SpinorState)> {
        let field = MagneticField::along_z(REFERENCE_FIELD);
        let sp = self.solve(v_g, &field, 1, None)?;
        let (up, _) = sp
            .doublet(1)
            .ok_or_else(|| Error::UnpairedDoublet("reference ground doublet is missing".into()))?;
        let mut up = up.clone();
        up.fix_phase();
        let mut down = time_reverse(&up);
        down.scale(faer::c64::new(-1.0, 0.0));
        down.member = Some(crate::solver::Member::Down);
        Ok((up, down))
    }

    pub fn g_matrix(&self, v_g: f64) -> Result<GMatrix> {
        let (up, down) = self.reference_doublet(v_g)?;
        extract_g(self.field_derivatives()?, &up, &down, v_g)
    }

    /// Principal factors at `v_g` with forward-difference derivatives.
    pub fn principal_g(&self, v_g: f64, delta_v: f64) -> Result<(PrincipalG, GMatrix, GMatrix)> {
        let a = self.g_matrix(v_g)?;
        let b = self.g_matrix(v_g + delta_v)?;
        let pg = g_derivative(&a, &b, delta_v)?;
        Ok((pg, a, b))
    }

    /// Direct f_L, f_R^X, f_R^Z of the ground doublet; `du` is the projected δU.
    pub fn metrics(
        &self,
        v_g: f64,
        delta_v: f64,
        field: &MagneticField,
        du: &Mat<f64>,
    ) -> Result<(QubitMetrics, Spectrum)> {
        let sp = self.solve(v_g, field, 1, None)?;
        let (up, down) = sp
            .doublet(1)
            .ok_or_else(|| Error::UnpairedDoublet("ground doublet is missing".into()))?;
        let fx = rabi_x_direct(up, down, du);
        let fz = rabi_z_direct(up, down, du);
        let m = QubitMetrics {
            v_g,
            delta_v_g: delta_v,
            b: field.magnitude,
            theta_deg: field.theta_deg,
            phi_deg: field.phi_deg,
            width: self.geometry.width,
            f_l_ghz: larmor_direct(&sp)?,
            f_rx_mhz: fx,
            f_rz_mhz: fz,
            f_rxz_mhz: combined_rabi(fx, fz),
        };
        Ok((m, sp))
    }

    /// Penetration, band weights and parities of one state.
    pub fn state_report(&self, state: &SpinorState) -> Result<StateReport> {
        let mut p = [0.0; 4];
        for (slot, region) in p.iter_mut().zip(RegionId::PENETRATION) {
            *slot = penetration(state, &self.spec, &self.geometry, region)?;
        }
        Ok(StateReport {
            energy: state.energy,
            doublet: state.doublet,
            penetration: p,
            occupation: band_occupation(state),
            symmetry: Symmetry::ALL.map(|op| symmetry_expectation(state, &self.spec, op)),
        })
    }
}

/// Characterization of one eigenstate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub energy: f64,
    pub doublet: usize,
    /// p(R_SD), p(R_NS), p(R_Ox^y), p(R_Ox^z).
    pub penetration: [f64; 4],
    pub occupation: BandOccupation,
    /// ⟨σ_yz⟩, ⟨σ_zx⟩, ⟨σ_xy⟩, ⟨σ_r⟩.
    pub symmetry: [f64; 4],
}

/// Ground energy at B = 0 in a (small) basis with oscillator energies `hw`.
pub fn ground_energy(
    n_max: [usize; 3],
    hw: [f64; 3],
    luttinger: &LuttingerParams,
    potential: &PotentialField,
) -> Result<f64> {
    let spec = build_basis(n_max, hw, luttinger.gamma1)?;
    let h = assemble_kp(&spec, luttinger)?.plus(&HamiltonianMatrix::from_orbital_potential(
        luttinger.band_count,
        project_orbital(&spec, potential)?,
    ))?;
    let opts = SolverOptions {
        method: SolverMethod::Dense,
        ..SolverOptions::default()
    };
    let sp = lowest_eigenpairs_with(&h, 1, &opts, None, &[])?;
    Ok(sp.states[0].energy)
}

/// Searches ħω in a reduced basis at B = 0; the result is frozen for all
/// subsequent solves in the full basis.
pub fn optimize_basis(
    n_max: [usize; 3],
    init: [f64; 3],
    budget: usize,
    luttinger: &LuttingerParams,
    potential: &PotentialField,
) -> Result<FrequencyOptimization> {
    optimize_frequencies(|hw| ground_energy(n_max, hw, luttinger, potential), init, budget)
}
