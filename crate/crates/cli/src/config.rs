//! Run configuration: one TOML file fully determines a run.
//!
//! ```toml
//! [geometry]          # gate_length, width, height, spacer_length (nm)
//! [potential]         # model potential parameters
//! [[potential_grid]]  # optional imported grids: v_g (V), path
//! [luttinger]         # gamma1..3, kappa, delta_so (meV), band_count, band_coupling
//! [basis]             # n_max, hw (meV) or [basis.optimize]
//! [solver]            # method, dense_threshold, tolerance, max_iterations, doublets
//! [operating]         # v_g, delta_v_g (V)
//! [field]             # b (T), theta_deg, phi_deg, zeeman, paramagnetic, diamagnetic
//! [report]            # regions
//! [sweep]             # axis, values | range, theta_deg, phi_deg, g_factors
//! [gmatrix]           # n_theta, n_phi, compare_grid, [[gmatrix.replay]]
//! [output]            # dir
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use holekp_core::hamiltonian::{LuttingerParams, MagneticTerms};
use holekp_core::potential::{DeviceGeometry, ModelPotentialParams, RegionId};
use holekp_core::solver::{SolverMethod, SolverOptions};
use serde::{Deserialize, Serialize};

/// A configuration problem, located by its key path.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: DeviceGeometry,
    pub potential: ModelPotentialParams,
    pub potential_grid: Vec<GridFile>,
    pub luttinger: LuttingerParams,
    pub basis: BasisConfig,
    pub solver: SolverConfig,
    pub operating: OperatingConfig,
    pub field: FieldConfig,
    pub report: ReportConfig,
    pub sweep: Option<SweepConfig>,
    pub gmatrix: GMatrixConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub v_g: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub n_max: [usize; 3],
    /// Fixed ħω (meV); when absent the frequencies are optimized.
    pub hw: Option<[f64; 3]>,
    pub quadrature_min: Option<usize>,
    pub optimize: OptimizeConfig,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            n_max: [10, 10, 8],
            hw: None,
            quadrature_min: None,
            optimize: OptimizeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Reduced basis for the search.
    pub n_max: [usize; 3],
    pub init: [f64; 3],
    pub budget: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            n_max: [4, 4, 3],
            init: [10.0, 10.0, 40.0],
            budget: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub dense_threshold: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of Kramers doublets to compute.
    pub doublets: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            method: o.method,
            dense_threshold: o.dense_threshold,
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            doublets: 5,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            method: self.method,
            dense_threshold: self.dense_threshold,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatingConfig {
    pub v_g: f64,
    pub delta_v_g: Option<f64>,
}

impl Default for OperatingConfig {
    fn default() -> Self {
        Self {
            v_g: -0.8,
            delta_v_g: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub b: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub zeeman: bool,
    pub paramagnetic: bool,
    pub diamagnetic: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            b: 0.0,
            theta_deg: 0.0,
            phi_deg: 0.0,
            zeeman: true,
            paramagnetic: true,
            diamagnetic: true,
        }
    }
}

impl FieldConfig {
    pub fn terms(&self) -> MagneticTerms {
        MagneticTerms {
            zeeman: self.zeeman,
            paramagnetic: self.paramagnetic,
            diamagnetic: self.diamagnetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub regions: Vec<String>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            regions: RegionId::PENETRATION.iter().map(|r| r.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Vg,
    Width,
    FieldIntensity,
    Angle,
    DeltaSo,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Vg => "vg",
            SweepAxis::Width => "width",
            SweepAxis::FieldIntensity => "field_intensity",
            SweepAxis::Angle => "angle",
            SweepAxis::DeltaSo => "delta_so",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl RangeConfig {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    #[serde(default)]
    pub values: Vec<f64>,
    pub range: Option<RangeConfig>,
    /// Angle sweeps: polar and azimuthal grids (deg).
    #[serde(default)]
    pub theta_deg: Vec<f64>,
    #[serde(default)]
    pub phi_deg: Vec<f64>,
    /// Also compute principal g factors and derivatives at each point.
    #[serde(default)]
    pub g_factors: bool,
}

impl SweepConfig {
    /// Sweep coordinates (non-angle axes).
    pub fn coordinates(&self) -> Vec<f64> {
        match &self.range {
            Some(r) => r.values(),
            None => self.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GMatrixConfig {
    pub n_theta: usize,
    pub n_phi: usize,
    /// Side of the direct-vs-g-matrix comparison grid (0 disables it); the
    /// grid is cell-centred in θ so the poles are not sampled repeatedly.
    pub compare_grid: usize,
    /// Externally supplied g factors; no eigensolve is performed.
    pub replay: Vec<ReplayPoint>,
}

impl Default for GMatrixConfig {
    fn default() -> Self {
        Self {
            n_theta: 37,
            n_phi: 72,
            compare_grid: 5,
            replay: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayPoint {
    pub v_g: f64,
    pub g: [f64; 3],
    /// ∂g/∂V_G (1/V).
    pub g_prime: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// Which command the configuration will drive; validation depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Sweep,
    GMatrix,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("<document>", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(
                if path == "." { "<document>".into() } else { path },
                e.into_inner().to_string(),
            )
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            fs::read_to_string(path).map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every precondition reachable before any solve.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let core = |e: holekp_core::Error, section: &str| {
            let msg = e.to_string();
            ConfigError::new(section, msg.trim_start_matches("invalid parameter: ").to_string())
        };
        self.geometry.validate().map_err(|e| core(e, "geometry"))?;
        self.luttinger.validate().map_err(|e| core(e, "luttinger"))?;
        if self.potential_grid.is_empty() {
            self.potential.validate().map_err(|e| core(e, "potential"))?;
        }
        for (i, g) in self.potential_grid.iter().enumerate() {
            if !g.v_g.is_finite() {
                return Err(ConfigError::new(format!("potential_grid[{i}].v_g"), "must be finite"));
            }
        }
        if let Some(hw) = self.basis.hw {
            if hw.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(ConfigError::new("basis.hw", format!("must be positive, got {hw:?}")));
            }
        }
        if self.basis.optimize.budget == 0 && self.basis.hw.is_none() {
            return Err(ConfigError::new(
                "basis.optimize.budget",
                "must be positive when basis.hw is not given",
            ));
        }
        let s = &self.solver;
        if !(s.tolerance > 0.0 && s.tolerance.is_finite()) {
            return Err(ConfigError::new(
                "solver.tolerance",
                format!("must be positive, got {}", s.tolerance),
            ));
        }
        if s.max_iterations == 0 {
            return Err(ConfigError::new("solver.max_iterations", "must be positive"));
        }
        if s.doublets == 0 {
            return Err(ConfigError::new("solver.doublets", "must be positive"));
        }
        if !self.operating.v_g.is_finite() {
            return Err(ConfigError::new("operating.v_g", "must be finite"));
        }
        if let Some(dv) = self.operating.delta_v_g {
            if !(dv.is_finite() && dv != 0.0) {
                return Err(ConfigError::new(
                    "operating.delta_v_g",
                    format!("must be finite and nonzero, got {dv}"),
                ));
            }
        }
        let f = &self.field;
        if !(f.b >= 0.0 && f.b.is_finite()) {
            return Err(ConfigError::new("field.b", format!("must be >= 0, got {}", f.b)));
        }
        if !(f.theta_deg.is_finite() && f.phi_deg.is_finite()) {
            return Err(ConfigError::new("field", "angles must be finite"));
        }
        for (i, r) in self.report.regions.iter().enumerate() {
            r.parse::<RegionId>()
                .map_err(|e| ConfigError::new(format!("report.regions[{i}]"), e.to_string()))?;
        }
        match command {
            Command::Solve => {}
            Command::Sweep => self.validate_sweep()?,
            Command::GMatrix => self.validate_gmatrix()?,
        }
        Ok(())
    }

    fn validate_sweep(&self) -> Result<(), ConfigError> {
        let sw = self
            .sweep
            .as_ref()
            .ok_or_else(|| ConfigError::new("sweep", "the sweep command needs a [sweep] section"))?;
        if sw.axis == SweepAxis::Angle {
            if sw.theta_deg.is_empty() || sw.phi_deg.is_empty() {
                return Err(ConfigError::new(
                    "sweep.theta_deg",
                    "angle sweeps need theta_deg and phi_deg lists",
                ));
            }
            if sw.theta_deg.len() * sw.phi_deg.len() < 2 {
                return Err(ConfigError::new("sweep", "a sweep needs at least 2 points"));
            }
            if self.field.b <= 0.0 {
                return Err(ConfigError::new("field.b", "angle sweeps need a nonzero field"));
            }
        } else {
            if !sw.values.is_empty() && sw.range.is_some() {
                return Err(ConfigError::new("sweep.range", "give either values or range, not both"));
            }
            if let Some(r) = &sw.range {
                if r.points < 2 || !r.start.is_finite() || !r.stop.is_finite() {
                    return Err(ConfigError::new(
                        "sweep.range",
                        "needs finite bounds and at least 2 points",
                    ));
                }
            }
            let xs = sw.coordinates();
            if xs.len() < 2 {
                return Err(ConfigError::new("sweep.values", "a sweep needs at least 2 points"));
            }
            for (i, x) in xs.iter().enumerate() {
                let ok = match sw.axis {
                    SweepAxis::Vg => x.is_finite(),
                    SweepAxis::Width => *x > 0.0 && x.is_finite(),
                    SweepAxis::FieldIntensity => *x >= 0.0 && x.is_finite(),
                    SweepAxis::DeltaSo => *x > 0.0,
                    SweepAxis::Angle => true,
                };
                if !ok {
                    return Err(ConfigError::new(
                        format!("sweep.values[{i}]"),
                        format!("invalid {} value {x}", sw.axis.name()),
                    ));
                }
            }
        }
        if sw.g_factors && self.operating.delta_v_g.is_none() {
            return Err(ConfigError::new(
                "operating.delta_v_g",
                "required when sweep.g_factors is set",
            ));
        }
        if sw.axis == SweepAxis::Width && !self.potential_grid.is_empty() {
            return Err(ConfigError::new("sweep.axis", "width sweeps need the model potential"));
        }
        if sw.axis == SweepAxis::DeltaSo && self.luttinger.band_count != 6 {
            return Err(ConfigError::new(
                "luttinger.band_count",
                "delta_so sweeps need the six-band model",
            ));
        }
        Ok(())
    }

    fn validate_gmatrix(&self) -> Result<(), ConfigError> {
        if self.operating.delta_v_g.is_none() {
            return Err(ConfigError::new(
                "operating.delta_v_g",
                "required by the gmatrix command",
            ));
        }
        if self.field.b <= 0.0 {
            return Err(ConfigError::new(
                "field.b",
                "the gmatrix command needs a nonzero field for the frequencies",
            ));
        }
        let g = &self.gmatrix;
        if g.n_theta < 2 || g.n_phi < 2 {
            return Err(ConfigError::new(
                "gmatrix",
                format!("angular grid must be at least 2x2, got {}x{}", g.n_theta, g.n_phi),
            ));
        }
        for (i, r) in g.replay.iter().enumerate() {
            if r.g.iter().chain(&r.g_prime).any(|v| !v.is_finite()) || !r.v_g.is_finite() {
                return Err(ConfigError::new(
                    format!("gmatrix.replay[{i}]"),
                    "values must be finite",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_run() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let e = RunConfig::from_toml("[basis]\nn_max = [2, 2, 2]\nnmax = 3\n").unwrap_err();
        assert!(e.path.starts_with("basis"), "{e}");
        assert!(e.message.contains("nmax"), "{e}");
        let e = RunConfig::from_toml("[potential]\nsigmax = 3.0\n").unwrap_err();
        assert!(e.path.starts_with("potential"), "{e}");
        let e = RunConfig::from_toml("colour = 1\n").unwrap_err();
        assert!(e.message.contains("colour"), "{e}");
    }

    #[test]
    fn type_errors_name_the_field() {
        let e = RunConfig::from_toml("[operating]\nv_g = \"low\"\n").unwrap_err();
        assert_eq!(e.path, "operating.v_g");
    }

    #[test]
    fn region_names_are_checked() {
        let c = RunConfig::from_toml("[report]\nregions = [\"sd\", \"moat\"]\n").unwrap();
        let e = c.validate(Command::Solve).unwrap_err();
        assert_eq!(e.path, "report.regions[1]");
    }

    #[test]
    fn gmatrix_needs_voltage_step() {
        let c = RunConfig::from_toml("[field]\nb = 1.0\n").unwrap();
        let e = c.validate(Command::GMatrix).unwrap_err();
        assert_eq!(e.path, "operating.delta_v_g");
    }

    #[test]
    fn sweeps_need_two_points() {
        let c = RunConfig::from_toml("[sweep]\naxis = \"vg\"\nvalues = [-0.8]\n").unwrap();
        assert!(c.validate(Command::Sweep).is_err());
        let c = RunConfig::from_toml("[sweep]\naxis = \"vg\"\nrange = { start = -0.8, stop = -0.6, points = 3 }\n")
            .unwrap();
        c.validate(Command::Sweep).unwrap();
        assert_eq!(c.sweep.unwrap().coordinates().len(), 3);
    }

    #[test]
    fn infinite_delta_so_is_rejected_as_a_sweep_value_only_when_invalid() {
        let c = RunConfig::from_toml("[sweep]\naxis = \"delta_so\"\nvalues = [44.0, 200.0, inf]\n").unwrap();
        c.validate(Command::Sweep).unwrap();
        let c = RunConfig::from_toml("[sweep]\naxis = \"delta_so\"\nvalues = [44.0, -1.0]\n").unwrap();
        assert_eq!(c.validate(Command::Sweep).unwrap_err().path, "sweep.values[1]");
    }
}
