//! Confinement potential U(r) for holes: a closed-form model of the gated
//! channel, an importer for externally computed grids, the gate-induced
//! modulation δU and region-restricted integration.
//!
//! Energies follow the hole convention: lower U attracts holes.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Coordinate intervals that delimit the labeled device regions (nm, |coordinate|).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBounds {
    /// Inner edge of the source/drain region along |x|.
    pub sd_inner: f64,
    /// Outer edge of the source/drain region along |x|.
    pub sd_outer: f64,
    /// Outer edge of the region below the nitride spacers along |x|.
    pub ns_outer: f64,
    pub oxide_y_inner: f64,
    pub oxide_y_outer: f64,
    pub oxide_z_inner: f64,
    pub oxide_z_outer: f64,
}

/// Channel geometry of the pMOSFET (all lengths in nm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceGeometry {
    pub gate_length: f64,
    pub width: f64,
    pub height: f64,
    pub spacer_length: f64,
    /// Explicit region bounds; derived from the lengths when absent.
    pub regions: Option<RegionBounds>,
}

impl Default for DeviceGeometry {
    fn default() -> Self {
        Self {
            gate_length: 10.0,
            width: 10.0,
            height: 5.0,
            spacer_length: 3.0,
            regions: None,
        }
    }
}

impl DeviceGeometry {
    pub fn with_width(&self, width: f64) -> Self {
        Self { width, ..self.clone() }
    }

    /// Region bounds, either explicit or scaled from the device lengths.
    pub fn region_bounds(&self) -> RegionBounds {
        self.regions.unwrap_or_else(|| {
            let gate_edge = 0.5 * self.gate_length;
            RegionBounds {
                sd_inner: gate_edge - 0.02,
                sd_outer: gate_edge + self.spacer_length + 2.0,
                ns_outer: gate_edge + self.spacer_length - 0.04,
                oxide_y_inner: 0.5 * self.width + 0.04,
                oxide_y_outer: 0.5 * self.width + 3.4,
                oxide_z_inner: 0.5 * self.height,
                oxide_z_outer: 0.5 * self.height + 1.0,
            }
        })
    }

    /// Half-widths of the computational box used for region integrals.
    pub fn box_half_widths(&self) -> [f64; 3] {
        let r = self.region_bounds();
        [
            r.sd_outer.max(self.gate_length) + 10.0,
            r.oxide_y_outer + 10.0,
            r.oxide_z_outer + 10.0,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("gate_length", self.gate_length),
            ("width", self.width),
            ("height", self.height),
            ("spacer_length", self.spacer_length),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "geometry.{name} must be positive, got {v}"
                )));
            }
        }
        let r = self.region_bounds();
        let ordered = [
            ("sd_inner < ns_outer", r.sd_inner < r.ns_outer),
            ("ns_outer <= sd_outer", r.ns_outer <= r.sd_outer),
            ("oxide_y_inner < oxide_y_outer", r.oxide_y_inner < r.oxide_y_outer),
            ("oxide_z_inner < oxide_z_outer", r.oxide_z_inner < r.oxide_z_outer),
            ("sd_inner >= 0", r.sd_inner >= 0.0),
        ];
        for (what, ok) in ordered {
            if !ok {
                return Err(Error::InvalidParameter(format!("geometry.regions: requires {what}")));
            }
        }
        Ok(())
    }

    pub fn region(&self, id: RegionId) -> Region {
        let r = self.region_bounds();
        let all = (f64::NEG_INFINITY, f64::INFINITY);
        let mirrored = |axis: usize, lo: f64, hi: f64| -> Vec<[(f64, f64); 3]> {
            let mut a = [all; 3];
            let mut b = [all; 3];
            a[axis] = (-hi, -lo);
            b[axis] = (lo, hi);
            vec![a, b]
        };
        let boxes = match id {
            RegionId::SourceDrain => mirrored(0, r.sd_inner, r.sd_outer),
            RegionId::NitrideSpacer => mirrored(0, r.sd_inner, r.ns_outer),
            RegionId::OxideY => mirrored(1, r.oxide_y_inner, r.oxide_y_outer),
            RegionId::OxideZ => mirrored(2, r.oxide_z_inner, r.oxide_z_outer),
            RegionId::Channel => vec![[
                (-r.sd_inner, r.sd_inner),
                (-r.oxide_y_inner, r.oxide_y_inner),
                (-r.oxide_z_inner, r.oxide_z_inner),
            ]],
            RegionId::All => vec![[all; 3]],
        };
        Region { boxes }
    }
}

/// Named device regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RegionId {
    /// Source/drain, including the part below the spacers.
    SourceDrain,
    /// Below the nitride spacers (subset of the source/drain region).
    NitrideSpacer,
    /// Oxides confining the channel along y.
    OxideY,
    /// Gate and buried oxides along z.
    OxideZ,
    /// Silicon below the gate.
    Channel,
    /// All space.
    All,
}

impl RegionId {
    pub const PENETRATION: [RegionId; 4] = [
        RegionId::SourceDrain,
        RegionId::NitrideSpacer,
        RegionId::OxideY,
        RegionId::OxideZ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegionId::SourceDrain => "sd",
            RegionId::NitrideSpacer => "ns",
            RegionId::OxideY => "ox_y",
            RegionId::OxideZ => "ox_z",
            RegionId::Channel => "channel",
            RegionId::All => "all",
        }
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sd" => RegionId::SourceDrain,
            "ns" => RegionId::NitrideSpacer,
            "ox_y" => RegionId::OxideY,
            "ox_z" => RegionId::OxideZ,
            "channel" => RegionId::Channel,
            "all" => RegionId::All,
            other => return Err(Error::UnknownRegion(other.to_string())),
        })
    }
}

impl TryFrom<String> for RegionId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RegionId> for String {
    fn from(r: RegionId) -> String {
        r.name().to_string()
    }
}

/// Union of disjoint axis-aligned boxes; bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub boxes: Vec<[(f64, f64); 3]>,
}

/// Parameters of the closed-form channel potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPotentialParams {
    /// Valence-band offset of the y-confining oxides (meV).
    pub v_off_y: f64,
    /// Valence-band offset of the z-confining oxides (meV).
    pub v_off_z: f64,
    /// Source/drain level relative to the undoped channel (meV).
    pub u_sd: f64,
    /// Gate lever arm at the channel center (meV/V).
    pub lever_arm: f64,
    /// Gate voltage at which the gate well vanishes (V).
    pub v0: f64,
    /// Smoothing length of the barriers (nm).
    pub smoothing: f64,
    /// Width of the gate-induced well along x (nm).
    pub sigma_x: f64,
    /// Vertical gradient per volt of gate detuning (meV/nm/V).
    pub beta_z: f64,
}

impl Default for ModelPotentialParams {
    fn default() -> Self {
        Self {
            v_off_y: 4600.0,
            v_off_z: 4600.0,
            u_sd: -20.0,
            lever_arm: 120.0,
            v0: -0.2,
            smoothing: 0.3,
            sigma_x: 3.3,
            beta_z: 20.0,
        }
    }
}

impl ModelPotentialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_off_y", self.v_off_y),
            ("v_off_z", self.v_off_z),
            ("smoothing", self.smoothing),
            ("sigma_x", self.sigma_x),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "potential.{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("u_sd", self.u_sd),
            ("lever_arm", self.lever_arm),
            ("v0", self.v0),
            ("beta_z", self.beta_z),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("potential.{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Regular grid of potential values (meV), x running fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub counts: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

impl GridData {
    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.counts[0] * (j + self.counts[1] * k)]
    }

    fn same_axes(&self, other: &GridData) -> bool {
        self.counts == other.counts && self.origin == other.origin && self.spacing == other.spacing
    }

    /// Trilinear interpolation; returns the value and whether `r` was clamped.
    fn interpolate(&self, r: [f64; 3]) -> (f64, bool) {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut clamped = false;
        for a in 0..3 {
            let n = self.counts[a];
            let t = (r[a] - self.origin[a]) / self.spacing[a];
            let top = (n - 1) as f64;
            let tc = if t < 0.0 {
                clamped = true;
                0.0
            } else if t > top {
                clamped = true;
                top
            } else {
                t
            };
            if n == 1 {
                base[a] = 0;
                frac[a] = 0.0;
            } else {
                let i = (tc.floor() as usize).min(n - 2);
                base[a] = i;
                frac[a] = tc - i as f64;
            }
        }
        let step = |a: usize| usize::from(self.counts[a] > 1);
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if o[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            acc += w * self.at(
                base[0] + o[0] * step(0),
                base[1] + o[1] * step(1),
                base[2] + o[2] * step(2),
            );
        }
        (acc, clamped)
    }

    /// Writes the grid in the plain-text exchange format.
    pub fn write_to<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.counts[0], self.counts[1], self.counts[2])?;
        writeln!(
            w,
            "{} {} {} {} {} {}",
            self.origin[0], self.spacing[0], self.origin[1], self.spacing[1], self.origin[2], self.spacing[2]
        )?;
        for row in self.values.chunks(self.counts[0]) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Where a potential field comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Model,
    ImportedGrid,
    Analytic,
    Difference,
}

type AnalyticFn = dyn Fn([f64; 3]) -> f64 + Send + Sync;

#[derive(Clone)]
enum Source {
    Model {
        geometry: DeviceGeometry,
        params: ModelPotentialParams,
    },
    Grid(Arc<GridData>),
    Analytic(Arc<AnalyticFn>),
    Difference(Arc<PotentialField>, Arc<PotentialField>),
}

/// Evaluable potential U(x, y, z) in meV with positions in nm.
#[derive(Clone)]
pub struct PotentialField {
    source: Source,
    /// Gate voltage the field corresponds to (V); NaN when not applicable.
    pub v_g: f64,
    clamp_warned: Arc<AtomicBool>,
}

impl fmt::Debug for PotentialField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialField")
            .field("provenance", &self.provenance())
            .field("v_g", &self.v_g)
            .finish()
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Smoothed symmetric step, ≈0 for |u| < a and →1 for |u| > a.
fn smooth_wall(u: f64, a: f64, lambda: f64) -> f64 {
    logistic((u - a) / lambda) + logistic((-u - a) / lambda)
}

impl PotentialField {
    fn new(source: Source, v_g: f64) -> Self {
        Self {
            source,
            v_g,
            clamp_warned: Arc::new(AtomicBool::new(false)),
        }
    }

    /// Field given by an arbitrary closure.
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Send + Sync + 'static,
    {
        Self::new(Source::Analytic(Arc::new(f)), f64::NAN)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_fn(move |_| c)
    }

    pub fn from_grid(grid: GridData) -> Self {
        Self::new(Source::Grid(Arc::new(grid)), f64::NAN)
    }

    pub fn provenance(&self) -> Provenance {
        match &self.source {
            Source::Model { .. } => Provenance::Model,
            Source::Grid(_) => Provenance::ImportedGrid,
            Source::Analytic(_) => Provenance::Analytic,
            Source::Difference(..) => Provenance::Difference,
        }
    }

    pub fn grid(&self) -> Option<&GridData> {
        match &self.source {
            Source::Grid(g) => Some(g),
            _ => None,
        }
    }

    pub fn eval(&self, r: [f64; 3]) -> f64 {
        match &self.source {
            Source::Model { geometry, params } => eval_model(geometry, params, self.v_g, r),
            Source::Grid(g) => {
                let (v, clamped) = g.interpolate(r);
                if clamped && !self.clamp_warned.swap(true, Ordering::Relaxed) {
                    log::warn!("potential grid evaluated outside its box at {r:?}; clamping to the boundary value");
                }
                v
            }
            Source::Analytic(f) => f(r),
            Source::Difference(a, b) => b.eval(r) - a.eval(r),
        }
    }

    /// Samples the field on a regular grid.
    pub fn sample(&self, origin: [f64; 3], spacing: [f64; 3], counts: [usize; 3]) -> GridData {
        let mut values = Vec::with_capacity(counts.iter().product());
        for k in 0..counts[2] {
            for j in 0..counts[1] {
                for i in 0..counts[0] {
                    values.push(self.eval([
                        origin[0] + spacing[0] * i as f64,
                        origin[1] + spacing[1] * j as f64,
                        origin[2] + spacing[2] * k as f64,
                    ]));
                }
            }
        }
        GridData {
            counts,
            origin,
            spacing,
            values,
        }
    }
}

fn eval_model(g: &DeviceGeometry, p: &ModelPotentialParams, v_g: f64, r: [f64; 3]) -> f64 {
    let [x, y, z] = r;
    let lambda = p.smoothing;
    let walls = p.v_off_y * smooth_wall(y, 0.5 * g.width, lambda)
        + p.v_off_z * smooth_wall(z, 0.5 * g.height, lambda)
        + p.u_sd * smooth_wall(x, 0.5 * g.gate_length + g.spacer_length, lambda);
    let detuning = v_g - p.v0;
    let gate = (p.lever_arm * detuning + p.beta_z * detuning * z) * (-x * x / (2.0 * p.sigma_x * p.sigma_x)).exp();
    walls + gate
}

/// Closed-form channel potential at gate voltage `v_g`.
pub fn model_potential(geometry: &DeviceGeometry, params: &ModelPotentialParams, v_g: f64) -> Result<PotentialField> {
    geometry.validate()?;
    params.validate()?;
    if !v_g.is_finite() {
        return Err(Error::InvalidParameter("gate voltage must be finite".into()));
    }
    Ok(PotentialField::new(
        Source::Model {
            geometry: geometry.clone(),
            params: params.clone(),
        },
        v_g,
    ))
}

/// Pointwise δU = U_b − U_a, where `a` is the field at V_G and `b` at V_G + δV_G.
pub fn delta_potential(a: &PotentialField, b: &PotentialField) -> Result<PotentialField> {
    let v_g = b.v_g - a.v_g;
    match (&a.source, &b.source) {
        (
            Source::Model {
                geometry: ga,
                params: pa,
            },
            Source::Model {
                geometry: gb,
                params: pb,
            },
        ) => {
            if ga != gb || pa != pb {
                return Err(Error::IncompatibleFields(
                    "model fields differ in geometry or parameters".into(),
                ));
            }
            Ok(PotentialField::new(
                Source::Difference(Arc::new(a.clone()), Arc::new(b.clone())),
                v_g,
            ))
        }
        (Source::Grid(ga), Source::Grid(gb)) => {
            if !ga.same_axes(gb) {
                return Err(Error::IncompatibleFields("grids have different axes".into()));
            }
            let values = ga.values.iter().zip(&gb.values).map(|(x, y)| y - x).collect();
            let mut out = PotentialField::from_grid(GridData {
                values,
                ..(**ga).clone()
            });
            out.v_g = v_g;
            Ok(out)
        }
        (Source::Analytic(_), Source::Analytic(_)) | (Source::Difference(..), Source::Difference(..)) => Ok(
            PotentialField::new(Source::Difference(Arc::new(a.clone()), Arc::new(b.clone())), v_g),
        ),
        _ => Err(Error::IncompatibleFields(format!(
            "cannot subtract a {:?} field from a {:?} field",
            a.provenance(),
            b.provenance()
        ))),
    }
}

/// Reads a potential grid file.
///
/// Format: `NX NY NZ` on the first line, `x0 dx y0 dy z0 dz` (nm) on the
/// second, then NX·NY·NZ whitespace-separated values in meV with x running
/// fastest.
pub fn import_grid(path: impl AsRef<Path>) -> Result<PotentialField> {
    let mut text = String::new();
    std::fs::File::open(path.as_ref())?.read_to_string(&mut text)?;
    Ok(PotentialField::from_grid(parse_grid(&text)?))
}

pub fn parse_grid(text: &str) -> Result<GridData> {
    let err = |offset: usize, what: &str, message: String| Error::Parse {
        location: format!("byte {offset} ({what})"),
        message,
    };
    // Tokens with their byte offsets.
    let mut tokens = Vec::new();
    let mut line_ends = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push((s, &text[s..i]));
            }
            if ch == '\n' {
                line_ends.push(tokens.len());
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push((s, &text[s..]));
    }
    if line_ends.len() < 2 || line_ends[0] != 3 || line_ends[1] != 9 {
        return Err(err(
            0,
            "header",
            "expected `NX NY NZ` and `x0 dx y0 dy z0 dz` header lines".into(),
        ));
    }
    let mut counts = [0usize; 3];
    for a in 0..3 {
        let (off, t) = tokens[a];
        counts[a] = t
            .parse()
            .map_err(|_| err(off, "header", format!("invalid grid count `{t}`")))?;
        if counts[a] == 0 {
            return Err(err(off, "header", "grid counts must be at least 1".into()));
        }
    }
    let mut axes = [0.0f64; 6];
    for (i, v) in axes.iter_mut().enumerate() {
        let (off, t) = tokens[3 + i];
        *v = t
            .parse()
            .map_err(|_| err(off, "axes", format!("invalid axis value `{t}`")))?;
        if !v.is_finite() {
            return Err(err(off, "axes", format!("non-finite axis value `{t}`")));
        }
    }
    let origin = [axes[0], axes[2], axes[4]];
    let spacing = [axes[1], axes[3], axes[5]];
    for a in 0..3 {
        if !(spacing[a] > 0.0) {
            return Err(err(
                tokens[4 + 2 * a].0,
                "axes",
                format!("axis {a} is not increasing (spacing {})", spacing[a]),
            ));
        }
    }
    let n: usize = counts.iter().product();
    let body = &tokens[9..];
    if body.len() != n {
        let off = body.last().map_or(text.len(), |(o, _)| *o);
        return Err(err(off, "values", format!("expected {n} values, found {}", body.len())));
    }
    let mut values = Vec::with_capacity(n);
    for (record, (off, t)) in body.iter().enumerate() {
        let v: f64 = t
            .parse()
            .map_err(|_| err(*off, &format!("record {record}"), format!("invalid value `{t}`")))?;
        if !v.is_finite() {
            return Err(err(
                *off,
                &format!("record {record}"),
                format!("non-finite value `{t}`"),
            ));
        }
        values.push(v);
    }
    Ok(GridData {
        counts,
        origin,
        spacing,
        values,
    })
}

/// Quadrature settings for [`region_integral`].
#[derive(Debug, Clone, Copy)]
pub struct RegionQuadrature {
    /// Gauss–Legendre order per panel and axis.
    pub order: usize,
    /// Maximum panel width (nm).
    pub panel: f64,
}

impl Default for RegionQuadrature {
    fn default() -> Self {
        Self { order: 24, panel: 1.0 }
    }
}

/// ∫_R ρ(r) dr by tensor Gauss–Legendre over the region boxes; infinite
/// bounds are clipped to the device's computational box.
pub fn region_integral<F>(density: F, region: &Region, geometry: &DeviceGeometry, quad: RegionQuadrature) -> f64
where
    F: Fn([f64; 3]) -> f64,
{
    let gl = GaussLegendre::new(quad.order.max(24));
    let half = geometry.box_half_widths();
    let mut total = 0.0;
    for b in &region.boxes {
        let mut axes: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(3);
        let mut empty = false;
        for a in 0..3 {
            let lo = b[a].0.max(-half[a]);
            let hi = b[a].1.min(half[a]);
            if hi <= lo {
                empty = true;
                break;
            }
            let panels = ((hi - lo) / quad.panel).ceil() as usize;
            axes.push(gl.composite(lo, hi, panels));
        }
        if empty {
            continue;
        }
        let (xs, wx) = &axes[0];
        let (ys, wy) = &axes[1];
        let (zs, wz) = &axes[2];
        for (x, wxi) in xs.iter().zip(wx) {
            for (y, wyj) in ys.iter().zip(wy) {
                let wxy = wxi * wyj;
                let mut acc = 0.0;
                for (z, wzk) in zs.iter().zip(wz) {
                    acc += wzk * density([*x, *y, *z]);
                }
                total += wxy * acc;
            }
        }
    }
    total
}

/// [`region_integral`] with a named region.
pub fn region_integral_named<F>(density: F, region: &str, geometry: &DeviceGeometry) -> Result<f64>
where
    F: Fn([f64; 3]) -> f64,
{
    let id: RegionId = region.parse()?;
    Ok(region_integral(
        density,
        &geometry.region(id),
        geometry,
        RegionQuadrature::default(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(v_g: f64) -> PotentialField {
        model_potential(&DeviceGeometry::default(), &ModelPotentialParams::default(), v_g).unwrap()
    }

    #[test]
    fn zero_detuning_leaves_barrier_tails_only() {
        let p = ModelPotentialParams::default();
        let g = DeviceGeometry::default();
        let u = model(p.v0).eval([0.0, 0.0, 0.0]);
        let tail = |v: f64, a: f64| 2.0 * v / (1.0 + (a / p.smoothing).exp());
        let want = tail(p.v_off_y, 0.5 * g.width)
            + tail(p.v_off_z, 0.5 * g.height)
            + tail(p.u_sd, 0.5 * g.gate_length + g.spacer_length);
        assert!((u - want).abs() < 1e-12, "{u} vs {want}");
        assert!(u.abs() < 2.5, "{u}");
    }

    #[test]
    fn barriers_saturate() {
        let f = model(-0.8);
        let p = ModelPotentialParams::default();
        let rise = f.eval([0.0, 1e3, 0.0]) - f.eval([0.0, 0.0, 0.0]);
        assert!((rise - p.v_off_y).abs() < 1e-3, "{rise}");
        let far_z = f.eval([0.0, 0.0, 1e3]);
        assert!(far_z > p.v_off_z - 1e3 * p.beta_z);
    }

    #[test]
    fn well_deepens_as_gate_voltage_decreases() {
        let g = DeviceGeometry::default();
        let depth = |v: f64| {
            let f = model(v);
            f.eval([0.5 * g.gate_length, 0.0, 0.0]) - f.eval([0.0, 0.0, 0.0])
        };
        let mut last = depth(-0.3);
        for i in 1..=10 {
            let d = depth(-0.3 - 0.05 * i as f64);
            assert!(d > last);
            last = d;
        }
        assert!(depth(-0.8) > 0.0);
    }

    #[test]
    fn model_is_smooth_across_symmetry_planes() {
        let f = model(-0.8);
        let h = 1e-5;
        for r in [[0.0, 0.3, 0.2], [0.4, 0.0, 0.1], [0.2, 0.1, 0.0]] {
            for a in 0..3 {
                let mut p = r;
                p[a] = h;
                let mut m = r;
                m[a] = -h;
                let mut c = r;
                c[a] = 0.0;
                let right = (f.eval(p) - f.eval(c)) / h;
                let left = (f.eval(c) - f.eval(m)) / h;
                assert!((right - left).abs() < 1e-3, "axis {a}: {left} vs {right}");
            }
        }
    }

    #[test]
    fn delta_of_model_is_gate_term() {
        let mut p = ModelPotentialParams::default();
        p.beta_z = 0.0;
        let g = DeviceGeometry::default();
        let a = model_potential(&g, &p, -0.8).unwrap();
        let b = model_potential(&g, &p, -0.79).unwrap();
        let d = delta_potential(&a, &b).unwrap();
        assert!((d.eval([0.0, 0.0, 0.0]) - 1.2).abs() < 1e-10);
        let x = 2.0;
        let want = p.lever_arm * 0.01 * (-x * x / (2.0 * p.sigma_x * p.sigma_x)).exp();
        assert!((d.eval([x, 1.0, 0.5]) - want).abs() < 1e-10);

        let b2 = model_potential(&g, &p, -0.78).unwrap();
        let d2 = delta_potential(&a, &b2).unwrap();
        for r in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.7], [4.0, 3.0, -1.0]] {
            assert!((d2.eval(r) - 2.0 * d.eval(r)).abs() < 1e-12);
        }
        let zero = delta_potential(&a, &a).unwrap();
        assert_eq!(zero.eval([0.3, 0.2, 0.1]), 0.0);
    }

    #[test]
    fn delta_rejects_mismatched_fields() {
        let g = DeviceGeometry::default();
        let a = model_potential(&g, &ModelPotentialParams::default(), -0.8).unwrap();
        let b = model_potential(&g.with_width(20.0), &ModelPotentialParams::default(), -0.79).unwrap();
        assert!(matches!(delta_potential(&a, &b), Err(Error::IncompatibleFields(_))));
        let c = PotentialField::constant(1.0);
        assert!(matches!(delta_potential(&a, &c), Err(Error::IncompatibleFields(_))));
    }

    #[test]
    fn grid_parse_and_interpolate() {
        let text = "2 2 2\n0 1 0 1 0 1\n0 0 0 0 0 0 0 0\n";
        let f = PotentialField::from_grid(parse_grid(text).unwrap());
        for r in [[0.0, 0.0, 0.0], [0.5, 0.2, 0.9], [1.0, 1.0, 1.0]] {
            assert_eq!(f.eval(r), 0.0);
        }
        // linear data is reproduced exactly
        let g = PotentialField::from_fn(|r| 1.0 + 2.0 * r[0] - r[1] + 0.5 * r[2]).sample(
            [0.0; 3],
            [0.5, 0.25, 1.0],
            [4, 5, 3],
        );
        let f = PotentialField::from_grid(g);
        let v = f.eval([0.7, 0.33, 1.4]);
        assert!((v - (1.0 + 1.4 - 0.33 + 0.7)).abs() < 1e-12);
        // clamped outside
        assert!((f.eval([-5.0, 0.0, 0.0]) - f.eval([0.0, 0.0, 0.0])).abs() < 1e-12);
    }

    #[test]
    fn grid_errors() {
        let truncated = "2 2 2\n0 1 0 1 0 1\n0 0 0 0 0\n";
        assert!(matches!(parse_grid(truncated), Err(Error::Parse { .. })));
        let nan = "2 1 1\n0 1 0 1 0 1\n0 NaN\n";
        match parse_grid(nan) {
            Err(Error::Parse { location, .. }) => assert!(location.contains("record 1"), "{location}"),
            other => panic!("{other:?}"),
        }
        let decreasing = "2 1 1\n0 -1 0 1 0 1\n0 1\n";
        assert!(matches!(parse_grid(decreasing), Err(Error::Parse { .. })));
        let header = "2 2\n0 1 0 1 0 1\n0 0 0 0\n";
        assert!(matches!(parse_grid(header), Err(Error::Parse { .. })));
    }

    #[test]
    fn grid_round_trip_through_file() {
        let g = model(-0.8).sample([-2.0, -1.0, -1.0], [0.5, 0.5, 0.5], [9, 5, 5]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.txt");
        g.write_to(std::fs::File::create(&path).unwrap()).unwrap();
        let f = import_grid(&path).unwrap();
        assert_eq!(f.provenance(), Provenance::ImportedGrid);
        assert_eq!(f.grid().unwrap(), &g);
    }

    #[test]
    fn grid_difference_is_nodewise() {
        let a = model(-0.8).sample([-2.0, -1.0, -1.0], [0.5; 3], [5, 5, 5]);
        let b = model(-0.7).sample([-2.0, -1.0, -1.0], [0.5; 3], [5, 5, 5]);
        let d = delta_potential(
            &PotentialField::from_grid(a.clone()),
            &PotentialField::from_grid(b.clone()),
        )
        .unwrap();
        let dg = d.grid().unwrap();
        for i in 0..a.values.len() {
            assert_eq!(dg.values[i], b.values[i] - a.values[i]);
        }
    }

    #[test]
    fn unknown_region_name() {
        let g = DeviceGeometry::default();
        assert!(matches!(
            region_integral_named(|_| 1.0, "gate", &g),
            Err(Error::UnknownRegion(_))
        ));
    }

    #[test]
    fn geometry_validation() {
        let mut g = DeviceGeometry::default();
        assert!(g.validate().is_ok());
        g.height = 0.0;
        assert!(g.validate().is_err());
        let mut g = DeviceGeometry::default();
        let mut r = g.region_bounds();
        r.ns_outer = r.sd_outer + 1.0;
        g.regions = Some(r);
        assert!(g.validate().is_err());
    }
}
