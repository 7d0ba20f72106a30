//! The three commands, computed into in-memory tables before anything is written.

use std::path::Path;

use holekp_core::analysis::{band_occupation, penetration, symmetry_expectation, QubitMetrics, Symmetry};
use holekp_core::basis::build_basis;
use holekp_core::device::{optimize_basis, Device, PotentialSource};
use holekp_core::gmatrix::{
    angular_map, combined_rabi, larmor_from_g, optimal_angles, rabi_from_g, GMatrix, OptimalAngles, Plane, PrincipalG,
};
use holekp_core::hamiltonian::{direction, LuttingerParams, MagneticField};
use holekp_core::potential::{import_grid, DeviceGeometry, RegionId};
use holekp_core::solver::{MethodUsed, Spectrum};
use holekp_core::Error;
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SweepAxis};
use crate::table::Table;

/// A device with the basis it was built in.
pub struct Prepared {
    pub device: Device,
    /// Whether ħω came from the optimizer (false: fixed in the config).
    pub optimized: bool,
}

/// Builds the device for `geometry` and `luttinger`, optimizing ħω at the
/// operating V_G unless `hw` is given.
pub fn prepare(
    cfg: &RunConfig,
    geometry: DeviceGeometry,
    luttinger: LuttingerParams,
    hw: Option<[f64; 3]>,
) -> Result<Prepared, Error> {
    let source = potential_source(cfg)?;
    let (hw, optimized) = match hw {
        Some(hw) => (hw, false),
        None => {
            let u = source.field(&geometry, cfg.operating.v_g)?;
            let o = &cfg.basis.optimize;
            let opt = optimize_basis(o.n_max, o.init, o.budget, &luttinger, &u)?;
            info!(
                "basis frequencies {:.3?} meV after {} evaluations (converged: {})",
                opt.hw, opt.evaluations, opt.converged
            );
            (opt.hw, true)
        }
    };
    let mut spec = build_basis(cfg.basis.n_max, hw, luttinger.gamma1)?;
    if let Some(q) = cfg.basis.quadrature_min {
        spec = spec.with_quadrature_min(q);
    }
    let device = Device::new(spec, luttinger, geometry, source, cfg.solver.options())?.with_terms(cfg.field.terms());
    Ok(Prepared { device, optimized })
}

fn potential_source(cfg: &RunConfig) -> Result<PotentialSource, Error> {
    if cfg.potential_grid.is_empty() {
        return Ok(PotentialSource::Model(cfg.potential.clone()));
    }
    let mut fields = Vec::with_capacity(cfg.potential_grid.len());
    for g in &cfg.potential_grid {
        let mut f = import_grid(&g.path)?;
        f.v_g = g.v_g;
        fields.push(f);
    }
    Ok(PotentialSource::Grids(fields))
}

fn operating_field(cfg: &RunConfig, b: f64, theta: f64, phi: f64) -> Result<MagneticField, Error> {
    Ok(MagneticField::new(b, theta, phi)?.with_terms(cfg.field.terms()))
}

fn regions(cfg: &RunConfig) -> Result<Vec<RegionId>, Error> {
    cfg.report.regions.iter().map(|r| r.parse()).collect()
}

fn method_name(m: MethodUsed) -> &'static str {
    match m {
        MethodUsed::Dense => "dense",
        MethodUsed::Davidson => "davidson",
    }
}

fn gap(sp: &Spectrum) -> Result<f64, Error> {
    sp.gap()
        .ok_or_else(|| Error::UnpairedDoublet("the orbital gap needs at least two doublets".into()))
}

/// Output of `solve`.
pub struct SolveReport {
    pub states: Table,
    pub summary: SolveSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub v_g_v: f64,
    pub b_t: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub width_nm: f64,
    pub band_count: usize,
    pub delta_so_mev: f64,
    pub n_max: [usize; 3],
    pub hw_mev: [f64; 3],
    pub hw_optimized: bool,
    pub dim: usize,
    pub method: &'static str,
    pub doublet_energies_mev: Vec<f64>,
    pub gap_mev: f64,
    pub metrics: Option<QubitMetrics>,
}

pub fn solve(cfg: &RunConfig) -> Result<SolveReport, Error> {
    let regions = regions(cfg)?;
    let p = prepare(cfg, cfg.geometry.clone(), cfg.luttinger.clone(), cfg.basis.hw)?;
    let d = &p.device;
    let f = &cfg.field;
    let field = operating_field(cfg, f.b, f.theta_deg, f.phi_deg)?;
    let v_g = cfg.operating.v_g;
    let sp = d.solve(v_g, &field, cfg.solver.doublets.max(2), None)?;
    let gap = gap(&sp)?;
    let doublet_energies: Vec<f64> = (1..=sp.doublet_count()).filter_map(|m| sp.doublet_energy(m)).collect();

    let six = d.bands() == 6;
    let mut header: Vec<String> = [
        "v_g_V",
        "b_T",
        "theta_deg",
        "phi_deg",
        "width_nm",
        "band_count",
        "delta_so_meV",
        "doublet",
        "member",
        "energy_meV",
        "gap_meV",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(regions.iter().map(|r| format!("p_{r}_pct")));
    header.extend(["P_hh_pct".to_string(), "P_lh_pct".to_string()]);
    if six {
        header.push("P_so_pct".into());
    }
    header.extend(Symmetry::ALL.iter().map(|s| s.name().to_string()));

    let mut table = Table::new(header);
    for s in sp.states.iter().take(2 * cfg.solver.doublets) {
        let occ = band_occupation(s);
        let mut row = vec![
            v_g.to_string(),
            f.b.to_string(),
            f.theta_deg.to_string(),
            f.phi_deg.to_string(),
            d.geometry.width.to_string(),
            d.bands().to_string(),
            d.luttinger.delta_so.to_string(),
            s.doublet.to_string(),
            s.member.map_or("-", |m| m.symbol()).to_string(),
            s.energy.to_string(),
            gap.to_string(),
        ];
        for r in &regions {
            row.push((100.0 * penetration(s, &d.spec, &d.geometry, *r)?).to_string());
        }
        row.push((100.0 * occ.hh).to_string());
        row.push((100.0 * occ.lh).to_string());
        if six {
            row.push((100.0 * occ.so).to_string());
        }
        for op in Symmetry::ALL {
            row.push(symmetry_expectation(s, &d.spec, op).to_string());
        }
        table.push(row);
    }

    let metrics = match cfg.operating.delta_v_g {
        Some(dv) if f.b > 0.0 => {
            let du = d.delta_orbital(v_g, dv)?;
            Some(d.metrics(v_g, dv, &field, &du)?.0)
        }
        _ => None,
    };
    let summary = SolveSummary {
        v_g_v: v_g,
        b_t: f.b,
        theta_deg: f.theta_deg,
        phi_deg: f.phi_deg,
        width_nm: d.geometry.width,
        band_count: d.bands(),
        delta_so_mev: d.luttinger.delta_so,
        n_max: d.spec.n_max,
        hw_mev: d.spec.hw,
        hw_optimized: p.optimized,
        dim: d.dim(),
        method: method_name(sp.method),
        doublet_energies_mev: doublet_energies,
        gap_mev: gap,
        metrics,
    };
    Ok(SolveReport { states: table, summary })
}

/// One evaluated sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub coordinate: [f64; 2],
    pub v_g: f64,
    pub width: f64,
    pub b: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub band_count: usize,
    pub delta_so: f64,
    pub hw: [f64; 3],
    pub e1: f64,
    pub gap: f64,
    pub p_hh: f64,
    pub p_lh: f64,
    pub metrics: Option<QubitMetrics>,
    pub g: Option<PrincipalG>,
}

/// Parameters of one sweep point before evaluation.
#[derive(Debug, Clone)]
struct Point {
    coordinate: [f64; 2],
    v_g: f64,
    width: f64,
    b: f64,
    theta_deg: f64,
    phi_deg: f64,
    luttinger: LuttingerParams,
}

fn points(cfg: &RunConfig) -> Vec<Point> {
    let sw = cfg.sweep.as_ref().expect("validated sweep section");
    let base = Point {
        coordinate: [0.0; 2],
        v_g: cfg.operating.v_g,
        width: cfg.geometry.width,
        b: cfg.field.b,
        theta_deg: cfg.field.theta_deg,
        phi_deg: cfg.field.phi_deg,
        luttinger: cfg.luttinger.clone(),
    };
    if sw.axis == SweepAxis::Angle {
        let mut out = Vec::new();
        for &t in &sw.theta_deg {
            for &p in &sw.phi_deg {
                out.push(Point {
                    coordinate: [t, p],
                    theta_deg: t,
                    phi_deg: p,
                    ..base.clone()
                });
            }
        }
        return out;
    }
    let mut xs = sw.coordinates();
    if sw.axis == SweepAxis::DeltaSo && !xs.iter().any(|x| x.is_infinite()) {
        xs.push(f64::INFINITY);
    }
    xs.into_iter()
        .map(|x| {
            let mut p = Point {
                coordinate: [x, 0.0],
                ..base.clone()
            };
            match sw.axis {
                SweepAxis::Vg => p.v_g = x,
                SweepAxis::Width => p.width = x,
                SweepAxis::FieldIntensity => p.b = x,
                SweepAxis::DeltaSo if x.is_infinite() => p.luttinger.band_count = 4,
                SweepAxis::DeltaSo => p.luttinger.delta_so = x,
                SweepAxis::Angle => unreachable!(),
            }
            p
        })
        .collect()
}

/// Ground energy, gap and band weights at B = 0.
fn zero_field(d: &Device, v_g: f64) -> Result<(f64, f64, f64, f64), Error> {
    let sp = d.solve(v_g, &MagneticField::zero(), 2, None)?;
    let occ = band_occupation(&sp.states[0]);
    Ok((sp.states[0].energy, gap(&sp)?, occ.hh, occ.lh))
}

fn evaluate(cfg: &RunConfig, d: &Device, pt: &Point, zero: Option<(f64, f64, f64, f64)>) -> Result<SweepRow, Error> {
    let sw = cfg.sweep.as_ref().expect("validated sweep section");
    let (e1, gap, p_hh, p_lh) = match zero {
        Some(z) => z,
        None => zero_field(d, pt.v_g)?,
    };
    let metrics = match cfg.operating.delta_v_g {
        Some(dv) if pt.b > 0.0 => {
            let field = operating_field(cfg, pt.b, pt.theta_deg, pt.phi_deg)?;
            let du = d.delta_orbital(pt.v_g, dv)?;
            Some(d.metrics(pt.v_g, dv, &field, &du)?.0)
        }
        _ => None,
    };
    let g = match cfg.operating.delta_v_g {
        Some(dv) if sw.g_factors => Some(d.principal_g(pt.v_g, dv)?.0),
        _ => None,
    };
    Ok(SweepRow {
        coordinate: pt.coordinate,
        v_g: pt.v_g,
        width: pt.width,
        b: pt.b,
        theta_deg: pt.theta_deg,
        phi_deg: pt.phi_deg,
        band_count: d.bands(),
        delta_so: if d.bands() == 4 {
            f64::INFINITY
        } else {
            d.luttinger.delta_so
        },
        hw: d.spec.hw,
        e1,
        gap,
        p_hh,
        p_lh,
        metrics,
        g,
    })
}

/// Evaluates every sweep point on the current rayon pool, sorted by coordinate.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, Error> {
    let sw = cfg.sweep.as_ref().expect("validated sweep section");
    let pts = points(cfg);
    info!("{} sweep over {} points", sw.axis.name(), pts.len());
    let mut rows: Vec<SweepRow> = match sw.axis {
        SweepAxis::Width => pts
            .par_iter()
            .map(|pt| {
                let p = prepare(
                    cfg,
                    cfg.geometry.with_width(pt.width),
                    pt.luttinger.clone(),
                    cfg.basis.hw,
                )?;
                evaluate(cfg, &p.device, pt, None)
            })
            .collect::<Result<_, _>>()?,
        SweepAxis::DeltaSo => {
            let hw = match cfg.basis.hw {
                Some(hw) => hw,
                None => prepare_hw(cfg)?,
            };
            pts.par_iter()
                .map(|pt| {
                    let p = prepare(cfg, cfg.geometry.clone(), pt.luttinger.clone(), Some(hw))?;
                    evaluate(cfg, &p.device, pt, None)
                })
                .collect::<Result<_, _>>()?
        }
        SweepAxis::Vg => {
            let p = prepare(cfg, cfg.geometry.clone(), cfg.luttinger.clone(), cfg.basis.hw)?;
            pts.par_iter()
                .map(|pt| evaluate(cfg, &p.device, pt, None))
                .collect::<Result<_, _>>()?
        }
        SweepAxis::FieldIntensity | SweepAxis::Angle => {
            let p = prepare(cfg, cfg.geometry.clone(), cfg.luttinger.clone(), cfg.basis.hw)?;
            let zero = zero_field(&p.device, cfg.operating.v_g)?;
            pts.par_iter()
                .map(|pt| evaluate(cfg, &p.device, pt, Some(zero)))
                .collect::<Result<_, _>>()?
        }
    };
    rows.sort_by(|a, b| {
        a.coordinate[0]
            .total_cmp(&b.coordinate[0])
            .then(a.coordinate[1].total_cmp(&b.coordinate[1]))
    });
    Ok(rows)
}

/// ħω optimized for the configured six- or four-band model.
fn prepare_hw(cfg: &RunConfig) -> Result<[f64; 3], Error> {
    let source = potential_source(cfg)?;
    let u = source.field(&cfg.geometry, cfg.operating.v_g)?;
    let o = &cfg.basis.optimize;
    Ok(optimize_basis(o.n_max, o.init, o.budget, &cfg.luttinger, &u)?.hw)
}

pub fn sweep_table(cfg: &RunConfig, rows: &[SweepRow]) -> Table {
    let with_metrics = rows.iter().any(|r| r.metrics.is_some());
    let with_g = rows.iter().any(|r| r.g.is_some());
    let mut header: Vec<&str> = vec![
        "v_g_V",
        "width_nm",
        "b_T",
        "theta_deg",
        "phi_deg",
        "band_count",
        "delta_so_meV",
        "delta_v_g_V",
        "hw_x_meV",
        "hw_y_meV",
        "hw_z_meV",
        "E1_meV",
        "gap_meV",
        "P_hh_pct",
        "P_lh_pct",
    ];
    if with_metrics {
        header.extend(["f_L_GHz", "f_RX_MHz", "f_RZ_MHz", "f_RXZ_MHz"]);
    }
    if with_g {
        header.extend([
            "g_x",
            "g_y",
            "g_z",
            "g_x_prime_per_V",
            "g_y_prime_per_V",
            "g_z_prime_per_V",
            "axis_deviation_rad",
        ]);
    }
    let mut t = Table::new(header.iter().map(|s| s.to_string()).collect());
    let dv = cfg
        .operating
        .delta_v_g
        .map_or_else(|| "".to_string(), |v| v.to_string());
    for r in rows {
        let mut row = vec![
            r.v_g.to_string(),
            r.width.to_string(),
            r.b.to_string(),
            r.theta_deg.to_string(),
            r.phi_deg.to_string(),
            r.band_count.to_string(),
            r.delta_so.to_string(),
            dv.clone(),
            r.hw[0].to_string(),
            r.hw[1].to_string(),
            r.hw[2].to_string(),
            r.e1.to_string(),
            r.gap.to_string(),
            (100.0 * r.p_hh).to_string(),
            (100.0 * r.p_lh).to_string(),
        ];
        if with_metrics {
            match &r.metrics {
                Some(m) => row.extend([m.f_l_ghz, m.f_rx_mhz, m.f_rz_mhz, m.f_rxz_mhz].map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        if with_g {
            match &r.g {
                Some(g) => {
                    let d = g.derivatives.unwrap_or([f64::NAN; 3]);
                    row.extend(
                        [
                            g.values[0],
                            g.values[1],
                            g.values[2],
                            d[0],
                            d[1],
                            d[2],
                            g.axis_deviation(),
                        ]
                        .map(|v| v.to_string()),
                    );
                }
                None => row.extend(std::iter::repeat_n(String::new(), 7)),
            }
        }
        t.push(row);
    }
    t
}

/// Principal factors at one V_G, from a solve or replayed.
#[derive(Debug, Clone)]
pub struct GPoint {
    pub g: PrincipalG,
    pub source: &'static str,
    /// ĝ(V_G) and ĝ(V_G + δV_G) when solved.
    pub matrices: Option<(GMatrix, GMatrix)>,
}

/// Output of `gmatrix`.
pub struct GReport {
    pub points: Vec<GPoint>,
    pub optimal: Vec<(f64, [OptimalAngles; 2])>,
    pub gmatrix: Table,
    pub angular_map: Table,
    pub comparison: Option<Table>,
    pub comparison_max_deviation: Option<f64>,
}

pub fn gmatrix(cfg: &RunConfig) -> Result<GReport, Error> {
    let dv = cfg.operating.delta_v_g.expect("validated delta_v_g");
    let b = cfg.field.b;
    let gc = &cfg.gmatrix;
    let mut device = None;
    let points: Vec<GPoint> = if gc.replay.is_empty() {
        let p = prepare(cfg, cfg.geometry.clone(), cfg.luttinger.clone(), cfg.basis.hw)?;
        let (pg, a, c) = p.device.principal_g(cfg.operating.v_g, dv)?;
        device = Some(p.device);
        vec![GPoint {
            g: pg,
            source: "solve",
            matrices: Some((a, c)),
        }]
    } else {
        gc.replay
            .iter()
            .map(|r| {
                let mut g = PrincipalG::diagonal(r.g, Some(r.g_prime));
                g.v_g = r.v_g;
                GPoint {
                    g,
                    source: "replay",
                    matrices: None,
                }
            })
            .collect()
    };

    let mut gt = Table::new(
        [
            "v_g_V",
            "delta_v_g_V",
            "b_T",
            "source",
            "plane",
            "phi_deg",
            "g_x",
            "g_y",
            "g_z",
            "g_x_prime_per_V",
            "g_y_prime_per_V",
            "g_z_prime_per_V",
            "axis_deviation_rad",
            "theta_X_max_deg",
            "f_X_max_MHz",
            "theta_Z_min_deg",
            "f_Z_max_MHz",
            "f_Z_max_axis",
            "limiting",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    let mut mt = Table::new(
        ["v_g_V", "delta_v_g_V", "b_T"]
            .iter()
            .chain(holekp_core::gmatrix::ANGULAR_MAP_HEADER.iter())
            .map(|s| s.to_string())
            .collect(),
    );
    let mut optimal = Vec::new();
    for pt in &points {
        let g = &pt.g;
        let d = g.derivatives.expect("principal g with derivatives");
        let angles = [
            optimal_angles(g, Plane::Yz, b, dv)?,
            optimal_angles(g, Plane::Xz, b, dv)?,
        ];
        for a in &angles {
            let plane = match a.plane {
                Plane::Yz => "yz",
                Plane::Xz => "xz",
            };
            gt.push(vec![
                g.v_g.to_string(),
                dv.to_string(),
                b.to_string(),
                pt.source.to_string(),
                plane.to_string(),
                a.plane.phi_deg().to_string(),
                g.values[0].to_string(),
                g.values[1].to_string(),
                g.values[2].to_string(),
                d[0].to_string(),
                d[1].to_string(),
                d[2].to_string(),
                g.axis_deviation().to_string(),
                a.theta_x_max_deg.to_string(),
                a.f_x_max_mhz.to_string(),
                a.theta_z_min_deg.to_string(),
                a.f_z_max_mhz.to_string(),
                format!("{:?}", a.f_z_axis).to_lowercase(),
                a.limiting.to_string(),
            ]);
        }
        optimal.push((g.v_g, angles));
        for ap in angular_map(g, gc.n_theta, gc.n_phi, b, dv)? {
            mt.push(
                [
                    g.v_g,
                    dv,
                    b,
                    ap.theta_deg,
                    ap.phi_deg,
                    ap.f_l_ghz,
                    ap.f_rx_mhz,
                    ap.f_rz_mhz,
                    ap.f_rxz_mhz,
                ]
                .iter()
                .map(|v| v.to_string())
                .collect(),
            );
        }
    }

    let (comparison, max_dev) = match (&device, gc.compare_grid) {
        (Some(d), n) if n > 0 => {
            let (t, m) = comparison_grid(cfg, d, &points[0].g, n)?;
            (Some(t), Some(m))
        }
        _ => (None, None),
    };
    Ok(GReport {
        points,
        optimal,
        gmatrix: gt,
        angular_map: mt,
        comparison,
        comparison_max_deviation: max_dev,
    })
}

/// Direct and g-matrix frequencies at one orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub direct: [f64; 3],
    pub from_g: [f64; 3],
}

/// Direct vs closed-form f_L, f_R^X, f_R^Z on θ_i = 180°·(i+½)/n, φ_j = 360°·j/n.
pub fn compare(cfg: &RunConfig, d: &Device, pg: &PrincipalG, n: usize) -> Result<Vec<Comparison>, Error> {
    let dv = cfg.operating.delta_v_g.expect("validated delta_v_g");
    let v_g = cfg.operating.v_g;
    let b = cfg.field.b;
    let du = d.delta_orbital(v_g, dv)?;
    let grid: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (180.0 * (i as f64 + 0.5) / n as f64, 360.0 * j as f64 / n as f64)))
        .collect();
    grid.par_iter()
        .map(|&(theta, phi)| {
            let field = operating_field(cfg, b, theta, phi)?;
            let (m, _) = d.metrics(v_g, dv, &field, &du)?;
            let u = direction(theta, phi);
            let (fx, fz) = rabi_from_g(pg, u, b, dv)?;
            Ok(Comparison {
                theta_deg: theta,
                phi_deg: phi,
                direct: [m.f_l_ghz, m.f_rx_mhz, m.f_rz_mhz],
                from_g: [larmor_from_g(pg, u, b), fx, fz],
            })
        })
        .collect()
}

/// Relative deviation |a − b|/max(|a|, |b|, floor).
pub fn relative_deviation(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Per-quantity deviations with the floor set to 10% of the grid maximum.
pub fn deviations(rows: &[Comparison]) -> Vec<[f64; 3]> {
    let mut floor = [0.0f64; 3];
    for r in rows {
        for k in 0..3 {
            floor[k] = floor[k].max(r.direct[k].abs()).max(r.from_g[k].abs());
        }
    }
    rows.iter()
        .map(|r| std::array::from_fn(|k| relative_deviation(r.direct[k], r.from_g[k], 0.1 * floor[k])))
        .collect()
}

fn comparison_grid(cfg: &RunConfig, d: &Device, pg: &PrincipalG, n: usize) -> Result<(Table, f64), Error> {
    let rows = compare(cfg, d, pg, n)?;
    let devs = deviations(&rows);
    let dv = cfg.operating.delta_v_g.expect("validated delta_v_g");
    let mut t = Table::new(
        [
            "v_g_V",
            "delta_v_g_V",
            "b_T",
            "theta_deg",
            "phi_deg",
            "f_L_GHz_direct",
            "f_L_GHz_gmatrix",
            "f_RX_MHz_direct",
            "f_RX_MHz_gmatrix",
            "f_RZ_MHz_direct",
            "f_RZ_MHz_gmatrix",
            "f_RXZ_MHz_direct",
            "f_RXZ_MHz_gmatrix",
            "max_rel_deviation",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    let mut worst = 0.0f64;
    for (r, dev) in rows.iter().zip(&devs) {
        let m = dev.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(m);
        t.push(
            [
                cfg.operating.v_g,
                dv,
                cfg.field.b,
                r.theta_deg,
                r.phi_deg,
                r.direct[0],
                r.from_g[0],
                r.direct[1],
                r.from_g[1],
                r.direct[2],
                r.from_g[2],
                combined_rabi(r.direct[1], r.direct[2]),
                combined_rabi(r.from_g[1], r.from_g[2]),
                m,
            ]
            .iter()
            .map(|v| v.to_string())
            .collect(),
        );
    }
    Ok((t, worst))
}

/// Writes `table` as `dir/name`.
pub fn write_table(dir: &Path, name: &str, table: &Table) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name))?;
    table.write(&mut w)?;
    w.flush()
}
