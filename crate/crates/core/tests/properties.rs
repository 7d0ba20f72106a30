use faer::c64;
use holekp_core::analysis::{band_occupation, symmetry_expectation, Symmetry};
use holekp_core::basis::build_basis;
use holekp_core::gmatrix::{combined_rabi, extract_g, larmor_from_g, rabi_from_g, rabi_in_plane, Plane, PrincipalG};
use holekp_core::hamiltonian::{
    assemble_total, direction, field_derivatives, LuttingerParams, MagneticField, MagneticTerms,
};
use holekp_core::potential::{
    delta_potential, model_potential, parse_grid, DeviceGeometry, ModelPotentialParams, PotentialField,
};
use holekp_core::solver::{time_reverse, SpinorState};
use holekp_core::units::MU_B_OVER_H_GHZ;
use proptest::prelude::*;

const BANDS: usize = 6;

fn state(raw: &[(f64, f64)]) -> SpinorState {
    let norm = raw.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt().max(1e-12);
    let c = raw.iter().map(|(a, b)| c64::new(a / norm, b / norm)).collect();
    SpinorState::new(c, BANDS, 0.0)
}

fn coefficients(orbitals: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), orbitals * BANDS)
        .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonian_is_hermitian(
        b in 0.0..2.0f64,
        theta in 0.0..180.0f64,
        phi in 0.0..360.0f64,
        gamma2 in 0.0..1.0f64,
        gamma3 in 0.0..2.0f64,
        kappa in -2.0..2.0f64,
    ) {
        let lut = LuttingerParams { gamma2, gamma3, kappa, ..LuttingerParams::default() };
        let spec = build_basis([2, 2, 1], [20.0, 25.0, 60.0], lut.gamma1).unwrap();
        let pot = PotentialField::from_fn(|r| 0.2 * r[0] * r[0] + 0.05 * r[1] * r[1] + 0.3 * r[2]);
        let h = assemble_total(&spec, &lut, &pot, &MagneticField::new(b, theta, phi).unwrap()).unwrap();
        prop_assert!(h.hermiticity_defect() < 1e-10);
    }

    #[test]
    fn band_weights_sum_to_one(raw in coefficients(4)) {
        let occ = band_occupation(&state(&raw));
        prop_assert!((occ.hh + occ.lh + occ.so - 1.0).abs() < 1e-12);
        prop_assert!(occ.hh >= 0.0 && occ.lh >= 0.0 && occ.so >= 0.0);
    }

    #[test]
    fn parities_are_bounded(raw in coefficients(8)) {
        let spec = build_basis([1, 1, 1], [20.0, 20.0, 20.0], 4.285).unwrap();
        let s = state(&raw);
        for op in Symmetry::ALL {
            let v = symmetry_expectation(&s, &spec, op);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v), "{op:?}: {v}");
        }
    }

    #[test]
    fn time_reversal_squares_to_minus_one(raw in coefficients(3)) {
        let s = state(&raw);
        let tt = time_reverse(&time_reverse(&s));
        for (a, b) in s.coefficients.iter().zip(&tt.coefficients) {
            prop_assert!((a + b).norm() < 1e-14);
        }
        // ⟨ψ|Θψ⟩ = 0 for any ψ.
        prop_assert!(s.inner(&time_reverse(&s)).norm() < 1e-12);
    }

    #[test]
    fn zeeman_tensor_is_pseudospin_gauge_invariant(
        raw in coefficients(4),
        alpha in 0.0..6.3f64,
        beta in 0.0..3.1f64,
        gamma in 0.0..6.3f64,
    ) {
        let lut = LuttingerParams::default();
        let spec = build_basis([1, 1, 0], [20.0, 25.0, 60.0], lut.gamma1).unwrap();
        let m = field_derivatives(&spec, &lut, MagneticTerms::ALL).unwrap();
        let up = state(&raw);
        let mut down = time_reverse(&up);
        down.scale(c64::new(-1.0, 0.0));
        let g0 = extract_g(&m, &up, &down, 0.0).unwrap().zeeman_tensor();

        // Generic SU(2) rotation of the pseudospin pair.
        let (cb, sb) = ((beta / 2.0).cos(), (beta / 2.0).sin());
        let a = c64::new(0.0, (alpha + gamma) / 2.0).exp() * cb;
        let b = c64::new(0.0, (alpha - gamma) / 2.0).exp() * sb;
        let mix = |x: &SpinorState, p: c64, y: &SpinorState, q: c64| {
            let c = x.coefficients.iter().zip(&y.coefficients).map(|(u, v)| p * u + q * v).collect();
            SpinorState::new(c, BANDS, 0.0)
        };
        let up2 = mix(&up, a, &down, -b.conj());
        let down2 = mix(&up, b, &down, a.conj());
        let g1 = extract_g(&m, &up2, &down2, 0.0).unwrap().zeeman_tensor();
        let scale = g0.abs().max().max(1e-12);
        prop_assert!((g0 - g1).abs().max() < 1e-9 * scale);
    }

    #[test]
    fn in_plane_closed_form_matches_general_formula(
        g in prop::array::uniform3(0.2..5.0f64),
        gp in prop::array::uniform3(-2.0..2.0f64),
        theta in 0.0..180.0f64,
    ) {
        let pg = PrincipalG::diagonal(g, Some(gp));
        for plane in [Plane::Yz, Plane::Xz] {
            let (fx, fz) = rabi_in_plane(&pg, plane, theta, 1.0, 0.01).unwrap();
            let (gx, gz) = rabi_from_g(&pg, direction(theta, plane.phi_deg()), 1.0, 0.01).unwrap();
            prop_assert!((fx - gx).abs() <= 1e-9 * (1.0 + gx.abs()));
            prop_assert!((fz - gz).abs() <= 1e-9 * (1.0 + gz.abs()));
        }
    }

    #[test]
    fn larmor_is_the_effective_g_times_bohr_frequency(
        g in prop::array::uniform3(-5.0..5.0f64),
        theta in 0.0..180.0f64,
        phi in 0.0..360.0f64,
        b in 0.0..3.0f64,
    ) {
        let pg = PrincipalG::diagonal(g, None);
        let u = direction(theta, phi);
        let g_eff = ((g[0] * u[0]).powi(2) + (g[1] * u[1]).powi(2) + (g[2] * u[2]).powi(2)).sqrt();
        let f = larmor_from_g(&pg, u, b);
        prop_assert!((f - MU_B_OVER_H_GHZ * g_eff * b).abs() < 1e-9 * (1.0 + f));
    }

    #[test]
    fn combined_rate_is_below_both(fx in 0.0..200.0f64, fz in 0.0..200.0f64) {
        let c = combined_rabi(fx, fz);
        prop_assert!(c <= fx.min(fz) + 1e-12);
        prop_assert!((combined_rabi(fz, fx) - c).abs() < 1e-12);
    }
}

#[test]
fn potential_step_is_linear_without_vertical_gradient() {
    let geom = DeviceGeometry::default();
    let params = ModelPotentialParams {
        beta_z: 0.0,
        ..ModelPotentialParams::default()
    };
    let base = model_potential(&geom, &params, -0.8).unwrap();
    let one = delta_potential(&base, &model_potential(&geom, &params, -0.79).unwrap()).unwrap();
    let two = delta_potential(&base, &model_potential(&geom, &params, -0.78).unwrap()).unwrap();
    for r in [[0.0, 0.0, 0.0], [3.0, 1.0, -1.5], [-6.0, 4.0, 2.0]] {
        let (a, b) = (one.eval(r), two.eval(r));
        assert!((b - 2.0 * a).abs() <= 1e-12 * (1.0 + a.abs()), "{r:?}: {a} {b}");
    }
}

#[test]
fn sampled_grid_round_trips_through_text() {
    let geom = DeviceGeometry::default();
    let u = model_potential(&geom, &ModelPotentialParams::default(), -0.8).unwrap();
    let grid = u.sample([-12.0, -6.0, -3.0], [0.5, 0.5, 0.5], [49, 25, 13]);
    let mut text = Vec::new();
    grid.write_to(&mut text).unwrap();
    let back = parse_grid(std::str::from_utf8(&text).unwrap()).unwrap();
    assert_eq!(back, grid);
    let f = PotentialField::from_grid(back);
    let node = [-12.0 + 0.5 * 20.0, -6.0 + 0.5 * 12.0, -3.0 + 0.5 * 6.0];
    assert!((f.eval(node) - u.eval(node)).abs() < 1e-9);
}
