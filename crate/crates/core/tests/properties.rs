use chlab::dynamics::{ch_rhs, ch_rhs_hamiltonian};
use chlab::gkdv;
use chlab::harness::{self, ExperimentConfig, PhysicalParams};
use chlab::linops;
use chlab::modulation::psi_value;
use chlab::perturb::band_limited_random;
use chlab::scattering::{self, LaxPotential};
use chlab::soliton::{self, build_profile};
use chlab::stats::linear_fit;
use chlab::Grid;
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::centered(1024, 80.0).unwrap()
}

/// `(c, ω)` with decay rate `sqrt(1 - 2ω/c) ≥ 0.57`, so the L = 80 box holds the tail.
fn speeds() -> impl Strategy<Value = (f64, f64)> {
    (0.3f64..1.2, 3.0f64..8.0).prop_map(|(w, r)| (r * w, w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn profile_identities_hold((c, w) in speeds(), shift in -3.0f64..3.0) {
        let p = build_profile(c, w, &grid(), shift).unwrap();
        prop_assert!(soliton::stationary_residual(&p) < 1e-7);
        prop_assert!(soliton::first_integral_residual(&p) < 1e-7);
        prop_assert!(soliton::slope_bound_violation(&p) <= 0.0);
        let mc = soliton::momentum_positivity(&p).unwrap();
        prop_assert!(mc.min_m > 0.0 && mc.identity_residual < 1e-8);
        let peak = p.phi.interpolate(shift);
        prop_assert!((peak - (c - 2.0 * w)).abs() < 1e-8 * c);
    }

    #[test]
    fn invariants_match_closed_forms((c, w) in speeds()) {
        let p = build_profile(c, w, &grid(), 0.0).unwrap();
        let inv = soliton::numeric_invariants(&p.phi, w).unwrap();
        let cf = soliton::closed_form_invariants(c, w).unwrap();
        prop_assert!((inv.e / cf.h1 - 1.0).abs() < 1e-6);
        prop_assert!((inv.f / cf.h2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn closed_form_derivatives((c, w) in speeds()) {
        let h = 1e-5 * c;
        let plus = soliton::closed_form_invariants(c + h, w).unwrap();
        let minus = soliton::closed_form_invariants(c - h, w).unwrap();
        let cf = soliton::closed_form_invariants(c, w).unwrap();
        prop_assert!(((plus.h1 - minus.h1) / (2.0 * h) / cf.dh1_dc - 1.0).abs() < 1e-6);
        prop_assert!(((plus.h2 - minus.h2) / (2.0 * h) / cf.dh2_dc - 1.0).abs() < 1e-6);
        prop_assert!((cf.dh2_dc - c * cf.dh1_dc).abs() < 1e-12 * cf.dh2_dc.abs());
    }

    #[test]
    fn kappa_speed_round_trip((c, w) in speeds()) {
        let k = soliton::kappa_of(c, w);
        prop_assert!(k > 0.0 && k < 0.5);
        prop_assert!((soliton::speed_of_kappa(k, w).unwrap() - c).abs() < 1e-10 * c);
    }

    #[test]
    fn weighted_essential_spectrum_is_stable((c, w) in speeds(), t in 0.05f64..0.95) {
        let a = t * linops::weight_a1(c, w);
        prop_assert!(linops::lambda_max(c, w, a) < 0.0);
        let ks: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.05).collect();
        let curve = linops::essential_curve_weighted(c, w, a, &ks);
        prop_assert!(curve.iter().all(|(_, z)| z.re <= linops::lambda_max(c, w, a) + 1e-12));
    }

    #[test]
    fn psi_weight_partition(k in 1.05f64..6.0, x in -30.0f64..30.0) {
        let (l, r) = (psi_value(k, -x), psi_value(k, x));
        prop_assert!((l + r - 1.0).abs() < 1e-8);
        prop_assert!(r > 0.0 && r < 1.0);
        prop_assert!(psi_value(k, x + 0.1) >= r);
    }

    #[test]
    fn vector_field_forms_agree(seed in 0u64..1000, amp in 0.05f64..0.5) {
        let g = Grid::centered(256, 40.0).unwrap();
        let u = band_limited_random(&g, 12, amp, seed);
        let a = ch_rhs(&u, 1.0);
        let b = ch_rhs_hamiltonian(&u, 1.0);
        prop_assert!((&a - &b).max_abs() < 1e-10 * a.max_abs().max(1.0));
    }

    #[test]
    fn helmholtz_pair_inverts(seed in 0u64..1000) {
        let g = Grid::centered(256, 40.0).unwrap();
        let u = band_limited_random(&g, 32, 1.0, seed);
        prop_assert!((&u.helmholtz().helmholtz_inverse() - &u).max_abs() < 1e-12);
    }

    #[test]
    fn gkdv_soliton_solves_its_ode(c in 0.5f64..2.0) {
        let g = Grid::centered(1024, 80.0).unwrap();
        for p in [2, 3] {
            let prof = gkdv::build_q(p, c, &g).unwrap();
            prop_assert!(prof.ode_residual() < 1e-8);
        }
    }

    #[test]
    fn liouville_potential_is_even(z in 0.0f64..10.0) {
        let v = linops::liouville_transform_potential(6.0, 1.0, &[z, -z]).unwrap();
        prop_assert!((v[0] - v[1]).abs() < 1e-12);
        prop_assert!((v[0] - linops::liouville_potential_closed_form(z)).abs() < 1e-11);
    }

    #[test]
    fn exact_lines_are_fitted(m in -5.0f64..5.0, b in -5.0f64..5.0) {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, m * i as f64 + b)).collect();
        let fit = linear_fit(&pts).unwrap();
        prop_assert!((fit.slope - m).abs() < 1e-10 && (fit.intercept - b).abs() < 1e-9);
    }

    #[test]
    fn csv_values_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(harness::format_value(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn config_echo_round_trips((c, w) in speeds(), seed in any::<u64>(), n in 6u32..12) {
        let mut cfg = ExperimentConfig::new("profile-identities");
        cfg.seed = Some(seed);
        cfg.grid.n = Some(1 << n);
        cfg.params = PhysicalParams { c: Some(c), omega: Some(w), ..PhysicalParams::default() };
        let resolved = harness::resolve(&cfg).unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml(&resolved.to_toml()).unwrap(), resolved.clone());
        prop_assert_eq!(harness::resolve(&resolved).unwrap(), resolved);
    }

    #[test]
    fn slow_speeds_are_rejected(w in 0.1f64..2.0, r in 0.1f64..1.0) {
        let mut cfg = ExperimentConfig::new("scattering-unitarity");
        cfg.params = PhysicalParams { c: Some(2.0 * w * r), omega: Some(w), ..PhysicalParams::default() };
        let err = harness::resolve(&cfg).unwrap_err();
        prop_assert_eq!(err.exit_code(), 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn one_soliton_scattering_is_unitary((c, w) in speeds()) {
        let p = build_profile(c, w, &grid(), 0.0).unwrap();
        let pot = LaxPotential::new(p.m.clone(), w).unwrap();
        let coeffs = scattering::scattering_coeffs(&pot, &scattering::uniform_kgrid(32, 8.0)).unwrap();
        prop_assert!(coeffs.max_unitarity_error() < 1e-6);
        prop_assert!(coeffs.max_abs_b() < 1e-4);
        let spec = scattering::discrete_eigenvalues(&pot, 3).unwrap();
        prop_assert_eq!(spec.len(), 1);
        prop_assert!((spec.kappas[0] - soliton::kappa_of(c, w)).abs() < 1e-5);
    }
}
