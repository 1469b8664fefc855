use std::f64::consts::PI;

use pnph::macro_solver::sg::{bernoulli, slotboom_flux, species_flux, AxisCoeff};
use pnph::macro_solver::{
    from_salt_charge, solve_poisson, step_macro_pnp, step_salt_charge, to_salt_charge, BoundarySpec, FaceCondition,
    MacroGrid, MacroState, Side, StepMode,
};
use pnph::tensors::EffectiveTensors;
use proptest::prelude::*;

/// Neutral state on an insulated line: `c+ = c- = 1 + a cos(2 pi k x)`,
/// one species shifted so that `p(c+ - c-) + rho_s` has zero mean.
fn neutral_line(n: usize, p: f64, rho_s: f64, a: f64, k: u32) -> MacroState {
    let grid = MacroGrid::line(n, 1.0).unwrap();
    let shape: Vec<f64> = (0..n)
        .map(|v| 1.0 + a * (2.0 * PI * k as f64 * grid.center(v)[0]).cos())
        .collect();
    // the species of sign opposite to rho_s carries the excess
    let r = rho_s / p;
    let cp = shape.iter().map(|s| s + (-r).max(0.0)).collect();
    let cm = shape.iter().map(|s| s + r.max(0.0)).collect();
    MacroState::new(grid, cp, cm, vec![0.0; n]).unwrap()
}

fn dirichlet_ends(phi_lo: f64, phi_hi: f64) -> BoundarySpec {
    BoundarySpec::no_flux(1)
        .with(0, Side::Low, FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: phi_lo })
        .with(0, Side::High, FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: phi_hi })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn insulated_steps_conserve_mass(
        n in 8usize..40,
        p in 0.2f64..0.9,
        rho_s in -0.2f64..0.2,
        a in 0.0f64..0.4,
        k in 1u32..4,
        implicit in any::<bool>(),
    ) {
        let t = EffectiveTensors::straight_channel(2, p, rho_s, 0.5);
        let s0 = neutral_line(n, p, rho_s, a, k);
        let bc = BoundarySpec::no_flux(1);
        let mode = if implicit { StepMode::FullyImplicit } else { StepMode::SemiImplicit };
        let mut s = s0.clone();
        for _ in 0..5 {
            s = step_macro_pnp(&s, &t, &bc, 0.01, mode).unwrap();
        }
        let (a0, b0) = s0.totals();
        let (a1, b1) = s.totals();
        prop_assert!((a1 - a0).abs() <= 1e-12 * a0);
        prop_assert!((b1 - b0).abs() <= 1e-12 * b0);
        prop_assert!(s.c_plus.iter().chain(&s.c_minus).all(|&c| c > 0.0));
    }

    #[test]
    fn salt_charge_step_matches_species_step(
        n in 8usize..40,
        p in 0.2f64..0.9,
        rho_s in -0.2f64..0.2,
        a in 0.0f64..0.4,
        k in 1u32..4,
    ) {
        let t = EffectiveTensors::straight_channel(2, p, rho_s, 0.5);
        let s0 = neutral_line(n, p, rho_s, a, k);
        let bc = dirichlet_ends(0.0, 0.1);
        let a1 = step_macro_pnp(&s0, &t, &bc, 0.01, StepMode::SemiImplicit).unwrap();
        let b1 = step_salt_charge(&s0, &t, &bc, 0.01).unwrap();
        for v in 0..n {
            prop_assert!((a1.c_plus[v] - b1.c_plus[v]).abs() < 1e-12);
            prop_assert!((a1.c_minus[v] - b1.c_minus[v]).abs() < 1e-12);
            prop_assert!((a1.phi[v] - b1.phi[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn salt_charge_round_trip(
        cp in proptest::collection::vec(0.0f64..3.0, 12),
        cm in proptest::collection::vec(0.0f64..3.0, 12),
    ) {
        let grid = MacroGrid::line(12, 1.0).unwrap();
        let s = MacroState::new(grid.clone(), cp, cm, vec![0.0; 12]).unwrap();
        let (c, rho) = to_salt_charge(&s);
        let back = from_salt_charge(grid, &c, &rho, s.phi.clone(), 0.0).unwrap();
        for v in 0..12 {
            prop_assert!((back.c_plus[v] - s.c_plus[v]).abs() <= 1e-15 * (1.0 + s.c_plus[v]));
            prop_assert!((back.c_minus[v] - s.c_minus[v]).abs() <= 1e-15 * (1.0 + s.c_minus[v]));
        }
    }

    #[test]
    fn slotboom_flux_equals_drift_diffusion(
        d in 0.05f64..2.0,
        z in prop_oneof![Just(1.0), Just(-1.0)],
        h in 0.01f64..0.5,
        ci in 0.01f64..3.0,
        cj in 0.01f64..3.0,
        phi_i in -3.0f64..3.0,
        phi_j in -3.0f64..3.0,
    ) {
        let a = species_flux(AxisCoeff { d, m: d }, z, h, ci, cj, phi_i, phi_j);
        let b = slotboom_flux(d, z, h, ci, cj, phi_i, phi_j);
        let scale = d / h * (ci + cj) * (1.0 + (phi_j - phi_i).abs());
        prop_assert!((a - b).abs() <= 1e-11 * scale, "{a} vs {b}");
    }

    #[test]
    fn boltzmann_profile_has_no_flux(
        d in 0.05f64..2.0,
        z in prop_oneof![Just(1.0), Just(-1.0)],
        ci in 0.01f64..3.0,
        dphi in -5.0f64..5.0,
    ) {
        let cj = ci * (-z * dphi).exp();
        let j = species_flux(AxisCoeff { d, m: d }, z, 0.1, ci, cj, 0.0, dphi);
        prop_assert!(j.abs() <= 1e-13 * d * 10.0 * (ci + cj));
    }

    #[test]
    fn bernoulli_reflection(x in -50.0f64..50.0) {
        let lhs = bernoulli(-x);
        let rhs = bernoulli(x) + x;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn poisson_is_linear_in_charge(
        n in 8usize..40,
        p in 0.2f64..0.9,
        a in 0.01f64..0.4,
        k in 1u32..4,
    ) {
        // zero Dirichlet data: phi is linear in p(c+ - c-)
        let t = EffectiveTensors::straight_channel(2, p, 0.0, 0.5);
        let grid = MacroGrid::line(n, 1.0).unwrap();
        let bump: Vec<f64> = (0..n)
            .map(|v| a * (2.0 * PI * k as f64 * grid.center(v)[0]).sin().abs())
            .collect();
        let state = |s: f64| {
            let cp = bump.iter().map(|b| 1.0 + s * b).collect();
            MacroState::new(grid.clone(), cp, vec![1.0; n], vec![0.0; n]).unwrap()
        };
        let bc = dirichlet_ends(0.0, 0.0);
        let one = solve_poisson(&state(1.0), &t, &bc).unwrap();
        let two = solve_poisson(&state(2.0), &t, &bc).unwrap();
        let top = one.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(top > 0.0);
        for v in 0..n {
            prop_assert!((two[v] - 2.0 * one[v]).abs() <= 1e-10 * top);
        }
    }
}

#[test]
fn charged_insulated_state_is_rejected() {
    let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.5);
    let s = MacroState::uniform(MacroGrid::line(10, 1.0).unwrap(), 1.2, 1.0, 0.0).unwrap();
    assert!(matches!(
        solve_poisson(&s, &t, &BoundarySpec::no_flux(1)),
        Err(pnph::Error::Incompatible { .. })
    ));
}

#[test]
fn gauss_law_on_a_line() {
    // -eps phi'' = q on (0,1), phi(0) = phi(1) = 0: boundary flux balances the charge
    let n = 200;
    let p = 0.5;
    let t = EffectiveTensors::straight_channel(2, p, 0.0, 0.5);
    let grid = MacroGrid::line(n, 1.0).unwrap();
    let s = MacroState::new(grid.clone(), vec![1.1; n], vec![1.0; n], vec![0.0; n]).unwrap();
    let phi = solve_poisson(&s, &t, &dirichlet_ends(0.0, 0.0)).unwrap();
    let e = t.eps_hat[(0, 0)];
    let h = grid.spacing(0);
    // face half a cell from the first node
    let out = e * (phi[0] / (0.5 * h) + phi[n - 1] / (0.5 * h));
    let q = p * 0.1;
    assert!((out - q).abs() < 1e-9, "{out} vs {q}");
}
