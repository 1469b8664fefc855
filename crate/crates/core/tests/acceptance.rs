//! Acceptance criteria 1-9. Runs as a plain binary (`harness = false`) so that
//! every criterion prints one PASS/FAIL line, then exits non-zero if any failed.

use std::f64::consts::PI;
use std::time::Instant;

use pnph::conductivity::{cheeger_lower_bound, cheeger_rectangle, conductivity_estimate, first_dirichlet_eigenvalue};
use pnph::geometry::{build_preset, PresetParams};
use pnph::limits::{ambipolar_coefficients, ambipolar_step, thin_dl_solve, SaltBoundary};
use pnph::macro_solver::{
    steady_transport, step_macro_pnp, step_salt_charge, BoundarySpec, FaceCondition, MacroGrid, MacroState, Side,
    StepMode,
};
use pnph::micro_solver::compare_micro_macro;
use pnph::tensors::{
    compute_effective_tensors, path_tortuosity, tortuosity, EffectiveTensors, TortuosityEntry, TortuosityVariant,
};

type Outcome = Result<String, String>;

fn params(kv: &[(&str, f64)]) -> PresetParams {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn straight_channel_tensors(d: usize, p: f64) -> EffectiveTensors {
    let name = if d == 2 { "straight_channel_2d" } else { "straight_channel_3d" };
    let cell = build_preset(name, &params(&[("p", p), ("n", 64.0)])).unwrap();
    compute_effective_tensors(&cell, &Default::default()).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst_err = 0.0f64;
    let mut worst_time = 0.0f64;
    for d in [2, 3] {
        for p in [0.25, 0.5, 0.75] {
            let clock = Instant::now();
            let t = straight_channel_tensors(d, p);
            worst_time = worst_time.max(clock.elapsed().as_secs_f64());
            let exact = EffectiveTensors::straight_channel(d, p, 0.0, 1.0);
            worst_err = worst_err.max((&t.d_hat - &exact.d_hat).amax());
        }
    }
    check(
        worst_err <= 1e-8 && worst_time < 5.0,
        format!("max |D - D_exact| = {worst_err:.2e}, slowest solve {worst_time:.2} s"),
    )
}

fn perturbed_d11_over_p(n: usize) -> (f64, f64, EffectiveTensors) {
    let cell = build_preset("perturbed_channel_3d", &params(&[("n", n as f64)])).unwrap();
    let clock = Instant::now();
    let t = compute_effective_tensors(&cell, &Default::default()).unwrap();
    (t.d_hat[(0, 0)] / t.p, clock.elapsed().as_secs_f64(), t)
}

fn criterion_2() -> Outcome {
    println!("    mesh refinement, perturbed channel:");
    println!("    {:>4} {:>12} {:>10}", "n", "d11/p", "seconds");
    let mut last = (0.0, 0.0);
    for n in [16, 24, 32, 48] {
        let (r, secs, _) = perturbed_d11_over_p(n);
        println!("    {n:>4} {r:>12.6} {secs:>10.2}");
        last = (r, secs);
    }
    let (r, secs) = last;
    check(
        (r - 0.3833).abs() <= 0.05 && secs < 300.0,
        format!("d11/p = {r:.4} at 48^3 (target 0.3833 +- 0.05), {secs:.1} s"),
    )
}

fn criterion_3() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for p in [0.25, 0.5, 0.75] {
        let t = straight_channel_tensors(3, p);
        let pet = tortuosity(&t, TortuosityVariant::Petersen, 1.0, None).unwrap();
        let want = 1.0 / p.sqrt();
        ok &= pet.tau[0][0] == TortuosityEntry::Value(want)
            && pet.tau[1][1] == TortuosityEntry::Blocked
            && pet.tau[2][2] == TortuosityEntry::Value(want);
    }
    notes.push(format!("Petersen exact: {ok}"));
    let (_, _, t) = perturbed_d11_over_p(48);
    let aris = tortuosity(&t, TortuosityVariant::ArisSatterfield, 1.0, None).unwrap();
    let tau11 = aris.tau[0][0].value().unwrap_or(f64::INFINITY);
    ok &= (tau11 - 2.6).abs() <= 0.2;
    notes.push(format!("Aris tau11 = {tau11:.3}"));
    let path = path_tortuosity(&[1.0, 2.0, 2f64.sqrt()], 1.0).unwrap();
    let want = 1.0 + 2f64.sqrt() / 3.0;
    // exact up to the rounding of the two evaluation orders
    let ulps = ((path - want) / (f64::EPSILON * want)).abs();
    ok &= ulps <= 2.0;
    notes.push(format!("path tortuosity {path} vs {want} ({ulps:.0} ulp)"));
    check(ok, notes.join(", "))
}

fn criterion_4() -> Outcome {
    // 112 x 112 pore voxels of side 1/112 in a 128^2 cell
    let l = 128.0 / 112.0;
    let cell = build_preset(
        "rectangle_pore_2d",
        &params(&[("n", 128.0), ("l1", l), ("l2", l), ("a", 1.0), ("b", 1.0)]),
    )
    .unwrap();
    let eig = first_dirichlet_eigenvalue(&cell, 1e-8).unwrap();
    let target = 2.0 * PI * PI;
    let rel = (eig.theta_1 / target - 1.0).abs();
    let h = cheeger_rectangle(1.0, 1.0).unwrap();
    let h_ok = (h - (2.0 + PI.sqrt())).abs() < 1e-12;
    let bound = cheeger_lower_bound(h);
    let est = conductivity_estimate(0.5, 0.1, 1.0, target, 1.0).unwrap();
    let hand = 0.5 * (0.1 * 0.1 * target / 1.0 + 1.0);
    check(
        rel < 0.01 && h_ok && eig.theta_1 >= bound && (est - hand).abs() <= 1e-12,
        format!(
            "theta_1 = {:.4} (rel err {rel:.1e}), bound {bound:.4}, estimate {est:.6}",
            eig.theta_1
        ),
    )
}

fn criterion_5() -> Outcome {
    let t = EffectiveTensors::straight_channel(2, 0.5, -0.1, 0.3);
    let grid = MacroGrid::line(40, 1.0).unwrap();
    let init = |grid: &MacroGrid| {
        let n = grid.num_nodes();
        let cp = (0..n).map(|v| 1.2 + 0.3 * (2.0 * PI * grid.center(v)[0]).cos()).collect();
        let cm = (0..n).map(|v| 1.0 - 0.2 * (2.0 * PI * grid.center(v)[0]).sin()).collect();
        MacroState::new(grid.clone(), cp, cm, vec![0.0; n]).unwrap()
    };
    let bc = BoundarySpec::no_flux(1);

    // per-step mass conservation, both time discretizations
    let mut mass_err = 0.0f64;
    for mode in [StepMode::SemiImplicit, StepMode::FullyImplicit] {
        let mut s = init(&grid);
        for _ in 0..20 {
            let next = step_macro_pnp(&s, &t, &bc, 0.005, mode).unwrap();
            let (a0, b0) = s.totals();
            let (a1, b1) = next.totals();
            mass_err = mass_err.max(((a1 - a0) / a0).abs()).max(((b1 - b0) / b0).abs());
            s = next;
        }
    }

    // Boltzmann distribution under a frozen potential
    let mut s = init(&grid);
    s.phi = (0..40).map(|v| 0.4 * (2.0 * PI * grid.center(v)[0]).sin()).collect();
    let eq = steady_transport(&s, &t, &bc).unwrap();
    let kp: Vec<f64> = (0..40).map(|v| eq.c_plus[v] * eq.phi[v].exp()).collect();
    let km: Vec<f64> = (0..40).map(|v| eq.c_minus[v] * (-eq.phi[v]).exp()).collect();
    let dev = |k: &[f64]| k.iter().map(|x| (x / k[0] - 1.0).abs()).fold(0.0, f64::max);
    let boltz = dev(&kp).max(dev(&km));

    // species vs salt/charge variables, Dirichlet and current faces
    let bc2 = BoundarySpec::no_flux(1)
        .with(0, Side::Low, FaceCondition::Dirichlet { c_plus: 1.4, c_minus: 1.2, phi: 0.0 })
        .with(0, Side::High, FaceCondition::AppliedCurrent { current: 0.05 });
    let mut a = init(&grid);
    let mut b = a.clone();
    let mut gap = 0.0f64;
    for _ in 0..100 {
        a = step_macro_pnp(&a, &t, &bc2, 0.005, StepMode::SemiImplicit).unwrap();
        b = step_salt_charge(&b, &t, &bc2, 0.005).unwrap();
        for v in 0..40 {
            gap = gap.max((a.c_plus[v] - b.c_plus[v]).abs()).max((a.c_minus[v] - b.c_minus[v]).abs());
        }
    }
    check(
        mass_err <= 1e-12 && boltz <= 1e-8 && gap <= 1e-10,
        format!("mass drift {mass_err:.1e}, Boltzmann deviation {boltz:.1e}, species vs salt/charge {gap:.1e}"),
    )
}

fn criterion_6() -> Outcome {
    let n = 200;
    let (p, rho_s, current, dt, steps) = (0.5, -0.1, 0.5, 0.002, 100);
    let grid = MacroGrid::line(n, 1.0).unwrap();
    let bc = BoundarySpec::uniform(1, FaceCondition::AppliedCurrent { current });
    let t_dl = EffectiveTensors::straight_channel(2, p, rho_s, 1.0);
    // total salt C = c+ + c- = 2, diffuse charge c+ - c- = -rho_s/p = 0.2
    let frames = thin_dl_solve(&grid, &vec![2.0; n], &t_dl, &vec![rho_s; n], &bc, dt, steps).unwrap();
    let c_dl = &frames.last().unwrap().c;
    let mut dists = Vec::new();
    for eps in [0.1, 0.05, 0.025] {
        let t = EffectiveTensors::straight_channel(2, p, rho_s, eps);
        let mut s = MacroState::uniform(grid.clone(), 1.1, 0.9, 0.0).unwrap();
        for _ in 0..steps {
            s = step_macro_pnp(&s, &t, &bc, dt, StepMode::FullyImplicit).unwrap();
        }
        let sq: f64 = (0..n).map(|v| (s.c_plus[v] + s.c_minus[v] - c_dl[v]).powi(2)).sum();
        dists.push((sq / n as f64).sqrt());
    }
    check(
        dists[1] < dists[0] && dists[2] < dists[1] && dists[2] < 5e-3,
        format!("L2 at eps 0.1, 0.05, 0.025: {:.3e}, {:.3e}, {:.3e}", dists[0], dists[1], dists[2]),
    )
}

fn criterion_7() -> Outcome {
    // charged straight channel between two neutral reservoirs; the Donnan
    // layers at the channel mouths are the homogenization error
    let cell = build_preset(
        "straight_channel_2d",
        &params(&[("n", 16.0), ("sigma", -0.2), ("epsilon", 0.5)]),
    )
    .unwrap();
    let (rho_s, p) = (cell.homogenized_surface_charge(), cell.porosity());
    let reservoir = FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: 0.0 };
    let bc = BoundarySpec::no_flux(2).with(0, Side::Low, reservoir).with(0, Side::High, reservoir);
    let clock = Instant::now();
    let mut l2 = Vec::new();
    for n in [2, 4] {
        let r = compare_micro_macro(&cell, n, &bc, |_, _| (1.0 - rho_s / p, 1.0), 0.02, 50).unwrap();
        l2.push(r.l2_c);
    }
    let secs = clock.elapsed().as_secs_f64();
    check(
        l2[1] < l2[0] && secs < 600.0,
        format!("L2(c) n=2: {:.3e}, n=4: {:.3e}, {secs:.1} s", l2[0], l2[1]),
    )
}

fn criterion_8() -> Outcome {
    let d = 0.7;
    let k = ambipolar_coefficients(1.0, 1.0, d, d, d, d, 1.0).unwrap();
    let sym = (k.d_bar - d).abs() <= f64::EPSILON * d && (k.z_bar - 1.0).abs() <= f64::EPSILON;

    let grid = MacroGrid::line(30, 1.0).unwrap();
    let x: Vec<f64> = (0..30).map(|v| grid.center(v)[0]).collect();
    let c0: Vec<f64> = x.iter().map(|x| 2.0 + 0.5 * (2.0 * PI * x).cos()).collect();
    let rho_s: Vec<f64> = x.iter().map(|x| -0.1 * (1.0 + x)).collect();
    let phi: Vec<f64> = x.iter().map(|x| 0.3 * x * x).collect();
    let kk = ambipolar_coefficients(2.0, 1.0, 1.3, 0.8, 1.3, 0.8, 1.0).unwrap();
    let bc = [[SaltBoundary::Value(2.0), SaltBoundary::NoFlux]];
    let run = |p: f64| {
        let t = EffectiveTensors::straight_channel(2, p, -0.1, 0.1);
        let mut c = c0.clone();
        for _ in 0..10 {
            c = ambipolar_step(&grid, &c, &kk, &t, &rho_s, &phi, &bc, 0.01, 1.0).unwrap();
        }
        c
    };
    let (a, b) = (run(0.3), run(0.7));
    let identical = a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    check(
        sym && identical,
        format!("symmetric D_bar = {}, z_bar = {}; p = 0.3 vs 0.7 bit-identical: {identical}", k.d_bar, k.z_bar),
    )
}

fn criterion_9() -> Outcome {
    let (radius, sigma) = (0.3, 1.0);
    let exact = 2.0 * PI * radius * sigma;
    let ns = [32.0f64, 64.0, 128.0, 256.0];
    let errs: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let cell = build_preset(
                "circular_inclusion_2d",
                &params(&[("n", n), ("radius", radius), ("sigma", sigma)]),
            )
            .unwrap();
            (cell.homogenized_surface_charge() - exact).abs()
        })
        .collect();
    // least-squares slope of log(err) against log(h)
    let xs: Vec<f64> = ns.iter().map(|n| -n.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let order = num / den;
    check(
        order >= 0.8,
        format!(
            "errors {:.2e}, {:.2e}, {:.2e}, {:.2e}; observed order {order:.2}",
            errs[0], errs[1], errs[2], errs[3]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("straight-channel tensors", criterion_1),
        ("perturbed-channel tensor", criterion_2),
        ("tortuosity goldens", criterion_3),
        ("eigenvalue and Cheeger bound", criterion_4),
        ("macro PNP properties", criterion_5),
        ("thin double layer limit", criterion_6),
        ("micro vs macro trend", criterion_7),
        ("ambipolar coefficients and p independence", criterion_8),
        ("surface charge assembly", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
