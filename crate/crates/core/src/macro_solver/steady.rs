use super::sg::{species_flux, BLOCKED};
use super::step::assemble_transport;
use super::{axis_tensors, faces, AxisTensors, BlockSystem, BoundarySpec, Face, FaceCondition, MacroGrid, MacroState, Side};
use crate::error::{Error, Result};
use crate::tensors::EffectiveTensors;

/// Controls of the damped Gummel iteration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SteadyOptions {
    /// Bound on the max-norm residual of each of the three equations.
    pub tol: f64,
    /// Relaxation of the potential update.
    pub damping: f64,
    pub max_iter: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            damping: 0.5,
            max_iter: 2000,
        }
    }
}

/// Iterations over which the residual must drop by at least 1%.
const STAGNATION_WINDOW: usize = 100;

/// Steady state by damped Gummel iteration.
///
/// Each sweep solves a nonlinear Poisson problem with Slotboom-frozen
/// concentrations, relaxes the potential, then solves steady transport for
/// each species. Closed node groups keep the species mass of `state`.
pub fn steady_state(state: &MacroState, t: &EffectiveTensors, bc: &BoundarySpec, opts: SteadyOptions) -> Result<MacroState> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("steady tolerance must be positive".into()));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument("damping must lie in (0, 1]".into()));
    }
    bc.check(&state.grid)?;
    let axes = axis_tensors(t, state.grid.dim())?;
    let mut s = state.clone();
    let mut history = vec![max3(steady_residual(&s, t, &axes, bc))];
    if history[0] <= opts.tol {
        return Ok(s);
    }
    let kappa = axes
        .iter()
        .find(|a| a.d > BLOCKED)
        .map(|a| a.m / a.d)
        .unwrap_or(1.0);
    let masses = (group_masses(&s.grid, &axes, &s.c_plus), group_masses(&s.grid, &axes, &s.c_minus));
    for it in 1..=opts.max_iter {
        let target = nonlinear_poisson(&s, t, &axes, bc, kappa)?;
        for (phi, new) in s.phi.iter_mut().zip(&target) {
            *phi += opts.damping * (new - *phi);
        }
        s.c_plus = species_steady(&s.grid, &axes, bc, &s.phi, 1.0, &masses.0)?;
        s.c_minus = species_steady(&s.grid, &axes, bc, &s.phi, -1.0, &masses.1)?;
        let r = max3(steady_residual(&s, t, &axes, bc));
        history.push(r);
        log::debug!("gummel {it}: residual {r:e}");
        if r <= opts.tol {
            for c in s.c_plus.iter_mut().chain(s.c_minus.iter_mut()) {
                *c = c.max(0.0);
            }
            return Ok(s);
        }
        if !r.is_finite() || (it >= STAGNATION_WINDOW && r > 0.99 * history[it - STAGNATION_WINDOW]) {
            break;
        }
    }
    Err(Error::Stagnation {
        iterations: history.len() - 1,
        residual: *history.last().unwrap(),
        history,
    })
}

/// Steady transport of both species in the frozen potential of `state`.
///
/// Closed node groups keep the species mass of `state`.
pub fn steady_transport(state: &MacroState, t: &EffectiveTensors, bc: &BoundarySpec) -> Result<MacroState> {
    bc.check(&state.grid)?;
    let axes = axis_tensors(t, state.grid.dim())?;
    let grid = &state.grid;
    let cp = species_steady(grid, &axes, bc, &state.phi, 1.0, &group_masses(grid, &axes, &state.c_plus))?;
    let cm = species_steady(grid, &axes, bc, &state.phi, -1.0, &group_masses(grid, &axes, &state.c_minus))?;
    let mut out = MacroState::new(grid.clone(), cp, cm, state.phi.clone())?;
    out.time = state.time;
    Ok(out)
}

/// Max-norm residuals `(c+, c-, Poisson)` of the discrete steady equations.
pub fn steady_residuals(state: &MacroState, t: &EffectiveTensors, bc: &BoundarySpec) -> Result<[f64; 3]> {
    let axes = axis_tensors(t, state.grid.dim())?;
    Ok(steady_residual(state, t, &axes, bc))
}

fn max3(r: [f64; 3]) -> f64 {
    r[0].max(r[1]).max(r[2])
}

fn steady_residual(s: &MacroState, t: &EffectiveTensors, axes: &[AxisTensors], bc: &BoundarySpec) -> [f64; 3] {
    let grid = &s.grid;
    let n = grid.num_nodes();
    let mut rp = vec![0.0; n];
    let mut rm = vec![0.0; n];
    let mut rphi = poisson_operator(grid, axes, bc, &s.phi);
    for v in 0..n {
        rphi[v] -= t.p * (s.c_plus[v] - s.c_minus[v]) + t.rho_s;
    }
    for face in faces(grid) {
        match face {
            Face::Interior { lo, hi, axis } => {
                let h = grid.spacing(axis);
                let k = axes[axis].transport();
                let jp = species_flux(k, 1.0, h, s.c_plus[lo], s.c_plus[hi], s.phi[lo], s.phi[hi]);
                let jm = species_flux(k, -1.0, h, s.c_minus[lo], s.c_minus[hi], s.phi[lo], s.phi[hi]);
                rp[lo] -= jp / h;
                rp[hi] += jp / h;
                rm[lo] -= jm / h;
                rm[hi] += jm / h;
            }
            Face::Boundary { node, axis, side } => {
                let h = grid.spacing(axis);
                let k = axes[axis].transport();
                let (jp, jm) = match bc.get(axis, side) {
                    FaceCondition::NoFlux => (0.0, 0.0),
                    FaceCondition::AppliedCurrent { current } => (-0.5 * current, 0.5 * current),
                    FaceCondition::Dirichlet { c_plus, c_minus, phi } => match side {
                        Side::High => (
                            species_flux(k, 1.0, 0.5 * h, s.c_plus[node], c_plus, s.phi[node], phi),
                            species_flux(k, -1.0, 0.5 * h, s.c_minus[node], c_minus, s.phi[node], phi),
                        ),
                        Side::Low => (
                            species_flux(k, 1.0, 0.5 * h, c_plus, s.c_plus[node], phi, s.phi[node]),
                            species_flux(k, -1.0, 0.5 * h, c_minus, s.c_minus[node], phi, s.phi[node]),
                        ),
                    },
                };
                let sign = if side == Side::High { -1.0 } else { 1.0 };
                rp[node] += sign * jp / h;
                rm[node] += sign * jm / h;
            }
        }
    }
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    [norm(&rp), norm(&rm), norm(&rphi)]
}

/// `-div(eps_hat grad phi)` including Dirichlet face terms.
fn poisson_operator(grid: &MacroGrid, axes: &[AxisTensors], bc: &BoundarySpec, phi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.num_nodes()];
    for face in faces(grid) {
        match face {
            Face::Interior { lo, hi, axis } => {
                let w = axes[axis].e / grid.spacing(axis).powi(2);
                out[lo] += w * (phi[lo] - phi[hi]);
                out[hi] += w * (phi[hi] - phi[lo]);
            }
            Face::Boundary { node, axis, side } => {
                if let FaceCondition::Dirichlet { phi: phi_b, .. } = bc.get(axis, side) {
                    let w = 2.0 * axes[axis].e / grid.spacing(axis).powi(2);
                    out[node] += w * (phi[node] - phi_b);
                }
            }
        }
    }
    out
}

/// Newton solve of Poisson with `c+- = c+-_old exp(-+kappa (phi - phi_old))`.
fn nonlinear_poisson(
    s: &MacroState,
    t: &EffectiveTensors,
    axes: &[AxisTensors],
    bc: &BoundarySpec,
    kappa: f64,
) -> Result<Vec<f64>> {
    let grid = &s.grid;
    let n = grid.num_nodes();
    let groups = super::step::potential_groups(grid, axes, bc);
    let mut phi = s.phi.clone();
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let mut res = poisson_operator(grid, axes, bc, &phi);
        let mut sys = BlockSystem::new(grid, 1);
        let mut diag = vec![0.0; n];
        for v in 0..n {
            let d = kappa * (phi[v] - s.phi[v]);
            let cp = s.c_plus[v] * (-d).exp();
            let cm = s.c_minus[v] * d.exp();
            res[v] -= t.p * (cp - cm) + t.rho_s;
            diag[v] = t.p * kappa * (cp + cm);
            sys.add(v, 0, v, 0, diag[v]);
            sys.add_rhs(v, 0, -res[v]);
        }
        for face in faces(grid) {
            match face {
                Face::Interior { lo, hi, axis } => {
                    let w = axes[axis].e / grid.spacing(axis).powi(2);
                    sys.add(lo, 0, lo, 0, w);
                    sys.add(lo, 0, hi, 0, -w);
                    sys.add(hi, 0, hi, 0, w);
                    sys.add(hi, 0, lo, 0, -w);
                }
                Face::Boundary { node, axis, side } => {
                    if let FaceCondition::Dirichlet { .. } = bc.get(axis, side) {
                        sys.add(node, 0, node, 0, 2.0 * axes[axis].e / grid.spacing(axis).powi(2));
                    }
                }
            }
        }
        for (members, anchored) in &groups {
            if !anchored && members.iter().all(|&v| diag[v] == 0.0) {
                sys.pin(members[0], 0, 0.0);
            }
        }
        let mut delta = sys.solve()?;
        for d in delta.iter_mut() {
            *d = d.clamp(-2.0, 2.0);
        }
        let mut step: f64 = 0.0;
        for v in 0..n {
            phi[v] += delta[v];
            step = step.max(delta[v].abs());
        }
        let scale = 1.0 + phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if step <= 1e-13 * scale || (step <= 1e-10 * scale && step >= last) {
            return Ok(phi);
        }
        last = step;
    }
    Err(Error::NotConverged {
        solver: "nonlinear Poisson",
        iterations: 60,
        residual: last,
    })
}

/// Node groups coupled by the transport stencil and whether each touches a
/// Dirichlet face.
fn transport_groups(grid: &MacroGrid, axes: &[AxisTensors], bc: &BoundarySpec) -> Vec<(Vec<usize>, bool)> {
    let n = grid.num_nodes();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for seed in 0..n {
        if seen[seed] {
            continue;
        }
        seen[seed] = true;
        let mut members = vec![seed];
        let mut anchored = false;
        let mut k = 0;
        while k < members.len() {
            let v = members[k];
            k += 1;
            for axis in 0..grid.dim() {
                if axes[axis].transport().is_blocked() {
                    continue;
                }
                for side in [Side::Low, Side::High] {
                    match grid.neighbor(v, axis, side) {
                        Some(u) if !seen[u] => {
                            seen[u] = true;
                            members.push(u);
                        }
                        Some(_) => {}
                        None => {
                            if matches!(bc.get(axis, side), FaceCondition::Dirichlet { .. }) {
                                anchored = true;
                            }
                        }
                    }
                }
            }
        }
        out.push((members, anchored));
    }
    out
}

/// Mass `sum c V` of each transport group (in group order).
fn group_masses(grid: &MacroGrid, axes: &[AxisTensors], c: &[f64]) -> Vec<f64> {
    let v = grid.cell_volume();
    let open_bc = BoundarySpec::no_flux(grid.dim());
    transport_groups(grid, axes, &open_bc)
        .iter()
        .map(|(m, _)| m.iter().map(|&k| c[k]).sum::<f64>() * v)
        .collect()
}

/// Steady transport of species `z`; closed groups are fixed by their mass.
fn species_steady(
    grid: &MacroGrid,
    axes: &[AxisTensors],
    bc: &BoundarySpec,
    phi: &[f64],
    z: f64,
    masses: &[f64],
) -> Result<Vec<f64>> {
    let groups = transport_groups(grid, axes, bc);
    let solve = |pin: f64| -> Result<Vec<f64>> {
        let mut sys = BlockSystem::new(grid, 1);
        assemble_transport(&mut sys, grid, axes, bc, phi, z);
        for (members, anchored) in &groups {
            if !anchored {
                sys.pin(members[0], 0, pin);
            }
        }
        sys.solve()
    };
    let x0 = solve(0.0)?;
    if groups.iter().all(|(_, a)| *a) {
        return Ok(x0);
    }
    let x1 = solve(1.0)?;
    let mut c = x0.clone();
    let vol = grid.cell_volume();
    // groups are enumerated identically with or without Dirichlet faces
    for ((members, anchored), &mass) in groups.iter().zip(masses) {
        if *anchored {
            continue;
        }
        let m0: f64 = members.iter().map(|&k| x0[k]).sum::<f64>() * vol;
        let m1: f64 = members.iter().map(|&k| x1[k]).sum::<f64>() * vol;
        let a = (mass - m0) / (m1 - m0);
        for &k in members {
            c[k] = x0[k] + a * (x1[k] - x0[k]);
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macro_solver::{step_macro_pnp, StepMode};

    #[test]
    fn frozen_potential_gives_boltzmann() {
        let grid = MacroGrid::line(50, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.1);
        let phi: Vec<f64> = (0..50).map(|v| (3.0 * grid.center(v)[0]).sin()).collect();
        let s = MacroState::new(grid, vec![1.0; 50], vec![2.0; 50], phi.clone()).unwrap();
        let out = steady_transport(&s, &t, &BoundarySpec::no_flux(1)).unwrap();
        let kp = out.c_plus[0] * phi[0].exp();
        let km = out.c_minus[0] * (-phi[0]).exp();
        for v in 0..50 {
            assert!((out.c_plus[v] * phi[v].exp() / kp - 1.0).abs() < 1e-10);
            assert!((out.c_minus[v] * (-phi[v]).exp() / km - 1.0).abs() < 1e-10);
        }
        let (a, b) = out.totals();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_returns_immediately() {
        let grid = MacroGrid::line(10, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, -0.1, 0.2);
        let s = MacroState::uniform(grid, 1.1, 0.9, 0.0).unwrap();
        let out = steady_state(&s, &t, &BoundarySpec::no_flux(1), SteadyOptions::default()).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn reservoirs_give_linear_salt() {
        let grid = MacroGrid::line(20, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.2);
        let bc = BoundarySpec::no_flux(1)
            .with(0, Side::Low, FaceCondition::Dirichlet { c_plus: 2.0, c_minus: 2.0, phi: 0.0 })
            .with(0, Side::High, FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: 0.0 });
        let s = MacroState::uniform(grid.clone(), 1.0, 1.0, 0.0).unwrap();
        let out = steady_state(&s, &t, &bc, SteadyOptions::default()).unwrap();
        for v in 0..20 {
            let x = grid.center(v)[0];
            assert!((out.c_plus[v] - (2.0 - x)).abs() < 1e-8);
            assert!(out.phi[v].abs() < 1e-8);
        }
    }

    #[test]
    fn closed_charged_channel_satisfies_poisson() {
        let grid = MacroGrid::line(30, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, -0.1, 0.1);
        // neutral in total but not pointwise
        let cp: Vec<f64> = (0..30).map(|v| 1.2 + 0.1 * (v as f64 / 29.0 - 0.5)).collect();
        let s = MacroState::new(grid, cp, vec![1.0; 30], vec![0.0; 30]).unwrap();
        let bc = BoundarySpec::no_flux(1);
        let opts = SteadyOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let out = steady_state(&s, &t, &bc, opts).unwrap();
        let r = steady_residuals(&out, &t, &bc).unwrap();
        assert!(r.iter().all(|&x| x <= 1e-10), "{r:?}");
        // the result is a fixed point of the time stepper
        let next = step_macro_pnp(&out, &t, &bc, 1.0, StepMode::FullyImplicit).unwrap();
        for v in 0..30 {
            assert!((next.c_plus[v] - out.c_plus[v]).abs() < 1e-8);
        }
    }
}
