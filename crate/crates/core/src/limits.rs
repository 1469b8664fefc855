//! Reduced models of the upscaled system.
//!
//! * thin double layers: electroneutral bulk with the surface charge as a
//!   background charge, `rho = -rho_s / p`;
//! * membrane limit: macroscopic Poisson with `eps_bar^2 D_hat`;
//! * thin film: potential decoupled from the ions, `div(D_hat grad phi) = 0`;
//! * ambipolar diffusion of a binary electrolyte with arbitrary valences.
//!
//! The thin-double-layer model is written in total concentration
//! `C = c+ + c-` and charge `R = c+ - c-`, the variables in which bulk
//! neutrality reads `p R + rho_s = 0`. An applied current `I` (positive along
//! `+axis`) then fixes `C D grad phi = -I` at the face, the same convention as
//! [`crate::macro_solver`].

use crate::error::{Error, Result};
use crate::macro_solver::sg::BLOCKED;
use crate::macro_solver::{
    axis_tensors, faces, solve_elliptic, step_macro_pnp, AxisTensors, BlockSystem, BoundarySpec, EllipticBoundary,
    Face, FaceCondition, MacroGrid, MacroState, Side, StepMode,
};
use crate::tensors::EffectiveTensors;

/// One time level of the thin-double-layer model.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinDlFrame {
    pub time: f64,
    /// Total concentration `c+ + c-`.
    pub c: Vec<f64>,
    pub phi: Vec<f64>,
    /// Diffuse charge `c+ - c-`, identically `-rho_s / p`.
    pub rho: Vec<f64>,
}

/// Integrates the thin-double-layer system for `steps` steps of size `dt`.
///
/// `c0` is the total concentration `C`. Each step solves
/// `div(C D grad phi) = 0`, then advances
/// `p dC/dt = div(D grad C) - div((rho_s/p) D grad phi)` with implicit
/// diffusion. The first frame holds `c0` and its potential.
pub fn thin_dl_solve(
    grid: &MacroGrid,
    c0: &[f64],
    t: &EffectiveTensors,
    rho_s: &[f64],
    bc: &BoundarySpec,
    dt: f64,
    steps: usize,
) -> Result<Vec<ThinDlFrame>> {
    let n = grid.num_nodes();
    if c0.len() != n || rho_s.len() != n {
        return Err(Error::InvalidArgument(format!("fields must have {n} entries")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !(t.p > 0.0) {
        return Err(Error::InvalidArgument("porosity must be positive".into()));
    }
    bc.check(grid)?;
    let axes = axis_tensors(t, grid.dim())?;
    check_depletion(c0)?;
    let rho: Vec<f64> = rho_s.iter().map(|r| -r / t.p).collect();

    let mut c = c0.to_vec();
    let mut phi = current_potential(grid, &axes, bc, &c)?;
    let mut frames = vec![ThinDlFrame {
        time: 0.0,
        c: c.clone(),
        phi: phi.clone(),
        rho: rho.clone(),
    }];
    for k in 1..=steps {
        c = salt_step(grid, &axes, bc, t.p, dt, &c, &phi, &rho)?;
        check_depletion(&c)?;
        phi = current_potential(grid, &axes, bc, &c)?;
        frames.push(ThinDlFrame {
            time: k as f64 * dt,
            c: c.clone(),
            phi: phi.clone(),
            rho: rho.clone(),
        });
    }
    Ok(frames)
}

fn check_depletion(c: &[f64]) -> Result<()> {
    match c.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        Some((node, &value)) => Err(Error::Depletion { node, value }),
        None => Ok(()),
    }
}

fn face_salt(bc: FaceCondition) -> Option<(f64, f64)> {
    match bc {
        FaceCondition::Dirichlet { c_plus, c_minus, phi } => Some((c_plus + c_minus, phi)),
        _ => None,
    }
}

/// Conductivity-weighted Laplace problem `div(C D grad phi) = 0`.
fn current_potential(grid: &MacroGrid, axes: &[AxisTensors], bc: &BoundarySpec, c: &[f64]) -> Result<Vec<f64>> {
    solve_elliptic(
        grid,
        |lo, hi, a| axes[a].d * 0.5 * (c[lo] + c[hi]),
        |node, a, side| match bc.get(a, side) {
            FaceCondition::Dirichlet { c_plus, c_minus, phi } => EllipticBoundary::Dirichlet {
                value: phi,
                k: axes[a].d * 0.5 * (c[node] + c_plus + c_minus),
            },
            FaceCondition::NoFlux => EllipticBoundary::Flux(0.0),
            FaceCondition::AppliedCurrent { current } => {
                if axes[a].d > BLOCKED {
                    EllipticBoundary::Flux(-current)
                } else {
                    EllipticBoundary::Flux(0.0)
                }
            }
        },
        &vec![0.0; grid.num_nodes()],
        0.0,
    )
}

#[allow(clippy::too_many_arguments)]
fn salt_step(
    grid: &MacroGrid,
    axes: &[AxisTensors],
    bc: &BoundarySpec,
    p: f64,
    dt: f64,
    c: &[f64],
    phi: &[f64],
    rho: &[f64],
) -> Result<Vec<f64>> {
    let mut sys = BlockSystem::new(grid, 1);
    let mass = p / dt;
    for v in 0..grid.num_nodes() {
        sys.add(v, 0, v, 0, mass);
        sys.add_rhs(v, 0, mass * c[v]);
    }
    for face in faces(grid) {
        match face {
            Face::Interior { lo, hi, axis } => {
                let h = grid.spacing(axis);
                let d = axes[axis].d;
                // F = d (c_hi - c_lo)/h + rho_f d (phi_hi - phi_lo)/h
                let w = d / (h * h);
                let drift = 0.5 * (rho[lo] + rho[hi]) * d * (phi[hi] - phi[lo]) / (h * h);
                sys.add(lo, 0, lo, 0, w);
                sys.add(lo, 0, hi, 0, -w);
                sys.add(hi, 0, hi, 0, w);
                sys.add(hi, 0, lo, 0, -w);
                sys.add_rhs(lo, 0, drift);
                sys.add_rhs(hi, 0, -drift);
            }
            Face::Boundary { node, axis, side } => {
                let Some((c_b, phi_b)) = face_salt(bc.get(axis, side)) else {
                    continue;
                };
                let h = grid.spacing(axis);
                let d = axes[axis].d;
                let w = 2.0 * d / (h * h);
                let drift = rho[node] * w * (phi_b - phi[node]);
                sys.add(node, 0, node, 0, w);
                sys.add_rhs(node, 0, w * c_b + drift);
            }
        }
    }
    sys.solve()
}

/// Max-norm residual of `div(C D grad phi) = 0` as discretized by the solver.
pub fn thin_dl_current_residual(
    grid: &MacroGrid,
    t: &EffectiveTensors,
    bc: &BoundarySpec,
    frame: &ThinDlFrame,
) -> Result<f64> {
    let axes = axis_tensors(t, grid.dim())?;
    let (c, phi) = (&frame.c, &frame.phi);
    let mut r = vec![0.0; grid.num_nodes()];
    for face in faces(grid) {
        match face {
            Face::Interior { lo, hi, axis } => {
                let h = grid.spacing(axis);
                let f = axes[axis].d * 0.5 * (c[lo] + c[hi]) * (phi[hi] - phi[lo]) / h;
                r[lo] -= f / h;
                r[hi] += f / h;
            }
            Face::Boundary { node, axis, side } => {
                let h = grid.spacing(axis);
                let f = match bc.get(axis, side) {
                    FaceCondition::NoFlux => 0.0,
                    FaceCondition::AppliedCurrent { current } => {
                        if axes[axis].d > BLOCKED {
                            -current
                        } else {
                            0.0
                        }
                    }
                    FaceCondition::Dirichlet { c_plus, c_minus, phi: phi_b } => {
                        let k = axes[axis].d * 0.5 * (c[node] + c_plus + c_minus);
                        match side {
                            Side::High => k * (phi_b - phi[node]) / (0.5 * h),
                            Side::Low => k * (phi[node] - phi_b) / (0.5 * h),
                        }
                    }
                };
                r[node] += if side == Side::High { -f / h } else { f / h };
            }
        }
    }
    Ok(r.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// Relative tolerance for `D_hat = M_hat` in the membrane limit.
const EINSTEIN_TOL: f64 = 1e-10;

/// Tensors of the membrane limit: `M_hat = D_hat`, `eps_hat = eps_bar^2 D_hat`.
pub fn membrane_tensors(t: &EffectiveTensors, eps_bar: f64) -> Result<EffectiveTensors> {
    if !(eps_bar > 0.0 && eps_bar.is_finite()) {
        return Err(Error::InvalidArgument("eps_bar must be positive".into()));
    }
    let scale = t.d_hat.amax().max(f64::MIN_POSITIVE);
    if (&t.m_hat - &t.d_hat).amax() > EINSTEIN_TOL * scale {
        return Err(Error::InvalidArgument(
            "membrane limit needs insulating tensors (M_hat = D_hat)".into(),
        ));
    }
    let mut out = t.clone();
    out.m_hat = t.d_hat.clone();
    out.eps_hat = &t.d_hat * (eps_bar * eps_bar);
    Ok(out)
}

/// One step of the membrane-limit system in macroscopic variables.
pub fn membrane_step(
    state: &MacroState,
    t: &EffectiveTensors,
    eps_bar: f64,
    bc: &BoundarySpec,
    dt: f64,
    mode: StepMode,
) -> Result<MacroState> {
    step_macro_pnp(state, &membrane_tensors(t, eps_bar)?, bc, dt, mode)
}

/// Potential of the thin-film limit, `div(D_hat grad phi) = 0`.
///
/// Faces are Dirichlet (the reservoir `phi`) or insulating; every node group
/// coupled by `D_hat` must touch a Dirichlet face.
pub fn thin_film_potential(grid: &MacroGrid, t: &EffectiveTensors, bc: &BoundarySpec) -> Result<Vec<f64>> {
    bc.check(grid)?;
    let axes = axis_tensors(t, grid.dim())?;
    if bc
        .faces
        .iter()
        .flatten()
        .any(|f| matches!(f, FaceCondition::AppliedCurrent { .. }))
    {
        return Err(Error::InvalidArgument(
            "thin-film potential takes Dirichlet or no-flux faces".into(),
        ));
    }
    // every group must be anchored, otherwise the potential is not unique
    let n = grid.num_nodes();
    let mut seen = vec![false; n];
    for seed in 0..n {
        if seen[seed] {
            continue;
        }
        seen[seed] = true;
        let mut stack = vec![seed];
        let mut anchored = false;
        while let Some(v) = stack.pop() {
            for a in (0..grid.dim()).filter(|&a| axes[a].d > BLOCKED) {
                for side in [Side::Low, Side::High] {
                    match grid.neighbor(v, a, side) {
                        Some(u) if !seen[u] => {
                            seen[u] = true;
                            stack.push(u);
                        }
                        Some(_) => {}
                        None => anchored |= matches!(bc.get(a, side), FaceCondition::Dirichlet { .. }),
                    }
                }
            }
        }
        if !anchored {
            return Err(Error::InvalidArgument(format!(
                "potential is not unique: node {seed} is not connected to a Dirichlet face"
            )));
        }
    }
    solve_elliptic(
        grid,
        |_, _, a| axes[a].d,
        |_, a, side| match bc.get(a, side) {
            FaceCondition::Dirichlet { phi, .. } => EllipticBoundary::Dirichlet { value: phi, k: axes[a].d },
            _ => EllipticBoundary::Flux(0.0),
        },
        &vec![0.0; n],
        0.0,
    )
}

/// Ion step in a frozen potential such as the thin-film field.
pub fn frozen_field_step(
    state: &MacroState,
    t: &EffectiveTensors,
    bc: &BoundarySpec,
    phi: &[f64],
    dt: f64,
) -> Result<MacroState> {
    if phi.len() != state.grid.num_nodes() {
        return Err(Error::InvalidArgument("potential length differs from node count".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    bc.check(&state.grid)?;
    let axes = axis_tensors(t, state.grid.dim())?;
    let cp = crate::macro_solver::transport_solve(&state.grid, &axes, bc, t.p, dt, &state.c_plus, phi, 1.0)?;
    let cm = crate::macro_solver::transport_solve(&state.grid, &axes, bc, t.p, dt, &state.c_minus, phi, -1.0)?;
    let mut out = MacroState::new(state.grid.clone(), cp, cm, phi.to_vec())?;
    out.time = state.time + dt;
    Ok(out)
}

/// Coefficients of the ambipolar diffusion equation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AmbipolarCoefficients {
    pub d_bar: f64,
    pub z_bar: f64,
    pub z_plus: f64,
    pub z_minus: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    pub kt: f64,
}

/// `D_bar = (z+ M+ D- + z- M- D+)/(z+ M+ + z- M-)` and
/// `z_bar = 2 z+ z- M+ M- kT / (z+ D- M+ + z- D+ M-)`.
///
/// ```
/// use pnph::limits::ambipolar_coefficients;
/// let k = ambipolar_coefficients(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
/// assert!((k.d_bar - 1.0).abs() < 1e-15);
/// assert!((k.z_bar - 4.0 / 3.0).abs() < 1e-15);
/// ```
pub fn ambipolar_coefficients(
    z_plus: f64,
    z_minus: f64,
    d_plus: f64,
    d_minus: f64,
    m_plus: f64,
    m_minus: f64,
    kt: f64,
) -> Result<AmbipolarCoefficients> {
    for (name, v) in [
        ("z+", z_plus),
        ("z-", z_minus),
        ("D+", d_plus),
        ("D-", d_minus),
        ("M+", m_plus),
        ("M-", m_minus),
        ("kT", kt),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
    }
    let den_d = z_plus * m_plus + z_minus * m_minus;
    let den_z = z_plus * d_minus * m_plus + z_minus * d_plus * m_minus;
    if den_d == 0.0 || den_z == 0.0 {
        return Err(Error::InvalidArgument("ambipolar denominator vanishes".into()));
    }
    Ok(AmbipolarCoefficients {
        d_bar: (z_plus * m_plus * d_minus + z_minus * m_minus * d_plus) / den_d,
        z_bar: 2.0 * z_plus * z_minus * m_plus * m_minus * kt / den_z,
        z_plus,
        z_minus,
        d_plus,
        d_minus,
        m_plus,
        m_minus,
        kt,
    })
}

/// Boundary of the scalar ambipolar problem.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaltBoundary {
    Value(f64),
    NoFlux,
}

/// One implicit step of the ambipolar diffusion equation.
///
/// The equation is divided by `p` before discretizing, so for straight
/// channels (`D_hat = diag(p, 0)`) the update does not depend on `p` at all.
/// `rho_s` and `phi_tilde` enter explicitly; their terms carry no flux
/// through boundary faces.
#[allow(clippy::too_many_arguments)]
pub fn ambipolar_step(
    grid: &MacroGrid,
    c: &[f64],
    k: &AmbipolarCoefficients,
    t: &EffectiveTensors,
    rho_s: &[f64],
    phi_tilde: &[f64],
    bc: &[[SaltBoundary; 2]],
    dt: f64,
    e: f64,
) -> Result<Vec<f64>> {
    let n = grid.num_nodes();
    if c.len() != n || rho_s.len() != n || phi_tilde.len() != n {
        return Err(Error::InvalidArgument(format!("fields must have {n} entries")));
    }
    if bc.len() != grid.dim() {
        return Err(Error::InvalidArgument("one boundary pair per axis".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) || !(e > 0.0) || !(t.p > 0.0) {
        return Err(Error::InvalidArgument("dt, e and p must be positive".into()));
    }
    let axes = axis_tensors(t, grid.dim())?;
    let dp: Vec<f64> = axes.iter().map(|a| a.d / t.p).collect();
    let g_phi = k.z_bar / e;
    let g_rho = k.d_plus * k.z_bar / (k.kt * e * k.z_plus * k.m_plus);
    let mut sys = BlockSystem::new(grid, 1);
    for v in 0..n {
        sys.add(v, 0, v, 0, 1.0 / dt);
        sys.add_rhs(v, 0, c[v] / dt);
    }
    for face in faces(grid) {
        match face {
            Face::Interior { lo, hi, axis } => {
                let h2 = grid.spacing(axis).powi(2);
                let w = k.d_bar * dp[axis] / h2;
                sys.add(lo, 0, lo, 0, w);
                sys.add(lo, 0, hi, 0, -w);
                sys.add(hi, 0, hi, 0, w);
                sys.add(hi, 0, lo, 0, -w);
                // explicit face flux of -(z_bar/e) rho_s D grad phi - g_rho D grad rho_s
                let rho_f = 0.5 * (rho_s[lo] + rho_s[hi]);
                let f = -dp[axis] / h2
                    * (g_phi * rho_f * (phi_tilde[hi] - phi_tilde[lo]) + g_rho * (rho_s[hi] - rho_s[lo]));
                sys.add_rhs(lo, 0, f);
                sys.add_rhs(hi, 0, -f);
            }
            Face::Boundary { node, axis, side } => {
                if let SaltBoundary::Value(cb) = bc[axis][side as usize] {
                    let w = 2.0 * k.d_bar * dp[axis] / grid.spacing(axis).powi(2);
                    sys.add(node, 0, node, 0, w);
                    sys.add_rhs(node, 0, w * cb);
                }
            }
        }
    }
    sys.solve()
}

/// Ambipolar salt from species densities: `c = z+ C+ + z- C- + rho_s/(p e)`.
pub fn ambipolar_salt(c_plus: f64, c_minus: f64, rho_s: f64, p: f64, z_plus: f64, z_minus: f64, e: f64) -> f64 {
    z_plus * c_plus + z_minus * c_minus + rho_s / (p * e)
}

/// Species densities from the ambipolar salt under quasi-neutrality
/// `p e (z+ C+ - z- C-) + rho_s = 0`.
pub fn ambipolar_species(c: f64, rho_s: f64, p: f64, z_plus: f64, z_minus: f64, e: f64) -> Result<(f64, f64)> {
    let q = rho_s / (p * e);
    let c_plus = (c - 2.0 * q) / (2.0 * z_plus);
    let c_minus = c / (2.0 * z_minus);
    if c_plus < 0.0 || c_minus < 0.0 {
        return Err(Error::NegativeConcentration {
            node: 0,
            value: c_plus.min(c_minus),
        });
    }
    Ok((c_plus, c_minus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macro_solver::{steady_state, SteadyOptions};

    fn current_bc(i: f64) -> BoundarySpec {
        BoundarySpec::uniform(1, FaceCondition::AppliedCurrent { current: i })
    }

    #[test]
    fn thin_dl_constant_salt_gives_linear_potential() {
        let grid = MacroGrid::line(20, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.1);
        let c0 = vec![2.0; 20];
        let frames = thin_dl_solve(&grid, &c0, &t, &[0.0; 20], &current_bc(0.4), 0.01, 3).unwrap();
        // C D phi' = -I with D = p
        let slope = -0.4 / (2.0 * 0.5);
        for f in &frames {
            for v in 1..20 {
                assert!((f.phi[v] - f.phi[v - 1] - slope / 20.0).abs() < 1e-12);
            }
            assert!(f.c.iter().all(|&c| (c - 2.0).abs() < 1e-12));
        }
    }

    #[test]
    fn thin_dl_conserves_salt_and_reports_rho() {
        let grid = MacroGrid::line(25, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.4, 0.0, 0.1);
        let rho_s: Vec<f64> = (0..25).map(|v| -0.1 - 0.002 * v as f64).collect();
        let c0: Vec<f64> = (0..25).map(|v| 1.0 + 0.3 * (v as f64 * 0.4).sin()).collect();
        let bc = BoundarySpec::no_flux(1);
        let frames = thin_dl_solve(&grid, &c0, &t, &rho_s, &bc, 0.005, 10).unwrap();
        let m0: f64 = c0.iter().sum();
        for f in &frames {
            assert!((f.c.iter().sum::<f64>() - m0).abs() < 1e-12 * m0);
            for v in 0..25 {
                assert_eq!(f.rho[v], -rho_s[v] / 0.4);
            }
            assert!(thin_dl_current_residual(&grid, &t, &bc, f).unwrap() < 1e-10);
        }
    }

    #[test]
    fn thin_dl_depletion_is_an_error() {
        let grid = MacroGrid::line(40, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.1);
        let bc = BoundarySpec::uniform(1, FaceCondition::AppliedCurrent { current: -50.0 })
            .with(0, Side::Low, FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: 0.0 });
        let rho_s = vec![-0.5; 40];
        let err = thin_dl_solve(&grid, &[1.0; 40], &t, &rho_s, &bc, 0.01, 400).unwrap_err();
        assert!(matches!(err, Error::Depletion { .. }), "{err}");
    }

    #[test]
    fn membrane_step_is_macro_step_with_rescaled_permittivity() {
        let grid = MacroGrid::line(16, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, -0.1, 0.3);
        let cp: Vec<f64> = (0..16).map(|v| 1.2 + 0.01 * v as f64).collect();
        let cm: Vec<f64> = cp.iter().map(|c| c - 0.2 + 0.001).collect();
        let s = MacroState::new(grid, cp, cm, vec![0.0; 16]).unwrap();
        let bc = BoundarySpec::no_flux(1).with(
            0,
            Side::High,
            FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: 0.0 },
        );
        let a = membrane_step(&s, &t, 0.05, &bc, 1e-3, StepMode::FullyImplicit).unwrap();
        let b = step_macro_pnp(
            &s,
            &EffectiveTensors::straight_channel(2, 0.5, -0.1, 0.05),
            &bc,
            1e-3,
            StepMode::FullyImplicit,
        )
        .unwrap();
        assert_eq!(a, b);
        let mut bad = t.clone();
        bad.m_hat[(0, 0)] *= 1.1;
        assert!(membrane_tensors(&bad, 0.1).is_err());
    }

    #[test]
    fn membrane_donnan_enrichment() {
        let grid = MacroGrid::line(40, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, -0.4, 0.1);
        let res = FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: 0.0 };
        let bc = BoundarySpec::uniform(1, res);
        let tm = membrane_tensors(&t, 0.05).unwrap();
        let s = MacroState::uniform(grid, 1.0, 1.0, 0.0).unwrap();
        let out = steady_state(&s, &tm, &bc, SteadyOptions::default()).unwrap();
        assert!(out.c_plus[20] > out.c_minus[20]);
        assert!(out.phi[20] < 0.0);
    }

    #[test]
    fn thin_film_potential_is_linear_and_rotates() {
        let grid = MacroGrid::line(10, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.1);
        let bc = BoundarySpec::no_flux(1)
            .with(0, Side::Low, FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: 0.0 })
            .with(0, Side::High, FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi: 1.0 });
        let phi = thin_film_potential(&grid, &t, &bc).unwrap();
        for (v, x) in phi.iter().enumerate() {
            assert!((x - grid.center(v)[0]).abs() < 1e-13);
        }
        assert!(thin_film_potential(&grid, &t, &BoundarySpec::no_flux(1)).is_err());

        // rotating D_hat by 90 degrees transposes the solution
        let g2 = MacroGrid::new(vec![6, 6], vec![1.0, 1.0]).unwrap();
        let d = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.7, 0.2]));
        let dr = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, 0.7]));
        let ta = EffectiveTensors::from_matrices(d.clone(), d, None, 0.5, 0.0, 0.1).unwrap();
        let tb = EffectiveTensors::from_matrices(dr.clone(), dr, None, 0.5, 0.0, 0.1).unwrap();
        let dir = |phi| FaceCondition::Dirichlet { c_plus: 1.0, c_minus: 1.0, phi };
        let bca = BoundarySpec::no_flux(2).with(0, Side::Low, dir(0.0)).with(1, Side::High, dir(1.0));
        let bcb = BoundarySpec::no_flux(2).with(1, Side::Low, dir(0.0)).with(0, Side::High, dir(1.0));
        let pa = thin_film_potential(&g2, &ta, &bca).unwrap();
        let pb = thin_film_potential(&g2, &tb, &bcb).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!((pa[i + 6 * j] - pb[j + 6 * i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ambipolar_coefficient_cases() {
        let k = ambipolar_coefficients(1.0, 1.0, 0.7, 0.7, 0.7, 0.7, 1.0).unwrap();
        assert!((k.d_bar - 0.7).abs() < 1e-15 && (k.z_bar - 1.0).abs() < 1e-15);
        assert!(ambipolar_coefficients(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ambipolar_straight_channel_is_independent_of_p() {
        let grid = MacroGrid::line(30, 1.0).unwrap();
        let k = ambipolar_coefficients(1.0, 1.0, 1.3, 0.8, 1.3, 0.8, 1.0).unwrap();
        let c: Vec<f64> = (0..30).map(|v| 1.0 + 0.2 * (v as f64 * 0.3).cos()).collect();
        let rho_s: Vec<f64> = (0..30).map(|v| -0.1 - 0.01 * v as f64).collect();
        let phi: Vec<f64> = (0..30).map(|v| 0.05 * v as f64).collect();
        let bc = [[SaltBoundary::Value(1.0), SaltBoundary::NoFlux]];
        let run = |p| {
            let t = EffectiveTensors::straight_channel(2, p, 0.0, 0.1);
            ambipolar_step(&grid, &c, &k, &t, &rho_s, &phi, &bc, 0.01, 1.0).unwrap()
        };
        assert_eq!(run(0.3), run(0.7));
    }

    #[test]
    fn ambipolar_matches_neutral_macro_diffusion() {
        let grid = MacroGrid::line(30, 1.0).unwrap();
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.5);
        let c: Vec<f64> = (0..30).map(|v| 1.0 + 0.2 * (v as f64 * 0.3).cos()).collect();
        let k = ambipolar_coefficients(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let bc = [[SaltBoundary::NoFlux; 2]];
        let a = ambipolar_step(&grid, &c, &k, &t, &[0.0; 30], &[0.0; 30], &bc, 0.01, 1.0).unwrap();
        let s = MacroState::new(grid, c.clone(), c, vec![0.0; 30]).unwrap();
        let b = step_macro_pnp(&s, &t, &BoundarySpec::no_flux(1), 0.01, StepMode::SemiImplicit).unwrap();
        for v in 0..30 {
            assert!((a[v] - b.c_plus[v]).abs() < 1e-13);
        }
    }

    #[test]
    fn quasi_neutral_conversion_round_trip() {
        let (cp, cm) = ambipolar_species(2.0, -0.3, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert!(cp > cm);
        assert!((0.5 * (cp - cm) + -0.3).abs() < 1e-15);
        assert!((ambipolar_salt(cp, cm, -0.3, 0.5, 1.0, 1.0, 1.0) - 2.0).abs() < 1e-15);
    }
}
