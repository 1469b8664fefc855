use super::sg::{face_flux_jacobian, face_weights, symmetric_bernoulli, AxisCoeff, BLOCKED};
use super::{
    axis_tensors, charge_scale, faces, from_salt_charge, poisson_with_source, to_salt_charge, AxisTensors, BlockSystem,
    BoundarySpec, Face, FaceCondition, MacroGrid, MacroState, Side,
};
use crate::error::{Error, Result};
use crate::tensors::EffectiveTensors;

/// Time discretization of [`step_macro_pnp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Potential from the current charge, then one linear implicit solve per
    /// species. Subject to the dielectric relaxation bound on `dt`.
    SemiImplicit,
    /// Newton on the coupled backward-Euler system.
    #[default]
    FullyImplicit,
}

const NEWTON_MAX: usize = 40;
const NEWTON_TOL: f64 = 1e-11;

/// Advances the macroscopic system by one backward-Euler step of size `dt`.
///
/// The returned state carries the potential consistent with its own charge.
pub fn step_macro_pnp(
    state: &MacroState,
    t: &EffectiveTensors,
    bc: &BoundarySpec,
    dt: f64,
    mode: StepMode,
) -> Result<MacroState> {
    let axes = prepare(state, t, bc, dt)?;
    let grid = &state.grid;
    let (c_plus, c_minus) = match mode {
        StepMode::SemiImplicit => {
            check_step_bound(&axes, &state.c_plus, &state.c_minus, dt)?;
            let phi = poisson_with_source(
                grid,
                &axes,
                bc,
                &charge_source(t, &state.c_plus, &state.c_minus),
                charge_scale(t, &state.c_plus, &state.c_minus),
            )?;
            let cp = transport_solve(grid, &axes, bc, t.p, dt, &state.c_plus, &phi, 1.0)?;
            let cm = transport_solve(grid, &axes, bc, t.p, dt, &state.c_minus, &phi, -1.0)?;
            (cp, cm)
        }
        StepMode::FullyImplicit => newton_step(state, t, &axes, bc, dt)?,
    };
    finish(grid, t, &axes, bc, c_plus, c_minus, state.time + dt)
}

/// Semi-implicit step written in salt `c` and charge `rho` variables.
///
/// The face fluxes are
/// `F_c = (D/h)[A(psi)(c_j - c_i) + psi/2 (rho_j + rho_i)]` and
/// `F_rho = (D/h)[A(psi)(rho_j - rho_i) + psi/2 (c_j + c_i)]`
/// with `A(psi) = (psi/2) coth(psi/2)`, and Poisson reads
/// `-div(eps_hat grad phi) = 2 p rho + rho_s`.
pub fn step_salt_charge(state: &MacroState, t: &EffectiveTensors, bc: &BoundarySpec, dt: f64) -> Result<MacroState> {
    let axes = prepare(state, t, bc, dt)?;
    check_step_bound(&axes, &state.c_plus, &state.c_minus, dt)?;
    let grid = &state.grid;
    let (c, rho) = to_salt_charge(state);
    let f: Vec<f64> = rho.iter().map(|r| 2.0 * t.p * r + t.rho_s).collect();
    let phi = poisson_with_source(grid, &axes, bc, &f, charge_scale(t, &state.c_plus, &state.c_minus))?;

    let mut sys = BlockSystem::new(grid, 2);
    let mass = t.p / dt;
    for v in 0..grid.num_nodes() {
        sys.add(v, 0, v, 0, mass);
        sys.add(v, 1, v, 1, mass);
        sys.add_rhs(v, 0, mass * c[v]);
        sys.add_rhs(v, 1, mass * rho[v]);
    }
    for face in faces(grid) {
        match face {
            Face::Interior { lo, hi, axis } => {
                let h = grid.spacing(axis);
                let (ki, kj) = pair_weights(axes[axis].transport(), h, phi[hi] - phi[lo]);
                for r in 0..2 {
                    for s in 0..2 {
                        sys.add(lo, r, hi, s, -kj[r][s] / h);
                        sys.add(lo, r, lo, s, ki[r][s] / h);
                        sys.add(hi, r, hi, s, kj[r][s] / h);
                        sys.add(hi, r, lo, s, -ki[r][s] / h);
                    }
                }
            }
            Face::Boundary { node, axis, side } => {
                let h = grid.spacing(axis);
                let k = axes[axis].transport();
                // F = alpha x_node + beta
                let (alpha, beta) = match bc.get(axis, side) {
                    FaceCondition::NoFlux => ([[0.0; 2]; 2], [0.0; 2]),
                    FaceCondition::AppliedCurrent { current } => ([[0.0; 2]; 2], [0.0, -0.5 * current]),
                    FaceCondition::Dirichlet {
                        c_plus,
                        c_minus,
                        phi: phi_b,
                    } => {
                        let xb = [0.5 * (c_plus + c_minus), 0.5 * (c_plus - c_minus)];
                        match side {
                            Side::High => {
                                let (ki, kb) = pair_weights(k, 0.5 * h, phi_b - phi[node]);
                                (neg(ki), apply(kb, xb))
                            }
                            Side::Low => {
                                let (kb, ki) = pair_weights(k, 0.5 * h, phi[node] - phi_b);
                                let b = apply(kb, xb);
                                (ki, [-b[0], -b[1]])
                            }
                        }
                    }
                };
                // high faces enter with -F/h, low faces with +F/h
                let s = if side == Side::High { -1.0 / h } else { 1.0 / h };
                for r in 0..2 {
                    for q in 0..2 {
                        sys.add(node, r, node, q, s * alpha[r][q]);
                    }
                    sys.add_rhs(node, r, -s * beta[r]);
                }
            }
        }
    }
    let x = sys.solve()?;
    let c_new: Vec<f64> = (0..grid.num_nodes()).map(|v| x[2 * v]).collect();
    let rho_new: Vec<f64> = (0..grid.num_nodes()).map(|v| x[2 * v + 1]).collect();
    let s = from_salt_charge(grid.clone(), &c_new, &rho_new, vec![0.0; c_new.len()], 0.0)?;
    finish(grid, t, &axes, bc, s.c_plus, s.c_minus, state.time + dt)
}

fn prepare(state: &MacroState, t: &EffectiveTensors, bc: &BoundarySpec, dt: f64) -> Result<Vec<AxisTensors>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !(t.p > 0.0) {
        return Err(Error::InvalidArgument("porosity must be positive".into()));
    }
    bc.check(&state.grid)?;
    axis_tensors(t, state.grid.dim())
}

fn charge_source(t: &EffectiveTensors, c_plus: &[f64], c_minus: &[f64]) -> Vec<f64> {
    c_plus
        .iter()
        .zip(c_minus)
        .map(|(a, b)| t.p * (a - b) + t.rho_s)
        .collect()
}

/// Dielectric relaxation bound `dt <= 2 min_a(eps_a / M_a) / max(c+ + c-)`.
pub(crate) fn step_bound(axes: &[AxisTensors], c_plus: &[f64], c_minus: &[f64]) -> f64 {
    let ratio = axes
        .iter()
        .filter(|a| a.m > BLOCKED)
        .map(|a| a.e / a.m)
        .fold(f64::INFINITY, f64::min);
    let c_max = c_plus
        .iter()
        .zip(c_minus)
        .map(|(a, b)| a + b)
        .fold(0.0, f64::max);
    if c_max <= 0.0 {
        f64::INFINITY
    } else {
        2.0 * ratio / c_max
    }
}

fn check_step_bound(axes: &[AxisTensors], c_plus: &[f64], c_minus: &[f64], dt: f64) -> Result<()> {
    let bound = step_bound(axes, c_plus, c_minus);
    if dt > bound {
        return Err(Error::StepBound { dt, bound });
    }
    Ok(())
}

fn finish(
    grid: &MacroGrid,
    t: &EffectiveTensors,
    axes: &[AxisTensors],
    bc: &BoundarySpec,
    mut c_plus: Vec<f64>,
    mut c_minus: Vec<f64>,
    time: f64,
) -> Result<MacroState> {
    guard_positive(&mut c_plus)?;
    guard_positive(&mut c_minus)?;
    let scale = charge_scale(t, &c_plus, &c_minus);
    let phi = poisson_with_source(grid, axes, bc, &charge_source(t, &c_plus, &c_minus), scale)?;
    let mut s = MacroState::new(grid.clone(), c_plus, c_minus, phi)?;
    s.time = time;
    Ok(s)
}

/// Rejects negative concentrations beyond round-off and clamps the rest.
fn guard_positive(c: &mut [f64]) -> Result<()> {
    let scale = 1.0 + c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for (k, x) in c.iter_mut().enumerate() {
        if !x.is_finite() || *x < -1e-12 * scale {
            return Err(Error::NegativeConcentration { node: k, value: *x });
        }
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    Ok(())
}

/// Boundary flux of species `z` as `J = alpha c_node + beta`.
fn boundary_flux(cond: FaceCondition, k: AxisCoeff, z: f64, h: f64, side: Side, phi_node: f64) -> (f64, f64) {
    match cond {
        FaceCondition::NoFlux => (0.0, 0.0),
        FaceCondition::AppliedCurrent { current } => (0.0, -0.5 * z * current),
        FaceCondition::Dirichlet { c_plus, c_minus, phi } => {
            let cb = if z > 0.0 { c_plus } else { c_minus };
            match side {
                Side::High => {
                    let (ai, ab) = face_weights(k, z, 0.5 * h, phi - phi_node);
                    (-ai, ab * cb)
                }
                Side::Low => {
                    let (ab, ai) = face_weights(k, z, 0.5 * h, phi_node - phi);
                    (ai, -ab * cb)
                }
            }
        }
    }
}

/// Implicit transport of one species with a frozen potential.
pub(crate) fn transport_solve(
    grid: &MacroGrid,
    axes: &[AxisTensors],
    bc: &BoundarySpec,
    p: f64,
    dt: f64,
    c_old: &[f64],
    phi: &[f64],
    z: f64,
) -> Result<Vec<f64>> {
    let mut sys = BlockSystem::new(grid, 1);
    let mass = p / dt;
    for v in 0..grid.num_nodes() {
        sys.add(v, 0, v, 0, mass);
        sys.add_rhs(v, 0, mass * c_old[v]);
    }
    assemble_transport(&mut sys, grid, axes, bc, phi, z);
    sys.solve()
}

/// Adds `-div J` for species `z` to the rows of a scalar system.
pub(crate) fn assemble_transport(
    sys: &mut BlockSystem,
    grid: &MacroGrid,
    axes: &[AxisTensors],
    bc: &BoundarySpec,
    phi: &[f64],
    z: f64,
) {
    for face in faces(grid) {
        match face {
            Face::Interior { lo, hi, axis } => {
                let h = grid.spacing(axis);
                let (a_lo, a_hi) = face_weights(axes[axis].transport(), z, h, phi[hi] - phi[lo]);
                sys.add(lo, 0, hi, 0, -a_hi / h);
                sys.add(lo, 0, lo, 0, a_lo / h);
                sys.add(hi, 0, hi, 0, a_hi / h);
                sys.add(hi, 0, lo, 0, -a_lo / h);
            }
            Face::Boundary { node, axis, side } => {
                let h = grid.spacing(axis);
                let (alpha, beta) = boundary_flux(bc.get(axis, side), axes[axis].transport(), z, h, side, phi[node]);
                let s = if side == Side::High { -1.0 / h } else { 1.0 / h };
                sys.add(node, 0, node, 0, s * alpha);
                sys.add_rhs(node, 0, -s * beta);
            }
        }
    }
}

/// Salt/charge face weights: `F = K_j x_j - K_i x_i` with `x = (c, rho)`.
fn pair_weights(k: AxisCoeff, h: f64, dphi: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    if k.is_blocked() {
        return ([[0.0; 2]; 2], [[0.0; 2]; 2]);
    }
    if k.d > BLOCKED {
        let psi = k.m / k.d * dphi;
        let a = symmetric_bernoulli(psi);
        let g = k.d / h;
        let hp = 0.5 * psi;
        return ([[g * a, -g * hp], [-g * hp, g * a]], [[g * a, g * hp], [g * hp, g * a]]);
    }
    // pure drift: combine the upwinded species weights
    let (pi, pj) = face_weights(k, 1.0, h, dphi);
    let (mi, mj) = face_weights(k, -1.0, h, dphi);
    let sum_j = 0.5 * (pj + mj);
    let dif_j = 0.5 * (pj - mj);
    let sum_i = 0.5 * (pi + mi);
    let dif_i = 0.5 * (pi - mi);
    ([[sum_i, dif_i], [dif_i, sum_i]], [[sum_j, dif_j], [dif_j, sum_j]])
}

fn neg(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]]
}

fn apply(m: [[f64; 2]; 2], x: [f64; 2]) -> [f64; 2] {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

/// Node groups coupled by the potential stencil, with a flag telling whether
/// the group touches a Dirichlet face.
pub(crate) fn potential_groups(grid: &MacroGrid, axes: &[AxisTensors], bc: &BoundarySpec) -> Vec<(Vec<usize>, bool)> {
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
                if axes[axis].e <= 0.0 {
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

fn newton_step(
    state: &MacroState,
    t: &EffectiveTensors,
    axes: &[AxisTensors],
    bc: &BoundarySpec,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = &state.grid;
    let n = grid.num_nodes();
    let groups = potential_groups(grid, axes, bc);
    let source = charge_source(t, &state.c_plus, &state.c_minus);
    for (members, anchored) in &groups {
        if *anchored {
            continue;
        }
        let sum: f64 = members.iter().map(|&v| source[v]).sum();
        let abs: f64 = members
            .iter()
            .map(|&v| t.p * (state.c_plus[v] + state.c_minus[v]) + t.rho_s.abs())
            .sum();
        if sum.abs() > 1e-8 * abs {
            return Err(Error::Incompatible {
                mean: sum / members.len() as f64,
            });
        }
    }
    let mut cp = state.c_plus.clone();
    let mut cm = state.c_minus.clone();
    let scale = charge_scale(t, &state.c_plus, &state.c_minus);
    let mut phi = poisson_with_source(grid, axes, bc, &source, scale)?;
    let mass = t.p / dt;
    let mut residual = f64::INFINITY;
    for it in 0..NEWTON_MAX {
        let mut sys = BlockSystem::new(grid, 3);
        let mut res = vec![0.0; 3 * n];
        for v in 0..n {
            res[3 * v] += mass * (cp[v] - state.c_plus[v]);
            res[3 * v + 1] += mass * (cm[v] - state.c_minus[v]);
            res[3 * v + 2] -= t.p * (cp[v] - cm[v]) + t.rho_s;
            sys.add(v, 0, v, 0, mass);
            sys.add(v, 1, v, 1, mass);
            sys.add(v, 2, v, 0, -t.p);
            sys.add(v, 2, v, 1, t.p);
        }
        for face in faces(grid) {
            match face {
                Face::Interior { lo, hi, axis } => {
                    let h = grid.spacing(axis);
                    let k = axes[axis].transport();
                    for (comp, z, c) in [(0usize, 1.0, &cp), (1usize, -1.0, &cm)] {
                        let (j, di, dj, dpi, dpj) = face_flux_jacobian(k, z, h, c[lo], c[hi], phi[hi] - phi[lo]);
                        // row lo: -J/h, row hi: +J/h
                        for (row, s) in [(lo, -1.0 / h), (hi, 1.0 / h)] {
                            res[3 * row + comp] += s * j;
                            sys.add(row, comp, lo, comp, s * di);
                            sys.add(row, comp, hi, comp, s * dj);
                            sys.add(row, comp, lo, 2, s * dpi);
                            sys.add(row, comp, hi, 2, s * dpj);
                        }
                    }
                    let w = axes[axis].e / (h * h);
                    res[3 * lo + 2] += w * (phi[lo] - phi[hi]);
                    res[3 * hi + 2] += w * (phi[hi] - phi[lo]);
                    sys.add(lo, 2, lo, 2, w);
                    sys.add(lo, 2, hi, 2, -w);
                    sys.add(hi, 2, hi, 2, w);
                    sys.add(hi, 2, lo, 2, -w);
                }
                Face::Boundary { node, axis, side } => {
                    let h = grid.spacing(axis);
                    let k = axes[axis].transport();
                    let cond = bc.get(axis, side);
                    let s = if side == Side::High { -1.0 / h } else { 1.0 / h };
                    match cond {
                        FaceCondition::NoFlux => {}
                        FaceCondition::AppliedCurrent { current } => {
                            res[3 * node] += s * (-0.5 * current);
                            res[3 * node + 1] += s * (0.5 * current);
                        }
                        FaceCondition::Dirichlet { c_plus, c_minus, phi: phi_b } => {
                            for (comp, z, c, cb) in [(0usize, 1.0, &cp, c_plus), (1usize, -1.0, &cm, c_minus)] {
                                // J and its derivatives w.r.t. the node values
                                let (j, dc, dp) = match side {
                                    Side::High => {
                                        let (j, di, _, dpi, _) =
                                            face_flux_jacobian(k, z, 0.5 * h, c[node], cb, phi_b - phi[node]);
                                        (j, di, dpi)
                                    }
                                    Side::Low => {
                                        let (j, _, dj, _, dpj) =
                                            face_flux_jacobian(k, z, 0.5 * h, cb, c[node], phi[node] - phi_b);
                                        (j, dj, dpj)
                                    }
                                };
                                res[3 * node + comp] += s * j;
                                sys.add(node, comp, node, comp, s * dc);
                                sys.add(node, comp, node, 2, s * dp);
                            }
                            let w = 2.0 * axes[axis].e / (h * h);
                            res[3 * node + 2] += w * (phi[node] - phi_b);
                            sys.add(node, 2, node, 2, w);
                        }
                    }
                }
            }
        }
        residual = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        for v in 0..n {
            for comp in 0..3 {
                sys.add_rhs(v, comp, -res[3 * v + comp]);
            }
        }
        for (members, anchored) in &groups {
            if !anchored {
                sys.pin(members[0], 2, 0.0);
            }
        }
        let delta = sys.solve()?;
        // keep concentrations positive
        let mut lambda: f64 = 1.0;
        for v in 0..n {
            for (comp, c) in [(0, &cp), (1, &cm)] {
                let d = delta[3 * v + comp];
                if d < 0.0 && c[v] + d < 0.0 {
                    lambda = lambda.min(0.9 * c[v] / -d);
                }
            }
        }
        let mut dc_max: f64 = 0.0;
        let mut dphi_max: f64 = 0.0;
        for v in 0..n {
            cp[v] += lambda * delta[3 * v];
            cm[v] += lambda * delta[3 * v + 1];
            phi[v] += lambda * delta[3 * v + 2];
            dc_max = dc_max.max((lambda * delta[3 * v]).abs()).max((lambda * delta[3 * v + 1]).abs());
            dphi_max = dphi_max.max((lambda * delta[3 * v + 2]).abs());
        }
        let c_scale = 1.0 + cp.iter().chain(&cm).fold(0.0f64, |m, x| m.max(*x));
        let phi_scale = 1.0 + phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        log::trace!("newton {it}: residual {residual:e}, |dc| {dc_max:e}, |dphi| {dphi_max:e}");
        if lambda == 1.0 && dc_max <= NEWTON_TOL * c_scale && dphi_max <= NEWTON_TOL * phi_scale {
            return Ok((cp, cm));
        }
    }
    Err(Error::NotConverged {
        solver: "newton",
        iterations: NEWTON_MAX,
        residual,
    })
}
