//! Direct simulation of the microscopic system on a perforated 2D domain.
//!
//! The domain `[0, l1] x [0, l2]` is tiled by `n x n` copies of a reference
//! cell shrunk by `r = 1/n`. Ions live on pore voxels and see blocking walls;
//! the potential solves `-div(eps(x/r) grad phi) = c+ - c-` with
//! `eps = epsilon^2` in the pore and `alpha` in the solid. Each interface facet
//! carries the charge datum `r sigma`, entered as a source on its pore voxel.
//!
//! Time stepping is semi-implicit: potential from the current charge, then one
//! exponentially fitted implicit solve per species.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::cell_solver::{harmonic, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::ReferenceCell;
use crate::macro_solver::sg::{face_weights, AxisCoeff};
use crate::macro_solver::{
    faces, solve_elliptic, step_macro_pnp, BlockSystem, BoundarySpec, EllipticBoundary, Face, FaceCondition,
    MacroGrid, MacroState, Side, StepMode,
};
use crate::tensors::compute_effective_tensors;

/// Default bound on the number of tiles per side.
pub const MAX_TILES: usize = 8;
/// Default bound on the total voxel count.
pub const VOXEL_CAP: usize = 1 << 20;

/// Interface facet of the tiled domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroFacet {
    pub voxel: usize,
    pub axis: usize,
    pub dir: i8,
    /// Neumann datum `r sigma`.
    pub datum: f64,
    /// Facet measure in domain units.
    pub area: f64,
}

/// Tiled phase mask with coefficients and interface data.
#[derive(Debug, Clone)]
pub struct MicroDomain {
    n: usize,
    r: f64,
    grid: MacroGrid,
    pore: Vec<bool>,
    epsilon: f64,
    alpha: f64,
    porosity: f64,
    facets: Vec<MicroFacet>,
    /// Integrated surface charge per voxel.
    surface: Vec<f64>,
    bc: BoundarySpec,
}

/// Builds the `n x n` tiling of `cell` with the default size limits.
pub fn build_perforated_domain(cell: &ReferenceCell, n: usize, outer_bc: BoundarySpec) -> Result<MicroDomain> {
    build_perforated_domain_with_limits(cell, n, outer_bc, MAX_TILES, VOXEL_CAP)
}

pub fn build_perforated_domain_with_limits(
    cell: &ReferenceCell,
    n: usize,
    outer_bc: BoundarySpec,
    max_tiles: usize,
    voxel_cap: usize,
) -> Result<MicroDomain> {
    if cell.dim() != 2 {
        return Err(Error::InvalidArgument("direct simulation is 2D only".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one tile".into()));
    }
    if n > max_tiles {
        return Err(Error::TooLarge {
            voxels: n * n * cell.num_voxels(),
            cap: max_tiles * max_tiles * cell.num_voxels(),
        });
    }
    let voxels = n * n * cell.num_voxels();
    if voxels > voxel_cap {
        return Err(Error::TooLarge { voxels, cap: voxel_cap });
    }
    let (m0, m1) = (cell.dims()[0], cell.dims()[1]);
    let grid = MacroGrid::new(vec![n * m0, n * m1], cell.lengths().to_vec())?;
    outer_bc.check(&grid)?;
    let r = 1.0 / n as f64;
    let node = |tile: (usize, usize), v: usize| {
        let (i, j) = (cell.coord(v, 0), cell.coord(v, 1));
        (tile.0 * m0 + i) + n * m0 * (tile.1 * m1 + j)
    };
    let mut pore = vec![false; voxels];
    let mut surface = vec![0.0; voxels];
    let mut facets = Vec::with_capacity(n * n * cell.facets().len());
    for tj in 0..n {
        for ti in 0..n {
            for v in 0..cell.num_voxels() {
                pore[node((ti, tj), v)] = cell.is_pore(v);
            }
            for f in cell.facets() {
                let g = node((ti, tj), f.voxel);
                let area = r * f.area;
                let datum = r * f.sigma;
                surface[g] += datum * area;
                facets.push(MicroFacet {
                    voxel: g,
                    axis: f.axis,
                    dir: f.dir,
                    datum,
                    area,
                });
            }
        }
    }
    Ok(MicroDomain {
        n,
        r,
        grid,
        pore,
        epsilon: cell.epsilon(),
        alpha: cell.alpha(),
        porosity: cell.porosity(),
        facets,
        surface,
        bc: outer_bc,
    })
}

impl MicroDomain {
    pub fn tiles(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.r
    }

    /// Voxel grid of the whole domain.
    pub fn grid(&self) -> &MacroGrid {
        &self.grid
    }

    pub fn is_pore(&self, v: usize) -> bool {
        self.pore[v]
    }

    pub fn facets(&self) -> &[MicroFacet] {
        &self.facets
    }

    pub fn porosity(&self) -> f64 {
        self.porosity
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.bc
    }

    /// Total interface charge `sum r sigma |facet|`.
    pub fn surface_charge(&self) -> f64 {
        self.surface.iter().sum()
    }

    fn coefficient(&self, v: usize) -> f64 {
        if self.pore[v] {
            self.epsilon * self.epsilon
        } else {
            self.alpha
        }
    }

    /// Voxels carrying a potential: all of them unless the solid is insulating.
    fn has_potential(&self, v: usize) -> bool {
        self.pore[v] || self.alpha > 0.0
    }
}

/// Ion densities on pore voxels (zero in the solid) and the potential.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub phi: Vec<f64>,
    pub time: f64,
}

impl MicroState {
    /// Samples `init(x, y) -> (c+, c-)` at pore voxel centers and solves for
    /// the consistent potential.
    pub fn from_fn(domain: &MicroDomain, init: impl Fn(f64, f64) -> (f64, f64)) -> Result<Self> {
        let nv = domain.grid.num_nodes();
        let mut c_plus = vec![0.0; nv];
        let mut c_minus = vec![0.0; nv];
        for v in (0..nv).filter(|&v| domain.pore[v]) {
            let x = domain.grid.center(v);
            let (a, b) = init(x[0], x[1]);
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::NegativeConcentration { node: v, value: a.min(b) });
            }
            c_plus[v] = a;
            c_minus[v] = b;
        }
        let phi = micro_poisson(domain, &c_plus, &c_minus)?;
        Ok(Self {
            c_plus,
            c_minus,
            phi,
            time: 0.0,
        })
    }

    /// Species masses `sum c V` over the pore.
    pub fn totals(&self, domain: &MicroDomain) -> (f64, f64) {
        let v = domain.grid.cell_volume();
        (
            self.c_plus.iter().sum::<f64>() * v,
            self.c_minus.iter().sum::<f64>() * v,
        )
    }
}

fn micro_poisson(domain: &MicroDomain, c_plus: &[f64], c_minus: &[f64]) -> Result<Vec<f64>> {
    let vol = domain.grid.cell_volume();
    let f: Vec<f64> = (0..c_plus.len())
        .map(|v| c_plus[v] - c_minus[v] + domain.surface[v] / vol)
        .collect();
    let scale: f64 = (0..c_plus.len())
        .map(|v| c_plus[v] + c_minus[v] + domain.surface[v].abs() / vol)
        .sum();
    let mut phi = solve_elliptic(
        &domain.grid,
        |lo, hi, _| harmonic(domain.coefficient(lo), domain.coefficient(hi)),
        |node, a, side| match domain.bc.get(a, side) {
            FaceCondition::Dirichlet { phi, .. } => EllipticBoundary::Dirichlet {
                value: phi,
                k: domain.coefficient(node),
            },
            _ => EllipticBoundary::Flux(0.0),
        },
        &f,
        scale,
    )?;
    for (v, x) in phi.iter_mut().enumerate() {
        if !domain.has_potential(v) {
            *x = 0.0;
        }
    }
    Ok(phi)
}

/// Ratio of boundary voxels to pore boundary voxels on each outer face, so an
/// applied current density refers to the full face.
fn current_scale(domain: &MicroDomain, axis: usize, side: Side) -> f64 {
    let g = &domain.grid;
    let on_face: Vec<usize> = (0..g.num_nodes())
        .filter(|&v| g.neighbor(v, axis, side).is_none())
        .collect();
    let pores = on_face.iter().filter(|&&v| domain.pore[v]).count();
    if pores == 0 {
        0.0
    } else {
        on_face.len() as f64 / pores as f64
    }
}

fn species_solve(domain: &MicroDomain, c_old: &[f64], phi: &[f64], z: f64, dt: f64) -> Result<Vec<f64>> {
    let g = &domain.grid;
    let unit = AxisCoeff { d: 1.0, m: 1.0 };
    let mut sys = BlockSystem::new(g, 1);
    for v in 0..g.num_nodes() {
        if domain.pore[v] {
            sys.add(v, 0, v, 0, 1.0 / dt);
            sys.add_rhs(v, 0, c_old[v] / dt);
        } else {
            sys.pin(v, 0, 0.0);
        }
    }
    for face in faces(g) {
        match face {
            Face::Interior { lo, hi, axis } => {
                if !(domain.pore[lo] && domain.pore[hi]) {
                    continue;
                }
                let h = g.spacing(axis);
                let (a_lo, a_hi) = face_weights(unit, z, h, phi[hi] - phi[lo]);
                sys.add(lo, 0, hi, 0, -a_hi / h);
                sys.add(lo, 0, lo, 0, a_lo / h);
                sys.add(hi, 0, hi, 0, a_hi / h);
                sys.add(hi, 0, lo, 0, -a_lo / h);
            }
            Face::Boundary { node, axis, side } => {
                if !domain.pore[node] {
                    continue;
                }
                let h = g.spacing(axis);
                let s = if side == Side::High { -1.0 / h } else { 1.0 / h };
                match domain.bc.get(axis, side) {
                    FaceCondition::NoFlux => {}
                    FaceCondition::AppliedCurrent { current } => {
                        let j = -0.5 * z * current * current_scale(domain, axis, side);
                        sys.add_rhs(node, 0, -s * j);
                    }
                    FaceCondition::Dirichlet { c_plus, c_minus, phi: phi_b } => {
                        let cb = if z > 0.0 { c_plus } else { c_minus };
                        let (alpha, beta) = match side {
                            Side::High => {
                                let (ai, ab) = face_weights(unit, z, 0.5 * h, phi_b - phi[node]);
                                (-ai, ab * cb)
                            }
                            Side::Low => {
                                let (ab, ai) = face_weights(unit, z, 0.5 * h, phi[node] - phi_b);
                                (ai, -ab * cb)
                            }
                        };
                        sys.add(node, 0, node, 0, s * alpha);
                        sys.add_rhs(node, 0, -s * beta);
                    }
                }
            }
        }
    }
    sys.solve()
}

/// One semi-implicit step of the microscopic system.
pub fn step_micro_pnp(domain: &MicroDomain, state: &MicroState, dt: f64) -> Result<MicroState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let c_max = state
        .c_plus
        .iter()
        .zip(&state.c_minus)
        .map(|(a, b)| a + b)
        .fold(0.0, f64::max);
    let bound = 2.0 * domain.epsilon * domain.epsilon / c_max;
    if dt > bound {
        return Err(Error::StepBound { dt, bound });
    }
    let phi = micro_poisson(domain, &state.c_plus, &state.c_minus)?;
    let mut cp = species_solve(domain, &state.c_plus, &phi, 1.0, dt)?;
    let mut cm = species_solve(domain, &state.c_minus, &phi, -1.0, dt)?;
    let scale = 1.0 + cp.iter().chain(&cm).fold(0.0f64, |m, x| m.max(x.abs()));
    for c in [&mut cp, &mut cm] {
        for (v, x) in c.iter_mut().enumerate() {
            if !x.is_finite() || *x < -1e-12 * scale {
                return Err(Error::NegativeConcentration { node: v, value: *x });
            }
            *x = x.max(0.0);
        }
    }
    let phi = micro_poisson(domain, &cp, &cm)?;
    Ok(MicroState {
        c_plus: cp,
        c_minus: cm,
        phi,
        time: state.time + dt,
    })
}

/// Net charge `sum (c+ - c-) V + sum r sigma |facet|` minus the outward
/// displacement flux through the outer boundary. Zero up to solver tolerance.
pub fn gauss_residual(domain: &MicroDomain, state: &MicroState) -> f64 {
    let g = &domain.grid;
    let vol = g.cell_volume();
    let mut charge = domain.surface_charge();
    for v in 0..g.num_nodes() {
        charge += (state.c_plus[v] - state.c_minus[v]) * vol;
    }
    let mut outflux = 0.0;
    for face in faces(g) {
        if let Face::Boundary { node, axis, side } = face {
            if let FaceCondition::Dirichlet { phi, .. } = domain.bc.get(axis, side) {
                let h = g.spacing(axis);
                let area = vol / h;
                // -eps dphi/dn over the half cell
                outflux += -domain.coefficient(node) * (phi - state.phi[node]) / (0.5 * h) * area;
            }
        }
    }
    charge - outflux
}

/// Per-tile averages on an `n x n` grid: pore-volume averages of `c+-` and
/// the average of `phi` over voxels carrying a potential.
pub fn cell_average(domain: &MicroDomain, state: &MicroState, n: usize) -> Result<MacroState> {
    let g = &domain.grid;
    let shape = g.shape();
    if n == 0 || !shape[0].is_multiple_of(n) || !shape[1].is_multiple_of(n) {
        return Err(Error::InvalidArgument(format!(
            "{}x{} voxels cannot be split into {n}x{n} tiles",
            shape[0], shape[1]
        )));
    }
    let (b0, b1) = (shape[0] / n, shape[1] / n);
    let mut sums = vec![[0.0f64; 5]; n * n];
    for v in 0..g.num_nodes() {
        let t = g.coord(v, 0) / b0 + n * (g.coord(v, 1) / b1);
        if domain.pore[v] {
            sums[t][0] += state.c_plus[v];
            sums[t][1] += state.c_minus[v];
            sums[t][2] += 1.0;
        }
        if domain.has_potential(v) {
            sums[t][3] += state.phi[v];
            sums[t][4] += 1.0;
        }
    }
    let avg = |s: f64, k: f64| if k > 0.0 { s / k } else { 0.0 };
    let grid = MacroGrid::new(vec![n, n], g.lengths().to_vec())?;
    let mut out = MacroState::new(
        grid,
        sums.iter().map(|s| avg(s[0], s[2])).collect(),
        sums.iter().map(|s| avg(s[1], s[2])).collect(),
        sums.iter().map(|s| avg(s[3], s[4])).collect(),
    )?;
    out.time = state.time;
    Ok(out)
}

/// Plain per-tile means of a macro state on an `n x n` grid.
pub fn macro_tile_average(state: &MacroState, n: usize) -> Result<MacroState> {
    let g = &state.grid;
    let shape = g.shape();
    if g.dim() != 2 || n == 0 || !shape[0].is_multiple_of(n) || !shape[1].is_multiple_of(n) {
        return Err(Error::InvalidArgument(format!("grid cannot be split into {n}x{n} tiles")));
    }
    let (b0, b1) = (shape[0] / n, shape[1] / n);
    let mut sums = vec![[0.0f64; 3]; n * n];
    for v in 0..g.num_nodes() {
        let t = g.coord(v, 0) / b0 + n * (g.coord(v, 1) / b1);
        sums[t][0] += state.c_plus[v];
        sums[t][1] += state.c_minus[v];
        sums[t][2] += state.phi[v];
    }
    let k = (b0 * b1) as f64;
    let grid = MacroGrid::new(vec![n, n], g.lengths().to_vec())?;
    let mut out = MacroState::new(
        grid,
        sums.iter().map(|s| s[0] / k).collect(),
        sums.iter().map(|s| s[1] / k).collect(),
        sums.iter().map(|s| s[2] / k).collect(),
    )?;
    out.time = state.time;
    Ok(out)
}

/// Distance between averaged micro and macro solutions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CompareReport {
    pub n: usize,
    #[serde(rename = "L2_c")]
    pub l2_c: f64,
    #[serde(rename = "L2_phi")]
    pub l2_phi: f64,
    /// Wall-clock seconds per phase.
    pub runtimes: std::collections::BTreeMap<String, f64>,
}

/// Runs the micro and the macro model from the same initial data and compares
/// their tile averages.
///
/// The macro grid coincides with the voxel grid of the tiled domain, and its
/// tensors come from the cell problems of `cell`.
pub fn compare_micro_macro(
    cell: &ReferenceCell,
    n: usize,
    bc: &BoundarySpec,
    init: impl Fn(f64, f64) -> (f64, f64),
    dt: f64,
    steps: usize,
) -> Result<CompareReport> {
    let mut runtimes = std::collections::BTreeMap::new();
    let clock = Instant::now();
    let domain = build_perforated_domain(cell, n, bc.clone())?;
    let mut micro = MicroState::from_fn(&domain, &init)?;
    for _ in 0..steps {
        micro = step_micro_pnp(&domain, &micro, dt)?;
    }
    runtimes.insert("micro".to_string(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let t = compute_effective_tensors(cell, &SolverOptions::default())?;
    runtimes.insert("tensors".to_string(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let grid = domain.grid().clone();
    let nv = grid.num_nodes();
    let (mut cp, mut cm) = (vec![0.0; nv], vec![0.0; nv]);
    for v in 0..nv {
        let x = grid.center(v);
        (cp[v], cm[v]) = init(x[0], x[1]);
    }
    let mut state = MacroState::new(grid, cp, cm, vec![0.0; nv])?;
    state.phi = crate::macro_solver::solve_poisson(&state, &t, bc)?;
    for _ in 0..steps {
        state = step_macro_pnp(&state, &t, bc, dt, StepMode::SemiImplicit)?;
    }
    runtimes.insert("macro".to_string(), clock.elapsed().as_secs_f64());

    let a = cell_average(&domain, &micro, n)?;
    let b = macro_tile_average(&state, n)?;
    let area = a.grid.cell_volume();
    let mut dc = 0.0;
    let mut dphi = 0.0;
    for k in 0..n * n {
        dc += (a.c_plus[k] - b.c_plus[k]).powi(2) + (a.c_minus[k] - b.c_minus[k]).powi(2);
        dphi += (a.phi[k] - b.phi[k]).powi(2);
    }
    Ok(CompareReport {
        n,
        l2_c: (dc * area).sqrt(),
        l2_phi: (dphi * area).sqrt(),
        runtimes,
    })
}

/// Renders `x, y, pore, c_plus, c_minus, phi` for every voxel.
pub fn snapshot_csv(domain: &MicroDomain, state: &MicroState) -> String {
    let mut out = String::from("x,y,pore,c_plus,c_minus,phi\n");
    for v in 0..domain.grid.num_nodes() {
        let x = domain.grid.center(v);
        let _ = writeln!(
            out,
            "{:.10e},{:.10e},{},{:.16e},{:.16e},{:.16e}",
            x[0],
            x[1],
            u8::from(domain.pore[v]),
            state.c_plus[v],
            state.c_minus[v],
            state.phi[v]
        );
    }
    out
}

/// Writes [`snapshot_csv`] to `path`.
pub fn write_snapshot_csv(path: &Path, domain: &MicroDomain, state: &MicroState) -> Result<()> {
    std::fs::write(path, snapshot_csv(domain, state))?;
    Ok(())
}
