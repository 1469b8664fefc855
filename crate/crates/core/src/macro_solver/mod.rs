//! Upscaled Poisson-Nernst-Planck system on structured 1D/2D macro grids.
//!
//! Unknowns live at cell centers. The system is
//!
//! ```text
//! p dc+/dt = div(D grad c+ + c+ M grad phi)
//! p dc-/dt = div(D grad c- - c- M grad phi)
//! -div(eps_hat grad phi) = p (c+ - c-) + rho_s
//! ```
//!
//! Tensors must be diagonal in the grid axes. Axes with zero diffusivity and
//! mobility carry no flux; they are simply left out of the stencil.
//!
//! Boundary faces take one of three conditions: Dirichlet reservoir values at
//! the face (half a cell from the node), no flux, or an applied current
//! density `I` (positive along `+axis`). The latter fixes the species fluxes at
//! `J+ = -I/2`, `J- = +I/2` and leaves the potential with a homogeneous
//! Neumann condition.

mod io;
pub mod sg;
mod steady;
mod step;

pub use io::{series_csv, write_series_csv, RunSummary};
pub use steady::{steady_residuals, steady_state, steady_transport, SteadyOptions};
pub use step::{step_macro_pnp, step_salt_charge, StepMode};
pub(crate) use step::transport_solve;

use crate::error::{Error, Result};
use crate::linalg::{BandedLu, CsrMatrix};
use crate::tensors::{EffectiveTensors, ZERO_EIGENVALUE};
use sg::AxisCoeff;

/// Rectangular grid of `n[a]` cells per axis on `[0, lengths[a]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroGrid {
    n: Vec<usize>,
    lengths: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

impl MacroGrid {
    pub fn new(n: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        if n.is_empty() || n.len() > 2 || n.len() != lengths.len() {
            return Err(Error::InvalidArgument("macro grids are 1D or 2D".into()));
        }
        if n.contains(&0) || lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidArgument("grid sizes and lengths must be positive".into()));
        }
        Ok(Self { n, lengths })
    }

    /// Uniform 1D grid of `n` cells on `[0, length]`.
    pub fn line(n: usize, length: f64) -> Result<Self> {
        Self::new(vec![n], vec![length])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn num_nodes(&self) -> usize {
        self.n.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.n[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn coord(&self, node: usize, axis: usize) -> usize {
        let stride: usize = self.n[..axis].iter().product();
        (node / stride) % self.n[axis]
    }

    pub fn center(&self, node: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| (self.coord(node, a) as f64 + 0.5) * self.spacing(a))
            .collect()
    }

    /// Neighbour across the `side` face along `axis`, if interior.
    pub fn neighbor(&self, node: usize, axis: usize, side: Side) -> Option<usize> {
        let stride: usize = self.n[..axis].iter().product();
        let c = self.coord(node, axis);
        match side {
            Side::Low if c > 0 => Some(node - stride),
            Side::High if c + 1 < self.n[axis] => Some(node + stride),
            _ => None,
        }
    }

    /// Position of each node in an ordering whose slowest axis is the longest,
    /// which keeps the band of the assembled matrices narrow.
    fn ranks(&self) -> Vec<usize> {
        if self.dim() == 1 || self.n[0] >= self.n[1] {
            if self.dim() == 2 {
                // node = i + n0 * j; rank = j + n1 * i
                let (n0, n1) = (self.n[0], self.n[1]);
                return (0..self.num_nodes()).map(|v| (v / n0) + n1 * (v % n0)).collect();
            }
            return (0..self.num_nodes()).collect();
        }
        (0..self.num_nodes()).collect()
    }
}

/// Condition on one boundary face.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceCondition {
    Dirichlet { c_plus: f64, c_minus: f64, phi: f64 },
    NoFlux,
    AppliedCurrent { current: f64 },
}

/// One condition per boundary face: `faces[axis] = [low, high]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub faces: Vec<[FaceCondition; 2]>,
}

impl BoundarySpec {
    pub fn uniform(dim: usize, cond: FaceCondition) -> Self {
        Self {
            faces: vec![[cond; 2]; dim],
        }
    }

    pub fn no_flux(dim: usize) -> Self {
        Self::uniform(dim, FaceCondition::NoFlux)
    }

    pub fn with(mut self, axis: usize, side: Side, cond: FaceCondition) -> Self {
        self.faces[axis][side as usize] = cond;
        self
    }

    pub fn get(&self, axis: usize, side: Side) -> FaceCondition {
        self.faces[axis][side as usize]
    }

    /// Checks the face count against `grid` and the face data for validity.
    pub fn check(&self, grid: &MacroGrid) -> Result<()> {
        if self.faces.len() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "boundary spec has {} axes, grid has {}",
                self.faces.len(),
                grid.dim()
            )));
        }
        for f in self.faces.iter().flatten() {
            match *f {
                FaceCondition::Dirichlet { c_plus, c_minus, phi } => {
                    if !(c_plus >= 0.0 && c_minus >= 0.0 && phi.is_finite()) {
                        return Err(Error::InvalidArgument(
                            "Dirichlet concentrations must be non-negative".into(),
                        ));
                    }
                }
                FaceCondition::AppliedCurrent { current } if !current.is_finite() => {
                    return Err(Error::InvalidArgument("applied current must be finite".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn has_dirichlet(&self) -> bool {
        self.faces
            .iter()
            .flatten()
            .any(|f| matches!(f, FaceCondition::Dirichlet { .. }))
    }
}

/// Fields `c+`, `c-`, `phi` at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub grid: MacroGrid,
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub phi: Vec<f64>,
    pub time: f64,
}

impl MacroState {
    pub fn new(grid: MacroGrid, c_plus: Vec<f64>, c_minus: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        let n = grid.num_nodes();
        if c_plus.len() != n || c_minus.len() != n || phi.len() != n {
            return Err(Error::InvalidArgument(format!("fields must have {n} entries")));
        }
        for (k, (&a, &b)) in c_plus.iter().zip(&c_minus).enumerate() {
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::NegativeConcentration {
                    node: k,
                    value: a.min(b),
                });
            }
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("potential must be finite".into()));
        }
        Ok(Self {
            grid,
            c_plus,
            c_minus,
            phi,
            time: 0.0,
        })
    }

    pub fn uniform(grid: MacroGrid, c_plus: f64, c_minus: f64, phi: f64) -> Result<Self> {
        let n = grid.num_nodes();
        Self::new(grid, vec![c_plus; n], vec![c_minus; n], vec![phi; n])
    }

    /// `sum c V` for both species.
    pub fn totals(&self) -> (f64, f64) {
        let v = self.grid.cell_volume();
        (
            self.c_plus.iter().sum::<f64>() * v,
            self.c_minus.iter().sum::<f64>() * v,
        )
    }
}

/// Salt and charge `c = (c+ + c-)/2`, `rho = (c+ - c-)/2`.
pub fn to_salt_charge(state: &MacroState) -> (Vec<f64>, Vec<f64>) {
    let c = state
        .c_plus
        .iter()
        .zip(&state.c_minus)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let rho = state
        .c_plus
        .iter()
        .zip(&state.c_minus)
        .map(|(a, b)| 0.5 * (a - b))
        .collect();
    (c, rho)
}

/// Inverse of [`to_salt_charge`]; fails where `|rho| > c`.
pub fn from_salt_charge(grid: MacroGrid, c: &[f64], rho: &[f64], phi: Vec<f64>, time: f64) -> Result<MacroState> {
    if c.len() != grid.num_nodes() || rho.len() != c.len() {
        return Err(Error::InvalidArgument("field length differs from node count".into()));
    }
    if let Some(k) = (0..c.len()).find(|&k| rho[k].abs() > c[k]) {
        return Err(Error::NegativeConcentration {
            node: k,
            value: c[k] - rho[k].abs(),
        });
    }
    let c_plus = c.iter().zip(rho).map(|(c, r)| c + r).collect();
    let c_minus = c.iter().zip(rho).map(|(c, r)| c - r).collect();
    let mut s = MacroState::new(grid, c_plus, c_minus, phi)?;
    s.time = time;
    Ok(s)
}

/// Per-axis coefficients `(D, M, eps_hat)` of diagonal tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisTensors {
    pub d: f64,
    pub m: f64,
    pub e: f64,
}

impl AxisTensors {
    pub fn transport(&self) -> AxisCoeff {
        AxisCoeff { d: self.d, m: self.m }
    }
}

/// Off-diagonal entries larger than this (relative to the diagonal) are rejected.
const OFF_DIAGONAL_TOL: f64 = 1e-10;

/// Extracts per-axis coefficients for a grid of dimension `dim`.
pub fn axis_tensors(t: &EffectiveTensors, dim: usize) -> Result<Vec<AxisTensors>> {
    if t.dim() < dim {
        return Err(Error::InvalidArgument(format!(
            "{}-dimensional tensors on a {dim}-dimensional grid",
            t.dim()
        )));
    }
    for m in [&t.d_hat, &t.m_hat, &t.eps_hat] {
        let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
        for r in 0..dim {
            for c in 0..dim {
                if r != c && m[(r, c)].abs() > OFF_DIAGONAL_TOL * scale {
                    return Err(Error::NonDiagonalTensor {
                        row: r,
                        col: c,
                        value: m[(r, c)],
                    });
                }
            }
        }
    }
    // numerically vanishing entries mark blocked axes
    let clean = |m: &nalgebra::DMatrix<f64>, a: usize| {
        let v = m[(a, a)];
        if v.abs() <= ZERO_EIGENVALUE * m.diagonal().amax() {
            0.0
        } else {
            v
        }
    };
    Ok((0..dim)
        .map(|a| AxisTensors {
            d: clean(&t.d_hat, a),
            m: clean(&t.m_hat, a),
            e: clean(&t.eps_hat, a),
        })
        .collect())
}

/// A face of the grid as seen from the stencil.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Face {
    /// Interior face between `lo` and `hi = lo + e_axis`.
    Interior { lo: usize, hi: usize, axis: usize },
    Boundary { node: usize, axis: usize, side: Side },
}

pub(crate) fn faces(grid: &MacroGrid) -> Vec<Face> {
    let mut out = Vec::new();
    for axis in 0..grid.dim() {
        for v in 0..grid.num_nodes() {
            match grid.neighbor(v, axis, Side::High) {
                Some(u) => out.push(Face::Interior { lo: v, hi: u, axis }),
                None => out.push(Face::Boundary {
                    node: v,
                    axis,
                    side: Side::High,
                }),
            }
            if grid.neighbor(v, axis, Side::Low).is_none() {
                out.push(Face::Boundary {
                    node: v,
                    axis,
                    side: Side::Low,
                });
            }
        }
    }
    out
}

/// Sparse system with `block` unknowns per node, solved by banded LU in a
/// bandwidth-friendly node order.
pub(crate) struct BlockSystem {
    n: usize,
    block: usize,
    rank: Vec<usize>,
    trip: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pinned: Vec<bool>,
}

impl BlockSystem {
    pub fn new(grid: &MacroGrid, block: usize) -> Self {
        let n = grid.num_nodes();
        Self {
            n,
            block,
            rank: grid.ranks(),
            trip: Vec::with_capacity(n * block * block * 5),
            rhs: vec![0.0; n * block],
            pinned: vec![false; n * block],
        }
    }

    fn row(&self, node: usize, comp: usize) -> usize {
        self.rank[node] * self.block + comp
    }

    pub fn add(&mut self, node: usize, comp: usize, col_node: usize, col_comp: usize, v: f64) {
        if v != 0.0 {
            let (r, c) = (self.row(node, comp), self.row(col_node, col_comp));
            self.trip.push((r, c, v));
        }
    }

    pub fn add_rhs(&mut self, node: usize, comp: usize, v: f64) {
        let r = self.row(node, comp);
        self.rhs[r] += v;
    }

    /// Replaces an equation by `x = value`.
    pub fn pin(&mut self, node: usize, comp: usize, value: f64) {
        let r = self.row(node, comp);
        self.pinned[r] = true;
        self.rhs[r] = value;
    }

    pub fn rhs_at(&self, node: usize, comp: usize) -> f64 {
        self.rhs[self.row(node, comp)]
    }

    pub fn set_rhs(&mut self, node: usize, comp: usize, v: f64) {
        let r = self.row(node, comp);
        self.rhs[r] = v;
    }

    /// Solves and returns the solution in `node * block + comp` layout.
    pub fn solve(self) -> Result<Vec<f64>> {
        let size = self.n * self.block;
        let mut trip: Vec<(usize, usize, f64)> =
            self.trip.into_iter().filter(|&(r, _, _)| !self.pinned[r]).collect();
        for (r, _) in self.pinned.iter().enumerate().filter(|(_, &p)| p) {
            trip.push((r, r, 1.0));
        }
        let a = CsrMatrix::from_triplets(size, &trip);
        let x = BandedLu::factor(&a)?.solve(&self.rhs);
        let mut out = vec![0.0; size];
        for node in 0..self.n {
            for comp in 0..self.block {
                out[node * self.block + comp] = x[self.rank[node] * self.block + comp];
            }
        }
        Ok(out)
    }
}

/// Boundary data of a scalar elliptic problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum EllipticBoundary {
    /// Value at the face and the coefficient used over the half cell.
    Dirichlet { value: f64, k: f64 },
    /// Prescribed `K du/dx_axis` at the face (positive along `+axis`).
    Flux(f64),
}

/// Solves `-div(K grad u) = f` with face coefficients `face_k(lo, hi, axis)`.
///
/// Components of the face graph without Dirichlet faces are singular: their
/// data must be compatible to `1e-8` relative to the larger of `sum |f|` and
/// `scale`, and their solution is returned with zero mean.
pub(crate) fn solve_elliptic(
    grid: &MacroGrid,
    face_k: impl Fn(usize, usize, usize) -> f64,
    boundary: impl Fn(usize, usize, Side) -> EllipticBoundary,
    f: &[f64],
    scale: f64,
) -> Result<Vec<f64>> {
    let n = grid.num_nodes();
    let mut sys = BlockSystem::new(grid, 1);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut anchored = vec![false; n];
    for v in 0..n {
        sys.add_rhs(v, 0, f[v]);
    }
    for face in faces(grid) {
        match face {
            Face::Interior { lo, hi, axis } => {
                let k = face_k(lo, hi, axis) / grid.spacing(axis).powi(2);
                if k == 0.0 {
                    continue;
                }
                sys.add(lo, 0, lo, 0, k);
                sys.add(lo, 0, hi, 0, -k);
                sys.add(hi, 0, hi, 0, k);
                sys.add(hi, 0, lo, 0, -k);
                adjacency[lo].push(hi);
                adjacency[hi].push(lo);
            }
            Face::Boundary { node, axis, side } => {
                let h = grid.spacing(axis);
                match boundary(node, axis, side) {
                    EllipticBoundary::Dirichlet { value, k } => {
                        if k == 0.0 {
                            continue;
                        }
                        let w = 2.0 * k / (h * h);
                        sys.add(node, 0, node, 0, w);
                        sys.add_rhs(node, 0, w * value);
                        anchored[node] = true;
                    }
                    EllipticBoundary::Flux(q) => {
                        // -(F_hi - F_lo)/h with the known face value moved right
                        let s = if side == Side::High { q } else { -q };
                        sys.add_rhs(node, 0, s / h);
                    }
                }
            }
        }
    }
    // connected components of the face graph
    let mut comp = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if comp[seed] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = vec![seed];
        comp[seed] = id;
        let mut k = 0;
        while k < members.len() {
            let v = members[k];
            for &u in &adjacency[v] {
                if comp[u] == usize::MAX {
                    comp[u] = id;
                    members.push(u);
                }
            }
            k += 1;
        }
        groups.push(members);
    }
    let mut floating = Vec::new();
    for members in &groups {
        if members.iter().any(|&v| anchored[v]) {
            continue;
        }
        let sum: f64 = members.iter().map(|&v| sys.rhs_at(v, 0)).sum();
        let abs: f64 = members.iter().map(|&v| sys.rhs_at(v, 0).abs()).sum();
        if sum.abs() > 1e-8 * abs.max(scale) {
            return Err(Error::Incompatible {
                mean: sum / members.len() as f64,
            });
        }
        let mean = sum / members.len() as f64;
        for &v in members {
            let r = sys.rhs_at(v, 0);
            sys.set_rhs(v, 0, r - mean);
        }
        sys.pin(members[0], 0, 0.0);
        floating.push(members.clone());
    }
    let mut u = sys.solve()?;
    for members in floating {
        let mean = members.iter().map(|&v| u[v]).sum::<f64>() / members.len() as f64;
        for v in members {
            u[v] -= mean;
        }
    }
    Ok(u)
}

/// Solves the Poisson equation `-div(eps_hat grad phi) = p(c+ - c-) + rho_s`.
pub fn solve_poisson(state: &MacroState, t: &EffectiveTensors, bc: &BoundarySpec) -> Result<Vec<f64>> {
    let axes = axis_tensors(t, state.grid.dim())?;
    bc.check(&state.grid)?;
    let f: Vec<f64> = state
        .c_plus
        .iter()
        .zip(&state.c_minus)
        .map(|(a, b)| t.p * (a - b) + t.rho_s)
        .collect();
    let scale = charge_scale(t, &state.c_plus, &state.c_minus);
    poisson_with_source(&state.grid, &axes, bc, &f, scale)
}

/// Magnitude `sum p(c+ + c-) + |rho_s|` against which charge balance is judged.
pub(crate) fn charge_scale(t: &EffectiveTensors, c_plus: &[f64], c_minus: &[f64]) -> f64 {
    c_plus
        .iter()
        .zip(c_minus)
        .map(|(a, b)| t.p * (a + b) + t.rho_s.abs())
        .sum()
}

pub(crate) fn poisson_with_source(
    grid: &MacroGrid,
    axes: &[AxisTensors],
    bc: &BoundarySpec,
    f: &[f64],
    scale: f64,
) -> Result<Vec<f64>> {
    solve_elliptic(
        grid,
        |_, _, a| axes[a].e,
        |_, a, side| match bc.get(a, side) {
            FaceCondition::Dirichlet { phi, .. } => EllipticBoundary::Dirichlet { value: phi, k: axes[a].e },
            _ => EllipticBoundary::Flux(0.0),
        },
        f,
        scale,
    )
}

/// Characteristic scales and the macroscopic rescaling by the period `r`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScaleSet {
    /// Pore length scale.
    pub ell: f64,
    /// Reference concentration.
    pub c_bar: f64,
    /// Thermal voltage `kT/e`.
    pub thermal_voltage: f64,
    /// Molecular diffusivity used for the time scale.
    pub diffusivity: f64,
    /// Pore-scale Debye ratio `lambda_D / ell`.
    pub epsilon: f64,
    /// Period ratio `r = ell / L`.
    pub r: f64,
}

impl ScaleSet {
    pub fn new(ell: f64, c_bar: f64, thermal_voltage: f64, diffusivity: f64, debye_length: f64) -> Result<Self> {
        for (name, v) in [
            ("ell", ell),
            ("c_bar", c_bar),
            ("thermal voltage", thermal_voltage),
            ("diffusivity", diffusivity),
            ("Debye length", debye_length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(Self {
            ell,
            c_bar,
            thermal_voltage,
            diffusivity,
            epsilon: debye_length / ell,
            r: 1.0,
        })
    }

    /// Macroscopic length `L = ell / r`.
    pub fn macro_length(&self) -> f64 {
        self.ell / self.r
    }

    /// Diffusion time `ell^2 / D`.
    pub fn t_d(&self) -> f64 {
        self.ell * self.ell / self.diffusivity
    }

    /// Macroscopic Debye ratio `r eps`.
    pub fn eps_bar(&self) -> f64 {
        self.r * self.epsilon
    }

    pub fn x_bar(&self, x_tilde: f64) -> f64 {
        self.r * x_tilde
    }

    pub fn t_bar(&self, t_tilde: f64) -> f64 {
        self.r * self.r * t_tilde
    }

    /// Reduced variables `(x/ell, t/t_D, c/c_bar, phi e/kT)`.
    pub fn reduce(&self, x: f64, t: f64, c: f64, phi: f64) -> (f64, f64, f64, f64) {
        (x / self.ell, t / self.t_d(), c / self.c_bar, phi / self.thermal_voltage)
    }
}

/// Rescales to macroscopic variables with period ratio `r`.
pub fn rescale_macro(scales: &ScaleSet, r: f64) -> Result<ScaleSet> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("r must lie in (0, 1], got {r}")));
    }
    Ok(ScaleSet { r, ..*scales })
}
