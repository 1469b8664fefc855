//! Periodic corrector problems on a reference cell.
//!
//! The potential corrector `xi^{33_r}` solves
//! `-div(k(y) grad(xi - y_r)) = 0` on the whole cell with `k = eps^2` in the
//! pore and `k = alpha` in the solid. When `alpha = 0` the solid drops out and
//! the problem becomes a pure Neumann problem on the pore phase. The ion
//! corrector `xi^{ii_r}` lives on the pore phase and shares its interface flux
//! with the potential corrector.
//!
//! Discretization: cell-centered finite volumes with harmonic face averages of
//! `k`, so that layered media reproduce harmonic means exactly. The unit
//! gradient `e_r` enters as a source, leaving a periodic unknown. Singular
//! (periodic or Neumann) systems are solved by conjugate gradients restricted
//! to the zero-mean subspace of every connected component.

use rayon::prelude::*;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::ReferenceCell;
use crate::linalg::{pcg, ConstantKernel, CsrMatrix, SolveStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ion,
    Potential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    PoreOnly,
    FullCell,
}

/// Periodic zero-mean corrector; one value per voxel (zero outside its domain).
#[derive(Debug, Clone)]
pub struct CorrectorField {
    pub values: Vec<f64>,
    pub family: Family,
    pub direction: usize,
    pub domain: Domain,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap; defaults to `50 * N^(1/d)`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl SolverOptions {
    fn cap(&self, cell: &ReferenceCell) -> usize {
        self.max_iter.unwrap_or_else(|| {
            let n = cell.num_voxels() as f64;
            (50.0 * n.powf(1.0 / cell.dim() as f64)).ceil() as usize
        })
    }
}

pub(crate) fn harmonic(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

/// Per-voxel coefficient of the potential problem: `eps^2` in the pore, `alpha` in the solid.
pub fn potential_coefficient(cell: &ReferenceCell) -> Vec<f64> {
    let e2 = cell.epsilon() * cell.epsilon();
    (0..cell.num_voxels())
        .map(|v| if cell.is_pore(v) { e2 } else { cell.alpha() })
        .collect()
}

/// Connected components of the `active` voxels (periodic face adjacency).
pub(crate) fn components_of(cell: &ReferenceCell, active: &[bool]) -> ConstantKernel {
    let mut label = vec![None; active.len()];
    let mut groups = 0;
    let mut stack = Vec::new();
    for seed in 0..active.len() {
        if !active[seed] || label[seed].is_some() {
            continue;
        }
        label[seed] = Some(groups);
        stack.push(seed);
        while let Some(v) = stack.pop() {
            for axis in 0..cell.dim() {
                for dir in [-1i8, 1] {
                    let u = cell.neighbor(v, axis, dir);
                    if active[u] && label[u].is_none() {
                        label[u] = Some(groups);
                        stack.push(u);
                    }
                }
            }
        }
        groups += 1;
    }
    ConstantKernel { label, groups }
}

/// Finite-volume operator `(A x)_i = sum_faces k_f (x_i - x_j) / h_a^2` over
/// the active voxels, written in voxel numbering (inactive rows empty).
fn assemble(cell: &ReferenceCell, coeff: &[f64], active: &[bool]) -> CsrMatrix {
    let mut trip = Vec::with_capacity(cell.num_voxels() * (2 * cell.dim() + 1));
    for v in 0..cell.num_voxels() {
        if !active[v] {
            continue;
        }
        let mut diag = 0.0;
        for axis in 0..cell.dim() {
            let h2 = cell.spacing(axis).powi(2);
            for dir in [-1i8, 1] {
                let u = cell.neighbor(v, axis, dir);
                if !active[u] {
                    continue;
                }
                let k = harmonic(coeff[v], coeff[u]) / h2;
                if k == 0.0 {
                    continue;
                }
                diag += k;
                trip.push((v, u, -k));
            }
        }
        trip.push((v, v, diag));
    }
    CsrMatrix::from_triplets(cell.num_voxels(), &trip)
}

/// Solves `-div(coeff grad u) = rhs` periodically on the voxels where
/// `coeff > 0` (and `mask`, if given), with homogeneous Neumann conditions
/// towards excluded voxels. The result has zero mean on every connected
/// component of the active set and is zero elsewhere.
///
/// The right-hand side must have zero mean on every component, up to
/// `1e-10 * max(1, |rhs|_inf)`; it is then projected exactly.
pub fn elliptic_solve_periodic(
    cell: &ReferenceCell,
    coeff: &[f64],
    rhs: &[f64],
    mask: Option<&[bool]>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = cell.num_voxels();
    if coeff.len() != n || rhs.len() != n || mask.is_some_and(|m| m.len() != n) {
        return Err(Error::InvalidArgument(
            "field length differs from voxel count".into(),
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let active: Vec<bool> = (0..n)
        .map(|v| coeff[v] > 0.0 && mask.is_none_or(|m| m[v]))
        .collect();
    let kernel = components_of(cell, &active);
    let mut b: Vec<f64> = (0..n)
        .map(|v| if active[v] { rhs[v] } else { 0.0 })
        .collect();
    let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mean = kernel.max_mean(&b);
    if mean > 1e-10 * scale {
        return Err(Error::Incompatible { mean });
    }
    kernel.project(&mut b);
    let a = assemble(cell, coeff, &active);
    let mut x = vec![0.0; n];
    let stats = pcg(&a, &b, &mut x, opts.tol, opts.cap(cell), Some(&kernel))?;
    kernel.project(&mut x);
    Ok((x, stats))
}

/// Solves the potential corrector for direction `r`.
pub fn solve_potential_corrector(
    cell: &ReferenceCell,
    r: usize,
    opts: &SolverOptions,
) -> Result<CorrectorField> {
    if r >= cell.dim() {
        return Err(Error::InvalidArgument(format!(
            "direction {r} out of range for a {}-dimensional cell",
            cell.dim()
        )));
    }
    let coeff = potential_coefficient(cell);
    let h = cell.spacing(r);
    let rhs: Vec<f64> = (0..cell.num_voxels())
        .map(|v| {
            if coeff[v] == 0.0 {
                return 0.0;
            }
            let kp = harmonic(coeff[v], coeff[cell.neighbor(v, r, 1)]);
            let km = harmonic(coeff[v], coeff[cell.neighbor(v, r, -1)]);
            (km - kp) / h
        })
        .collect();
    let full = cell.alpha() > 0.0;
    if !full && !cell.components().percolates.iter().all(|p| p[r]) {
        log::warn!("pore phase does not percolate along axis {r}; corrector gauged per component");
    }
    let (values, stats) = elliptic_solve_periodic(cell, &coeff, &rhs, None, opts)?;
    Ok(CorrectorField {
        values,
        family: Family::Potential,
        direction: r,
        domain: if full {
            Domain::FullCell
        } else {
            Domain::PoreOnly
        },
        stats,
    })
}

/// Solves the ion corrector for direction `r` given the potential corrector of
/// the same direction.
///
/// The pore problem `L xi = L xi33` (pore-pore faces only) has interface
/// fluxes equal to those of `xi33` by construction; its solution is `xi33`
/// restricted to the pore up to a constant per component.
pub fn solve_ion_corrector(
    cell: &ReferenceCell,
    r: usize,
    xi33: &CorrectorField,
    opts: &SolverOptions,
) -> Result<CorrectorField> {
    if xi33.family != Family::Potential {
        return Err(Error::CorrectorMismatch(
            "expected a potential corrector".into(),
        ));
    }
    if xi33.direction != r {
        return Err(Error::CorrectorMismatch(format!(
            "potential corrector is for direction {}, requested {r}",
            xi33.direction
        )));
    }
    if xi33.values.len() != cell.num_voxels() {
        return Err(Error::CorrectorMismatch(
            "potential corrector belongs to another cell".into(),
        ));
    }
    let coeff: Vec<f64> = (0..cell.num_voxels())
        .map(|v| if cell.is_pore(v) { 1.0 } else { 0.0 })
        .collect();
    let active: Vec<bool> = coeff.iter().map(|&c| c > 0.0).collect();
    let a = assemble(cell, &coeff, &active);
    let pore_xi: Vec<f64> = (0..cell.num_voxels())
        .map(|v| if active[v] { xi33.values[v] } else { 0.0 })
        .collect();
    let rhs = a.matvec(&pore_xi);
    let (values, stats) = elliptic_solve_periodic(cell, &coeff, &rhs, None, opts)?;
    Ok(CorrectorField {
        values,
        family: Family::Ion,
        direction: r,
        domain: Domain::PoreOnly,
        stats,
    })
}

/// Both corrector families for every direction.
#[derive(Debug, Clone)]
pub struct CellCorrectors {
    pub potential: Vec<CorrectorField>,
    pub ion: Vec<CorrectorField>,
}

/// Solves all `2d` corrector problems; directions run in parallel.
pub fn solve_all(cell: &ReferenceCell, opts: &SolverOptions) -> Result<CellCorrectors> {
    let pairs: Vec<(CorrectorField, CorrectorField)> = (0..cell.dim())
        .into_par_iter()
        .map(|r| {
            let xi33 = solve_potential_corrector(cell, r, opts)?;
            let xii = solve_ion_corrector(cell, r, &xi33, opts)?;
            Ok((xi33, xii))
        })
        .collect::<Result<_>>()?;
    let (potential, ion) = pairs.into_iter().unzip();
    Ok(CellCorrectors { potential, ion })
}

/// Writes a corrector as CSV with columns `i,j[,k],xi_value`; voxels outside
/// the corrector's domain are skipped.
pub fn write_corrector_csv(
    cell: &ReferenceCell,
    field: &CorrectorField,
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let axes = ["i", "j", "k"];
    writeln!(out, "{},xi_value", axes[..cell.dim()].join(","))?;
    for v in 0..cell.num_voxels() {
        if field.domain == Domain::PoreOnly && !cell.is_pore(v) {
            continue;
        }
        for c in cell.coords(v) {
            write!(out, "{c},")?;
        }
        writeln!(out, "{:e}", field.values[v])?;
    }
    out.flush()?;
    Ok(())
}
