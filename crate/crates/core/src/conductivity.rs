//! First Dirichlet eigenvalue of the pore phase, Cheeger bounds and the
//! spectral conductivity estimate `sigma_11 ~ p (eps^2 theta_1 / s^2 + c)`.
//!
//! Rectangles are described by full side lengths `L1 x L2` throughout. In that
//! form the Cheeger constant of a rectangle is
//! `h = (4 - pi) / (L1 + L2 - sqrt((L1 - L2)^2 + pi L1 L2))`, which gives
//! `h = 2 + sqrt(pi)` for the unit square. The half-width variant of the same
//! formula is off by a factor 2 and is not offered.
//!
//! The eigenproblem `-Lap u = theta u` is discretized on pore voxels with the
//! cell-centered 5/7-point stencil. Pore neighbours couple through the periodic
//! wrap as usual; a pore-solid face imposes `u = 0` on the face through a mirror
//! ghost, adding `2 / h^2` to the diagonal.

use crate::error::{Error, Result};
use crate::geometry::ReferenceCell;
use crate::linalg::{dot, norm2, pcg, CsrMatrix};

/// Default relative tolerance on the eigenvalue.
pub const EIGEN_TOL: f64 = 1e-8;
const MAX_OUTER: usize = 500;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EigenResult {
    pub theta_1: f64,
    /// One value per voxel, zero on solid, unit discrete L2 norm
    /// (`sum u^2 |voxel| = 1`).
    pub u_1: Vec<f64>,
    /// `||A u - theta u|| / theta` in the same norm.
    pub residual: f64,
    pub iterations: usize,
}

fn dirichlet_laplacian(cell: &ReferenceCell, pore: &[usize], local: &[Option<usize>]) -> CsrMatrix {
    let mut trip = Vec::with_capacity(pore.len() * (2 * cell.dim() + 1));
    for (row, &v) in pore.iter().enumerate() {
        let mut diag = 0.0;
        for axis in 0..cell.dim() {
            let w = 1.0 / (cell.spacing(axis) * cell.spacing(axis));
            for dir in [-1i8, 1] {
                let nb = cell.neighbor(v, axis, dir);
                match local[nb] {
                    Some(col) if nb != v => {
                        diag += w;
                        trip.push((row, col, -w));
                    }
                    // a single voxel along a periodic axis couples to itself
                    Some(_) => {}
                    None => diag += 2.0 * w,
                }
            }
        }
        trip.push((row, row, diag));
    }
    CsrMatrix::from_triplets(pore.len(), &trip)
}

/// Smallest eigenvalue of the Dirichlet Laplacian on the pore phase by inverse
/// iteration. `tol` bounds the relative change of the Rayleigh quotient between
/// sweeps.
///
/// ```
/// use pnph::conductivity::first_dirichlet_eigenvalue;
/// use pnph::geometry::{build_preset, PresetParams};
///
/// // 28 x 28 pore voxels of side 1/28 in a 32^2 cell: a unit square pore
/// let l = 32.0 / 28.0;
/// let params = PresetParams::from([
///     ("n".to_string(), 32.0),
///     ("l1".to_string(), l),
///     ("l2".to_string(), l),
///     ("a".to_string(), 1.0),
///     ("b".to_string(), 1.0),
/// ]);
/// let cell = build_preset("rectangle_pore_2d", &params).unwrap();
/// let eig = first_dirichlet_eigenvalue(&cell, 1e-10).unwrap();
/// let two_pi_sq = 2.0 * std::f64::consts::PI.powi(2);
/// assert!((eig.theta_1 / two_pi_sq - 1.0).abs() < 2e-3);
/// ```
pub fn first_dirichlet_eigenvalue(cell: &ReferenceCell, tol: f64) -> Result<EigenResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let pore: Vec<usize> = (0..cell.num_voxels()).filter(|&v| cell.is_pore(v)).collect();
    if pore.is_empty() {
        return Err(Error::Geometry("pore phase is empty".into()));
    }
    let mut local = vec![None; cell.num_voxels()];
    for (i, &v) in pore.iter().enumerate() {
        local[v] = Some(i);
    }
    let a = dirichlet_laplacian(cell, &pore, &local);
    let vol = cell.voxel_volume();
    let n = pore.len();

    // positive start vector: ground state has no sign change
    let mut u = vec![1.0 / (n as f64 * vol).sqrt(); n];
    let mut theta = dot(&u, &a.matvec(&u)) / dot(&u, &u);
    let inner_tol = (tol * 1e-2).max(1e-12);
    for it in 1..=MAX_OUTER {
        let mut x = u.clone();
        pcg(&a, &u, &mut x, inner_tol, 20 * n + 100, None)?;
        let scale = (dot(&x, &x) * vol).sqrt();
        x.iter_mut().for_each(|v| *v /= scale);
        u = x;
        let au = a.matvec(&u);
        let next = dot(&u, &au) / dot(&u, &u);
        let change = (next - theta).abs() / next;
        theta = next;
        if change <= tol {
            let r: Vec<f64> = au.iter().zip(&u).map(|(p, q)| p - theta * q).collect();
            let residual = norm2(&r) * vol.sqrt() / theta;
            let mut u_1 = vec![0.0; cell.num_voxels()];
            for (&v, &x) in pore.iter().zip(&u) {
                u_1[v] = x;
            }
            return Ok(EigenResult {
                theta_1: theta,
                u_1,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged {
        solver: "inverse iteration",
        iterations: MAX_OUTER,
        residual: theta,
    })
}

/// Cheeger constant of an `l1 x l2` rectangle (full side lengths).
///
/// ```
/// let h = pnph::conductivity::cheeger_rectangle(1.0, 1.0).unwrap();
/// assert!((h - (2.0 + std::f64::consts::PI.sqrt())).abs() < 1e-12);
/// ```
pub fn cheeger_rectangle(l1: f64, l2: f64) -> Result<f64> {
    if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rectangle sides must be positive, got {l1} x {l2}"
        )));
    }
    let pi = std::f64::consts::PI;
    let denom = l1 + l2 - ((l1 - l2).powi(2) + pi * l1 * l2).sqrt();
    Ok((4.0 - pi) / denom)
}

/// Lower bound `(h / 2)^2` on the first Dirichlet eigenvalue.
pub fn cheeger_lower_bound(h: f64) -> f64 {
    0.25 * h * h
}

/// Spectral estimate `p (eps^2 theta_1 / s^2 + c)` of the leading conductivity.
pub fn conductivity_estimate(p: f64, epsilon: f64, s: f64, theta_1: f64, c: f64) -> Result<f64> {
    if s == 0.0 || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("scale s must be nonzero, got {s}")));
    }
    if !(p > 0.0 && epsilon >= 0.0 && theta_1 > 0.0 && c >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need p > 0, eps >= 0, theta_1 > 0, c >= 0; got p={p}, eps={epsilon}, theta_1={theta_1}, c={c}"
        )));
    }
    Ok(p * (epsilon * epsilon * theta_1 / (s * s) + c))
}

/// Inputs of [`conductivity_estimate`] other than the eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EstimateParams {
    pub p: f64,
    pub epsilon: f64,
    pub s: f64,
    pub c: f64,
}

/// How [`optimize_rectangle`] scores a channel height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectangleObjective {
    /// Cheeger bound; `h` decreases in `L1`, so the lower end wins.
    CheegerBound,
    /// Grid search over `samples` heights with `pi^2 (1/L1^2 + 1/L2^2)`.
    ExactEigenvalue { samples: usize },
}

/// Channel height `L1` in `range` maximizing the conductivity estimate for a
/// fixed length `l2`, together with that estimate.
pub fn optimize_rectangle(
    l2: f64,
    range: (f64, f64),
    params: &EstimateParams,
    objective: RectangleObjective,
) -> Result<(f64, f64)> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "height range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
        )));
    }
    let score = |l1: f64| -> Result<f64> {
        conductivity_estimate(params.p, params.epsilon, params.s, rectangle_theta(l1, l2)?, params.c)
    };
    match objective {
        RectangleObjective::CheegerBound => {
            let bound = cheeger_lower_bound(cheeger_rectangle(lo, l2)?);
            let sigma = conductivity_estimate(params.p, params.epsilon, params.s, bound, params.c)?;
            Ok((lo, sigma))
        }
        RectangleObjective::ExactEigenvalue { samples } => {
            let k = samples.max(2);
            let mut best = (lo, score(lo)?);
            for i in 1..k {
                let l1 = lo + (hi - lo) * i as f64 / (k - 1) as f64;
                let s = score(l1)?;
                if s > best.1 {
                    best = (l1, s);
                }
            }
            Ok(best)
        }
    }
}

/// Analytic first Dirichlet eigenvalue of an `l1 x l2` rectangle.
pub fn rectangle_theta(l1: f64, l2: f64) -> Result<f64> {
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rectangle sides must be positive, got {l1} x {l2}"
        )));
    }
    let pi2 = std::f64::consts::PI.powi(2);
    Ok(pi2 * (1.0 / (l1 * l1) + 1.0 / (l2 * l2)))
}

/// Contents of `conductivity.json`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConductivityReport {
    pub model: &'static str,
    pub theta_1: f64,
    pub residual: f64,
    pub cheeger_h: Option<f64>,
    pub bound: Option<f64>,
    pub sigma_estimate: f64,
    pub params: EstimateParams,
    /// Voxelized pore sides when the pore is a centered rectangle.
    pub rectangle: Option<[f64; 2]>,
}

/// Side lengths of the pore if it is a single axis-aligned box of voxels that
/// does not touch the cell boundary.
pub fn pore_rectangle(cell: &ReferenceCell) -> Option<Vec<f64>> {
    let d = cell.dim();
    let mut lo = vec![usize::MAX; d];
    let mut hi = vec![0usize; d];
    let mut count = 0usize;
    for v in (0..cell.num_voxels()).filter(|&v| cell.is_pore(v)) {
        count += 1;
        for a in 0..d {
            let c = cell.coord(v, a);
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
    }
    let extent: Vec<usize> = (0..d).map(|a| hi[a] + 1 - lo[a]).collect();
    let boxed = extent.iter().product::<usize>() == count;
    let interior = (0..d).all(|a| lo[a] > 0 && hi[a] + 1 < cell.dims()[a]);
    (count > 0 && boxed && interior)
        .then(|| (0..d).map(|a| extent[a] as f64 * cell.spacing(a)).collect())
}

/// Eigenvalue, Cheeger data (for rectangular 2D pores) and the estimate.
pub fn conductivity_report(
    cell: &ReferenceCell,
    params: &EstimateParams,
    tol: f64,
) -> Result<ConductivityReport> {
    let eig = first_dirichlet_eigenvalue(cell, tol)?;
    let rect = pore_rectangle(cell).filter(|r| r.len() == 2);
    let cheeger_h = rect.as_ref().map(|r| cheeger_rectangle(r[0], r[1])).transpose()?;
    Ok(ConductivityReport {
        model: "conductivity",
        theta_1: eig.theta_1,
        residual: eig.residual,
        cheeger_h,
        bound: cheeger_h.map(cheeger_lower_bound),
        sigma_estimate: conductivity_estimate(params.p, params.epsilon, params.s, eig.theta_1, params.c)?,
        params: *params,
        rectangle: rect.map(|r| [r[0], r[1]]),
    })
}
