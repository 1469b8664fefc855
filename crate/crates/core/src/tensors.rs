//! Effective tensors assembled from cell correctors, and diagnostics built on them.
//!
//! Quadrature is face based and reuses the finite-volume gradients of the cell
//! solver. Each voxel face stands for one voxel volume `V`. With `G_a` the
//! face difference quotient along axis `a` and `k_f` the harmonic face
//! coefficient:
//!
//! * permittivity: `eps_kl = (1/|Y|) sum_f V k_f (d_ak - G_a xi^k)(d_al - G_a xi^l)`,
//!   the discrete energy form, symmetric by construction;
//! * diffusion and mobility with `alpha = 0`: the same energy form with unit
//!   coefficient over pore-pore faces;
//! * diffusion and mobility with `alpha > 0`: the flux form over faces normal to
//!   axis `k`. Pore-pore faces use the ion corrector; pore-solid faces count half
//!   and use the pore-side gradient `(k_f / eps^2)(d_kl - G_k xi33^l)` implied by
//!   flux continuity.
//!
//! For `alpha = 0` the two forms coincide (Galerkin orthogonality), and
//! straight channels come out exact.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::cell_solver::{
    harmonic, potential_coefficient, solve_all, CorrectorField, Domain, Family, SolverOptions,
};
use crate::error::{Error, Result};
use crate::geometry::ReferenceCell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorFamily {
    Diffusion,
    Mobility,
    Permittivity,
}

/// Effective coefficients of the upscaled system.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTensors {
    pub d_hat: DMatrix<f64>,
    pub m_hat: DMatrix<f64>,
    pub eps_hat: DMatrix<f64>,
    pub p: f64,
    pub rho_s: f64,
    pub epsilon: f64,
    pub alpha: f64,
}

impl EffectiveTensors {
    /// Closed-form tensors of a straight channel of porosity `p` in `d`
    /// dimensions with insulating walls: `D = M = p` along the channel axes,
    /// zero across, `eps_hat = eps^2 D`.
    pub fn straight_channel(d: usize, p: f64, rho_s: f64, epsilon: f64) -> Self {
        let mut diag = DVector::from_element(d, p);
        diag[1] = 0.0;
        let d_hat = DMatrix::from_diagonal(&diag);
        Self {
            m_hat: d_hat.clone(),
            eps_hat: &d_hat * (epsilon * epsilon),
            d_hat,
            p,
            rho_s,
            epsilon,
            alpha: 0.0,
        }
    }

    /// Builds tensors from explicit matrices; `eps_hat` defaults to `eps^2 D`.
    pub fn from_matrices(
        d_hat: DMatrix<f64>,
        m_hat: DMatrix<f64>,
        eps_hat: Option<DMatrix<f64>>,
        p: f64,
        rho_s: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let d = d_hat.nrows();
        if !d_hat.is_square() || m_hat.shape() != (d, d) {
            return Err(Error::InvalidArgument("tensor shapes differ".into()));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "porosity must lie in (0, 1], got {p}"
            )));
        }
        let eps_hat = eps_hat.unwrap_or_else(|| &d_hat * (epsilon * epsilon));
        if eps_hat.shape() != (d, d) {
            return Err(Error::InvalidArgument("tensor shapes differ".into()));
        }
        Ok(Self {
            d_hat,
            m_hat,
            eps_hat,
            p,
            rho_s,
            epsilon,
            alpha: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.d_hat.nrows()
    }

    /// The insulating-matrix simplification: `M = D` and `eps_hat = eps^2 D`.
    pub fn insulating(&self) -> Self {
        Self {
            m_hat: self.d_hat.clone(),
            eps_hat: &self.d_hat * (self.epsilon * self.epsilon),
            alpha: 0.0,
            ..self.clone()
        }
    }
}

/// Solves all cell problems and assembles the three tensors together with `p` and `rho_s`.
///
/// ```
/// use pnph::geometry::{build_preset, PresetParams};
/// use pnph::tensors::compute_effective_tensors;
///
/// let params = PresetParams::from([("p".to_string(), 0.25), ("n".to_string(), 16.0)]);
/// let cell = build_preset("straight_channel_2d", &params).unwrap();
/// let t = compute_effective_tensors(&cell, &Default::default()).unwrap();
/// assert!((t.d_hat[(0, 0)] - 0.25).abs() < 1e-12);
/// assert!(t.d_hat[(1, 1)].abs() < 1e-12);
/// ```
pub fn compute_effective_tensors(
    cell: &ReferenceCell,
    opts: &SolverOptions,
) -> Result<EffectiveTensors> {
    let corr = solve_all(cell, opts)?;
    let both = [corr.ion.clone(), corr.potential.clone()].concat();
    Ok(EffectiveTensors {
        d_hat: assemble_tensor(cell, &both, TensorFamily::Diffusion)?,
        m_hat: assemble_tensor(cell, &both, TensorFamily::Mobility)?,
        eps_hat: assemble_tensor(cell, &corr.potential, TensorFamily::Permittivity)?,
        p: cell.porosity(),
        rho_s: cell.homogenized_surface_charge(),
        epsilon: cell.epsilon(),
        alpha: cell.alpha(),
    })
}

fn find(cs: &[CorrectorField], family: Family, r: usize) -> Result<&CorrectorField> {
    cs.iter()
        .find(|c| c.family == family && c.direction == r)
        .ok_or(Error::MissingDirection(r))
}

/// Assembles one effective tensor.
///
/// `Diffusion`/`Mobility` take ion correctors for every direction; with
/// `alpha > 0` they also need the matching potential correctors, which may be
/// passed in the same slice. `Permittivity` takes potential correctors.
pub fn assemble_tensor(
    cell: &ReferenceCell,
    correctors: &[CorrectorField],
    family: TensorFamily,
) -> Result<DMatrix<f64>> {
    let d = cell.dim();
    let n = cell.num_voxels();
    for c in correctors {
        if c.values.len() != n {
            return Err(Error::CorrectorMismatch(
                "corrector belongs to another cell".into(),
            ));
        }
        let expected = match c.family {
            Family::Ion => Domain::PoreOnly,
            Family::Potential if cell.alpha() > 0.0 => Domain::FullCell,
            Family::Potential => Domain::PoreOnly,
        };
        if c.domain != expected {
            return Err(Error::CorrectorMismatch(format!(
                "{:?} corrector on {:?} domain",
                c.family, c.domain
            )));
        }
    }
    let vol = cell.voxel_volume() / cell.volume();
    let mut out = DMatrix::zeros(d, d);
    match family {
        TensorFamily::Permittivity => {
            let xi: Vec<&CorrectorField> = (0..d)
                .map(|r| find(correctors, Family::Potential, r))
                .collect::<Result<_>>()?;
            let coeff = potential_coefficient(cell);
            energy_form(cell, &coeff, &xi, vol, &mut out);
        }
        TensorFamily::Diffusion | TensorFamily::Mobility => {
            let ion: Vec<&CorrectorField> = (0..d)
                .map(|r| find(correctors, Family::Ion, r))
                .collect::<Result<_>>()?;
            let unit: Vec<f64> = (0..n)
                .map(|v| if cell.is_pore(v) { 1.0 } else { 0.0 })
                .collect();
            if cell.alpha() == 0.0 {
                energy_form(cell, &unit, &ion, vol, &mut out);
            } else {
                let pot: Vec<&CorrectorField> = (0..d)
                    .map(|r| find(correctors, Family::Potential, r))
                    .collect::<Result<_>>()?;
                let coeff = potential_coefficient(cell);
                let e2 = cell.epsilon() * cell.epsilon();
                for k in 0..d {
                    let h = cell.spacing(k);
                    for v in 0..n {
                        let u = cell.neighbor(v, k, 1);
                        let (pv, pu) = (cell.is_pore(v), cell.is_pore(u));
                        if !pv && !pu {
                            continue;
                        }
                        for l in 0..d {
                            let delta = if k == l { 1.0 } else { 0.0 };
                            let val = if pv && pu {
                                delta - (ion[l].values[u] - ion[l].values[v]) / h
                            } else {
                                let g = (pot[l].values[u] - pot[l].values[v]) / h;
                                0.5 * harmonic(coeff[u], coeff[v]) / e2 * (delta - g)
                            };
                            out[(k, l)] += vol * val;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn energy_form(
    cell: &ReferenceCell,
    coeff: &[f64],
    xi: &[&CorrectorField],
    vol: f64,
    out: &mut DMatrix<f64>,
) {
    let d = cell.dim();
    for a in 0..d {
        let h = cell.spacing(a);
        for v in 0..cell.num_voxels() {
            let u = cell.neighbor(v, a, 1);
            let kf = harmonic(coeff[v], coeff[u]);
            if kf == 0.0 {
                continue;
            }
            let w: Vec<f64> = (0..d)
                .map(|k| {
                    let delta = if a == k { 1.0 } else { 0.0 };
                    delta - (xi[k].values[u] - xi[k].values[v]) / h
                })
                .collect();
            for k in 0..d {
                for l in 0..d {
                    out[(k, l)] += vol * kf * w[k] * w[l];
                }
            }
        }
    }
}

/// Pointwise state `(c+, c-, phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub c_plus: f64,
    pub c_minus: f64,
    pub phi: f64,
}

/// The `3d x 3d` block material tensor
/// `[[D, 0, c- M], [0, D, -c+ M], [0, 0, eps_hat]]` acting on `(grad c+, grad c-, grad phi)`.
pub fn material_tensor(t: &EffectiveTensors, q: &StateVector) -> DMatrix<f64> {
    let d = t.dim();
    let mut s = DMatrix::zeros(3 * d, 3 * d);
    s.view_mut((0, 0), (d, d)).copy_from(&t.d_hat);
    s.view_mut((d, d), (d, d)).copy_from(&t.d_hat);
    s.view_mut((0, 2 * d), (d, d))
        .copy_from(&(&t.m_hat * q.c_minus));
    s.view_mut((d, 2 * d), (d, d))
        .copy_from(&(&t.m_hat * -q.c_plus));
    s.view_mut((2 * d, 2 * d), (d, d)).copy_from(&t.eps_hat);
    s
}

/// Fluxes of the upscaled system.
#[derive(Debug, Clone, PartialEq)]
pub struct Fluxes {
    pub j_plus: DVector<f64>,
    pub j_minus: DVector<f64>,
    pub j_phi: DVector<f64>,
}

/// `J+ = D grad c+ + c+ M grad phi`, `J- = D grad c- - c- M grad phi`, `J_phi = eps_hat grad phi`.
pub fn fluxes(
    t: &EffectiveTensors,
    q: &StateVector,
    grad_c_plus: &DVector<f64>,
    grad_c_minus: &DVector<f64>,
    grad_phi: &DVector<f64>,
) -> Result<Fluxes> {
    let d = t.dim();
    if grad_c_plus.len() != d || grad_c_minus.len() != d || grad_phi.len() != d {
        return Err(Error::InvalidArgument(format!(
            "gradients must have length {d}"
        )));
    }
    let drift = &t.m_hat * grad_phi;
    Ok(Fluxes {
        j_plus: &t.d_hat * grad_c_plus + &drift * q.c_plus,
        j_minus: &t.d_hat * grad_c_minus - &drift * q.c_minus,
        j_phi: &t.eps_hat * grad_phi,
    })
}

/// Eigenvalues below this are treated as zero.
pub const ZERO_EIGENVALUE: f64 = 1e-12;

/// `x~ = D^{-1/2} x` on the range of `D`.
#[derive(Debug, Clone)]
pub struct CoordinateTransform {
    /// Principal directions (columns), ordered by their dominant grid axis.
    pub axes: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// `1/sqrt(lambda)` per principal direction, `None` on parameter axes.
    pub scales: Vec<Option<f64>>,
    /// Pseudo-inverse square root; zero on parameter axes.
    pub inv_sqrt: DMatrix<f64>,
}

impl CoordinateTransform {
    /// Principal directions with a zero eigenvalue.
    pub fn parameter_axes(&self) -> Vec<usize> {
        (0..self.scales.len())
            .filter(|&i| self.scales[i].is_none())
            .collect()
    }
}

pub fn coordinate_transform(d_hat: &DMatrix<f64>) -> CoordinateTransform {
    let n = d_hat.nrows();
    let sym = (d_hat + d_hat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let dominant = |c: usize| {
        (0..n)
            .max_by(|&a, &b| {
                eig.eigenvectors[(a, c)]
                    .abs()
                    .total_cmp(&eig.eigenvectors[(b, c)].abs())
            })
            .unwrap_or(0)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&c| dominant(c));
    let mut axes = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let mut inv_sqrt = DMatrix::zeros(n, n);
    for (i, &c) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(c).into_owned();
        if v[dominant(c)] < 0.0 {
            v = -v;
        }
        axes.set_column(i, &v);
        let lambda = eig.eigenvalues[c];
        eigenvalues.push(lambda);
        if lambda > ZERO_EIGENVALUE {
            let s = 1.0 / lambda.sqrt();
            scales.push(Some(s));
            inv_sqrt += &v * v.transpose() * s;
        } else {
            scales.push(None);
        }
    }
    CoordinateTransform {
        axes,
        eigenvalues,
        scales,
        inv_sqrt,
    }
}

/// Dimensional diffusivities and mobilities of both species.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionalTensors {
    pub d_plus: DMatrix<f64>,
    pub d_minus: DMatrix<f64>,
    pub m_plus: DMatrix<f64>,
    pub m_minus: DMatrix<f64>,
}

/// `D± D_hat` and `(D±/kT) M_hat`.
pub fn dimensionalize(
    t: &EffectiveTensors,
    d_plus: f64,
    d_minus: f64,
    kt: f64,
) -> Result<DimensionalTensors> {
    for (name, v) in [("D+", d_plus), ("D-", d_minus), ("kT", kt)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok(DimensionalTensors {
        d_plus: &t.d_hat * d_plus,
        d_minus: &t.d_hat * d_minus,
        m_plus: &t.m_hat * (d_plus / kt),
        m_minus: &t.m_hat * (d_minus / kt),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TortuosityVariant {
    Petersen,
    ArisSatterfield,
    Constrictivity,
}

/// Tortuosity matrix entry; `Blocked` marks a direction without transport.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TortuosityEntry {
    Value(f64),
    Blocked,
}

impl TortuosityEntry {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(v),
            Self::Blocked => None,
        }
    }
}

impl Serialize for TortuosityEntry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => s.serialize_f64(*v),
            Self::Blocked => s.serialize_str("blocked"),
        }
    }
}

/// Tortuosity and diffusibility matrices (row-major).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tortuosity {
    pub variant: TortuosityVariant,
    pub tau: Vec<Vec<TortuosityEntry>>,
    pub diffusibility: Vec<Vec<f64>>,
}

/// Effective diffusivities at or below this are treated as blocked.
pub const BLOCKED_THRESHOLD: f64 = 1e-10;

/// Componentwise tortuosity from the free diffusivity `d_free` and `D_hat`:
///
/// * Petersen: `tau = sqrt(D_f / D_p)`, `Q = 1/tau^2`;
/// * Aris-Satterfield: `tau = p D_f / D_p`, `Q = p / tau`;
/// * constrictivity `delta`: `tau = sqrt(p delta D_f / D_p)`, `Q = p delta / tau^2`.
///
/// Off-diagonal entries have a zero numerator and are reported as zero.
pub fn tortuosity(
    t: &EffectiveTensors,
    variant: TortuosityVariant,
    d_free: f64,
    constrictivity: Option<f64>,
) -> Result<Tortuosity> {
    let delta = match variant {
        TortuosityVariant::Constrictivity => {
            let c = constrictivity.ok_or_else(|| {
                Error::InvalidArgument("constrictivity variant needs a constrictivity value".into())
            })?;
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(
                    "constrictivity must be positive".into(),
                ));
            }
            c
        }
        _ => 1.0,
    };
    if !(d_free > 0.0) {
        return Err(Error::InvalidArgument(
            "free diffusivity must be positive".into(),
        ));
    }
    let d = t.dim();
    let p = t.p;
    let mut tau = vec![vec![TortuosityEntry::Value(0.0); d]; d];
    let mut q = vec![vec![0.0; d]; d];
    for k in 0..d {
        let dp = t.d_hat[(k, k)];
        if dp <= BLOCKED_THRESHOLD {
            tau[k][k] = TortuosityEntry::Blocked;
            continue;
        }
        let (tk, qk) = match variant {
            TortuosityVariant::Petersen => {
                let tk = d_free.sqrt() / dp.sqrt();
                (tk, 1.0 / (tk * tk))
            }
            TortuosityVariant::ArisSatterfield => {
                let tk = p * d_free / dp;
                (tk, p / tk)
            }
            TortuosityVariant::Constrictivity => {
                let tk = (p * delta * d_free / dp).sqrt();
                (tk, p * delta / (tk * tk))
            }
        };
        tau[k][k] = TortuosityEntry::Value(tk);
        q[k][k] = qk;
    }
    Ok(Tortuosity {
        variant,
        tau,
        diffusibility: q,
    })
}

/// Geometric tortuosity: mean path length over the endpoint distance.
///
/// ```
/// // three paths through a fully open unit cell: straight, L-shaped, diagonal
/// let tau = pnph::tensors::path_tortuosity(&[1.0, 2.0, 2f64.sqrt()], 1.0).unwrap();
/// assert!((tau - (1.0 + 2f64.sqrt() / 3.0)).abs() < 1e-15);
/// ```
pub fn path_tortuosity(path_lengths: &[f64], endpoint_distance: f64) -> Result<f64> {
    if path_lengths.is_empty() {
        return Err(Error::InvalidArgument("no path lengths given".into()));
    }
    if !(endpoint_distance > 0.0) {
        return Err(Error::InvalidArgument(
            "endpoint distance must be positive".into(),
        ));
    }
    if let Some(l) = path_lengths.iter().find(|&&l| !(l >= endpoint_distance)) {
        return Err(Error::InvalidArgument(format!(
            "path length {l} is shorter than the endpoint distance {endpoint_distance}"
        )));
    }
    let mean = path_lengths.iter().sum::<f64>() / path_lengths.len() as f64;
    Ok(mean / endpoint_distance)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// JSON tensor report.
#[derive(Debug, Clone, Serialize)]
pub struct TensorReport {
    pub p: f64,
    pub rho_s: f64,
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(rename = "D_hat")]
    pub d_hat: Vec<Vec<f64>>,
    #[serde(rename = "M_hat")]
    pub m_hat: Vec<Vec<f64>>,
    pub eps_hat: Vec<Vec<f64>>,
    pub tortuosity: Vec<Tortuosity>,
}

impl TensorReport {
    pub fn new(t: &EffectiveTensors, constrictivity: Option<f64>) -> Result<Self> {
        let mut tort = vec![
            tortuosity(t, TortuosityVariant::Petersen, 1.0, None)?,
            tortuosity(t, TortuosityVariant::ArisSatterfield, 1.0, None)?,
        ];
        if constrictivity.is_some() {
            tort.push(tortuosity(
                t,
                TortuosityVariant::Constrictivity,
                1.0,
                constrictivity,
            )?);
        }
        Ok(Self {
            p: t.p,
            rho_s: t.rho_s,
            epsilon: t.epsilon,
            alpha: t.alpha,
            d_hat: rows(&t.d_hat),
            m_hat: rows(&t.m_hat),
            eps_hat: rows(&t.eps_hat),
            tortuosity: tort,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_preset, PresetParams};

    fn params(kv: &[(&str, f64)]) -> PresetParams {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn straight_channel_tensors_exact() {
        for p in [0.25, 0.5, 0.75] {
            let cell = build_preset(
                "straight_channel_2d",
                &params(&[("p", p), ("n", 16.0), ("epsilon", 0.2)]),
            )
            .unwrap();
            let t = compute_effective_tensors(&cell, &Default::default()).unwrap();
            let exact = EffectiveTensors::straight_channel(2, p, 0.0, 0.2);
            assert!((&t.d_hat - &exact.d_hat).amax() < 1e-12);
            assert!((&t.m_hat - &exact.m_hat).amax() < 1e-12);
            assert!((&t.eps_hat - &exact.eps_hat).amax() < 1e-12);
        }
    }

    #[test]
    fn uniform_permittivity() {
        let mut ph = vec![crate::geometry::Phase::Pore; 16 * 16];
        ph[0] = crate::geometry::Phase::Solid;
        let e = 0.3;
        let cell = ReferenceCell::new(vec![16, 16], vec![1.0, 1.0], ph, 0.0, e, e * e).unwrap();
        let t = compute_effective_tensors(&cell, &Default::default()).unwrap();
        assert!((&t.eps_hat - DMatrix::identity(2, 2) * (e * e)).amax() < 1e-12);
    }

    #[test]
    fn missing_direction() {
        let cell = build_preset("straight_channel_2d", &params(&[("n", 8.0)])).unwrap();
        let corr = solve_all(&cell, &Default::default()).unwrap();
        let err = assemble_tensor(&cell, &corr.ion[..1], TensorFamily::Diffusion).unwrap_err();
        assert!(matches!(err, Error::MissingDirection(1)));
        let err = assemble_tensor(&cell, &corr.ion, TensorFamily::Permittivity).unwrap_err();
        assert!(matches!(err, Error::MissingDirection(0)));
    }

    #[test]
    fn material_tensor_blocks() {
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.1);
        let q = StateVector {
            c_plus: 1.0,
            c_minus: 1.0,
            phi: 0.0,
        };
        let s = material_tensor(&t, &q);
        assert_eq!(s[(0, 0)], 0.5);
        assert_eq!(s[(0, 4)], 0.5);
        assert_eq!(s[(2, 4)], -0.5);
        assert_eq!(s[(1, 5)], 0.0);
        let zero = material_tensor(
            &t,
            &StateVector {
                c_plus: 0.0,
                c_minus: 0.0,
                phi: 3.0,
            },
        );
        assert!(zero.view((0, 4), (4, 2)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn charge_flux_identity() {
        let t = EffectiveTensors::straight_channel(3, 0.4, 0.0, 0.1);
        let c = 1.7;
        let q = StateVector {
            c_plus: c,
            c_minus: c,
            phi: 0.0,
        };
        let g = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let gp = DVector::from_vec(vec![1.0, 5.0, -0.5]);
        let j = fluxes(&t, &q, &g, &g, &gp).unwrap();
        let charge = &j.j_plus - &j.j_minus;
        assert!((charge - &t.m_hat * &gp * (2.0 * c)).amax() < 1e-14);
        // the blocked axis carries nothing
        assert_eq!(j.j_plus[1], 0.0);
        assert_eq!(j.j_phi[1], 0.0);
    }

    #[test]
    fn transform_of_straight_channel() {
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.1);
        let tr = coordinate_transform(&t.d_hat);
        assert_eq!(tr.parameter_axes(), vec![1]);
        assert!((tr.scales[0].unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let id = coordinate_transform(&DMatrix::identity(3, 3));
        assert!((id.inv_sqrt - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn dimensionalize_checks() {
        let t = EffectiveTensors::straight_channel(2, 0.5, 0.0, 0.1);
        let dt = dimensionalize(&t, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(dt.d_plus, &dt.d_minus * 2.0);
        assert_eq!(dt.m_plus * 1.0, &dt.d_plus / 1.0);
        assert!(dimensionalize(&t, 0.0, 1.0, 1.0).is_err());
        assert!(dimensionalize(&t, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn tortuosity_variants() {
        let p = 0.36;
        let t = EffectiveTensors::straight_channel(3, p, 0.0, 0.1);
        let pet = tortuosity(&t, TortuosityVariant::Petersen, 1.0, None).unwrap();
        assert_eq!(pet.tau[0][0], TortuosityEntry::Value(1.0 / p.sqrt()));
        assert_eq!(pet.tau[1][1], TortuosityEntry::Blocked);
        let ar = tortuosity(&t, TortuosityVariant::ArisSatterfield, 1.0, None).unwrap();
        assert_eq!(ar.tau[2][2], TortuosityEntry::Value(1.0));
        assert!(tortuosity(&t, TortuosityVariant::Constrictivity, 1.0, None).is_err());
        let c = tortuosity(&t, TortuosityVariant::Constrictivity, 1.0, Some(0.5)).unwrap();
        assert!((c.diffusibility[0][0] - p).abs() < 1e-15);
    }

    #[test]
    fn path_tortuosity_errors() {
        assert!(path_tortuosity(&[], 1.0).is_err());
        assert!(path_tortuosity(&[0.5], 1.0).is_err());
        assert_eq!(path_tortuosity(&[2.0, 4.0], 2.0).unwrap(), 1.5);
    }
}
