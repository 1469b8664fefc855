//! Periodic reference cells on voxel grids.
//!
//! A [`ReferenceCell`] is a `d`-dimensional (`d = 2` or `3`) periodic grid of
//! voxels, each labelled [`Phase::Pore`] or [`Phase::Solid`]. Voxels are stored
//! x-fastest: the flat index of `(i, j, k)` is `i + n1 * (j + n2 * k)`.
//!
//! Interface facets are the voxel faces that separate a pore voxel from a solid
//! neighbour (periodic wrap included). Each facet carries a surface charge
//! density and a surface measure. The measure is the face area scaled by
//! `|n_axis|`, the facet-normal component of the interface normal, so that the
//! facet sum tends to the true interface measure for curved walls rather than
//! to the staircase length. Presets supply their analytic normal; cells read
//! from rasters estimate it from a box-smoothed phase indicator. For
//! axis-aligned walls all variants coincide with the raw face area.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Voxel phase label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Pore,
    Solid,
}

/// A voxel face on the pore-solid interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    /// Pore voxel owning the facet.
    pub voxel: usize,
    pub axis: usize,
    /// +1 or -1: the solid neighbour lies at `voxel + dir * e_axis`.
    pub dir: i8,
    /// Raw face area `prod_{b != axis} h_b`.
    pub face_area: f64,
    /// Surface measure attributed to the facet.
    pub area: f64,
    pub sigma: f64,
}

/// Named preset parameters (`n`, `p`, `sigma`, ...).
pub type PresetParams = BTreeMap<String, f64>;

/// Identifiers accepted by [`build_preset`].
pub const PRESETS: [&str; 5] = [
    "straight_channel_2d",
    "straight_channel_3d",
    "perturbed_channel_3d",
    "rectangle_pore_2d",
    "circular_inclusion_2d",
];

/// Half-width, in voxels, of the box filter used to estimate interface normals.
const NORMAL_FILTER_RADIUS: usize = 2;

/// How facet measures are obtained from the interface normal.
pub enum NormalModel<'a> {
    /// Every wall is normal to a grid axis; the measure is the face area.
    AxisAligned,
    /// Analytic normal evaluated at the facet center (any length, any sign).
    Analytic(&'a dyn Fn(&[f64]) -> Vec<f64>),
    /// Gradient of the box-smoothed solid indicator.
    Smoothed,
}

#[derive(Debug, Clone)]
pub struct ReferenceCell {
    dims: Vec<usize>,
    lengths: Vec<f64>,
    phase: Vec<Phase>,
    facets: Vec<Facet>,
    epsilon: f64,
    alpha: f64,
    components: Components,
}

/// Connected components of the pore phase under periodic adjacency.
#[derive(Debug, Clone)]
pub struct Components {
    /// Component id per voxel (`None` for solid voxels).
    pub label: Vec<Option<usize>>,
    pub count: usize,
    /// `percolates[c][a]`: component `c` wraps around the cell along axis `a`.
    pub percolates: Vec<Vec<bool>>,
}

impl ReferenceCell {
    /// Builds a cell with a uniform surface charge on every interface facet.
    /// Facet normals are estimated from the phase mask.
    pub fn new(
        dims: Vec<usize>,
        lengths: Vec<f64>,
        phase: Vec<Phase>,
        sigma: f64,
        epsilon: f64,
        alpha: f64,
    ) -> Result<Self> {
        Self::with_normals(
            dims,
            lengths,
            phase,
            sigma,
            epsilon,
            alpha,
            NormalModel::Smoothed,
        )
    }

    /// As [`ReferenceCell::new`] with an explicit normal model for facet measures.
    pub fn with_normals(
        dims: Vec<usize>,
        lengths: Vec<f64>,
        phase: Vec<Phase>,
        sigma: f64,
        epsilon: f64,
        alpha: f64,
        normals: NormalModel<'_>,
    ) -> Result<Self> {
        let d = dims.len();
        if d != 2 && d != 3 {
            return Err(Error::Geometry(format!(
                "dimension must be 2 or 3, got {d}"
            )));
        }
        if lengths.len() != d {
            return Err(Error::Geometry(format!(
                "{} lengths given for a {d}-dimensional cell",
                lengths.len()
            )));
        }
        if let Some(n) = dims.iter().find(|&&n| n < 2) {
            return Err(Error::Geometry(format!(
                "every axis needs at least 2 voxels, got {n}"
            )));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Geometry("cell lengths must be positive".into()));
        }
        let total: usize = dims.iter().product();
        if phase.len() != total {
            return Err(Error::Geometry(format!(
                "phase mask has {} entries, expected {total}",
                phase.len()
            )));
        }
        if !phase.contains(&Phase::Pore) {
            return Err(Error::Geometry("pore phase is empty".into()));
        }
        if !phase.contains(&Phase::Solid) {
            return Err(Error::Geometry("solid phase is empty".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Geometry(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Geometry(format!(
                "alpha must be non-negative, got {alpha}"
            )));
        }
        if !sigma.is_finite() {
            return Err(Error::Geometry("sigma must be finite".into()));
        }
        let mut cell = Self {
            dims,
            lengths,
            phase,
            facets: Vec::new(),
            epsilon,
            alpha,
            components: Components {
                label: Vec::new(),
                count: 0,
                percolates: Vec::new(),
            },
        };
        cell.facets = cell.extract_facets(sigma, &normals);
        cell.components = cell.find_components();
        if !cell
            .components
            .percolates
            .iter()
            .any(|p| p.iter().any(|&x| x))
        {
            log::warn!("pore phase is not periodically connected along any axis");
        }
        Ok(cell)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn num_voxels(&self) -> usize {
        self.phase.len()
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phase
    }

    pub fn phase(&self, v: usize) -> Phase {
        self.phase[v]
    }

    pub fn is_pore(&self, v: usize) -> bool {
        self.phase[v] == Phase::Pore
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    /// Voxel edge length along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.dims[axis] as f64
    }

    pub fn voxel_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Cell volume `|Y|`.
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Area of a voxel face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        (0..self.dim())
            .filter(|&b| b != axis)
            .map(|b| self.spacing(b))
            .product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.dims[..axis].iter().product()
    }

    /// Grid coordinate of voxel `v` along `axis`.
    pub fn coord(&self, v: usize, axis: usize) -> usize {
        (v / self.stride(axis)) % self.dims[axis]
    }

    pub fn coords(&self, v: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.coord(v, a)).collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .enumerate()
            .map(|(a, &c)| c * self.stride(a))
            .sum()
    }

    /// Periodic neighbour of `v` one voxel along `axis` in direction `dir`.
    pub fn neighbor(&self, v: usize, axis: usize, dir: i8) -> usize {
        let n = self.dims[axis];
        let s = self.stride(axis);
        let c = (v / s) % n;
        let c2 = if dir > 0 {
            (c + 1) % n
        } else {
            (c + n - 1) % n
        };
        v - c * s + c2 * s
    }

    /// Cell-center position of voxel `v`.
    pub fn center(&self, v: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| (self.coord(v, a) as f64 + 0.5) * self.spacing(a))
            .collect()
    }

    /// Pore volume fraction `|Y^p| / |Y|`.
    pub fn porosity(&self) -> f64 {
        let pores = self.phase.iter().filter(|&&p| p == Phase::Pore).count();
        pores as f64 / self.num_voxels() as f64
    }

    /// `(1/|Y|) * sum_facets sigma * area`.
    pub fn homogenized_surface_charge(&self) -> f64 {
        self.facets.iter().map(|f| f.sigma * f.area).sum::<f64>() / self.volume()
    }

    /// Total interface measure.
    pub fn interface_measure(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    /// Replaces the surface charge on every facet.
    pub fn with_uniform_sigma(mut self, sigma: f64) -> Self {
        for f in &mut self.facets {
            f.sigma = sigma;
        }
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Geometry(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Geometry(format!(
                "alpha must be non-negative, got {alpha}"
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Overrides the surface charge of individual facets, keyed by `(voxel, axis, dir)`.
    pub fn set_facet_sigma(
        &mut self,
        voxel: usize,
        axis: usize,
        dir: i8,
        sigma: f64,
    ) -> Result<()> {
        let f = self
            .facets
            .iter_mut()
            .find(|f| f.voxel == voxel && f.axis == axis && f.dir == dir)
            .ok_or_else(|| {
                Error::Geometry(format!(
                    "no interface facet at voxel {voxel}, axis {axis}, dir {dir}"
                ))
            })?;
        f.sigma = sigma;
        Ok(())
    }

    fn extract_facets(&self, sigma: f64, normals: &NormalModel<'_>) -> Vec<Facet> {
        let smooth = match normals {
            NormalModel::Smoothed => self.smoothed_solid_indicator(),
            _ => Vec::new(),
        };
        let d = self.dim();
        let mut facets = Vec::new();
        for v in 0..self.num_voxels() {
            if !self.is_pore(v) {
                continue;
            }
            for axis in 0..d {
                for dir in [-1i8, 1] {
                    let u = self.neighbor(v, axis, dir);
                    if self.is_pore(u) {
                        continue;
                    }
                    let face_area = self.face_area(axis);
                    let g = match normals {
                        NormalModel::AxisAligned => {
                            facets.push(Facet {
                                voxel: v,
                                axis,
                                dir,
                                face_area,
                                area: face_area,
                                sigma,
                            });
                            continue;
                        }
                        NormalModel::Analytic(f) => {
                            let mut x = self.center(v);
                            x[axis] += 0.5 * dir as f64 * self.spacing(axis);
                            f(&x)
                        }
                        NormalModel::Smoothed => self.smoothed_gradient(&smooth, v, u, axis, dir),
                    };
                    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let cos = if norm > 0.0 {
                        g[axis].abs() / norm
                    } else {
                        1.0
                    };
                    facets.push(Facet {
                        voxel: v,
                        axis,
                        dir,
                        face_area,
                        area: face_area * cos,
                        sigma,
                    });
                }
            }
        }
        facets
    }

    fn smoothed_gradient(
        &self,
        smooth: &[f64],
        v: usize,
        u: usize,
        axis: usize,
        dir: i8,
    ) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        for (b, gb) in g.iter_mut().enumerate() {
            *gb = if b == axis {
                dir as f64 * (smooth[u] - smooth[v]) / self.spacing(b)
            } else {
                let central =
                    |w: usize| smooth[self.neighbor(w, b, 1)] - smooth[self.neighbor(w, b, -1)];
                (central(v) + central(u)) / (4.0 * self.spacing(b))
            };
        }
        g
    }

    /// Solid indicator averaged over a periodic box of `2r+1` voxels per axis.
    fn smoothed_solid_indicator(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self
            .phase
            .iter()
            .map(|&p| if p == Phase::Solid { 1.0 } else { 0.0 })
            .collect();
        for axis in 0..self.dim() {
            let n = self.dims[axis];
            let r = NORMAL_FILTER_RADIUS.min((n - 1) / 2);
            let w = (2 * r + 1) as f64;
            let mut out = vec![0.0; f.len()];
            for (v, o) in out.iter_mut().enumerate() {
                let mut s = f[v];
                let (mut lo, mut hi) = (v, v);
                for _ in 0..r {
                    lo = self.neighbor(lo, axis, -1);
                    hi = self.neighbor(hi, axis, 1);
                    s += f[lo] + f[hi];
                }
                *o = s / w;
            }
            f = out;
        }
        f
    }

    fn find_components(&self) -> Components {
        let d = self.dim();
        let n = self.num_voxels();
        let mut label: Vec<Option<usize>> = vec![None; n];
        // Unwrapped lattice offset of each voxel relative to its component seed.
        let mut lift: Vec<Vec<i64>> = vec![Vec::new(); n];
        let mut percolates = Vec::new();
        let mut count = 0;
        let mut stack = Vec::new();
        for seed in 0..n {
            if !self.is_pore(seed) || label[seed].is_some() {
                continue;
            }
            let mut wraps = vec![false; d];
            label[seed] = Some(count);
            lift[seed] = self.coords(seed).iter().map(|&c| c as i64).collect();
            stack.push(seed);
            while let Some(v) = stack.pop() {
                for axis in 0..d {
                    for dir in [-1i8, 1] {
                        let u = self.neighbor(v, axis, dir);
                        if !self.is_pore(u) {
                            continue;
                        }
                        let mut pos = lift[v].clone();
                        pos[axis] += dir as i64;
                        if label[u].is_none() {
                            label[u] = Some(count);
                            lift[u] = pos;
                            stack.push(u);
                        } else if lift[u] != pos {
                            for b in 0..d {
                                if lift[u][b] != pos[b] {
                                    wraps[b] = true;
                                }
                            }
                        }
                    }
                }
            }
            percolates.push(wraps);
            count += 1;
        }
        Components {
            label,
            count,
            percolates,
        }
    }

    /// Writes the cell in the plain-text raster format read by [`load_raster`].
    ///
    /// Facets whose charge differs from `sigma` are written to a trailing
    /// `facet_sigma` table.
    pub fn to_raster_string(&self, sigma: f64) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}", self.dim());
        for n in &self.dims {
            let _ = write!(s, " {n}");
        }
        s.push_str("\nlengths");
        for l in &self.lengths {
            let _ = write!(s, " {l:?}");
        }
        let _ = writeln!(s, "\nsigma {sigma:?}");
        let n1 = self.dims[0];
        for (v, p) in self.phase.iter().enumerate() {
            s.push(if *p == Phase::Pore { '1' } else { '0' });
            s.push(if (v + 1) % n1 == 0 { '\n' } else { ' ' });
        }
        let odd: Vec<&Facet> = self.facets.iter().filter(|f| f.sigma != sigma).collect();
        if !odd.is_empty() {
            let _ = writeln!(s, "facet_sigma {}", odd.len());
            for f in odd {
                let _ = writeln!(s, "{} {} {} {:?}", f.voxel, f.axis, f.dir, f.sigma);
            }
        }
        s
    }

    pub fn save_raster(&self, path: &Path, sigma: f64) -> Result<()> {
        std::fs::write(path, self.to_raster_string(sigma))?;
        Ok(())
    }
}

/// Reads a raster file. `epsilon` and `alpha` are not part of the format.
pub fn load_raster(path: &Path, epsilon: f64, alpha: f64) -> Result<ReferenceCell> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Raster {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    parse_raster(&text, epsilon, alpha).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::Raster {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })
}

/// Parses raster text; format errors are reported as [`Error::InvalidArgument`].
pub fn parse_raster(text: &str, epsilon: f64, alpha: f64) -> Result<ReferenceCell> {
    let bad = |m: String| Error::InvalidArgument(m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing header".into()))?
        .split_whitespace()
        .collect();
    let d: usize = header
        .first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("header must start with the dimension".into()))?;
    if (d != 2 && d != 3) || header.len() != d + 1 {
        return Err(bad(format!("malformed header `{}`", header.join(" "))));
    }
    let dims: Vec<usize> = header[1..]
        .iter()
        .map(|s| s.parse().map_err(|_| bad(format!("bad grid size `{s}`"))))
        .collect::<Result<_>>()?;

    let len_line: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing lengths line".into()))?
        .split_whitespace()
        .collect();
    if len_line.first() != Some(&"lengths") || len_line.len() != d + 1 {
        return Err(bad("second line must be `lengths l1 .. ld`".into()));
    }
    let lengths: Vec<f64> = len_line[1..]
        .iter()
        .map(|s| s.parse().map_err(|_| bad(format!("bad length `{s}`"))))
        .collect::<Result<_>>()?;

    let sig_line: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing sigma line".into()))?
        .split_whitespace()
        .collect();
    if sig_line.len() != 2 || sig_line[0] != "sigma" {
        return Err(bad("third line must be `sigma <value>`".into()));
    }
    let sigma: f64 = sig_line[1]
        .parse()
        .map_err(|_| bad(format!("bad sigma `{}`", sig_line[1])))?;

    let total: usize = dims.iter().product();
    let mut phase = Vec::with_capacity(total);
    let mut overrides = Vec::new();
    let mut rest = lines.peekable();
    while let Some(line) = rest.next() {
        if line.trim_start().starts_with("facet_sigma") {
            let count: usize = line
                .split_whitespace()
                .nth(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("`facet_sigma` needs a count".into()))?;
            for _ in 0..count {
                let row: Vec<&str> = rest
                    .next()
                    .ok_or_else(|| bad("facet_sigma table is truncated".into()))?
                    .split_whitespace()
                    .collect();
                if row.len() != 4 {
                    return Err(bad("facet rows are `<voxel> <axis> <dir> <sigma>`".into()));
                }
                let voxel: usize = row[0].parse().map_err(|_| bad("bad facet voxel".into()))?;
                let axis: usize = row[1].parse().map_err(|_| bad("bad facet axis".into()))?;
                let dir: i8 = row[2].parse().map_err(|_| bad("bad facet dir".into()))?;
                let s: f64 = row[3].parse().map_err(|_| bad("bad facet sigma".into()))?;
                overrides.push((voxel, axis, dir, s));
            }
            if rest.next().is_some() {
                return Err(bad("unexpected content after facet_sigma table".into()));
            }
            break;
        }
        for tok in line.split_whitespace() {
            phase.push(match tok {
                "0" => Phase::Solid,
                "1" => Phase::Pore,
                other => return Err(bad(format!("phase entries must be 0 or 1, got `{other}`"))),
            });
        }
    }
    if phase.len() != total {
        return Err(bad(format!(
            "dimension mismatch: header declares {total} voxels, found {}",
            phase.len()
        )));
    }
    let mut cell = ReferenceCell::new(dims, lengths, phase, sigma, epsilon, alpha)?;
    for (voxel, axis, dir, s) in overrides {
        cell.set_facet_sigma(voxel, axis, dir, s)?;
    }
    Ok(cell)
}

fn param(params: &PresetParams, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn grid_size(params: &PresetParams, key: &str, default: usize) -> Result<usize> {
    let n = param(params, key, param(params, "n", default as f64));
    if n < 2.0 || n.fract() != 0.0 {
        return Err(Error::Geometry(format!(
            "grid size `{key}` must be an integer >= 2, got {n}"
        )));
    }
    Ok(n as usize)
}

/// Number of rows of a centered slab of fraction `frac` in an axis of `n`
/// voxels, and its first row.
fn centered_rows(frac: f64, n: usize) -> (usize, usize) {
    let k = (frac * n as f64).round().clamp(0.0, n as f64) as usize;
    (k, (n - k) / 2)
}

/// Parameter names accepted by a preset (empty for unknown names).
pub fn preset_keys(name: &str) -> &'static [&'static str] {
    match name {
        "straight_channel_2d" => &["sigma", "epsilon", "alpha", "n", "n1", "n2", "p"],
        "straight_channel_3d" => &["sigma", "epsilon", "alpha", "n", "n1", "n2", "n3", "p"],
        "perturbed_channel_3d" => &[
            "sigma",
            "epsilon",
            "alpha",
            "n",
            "n1",
            "n2",
            "n3",
            "height",
            "notch_depth",
            "notch_width",
        ],
        "rectangle_pore_2d" => &[
            "sigma", "epsilon", "alpha", "n", "n1", "n2", "a", "b", "l1", "l2",
        ],
        "circular_inclusion_2d" => &["sigma", "epsilon", "alpha", "n", "n1", "n2", "radius"],
        _ => &[],
    }
}

/// Default perturbed-channel shape: slab height, notch depth from each wall and
/// notch width along the channel, all as fractions of the cell edge.
pub const PERTURBED_DEFAULTS: (f64, f64, f64) = (0.875, 0.375, 0.25);

/// Builds one of the canonical cells listed in [`PRESETS`].
///
/// Every preset accepts `sigma` (default 0), `epsilon` (default 1), `alpha`
/// (default 0) and a resolution `n` (per-axis overrides `n1`, `n2`, `n3`).
///
/// * `straight_channel_2d`, `straight_channel_3d`: pore slab of fraction `p`
///   (default 0.5) normal to axis 2, so the channel runs along axis 1 (and 3).
/// * `perturbed_channel_3d`: slab of fraction `height` normal to axis 2 with a
///   notch of depth `notch_depth` cut from both walls over a fraction
///   `notch_width` of axis 1; uniform along axis 3.
/// * `rectangle_pore_2d`: centered `a x b` pore (full side lengths) in an
///   `l1 x l2` cell.
/// * `circular_inclusion_2d`: solid disk of `radius` centered in the unit cell.
///
/// ```
/// use pnph::geometry::{build_preset, PresetParams};
///
/// let params = PresetParams::from([("p".to_string(), 0.5), ("n".to_string(), 64.0)]);
/// let cell = build_preset("straight_channel_2d", &params).unwrap();
/// assert_eq!(cell.porosity(), 0.5);
/// ```
pub fn build_preset(name: &str, params: &PresetParams) -> Result<ReferenceCell> {
    if !PRESETS.contains(&name) {
        return Err(Error::UnknownPreset(name.to_string()));
    }
    let allowed = preset_keys(name);
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Geometry(format!(
            "preset `{name}` does not take parameter `{k}`"
        )));
    }
    let sigma = param(params, "sigma", 0.0);
    let epsilon = param(params, "epsilon", 1.0);
    let alpha = param(params, "alpha", 0.0);
    let check_frac = |key: &str, v: f64| -> Result<()> {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Geometry(format!(
                "`{key}` must lie in (0, 1), got {v}"
            )));
        }
        Ok(())
    };
    match name {
        "straight_channel_2d" | "straight_channel_3d" => {
            let d = if name.ends_with("2d") { 2 } else { 3 };
            let default_n = if d == 2 { 64 } else { 32 };
            let mut dims = vec![
                grid_size(params, "n1", default_n)?,
                grid_size(params, "n2", default_n)?,
            ];
            if d == 3 {
                dims.push(grid_size(params, "n3", default_n)?);
            }
            let p = param(params, "p", 0.5);
            check_frac("p", p)?;
            let (k, start) = centered_rows(p, dims[1]);
            let total: usize = dims.iter().product();
            let phase = (0..total)
                .map(|v| {
                    let j = (v / dims[0]) % dims[1];
                    if j >= start && j < start + k {
                        Phase::Pore
                    } else {
                        Phase::Solid
                    }
                })
                .collect();
            ReferenceCell::with_normals(
                dims,
                vec![1.0; d],
                phase,
                sigma,
                epsilon,
                alpha,
                NormalModel::AxisAligned,
            )
        }
        "perturbed_channel_3d" => {
            let dims = vec![
                grid_size(params, "n1", 48)?,
                grid_size(params, "n2", 48)?,
                grid_size(params, "n3", 48)?,
            ];
            let (dh, dd, dw) = PERTURBED_DEFAULTS;
            let height = param(params, "height", dh);
            let depth = param(params, "notch_depth", dd);
            let width = param(params, "notch_width", dw);
            check_frac("height", height)?;
            check_frac("notch_width", width)?;
            if !(depth >= 0.0 && 2.0 * depth < height) {
                return Err(Error::Geometry(format!(
                    "`notch_depth` must lie in [0, height/2), got {depth}"
                )));
            }
            let (k, start) = centered_rows(height, dims[1]);
            let notch = (depth * dims[1] as f64).round() as usize;
            let (wk, wstart) = centered_rows(width, dims[0]);
            let total: usize = dims.iter().product();
            let phase = (0..total)
                .map(|v| {
                    let i = v % dims[0];
                    let j = (v / dims[0]) % dims[1];
                    let in_slab = j >= start && j < start + k;
                    let in_notch = i >= wstart
                        && i < wstart + wk
                        && (j < start + notch || j >= start + k - notch);
                    if in_slab && !in_notch {
                        Phase::Pore
                    } else {
                        Phase::Solid
                    }
                })
                .collect();
            ReferenceCell::with_normals(
                dims,
                vec![1.0; 3],
                phase,
                sigma,
                epsilon,
                alpha,
                NormalModel::AxisAligned,
            )
        }
        "rectangle_pore_2d" => {
            let dims = vec![grid_size(params, "n1", 64)?, grid_size(params, "n2", 64)?];
            let l1 = param(params, "l1", 1.0);
            let l2 = param(params, "l2", 1.0);
            let a = param(params, "a", 0.5 * l1);
            let b = param(params, "b", 0.5 * l2);
            if !(a > 0.0 && a < l1 && b > 0.0 && b < l2) {
                return Err(Error::Geometry(format!(
                    "rectangle {a} x {b} must fit strictly inside the {l1} x {l2} cell"
                )));
            }
            let (ka, sa) = centered_rows(a / l1, dims[0]);
            let (kb, sb) = centered_rows(b / l2, dims[1]);
            let total: usize = dims.iter().product();
            let phase = (0..total)
                .map(|v| {
                    let i = v % dims[0];
                    let j = v / dims[0];
                    if i >= sa && i < sa + ka && j >= sb && j < sb + kb {
                        Phase::Pore
                    } else {
                        Phase::Solid
                    }
                })
                .collect();
            ReferenceCell::with_normals(
                dims,
                vec![l1, l2],
                phase,
                sigma,
                epsilon,
                alpha,
                NormalModel::AxisAligned,
            )
        }
        "circular_inclusion_2d" => {
            let dims = vec![grid_size(params, "n1", 64)?, grid_size(params, "n2", 64)?];
            let radius = param(params, "radius", 0.25);
            if !(radius > 0.0 && radius < 0.5) {
                return Err(Error::Geometry(format!(
                    "`radius` must lie in (0, 0.5), got {radius}"
                )));
            }
            let total: usize = dims.iter().product();
            let phase = (0..total)
                .map(|v| {
                    let x = ((v % dims[0]) as f64 + 0.5) / dims[0] as f64 - 0.5;
                    let y = ((v / dims[0]) as f64 + 0.5) / dims[1] as f64 - 0.5;
                    if x * x + y * y < radius * radius {
                        Phase::Solid
                    } else {
                        Phase::Pore
                    }
                })
                .collect();
            let radial = |x: &[f64]| vec![x[0] - 0.5, x[1] - 0.5];
            ReferenceCell::with_normals(
                dims,
                vec![1.0, 1.0],
                phase,
                sigma,
                epsilon,
                alpha,
                NormalModel::Analytic(&radial),
            )
        }
        _ => unreachable!(),
    }
}
