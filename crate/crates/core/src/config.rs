//! JSON run configuration.
//!
//! ```json
//! {
//!   "geometry": { "preset": "straight_channel_2d", "params": { "p": 0.5, "n": 32 },
//!                 "sigma": -0.2, "epsilon": 0.5 },
//!   "solver": { "tol": 1e-10 },
//!   "run": { "model": "macro", "grid": { "n": [64], "lengths": [1.0] },
//!            "dt": 0.01, "steps": 20,
//!            "bc": [[{ "applied_current": { "current": 0.1 } },
//!                    { "applied_current": { "current": 0.1 } }]] },
//!   "output": { "directory": "out" }
//! }
//! ```
//!
//! Unknown keys are rejected. [`RunConfig::validate`] performs every check that
//! does not require running a solver, so a config that validates fails later
//! only for numerical or physical reasons.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell_solver::SolverOptions;
use crate::error::{Error, Result};
use crate::geometry::{build_preset, load_raster, PresetParams, ReferenceCell};
use crate::macro_solver::{BoundarySpec, FaceCondition, MacroGrid, SteadyOptions, StepMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Cell,
    Macro,
    Micro,
    ThinDl,
    Membrane,
    ThinFilm,
    Ambipolar,
    Conductivity,
    Compare,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Cell => "cell",
            Model::Macro => "macro",
            Model::Micro => "micro",
            Model::ThinDl => "thin_dl",
            Model::Membrane => "membrane",
            Model::ThinFilm => "thin_film",
            Model::Ambipolar => "ambipolar",
            Model::Conductivity => "conductivity",
            Model::Compare => "compare",
        }
    }

    /// Models integrating the upscaled equations on a macroscopic grid.
    pub fn is_macroscopic(self) -> bool {
        matches!(
            self,
            Model::Macro | Model::ThinDl | Model::Membrane | Model::ThinFilm | Model::Ambipolar
        )
    }

    fn is_micro(self) -> bool {
        matches!(self, Model::Micro | Model::Compare)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Either a named preset or a raster file. `sigma`, `epsilon` and `alpha`
/// override the preset parameters (or the raster header).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub preset: Option<String>,
    pub raster: Option<PathBuf>,
    #[serde(default)]
    pub params: PresetParams,
    pub sigma: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Relative residual of the cell problems.
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// Relative tolerance of the eigenvalue iteration.
    pub eigen_tol: f64,
    pub steady: SteadyOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            eigen_tol: crate::conductivity::EIGEN_TOL,
            steady: SteadyOptions::default(),
        }
    }
}

impl SolverConfig {
    pub fn cell_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    pub lengths: Vec<f64>,
}

/// `c+-(x) = value * (1 + amplitude cos(2 pi k x / L))` along axis 1. With
/// `neutralize` the surface charge is compensated by adding `-rho_s/p` to `c+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub c_plus: f64,
    pub c_minus: f64,
    pub amplitude: f64,
    pub wavenumber: f64,
    pub neutralize: bool,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            c_plus: 1.0,
            c_minus: 1.0,
            amplitude: 0.0,
            wavenumber: 1.0,
            neutralize: false,
        }
    }
}

impl InitialConfig {
    /// Species values at a point with first coordinate `x` in a domain of
    /// length `length`, for surface charge `rho_s` and porosity `p`.
    pub fn at(&self, x: f64, length: f64, rho_s: f64, p: f64) -> (f64, f64) {
        let shape = 1.0 + self.amplitude * (2.0 * std::f64::consts::PI * self.wavenumber * x / length).cos();
        let shift = if self.neutralize { -rho_s / p } else { 0.0 };
        (self.c_plus * shape + shift, self.c_minus * shape)
    }
}

/// Species parameters of the ambipolar model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmbipolarConfig {
    pub z_plus: f64,
    pub z_minus: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    pub kt: f64,
    pub e: f64,
}

impl Default for AmbipolarConfig {
    fn default() -> Self {
        Self {
            z_plus: 1.0,
            z_minus: 1.0,
            d_plus: 1.0,
            d_minus: 1.0,
            m_plus: 1.0,
            m_minus: 1.0,
            kt: 1.0,
            e: 1.0,
        }
    }
}

/// Inputs of the conductivity estimate; `epsilon` defaults to the cell's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub epsilon: Option<f64>,
    pub s: f64,
    pub c: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            s: 1.0,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub model: Model,
    pub grid: Option<GridConfig>,
    pub dt: Option<f64>,
    #[serde(default)]
    pub steps: usize,
    /// `bc[axis] = [low, high]`; all faces insulating when omitted.
    pub bc: Option<Vec<[FaceCondition; 2]>>,
    #[serde(default)]
    pub mode: StepMode,
    #[serde(default)]
    pub initial: InitialConfig,
    /// Append the steady state to the `macro` series.
    #[serde(default)]
    pub steady: bool,
    /// Store every k-th step in the series (the last step is always stored).
    #[serde(default = "one")]
    pub record_every: usize,
    /// Macroscopic Debye ratio of the membrane limit.
    pub eps_bar: Option<f64>,
    #[serde(default)]
    pub ambipolar: AmbipolarConfig,
    /// Tile counts; `micro` uses the first entry, `compare` all of them.
    #[serde(default)]
    pub tiles: Vec<usize>,
    #[serde(default)]
    pub estimate: EstimateConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    /// Parses a config file. Relative raster paths resolve against the
    /// directory of the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if let (Some(r), Some(dir)) = (cfg.geometry.raster.as_mut(), path.parent()) {
            if r.is_relative() {
                *r = dir.join(&*r);
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Builds the reference cell described by the geometry section.
    pub fn build_cell(&self) -> Result<ReferenceCell> {
        let g = &self.geometry;
        match (&g.preset, &g.raster) {
            (Some(name), None) => {
                let mut params = g.params.clone();
                for (k, v) in [("sigma", g.sigma), ("epsilon", g.epsilon), ("alpha", g.alpha)] {
                    if let Some(v) = v {
                        params.insert(k.to_string(), v);
                    }
                }
                build_preset(name, &params)
            }
            (None, Some(path)) => {
                if !g.params.is_empty() {
                    return Err(config_err("`params` apply to presets only"));
                }
                if !path.exists() {
                    return Err(config_err(format!("raster {} does not exist", path.display())));
                }
                let mut cell = load_raster(path, g.epsilon.unwrap_or(1.0), g.alpha.unwrap_or(0.0))?;
                if let Some(s) = g.sigma {
                    cell = cell.with_uniform_sigma(s);
                }
                Ok(cell)
            }
            _ => Err(config_err("geometry needs exactly one of `preset` and `raster`")),
        }
    }

    pub fn macro_grid(&self) -> Result<MacroGrid> {
        let g = self
            .run
            .grid
            .as_ref()
            .ok_or_else(|| config_err(format!("model `{}` needs `run.grid`", self.run.model.name())))?;
        if g.n.len() != g.lengths.len() || !(1..=2).contains(&g.n.len()) {
            return Err(config_err("`run.grid` needs one or two axes with matching `n` and `lengths`"));
        }
        MacroGrid::new(g.n.clone(), g.lengths.clone())
    }

    /// Boundary conditions for a grid of dimension `dim`.
    pub fn boundary(&self, dim: usize) -> Result<BoundarySpec> {
        match &self.run.bc {
            None => Ok(BoundarySpec::no_flux(dim)),
            Some(faces) if faces.len() == dim => Ok(BoundarySpec { faces: faces.clone() }),
            Some(faces) => Err(config_err(format!(
                "`run.bc` lists {} axes for a {dim}-dimensional domain",
                faces.len()
            ))),
        }
    }

    fn dt(&self) -> Result<f64> {
        match self.run.dt {
            Some(dt) if dt > 0.0 && dt.is_finite() => Ok(dt),
            Some(dt) => Err(config_err(format!("`run.dt` must be positive, got {dt}"))),
            None => Err(config_err(format!("model `{}` needs `run.dt`", self.run.model.name()))),
        }
    }

    /// Checks the whole configuration without running any solver. Returns the
    /// reference cell so callers need not rebuild it.
    pub fn validate(&self) -> Result<ReferenceCell> {
        let s = &self.solver;
        if !(s.tol > 0.0 && s.eigen_tol > 0.0 && s.steady.tol > 0.0) {
            return Err(config_err("all tolerances must be positive"));
        }
        if !(s.steady.damping > 0.0 && s.steady.damping <= 1.0) {
            return Err(config_err("`solver.steady.damping` must lie in (0, 1]"));
        }
        if s.max_iter == Some(0) {
            return Err(config_err("`solver.max_iter` must be positive"));
        }
        if self.output.formats.is_empty() {
            return Err(config_err("`output.formats` is empty"));
        }
        let cell = self.build_cell()?;
        let run = &self.run;
        let model = run.model;
        if run.record_every == 0 {
            return Err(config_err("`run.record_every` must be positive"));
        }
        if run.steady && model != Model::Macro {
            return Err(config_err("`run.steady` applies to the macro model only"));
        }
        if model.is_macroscopic() {
            let grid = self.macro_grid()?;
            if grid.dim() > cell.dim() {
                return Err(config_err("macro grid has more axes than the reference cell"));
            }
            let bc = self.boundary(grid.dim())?;
            bc.check(&grid)?;
            if run.steps > 0 || model != Model::ThinFilm {
                self.dt()?;
            }
            let current = bc
                .faces
                .iter()
                .flatten()
                .any(|f| matches!(f, FaceCondition::AppliedCurrent { .. }));
            if current && matches!(model, Model::ThinFilm | Model::Ambipolar) {
                return Err(config_err(format!(
                    "model `{}` does not accept applied-current faces",
                    model.name()
                )));
            }
            if model == Model::ThinFilm && !bc.has_dirichlet() {
                return Err(config_err("thin_film model needs at least one Dirichlet face"));
            }
            if model == Model::Membrane && !matches!(run.eps_bar, Some(e) if e > 0.0) {
                return Err(config_err("membrane model needs a positive `run.eps_bar`"));
            }
            if model == Model::Ambipolar {
                let a = run.ambipolar;
                crate::limits::ambipolar_coefficients(
                    a.z_plus, a.z_minus, a.d_plus, a.d_minus, a.m_plus, a.m_minus, a.kt,
                )?;
                if !(a.e > 0.0) {
                    return Err(config_err("`run.ambipolar.e` must be positive"));
                }
            }
        }
        if model.is_micro() {
            if cell.dim() != 2 {
                return Err(config_err(format!("model `{}` needs a 2D cell", model.name())));
            }
            if run.tiles.is_empty() || run.tiles.iter().any(|&n| n == 0 || n > crate::micro_solver::MAX_TILES) {
                return Err(config_err(format!(
                    "`run.tiles` needs tile counts in 1..={}",
                    crate::micro_solver::MAX_TILES
                )));
            }
            self.dt()?;
            let bc = self.boundary(2)?;
            let probe = MacroGrid::new(vec![2, 2], vec![1.0, 1.0])?;
            bc.check(&probe)?;
            let n = *run.tiles.iter().max().unwrap_or(&1);
            let voxels = cell.num_voxels() * n * n;
            if voxels > crate::micro_solver::VOXEL_CAP {
                return Err(Error::TooLarge {
                    voxels,
                    cap: crate::micro_solver::VOXEL_CAP,
                });
            }
        }
        if model == Model::Conductivity {
            let e = run.estimate;
            if e.s == 0.0 || !(e.c >= 0.0) || e.epsilon.is_some_and(|x| !(x >= 0.0)) {
                return Err(config_err("`run.estimate` needs s != 0, c >= 0 and epsilon >= 0"));
            }
        }
        Ok(cell)
    }

    /// Time step, validated.
    pub fn time_step(&self) -> Result<f64> {
        self.dt()
    }
}
