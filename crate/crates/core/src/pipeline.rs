//! Runs a [`RunConfig`] end to end.
//!
//! [`execute`] validates the config and computes every artifact in memory;
//! [`run`] then writes them. A failing run therefore leaves the output
//! directory untouched. Artifacts carry a `model` tag and are deterministic
//! for a fixed config, except the wall-clock `runtimes` in `compare.json`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::conductivity::{conductivity_report, EstimateParams};
use crate::config::{Format, Model, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::ReferenceCell;
use crate::limits::{
    ambipolar_coefficients, ambipolar_salt, ambipolar_species, ambipolar_step, frozen_field_step, membrane_step,
    membrane_tensors, thin_dl_solve, thin_film_potential, SaltBoundary,
};
use crate::macro_solver::{
    series_csv, solve_poisson, steady_residuals, steady_state, step_macro_pnp, BoundarySpec, FaceCondition,
    MacroGrid, MacroState, RunSummary,
};
use crate::micro_solver::{
    build_perforated_domain, cell_average, compare_micro_macro, snapshot_csv, step_micro_pnp, MicroState,
};
use crate::tensors::{compute_effective_tensors, EffectiveTensors, TensorReport};

/// A named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    model: &'a str,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct Manifest<'a> {
    model: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    outputs: Vec<&'a str>,
}

struct Outputs<'a> {
    cfg: &'a RunConfig,
    files: Vec<Artifact>,
}

impl Outputs<'_> {
    fn json<T: Serialize>(&mut self, name: &str, body: T) -> Result<()> {
        if self.cfg.output.formats.contains(&Format::Json) {
            let tagged = Tagged {
                model: self.cfg.run.model.name(),
                body,
            };
            self.files.push(Artifact {
                name: name.to_string(),
                contents: serde_json::to_string_pretty(&tagged)? + "\n",
            });
        }
        Ok(())
    }

    fn csv(&mut self, name: &str, contents: String) {
        if self.cfg.output.formats.contains(&Format::Csv) {
            self.files.push(Artifact {
                name: name.to_string(),
                contents,
            });
        }
    }
}

/// Validates `cfg` and computes all artifacts, `manifest.json` last.
pub fn execute(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let cell = cfg.validate()?;
    let mut out = Outputs { cfg, files: Vec::new() };
    match cfg.run.model {
        Model::Cell => {
            let t = compute_effective_tensors(&cell, &cfg.solver.cell_options())?;
            out.json("tensors.json", TensorReport::new(&t, None)?)?;
        }
        Model::Conductivity => {
            let e = cfg.run.estimate;
            let params = EstimateParams {
                p: cell.porosity(),
                epsilon: e.epsilon.unwrap_or(cell.epsilon()),
                s: e.s,
                c: e.c,
            };
            let report = conductivity_report(&cell, &params, cfg.solver.eigen_tol)?;
            if cfg.output.formats.contains(&Format::Json) {
                out.files.push(Artifact {
                    name: "conductivity.json".into(),
                    contents: serde_json::to_string_pretty(&report)? + "\n",
                });
            }
        }
        Model::Micro => run_micro(cfg, &cell, &mut out)?,
        Model::Compare => {
            let bc = cfg.boundary(2)?;
            let (rho_s, p) = (cell.homogenized_surface_charge(), cell.porosity());
            let length = cell.lengths()[0];
            let mut reports = Vec::new();
            for &n in &cfg.run.tiles {
                let init = |x: f64, _y: f64| cfg.run.initial.at(x, n as f64 * length, rho_s, p);
                reports.push(compare_micro_macro(&cell, n, &bc, init, cfg.time_step()?, cfg.run.steps)?);
            }
            #[derive(Serialize)]
            struct Reports<T> {
                reports: T,
            }
            out.json("compare.json", Reports { reports })?;
        }
        _ => run_macroscopic(cfg, &cell, &mut out)?,
    }
    let files = std::mem::take(&mut out.files);
    let manifest = Manifest {
        model: cfg.run.model.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        outputs: files.iter().map(|a| a.name.as_str()).collect(),
    };
    let contents = serde_json::to_string_pretty(&manifest)? + "\n";
    let mut files = files;
    files.push(Artifact {
        name: "manifest.json".into(),
        contents,
    });
    Ok(files)
}

/// Writes artifacts into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.contents)?;
            Ok(path)
        })
        .collect()
}

/// Executes `cfg` and writes the artifacts to `out_dir` (default: the
/// config's output directory).
pub fn run(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let artifacts = execute(cfg)?;
    write_artifacts(out_dir.unwrap_or(&cfg.output.directory), &artifacts)
}

fn recorded(cfg: &RunConfig, step: usize) -> bool {
    step.is_multiple_of(cfg.run.record_every) || step == cfg.run.steps
}

fn initial_state(cfg: &RunConfig, grid: &MacroGrid, t: &EffectiveTensors) -> Result<MacroState> {
    let n = grid.num_nodes();
    let length = grid.lengths()[0];
    let (mut cp, mut cm) = (vec![0.0; n], vec![0.0; n]);
    for v in 0..n {
        (cp[v], cm[v]) = cfg.run.initial.at(grid.center(v)[0], length, t.rho_s, t.p);
    }
    MacroState::new(grid.clone(), cp, cm, vec![0.0; n])
}

fn run_macroscopic(cfg: &RunConfig, cell: &ReferenceCell, out: &mut Outputs<'_>) -> Result<()> {
    let grid = cfg.macro_grid()?;
    let bc = cfg.boundary(grid.dim())?;
    let t = compute_effective_tensors(cell, &cfg.solver.cell_options())?;
    out.json("tensors.json", TensorReport::new(&t, None)?)?;
    let steps = cfg.run.steps;
    let mut state = initial_state(cfg, &grid, &t)?;
    let mut frames = Vec::new();
    let residuals = match cfg.run.model {
        Model::Macro | Model::Membrane => {
            let t = if cfg.run.model == Model::Membrane {
                membrane_tensors(&t, cfg.run.eps_bar.unwrap_or(1.0))?
            } else {
                t
            };
            state.phi = solve_poisson(&state, &t, &bc)?;
            frames.push(state.clone());
            for k in 1..=steps {
                state = if cfg.run.model == Model::Membrane {
                    membrane_step(&state, &t, cfg.run.eps_bar.unwrap_or(1.0), &bc, cfg.time_step()?, cfg.run.mode)?
                } else {
                    step_macro_pnp(&state, &t, &bc, cfg.time_step()?, cfg.run.mode)?
                };
                if recorded(cfg, k) {
                    frames.push(state.clone());
                }
            }
            if cfg.run.steady {
                let mut s = steady_state(&state, &t, &bc, cfg.solver.steady)?;
                s.time = state.time;
                state = s;
                frames.push(state.clone());
            }
            Some(steady_residuals(&state, &t, &bc)?)
        }
        Model::ThinFilm => {
            let phi = thin_film_potential(&grid, &t, &bc)?;
            state.phi = phi.clone();
            frames.push(state.clone());
            for k in 1..=steps {
                state = frozen_field_step(&state, &t, &bc, &phi, cfg.time_step()?)?;
                if recorded(cfg, k) {
                    frames.push(state.clone());
                }
            }
            None
        }
        Model::ThinDl => {
            let c0: Vec<f64> = state.c_plus.iter().zip(&state.c_minus).map(|(a, b)| a + b).collect();
            let rho_s = vec![t.rho_s; grid.num_nodes()];
            let dl = thin_dl_solve(&grid, &c0, &t, &rho_s, &bc, cfg.time_step()?, steps)?;
            for (k, f) in dl.iter().enumerate() {
                if k == 0 || recorded(cfg, k) {
                    let cp = f.c.iter().zip(&f.rho).map(|(c, r)| 0.5 * (c + r)).collect();
                    let cm = f.c.iter().zip(&f.rho).map(|(c, r)| 0.5 * (c - r)).collect();
                    let mut s = MacroState::new(grid.clone(), cp, cm, f.phi.clone())?;
                    s.time = f.time;
                    frames.push(s);
                }
            }
            None
        }
        Model::Ambipolar => {
            ambipolar_run(cfg, &grid, &bc, &t, &state, &mut frames)?;
            None
        }
        _ => unreachable!("not a macroscopic model"),
    };
    out.json("summary.json", RunSummary::from_frames(&frames, residuals))?;
    out.csv("series.csv", series_csv(&frames));
    Ok(())
}

fn ambipolar_run(
    cfg: &RunConfig,
    grid: &MacroGrid,
    bc: &BoundarySpec,
    t: &EffectiveTensors,
    state: &MacroState,
    frames: &mut Vec<MacroState>,
) -> Result<()> {
    let a = cfg.run.ambipolar;
    let k = ambipolar_coefficients(a.z_plus, a.z_minus, a.d_plus, a.d_minus, a.m_plus, a.m_minus, a.kt)?;
    let salt = |cp: f64, cm: f64| ambipolar_salt(cp, cm, t.rho_s, t.p, a.z_plus, a.z_minus, a.e);
    let salt_bc: Vec<[SaltBoundary; 2]> = bc
        .faces
        .iter()
        .map(|pair| {
            pair.map(|f| match f {
                FaceCondition::Dirichlet { c_plus, c_minus, .. } => SaltBoundary::Value(salt(c_plus, c_minus)),
                _ => SaltBoundary::NoFlux,
            })
        })
        .collect();
    let n = grid.num_nodes();
    let phi = if bc.has_dirichlet() {
        thin_film_potential(grid, t, bc)?
    } else {
        vec![0.0; n]
    };
    let rho_s = vec![t.rho_s; n];
    let species = |c: &[f64], time: f64| -> Result<MacroState> {
        let mut cp = vec![0.0; n];
        let mut cm = vec![0.0; n];
        for v in 0..n {
            (cp[v], cm[v]) = ambipolar_species(c[v], t.rho_s, t.p, a.z_plus, a.z_minus, a.e).map_err(|e| match e {
                Error::NegativeConcentration { value, .. } => Error::NegativeConcentration { node: v, value },
                other => other,
            })?;
        }
        let mut s = MacroState::new(grid.clone(), cp, cm, phi.clone())?;
        s.time = time;
        Ok(s)
    };
    let mut c: Vec<f64> = (0..n).map(|v| salt(state.c_plus[v], state.c_minus[v])).collect();
    frames.push(species(&c, 0.0)?);
    let dt = cfg.time_step()?;
    for step in 1..=cfg.run.steps {
        c = ambipolar_step(grid, &c, &k, t, &rho_s, &phi, &salt_bc, dt, a.e)?;
        if recorded(cfg, step) {
            frames.push(species(&c, step as f64 * dt)?);
        }
    }
    Ok(())
}

fn run_micro(cfg: &RunConfig, cell: &ReferenceCell, out: &mut Outputs<'_>) -> Result<()> {
    let n = cfg.run.tiles[0];
    let domain = build_perforated_domain(cell, n, cfg.boundary(2)?)?;
    let (rho_s, p) = (cell.homogenized_surface_charge(), cell.porosity());
    let length = domain.grid().lengths()[0];
    let mut state = MicroState::from_fn(&domain, |x, _| cfg.run.initial.at(x, length, rho_s, p))?;
    let mut frames = vec![cell_average(&domain, &state, n)?];
    let dt = cfg.time_step()?;
    for k in 1..=cfg.run.steps {
        state = step_micro_pnp(&domain, &state, dt)?;
        if recorded(cfg, k) {
            frames.push(cell_average(&domain, &state, n)?);
        }
    }
    out.json("summary.json", RunSummary::from_frames(&frames, None))?;
    out.csv("series.csv", series_csv(&frames));
    out.csv("snapshot.csv", snapshot_csv(&domain, &state));
    Ok(())
}
