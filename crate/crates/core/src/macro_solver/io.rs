use std::fmt::Write as _;
use std::path::Path;

use super::MacroState;
use crate::error::Result;

/// Renders `t, x[, y], c_plus, c_minus, phi` rows for each state in order.
pub fn series_csv(frames: &[MacroState]) -> String {
    let dim = frames.first().map_or(1, |s| s.grid.dim());
    let coords = if dim == 1 { "x" } else { "x,y" };
    let mut out = format!("t,{coords},c_plus,c_minus,phi\n");
    for s in frames {
        for v in 0..s.grid.num_nodes() {
            let xs: Vec<String> = s.grid.center(v).iter().map(|c| format!("{c:.10e}")).collect();
            let _ = writeln!(
                out,
                "{:.10e},{},{:.16e},{:.16e},{:.16e}",
                s.time,
                xs.join(","),
                s.c_plus[v],
                s.c_minus[v],
                s.phi[v]
            );
        }
    }
    out
}

/// Writes [`series_csv`] to `path`.
pub fn write_series_csv(path: &Path, frames: &[MacroState]) -> Result<()> {
    std::fs::write(path, series_csv(frames))?;
    Ok(())
}

/// Run summary written next to the series.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub mass_plus: Vec<f64>,
    pub mass_minus: Vec<f64>,
    /// Steady residuals `(c+, c-, Poisson)` of the final state, when the
    /// model has them.
    pub residuals: Option<[f64; 3]>,
}

impl RunSummary {
    /// Summary of a recorded trajectory; `residuals` refer to the last frame.
    pub fn from_frames(frames: &[MacroState], residuals: Option<[f64; 3]>) -> Self {
        let (mp, mm): (Vec<f64>, Vec<f64>) = frames.iter().map(|s| s.totals()).unzip();
        Self {
            steps: frames.len().saturating_sub(1),
            final_time: frames.last().map_or(0.0, |s| s.time),
            mass_plus: mp,
            mass_minus: mm,
            residuals,
        }
    }
}
