//! Periodic homogenization of Poisson-Nernst-Planck ion transport in charged
//! porous media.
//!
//! The crate turns a voxelized periodic reference cell into effective
//! diffusion, mobility and permittivity tensors, and solves the upscaled
//! transport equations together with several reduced models.

// NaN-rejecting `!(x > 0.0)` checks and index loops over coupled arrays are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cell_solver;
pub mod conductivity;
pub mod config;
pub mod error;
pub mod geometry;
pub mod limits;
pub mod linalg;
pub mod macro_solver;
pub mod micro_solver;
pub mod pipeline;
pub mod tensors;

pub use error::{Error, Result};

/// Book chapters compiled as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    pub mod geometry {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    pub mod tensors {}
    #[doc = include_str!("../../../book/src/macro.md")]
    pub mod macro_transport {}
    #[doc = include_str!("../../../book/src/limits.md")]
    pub mod limits {}
    #[doc = include_str!("../../../book/src/micro.md")]
    pub mod micro {}
    #[doc = include_str!("../../../book/src/conductivity.md")]
    pub mod conductivity {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
