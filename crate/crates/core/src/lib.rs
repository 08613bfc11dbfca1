//! Smoothed-ℓ0 sparse coding and single-image super-resolution.
//!
//! The crate is organised bottom-up:
//!
//! - [`sl0`]: the annealed smoothed-ℓ0 solver for `min ‖α‖₀ s.t. Dα = x`,
//!   its affine feasibility projection, and an ISTA ℓ1 baseline.
//! - [`imaging`]: single-channel images, PGM/PNG I/O, bicubic resampling and
//!   the blur/decimation degradation operator with its adjoint.
//! - [`patches`]: overlapping patch grids, extraction and overlap-averaged merging.
//! - [`dictionary`]: coupled low/high-resolution dictionaries, their binary
//!   file format and the training procedure.
//! - [`superres`]: the reconstruction pipeline (patch coding, HR synthesis,
//!   global reconstruction refinement).
//! - [`metrics`]: PSNR and SSIM (scalar and per-pixel map) plus comparison tables.
//! - [`cli`]: the `sl0sr` command-line front end.

pub mod cli;
pub mod dictionary;
mod error;
pub mod imaging;
pub(crate) mod linalg;
pub mod metrics;
pub mod patches;
pub mod sl0;
pub mod superres;

pub use error::{Error, Result};
