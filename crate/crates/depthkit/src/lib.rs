//! Geometric and numeric kernels for cross-camera metric depth estimation.
//!
//! The crate canonicalizes images from pinhole, Kannala-Brandt fisheye,
//! unified/MEI, and equirectangular cameras into a shared ERP space, builds
//! latitude-weighted rotary positional embeddings for that space, upsamples
//! coarse scale maps under relative-depth guidance, composes metric depth
//! from relative depth plus scale and shift, and scores predictions with
//! the SIlog loss family and the standard inlier/error metrics. Analytic
//! scenes make the whole pipeline verifiable without a trained network.

pub mod canonical;
pub mod cli;
pub mod depth;
pub mod dgse;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod rope;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{DepthMap, Grid};
