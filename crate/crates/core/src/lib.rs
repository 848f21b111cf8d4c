//! Layered vectorization: fits each pre-separated raster layer with a
//! compact, z-ordered stack of filled Bézier paths by gradient descent on a
//! soft rasterizer, pruning primitives whose visible contribution vanishes
//! and adding new ones where residual error concentrates.

pub mod adapt;
pub mod error;
pub mod io;
pub mod optimize;
pub mod pipeline;
pub mod raster;
pub mod scene;

pub use error::{Error, Result};
