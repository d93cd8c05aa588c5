//! Knowledge-driven synthetic scene generation.
//!
//! The pipeline stages are:
//!
//! 1. **assets** – triangle-mesh import, convex hulls, support surfaces.
//! 2. **knowledge** – annotated pose, location and co-occurrence priors.
//! 3. **reasoning** – pairwise commonsense likelihood of a layout.
//! 4. **physics** – quasi-static settling, penetration and stability gate.
//! 5. **layoutgen** – rejection sampling of layouts, annotator-noise harness.
//! 6. **render** – z-buffered rasterization into RGB, instance, depth and normal maps.
//! 7. **geoloss** – image-translation loss kernels and architecture-string checks.
//! 8. **dataset** – manifests, COCO export, statistics and the end-to-end driver.

pub mod assets;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod geoloss;
pub mod geometry;
pub mod imageio;
pub mod knowledge;
pub mod layout;
pub mod layoutgen;
pub mod physics;
pub mod reasoning;
pub mod render;

pub use error::{Error, Result};
