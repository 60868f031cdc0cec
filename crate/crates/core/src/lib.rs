//! Differentiable inverse-rendering toolkit: a semi-implicit volumetric
//! renderer, volumetric-to-mesh conversion, a soft mesh rasterizer,
//! instance-level mesh refinement by gradient descent, and 3D shape metrics
//! (voxel IoU, surface F-score, canonical-frame alignment search).
//!
//! All numeric kernels are generic over the scalar type via [`Real`]
//! (`f32` or `f64`); concrete aliases for the main types live at the crate
//! root. File formats and the CLI surface are in [`io`] and the companion
//! `invrend-cli` crate.

pub mod camera;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod float;
pub mod grid;
pub mod image;
pub mod io;
pub mod losses;
mod mc_tables;
pub mod mesh;
pub mod meshex;
pub mod refine;
pub mod softras;
pub mod vec3;
pub mod volren;

pub use camera::Camera;
pub use error::{Error, Result};
pub use float::Real;
pub use grid::{FeatureGrid, OccupancyGrid, SemiImplicitVolume};
pub use image::{Image, Mask};
pub use mesh::TexturedMesh;
pub use vec3::Vec3;

/// Single-precision aliases.
pub type OccupancyGrid32 = grid::OccupancyGrid<f32>;
pub type FeatureGrid32 = grid::FeatureGrid<f32>;
pub type SemiImplicitVolume32 = grid::SemiImplicitVolume<f32>;
pub type Camera32 = camera::Camera<f32>;
pub type TexturedMesh32 = mesh::TexturedMesh<f32>;
pub type Image32 = image::Image<f32>;
pub type Mask32 = image::Mask<f32>;
pub type Vec3f = vec3::Vec3<f32>;

/// Double-precision aliases.
pub type OccupancyGrid64 = grid::OccupancyGrid<f64>;
pub type FeatureGrid64 = grid::FeatureGrid<f64>;
pub type SemiImplicitVolume64 = grid::SemiImplicitVolume<f64>;
pub type Camera64 = camera::Camera<f64>;
pub type TexturedMesh64 = mesh::TexturedMesh<f64>;
pub type Image64 = image::Image<f64>;
pub type Mask64 = image::Mask<f64>;
pub type Vec3d = vec3::Vec3<f64>;
