//! Occluder removal for textured surface meshes.
//!
//! The pipeline renders a top-down orthographic view of the mesh in
//! overlapping patches, takes per-patch occluder masks, inpaints the masked
//! color and height, writes the inpainted elevations back into the mesh and
//! makes the inpainted color visible on it.

pub mod bev;
pub mod error;
pub mod fill;
pub mod grid;
pub mod inpaint;
pub mod mask;
pub mod mesh;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod remesh;
pub mod retexture;
pub mod sample;
pub mod synth;

pub use error::{Error, Result};
