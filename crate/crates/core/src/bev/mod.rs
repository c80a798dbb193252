//! Bird's-eye-view rendering: camera placement, the overlapping patch
//! layout, and software rasterization of color, height and triangle-id
//! rasters per patch.

mod camera;
mod grid;
mod raster;

pub use camera::{
    make_camera, make_camera_with_z_range, project_vertex, unproject, HeightCodec, OrthoCamera,
};
pub use grid::{make_patch_grid, PatchGrid, PatchRect};
pub use raster::{rasterize_patch, BevPatch, BevRasterizer, NO_COVERAGE};
