//! Making inpainted color visible on the output mesh, either through a second
//! UV set with a blend mask or by rewriting the base texture in place.

use image::imageops::{self, FilterType};
use image::{DynamicImage, GenericImage, GenericImageView, Rgba};
use serde::{Deserialize, Serialize};

use crate::bev::{project_vertex, OrthoCamera};
use crate::error::{Error, Result};
use crate::fill;
use crate::grid::{self, ColorRaster};
use crate::mask::MaskMosaic;
use crate::mesh::{TexturedMesh, BLEND_TEXTURE, INPAINT_TEXTURE};
use crate::par;
use crate::sample::bilinear_rgb;

/// Shading rule a viewer should apply to meshes written in blend mode.
pub const BLEND_CONTRACT: &str = "final = mix(base(uv0), inpaint(uv1), blend(uv1).r / 255)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureMode {
    #[default]
    Blend,
    Resample,
}

impl std::str::FromStr for TextureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blend" => Ok(TextureMode::Blend),
            "resample" => Ok(TextureMode::Resample),
            _ => Err(Error::InvalidArgument(format!(
                "unknown texture mode `{s}` (expected blend or resample)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetextureConfig {
    pub mode: TextureMode,
    /// Longest side of the inpaint and blend textures; larger mosaics are
    /// downscaled.
    pub max_texture_px: usize,
}

impl Default for RetextureConfig {
    fn default() -> Self {
        Self {
            mode: TextureMode::Blend,
            max_texture_px: 8192,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetextureReport {
    /// Vertices whose uv1 fell outside [0, 1] and was clamped.
    pub clamped_uv: usize,
    /// Triangles skipped because their texture-space area is zero.
    pub zero_uv_area: usize,
    pub texels_rewritten: usize,
}

pub fn retexture(
    mesh: &TexturedMesh,
    camera: &OrthoCamera,
    color_mosaic: &ColorRaster,
    mask: &MaskMosaic,
    cfg: &RetextureConfig,
) -> Result<(TexturedMesh, RetextureReport)> {
    match cfg.mode {
        TextureMode::Blend => build_blend_layer(mesh, camera, color_mosaic, mask, cfg.max_texture_px),
        TextureMode::Resample => resample_texture(mesh, camera, color_mosaic, mask),
    }
}

fn check_dims(camera: &OrthoCamera, color_mosaic: &ColorRaster, mask: &MaskMosaic) -> Result<()> {
    let want = (camera.mosaic_width, camera.mosaic_height);
    if color_mosaic.dims() != want || (mask.width(), mask.height()) != want {
        return Err(Error::InvalidArgument(format!(
            "color mosaic {}x{} and mask {}x{} must match the {}x{} camera mosaic",
            color_mosaic.width(),
            color_mosaic.height(),
            mask.width(),
            mask.height(),
            want.0,
            want.1
        )));
    }
    Ok(())
}

/// Scale factor bringing the longest side down to `max_px`.
fn fit(w: usize, h: usize, max_px: usize) -> (u32, u32) {
    let longest = w.max(h);
    if longest <= max_px || max_px == 0 {
        return (w as u32, h as u32);
    }
    let s = max_px as f64 / longest as f64;
    (((w as f64 * s).round() as u32).max(1), ((h as f64 * s).round() as u32).max(1))
}

/// Adds uv1 (the vertex's mosaic position normalized to [0, 1]), the color
/// mosaic as the inpaint texture and the mask as a 0/255 blend texture. An
/// empty mask leaves the mesh untouched.
pub fn build_blend_layer(
    mesh: &TexturedMesh,
    camera: &OrthoCamera,
    color_mosaic: &ColorRaster,
    mask: &MaskMosaic,
    max_texture_px: usize,
) -> Result<(TexturedMesh, RetextureReport)> {
    check_dims(camera, color_mosaic, mask)?;
    let mut report = RetextureReport::default();
    if mask.is_empty() {
        return Ok((mesh.clone(), report));
    }
    let (mw, mh) = (camera.mosaic_width as f64, camera.mosaic_height as f64);
    let uv1: Vec<([f32; 2], bool)> = par::map_range(mesh.vertex_count(), |i| {
        let p = project_vertex(camera, mesh.position(i));
        let (u, v) = (p[0] / mw, p[1] / mh);
        let clamped = !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v);
        ([u.clamp(0.0, 1.0) as f32, v.clamp(0.0, 1.0) as f32], clamped)
    });
    report.clamped_uv = uv1.iter().filter(|(_, c)| *c).count();
    if report.clamped_uv > 0 {
        log::warn!("{} vertices project outside the mosaic; uv1 clamped", report.clamped_uv);
    }

    let (tw, th) = fit(color_mosaic.width(), color_mosaic.height(), max_texture_px);
    let mut inpaint = grid::raster_to_rgb_image(color_mosaic);
    let blend_raster = mask.to_raster().map(|&m| if m { 255u8 } else { 0 });
    let mut blend = grid::gray_to_image(&blend_raster);
    if (tw, th) != (inpaint.width(), inpaint.height()) {
        inpaint = imageops::resize(&inpaint, tw, th, FilterType::Triangle);
        blend = imageops::resize(&blend, tw, th, FilterType::Nearest);
    }

    let mut out = mesh.clone();
    out.uv1 = Some(uv1.into_iter().map(|(uv, _)| uv).collect());
    out.textures.insert(INPAINT_TEXTURE.into(), DynamicImage::ImageRgb8(inpaint));
    out.textures.insert(BLEND_TEXTURE.into(), DynamicImage::ImageLuma8(blend));
    out.material.inpaint_texture = Some(INPAINT_TEXTURE.into());
    out.material.blend_mask_texture = Some(BLEND_TEXTURE.into());
    Ok((out, report))
}

/// Rewrites base-texture texels whose surface point lies in the mask with a
/// bilinear sample of the color mosaic. Texels are visited by rasterizing
/// each triangle in texture space; a texel shared by several triangles is
/// decided by the lowest triangle index. Unmasked texels are untouched.
pub fn resample_texture(
    mesh: &TexturedMesh,
    camera: &OrthoCamera,
    color_mosaic: &ColorRaster,
    mask: &MaskMosaic,
) -> Result<(TexturedMesh, RetextureReport)> {
    check_dims(camera, color_mosaic, mask)?;
    let name = mesh
        .material
        .base_texture
        .clone()
        .ok_or_else(|| Error::InvalidArgument("resample mode needs a base texture".into()))?;
    let base = mesh
        .textures
        .get(&name)
        .ok_or_else(|| Error::Validation(format!("base texture `{name}` is missing")))?;
    let mut report = RetextureReport::default();
    let mut out = mesh.clone();
    out.uv1 = None;
    out.material.inpaint_texture = None;
    out.material.blend_mask_texture = None;
    out.textures.retain(|k, _| *k == name);
    if mask.is_empty() {
        return Ok((out, report));
    }

    let (tw, th) = (base.width() as usize, base.height() as usize);
    // Per triangle: covered texels and, where masked, their new color.
    let texel_tri = |t: usize| -> Option<Vec<(usize, Option<[u8; 3]>)>> {
        let idx = mesh.triangles[t];
        let uv = idx.map(|i| {
            let [u, v] = mesh.uv0[i as usize];
            [u as f64 * tw as f64, v as f64 * th as f64]
        });
        let world = idx.map(|i| mesh.position(i as usize));
        let mut hits = Vec::new();
        let ok = fill::scan_triangle(uv.map(fill::snap), [0, 0, tw, th], |x, y| {
            let color = fill::barycentric(&uv, [x as f64 + 0.5, y as f64 + 0.5]).and_then(|l| {
                let wx = l[0] * world[0][0] + l[1] * world[1][0] + l[2] * world[2][0];
                let wy = l[0] * world[0][1] + l[1] * world[1][1] + l[2] * world[2][1];
                let p = camera.world_to_pixel(wx, wy);
                if !camera.contains_pixel(p) {
                    return None;
                }
                let (i, j) = camera.pixel_index(p);
                mask.get(i, j).then(|| bilinear_rgb(color_mosaic, p[0], p[1]))
            });
            hits.push((y * tw + x, color));
        });
        ok.then_some(hits)
    };
    let per_tri = par::map_range(mesh.triangle_count(), texel_tri);

    // The first triangle to cover a texel decides it, masked or not.
    let mut claimed = vec![false; tw * th];
    let mut img = base.clone();
    for hits in per_tri {
        let Some(hits) = hits else {
            report.zero_uv_area += 1;
            continue;
        };
        for (texel, color) in hits {
            if std::mem::replace(&mut claimed[texel], true) {
                continue;
            }
            if let Some(c) = color {
                let (x, y) = ((texel % tw) as u32, (texel / tw) as u32);
                let alpha = img.get_pixel(x, y)[3];
                img.put_pixel(x, y, Rgba([c[0], c[1], c[2], alpha]));
                report.texels_rewritten += 1;
            }
        }
    }
    if report.zero_uv_area > 0 {
        log::warn!("{} triangles have zero texture-space area and were skipped", report.zero_uv_area);
    }
    out.textures.insert(name, img);
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev::HeightCodec;
    use crate::mesh::{Material, BASE_TEXTURE};
    use crate::grid::Grid;
    use image::RgbImage;

    fn camera(w: usize, h: usize) -> OrthoCamera {
        OrthoCamera {
            origin_x: 0.0,
            origin_y: h as f64,
            gsd: 1.0,
            mosaic_width: w,
            mosaic_height: h,
            height_codec: HeightCodec::new(0.0, 1.0).unwrap(),
        }
    }

    /// Unit square quad over a `size` x `size` world footprint with uv0
    /// matching the top-down layout.
    fn quad(size: f32, tex: usize) -> TexturedMesh {
        let img = RgbImage::from_fn(tex as u32, tex as u32, |x, y| image::Rgb([x as u8 * 10, y as u8 * 10, 77]));
        TexturedMesh {
            vertices: vec![[0.0, 0.0, 0.0], [size, 0.0, 0.0], [size, size, 0.0], [0.0, size, 0.0]],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            uv0: vec![[0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]],
            uv1: None,
            textures: [(BASE_TEXTURE.to_string(), DynamicImage::ImageRgb8(img))].into(),
            material: Material {
                base_texture: Some(BASE_TEXTURE.into()),
                ..Default::default()
            },
        }
    }

    #[test]
    fn uv1_of_mosaic_center_is_half() {
        let cam = camera(10, 10);
        let mut mesh = quad(10.0, 4);
        mesh.vertices.push([5.0, 5.0, 1.0]);
        mesh.uv0.push([0.5, 0.5]);
        let mask = MaskMosaic::from_raster(&Grid::from_fn(10, 10, |x, _| x < 3));
        let (out, report) = build_blend_layer(&mesh, &cam, &Grid::filled(10, 10, [1, 2, 3]), &mask, 8192).unwrap();
        assert_eq!(out.uv1.as_ref().unwrap()[4], [0.5, 0.5]);
        assert_eq!(report.clamped_uv, 0);
        let blend = out.textures[BLEND_TEXTURE].to_luma8();
        assert!(blend.pixels().all(|p| p[0] == 0 || p[0] == 255));
        assert_eq!(blend.get_pixel(1, 5)[0], 255);
        assert_eq!(blend.get_pixel(5, 5)[0], 0);
        assert_eq!(out.vertices, mesh.vertices);
        assert_eq!(out.uv0, mesh.uv0);
    }

    #[test]
    fn uv1_is_affine_in_world_xy() {
        let cam = OrthoCamera {
            origin_x: 100.0,
            origin_y: 250.0,
            gsd: 0.25,
            ..camera(80, 60)
        };
        let mesh = TexturedMesh {
            vertices: (0..30).map(|i| [100.0 + (i * 7 % 20) as f32, 235.0 + (i * 3 % 15) as f32, i as f32]).collect(),
            uv0: vec![[0.0; 2]; 30],
            ..quad(1.0, 2)
        };
        let mask = MaskMosaic::from_raster(&Grid::filled(80, 60, true));
        let (out, _) = build_blend_layer(&mesh, &cam, &Grid::filled(80, 60, [0; 3]), &mask, 8192).unwrap();
        let uv1 = out.uv1.unwrap();
        // Fit from three non-collinear vertices and predict the rest.
        let p = |i: usize| [mesh.vertices[i][0] as f64, mesh.vertices[i][1] as f64];
        let fit = [0, 1, 4];
        for i in 0..30 {
            let l = fill::barycentric(&fit.map(p), p(i)).unwrap();
            for k in 0..2 {
                let want: f64 = (0..3).map(|j| l[j] * uv1[fit[j]][k] as f64).sum();
                assert!((uv1[i][k] as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn outside_vertices_are_clamped_and_counted() {
        let cam = camera(10, 10);
        let mut mesh = quad(10.0, 4);
        mesh.vertices[2] = [12.0, 11.0, 0.0];
        let mask = MaskMosaic::from_raster(&Grid::filled(10, 10, true));
        let (out, report) = build_blend_layer(&mesh, &cam, &Grid::filled(10, 10, [0; 3]), &mask, 8192).unwrap();
        assert_eq!(report.clamped_uv, 1);
        assert_eq!(out.uv1.unwrap()[2], [1.0, 0.0]);
    }

    #[test]
    fn large_mosaics_are_downscaled() {
        let cam = camera(40, 20);
        let mask = MaskMosaic::from_raster(&Grid::filled(40, 20, true));
        let (out, _) = build_blend_layer(&quad(10.0, 4), &cam, &Grid::filled(40, 20, [9; 3]), &mask, 16).unwrap();
        assert_eq!(out.textures[INPAINT_TEXTURE].width(), 16);
        assert_eq!(out.textures[INPAINT_TEXTURE].height(), 8);
        assert_eq!(out.textures[BLEND_TEXTURE].width(), 16);
    }

    #[test]
    fn empty_mask_passes_through() {
        let cam = camera(10, 10);
        let mesh = quad(10.0, 8);
        let mask = MaskMosaic::new(10, 10);
        let mosaic = Grid::filled(10, 10, [200; 3]);
        assert_eq!(build_blend_layer(&mesh, &cam, &mosaic, &mask, 8192).unwrap().0, mesh);
        assert_eq!(resample_texture(&mesh, &cam, &mosaic, &mask).unwrap().0, mesh);
    }

    #[test]
    fn fully_masked_quad_takes_constant_color() {
        let cam = camera(10, 10);
        let mesh = quad(10.0, 8);
        let mask = MaskMosaic::from_raster(&Grid::filled(10, 10, true));
        let (out, report) = resample_texture(&mesh, &cam, &Grid::filled(10, 10, [200, 100, 50]), &mask).unwrap();
        let tex = out.textures[BASE_TEXTURE].to_rgb8();
        assert!(tex.pixels().all(|p| p.0 == [200, 100, 50]));
        assert_eq!(report.texels_rewritten, 64);
        assert_eq!(out.textures[BASE_TEXTURE].color(), mesh.textures[BASE_TEXTURE].color());
    }

    #[test]
    fn half_masked_quad_matches_per_texel_projection() {
        let cam = camera(10, 10);
        let mesh = quad(10.0, 16);
        let mask_raster = Grid::from_fn(10, 10, |x, _| x >= 5);
        let mask = MaskMosaic::from_raster(&mask_raster);
        let mosaic = Grid::from_fn(10, 10, |x, _| if x < 5 { [0, 0, 0] } else { [250, 250, 250] });
        let (out, _) = resample_texture(&mesh, &cam, &mosaic, &mask).unwrap();
        let before = mesh.textures[BASE_TEXTURE].to_rgb8();
        let after = out.textures[BASE_TEXTURE].to_rgb8();
        for ty in 0..16u32 {
            for tx in 0..16u32 {
                // uv (s, t) -> world (10 s, 10 (1 - t)) -> pixel (10 s, 10 t).
                let (s, t) = ((tx as f64 + 0.5) / 16.0, (ty as f64 + 0.5) / 16.0);
                let (px, py) = (10.0 * s, 10.0 * t);
                let masked = *mask_raster.get(px as usize, py as usize);
                if masked {
                    assert_eq!(after.get_pixel(tx, ty).0, bilinear_rgb(&mosaic, px, py), "({tx},{ty})");
                } else {
                    assert_eq!(after.get_pixel(tx, ty), before.get_pixel(tx, ty));
                }
            }
        }
    }

    #[test]
    fn zero_uv_area_triangles_are_counted() {
        let cam = camera(10, 10);
        let mut mesh = quad(10.0, 8);
        mesh.uv0[3] = mesh.uv0[2];
        mesh.uv0[0] = mesh.uv0[2];
        let mask = MaskMosaic::from_raster(&Grid::filled(10, 10, true));
        let (_, report) = resample_texture(&mesh, &cam, &Grid::filled(10, 10, [1; 3]), &mask).unwrap();
        assert_eq!(report.zero_uv_area, 2);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("blend".parse::<TextureMode>().unwrap(), TextureMode::Blend);
        assert!("paint".parse::<TextureMode>().is_err());
    }
}
