//! The glTF 2.0 subset used for mesh interchange.
//!
//! Supported: one mesh with one triangle-list primitive, `f32` positions,
//! `TEXCOORD_0` and optional `TEXCOORD_1` (`f32`), unsigned indices, PNG
//! images (sidecar files, data URIs or GLB buffer views). Node transforms and
//! required extensions are rejected.
//!
//! The optional inpaint/blend textures are referenced from the material's
//! `extras.dsmScrub` object; see [`crate::retexture::BLEND_CONTRACT`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use base64::Engine as _;
use image::ImageFormat;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Material, TexturedMesh};
use crate::error::{Error, Result};

const GLB_MAGIC: u32 = 0x4654_6C67;
const CHUNK_JSON: u32 = 0x4E4F_534A;
const CHUNK_BIN: u32 = 0x004E_4942;

const FLOAT: u32 = 5126;
const UNSIGNED_BYTE: u32 = 5121;
const UNSIGNED_SHORT: u32 = 5123;
const UNSIGNED_INT: u32 = 5125;

const EXTRAS_KEY: &str = "dsmScrub";

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Document {
    asset: Asset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    scenes: Vec<Scene>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    nodes: Vec<Node>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    meshes: Vec<MeshDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    materials: Vec<MaterialDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    textures: Vec<TextureDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    images: Vec<ImageDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    accessors: Vec<Accessor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    buffer_views: Vec<BufferView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    buffers: Vec<Buffer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extensions_required: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Asset {
    version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Scene {
    #[serde(default)]
    nodes: Vec<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Node {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mesh: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct MeshDef {
    primitives: Vec<Primitive>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Primitive {
    attributes: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    indices: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    material: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<u32>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct MaterialDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pbr_metallic_roughness: Option<Pbr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extras: Option<Value>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Pbr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_color_texture: Option<TextureInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metallic_factor: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TextureInfo {
    index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tex_coord: Option<u32>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct TextureDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ImageDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mime_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    buffer_view: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Accessor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    buffer_view: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    byte_offset: Option<usize>,
    component_type: u32,
    count: usize,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalized: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct BufferView {
    buffer: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    byte_offset: Option<usize>,
    byte_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    byte_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<u32>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Buffer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uri: Option<String>,
    byte_length: usize,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

/// Loads a `.gltf` (sidecar or embedded resources) or `.glb` file.
pub fn load_mesh(path: &Path) -> Result<TexturedMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let (json_bytes, json_start, glb_bin) = if bytes.len() >= 4 && read_u32(&bytes, 0) == GLB_MAGIC {
        let (json, bin) = split_glb(&bytes)?;
        (json, 20, bin)
    } else {
        (&bytes[..], 0, None)
    };

    let doc: Document = serde_json::from_slice(json_bytes).map_err(|e| Error::Parse {
        offset: json_start + json_byte_offset(json_bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    decode_document(&doc, &base_dir, glb_bin)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn split_glb(bytes: &[u8]) -> Result<(&[u8], Option<&[u8]>)> {
    let parse = |offset: usize, message: &str| Error::Parse {
        offset,
        message: message.to_string(),
    };
    if bytes.len() < 20 {
        return Err(parse(bytes.len(), "truncated GLB header"));
    }
    if read_u32(bytes, 4) != 2 {
        return Err(parse(4, "unsupported GLB container version"));
    }
    let total = read_u32(bytes, 8) as usize;
    if total > bytes.len() {
        return Err(parse(8, "GLB length exceeds file size"));
    }
    let json_len = read_u32(bytes, 12) as usize;
    if read_u32(bytes, 16) != CHUNK_JSON {
        return Err(parse(16, "first GLB chunk is not JSON"));
    }
    let json_end = 20 + json_len;
    if json_end > total {
        return Err(parse(12, "JSON chunk overruns the container"));
    }
    let json = &bytes[20..json_end];
    if json_end + 8 <= total {
        let bin_len = read_u32(bytes, json_end) as usize;
        if read_u32(bytes, json_end + 4) != CHUNK_BIN {
            return Err(parse(json_end + 4, "second GLB chunk is not BIN"));
        }
        let start = json_end + 8;
        if start + bin_len > total {
            return Err(parse(json_end, "BIN chunk overruns the container"));
        }
        Ok((json, Some(&bytes[start..start + bin_len])))
    } else {
        Ok((json, None))
    }
}

fn json_byte_offset(text: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

fn decode_data_uri(uri: &str) -> Option<Result<Vec<u8>>> {
    let rest = uri.strip_prefix("data:")?;
    let (_, payload) = match rest.split_once(";base64,") {
        Some(parts) => parts,
        None => return Some(Err(invalid(format!("unsupported data URI encoding: {}", &uri[..uri.len().min(40)])))),
    };
    Some(
        base64::engine::general_purpose::STANDARD
            .decode(payload)
            .map_err(|e| invalid(format!("bad base64 payload: {e}"))),
    )
}

fn load_uri(uri: &str, base_dir: &Path) -> Result<Vec<u8>> {
    if let Some(data) = decode_data_uri(uri) {
        return data;
    }
    let path = base_dir.join(uri);
    fs::read(&path).map_err(|e| Error::io(path, e))
}

fn decode_document(doc: &Document, base_dir: &Path, glb_bin: Option<&[u8]>) -> Result<TexturedMesh> {
    if !doc.asset.version.starts_with('2') {
        return Err(invalid(format!("unsupported glTF version {}", doc.asset.version)));
    }
    if let Some(ext) = doc.extensions_required.first() {
        return Err(invalid(format!("required extension `{ext}` is not supported")));
    }
    for node in &doc.nodes {
        if node.matrix.is_some() || node.translation.is_some() || node.rotation.is_some() || node.scale.is_some() {
            return Err(invalid("node transforms are not supported; geometry must be in local meters"));
        }
    }
    if doc.meshes.len() != 1 {
        return Err(invalid(format!("expected exactly one mesh, found {}", doc.meshes.len())));
    }
    let mesh_def = &doc.meshes[0];
    if mesh_def.primitives.len() != 1 {
        return Err(invalid(format!(
            "expected exactly one primitive, found {}",
            mesh_def.primitives.len()
        )));
    }
    let prim = &mesh_def.primitives[0];
    if prim.mode.unwrap_or(4) != 4 {
        return Err(invalid("only triangle-list primitives are supported"));
    }

    let buffers = doc
        .buffers
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let data = match (&b.uri, glb_bin) {
                (Some(uri), _) => load_uri(uri, base_dir)?,
                (None, Some(bin)) if i == 0 => bin.to_vec(),
                (None, _) => return Err(invalid(format!("buffer {i} has no data"))),
            };
            if data.len() < b.byte_length {
                return Err(Error::Parse {
                    offset: data.len(),
                    message: format!("buffer {i} is shorter than its declared {} bytes", b.byte_length),
                });
            }
            Ok(data)
        })
        .collect::<Result<Vec<_>>>()?;

    let view_slice = |v: usize| -> Result<(&[u8], Option<usize>)> {
        let view = doc
            .buffer_views
            .get(v)
            .ok_or_else(|| invalid(format!("missing bufferView {v}")))?;
        let buf = buffers
            .get(view.buffer)
            .ok_or_else(|| invalid(format!("bufferView {v} references missing buffer {}", view.buffer)))?;
        let start = view.byte_offset.unwrap_or(0);
        let end = start + view.byte_length;
        if end > buf.len() {
            return Err(Error::Parse {
                offset: start,
                message: format!("bufferView {v} overruns buffer {}", view.buffer),
            });
        }
        Ok((&buf[start..end], view.byte_stride))
    };

    // Returns the raw bytes of each element of the accessor.
    let read_accessor = |a: usize, kind: &str, components: &[u32]| -> Result<Vec<Vec<u8>>> {
        let acc = doc
            .accessors
            .get(a)
            .ok_or_else(|| invalid(format!("missing accessor {a}")))?;
        if acc.kind != kind || !components.contains(&acc.component_type) {
            return Err(invalid(format!(
                "accessor {a} is {} / component {} but {kind} / {components:?} was expected",
                acc.kind, acc.component_type
            )));
        }
        if acc.normalized == Some(true) {
            return Err(invalid(format!("accessor {a}: normalized integers are not supported")));
        }
        let width = match acc.kind.as_str() {
            "SCALAR" => 1,
            "VEC2" => 2,
            "VEC3" => 3,
            other => return Err(invalid(format!("accessor {a}: unsupported type {other}"))),
        };
        let comp_size = match acc.component_type {
            UNSIGNED_BYTE => 1,
            UNSIGNED_SHORT => 2,
            _ => 4,
        };
        let elem = width * comp_size;
        let view_idx = acc
            .buffer_view
            .ok_or_else(|| invalid(format!("accessor {a} has no bufferView")))?;
        let (data, stride) = view_slice(view_idx)?;
        let stride = stride.unwrap_or(elem);
        let offset = acc.byte_offset.unwrap_or(0);
        if acc.count > 0 && offset + stride * (acc.count - 1) + elem > data.len() {
            return Err(Error::Parse {
                offset,
                message: format!("accessor {a} overruns bufferView {view_idx}"),
            });
        }
        Ok((0..acc.count)
            .map(|i| data[offset + i * stride..offset + i * stride + elem].to_vec())
            .collect())
    };

    let f32_at = |b: &[u8], k: usize| f32::from_le_bytes(b[4 * k..4 * k + 4].try_into().unwrap());

    let pos_idx = *prim
        .attributes
        .get("POSITION")
        .ok_or_else(|| invalid("primitive has no POSITION attribute"))?;
    let vertices: Vec<[f32; 3]> = read_accessor(pos_idx, "VEC3", &[FLOAT])?
        .iter()
        .map(|b| [f32_at(b, 0), f32_at(b, 1), f32_at(b, 2)])
        .collect();
    let read_uv = |name: &str| -> Result<Option<Vec<[f32; 2]>>> {
        match prim.attributes.get(name) {
            None => Ok(None),
            Some(&a) => Ok(Some(
                read_accessor(a, "VEC2", &[FLOAT])?
                    .iter()
                    .map(|b| [f32_at(b, 0), f32_at(b, 1)])
                    .collect(),
            )),
        }
    };
    let uv0 = read_uv("TEXCOORD_0")?.unwrap_or_else(|| vec![[0.0; 2]; vertices.len()]);
    let uv1 = read_uv("TEXCOORD_1")?;

    let flat_indices: Vec<u32> = match prim.indices {
        Some(a) => read_accessor(a, "SCALAR", &[UNSIGNED_BYTE, UNSIGNED_SHORT, UNSIGNED_INT])?
            .iter()
            .map(|b| match b.len() {
                1 => b[0] as u32,
                2 => u16::from_le_bytes([b[0], b[1]]) as u32,
                _ => u32::from_le_bytes(b[..4].try_into().unwrap()),
            })
            .collect(),
        None => (0..vertices.len() as u32).collect(),
    };
    if !flat_indices.len().is_multiple_of(3) {
        return Err(invalid(format!(
            "index count {} is not a multiple of 3",
            flat_indices.len()
        )));
    }
    let triangles: Vec<[u32; 3]> = flat_indices
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();

    // Images keyed by a unique name.
    let mut image_names = Vec::with_capacity(doc.images.len());
    let mut textures = BTreeMap::new();
    for (i, img) in doc.images.iter().enumerate() {
        let bytes = match (&img.uri, img.buffer_view) {
            (Some(uri), _) => load_uri(uri, base_dir)?,
            (None, Some(v)) => view_slice(v)?.0.to_vec(),
            (None, None) => return Err(invalid(format!("image {i} has neither uri nor bufferView"))),
        };
        let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
            .map_err(|e| invalid(format!("image {i} is not a readable PNG: {e}")))?;
        let mut name = img.name.clone().unwrap_or_else(|| format!("image{i}"));
        if textures.contains_key(&name) {
            name = format!("{name}_{i}");
        }
        textures.insert(name.clone(), decoded);
        image_names.push(name);
    }
    let texture_name = |t: usize| -> Result<String> {
        let src = doc
            .textures
            .get(t)
            .and_then(|t| t.source)
            .ok_or_else(|| invalid(format!("texture {t} is missing or has no source")))?;
        image_names
            .get(src)
            .cloned()
            .ok_or_else(|| invalid(format!("texture {t} references missing image {src}")))
    };

    let mut material = Material::default();
    if let Some(m) = prim.material {
        let def = doc
            .materials
            .get(m)
            .ok_or_else(|| invalid(format!("missing material {m}")))?;
        if let Some(info) = def.pbr_metallic_roughness.as_ref().and_then(|p| p.base_color_texture.as_ref()) {
            if info.tex_coord.unwrap_or(0) != 0 {
                return Err(invalid("base color texture must use TEXCOORD_0"));
            }
            material.base_texture = Some(texture_name(info.index)?);
        }
        if let Some(extra) = def.extras.as_ref().and_then(|e| e.get(EXTRAS_KEY)) {
            let tex = |key: &str| -> Result<Option<String>> {
                match extra.get(key).and_then(Value::as_u64) {
                    Some(t) => Ok(Some(texture_name(t as usize)?)),
                    None => Ok(None),
                }
            };
            material.inpaint_texture = tex("inpaintTexture")?;
            material.blend_mask_texture = tex("blendMaskTexture")?;
        }
    }

    let mesh = TexturedMesh {
        vertices,
        triangles,
        uv0,
        uv1,
        textures,
        material,
    };
    mesh.validate()?;
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SaveOptions {
    /// Embed buffers and images as base64 data URIs (ignored for `.glb`).
    pub embed: bool,
}

/// Saves by extension: `.glb` writes a binary container, anything else a
/// `.gltf` JSON file with a sidecar `.bin` and PNG files next to it.
pub fn save_mesh(mesh: &TexturedMesh, path: &Path) -> Result<()> {
    save_mesh_with(mesh, path, SaveOptions::default())
}

pub fn save_mesh_with(mesh: &TexturedMesh, path: &Path, options: SaveOptions) -> Result<()> {
    mesh.validate()?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let glb = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("glb"));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut bin: Vec<u8> = Vec::new();
    let mut doc = Document {
        asset: Asset {
            version: "2.0".into(),
            generator: Some(concat!("dsm-scrub ", env!("CARGO_PKG_VERSION")).into()),
        },
        scene: Some(0),
        scenes: vec![Scene { nodes: vec![0] }],
        nodes: vec![Node {
            mesh: Some(0),
            ..Default::default()
        }],
        ..Default::default()
    };

    let push_view = |bin: &mut Vec<u8>, views: &mut Vec<BufferView>, bytes: &[u8], target: Option<u32>| -> usize {
        while !bin.len().is_multiple_of(4) {
            bin.push(0);
        }
        views.push(BufferView {
            buffer: 0,
            byte_offset: Some(bin.len()),
            byte_length: bytes.len(),
            byte_stride: None,
            target,
        });
        bin.extend_from_slice(bytes);
        views.len() - 1
    };

    let mut attributes = BTreeMap::new();
    {
        let bytes: Vec<u8> = mesh.vertices.iter().flatten().flat_map(|c| c.to_le_bytes()).collect();
        let view = push_view(&mut bin, &mut doc.buffer_views, &bytes, Some(34962));
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &mesh.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k] as f64);
                hi[k] = hi[k].max(v[k] as f64);
            }
        }
        let (min, max) = if mesh.vertices.is_empty() {
            (None, None)
        } else {
            (Some(lo.to_vec()), Some(hi.to_vec()))
        };
        doc.accessors.push(Accessor {
            buffer_view: Some(view),
            byte_offset: None,
            component_type: FLOAT,
            count: mesh.vertices.len(),
            kind: "VEC3".into(),
            normalized: None,
            min,
            max,
        });
        attributes.insert("POSITION".to_string(), doc.accessors.len() - 1);
    }
    for (name, uv) in [("TEXCOORD_0", Some(&mesh.uv0)), ("TEXCOORD_1", mesh.uv1.as_ref())] {
        let Some(uv) = uv else { continue };
        let bytes: Vec<u8> = uv.iter().flatten().flat_map(|c| c.to_le_bytes()).collect();
        let view = push_view(&mut bin, &mut doc.buffer_views, &bytes, Some(34962));
        doc.accessors.push(Accessor {
            buffer_view: Some(view),
            byte_offset: None,
            component_type: FLOAT,
            count: uv.len(),
            kind: "VEC2".into(),
            normalized: None,
            min: None,
            max: None,
        });
        attributes.insert(name.to_string(), doc.accessors.len() - 1);
    }
    let indices = {
        let bytes: Vec<u8> = mesh.triangles.iter().flatten().flat_map(|i| i.to_le_bytes()).collect();
        let view = push_view(&mut bin, &mut doc.buffer_views, &bytes, Some(34963));
        doc.accessors.push(Accessor {
            buffer_view: Some(view),
            byte_offset: None,
            component_type: UNSIGNED_INT,
            count: mesh.triangles.len() * 3,
            kind: "SCALAR".into(),
            normalized: None,
            min: None,
            max: None,
        });
        doc.accessors.len() - 1
    };

    // One image + texture per named texture, in name order.
    let mut texture_index = BTreeMap::new();
    for (i, (name, img)) in mesh.textures.iter().enumerate() {
        let mut png = Vec::new();
        img.write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
            .map_err(|e| Error::image(path, e))?;
        let def = if glb {
            let view = push_view(&mut bin, &mut doc.buffer_views, &png, None);
            ImageDef {
                name: Some(name.clone()),
                uri: None,
                mime_type: Some("image/png".into()),
                buffer_view: Some(view),
            }
        } else if options.embed {
            ImageDef {
                name: Some(name.clone()),
                uri: Some(format!(
                    "data:image/png;base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(&png)
                )),
                ..Default::default()
            }
        } else {
            let file = format!("{stem}_{}.png", sanitize(name));
            let target = dir.join(&file);
            fs::write(&target, &png).map_err(|e| Error::io(&target, e))?;
            ImageDef {
                name: Some(name.clone()),
                uri: Some(file),
                ..Default::default()
            }
        };
        doc.images.push(def);
        doc.textures.push(TextureDef { source: Some(i) });
        texture_index.insert(name.clone(), i);
    }

    let has_material = mesh.material != Material::default();
    if has_material {
        let lookup = |n: &Option<String>| n.as_ref().map(|n| texture_index[n]);
        let mut extras = serde_json::Map::new();
        if let Some(t) = lookup(&mesh.material.inpaint_texture) {
            extras.insert("inpaintTexture".into(), json!(t));
        }
        if let Some(t) = lookup(&mesh.material.blend_mask_texture) {
            extras.insert("blendMaskTexture".into(), json!(t));
        }
        if !extras.is_empty() {
            extras.insert("texCoord".into(), json!(1));
            extras.insert("blend".into(), json!(crate::retexture::BLEND_CONTRACT));
        }
        doc.materials.push(MaterialDef {
            name: Some("surface".into()),
            pbr_metallic_roughness: Some(Pbr {
                base_color_texture: lookup(&mesh.material.base_texture).map(|index| TextureInfo {
                    index,
                    tex_coord: None,
                }),
                metallic_factor: Some(0.0),
            }),
            extras: (!extras.is_empty()).then(|| json!({ EXTRAS_KEY: Value::Object(extras) })),
        });
    }

    doc.meshes.push(MeshDef {
        primitives: vec![Primitive {
            attributes,
            indices: Some(indices),
            material: has_material.then_some(0),
            mode: Some(4),
        }],
    });

    while !bin.len().is_multiple_of(4) {
        bin.push(0);
    }
    let buffer_uri = if glb {
        None
    } else if options.embed {
        Some(format!(
            "data:application/octet-stream;base64,{}",
            base64::engine::general_purpose::STANDARD.encode(&bin)
        ))
    } else {
        let file = format!("{stem}.bin");
        let target = dir.join(&file);
        fs::write(&target, &bin).map_err(|e| Error::io(&target, e))?;
        Some(file)
    };
    doc.buffers.push(Buffer {
        uri: buffer_uri,
        byte_length: bin.len(),
    });

    let out: Vec<u8> = if glb {
        let mut json = serde_json::to_vec(&doc).map_err(|e| invalid(e.to_string()))?;
        while json.len() % 4 != 0 {
            json.push(b' ');
        }
        let total = 12 + 8 + json.len() + 8 + bin.len();
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(&GLB_MAGIC.to_le_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(total as u32).to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
        out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
        out.extend_from_slice(&bin);
        out
    } else {
        serde_json::to_vec_pretty(&doc).map_err(|e| invalid(e.to_string()))?
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// The file at `path` plus every external buffer and image it references.
pub fn referenced_files(path: &Path) -> Result<Vec<PathBuf>> {
    let mut files = vec![path.to_path_buf()];
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("glb")) {
        return Ok(files);
    }
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_slice(&text).map_err(|e| Error::Parse {
        offset: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let base_dir = path.parent().unwrap_or(Path::new(""));
    for key in ["buffers", "images"] {
        for item in doc[key].as_array().into_iter().flatten() {
            if let Some(uri) = item["uri"].as_str().filter(|u| !u.starts_with("data:")) {
                files.push(base_dir.join(uri));
            }
        }
    }
    Ok(files)
}

/// Files written next to `path` by [`save_mesh`] (the file itself, its
/// sidecar buffer and images).
pub fn sidecar_files(mesh: &TexturedMesh, path: &Path) -> Vec<PathBuf> {
    let mut files = vec![path.to_path_buf()];
    let glb = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("glb"));
    if glb {
        return files;
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    files.push(dir.join(format!("{stem}.bin")));
    for name in mesh.textures.keys() {
        files.push(dir.join(format!("{stem}_{}.png", sanitize(name))));
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{DynamicImage, RgbImage};

    fn unit_quad() -> TexturedMesh {
        let tex = RgbImage::from_fn(4, 4, |x, y| image::Rgb([x as u8 * 60, y as u8 * 60, 7]));
        TexturedMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.5], [0.0, 1.0, 0.25]],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            uv0: vec![[0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]],
            uv1: None,
            textures: [("base".to_string(), DynamicImage::ImageRgb8(tex))].into(),
            material: Material {
                base_texture: Some("base".into()),
                ..Default::default()
            },
        }
    }

    #[test]
    fn unit_quad_loads_with_expected_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("quad.gltf");
        save_mesh(&unit_quad(), &p).unwrap();
        let m = load_mesh(&p).unwrap();
        assert_eq!((m.vertex_count(), m.triangle_count(), m.textures.len()), (4, 2, 1));
        assert_eq!(m, unit_quad());
    }

    #[test]
    fn glb_and_embedded_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let glb = dir.path().join("quad.glb");
        save_mesh(&unit_quad(), &glb).unwrap();
        assert_eq!(load_mesh(&glb).unwrap(), unit_quad());

        let emb = dir.path().join("embedded.gltf");
        save_mesh_with(&unit_quad(), &emb, SaveOptions { embed: true }).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
        assert_eq!(load_mesh(&emb).unwrap(), unit_quad());
    }

    #[test]
    fn out_of_range_index_names_the_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.gltf");
        save_mesh(&unit_quad(), &p).unwrap();
        // Patch index 5 of the index buffer (triangle 1) to 7.
        let bin_path = dir.path().join("quad.bin");
        let bad_bin = dir.path().join("bad.bin");
        let _ = std::fs::rename(&bin_path, &bad_bin);
        let mut bin = std::fs::read(&bad_bin).unwrap();
        let idx_start = bin.len() - 24;
        bin[idx_start + 5 * 4..idx_start + 6 * 4].copy_from_slice(&7u32.to_le_bytes());
        std::fs::write(&bad_bin, bin).unwrap();
        let err = load_mesh(&p).unwrap_err().to_string();
        assert!(err.contains("triangle 1") && err.contains("vertex 7"), "{err}");
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.gltf");
        let text = "{\n  \"asset\": {\"version\": \"2.0\"},\n  oops\n}";
        std::fs::write(&p, text).unwrap();
        match load_mesh(&p) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, text.find("oops").unwrap()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_glb_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.glb");
        std::fs::write(&p, [0x67, 0x6c, 0x54, 0x46, 2, 0, 0, 0]).unwrap();
        assert!(matches!(load_mesh(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn uv1_and_blend_material_survive() {
        let mut m = unit_quad();
        m.uv1 = Some(vec![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8]]);
        m.textures.insert(
            "inpaint".into(),
            DynamicImage::ImageRgb8(RgbImage::from_pixel(2, 2, image::Rgb([1, 2, 3]))),
        );
        m.textures.insert(
            "blend".into(),
            DynamicImage::ImageLuma8(image::GrayImage::from_pixel(2, 2, image::Luma([255]))),
        );
        m.material.inpaint_texture = Some("inpaint".into());
        m.material.blend_mask_texture = Some("blend".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("blend.gltf");
        save_mesh(&m, &p).unwrap();
        assert_eq!(load_mesh(&p).unwrap(), m);
        assert_eq!(sidecar_files(&m, &p).len(), 5);
        assert!(sidecar_files(&m, &p).iter().all(|f| f.exists()));
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = save_mesh(&unit_quad(), &blocker.join("sub").join("m.gltf")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
