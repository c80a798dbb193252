//! Acceptance criteria AC1-AC10. Prints one line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use dsm_scrub::bev::{make_camera, make_patch_grid, BevRasterizer, OrthoCamera, PatchRect, NO_COVERAGE};
use dsm_scrub::grid::{self, Grid, MaskRaster};
use dsm_scrub::inpaint::{harmonic_fill, BackendSpec, ExemplarParams, ExternalParams, HarmonicParams};
use dsm_scrub::mask::{self, ClassTable, MaskMosaic};
use dsm_scrub::mesh::{compute_bounds, load_mesh, Material, TexturedMesh, BASE_TEXTURE, BLEND_TEXTURE};
use dsm_scrub::metrics::{emd_1d, Histogram, MetricsReport};
use dsm_scrub::pipeline::{patch_file, Pipeline, RunConfig, RunManifest, Stage, SynthConfig, OUTPUT, SYNTH_OCCLUDED};
use dsm_scrub::remesh::cluster_points;
use image::DynamicImage;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- fixtures

/// Flat ground at z=0 with five boxes 2-5 m tall, codec range [0, 10].
fn ac1_config(out: &Path, workers: usize) -> RunConfig {
    RunConfig {
        out: out.to_path_buf(),
        gsd: 0.05,
        patch_px: 512,
        overlap: 0.5,
        z_range: Some([0.0, 10.0]),
        backend: BackendSpec::Harmonic(HarmonicParams::default()),
        workers,
        synth: SynthConfig {
            extent: [32.0, 32.0],
            boxes: 5,
            seed: 11,
            scene: None,
        },
        ..Default::default()
    }
}

fn run_full(cfg: RunConfig) -> Result<Pipeline, String> {
    let mut p = Pipeline::open(cfg).map_err(|e| e.to_string())?;
    p.run(Stage::Synth).map_err(|e| e.to_string())?;
    p.run_all().map_err(|e| e.to_string())?;
    Ok(p)
}

/// Pixel containing `(x, y)`, computed from the camera parameters.
fn pixel_of(cam: &OrthoCamera, x: f64, y: f64) -> (usize, usize) {
    let u = ((x - cam.origin_x) / cam.gsd).floor();
    let v = ((cam.origin_y - y) / cam.gsd).floor();
    let u = u.clamp(0.0, cam.mosaic_width as f64 - 1.0);
    let v = v.clamp(0.0, cam.mosaic_height as f64 - 1.0);
    (u as usize, v as usize)
}

fn in_mask(cam: &OrthoCamera, mask: &MaskRaster, v: [f32; 3]) -> bool {
    let (u, w) = pixel_of(cam, v[0] as f64, v[1] as f64);
    *mask.get(u, w)
}

fn bits(v: [f32; 3]) -> [u32; 3] {
    v.map(f32::to_bits)
}

/// Unmasked input vertices must survive bit-for-bit, and nothing else may
/// land outside the mask.
fn check_unmasked_geometry(input: &TexturedMesh, output: &TexturedMesh, cam: &OrthoCamera, mask: &MaskRaster) -> Result<usize, String> {
    let out_set: HashSet<[u32; 3]> = output.vertices.iter().map(|&v| bits(v)).collect();
    let unmasked: Vec<[f32; 3]> = input.vertices.iter().copied().filter(|&v| !in_mask(cam, mask, v)).collect();
    for v in &unmasked {
        ensure(out_set.contains(&bits(*v)), || format!("unmasked vertex {v:?} changed"))?;
    }
    let out_unmasked = output.vertices.iter().filter(|&&v| !in_mask(cam, mask, v)).count();
    ensure(out_unmasked == unmasked.len(), || {
        format!("{} unmasked vertices in, {out_unmasked} out", unmasked.len())
    })?;
    Ok(unmasked.len())
}

// -------------------------------------------------------------- criteria

fn ac1(dir: &Path) -> Check {
    let start = Instant::now();
    let p = run_full(ac1_config(dir, 1))?;
    let secs = start.elapsed().as_secs_f64();
    let m = p.manifest();
    let cam = m.camera.ok_or("no camera")?;
    let mask = grid::load_mask_png(&dir.join("mask_mosaic.png")).map_err(|e| e.to_string())?;
    let input = load_mesh(&dir.join(SYNTH_OCCLUDED)).map_err(|e| e.to_string())?;
    let output = load_mesh(&dir.join(OUTPUT)).map_err(|e| e.to_string())?;
    // Clean ground truth is z = 0 everywhere.
    let residuals: Vec<f64> = output
        .vertices
        .iter()
        .filter(|&&v| in_mask(&cam, &mask, v))
        .map(|v| v[2] as f64)
        .collect();
    ensure(!residuals.is_empty(), || "no masked vertices".into())?;
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    ensure(rmse <= 0.05, || format!("rmse {rmse:.4} m > 0.05 m"))?;
    let kept = check_unmasked_geometry(&input, &output, &cam, &mask)?;
    ensure(secs < 60.0, || format!("runtime {secs:.1} s >= 60 s"))?;
    Ok(format!(
        "rmse={rmse:.5} m over {} masked vertices; {kept} unmasked vertices bit-identical; {secs:.1} s single-worker",
        residuals.len()
    ))
}

fn ac2(dir: &Path) -> Check {
    let bytes = std::fs::read(dir.join("metrics.json")).map_err(|e| e.to_string())?;
    let report: MetricsReport = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    let m = RunManifest::load(dir).map_err(|e| e.to_string())?.ok_or("no manifest")?;
    let grid = m.grid.ok_or("no grid")?;
    let mut masked_patches = 0;
    for rect in &grid.patches {
        let mb = grid::load_mask_png(&dir.join(patch_file(rect, "maskbin", "png"))).map_err(|e| e.to_string())?;
        if mb.any() {
            masked_patches += 1;
            for pass in ["color", "height"] {
                let found = report.patches.iter().any(|r| {
                    (r.row, r.col) == (rect.row, rect.col) && serde_json::to_value(r.pass).unwrap() == pass
                });
                ensure(found, || format!("patch ({}, {}) has no {pass} record", rect.row, rect.col))?;
            }
        }
    }
    ensure(masked_patches > 0, || "no masked patches".into())?;
    for r in &report.patches {
        ensure(r.entropy_inpainted <= r.entropy_source, || {
            format!(
                "patch ({}, {}) {:?}: H(inpainted) {:.4} > H(source) {:.4}",
                r.row, r.col, r.pass, r.entropy_inpainted, r.entropy_source
            )
        })?;
    }
    Ok(format!("{} records over {masked_patches} masked patches, all non-increasing", report.patches.len()))
}

/// Moves mass bin by bin from the leftmost remaining supply to the
/// leftmost remaining demand.
fn greedy_transport(a: &[f64], b: &[f64]) -> f64 {
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    let mut supply: Vec<f64> = a.iter().map(|x| x / sa).collect();
    let mut demand: Vec<f64> = b.iter().map(|x| x / sb).collect();
    let (mut i, mut j, mut cost) = (0, 0, 0.0);
    while i < supply.len() && j < demand.len() {
        let moved = supply[i].min(demand[j]);
        cost += moved * (i as f64 - j as f64).abs();
        supply[i] -= moved;
        demand[j] -= moved;
        if supply[i] <= 1e-15 {
            i += 1;
        }
        if demand[j] <= 1e-15 {
            j += 1;
        }
    }
    cost
}

fn ac3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a: Vec<f64> = (0..16).map(|_| rng.random_range(0..50) as f64).collect();
        let mut b: Vec<f64> = (0..16).map(|_| rng.random_range(0..50) as f64).collect();
        b[rng.random_range(0..16)] += 1.0;
        let mut a = a;
        a[rng.random_range(0..16)] += 1.0;
        let ha = Histogram::new(a.clone(), [0.0, 16.0]).unwrap();
        let hb = Histogram::new(b.clone(), [0.0, 16.0]).unwrap();
        let d = emd_1d(&ha, &hb).map_err(|e| e.to_string())?;
        let oracle = greedy_transport(&a, &b);
        worst = worst.max((d - oracle).abs());
        ensure((d - oracle).abs() <= 1e-9, || format!("emd {d} vs oracle {oracle}"))?;
        let back = emd_1d(&hb, &ha).map_err(|e| e.to_string())?;
        ensure(d == back, || format!("asymmetric: {d} vs {back}"))?;
        let same = emd_1d(&ha, &ha).map_err(|e| e.to_string())?;
        ensure(same == 0.0, || format!("EMD(h, h) = {same}"))?;
    }
    Ok(format!("100 pairs, max |delta| = {worst:.2e}"))
}

/// Dense solve of the discrete Laplace equation: every masked pixel equals
/// the mean of its 4-neighbours, reflected at the raster border.
fn laplace_direct(img: &Grid<f64>, mask: &MaskRaster) -> Grid<f64> {
    let (w, h) = img.dims();
    let unknowns: Vec<usize> = (0..w * h).filter(|&i| mask.data()[i]).collect();
    let index: BTreeMap<usize, usize> = unknowns.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let n = unknowns.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (k, &i) in unknowns.iter().enumerate() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let reflect = |c: i64, n: usize| if c < 0 { -c } else if c >= n as i64 { 2 * (n as i64 - 1) - c } else { c };
            let (nx, ny) = (reflect(x + dx, w), reflect(y + dy, h));
            let j = ny as usize * w + nx as usize;
            a[(k, k)] += 1.0;
            match index.get(&j) {
                Some(&kj) => a[(k, kj)] -= 1.0,
                None => rhs[k] += img.data()[j],
            }
        }
    }
    let sol = a.lu().solve(&rhs).expect("Laplace system is non-singular");
    let mut out = img.clone();
    for (k, &i) in unknowns.iter().enumerate() {
        out.data_mut()[i] = sol[k];
    }
    out
}

fn ac4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let (w, h) = (rng.random_range(3..=12), rng.random_range(3..=12));
        let img = Grid::from_fn(w, h, |_, _| rng.random_range(0.0..100.0));
        let mut mask = Grid::from_fn(w, h, |_, _| rng.random_bool(0.45));
        mask.set(rng.random_range(0..w), rng.random_range(0..h), false);
        let fast = harmonic_fill(&img, &mask, 1e-12, 1_000_000).map_err(|e| e.to_string())?.image;
        let direct = laplace_direct(&img, &mask);
        for (a, b) in fast.data().iter().zip(direct.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("max |delta| = {worst:.3e}"))?;
    Ok(format!("25 grids, max |delta| = {worst:.2e}"))
}

fn union_find_oracle(points: &[[f64; 3]], eps: f64) -> Vec<usize> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = (0..3).map(|c| (points[i][c] - points[j][c]).powi(2)).sum();
            if d2.sqrt() <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Relabels each element with the lowest index sharing its label.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut first = BTreeMap::new();
    labels.iter().enumerate().map(|(i, l)| *first.entry(*l).or_insert(i)).collect()
}

fn ac5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut clusters = 0;
    for _ in 0..50 {
        let mut pts: Vec<[f64; 3]> = (0..500)
            .map(|_| [rng.random_range(0.0..12.0), rng.random_range(0.0..12.0), rng.random_range(0.0..2.0)])
            .collect();
        for _ in 0..20 {
            let (i, j) = (rng.random_range(0..500), rng.random_range(0..500));
            pts[j] = pts[i];
        }
        for eps in [0.0, 0.1, 0.4, 1.0] {
            let got = canonical(&cluster_points(&pts, eps, None));
            let want = canonical(&union_find_oracle(&pts, eps));
            ensure(got == want, || format!("partition mismatch at eps {eps}"))?;
            clusters += want.iter().enumerate().filter(|(i, l)| i == *l).count();
        }
    }
    Ok(format!("200 clouds x eps identical partitions ({clusters} clusters total)"))
}

fn tilted_plane(n: usize, size: f64) -> TexturedMesh {
    let z = |x: f64, y: f64| 0.01 * x + 0.02 * y + 2.0;
    let mut vertices = Vec::new();
    let mut uv0 = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            // Jittered interior vertices keep triangles irregular.
            let jitter = if i > 0 && i < n && j > 0 && j < n { ((i * 7 + j * 13) % 5) as f64 * 0.03 } else { 0.0 };
            let (x, y) = (i as f64 * size / n as f64 + jitter, j as f64 * size / n as f64 - jitter);
            vertices.push([x as f32, y as f32, z(x, y) as f32]);
            uv0.push([(x / size) as f32, (1.0 - y / size) as f32]);
        }
    }
    let mut triangles = Vec::new();
    let id = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    for j in 0..n {
        for i in 0..n {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let tex = image::RgbImage::from_fn(32, 32, |x, y| image::Rgb([(x * 8) as u8, (y * 8) as u8, 90]));
    TexturedMesh {
        vertices,
        triangles,
        uv0,
        uv1: None,
        textures: [(BASE_TEXTURE.to_string(), DynamicImage::ImageRgb8(tex))].into(),
        material: Material {
            base_texture: Some(BASE_TEXTURE.into()),
            ..Default::default()
        },
    }
}

fn ac6() -> Check {
    let mesh = tilted_plane(23, 20.0);
    let bounds = compute_bounds(&mesh).map_err(|e| e.to_string())?;
    let cam = make_camera(&bounds, 0.1).map_err(|e| e.to_string())?;
    let grid = make_patch_grid(&cam, 64, 0.5).map_err(|e| e.to_string())?;
    let r = BevRasterizer::new(&mesh, &cam);
    let patches: Vec<_> = grid.patches.iter().map(|rect| r.rasterize(rect)).collect();
    let q = cam.height_codec.quantum();
    let mut covered = 0;
    let mut worst: f64 = 0.0;
    for p in &patches {
        for y in 0..p.rect.height {
            for x in 0..p.rect.width {
                if *p.tri_id.get(x, y) == NO_COVERAGE {
                    continue;
                }
                covered += 1;
                let (px, py) = (p.rect.x0 + x, p.rect.y0 + y);
                let wx = cam.origin_x + (px as f64 + 0.5) * cam.gsd;
                let wy = cam.origin_y - (py as f64 + 0.5) * cam.gsd;
                let want = 0.01 * wx + 0.02 * wy + 2.0;
                let got = cam.height_codec.decode(*p.height.get(x, y));
                worst = worst.max((got - want).abs() / q);
            }
        }
    }
    ensure(worst <= 1.0, || format!("max error {worst:.3} quanta"))?;
    let mut overlap_px = 0;
    for (a, pa) in patches.iter().enumerate() {
        for pb in &patches[a + 1..] {
            let (ra, rb) = (pa.rect, pb.rect);
            let (x0, x1) = (ra.x0.max(rb.x0), (ra.x0 + ra.width).min(rb.x0 + rb.width));
            let (y0, y1) = (ra.y0.max(rb.y0), (ra.y0 + ra.height).min(rb.y0 + rb.height));
            for y in y0..y1 {
                for x in x0..x1 {
                    overlap_px += 1;
                    let (ax, ay, bx, by) = (x - ra.x0, y - ra.y0, x - rb.x0, y - rb.y0);
                    let same = pa.color.get(ax, ay) == pb.color.get(bx, by)
                        && pa.height.get(ax, ay) == pb.height.get(bx, by)
                        && pa.tri_id.get(ax, ay) == pb.tri_id.get(bx, by);
                    ensure(same, || format!("patches differ at mosaic pixel ({x}, {y})"))?;
                }
            }
        }
    }
    Ok(format!(
        "{covered} covered pixels, max error {worst:.3} quanta; {overlap_px} overlap pixels bit-equal across {} patches",
        grid.len()
    ))
}

fn ac7() -> Check {
    let cam = OrthoCamera {
        origin_x: 0.0,
        origin_y: 40.0,
        gsd: 0.5,
        mosaic_width: 80,
        mosaic_height: 40,
        height_codec: dsm_scrub::bev::HeightCodec::new(0.0, 10.0).unwrap(),
    };
    let grid = make_patch_grid(&cam, 32, 0.5).map_err(|e| e.to_string())?;
    let classes = ClassTable::default();
    let (a, b) = (grid.get(0, 0).unwrap(), grid.get(0, 1).unwrap());
    // Detection inside the A/B overlap, seen only by A.
    let det: Vec<(usize, usize)> = (20..24).flat_map(|x| (10..13).map(move |y| (x, y))).collect();
    let class_a = Grid::from_fn(a.width, a.height, |x, y| if det.contains(&(a.x0 + x, a.y0 + y)) { 1u8 } else { 0 });
    let class_b = Grid::filled(b.width, b.height, 0u8);
    let mut mosaic = MaskMosaic::new(cam.mosaic_width, cam.mosaic_height);
    for (rect, classes_raster) in [(a, &class_a), (b, &class_b)] {
        let m = mask::dilate(&mask::classify(classes_raster, &classes).map_err(|e| e.to_string())?, 5)
            .map_err(|e| e.to_string())?;
        mask::merge_into_mosaic(&mut mosaic, &m, rect).map_err(|e| e.to_string())?;
    }
    for rect in [a, b] {
        let m = mask::extract_patch_mask(&mosaic, rect).map_err(|e| e.to_string())?;
        for &(x, y) in &det {
            ensure(*m.get(x - rect.x0, y - rect.y0), || {
                format!("detection pixel ({x}, {y}) missing from patch ({}, {})", rect.row, rect.col)
            })?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rects: Vec<PatchRect> = grid.patches.iter().take(5).copied().collect();
    ensure(rects.len() == 5, || format!("grid has only {} patches", grid.len()))?;
    let masks: Vec<MaskRaster> = rects
        .iter()
        .map(|r| Grid::from_fn(r.width, r.height, |_, _| rng.random_bool(0.1)))
        .collect();
    let merge = |order: &[usize]| {
        let mut m = MaskMosaic::new(cam.mosaic_width, cam.mosaic_height);
        for &k in order {
            mask::merge_into_mosaic(&mut m, &masks[k], &rects[k]).unwrap();
        }
        m
    };
    let reference = merge(&[0, 1, 2, 3, 4]);
    let mut perms = 0;
    let mut order = [0usize, 1, 2, 3, 4];
    permute(&mut order, 0, &mut |o| {
        perms += 1;
        assert!(merge(o) == reference, "order {o:?} changes the mosaic");
    });
    Ok(format!("one-sided detection present in both patches; {perms} merge orders identical"))
}

fn permute(items: &mut [usize; 5], k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, f);
        items.swap(k, i);
    }
}

fn ac8(root: &Path) -> Check {
    let mut backends = vec![
        BackendSpec::Harmonic(HarmonicParams::default()),
        BackendSpec::Exemplar(ExemplarParams {
            patch_px: 5,
            ..Default::default()
        }),
    ];
    if cfg!(unix) {
        backends.push(BackendSpec::External(ExternalParams {
            command: "sh -c 'cp \"$0\" \"$2\"' {image} {mask} {out}".into(),
            max_concurrent: 4,
            ..Default::default()
        }));
    }
    let mut names = Vec::new();
    for backend in backends {
        let name = backend.name();
        let dir = root.join(name);
        let cfg = RunConfig {
            out: dir.clone(),
            gsd: 0.1,
            patch_px: 64,
            z_range: Some([0.0, 10.0]),
            backend,
            workers: 4,
            synth: SynthConfig {
                extent: [14.0, 14.0],
                boxes: 3,
                seed: 8,
                scene: None,
            },
            ..Default::default()
        };
        let p = run_full(cfg).map_err(|e| format!("{name}: {e}"))?;
        let m = p.manifest();
        let cam = m.camera.ok_or("no camera")?;
        let load_err = |e: dsm_scrub::Error| format!("{name}: {e}");
        for rect in &m.grid.as_ref().ok_or("no grid")?.patches {
            let mask = grid::load_mask_png(&dir.join(patch_file(rect, "maskbin", "png"))).map_err(load_err)?;
            let f = |kind| dir.join(patch_file(rect, kind, "png"));
            let (c0, c1) = (
                grid::load_color_png(&f("color")).map_err(load_err)?,
                grid::load_color_png(&f("color_inpainted")).map_err(load_err)?,
            );
            let (h0, h1) = (
                grid::load_height_png(&f("height")).map_err(load_err)?,
                grid::load_height_png(&f("height_inpainted")).map_err(load_err)?,
            );
            for i in 0..mask.len() {
                if !mask.data()[i] {
                    ensure(c0.data()[i] == c1.data()[i] && h0.data()[i] == h1.data()[i], || {
                        format!("{name}: unmasked pixel {i} of patch ({}, {}) changed", rect.row, rect.col)
                    })?;
                }
            }
        }
        let mosaic = grid::load_mask_png(&dir.join("mask_mosaic.png")).map_err(load_err)?;
        let input = load_mesh(&dir.join(SYNTH_OCCLUDED)).map_err(load_err)?;
        let output = load_mesh(&dir.join(OUTPUT)).map_err(load_err)?;
        check_unmasked_geometry(&input, &output, &cam, &mosaic).map_err(|e| format!("{name}: {e}"))?;
        ensure(
            input.textures[BASE_TEXTURE].as_bytes() == output.textures[BASE_TEXTURE].as_bytes(),
            || format!("{name}: base texture changed"),
        )?;
        let blend = output.textures.get(BLEND_TEXTURE).ok_or(format!("{name}: no blend texture"))?.to_luma8();
        ensure(blend.dimensions() == (cam.mosaic_width as u32, cam.mosaic_height as u32), || {
            format!("{name}: blend texture is {:?}", blend.dimensions())
        })?;
        for (x, y, px) in blend.enumerate_pixels() {
            if !*mosaic.get(x as usize, y as usize) {
                ensure(px.0[0] == 0, || format!("{name}: blend texel ({x}, {y}) outside the mask is {}", px.0[0]))?;
            }
        }
        names.push(name);
    }
    Ok(format!("color, height, geometry and textures preserved for {}", names.join(", ")))
}

fn ac9() -> Check {
    let d = RunConfig::default();
    let checks = [
        ("patch_px", d.patch_px == 2048),
        ("overlap", d.overlap == 0.5),
        ("kernel", d.kernel_px == 5),
        ("merge_distance", d.remesh.merge_distance == 0.4),
        ("gsd", d.gsd == 0.06),
        ("classes", d.classes == ["vehicle", "vessel"]),
        ("backend", matches!(d.backend, BackendSpec::Harmonic(_))),
        ("texture_mode", d.retexture.mode == dsm_scrub::retexture::TextureMode::Blend),
        ("workers", d.workers >= 1),
    ];
    let bad: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    ensure(bad.is_empty(), || format!("wrong defaults: {}", bad.join(", ")))?;
    Ok("patch 2048 px, overlap 0.5, kernel 5, merge 0.4 m, gsd 0.06 m".into())
}

fn ac10(single: &Path, multi: &Path) -> Check {
    run_full(ac1_config(multi, 8))?;
    let a = RunManifest::load(single).map_err(|e| e.to_string())?.ok_or("no manifest")?;
    let b = RunManifest::load(multi).map_err(|e| e.to_string())?.ok_or("no manifest")?;
    let mut files = 0;
    for stage in ["synth", "render", "masks", "inpaint", "remesh", "retexture", "metrics"] {
        let (oa, ob) = (&a.stages[stage].outputs, &b.stages[stage].outputs);
        ensure(oa == ob, || {
            let diff: Vec<&String> = oa.iter().filter(|(k, v)| ob.get(*k) != Some(v)).map(|(k, _)| k).collect();
            format!("{stage} outputs differ: {diff:?}")
        })?;
        files += oa.len();
    }
    Ok(format!("{files} output hashes identical for 1 and 8 workers"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let (ac1_dir, ac10_dir, ac8_dir) = (tmp.path().join("ac1"), tmp.path().join("ac10"), tmp.path().join("ac8"));
    let criteria: Vec<(&str, &str, Box<dyn Fn() -> Check>)> = vec![
        ("AC1", "synthetic end-to-end", Box::new(|| ac1(&ac1_dir))),
        ("AC2", "entropy reduction", Box::new(|| ac2(&ac1_dir))),
        ("AC3", "EMD oracle", Box::new(ac3)),
        ("AC4", "harmonic oracle", Box::new(ac4)),
        ("AC5", "merge oracle", Box::new(ac5)),
        ("AC6", "rasterizer accuracy", Box::new(ac6)),
        ("AC7", "mask semantics", Box::new(ac7)),
        ("AC8", "unmasked preservation", Box::new(|| ac8(&ac8_dir))),
        ("AC9", "defaults audit", Box::new(ac9)),
        ("AC10", "determinism", Box::new(|| ac10(&ac1_dir, &ac10_dir))),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match result {
            Ok(detail) => println!("[PASS] {id} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
