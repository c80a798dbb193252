use std::path::Path;

use dsm_scrub::inpaint::{BackendSpec, ExemplarParams};
use dsm_scrub::mesh::load_mesh;
use dsm_scrub::pipeline::{
    patch_file, Outcome, Pipeline, RunConfig, RunManifest, Stage, SynthConfig, OUTPUT, SYNTH_CLEAN, SYNTH_OCCLUDED,
};
use dsm_scrub::Error;

fn small_config(out: &Path) -> RunConfig {
    RunConfig {
        out: out.to_path_buf(),
        gsd: 0.1,
        patch_px: 64,
        z_range: Some([0.0, 10.0]),
        workers: 2,
        synth: SynthConfig {
            extent: [12.0, 12.0],
            boxes: 2,
            seed: 4,
            scene: None,
        },
        ..Default::default()
    }
}

fn synth_then_all(cfg: RunConfig) -> Pipeline {
    let mut p = Pipeline::open(cfg).unwrap();
    p.run(Stage::Synth).unwrap();
    p.run_all().unwrap();
    p
}

#[test]
fn full_run_flattens_boxes_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let p = synth_then_all(small_config(dir.path()));
    let out = load_mesh(&dir.path().join(OUTPUT)).unwrap();
    let max_z = out.vertices.iter().map(|v| v[2]).fold(f32::MIN, f32::max);
    assert!(max_z < 0.05, "box survived: max z {max_z}");
    let m = p.manifest();
    assert!(m.blend.is_some());
    assert!(dir.path().join("metrics.json").exists() && dir.path().join("metrics.txt").exists());
    let grid = m.grid.as_ref().unwrap();
    for rect in &grid.patches {
        for kind in ["color", "height"] {
            assert!(m.stages["render"].outputs.contains_key(&patch_file(rect, kind, "png")));
        }
        assert!(m.stages["render"].outputs.contains_key(&patch_file(rect, "triid", "bin")));
    }

    let mut again = Pipeline::open(small_config(dir.path())).unwrap();
    let outcomes = again.run_all().unwrap();
    assert!(outcomes.iter().all(|(_, o)| *o == Outcome::Skipped), "{outcomes:?}");
}

#[test]
fn deleted_outputs_are_rebuilt_identically() {
    let dir = tempfile::tempdir().unwrap();
    let p = synth_then_all(small_config(dir.path()));
    let before = p.manifest().clone();
    std::fs::remove_file(dir.path().join(patch_file(&before.grid.as_ref().unwrap().patches[0], "color_inpainted", "png")))
        .unwrap();
    let mut again = Pipeline::open(small_config(dir.path())).unwrap();
    let outcomes = again.run_all().unwrap();
    let executed: Vec<Stage> = outcomes.iter().filter(|(_, o)| *o == Outcome::Executed).map(|(s, _)| *s).collect();
    assert_eq!(executed, vec![Stage::Inpaint]);
    let after = RunManifest::load(dir.path()).unwrap().unwrap();
    for stage in ["inpaint", "remesh", "retexture", "metrics"] {
        assert_eq!(before.stages[stage].outputs, after.stages[stage].outputs, "{stage}");
    }
}

#[test]
fn out_of_order_stage_names_missing_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(small_config(dir.path())).unwrap();
    p.run(Stage::Synth).unwrap();
    p.run(Stage::Render).unwrap();
    match p.run(Stage::Metrics) {
        Err(Error::Prerequisite { stage, missing }) => {
            assert_eq!(stage, "metrics");
            assert_eq!(missing, "masks");
        }
        other => panic!("expected a prerequisite error, got {other:?}"),
    }
}

#[test]
fn empty_class_selection_leaves_mesh_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        classes: vec![],
        ..small_config(dir.path())
    };
    synth_then_all(cfg);
    let input = load_mesh(&dir.path().join(SYNTH_OCCLUDED)).unwrap();
    let output = load_mesh(&dir.path().join(OUTPUT)).unwrap();
    assert_eq!(input, output);
}

#[test]
fn missing_input_is_a_stage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(small_config(dir.path())).unwrap();
    let err = p.run(Stage::Render).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "render"), "{err}");
    let m = RunManifest::load(dir.path()).unwrap().unwrap();
    assert!(!m.stages["render"].complete);
}

#[test]
fn exemplar_backend_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        backend: BackendSpec::Exemplar(ExemplarParams {
            patch_px: 5,
            ..Default::default()
        }),
        ..small_config(dir.path())
    };
    synth_then_all(cfg);
    let clean = load_mesh(&dir.path().join(SYNTH_CLEAN)).unwrap();
    let out = load_mesh(&dir.path().join(OUTPUT)).unwrap();
    assert!(out.vertex_count() <= clean.vertex_count() + 16);
    // Exemplar fill copies ground heights, so the boxes are gone too.
    assert!(out.vertices.iter().all(|v| v[2] < 0.05));
}
