use std::fs;

use posepattern_core::bop::{load_dataset, DatasetOptions};
use posepattern_core::synth::two_scene_fixture;
use posepattern_core::Error;

fn fixture() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    two_scene_fixture().write(&root).unwrap();
    (dir, root)
}

#[test]
fn mini_fixture_is_indexed() {
    let (_dir, root) = fixture();
    let ds = load_dataset(&root, &DatasetOptions::default()).unwrap();
    assert_eq!(ds.objects.len(), 3);
    assert_eq!(ds.scenes.len(), 2);
    assert_eq!(ds.n_images(), 4);
    assert_eq!(ds.n_instances(), 10);
    assert_eq!(ds.targets.as_ref().unwrap().len(), 9);
    assert_eq!(ds.objects[&1].symmetries.continuous.len(), 1);
    assert_eq!(ds.objects[&1].symmetries.discrete.len(), 1);
    assert_eq!(ds.objects[&2].symmetries.discrete.len(), 3);
    assert!(ds.objects[&3].symmetries.discrete.is_empty());
    let im = ds.image(2, 2).unwrap();
    assert_eq!((im.camera.width, im.camera.height), (320, 240));
    assert_eq!(
        im.instances.iter().map(|i| i.inst_idx).collect::<Vec<_>>(),
        vec![0, 1, 2]
    );
    assert_eq!(im.instances[1].obj_id, 1);
    assert_eq!(
        im.instances[1].gt_pose.translation_array(),
        [0.0, 0.0, 450.0]
    );
}

#[test]
fn missing_model_names_the_object() {
    let (_dir, root) = fixture();
    fs::remove_file(root.join("models/obj_000002.ply")).unwrap();
    match load_dataset(&root, &DatasetOptions::default()) {
        Err(e @ Error::MissingModel { .. }) => assert!(e.to_string().contains('2'), "{e}"),
        other => panic!("expected a missing model error, got {other:?}"),
    }
}

#[test]
fn empty_or_absent_roots_fail() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_dataset(dir.path(), &DatasetOptions::default()).is_err());
    assert!(load_dataset(&dir.path().join("nope"), &DatasetOptions::default()).is_err());
}

#[test]
fn missing_split_fails_and_camera_file_can_be_named() {
    let (_dir, root) = fixture();
    let opts = DatasetOptions {
        split: "val".into(),
        ..Default::default()
    };
    assert!(load_dataset(&root, &opts).is_err());

    fs::rename(
        root.join("camera.json"),
        root.join("camera_primesense.json"),
    )
    .unwrap();
    // The first camera*.json is picked up, or the named one.
    assert!(load_dataset(&root, &DatasetOptions::default()).is_ok());
    let named = DatasetOptions {
        camera_file: Some("camera_primesense.json".into()),
        ..Default::default()
    };
    assert_eq!(load_dataset(&root, &named).unwrap().n_instances(), 10);
}
