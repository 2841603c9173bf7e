use std::fs;
use std::path::Path;

use posepattern_core::annotate::{
    annotate_dataset, AnnotateConfig, InstanceDistribution, ERRORS_FILE,
};
use posepattern_core::bop;
use posepattern_core::synth::two_scene_fixture;

fn config(root: &Path, out: &Path) -> AnnotateConfig {
    let mut c = AnnotateConfig::new(root, out);
    c.pattern.resolution = 1.0;
    c.pattern.steps_per_turn = 72;
    c
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    two_scene_fixture().write(&root).unwrap();
    (dir, root)
}

fn find(d: &[InstanceDistribution], scene: u32, im: u32, inst: u32) -> &InstanceDistribution {
    d.iter()
        .find(|x| (x.scene_id, x.im_id, x.inst_idx) == (scene, im, inst))
        .unwrap()
}

#[test]
fn patterns_follow_object_symmetry() {
    let (dir, root) = setup();
    let out = dir.path().join("out");
    let report = annotate_dataset(&config(&root, &out)).unwrap();
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    assert_eq!((report.n_instances, report.n_skipped), (10, 1));
    let dists = bop::read_annotations(&out).unwrap();
    for d in dists.iter().filter(|d| !d.is_skipped()) {
        assert_eq!(d.accepted[0], 0, "identity always comes first");
        assert_eq!(d.symmetries.len(), d.accepted.len());
        match d.obj_id {
            // The L block has no symmetry at all.
            3 => assert_eq!(d.accepted, vec![0]),
            // Every flip of the full box maps it onto itself.
            2 => assert_eq!(d.accepted.len(), 4, "{:?}", d.accepted),
            // The cylinder keeps a whole ring of rotations.
            _ => assert!(d.accepted.len() > 40, "{:?}", d.accepted),
        }
    }
    // The box partly behind the cylinder still sees most of its front face.
    let partial = find(&dists, 1, 1, 1);
    assert!(partial.n_visible > 0 && !partial.is_skipped());
}

#[test]
fn resume_reuses_finished_scenes_until_the_config_changes() {
    let (dir, root) = setup();
    let out = dir.path().join("out");
    let c = config(&root, &out);
    annotate_dataset(&c).unwrap();
    let again = annotate_dataset(&c).unwrap();
    assert_eq!(again.resumed_scenes, vec![1, 2]);
    assert_eq!(again.n_instances, 0);

    let mut changed = c.clone();
    changed.tau = 5;
    let redo = annotate_dataset(&changed).unwrap();
    assert!(redo.resumed_scenes.is_empty());
    assert_eq!(redo.n_instances, 10);
    assert!(bop::read_annotations(&out)
        .unwrap()
        .iter()
        .all(|d| d.tau == 5));
}

#[test]
fn missing_masks_are_per_instance_errors_and_block_resume() {
    let (dir, root) = setup();
    let out = dir.path().join("out");
    let mut c = config(&root, &out);
    c.use_masks = true;
    c.scenes = Some(vec![2]);
    let report = annotate_dataset(&c).unwrap();
    assert_eq!(report.errors.len(), 5);
    assert!(
        report.errors[0].error.contains("mask_visib"),
        "{}",
        report.errors[0].error
    );
    let errors: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join(ERRORS_FILE)).unwrap()).unwrap();
    assert_eq!(errors.as_array().unwrap().len(), 5);
    // Nothing was marked done, so a rerun tries again.
    assert!(annotate_dataset(&c).unwrap().resumed_scenes.is_empty());
}

#[test]
fn object_filter_still_renders_occluders() {
    let (dir, root) = setup();
    let out = dir.path().join("out");
    let mut c = config(&root, &out);
    c.objects = Some(vec![1]);
    let report = annotate_dataset(&c).unwrap();
    assert!(report.errors.is_empty());
    let dists = bop::read_annotations(&out).unwrap();
    assert!(dists.iter().all(|d| d.obj_id == 1));
    // The box in front still hides the cylinder.
    assert!(find(&dists, 2, 2, 1).is_skipped());
}

mod occluded_feature {
    use std::collections::BTreeMap;

    use posepattern_core::annotate::{annotate_instance, ImageKey, SoftParams};
    use posepattern_core::candidates::CandidateSet;
    use posepattern_core::patterns::{precompute_patterns, PatternParams};
    use posepattern_core::sampling::sample_surface;
    use posepattern_core::synth::box_mesh;
    use posepattern_core::visibility::{render_scene_depth, visible_vertices, SceneInstance};
    use posepattern_core::{CameraModel, RigidTransform, SurfaceIndex, TriangleMesh, Vec3};

    fn merge(a: &TriangleMesh, b: &TriangleMesh) -> TriangleMesh {
        let offset = a.vertices().len() as u32;
        let vertices = a.vertices().iter().chain(b.vertices()).copied().collect();
        let triangles = a
            .triangles()
            .iter()
            .copied()
            .chain(b.triangles().iter().map(|t| t.map(|i| i + offset)))
            .collect();
        TriangleMesh::new(vertices, triangles).unwrap()
    }

    /// A 20 mm cube with a small bump on its +z face; the bump is the only
    /// thing telling the square symmetries apart. Seen head-on from +z the
    /// pattern is {Id}; once a plate hides the bump every candidate that maps
    /// the top face onto a face survives.
    #[test]
    fn hiding_the_bump_widens_the_pattern() {
        let h = 10.0;
        let bump = box_mesh(Vec3::new(4.0, 4.0, 3.0)).transformed(
            &RigidTransform::from_translation(Vec3::new(6.0, 6.0, h + 1.5)),
        );
        let object = merge(&box_mesh(Vec3::new(20.0, 20.0, 20.0)), &bump);
        let mut t: Vec<RigidTransform> = (1..4)
            .map(|k| RigidTransform::rot_z_deg(90.0 * k as f64))
            .collect();
        t.extend((0..4).map(|k| {
            RigidTransform::rot_x_deg(180.0).compose(&RigidTransform::rot_z_deg(90.0 * k as f64))
        }));
        let cands = CandidateSet::from_transforms(t, h * 3f64.sqrt(), 1e-6);
        let samples = sample_surface(&object, 0.5, 0).unwrap();
        let index = SurfaceIndex::from_points(&samples);
        let table =
            precompute_patterns(&samples, &index, &cands, &PatternParams::default()).unwrap();

        let cam = CameraModel::new(1000.0, 1000.0, 320.0, 240.0, 640, 480).unwrap();
        // Model +z faces the camera.
        let pose = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 200.0))
            .compose(&RigidTransform::rot_x_deg(180.0));
        let inst = SceneInstance {
            obj_id: 1,
            inst_idx: 0,
            gt_pose: pose,
        };
        // A thin plate between the camera and the bump's image position.
        let bump_cam = pose.apply(&Vec3::new(6.0, 6.0, h + 3.0));
        let plate = SceneInstance {
            obj_id: 2,
            inst_idx: 1,
            gt_pose: RigidTransform::from_translation(Vec3::new(bump_cam.x, bump_cam.y, 150.0)),
        };
        let meshes = BTreeMap::from([(1, object), (2, box_mesh(Vec3::new(8.0, 8.0, 1.0)))]);

        let mut accepted = Vec::new();
        for scene in [vec![inst], vec![inst, plate]] {
            let depth = render_scene_depth(&scene, &meshes, &cam).unwrap();
            let visible = visible_vertices(&inst, &samples, &depth, 2.0);
            let params = SoftParams {
                tau: 0,
                visibility_floor: 0.0,
            };
            let key = ImageKey {
                scene_id: 1,
                im_id: 1,
            };
            let d = annotate_instance(key, &inst, &table, &visible, &cands, &params).unwrap();
            accepted.push(d.accepted);
        }
        assert_eq!(accepted[0], vec![0]);
        assert_eq!(accepted[1], (0..8).collect::<Vec<_>>());
    }
}
