//! Per-image symmetry patterns: histogram of the visible samples' elementary
//! patterns, soft intersection, and the resulting equiprobable pose set.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bop::{self, DatasetIndex, DatasetOptions, ImageInfo, ObjectInfo};
use crate::candidates::{build_candidates, CandidateConfig, CandidateSet, IDENTITY};
use crate::error::{Error, Result};
use crate::geom::{PointSet, RigidTransform};
use crate::mesh::TriangleMesh;
use crate::patterns::{self, PatternParams, PatternTable};
use crate::sampling::{self, sample_surface};
use crate::spatial::SurfaceIndex;
use crate::visibility::{
    render_scene_depth, visible_vertices_masked, Mask, SceneInstance, DEFAULT_DEPTH_TOLERANCE,
    DEFAULT_VISIBILITY_FLOOR,
};

/// Minimum size, in samples at 0.5 mm resolution, of a symmetry-breaking element.
pub const DEFAULT_TAU: u32 = 28;

/// Resolution `DEFAULT_TAU` was tuned for.
pub const TAU_REFERENCE_RESOLUTION: f64 = 0.5;

pub const SKIP_FULLY_OCCLUDED: &str = "fully_occluded";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetryHistogram {
    /// Per candidate, the number of visible samples whose pattern contains it.
    pub counts: Vec<u32>,
    pub n_visible: u32,
}

pub fn build_histogram(table: &PatternTable, visible: &[u32]) -> SymmetryHistogram {
    let mut counts = vec![0u32; table.n_candidates()];
    for &v in visible {
        for (w, &word) in table.row(v as usize).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                counts[w * 64 + bits.trailing_zeros() as usize] += 1;
                bits &= bits - 1;
            }
        }
    }
    SymmetryHistogram {
        counts,
        n_visible: visible.len() as u32,
    }
}

/// Candidates supported by all but fewer than `tau` visible samples:
/// `counts[i] > n_visible - tau`. With `tau = 0` this is the strict
/// intersection `counts[i] == n_visible`; with no visible samples it is
/// `{identity}` for `tau = 0` and every candidate otherwise.
pub fn soft_intersect(h: &SymmetryHistogram, tau: u32) -> Vec<usize> {
    let n = h.n_visible as i64;
    if tau == 0 {
        if n == 0 {
            return vec![IDENTITY];
        }
        return (0..h.counts.len())
            .filter(|&i| h.counts[i] as i64 == n)
            .collect();
    }
    let bar = n - tau as i64;
    (0..h.counts.len())
        .filter(|&i| h.counts[i] as i64 > bar)
        .collect()
}

/// One annotated instance. `symmetries[k]` is candidate `accepted[k]`; the
/// instance's equiprobable poses are `gt_pose ∘ symmetries[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDistribution {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub inst_idx: u32,
    pub gt_pose: RigidTransform,
    pub accepted: Vec<usize>,
    pub symmetries: Vec<RigidTransform>,
    pub tau: u32,
    pub n_visible: u32,
    /// Set when the instance was not annotated, e.g. [`SKIP_FULLY_OCCLUDED`].
    pub skip_reason: Option<String>,
}

impl InstanceDistribution {
    pub fn poses(&self) -> Vec<RigidTransform> {
        self.symmetries
            .iter()
            .map(|s| self.gt_pose.compose(s))
            .collect()
    }

    pub fn is_skipped(&self) -> bool {
        self.skip_reason.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageKey {
    pub scene_id: u32,
    pub im_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftParams {
    pub tau: u32,
    /// Fraction of all samples that must be visible to annotate.
    pub visibility_floor: f64,
}

impl Default for SoftParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            visibility_floor: DEFAULT_VISIBILITY_FLOOR,
        }
    }
}

pub fn annotate_instance(
    image: ImageKey,
    inst: &SceneInstance,
    table: &PatternTable,
    visible: &[u32],
    candidates: &CandidateSet,
    params: &SoftParams,
) -> Result<InstanceDistribution> {
    let table_hash = table.provenance().candidate_hash;
    if table_hash != candidates.hash() || table.n_candidates() != candidates.len() {
        return Err(Error::CandidateHashMismatch {
            table: table_hash,
            candidates: candidates.hash(),
        });
    }
    if let Some(&bad) = visible.iter().find(|&&v| v as usize >= table.n_vertices()) {
        return Err(Error::InvalidArgument(format!(
            "visible sample {bad} out of range for a table of {} samples",
            table.n_vertices()
        )));
    }
    let mut dist = InstanceDistribution {
        scene_id: image.scene_id,
        im_id: image.im_id,
        obj_id: inst.obj_id,
        inst_idx: inst.inst_idx,
        gt_pose: inst.gt_pose,
        accepted: Vec::new(),
        symmetries: Vec::new(),
        tau: params.tau,
        n_visible: visible.len() as u32,
        skip_reason: None,
    };
    let floor = params.visibility_floor * table.n_vertices() as f64;
    if visible.is_empty() || (visible.len() as f64) < floor {
        dist.skip_reason = Some(SKIP_FULLY_OCCLUDED.to_string());
        return Ok(dist);
    }
    let hist = build_histogram(table, visible);
    dist.accepted = soft_intersect(&hist, params.tau);
    dist.symmetries = dist.accepted.iter().map(|&i| *candidates.get(i)).collect();
    Ok(dist)
}

/// Everything that defines an object's pattern table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatternConfig {
    pub epsilon: f64,
    pub resolution: f64,
    pub steps_per_turn: usize,
    pub color_tolerance: Option<f64>,
    pub sampling_seed: u64,
    pub compose_products: bool,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            epsilon: patterns::DEFAULT_EPSILON,
            resolution: sampling::DEFAULT_RESOLUTION,
            steps_per_turn: crate::candidates::DEFAULT_STEPS_PER_TURN,
            color_tolerance: None,
            sampling_seed: sampling::DEFAULT_SEED,
            compose_products: false,
        }
    }
}

/// An object ready for annotation.
#[derive(Debug, Clone)]
pub struct PreparedObject {
    pub obj_id: u32,
    pub samples: PointSet,
    pub candidates: CandidateSet,
    pub table: PatternTable,
    pub from_cache: bool,
}

/// Samples the mesh, expands the symmetry proposal and computes (or loads)
/// the pattern table.
pub fn prepare_object(
    info: &ObjectInfo,
    mesh: &TriangleMesh,
    config: &PatternConfig,
    cache_dir: Option<&Path>,
) -> Result<PreparedObject> {
    let samples = sample_surface(mesh, config.resolution, config.sampling_seed)?;
    let index = SurfaceIndex::from_points(&samples);
    let cand_config = CandidateConfig {
        steps_per_turn: config.steps_per_turn,
        compose_products: config.compose_products,
        ..CandidateConfig::for_object(mesh.bounding_radius(), config.epsilon)
    };
    let candidates = build_candidates(&info.symmetries, &cand_config)?;
    let params = PatternParams {
        epsilon: config.epsilon,
        color_tolerance: config.color_tolerance,
        object_id: info.obj_id,
        sampling_seed: config.sampling_seed,
    };
    let (table, from_cache) = match cache_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            patterns::load_or_compute(dir, &samples, &index, &candidates, &params)?
        }
        None => (
            patterns::precompute_patterns(&samples, &index, &candidates, &params)?,
            false,
        ),
    };
    Ok(PreparedObject {
        obj_id: info.obj_id,
        samples,
        candidates,
        table,
        from_cache,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotateConfig {
    pub dataset: PathBuf,
    pub split: String,
    pub models_dir: String,
    pub camera_file: Option<String>,
    #[serde(flatten)]
    pub pattern: PatternConfig,
    pub tau: u32,
    pub depth_tolerance: f64,
    pub visibility_floor: f64,
    /// Intersect rendered visibility with BOP `mask_visib` images.
    pub use_masks: bool,
    /// Only annotate these objects (all are still rendered as occluders).
    pub objects: Option<Vec<u32>>,
    pub scenes: Option<Vec<u32>>,
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
}

impl AnnotateConfig {
    pub fn new(dataset: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let opts = DatasetOptions::default();
        Self {
            dataset: dataset.into(),
            split: opts.split,
            models_dir: opts.models_dir,
            camera_file: opts.camera_file,
            pattern: PatternConfig::default(),
            tau: DEFAULT_TAU,
            depth_tolerance: DEFAULT_DEPTH_TOLERANCE,
            visibility_floor: DEFAULT_VISIBILITY_FLOOR,
            use_masks: false,
            objects: None,
            scenes: None,
            out_dir: out_dir.into(),
            cache_dir: None,
        }
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions {
            split: self.split.clone(),
            models_dir: self.models_dir.clone(),
            camera_file: self.camera_file.clone(),
        }
    }

    /// Hash of every setting that influences the annotation content.
    pub fn content_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            split: &'a str,
            models_dir: &'a str,
            camera_file: &'a Option<String>,
            pattern: &'a PatternConfig,
            tau: u32,
            depth_tolerance: f64,
            visibility_floor: f64,
            use_masks: bool,
            objects: &'a Option<Vec<u32>>,
        }
        let key = Key {
            split: &self.split,
            models_dir: &self.models_dir,
            camera_file: &self.camera_file,
            pattern: &self.pattern,
            tau: self.tau,
            depth_tolerance: self.depth_tolerance,
            visibility_floor: self.visibility_floor,
            use_masks: self.use_masks,
            objects: &self.objects,
        };
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        let d = Sha256::digest(&bytes);
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// τ is an absolute sample count, so it should scale with sample density.
    pub fn tau_scaling_warning(&self) -> Option<String> {
        let res = self.pattern.resolution;
        if res == TAU_REFERENCE_RESOLUTION {
            return None;
        }
        let scaled = DEFAULT_TAU as f64 * (TAU_REFERENCE_RESOLUTION / res).powi(2);
        if self.tau == DEFAULT_TAU {
            Some(format!(
                "resolution {res} mm differs from {TAU_REFERENCE_RESOLUTION} mm but tau is the unscaled {DEFAULT_TAU}; \
                 the equivalent tau is about {}",
                scaled.round()
            ))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceError {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub inst_idx: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnnotateReport {
    pub n_instances: usize,
    pub n_annotated: usize,
    pub n_skipped: usize,
    pub resumed_scenes: Vec<u32>,
    pub errors: Vec<InstanceError>,
}

pub const META_FILE: &str = "annotation_meta.json";
pub const ERRORS_FILE: &str = "annotation_errors.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, serde::Deserialize)]
struct SceneSummary {
    annotated: usize,
    skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
struct Meta {
    config_hash: String,
    config: serde_json::Value,
    sampling_scheme: String,
    /// Scenes finished without errors, keyed by zero-padded scene id.
    scenes: BTreeMap<String, SceneSummary>,
}

fn read_meta(path: &Path) -> Option<Meta> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_meta(path: &Path, meta: &Meta) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    bop::write_atomic(path, text.as_bytes())
}

fn annotate_image(
    image: &ImageInfo,
    config: &AnnotateConfig,
    dataset: &DatasetIndex,
    meshes: &BTreeMap<u32, TriangleMesh>,
    objects: &BTreeMap<u32, std::result::Result<PreparedObject, String>>,
) -> Vec<std::result::Result<InstanceDistribution, InstanceError>> {
    let key = ImageKey {
        scene_id: image.scene_id,
        im_id: image.im_id,
    };
    let wanted: Vec<&SceneInstance> = image
        .instances
        .iter()
        .filter(|i| objects.contains_key(&i.obj_id))
        .collect();
    let fail = |inst: &SceneInstance, error: String| InstanceError {
        scene_id: key.scene_id,
        im_id: key.im_id,
        obj_id: inst.obj_id,
        inst_idx: inst.inst_idx,
        error,
    };
    if wanted.is_empty() {
        return Vec::new();
    }
    let depth = match render_scene_depth(&image.instances, meshes, &image.camera) {
        Ok(d) => d,
        Err(e) => return wanted.iter().map(|i| Err(fail(i, e.to_string()))).collect(),
    };
    wanted
        .into_iter()
        .map(|inst| {
            let obj = objects[&inst.obj_id]
                .as_ref()
                .map_err(|e| fail(inst, e.clone()))?;
            let mask = if config.use_masks {
                let path = dataset.mask_visib_path(key.scene_id, key.im_id, inst.inst_idx);
                Some(Mask::load_png(&path).map_err(|e| fail(inst, e.to_string()))?)
            } else {
                None
            };
            let visible = visible_vertices_masked(
                inst,
                &obj.samples,
                &depth,
                config.depth_tolerance,
                mask.as_ref(),
            );
            let params = SoftParams {
                tau: config.tau,
                visibility_floor: config.visibility_floor,
            };
            annotate_instance(key, inst, &obj.table, &visible, &obj.candidates, &params)
                .map_err(|e| fail(inst, e.to_string()))
        })
        .collect()
}

/// Loads the model meshes of `obj_ids` in parallel; failures are returned
/// per object.
pub fn load_meshes(
    dataset: &DatasetIndex,
    obj_ids: &[u32],
) -> BTreeMap<u32, std::result::Result<TriangleMesh, String>> {
    obj_ids
        .par_iter()
        .map(|&id| {
            let mesh = dataset
                .objects
                .get(&id)
                .ok_or(Error::MissingMesh(id))
                .and_then(|info| TriangleMesh::load_ply(&info.model_path))
                .map_err(|e| e.to_string());
            (id, mesh)
        })
        .collect()
}

/// Prepares the given objects in parallel. Failures are kept per object so
/// that only the affected instances are reported.
pub fn prepare_objects(
    dataset: &DatasetIndex,
    meshes: &BTreeMap<u32, std::result::Result<TriangleMesh, String>>,
    obj_ids: &[u32],
    config: &PatternConfig,
    cache_dir: Option<&Path>,
) -> BTreeMap<u32, std::result::Result<PreparedObject, String>> {
    obj_ids
        .par_iter()
        .map(|&id| {
            let prepared = match (dataset.objects.get(&id), meshes.get(&id)) {
                (Some(info), Some(Ok(mesh))) => prepare_object(info, mesh, config, cache_dir)
                    .inspect(|obj| {
                        log::info!(
                            "object {id}: {} samples, {} candidates{}",
                            obj.samples.len(),
                            obj.candidates.len(),
                            if obj.from_cache {
                                " (cached patterns)"
                            } else {
                                ""
                            }
                        );
                    })
                    .map_err(|e| e.to_string()),
                (_, Some(Err(e))) => Err(e.clone()),
                _ => Err(Error::MissingMesh(id).to_string()),
            };
            (id, prepared)
        })
        .collect()
}

/// Annotates every instance of the dataset split and writes
/// `<out>/<scene>/scene_gt_dist.json`, `annotation_meta.json` and
/// `annotation_errors.json`. Per-instance failures are reported, never fatal.
/// Scenes already completed under the same configuration are skipped.
pub fn annotate_dataset(config: &AnnotateConfig) -> Result<AnnotateReport> {
    if let Some(w) = config.tau_scaling_warning() {
        log::warn!("{w}");
    }
    let dataset = bop::load_dataset(&config.dataset, &config.dataset_options())?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let meta_path = out.join(META_FILE);
    let hash = config.content_hash();
    let mut meta = match read_meta(&meta_path) {
        Some(m) if m.config_hash == hash => m,
        _ => Meta {
            config_hash: hash.clone(),
            config: serde_json::to_value(config).expect("config serializes"),
            sampling_scheme: sampling::SAMPLING_SCHEME.to_string(),
            scenes: BTreeMap::new(),
        },
    };

    let scenes: Vec<_> = dataset
        .scenes
        .iter()
        .filter(|s| {
            config
                .scenes
                .as_ref()
                .is_none_or(|ids| ids.contains(&s.scene_id))
        })
        .collect();
    let mut report = AnnotateReport::default();
    let pending: Vec<_> = scenes
        .into_iter()
        .filter(|s| {
            let done = meta.scenes.contains_key(&format!("{:06}", s.scene_id))
                && bop::scene_annotation_path(out, s.scene_id).exists();
            if done {
                report.resumed_scenes.push(s.scene_id);
            }
            !done
        })
        .collect();

    let mut render_ids = BTreeSet::new();
    for scene in &pending {
        for im in &scene.images {
            render_ids.extend(im.instances.iter().map(|i| i.obj_id));
        }
    }
    let annotate_ids: Vec<u32> = render_ids
        .iter()
        .copied()
        .filter(|id| config.objects.as_ref().is_none_or(|o| o.contains(id)))
        .collect();
    let render_ids: Vec<u32> = render_ids.into_iter().collect();
    let loaded = load_meshes(&dataset, &render_ids);
    let objects = prepare_objects(
        &dataset,
        &loaded,
        &annotate_ids,
        &config.pattern,
        config.cache_dir.as_deref(),
    );
    let meshes: BTreeMap<u32, TriangleMesh> = loaded
        .into_iter()
        .filter_map(|(id, m)| match m {
            Ok(m) => Some((id, m)),
            Err(e) => {
                log::error!("object {id}: {e}");
                None
            }
        })
        .collect();

    for scene in pending {
        let results: Vec<_> = scene
            .images
            .par_iter()
            .map(|im| annotate_image(im, config, &dataset, &meshes, &objects))
            .collect();
        let mut dists = Vec::new();
        let mut scene_errors = 0;
        let mut summary = SceneSummary::default();
        for r in results.into_iter().flatten() {
            report.n_instances += 1;
            match r {
                Ok(d) => {
                    if d.is_skipped() {
                        summary.skipped += 1;
                    } else {
                        summary.annotated += 1;
                    }
                    dists.push(d);
                }
                Err(e) => {
                    log::error!(
                        "scene {} image {} instance {}: {}",
                        e.scene_id,
                        e.im_id,
                        e.inst_idx,
                        e.error
                    );
                    report.errors.push(e);
                    scene_errors += 1;
                }
            }
        }
        report.n_annotated += summary.annotated;
        report.n_skipped += summary.skipped;
        bop::write_scene_annotations(&bop::scene_annotation_path(out, scene.scene_id), &dists)?;
        if scene_errors == 0 {
            meta.scenes
                .insert(format!("{:06}", scene.scene_id), summary);
        }
        write_meta(&meta_path, &meta)?;
    }
    write_meta(&meta_path, &meta)?;
    let errors_path = out.join(ERRORS_FILE);
    let mut text =
        serde_json::to_string_pretty(&report.errors).map_err(|e| Error::json(&errors_path, e))?;
    text.push('\n');
    bop::write_atomic(&errors_path, text.as_bytes())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::Provenance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hist(counts: &[u32], n: u32) -> SymmetryHistogram {
        SymmetryHistogram {
            counts: counts.to_vec(),
            n_visible: n,
        }
    }

    fn random_table(
        rng: &mut ChaCha8Rng,
        n_v: usize,
        n_c: usize,
    ) -> (Vec<Vec<bool>>, PatternTable) {
        let rows: Vec<Vec<bool>> = (0..n_v)
            .map(|_| {
                (0..n_c)
                    .map(|c| c == IDENTITY || rng.random_bool(0.8))
                    .collect()
            })
            .collect();
        let prov = Provenance {
            object_id: 1,
            sampling_seed: 0,
            candidate_hash: 0,
            points_hash: 0,
        };
        let table = PatternTable::from_rows(&rows, 1.0, prov).unwrap();
        (rows, table)
    }

    #[test]
    fn soft_rule_on_hand_built_counts() {
        assert_eq!(soft_intersect(&hist(&[10, 9, 8, 2], 10), 2), vec![0, 1]);
        assert_eq!(soft_intersect(&hist(&[10, 9, 8, 2], 10), 0), vec![0]);
        assert_eq!(soft_intersect(&hist(&[10, 9, 8, 2], 10), 1), vec![0]);
        assert_eq!(soft_intersect(&hist(&[10, 9, 8, 2], 10), 3), vec![0, 1, 2]);
        assert_eq!(
            soft_intersect(&hist(&[10, 9, 8, 2], 10), 10),
            vec![0, 1, 2, 3]
        );
        assert_eq!(soft_intersect(&hist(&[0, 0, 0], 0), 0), vec![0]);
        assert_eq!(soft_intersect(&hist(&[0, 0, 0], 0), 1), vec![0, 1, 2]);
    }

    #[test]
    fn histogram_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, table) = random_table(&mut rng, 20, 70);
        let h = build_histogram(&table, &[]);
        assert!(h.counts.iter().all(|&c| c == 0));
        let full =
            PatternTable::from_rows(&vec![vec![true; 130]; 9], 1.0, *table.provenance()).unwrap();
        let all: Vec<u32> = (0..9).collect();
        assert!(build_histogram(&full, &all).counts.iter().all(|&c| c == 9));
    }

    #[test]
    fn histogram_matches_double_loop_and_strict_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n_v = rng.random_range(1..200);
            let n_c = rng.random_range(1..150);
            let (rows, table) = random_table(&mut rng, n_v, n_c);
            let visible: Vec<u32> = (0..n_v as u32).filter(|_| rng.random_bool(0.3)).collect();
            let h = build_histogram(&table, &visible);
            for (c, &count) in h.counts.iter().enumerate() {
                let naive = visible.iter().filter(|&&v| rows[v as usize][c]).count() as u32;
                assert_eq!(count, naive);
            }
            assert_eq!(h.counts.len(), n_c);
            assert_eq!(h.counts[IDENTITY], h.n_visible);
            if !visible.is_empty() {
                assert_eq!(soft_intersect(&h, 0), table.strict_intersection(&visible));
            }
        }
    }

    #[test]
    fn strict_pattern_shrinks_with_more_evidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (_, table) = random_table(&mut rng, 60, 40);
        let v1: Vec<u32> = (0..20).collect();
        let v2: Vec<u32> = (0..45).collect();
        let a1 = soft_intersect(&build_histogram(&table, &v1), 0);
        let a2 = soft_intersect(&build_histogram(&table, &v2), 0);
        assert!(a2.iter().all(|i| a1.contains(i)));
    }

    #[test]
    fn hash_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, table) = random_table(&mut rng, 4, 1);
        let cands = CandidateSet::from_transforms([], 1.0, 0.1);
        let inst = SceneInstance {
            obj_id: 1,
            inst_idx: 0,
            gt_pose: RigidTransform::identity(),
        };
        let key = ImageKey {
            scene_id: 1,
            im_id: 1,
        };
        let r = annotate_instance(key, &inst, &table, &[0], &cands, &SoftParams::default());
        assert!(matches!(r, Err(Error::CandidateHashMismatch { .. })));
    }

    #[test]
    fn floor_marks_instances_skipped() {
        let cands = CandidateSet::from_transforms([RigidTransform::rot_z_deg(90.0)], 1.0, 0.1);
        let prov = Provenance {
            object_id: 1,
            sampling_seed: 0,
            candidate_hash: cands.hash(),
            points_hash: 0,
        };
        let table = PatternTable::from_rows(&vec![vec![true, true]; 200], 1.0, prov).unwrap();
        let inst = SceneInstance {
            obj_id: 1,
            inst_idx: 3,
            gt_pose: RigidTransform::from_translation(crate::Vec3::new(0.0, 0.0, 500.0)),
        };
        let key = ImageKey {
            scene_id: 2,
            im_id: 7,
        };
        let params = SoftParams {
            tau: 0,
            visibility_floor: 0.01,
        };
        let d = annotate_instance(key, &inst, &table, &[5], &cands, &params).unwrap();
        assert_eq!(d.skip_reason.as_deref(), Some(SKIP_FULLY_OCCLUDED));
        let d = annotate_instance(key, &inst, &table, &[5, 6], &cands, &params).unwrap();
        assert!(!d.is_skipped());
        assert_eq!(d.accepted, vec![0, 1]);
        let poses = d.poses();
        assert_eq!(poses[0], inst.gt_pose);
        assert_eq!(poses.len(), d.accepted.len());
    }

    #[test]
    fn tau_guard() {
        let mut c = AnnotateConfig::new("d", "o");
        assert!(c.tau_scaling_warning().is_none());
        c.pattern.resolution = 1.0;
        assert!(c.tau_scaling_warning().unwrap().contains("about 7"));
        c.tau = 7;
        assert!(c.tau_scaling_warning().is_none());
    }
}
