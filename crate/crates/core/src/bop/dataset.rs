use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use crate::candidates::{ContinuousSymmetry, SymmetrySpec};
use crate::error::{Error, Result};
use crate::geom::{CameraModel, RigidTransform, Vec3};
use crate::visibility::SceneInstance;

/// Orthonormality tolerance for rotations read from dataset files, which are
/// stored with limited precision.
const FILE_ROTATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetOptions {
    pub split: String,
    pub models_dir: String,
    /// Camera file with `width`/`height`; by default `camera.json`, else the
    /// first `camera*.json` in the root.
    pub camera_file: Option<String>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            split: "test".into(),
            models_dir: "models".into(),
            camera_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInfo {
    pub obj_id: u32,
    pub model_path: PathBuf,
    pub diameter: f64,
    pub symmetries: SymmetrySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageInfo {
    pub scene_id: u32,
    pub im_id: u32,
    pub camera: CameraModel,
    pub instances: Vec<SceneInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInfo {
    pub scene_id: u32,
    pub dir: PathBuf,
    pub images: Vec<ImageInfo>,
}

/// One row of `test_targets_bop19.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
pub struct Target {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub inst_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub split: String,
    pub objects: BTreeMap<u32, ObjectInfo>,
    /// Sorted by scene id; images sorted by image id.
    pub scenes: Vec<SceneInfo>,
    pub targets: Option<Vec<Target>>,
}

impl DatasetIndex {
    pub fn n_images(&self) -> usize {
        self.scenes.iter().map(|s| s.images.len()).sum()
    }

    pub fn n_instances(&self) -> usize {
        self.scenes
            .iter()
            .flat_map(|s| &s.images)
            .map(|i| i.instances.len())
            .sum()
    }

    pub fn image(&self, scene_id: u32, im_id: u32) -> Option<&ImageInfo> {
        let s = self.scenes.iter().find(|s| s.scene_id == scene_id)?;
        s.images.iter().find(|i| i.im_id == im_id)
    }

    pub fn mask_visib_path(&self, scene_id: u32, im_id: u32, inst_idx: u32) -> PathBuf {
        self.root
            .join(&self.split)
            .join(format!("{scene_id:06}"))
            .join("mask_visib")
            .join(format!("{im_id:06}_{inst_idx:06}.png"))
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn parse_id(key: &str, path: &Path) -> Result<u32> {
    key.parse().map_err(|_| {
        Error::Dataset(format!(
            "{}: key {key:?} is not an integer id",
            path.display()
        ))
    })
}

fn floats(v: &Value, what: &str, path: &Path) -> Result<Vec<f64>> {
    let bad = || {
        Error::Dataset(format!(
            "{}: `{what}` must be a list of numbers",
            path.display()
        ))
    };
    v.as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|x| x.as_f64().ok_or_else(bad))
        .collect()
}

fn field<'a>(obj: &'a Value, name: &str, path: &Path) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::Dataset(format!("{}: missing field `{name}`", path.display())))
}

/// Parses `models_info.json`; model paths are `<models_dir>/obj_XXXXXX.ply`.
pub fn read_models_info(path: &Path, models_dir: &Path) -> Result<BTreeMap<u32, ObjectInfo>> {
    let doc = read_json(path)?;
    let map = doc
        .as_object()
        .ok_or_else(|| Error::Dataset(format!("{}: expected an object", path.display())))?;
    let mut out = BTreeMap::new();
    for (key, entry) in map {
        let obj_id = parse_id(key, path)?;
        let diameter = field(entry, "diameter", path)?.as_f64().ok_or_else(|| {
            Error::Dataset(format!("{}: bad diameter for {obj_id}", path.display()))
        })?;
        let mut symmetries = SymmetrySpec::default();
        if let Some(list) = entry.get("symmetries_discrete").and_then(Value::as_array) {
            for m in list {
                let m = floats(m, "symmetries_discrete", path)?;
                symmetries
                    .discrete
                    .push(RigidTransform::from_homogeneous_row_major(
                        &m,
                        FILE_ROTATION_TOLERANCE,
                    )?);
            }
        }
        if let Some(list) = entry.get("symmetries_continuous").and_then(Value::as_array) {
            for c in list {
                let axis = floats(field(c, "axis", path)?, "axis", path)?;
                let offset = floats(field(c, "offset", path)?, "offset", path)?;
                if axis.len() != 3 || offset.len() != 3 {
                    return Err(Error::Dataset(format!(
                        "{}: continuous symmetry of {obj_id} needs 3-vectors",
                        path.display()
                    )));
                }
                symmetries.continuous.push(ContinuousSymmetry {
                    axis: Vec3::new(axis[0], axis[1], axis[2]),
                    offset: Vec3::new(offset[0], offset[1], offset[2]),
                });
            }
        }
        symmetries.validate()?;
        out.insert(
            obj_id,
            ObjectInfo {
                obj_id,
                model_path: models_dir.join(format!("obj_{obj_id:06}.ply")),
                diameter,
                symmetries,
            },
        );
    }
    Ok(out)
}

pub fn read_targets(path: &Path) -> Result<Vec<Target>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn image_size(root: &Path, opts: &DatasetOptions) -> Result<(u32, u32)> {
    let path = match &opts.camera_file {
        Some(f) => root.join(f),
        None if root.join("camera.json").exists() => root.join("camera.json"),
        None => {
            let mut found: Vec<PathBuf> = fs::read_dir(root)
                .map_err(|e| Error::io(root, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("camera") && n.ends_with(".json"))
                })
                .collect();
            found.sort();
            found.into_iter().next().ok_or_else(|| {
                Error::Dataset(format!(
                    "{}: no camera*.json with the image size",
                    root.display()
                ))
            })?
        }
    };
    let doc = read_json(&path)?;
    let dim = |name: &str| -> Result<u32> {
        field(&doc, name, &path)?
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| Error::Dataset(format!("{}: bad `{name}`", path.display())))
    };
    Ok((dim("width")?, dim("height")?))
}

fn load_scene(
    dir: &Path,
    scene_id: u32,
    size: (u32, u32),
    objects: &BTreeMap<u32, ObjectInfo>,
) -> Result<SceneInfo> {
    let cam_path = dir.join("scene_camera.json");
    let gt_path = dir.join("scene_gt.json");
    let cams = read_json(&cam_path)?;
    let gts = read_json(&gt_path)?;
    let gts = gts
        .as_object()
        .ok_or_else(|| Error::Dataset(format!("{}: expected an object", gt_path.display())))?;
    let mut images = Vec::new();
    for (key, list) in gts {
        let im_id = parse_id(key, &gt_path)?;
        let cam = cams.get(key).ok_or_else(|| {
            Error::Dataset(format!(
                "{}: no camera for image {im_id}",
                cam_path.display()
            ))
        })?;
        let k = floats(field(cam, "cam_K", &cam_path)?, "cam_K", &cam_path)?;
        let camera = CameraModel::from_k(&k, size.0, size.1)?;
        let list = list.as_array().ok_or_else(|| {
            Error::Dataset(format!(
                "{}: image {im_id}: expected a list",
                gt_path.display()
            ))
        })?;
        let mut instances = Vec::with_capacity(list.len());
        for (idx, g) in list.iter().enumerate() {
            let obj_id = field(g, "obj_id", &gt_path)?
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| Error::Dataset(format!("{}: bad obj_id", gt_path.display())))?;
            let r = floats(field(g, "cam_R_m2c", &gt_path)?, "cam_R_m2c", &gt_path)?;
            let t = floats(field(g, "cam_t_m2c", &gt_path)?, "cam_t_m2c", &gt_path)?;
            let (rot, tr) = RigidTransform::parse_row_major(&r, &t)?;
            let gt_pose = RigidTransform::from_noisy_rotation(rot, tr, FILE_ROTATION_TOLERANCE)
                .map_err(|e| {
                    Error::Dataset(format!(
                        "{}: image {im_id} instance {idx}: {e}",
                        gt_path.display()
                    ))
                })?;
            match objects.get(&obj_id) {
                Some(o) if o.model_path.exists() => {}
                Some(o) => {
                    return Err(Error::MissingModel {
                        obj_id,
                        path: o.model_path.clone(),
                    })
                }
                None => {
                    return Err(Error::MissingModel {
                        obj_id,
                        path: PathBuf::from(format!("models_info.json entry {obj_id}")),
                    })
                }
            }
            instances.push(SceneInstance {
                obj_id,
                inst_idx: idx as u32,
                gt_pose,
            });
        }
        images.push(ImageInfo {
            scene_id,
            im_id,
            camera,
            instances,
        });
    }
    images.sort_by_key(|i| i.im_id);
    Ok(SceneInfo {
        scene_id,
        dir: dir.to_path_buf(),
        images,
    })
}

/// Indexes a BOP-layout dataset and checks that every referenced object has
/// a model file.
pub fn load_dataset(root: &Path, opts: &DatasetOptions) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "{}: not a directory",
            root.display()
        )));
    }
    let models_dir = root.join(&opts.models_dir);
    let info_path = models_dir.join("models_info.json");
    if !info_path.exists() {
        return Err(Error::Dataset(format!(
            "{}: missing {}",
            root.display(),
            info_path.strip_prefix(root).unwrap_or(&info_path).display()
        )));
    }
    let objects = read_models_info(&info_path, &models_dir)?;
    let split_dir = root.join(&opts.split);
    if !split_dir.is_dir() {
        return Err(Error::Dataset(format!(
            "{}: split directory `{}` not found",
            root.display(),
            opts.split
        )));
    }
    let mut scene_dirs: Vec<(u32, PathBuf)> = fs::read_dir(&split_dir)
        .map_err(|e| Error::io(&split_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("scene_gt.json").exists())
        .filter_map(|p| {
            let id = p.file_name()?.to_str()?.parse().ok()?;
            Some((id, p))
        })
        .collect();
    scene_dirs.sort();
    let scenes = if scene_dirs.is_empty() {
        Vec::new()
    } else {
        let size = image_size(root, opts)?;
        scene_dirs
            .iter()
            .map(|(id, dir)| load_scene(dir, *id, size, &objects))
            .collect::<Result<Vec<_>>>()?
    };
    let targets_path = root.join("test_targets_bop19.json");
    let targets = if targets_path.exists() {
        Some(read_targets(&targets_path)?)
    } else {
        None
    };
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        split: opts.split.clone(),
        objects,
        scenes,
        targets,
    })
}
