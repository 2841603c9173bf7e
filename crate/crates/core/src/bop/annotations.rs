//! `scene_gt_dist.json`: image id → list of annotated instances.
//!
//! The writer is canonical (image keys in numeric order, instances by
//! `inst_idx`, one image per line, shortest round-trip floats) so that
//! reading and rewriting a file reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotate::InstanceDistribution;
use crate::error::{Error, Result};
use crate::geom::RigidTransform;

pub const ANNOTATION_FILE: &str = "scene_gt_dist.json";

#[allow(non_snake_case)]
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    obj_id: u32,
    inst_idx: u32,
    cam_R_m2c: [f64; 9],
    cam_t_m2c: [f64; 3],
    sym_Rs: Vec<[f64; 9]>,
    sym_ts: Vec<[f64; 3]>,
    sym_ids: Vec<usize>,
    tau: u32,
    n_visible: u32,
    skipped: bool,
    skip_reason: Option<String>,
}

impl From<&InstanceDistribution> for Record {
    fn from(d: &InstanceDistribution) -> Self {
        Record {
            obj_id: d.obj_id,
            inst_idx: d.inst_idx,
            cam_R_m2c: d.gt_pose.rotation_row_major(),
            cam_t_m2c: d.gt_pose.translation_array(),
            sym_Rs: d
                .symmetries
                .iter()
                .map(RigidTransform::rotation_row_major)
                .collect(),
            sym_ts: d
                .symmetries
                .iter()
                .map(RigidTransform::translation_array)
                .collect(),
            sym_ids: d.accepted.clone(),
            tau: d.tau,
            n_visible: d.n_visible,
            skipped: d.skip_reason.is_some(),
            skip_reason: d.skip_reason.clone(),
        }
    }
}

impl Record {
    fn into_distribution(self, scene_id: u32, im_id: u32) -> Result<InstanceDistribution> {
        if self.sym_Rs.len() != self.sym_ts.len() || self.sym_Rs.len() != self.sym_ids.len() {
            return Err(Error::Dataset(format!(
                "image {im_id} instance {}: sym_Rs, sym_ts and sym_ids differ in length",
                self.inst_idx
            )));
        }
        let gt_pose = RigidTransform::from_row_major(&self.cam_R_m2c, &self.cam_t_m2c)?;
        let symmetries = self
            .sym_Rs
            .iter()
            .zip(&self.sym_ts)
            .map(|(r, t)| RigidTransform::from_row_major(r, t))
            .collect::<Result<Vec<_>>>()?;
        let skip_reason = match (self.skipped, self.skip_reason) {
            (true, None) => Some("unspecified".to_string()),
            (true, Some(r)) => Some(r),
            (false, _) => None,
        };
        Ok(InstanceDistribution {
            scene_id,
            im_id,
            obj_id: self.obj_id,
            inst_idx: self.inst_idx,
            gt_pose,
            accepted: self.sym_ids,
            symmetries,
            tau: self.tau,
            n_visible: self.n_visible,
            skip_reason,
        })
    }
}

pub fn scene_annotation_path(out_dir: &Path, scene_id: u32) -> PathBuf {
    out_dir.join(format!("{scene_id:06}")).join(ANNOTATION_FILE)
}

/// Canonical text of one scene's annotations.
pub fn scene_annotations_to_string(dists: &[InstanceDistribution]) -> String {
    let mut by_image: BTreeMap<u32, Vec<&InstanceDistribution>> = BTreeMap::new();
    for d in dists {
        by_image.entry(d.im_id).or_default().push(d);
    }
    if by_image.is_empty() {
        return "{}\n".to_string();
    }
    let mut s = String::from("{\n");
    let n = by_image.len();
    for (k, (im_id, mut list)) in by_image.into_iter().enumerate() {
        list.sort_by_key(|d| d.inst_idx);
        let records: Vec<Record> = list.into_iter().map(Record::from).collect();
        let body = serde_json::to_string(&records).expect("records serialize");
        s.push_str(&format!("\"{im_id}\": {body}"));
        s.push_str(if k + 1 < n { ",\n" } else { "\n" });
    }
    s.push_str("}\n");
    s
}

pub fn write_scene_annotations(path: &Path, dists: &[InstanceDistribution]) -> Result<()> {
    super::write_atomic(path, scene_annotations_to_string(dists).as_bytes())
}

/// Writes `<out>/<scene>/scene_gt_dist.json` for every scene present.
pub fn write_annotations(out_dir: &Path, dists: &[InstanceDistribution]) -> Result<Vec<PathBuf>> {
    let mut by_scene: BTreeMap<u32, Vec<InstanceDistribution>> = BTreeMap::new();
    for d in dists {
        by_scene.entry(d.scene_id).or_default().push(d.clone());
    }
    let mut paths = Vec::new();
    for (scene_id, list) in by_scene {
        let path = scene_annotation_path(out_dir, scene_id);
        write_scene_annotations(&path, &list)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_scene_annotations(path: &Path, scene_id: u32) -> Result<Vec<InstanceDistribution>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, Vec<Record>> =
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let mut images: Vec<(u32, Vec<Record>)> = map
        .into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|id| (id, v))
                .map_err(|_| Error::Dataset(format!("{}: bad image key {k:?}", path.display())))
        })
        .collect::<Result<_>>()?;
    images.sort_by_key(|(id, _)| *id);
    let mut out = Vec::new();
    for (im_id, mut records) in images {
        records.sort_by_key(|r| r.inst_idx);
        for r in records {
            out.push(
                r.into_distribution(scene_id, im_id)
                    .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?,
            );
        }
    }
    Ok(out)
}

/// Reads every `<dir>/<scene>/scene_gt_dist.json`, ordered by scene, image
/// and instance.
pub fn read_annotations(dir: &Path) -> Result<Vec<InstanceDistribution>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!(
            "{}: not a directory",
            dir.display()
        )));
    }
    let mut scenes: Vec<(u32, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let id = p.file_name()?.to_str()?.parse().ok()?;
            let file = p.join(ANNOTATION_FILE);
            file.exists().then_some((id, file))
        })
        .collect();
    scenes.sort();
    let mut out = Vec::new();
    for (id, file) in scenes {
        out.extend(read_scene_annotations(&file, id)?);
    }
    Ok(out)
}
