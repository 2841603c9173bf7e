//! Plot-ready CSV exports of ground-truth distributions and estimates:
//! one file per instance, one row per pose as a unit quaternion plus
//! translation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::annotate::InstanceDistribution;
use crate::error::Result;
use crate::metrics::DistributionEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VizSource {
    GtDist,
    Estimate,
}

impl VizSource {
    pub fn as_str(self) -> &'static str {
        match self {
            VizSource::GtDist => "gt-dist",
            VizSource::Estimate => "estimate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VizRow {
    pub source: VizSource,
    pub mode: usize,
    /// `[w, x, y, z]`, `w ≥ 0`.
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
    pub prob: f64,
}

const HEADER: &str = "source,scene_id,im_id,obj_id,inst_idx,mode,qw,qx,qy,qz,tx,ty,tz,prob\n";

fn estimates_for<'a>(
    d: &InstanceDistribution,
    estimates: &'a [DistributionEstimate],
) -> impl Iterator<Item = &'a DistributionEstimate> {
    let (scene, im, obj, inst) = (d.scene_id, d.im_id, d.obj_id, d.inst_idx);
    estimates.iter().filter(move |e| {
        e.scene_id == scene
            && e.im_id == im
            && e.obj_id == obj
            && e.inst_id.is_none_or(|i| i == inst)
    })
}

/// Rows for one instance: its equiprobable ground-truth poses, then the
/// modes of every matching estimate.
pub fn viz_rows(d: &InstanceDistribution, estimates: &[DistributionEstimate]) -> Vec<VizRow> {
    let poses = d.poses();
    let p = 1.0 / poses.len().max(1) as f64;
    let mut rows: Vec<VizRow> = poses
        .iter()
        .enumerate()
        .map(|(mode, pose)| VizRow {
            source: VizSource::GtDist,
            mode,
            quaternion: pose.to_quaternion(),
            translation: pose.translation_array(),
            prob: p,
        })
        .collect();
    for est in estimates_for(d, estimates) {
        rows.extend(est.modes.iter().enumerate().map(|(mode, m)| VizRow {
            source: VizSource::Estimate,
            mode,
            quaternion: m.pose.to_quaternion(),
            translation: m.pose.translation_array(),
            prob: m.prob,
        }));
    }
    rows
}

/// Writes `viz_<scene>_<im>_<obj>_<inst>.csv` per non-skipped instance.
pub fn export_viz(
    out_dir: &Path,
    dists: &[InstanceDistribution],
    estimates: &[DistributionEstimate],
) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for d in dists.iter().filter(|d| !d.is_skipped()) {
        let mut s = String::from(HEADER);
        for r in viz_rows(d, estimates) {
            let [qw, qx, qy, qz] = r.quaternion;
            let [tx, ty, tz] = r.translation;
            writeln!(
                s,
                "{},{},{},{},{},{},{qw},{qx},{qy},{qz},{tx},{ty},{tz},{}",
                r.source.as_str(),
                d.scene_id,
                d.im_id,
                d.obj_id,
                d.inst_idx,
                r.mode,
                r.prob
            )
            .expect("writing to a String");
        }
        let path = out_dir.join(format!(
            "viz_{:06}_{:06}_{:06}_{:03}.csv",
            d.scene_id, d.im_id, d.obj_id, d.inst_idx
        ));
        super::write_atomic(&path, s.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{RigidTransform, Vec3};
    use crate::metrics::Mode;

    fn dist(symmetries: Vec<RigidTransform>) -> InstanceDistribution {
        InstanceDistribution {
            scene_id: 1,
            im_id: 2,
            obj_id: 3,
            inst_idx: 0,
            gt_pose: RigidTransform::from_translation(Vec3::new(1.0, 2.0, 500.0))
                .compose(&RigidTransform::rot_x_deg(30.0)),
            accepted: (0..symmetries.len()).collect(),
            symmetries,
            tau: 28,
            n_visible: 100,
            skip_reason: None,
        }
    }

    #[test]
    fn one_row_per_pose() {
        let d = dist(vec![RigidTransform::identity()]);
        assert_eq!(viz_rows(&d, &[]).len(), 1);
        let d4 = dist(
            (0..4)
                .map(|k| RigidTransform::rot_z_deg(90.0 * k as f64))
                .collect(),
        );
        let rows = viz_rows(&d4, &[]);
        assert_eq!(rows.len(), 4);
        for (r, pose) in rows.iter().zip(d4.poses()) {
            let q = r.quaternion;
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            let back = RigidTransform::from_quaternion(q, Vec3::from(r.translation));
            assert!((back.rotation() - pose.rotation()).abs().max() < 1e-9);
            assert_eq!(r.prob, 0.25);
        }
    }

    #[test]
    fn estimates_are_appended_and_files_written() {
        let d = dist(vec![
            RigidTransform::identity(),
            RigidTransform::rot_z_deg(180.0),
        ]);
        let est = DistributionEstimate {
            scene_id: 1,
            im_id: 2,
            obj_id: 3,
            inst_id: None,
            modes: vec![
                Mode {
                    pose: d.gt_pose,
                    prob: 0.6,
                },
                Mode {
                    pose: d.poses()[1],
                    prob: 0.4,
                },
            ],
        };
        let other = DistributionEstimate {
            obj_id: 9,
            ..est.clone()
        };
        let rows = viz_rows(&d, &[est.clone(), other.clone()]);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2].source, VizSource::Estimate);
        let dir = tempfile::tempdir().unwrap();
        let paths = export_viz(dir.path(), &[d], &[est, other]).unwrap();
        let text = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("source,"));
    }
}
