//! Z-buffer rendering of a whole scene and per-instance visible samples.
//!
//! Pixels are sampled at integer image coordinates, matching the projection
//! convention of [`CameraModel`]. Depth is interpolated perspective-correctly
//! and stored as the camera-space z in mm; 0 marks an empty pixel.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{CameraModel, PointSet, RigidTransform, Vec2, Vec3};
use crate::mesh::TriangleMesh;

pub const DEFAULT_DEPTH_TOLERANCE: f64 = 2.0;
pub const DEFAULT_VISIBILITY_FLOOR: f64 = 0.01;

const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneInstance {
    pub obj_id: u32,
    /// Position in the image's `scene_gt.json` list.
    pub inst_idx: u32,
    /// Model → camera.
    pub gt_pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    camera: CameraModel,
    depth: Vec<f64>,
}

impl DepthMap {
    pub fn empty(camera: CameraModel) -> Self {
        Self {
            camera,
            depth: vec![0.0; camera.width as usize * camera.height as usize],
        }
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn width(&self) -> u32 {
        self.camera.width
    }

    pub fn height(&self) -> u32 {
        self.camera.height
    }

    /// Depth at pixel `(x, y)`; 0 when nothing was rendered there.
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.depth[y as usize * self.camera.width as usize + x as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.depth
    }

    /// Rasterizes one camera-space triangle, keeping the nearest depth.
    pub fn rasterize(&mut self, tri: [Vec3; 3]) {
        for poly in clip_near(&tri) {
            self.raster_clipped(&poly);
        }
    }

    fn raster_clipped(&mut self, tri: &[Vec3; 3]) {
        let cam = self.camera;
        let s: [Vec2; 3] = [
            cam.project_unchecked(&tri[0]),
            cam.project_unchecked(&tri[1]),
            cam.project_unchecked(&tri[2]),
        ];
        let inv_z = [1.0 / tri[0].z, 1.0 / tri[1].z, 1.0 / tri[2].z];
        let area = edge(&s[0], &s[1], &s[2]);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        let min_x = s
            .iter()
            .map(|p| p.x)
            .fold(f64::INFINITY, f64::min)
            .ceil()
            .max(0.0);
        let max_x = s
            .iter()
            .map(|p| p.x)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(cam.width as f64 - 1.0);
        let min_y = s
            .iter()
            .map(|p| p.y)
            .fold(f64::INFINITY, f64::min)
            .ceil()
            .max(0.0);
        let max_y = s
            .iter()
            .map(|p| p.y)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(cam.height as f64 - 1.0);
        if min_x > max_x || min_y > max_y {
            return;
        }
        let w = cam.width as usize;
        for y in min_y as usize..=max_y as usize {
            for x in min_x as usize..=max_x as usize {
                let p = Vec2::new(x as f64, y as f64);
                let w0 = edge(&s[1], &s[2], &p) / area;
                let w1 = edge(&s[2], &s[0], &p) / area;
                let w2 = edge(&s[0], &s[1], &p) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = 1.0 / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
                let slot = &mut self.depth[y * w + x];
                if *slot == 0.0 || z < *slot {
                    *slot = z;
                }
            }
        }
    }
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Clips a triangle against `z ≥ NEAR_PLANE`, returning 0–2 triangles.
fn clip_near(tri: &[Vec3; 3]) -> Vec<[Vec3; 3]> {
    let inside: Vec<bool> = tri.iter().map(|p| p.z >= NEAR_PLANE).collect();
    if inside.iter().all(|&b| b) {
        return vec![*tri];
    }
    if inside.iter().all(|&b| !b) {
        return vec![];
    }
    let mut poly = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let (ia, ib) = (inside[i], inside[(i + 1) % 3]);
        if ia {
            poly.push(a);
        }
        if ia != ib {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            poly.push(a + (b - a) * t);
        }
    }
    (1..poly.len() - 1)
        .map(|k| [poly[0], poly[k], poly[k + 1]])
        .collect()
}

/// Renders every instance's mesh at its ground-truth pose into one depth map.
pub fn render_scene_depth(
    instances: &[SceneInstance],
    meshes: &BTreeMap<u32, TriangleMesh>,
    camera: &CameraModel,
) -> Result<DepthMap> {
    let mut map = DepthMap::empty(*camera);
    for inst in instances {
        let mesh = meshes
            .get(&inst.obj_id)
            .ok_or(Error::MissingMesh(inst.obj_id))?;
        let verts: Vec<Vec3> = mesh
            .vertices()
            .iter()
            .map(|v| inst.gt_pose.apply(v))
            .collect();
        for t in mesh.triangles() {
            map.rasterize([
                verts[t[0] as usize],
                verts[t[1] as usize],
                verts[t[2] as usize],
            ]);
        }
    }
    Ok(map)
}

/// Binary visibility mask (e.g. BOP `mask_visib`), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let (width, height) = img.dimensions();
        Ok(Self {
            width,
            height,
            data: img.pixels().map(|p| p[0] > 0).collect(),
        })
    }

    pub fn at(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.data[(y * self.width + x) as usize]
    }
}

fn pixel_of(camera: &CameraModel, p: &Vec3) -> Option<(u32, u32)> {
    if !(p.z > 0.0) {
        return None;
    }
    let uv = camera.project_unchecked(p);
    let (x, y) = (uv.x.round(), uv.y.round());
    if x < 0.0 || y < 0.0 || x >= camera.width as f64 || y >= camera.height as f64 {
        return None;
    }
    Some((x as u32, y as u32))
}

/// Indices of the samples of `instance` that are visible in `depth`: the
/// camera-space point projects inside the image onto a rendered pixel and is
/// no more than `depth_tolerance` mm behind the rendered depth.
pub fn visible_vertices(
    instance: &SceneInstance,
    samples: &PointSet,
    depth: &DepthMap,
    depth_tolerance: f64,
) -> Vec<u32> {
    visible_vertices_masked(instance, samples, depth, depth_tolerance, None)
}

/// [`visible_vertices`] additionally restricted to pixels set in `mask`.
pub fn visible_vertices_masked(
    instance: &SceneInstance,
    samples: &PointSet,
    depth: &DepthMap,
    depth_tolerance: f64,
    mask: Option<&Mask>,
) -> Vec<u32> {
    let cam = depth.camera();
    samples
        .positions()
        .iter()
        .enumerate()
        .filter_map(|(j, v)| {
            let p = instance.gt_pose.apply(v);
            let (x, y) = pixel_of(cam, &p)?;
            let d = depth.at(x, y);
            let in_mask = mask.is_none_or(|m| m.at(x, y));
            (d > 0.0 && p.z <= d + depth_tolerance && in_mask).then_some(j as u32)
        })
        .collect()
}
