//! Synthetic meshes and a miniature BOP-layout dataset writer.
//!
//! Used by the test suites and handy for smoke-testing the CLI without the
//! real datasets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geom::{CameraModel, RigidTransform, Vec3};
use crate::mesh::{PlyFormat, TriangleMesh};

/// Convex hull of a small point set (brute force, intended for ≤ ~40 points).
pub fn convex_hull(points: &[Vec3]) -> TriangleMesh {
    let n = points.len();
    let scale = points.iter().map(|p| p.norm()).fold(1.0f64, f64::max);
    let tol = 1e-9 * scale;
    let mut faces: Vec<(Vec3, f64)> = Vec::new();
    let mut triangles = Vec::new();
    let centroid = points.iter().sum::<Vec3>() / n as f64;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (points[j] - points[i]).cross(&(points[k] - points[i]));
                if normal.norm() < tol {
                    continue;
                }
                let mut normal = normal.normalize();
                let mut offset = normal.dot(&points[i]);
                if normal.dot(&centroid) > offset {
                    normal = -normal;
                    offset = -offset;
                }
                if points.iter().any(|p| normal.dot(p) > offset + tol) {
                    continue;
                }
                if faces
                    .iter()
                    .any(|(m, o)| (m - normal).norm() < 1e-9 && (o - offset).abs() < tol)
                {
                    continue;
                }
                faces.push((normal, offset));
            }
        }
    }
    for (normal, offset) in &faces {
        let mut on: Vec<usize> = (0..n)
            .filter(|&i| (normal.dot(&points[i]) - offset).abs() <= tol)
            .collect();
        let c = on.iter().map(|&i| points[i]).sum::<Vec3>() / on.len() as f64;
        let u = (points[on[0]] - c).normalize();
        let v = normal.cross(&u);
        on.sort_by(|&a, &b| {
            let pa = points[a] - c;
            let pb = points[b] - c;
            pa.dot(&v)
                .atan2(pa.dot(&u))
                .total_cmp(&pb.dot(&v).atan2(pb.dot(&u)))
        });
        for w in 1..on.len() - 1 {
            triangles.push([on[0] as u32, on[w] as u32, on[w + 1] as u32]);
        }
    }
    TriangleMesh::new(points.to_vec(), triangles).expect("hull indices are in range")
}

/// Axis-aligned box centered at the origin.
pub fn box_mesh(size: Vec3) -> TriangleMesh {
    let h = size / 2.0;
    let mut pts = Vec::new();
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                pts.push(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
            }
        }
    }
    convex_hull(&pts)
}

/// Cube of the given side centered at the origin, with the `(+,+,+)` corner cut
/// by a plane `chamfer` mm down each edge.
pub fn chamfered_cube(side: f64, chamfer: f64) -> TriangleMesh {
    let h = side / 2.0;
    let mut pts = Vec::new();
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                if sx > 0.0 && sy > 0.0 && sz > 0.0 {
                    continue;
                }
                pts.push(Vec3::new(sx * h, sy * h, sz * h));
            }
        }
    }
    pts.push(Vec3::new(h - chamfer, h, h));
    pts.push(Vec3::new(h, h - chamfer, h));
    pts.push(Vec3::new(h, h, h - chamfer));
    convex_hull(&pts)
}

/// Regular prism with `sides` sides around the z axis.
pub fn prism(sides: usize, radius: f64, height: f64) -> TriangleMesh {
    let mut pts = Vec::new();
    for z in [-height / 2.0, height / 2.0] {
        for k in 0..sides {
            let a = std::f64::consts::TAU * k as f64 / sides as f64;
            pts.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    convex_hull(&pts)
}

/// Closed cylinder about the z axis, centered at the origin.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    let z0 = -height / 2.0;
    let z1 = height / 2.0;
    for z in [z0, z1] {
        for k in 0..segments {
            let a = std::f64::consts::TAU * k as f64 / segments as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, z0));
    let top_center = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, z1));
    let s = segments as u32;
    let mut triangles = Vec::new();
    for k in 0..s {
        let k1 = (k + 1) % s;
        triangles.push([k, k1, s + k1]);
        triangles.push([k, s + k1, s + k]);
        triangles.push([bottom_center, k1, k]);
        triangles.push([top_center, s + k, s + k1]);
    }
    TriangleMesh::new(vertices, triangles).expect("valid cylinder")
}

/// Latitude/longitude sphere centered at the origin.
pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> TriangleMesh {
    let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(
                Vec3::new(
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ) * radius,
            );
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -radius));
    let south = (vertices.len() - 1) as u32;
    let seg = segments as u32;
    let ring_start = |r: u32| 1 + (r - 1) * seg;
    let mut triangles = Vec::new();
    for s in 0..seg {
        let s1 = (s + 1) % seg;
        triangles.push([0, ring_start(1) + s, ring_start(1) + s1]);
        let last = ring_start(rings as u32 - 1);
        triangles.push([south, last + s1, last + s]);
    }
    for r in 1..rings as u32 - 1 {
        let (a, b) = (ring_start(r), ring_start(r + 1));
        for s in 0..seg {
            let s1 = (s + 1) % seg;
            triangles.push([a + s, b + s, b + s1]);
            triangles.push([a + s, b + s1, a + s1]);
        }
    }
    TriangleMesh::new(vertices, triangles).expect("valid sphere")
}

/// Extrusion of a star-shaped polygon (fan-triangulable from vertex 0) along z.
pub fn extrude(polygon: &[[f64; 2]], height: f64) -> TriangleMesh {
    let n = polygon.len() as u32;
    let mut vertices = Vec::new();
    for z in [0.0, height] {
        for p in polygon {
            vertices.push(Vec3::new(p[0], p[1], z));
        }
    }
    let mut triangles = Vec::new();
    for k in 1..n - 1 {
        triangles.push([0, k + 1, k]);
        triangles.push([n, n + k, n + k + 1]);
    }
    for k in 0..n {
        let k1 = (k + 1) % n;
        triangles.push([k, k1, n + k1]);
        triangles.push([k, n + k1, n + k]);
    }
    TriangleMesh::new(vertices, triangles).expect("valid extrusion")
}

/// Asymmetric L-shaped block (unequal arms), roughly centered on the origin.
pub fn l_shape() -> TriangleMesh {
    let poly = [
        [0.0, 0.0],
        [30.0, 0.0],
        [30.0, 8.0],
        [10.0, 8.0],
        [10.0, 20.0],
        [0.0, 20.0],
    ];
    extrude(&poly, 6.0).transformed(&RigidTransform::from_translation(Vec3::new(
        -11.0, -7.0, -3.0,
    )))
}

/// One BOP object for [`MiniDataset`].
#[derive(Debug, Clone)]
pub struct MiniObject {
    pub obj_id: u32,
    pub mesh: TriangleMesh,
    /// 4×4 row-major flattened transforms for `symmetries_discrete`.
    pub symmetries_discrete: Vec<RigidTransform>,
    /// `(axis, offset)` pairs for `symmetries_continuous`.
    pub symmetries_continuous: Vec<(Vec3, Vec3)>,
}

#[derive(Debug, Clone)]
pub struct MiniInstance {
    pub obj_id: u32,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone)]
pub struct MiniImage {
    pub im_id: u32,
    pub instances: Vec<MiniInstance>,
}

#[derive(Debug, Clone)]
pub struct MiniScene {
    pub scene_id: u32,
    pub camera: CameraModel,
    pub images: Vec<MiniImage>,
}

/// Writes a BOP-layout dataset: `models/`, `<split>/<scene>/scene_{camera,gt}.json`,
/// `camera.json` and `test_targets_bop19.json`.
#[derive(Debug, Clone)]
pub struct MiniDataset {
    pub objects: Vec<MiniObject>,
    pub scenes: Vec<MiniScene>,
    pub split: String,
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn diameter(mesh: &TriangleMesh) -> f64 {
    let v = mesh.vertices();
    let mut best: f64 = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            best = best.max((v[i] - v[j]).norm());
        }
    }
    best
}

impl MiniDataset {
    pub fn write(&self, root: &Path) -> Result<()> {
        let models = root.join("models");
        fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
        let mut info = BTreeMap::new();
        for o in &self.objects {
            o.mesh.write_ply(
                &models.join(format!("obj_{:06}.ply", o.obj_id)),
                PlyFormat::Ascii,
            )?;
            let mut entry = serde_json::Map::new();
            entry.insert("diameter".into(), json!(diameter(&o.mesh)));
            if !o.symmetries_discrete.is_empty() {
                let list: Vec<Vec<f64>> = o
                    .symmetries_discrete
                    .iter()
                    .map(|t| {
                        let r = t.rotation_row_major();
                        let tr = t.translation_array();
                        vec![
                            r[0], r[1], r[2], tr[0], r[3], r[4], r[5], tr[1], r[6], r[7], r[8],
                            tr[2], 0.0, 0.0, 0.0, 1.0,
                        ]
                    })
                    .collect();
                entry.insert("symmetries_discrete".into(), json!(list));
            }
            if !o.symmetries_continuous.is_empty() {
                let list: Vec<Value> = o
                    .symmetries_continuous
                    .iter()
                    .map(|(a, off)| json!({"axis": [a.x, a.y, a.z], "offset": [off.x, off.y, off.z]}))
                    .collect();
                entry.insert("symmetries_continuous".into(), json!(list));
            }
            info.insert(o.obj_id.to_string(), Value::Object(entry));
        }
        write_json(&models.join("models_info.json"), &json!(info))?;

        let mut targets = Vec::new();
        let mut size = None;
        for scene in &self.scenes {
            let dir = root
                .join(&self.split)
                .join(format!("{:06}", scene.scene_id));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let cam = &scene.camera;
            size = Some((cam.width, cam.height));
            let mut cams = BTreeMap::new();
            let mut gts = BTreeMap::new();
            for img in &scene.images {
                cams.insert(
                    img.im_id,
                    json!({
                        "cam_K": [cam.fx, 0.0, cam.cx, 0.0, cam.fy, cam.cy, 0.0, 0.0, 1.0],
                        "depth_scale": 0.1
                    }),
                );
                let list: Vec<Value> = img
                    .instances
                    .iter()
                    .map(|i| {
                        json!({
                            "cam_R_m2c": i.pose.rotation_row_major(),
                            "cam_t_m2c": i.pose.translation_array(),
                            "obj_id": i.obj_id,
                        })
                    })
                    .collect();
                gts.insert(img.im_id, Value::Array(list));
                let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
                for i in &img.instances {
                    *counts.entry(i.obj_id).or_default() += 1;
                }
                for (obj_id, inst_count) in counts {
                    targets.push(json!({
                        "im_id": img.im_id,
                        "inst_count": inst_count,
                        "obj_id": obj_id,
                        "scene_id": scene.scene_id,
                    }));
                }
            }
            let cams: BTreeMap<String, Value> =
                cams.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            let gts: BTreeMap<String, Value> =
                gts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            write_json(&dir.join("scene_camera.json"), &json!(cams))?;
            write_json(&dir.join("scene_gt.json"), &json!(gts))?;
        }
        if let Some((w, h)) = size {
            write_json(&root.join("camera.json"), &json!({"width": w, "height": h}))?;
        }
        write_json(
            &root.join("test_targets_bop19.json"),
            &Value::Array(targets),
        )?;
        Ok(())
    }
}

/// Two scenes, two images each, three objects: a cylinder (continuous
/// symmetry about z), a box (discrete 180° flips about each axis) and an
/// asymmetric L block. Image 1 of scene 1 has the box partly hidden behind
/// the cylinder; scene 2 image 2 has a cylinder fully hidden behind the box.
pub fn two_scene_fixture() -> MiniDataset {
    let objects = vec![
        MiniObject {
            obj_id: 1,
            mesh: cylinder(20.0, 40.0, 64),
            symmetries_discrete: vec![RigidTransform::rot_x_deg(180.0)],
            symmetries_continuous: vec![(Vec3::z(), Vec3::zeros())],
        },
        MiniObject {
            obj_id: 2,
            mesh: box_mesh(Vec3::new(60.0, 40.0, 30.0)),
            symmetries_discrete: vec![
                RigidTransform::rot_x_deg(180.0),
                RigidTransform::rot_y_deg(180.0),
                RigidTransform::rot_z_deg(180.0),
            ],
            symmetries_continuous: vec![],
        },
        MiniObject {
            obj_id: 3,
            mesh: l_shape(),
            symmetries_discrete: vec![],
            symmetries_continuous: vec![],
        },
    ];
    let camera = CameraModel::new(400.0, 400.0, 160.0, 120.0, 320, 240).expect("valid camera");
    let at = |x: f64, y: f64, z: f64, r: RigidTransform| {
        RigidTransform::from_translation(Vec3::new(x, y, z)).compose(&r)
    };
    let inst = |obj_id: u32, pose: RigidTransform| MiniInstance { obj_id, pose };
    let tilted = RigidTransform::rot_x_deg(-60.0).compose(&RigidTransform::rot_z_deg(20.0));
    let scenes = vec![
        MiniScene {
            scene_id: 1,
            camera,
            images: vec![
                MiniImage {
                    im_id: 1,
                    instances: vec![
                        inst(1, at(-10.0, 0.0, 350.0, RigidTransform::rot_x_deg(90.0))),
                        inst(2, at(25.0, 5.0, 420.0, RigidTransform::rot_z_deg(15.0))),
                        inst(3, at(-60.0, -40.0, 380.0, tilted)),
                    ],
                },
                MiniImage {
                    im_id: 4,
                    instances: vec![
                        inst(2, at(0.0, 0.0, 400.0, RigidTransform::identity())),
                        inst(3, at(50.0, 40.0, 360.0, RigidTransform::rot_y_deg(35.0))),
                    ],
                },
            ],
        },
        MiniScene {
            scene_id: 2,
            camera,
            images: vec![
                MiniImage {
                    im_id: 0,
                    instances: vec![
                        inst(1, at(-40.0, 10.0, 400.0, tilted)),
                        inst(1, at(40.0, -10.0, 420.0, RigidTransform::rot_y_deg(70.0))),
                    ],
                },
                MiniImage {
                    im_id: 2,
                    instances: vec![
                        inst(2, at(0.0, 0.0, 300.0, RigidTransform::identity())),
                        inst(1, at(0.0, 0.0, 450.0, RigidTransform::identity())),
                        inst(3, at(70.0, 50.0, 400.0, RigidTransform::rot_x_deg(200.0))),
                    ],
                },
            ],
        },
    ];
    MiniDataset {
        objects,
        scenes,
        split: "test".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_cube_has_twelve_triangles() {
        let mesh = box_mesh(Vec3::new(2.0, 4.0, 6.0));
        assert_eq!(mesh.triangles().len(), 12);
        assert!((mesh.area() - 2.0 * (8.0 + 12.0 + 24.0)).abs() < 1e-9);
    }

    #[test]
    fn chamfered_cube_area() {
        let (s, c) = (20.0, 3.0);
        let mesh = chamfered_cube(s, c);
        let removed = 3.0 * 0.5 * c * c;
        let chamfer = 3f64.sqrt() / 4.0 * (c * 2f64.sqrt()).powi(2);
        assert!((mesh.area() - (6.0 * s * s - removed + chamfer)).abs() < 1e-9);
    }

    #[test]
    fn shapes_have_expected_areas() {
        let cyl = cylinder(5.0, 10.0, 512);
        let exact = std::f64::consts::TAU * 5.0 * 10.0 + 2.0 * std::f64::consts::PI * 25.0;
        assert!((cyl.area() / exact - 1.0).abs() < 1e-3);
        let sph = uv_sphere(10.0, 128, 64);
        assert!((sph.area() / (4.0 * std::f64::consts::PI * 100.0) - 1.0).abs() < 2e-3);
        let l = l_shape();
        let cap = 30.0 * 8.0 + 10.0 * 12.0;
        let perimeter = 30.0 + 8.0 + 20.0 + 12.0 + 10.0 + 20.0;
        assert!((l.area() - (2.0 * cap + perimeter * 6.0)).abs() < 1e-9);
        let hex = prism(6, 10.0, 4.0);
        assert_eq!(hex.vertices().len(), 12);
    }
}
