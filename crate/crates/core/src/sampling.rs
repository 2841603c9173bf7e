//! Uniform surface sampling of triangle meshes.
//!
//! Candidates are the centroids of a longest-edge bisection of every triangle
//! down to `resolution / 3`; they are shuffled with a seeded RNG and accepted
//! by dart throwing with a minimum spacing of `resolution / 2`. Every surface
//! point ends up within `resolution / 2 + 2·(resolution / 3)/3 < resolution`
//! of a sample.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{PointSet, Vec3};
use crate::mesh::TriangleMesh;

pub const DEFAULT_RESOLUTION: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 0;

/// Recorded in annotation metadata.
pub const SAMPLING_SCHEME: &str = "area-uniform poisson-disk (min spacing resolution/2)";

#[derive(Clone, Copy)]
struct Candidate {
    tri: u32,
    w1: f64,
    w2: f64,
}

type Bary = [f64; 3];

fn lerp_bary(a: &Bary, b: &Bary) -> Bary {
    [
        (a[0] + b[0]) * 0.5,
        (a[1] + b[1]) * 0.5,
        (a[2] + b[2]) * 0.5,
    ]
}

fn at(corners: &[Vec3; 3], w: &Bary) -> Vec3 {
    corners[0] * w[0] + corners[1] * w[1] + corners[2] * w[2]
}

fn push_candidates(tri: u32, corners: &[Vec3; 3], max_edge: f64, out: &mut Vec<Candidate>) {
    let mut stack: Vec<[Bary; 3]> = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    while let Some(sub) = stack.pop() {
        let p = [
            at(corners, &sub[0]),
            at(corners, &sub[1]),
            at(corners, &sub[2]),
        ];
        let edges = [
            (p[1] - p[0]).norm(),
            (p[2] - p[1]).norm(),
            (p[0] - p[2]).norm(),
        ];
        let (longest, len) =
            edges.iter().enumerate().fold(
                (0, 0.0),
                |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc },
            );
        if len <= max_edge {
            let w1 = (sub[0][1] + sub[1][1] + sub[2][1]) / 3.0;
            let w2 = (sub[0][2] + sub[1][2] + sub[2][2]) / 3.0;
            out.push(Candidate { tri, w1, w2 });
            continue;
        }
        let (a, b, c) = (longest, (longest + 1) % 3, (longest + 2) % 3);
        let mid = lerp_bary(&sub[a], &sub[b]);
        stack.push([sub[a], mid, sub[c]]);
        stack.push([mid, sub[b], sub[c]]);
    }
}

fn cell_of(p: &Vec3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Samples the mesh surface so that every surface point has a sample within
/// `resolution` mm. Colors are carried when the mesh has vertex colors or a
/// texture. Deterministic for a given `seed`.
pub fn sample_surface(mesh: &TriangleMesh, resolution: f64, seed: u64) -> Result<PointSet> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sampling resolution must be > 0, got {resolution}"
        )));
    }
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let min_spacing = resolution / 2.0;
    let max_edge = resolution / 3.0;

    let mut candidates = Vec::new();
    for tri in 0..mesh.triangles().len() {
        push_candidates(tri as u32, &mesh.corners(tri), max_edge, &mut candidates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);

    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    let mut positions: Vec<Vec3> = Vec::new();
    let mut accepted: Vec<Candidate> = Vec::new();
    let min_sq = min_spacing * min_spacing;
    for cand in candidates {
        let corners = mesh.corners(cand.tri as usize);
        let w = [1.0 - cand.w1 - cand.w2, cand.w1, cand.w2];
        let p = at(&corners, &w);
        let (cx, cy, cz) = cell_of(&p, min_spacing);
        let mut blocked = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        if ids
                            .iter()
                            .any(|&i| (positions[i as usize] - p).norm_squared() < min_sq)
                        {
                            blocked = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if blocked {
            continue;
        }
        grid.entry((cx, cy, cz))
            .or_default()
            .push(positions.len() as u32);
        positions.push(p);
        accepted.push(cand);
    }

    let colors = mesh.has_color().then(|| {
        accepted
            .iter()
            .map(|c| {
                mesh.color_at(c.tri as usize, [1.0 - c.w1 - c.w2, c.w1, c.w2])
                    .unwrap_or([0.0; 3])
            })
            .collect()
    });
    PointSet::new(positions, colors)
}
