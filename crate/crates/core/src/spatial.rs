//! Exact nearest-neighbor search over a model surface sample.

use crate::error::{Error, Result};
use crate::geom::{PointSet, Vec3};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the point set the index was built from.
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Static k-d tree. Queries are exact; immutable once built and `Sync`.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    points: Vec<[f64; 3]>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

impl SurfaceIndex {
    pub fn build(positions: &[Vec3]) -> Self {
        let mut order: Vec<u32> = (0..positions.len() as u32).collect();
        let mut nodes = Vec::new();
        if !positions.is_empty() {
            build_node(positions, &mut order, 0, &mut nodes);
        }
        let points = order
            .iter()
            .map(|&i| {
                let p = positions[i as usize];
                [p.x, p.y, p.z]
            })
            .collect();
        Self {
            points,
            ids: order,
            nodes,
        }
    }

    pub fn from_points(points: &PointSet) -> Self {
        Self::build(points.positions())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nearest(&self, p: &Vec3) -> Result<Neighbor> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let q = [p.x, p.y, p.z];
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, &q, &mut best);
        Ok(self.finish(&q, best.1))
    }

    pub fn nearest_distance(&self, p: &Vec3) -> Result<f64> {
        self.nearest(p).map(|n| n.distance)
    }

    /// The exact nearest neighbor if its distance is strictly below `radius`.
    pub fn nearest_within(&self, p: &Vec3, radius: f64) -> Option<Neighbor> {
        if self.is_empty() || !(radius > 0.0) {
            return None;
        }
        let q = [p.x, p.y, p.z];
        // Slightly inflated bound so the final `distance < radius` test sees the
        // same distance value a full search would.
        let bound = radius * (1.0 + 1e-9);
        let mut best = (bound * bound, usize::MAX);
        self.search(0, &q, &mut best);
        if best.1 == usize::MAX {
            return None;
        }
        let n = self.finish(&q, best.1);
        (n.distance < radius).then_some(n)
    }

    fn finish(&self, q: &[f64; 3], slot: usize) -> Neighbor {
        Neighbor {
            index: self.ids[slot] as usize,
            distance: dist_sq(q, &self.points[slot]).sqrt(),
        }
    }

    fn search(&self, node: usize, q: &[f64; 3], best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let d = dist_sq(q, &self.points[slot]);
                    if d < best.0 {
                        *best = (d, slot);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near as usize, q, best);
                if diff * diff < best.0 {
                    self.search(far as usize, q, best);
                }
            }
        }
    }
}

#[inline]
fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn build_node(positions: &[Vec3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &positions[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= 0.0 {
        // All points coincide.
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        positions[a as usize][axis].total_cmp(&positions[b as usize][axis])
    });
    let value = positions[order[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_part, right_part) = order.split_at_mut(mid);
    // Points equal to `value` may sit on either side; the query visits the far
    // side whenever the plane is closer than the current best, so ties are safe.
    let left = build_node(positions, left_part, offset, nodes);
    let right = build_node(positions, right_part, offset + mid, nodes);
    nodes[id as usize] = Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_scan(points: &[Vec3], q: &Vec3) -> f64 {
        points
            .iter()
            .map(|p| (p - q).norm())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn empty_index_errors() {
        let index = SurfaceIndex::build(&[]);
        assert!(matches!(
            index.nearest(&Vec3::zeros()),
            Err(Error::EmptyIndex)
        ));
        assert!(index.nearest_within(&Vec3::zeros(), 1.0).is_none());
    }

    #[test]
    fn indexed_point_has_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 50.0)
            .collect();
        let index = SurfaceIndex::build(&pts);
        for p in &pts {
            assert_eq!(index.nearest_distance(p).unwrap(), 0.0);
        }
    }

    #[test]
    fn cube_corners_from_center() {
        let side = 4.0;
        let mut pts = Vec::new();
        for x in [0.0, side] {
            for y in [0.0, side] {
                for z in [0.0, side] {
                    pts.push(Vec3::new(x, y, z));
                }
            }
        }
        let index = SurfaceIndex::build(&pts);
        let d = index.nearest_distance(&Vec3::repeat(side / 2.0)).unwrap();
        assert!((d - side * 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_linear_scan_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..4000)
            .map(|_| {
                // Clustered data exercises uneven splits.
                let c = if rng.random_bool(0.5) { 0.0 } else { 80.0 };
                Vec3::new(
                    c + rng.random::<f64>() * 10.0,
                    rng.random::<f64>() * 100.0,
                    (rng.random::<f64>() * 5.0).round(),
                )
            })
            .collect();
        let index = SurfaceIndex::build(&pts);
        for _ in 0..1000 {
            let q = Vec3::new(
                rng.random_range(-20.0..120.0),
                rng.random_range(-20.0..120.0),
                rng.random_range(-10.0..15.0),
            );
            let n = index.nearest(&q).unwrap();
            let expected = linear_scan(&pts, &q);
            assert_eq!(n.distance, expected);
            assert_eq!((pts[n.index] - q).norm(), expected);

            let r = rng.random_range(0.1..5.0);
            match index.nearest_within(&q, r) {
                Some(w) => {
                    assert!(expected < r);
                    assert_eq!(w.distance, expected);
                }
                None => assert!(expected >= r),
            }
        }
    }

    #[test]
    fn duplicate_points() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 100];
        let index = SurfaceIndex::build(&pts);
        assert_eq!(
            index.nearest_distance(&Vec3::new(1.0, 1.0, 2.0)).unwrap(),
            1.0
        );
    }
}
