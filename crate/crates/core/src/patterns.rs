//! Elementary symmetry patterns: for every sampled vertex, the bitset of
//! candidates that map it to within ε of the model surface.
//!
//! Tables are image independent, so they are computed once per object and
//! persisted to a little-endian cache file:
//!
//! | offset | type      | field                         |
//! |--------|-----------|-------------------------------|
//! | 0      | `[u8; 8]` | magic `PPTABLE1`              |
//! | 8      | `u32`     | format version (1)            |
//! | 12     | `u32`     | object id                     |
//! | 16     | `u64`     | vertex count                  |
//! | 24     | `u64`     | candidate count               |
//! | 32     | `f64`     | ε (mm)                        |
//! | 40     | `u32`     | color test enabled (0/1)      |
//! | 44     | `u32`     | reserved, 0                   |
//! | 48     | `f64`     | ζ (0 when disabled)           |
//! | 56     | `u64`     | sampling seed                 |
//! | 64     | `u64`     | candidate-set hash            |
//! | 72     | `u64`     | sampled-points hash           |
//! | 80     | `u64`×…   | rows, `ceil(candidates/64)` words each, bit `i` of a row is bit `i % 64` of word `i / 64` |

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::geom::{PointSet, Rgb};
use crate::spatial::SurfaceIndex;

pub const DEFAULT_EPSILON: f64 = 1.0;
pub const DEFAULT_COLOR_TOLERANCE: f64 = 0.3;

const MAGIC: &[u8; 8] = b"PPTABLE1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 80;

/// Euclidean distance in linear RGB, in `[0, √3]`.
pub fn color_distance(a: &Rgb, b: &Rgb) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub object_id: u32,
    pub sampling_seed: u64,
    pub candidate_hash: u64,
    pub points_hash: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternParams {
    pub epsilon: f64,
    pub color_tolerance: Option<f64>,
    pub object_id: u32,
    pub sampling_seed: u64,
}

impl Default for PatternParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            color_tolerance: None,
            object_id: 0,
            sampling_seed: 0,
        }
    }
}

/// `|vertices| × |candidates|` membership bitset.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTable {
    n_vertices: usize,
    n_candidates: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    epsilon: f64,
    color_tolerance: Option<f64>,
    provenance: Provenance,
}

pub(crate) fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

/// Hash of the sample positions and colors.
pub fn hash_points(points: &PointSet) -> u64 {
    let mut h = Sha256::new();
    h.update((points.len() as u64).to_le_bytes());
    for p in points.positions() {
        for v in p.iter() {
            h.update(v.to_le_bytes());
        }
    }
    if let Some(colors) = points.colors() {
        for c in colors {
            for v in c {
                h.update(v.to_le_bytes());
            }
        }
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Computes the elementary pattern of every sample. Row `j`, bit `i` is set iff
/// the nearest model point to `T_i·v_j` is strictly closer than ε (and, with a
/// color tolerance, its color is strictly within ζ of `v_j`'s color).
pub fn precompute_patterns(
    points: &PointSet,
    index: &SurfaceIndex,
    candidates: &CandidateSet,
    params: &PatternParams,
) -> Result<PatternTable> {
    if !(params.epsilon > 0.0) || !params.epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be > 0, got {}",
            params.epsilon
        )));
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument("no sample points".into()));
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let colors = match params.color_tolerance {
        Some(zeta) => {
            if !(zeta > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "color tolerance must be > 0, got {zeta}"
                )));
            }
            let colors = points.colors().ok_or(Error::MissingColors)?;
            if index.len() != points.len() {
                return Err(Error::InvalidArgument(
                    "color test needs the index built over the sampled points".into(),
                ));
            }
            Some((colors, zeta))
        }
        None => None,
    };

    let n_candidates = candidates.len();
    let words_per_row = words_for(n_candidates);
    let mut bits = vec![0u64; points.len() * words_per_row];
    let eps = params.epsilon;
    bits.par_chunks_mut(words_per_row)
        .enumerate()
        .for_each(|(j, row)| {
            let v = &points.positions()[j];
            for (i, t) in candidates.transforms().iter().enumerate() {
                let moved = t.apply(v);
                let hit = match index.nearest_within(&moved, eps) {
                    None => false,
                    Some(n) => match colors {
                        None => true,
                        Some((c, zeta)) => color_distance(&c[n.index], &c[j]) < zeta,
                    },
                };
                if hit {
                    row[i / 64] |= 1u64 << (i % 64);
                }
            }
        });

    Ok(PatternTable {
        n_vertices: points.len(),
        n_candidates,
        words_per_row,
        bits,
        epsilon: eps,
        color_tolerance: params.color_tolerance,
        provenance: Provenance {
            object_id: params.object_id,
            sampling_seed: params.sampling_seed,
            candidate_hash: candidates.hash(),
            points_hash: hash_points(points),
        },
    })
}

impl PatternTable {
    /// Builds a table from explicit rows of booleans (for tests and tools).
    pub fn from_rows(rows: &[Vec<bool>], epsilon: f64, provenance: Provenance) -> Result<Self> {
        let n_candidates = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_candidates) {
            return Err(Error::InvalidArgument("ragged pattern rows".into()));
        }
        let words_per_row = words_for(n_candidates);
        let mut bits = vec![0u64; rows.len() * words_per_row];
        for (j, r) in rows.iter().enumerate() {
            for (i, &b) in r.iter().enumerate() {
                if b {
                    bits[j * words_per_row + i / 64] |= 1u64 << (i % 64);
                }
            }
        }
        Ok(Self {
            n_vertices: rows.len(),
            n_candidates,
            words_per_row,
            bits,
            epsilon,
            color_tolerance: None,
            provenance,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn color_tolerance(&self) -> Option<f64> {
        self.color_tolerance
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    #[inline]
    pub fn get(&self, vertex: usize, candidate: usize) -> bool {
        self.bits[vertex * self.words_per_row + candidate / 64] >> (candidate % 64) & 1 == 1
    }

    /// Packed row of `vertex`.
    #[inline]
    pub fn row(&self, vertex: usize) -> &[u64] {
        &self.bits[vertex * self.words_per_row..(vertex + 1) * self.words_per_row]
    }

    /// Candidates contained in every listed row (the strict intersection of
    /// the elementary patterns), by bitwise AND. With no rows, every candidate.
    pub fn strict_intersection(&self, vertices: &[u32]) -> Vec<usize> {
        let mut acc = vec![u64::MAX; self.words_per_row];
        for &v in vertices {
            for (a, w) in acc.iter_mut().zip(self.row(v as usize)) {
                *a &= w;
            }
        }
        (0..self.n_candidates)
            .filter(|&i| acc[i / 64] >> (i % 64) & 1 == 1)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.bits.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.provenance.object_id.to_le_bytes());
        out.extend_from_slice(&(self.n_vertices as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_candidates as u64).to_le_bytes());
        out.extend_from_slice(&self.epsilon.to_le_bytes());
        out.extend_from_slice(&(self.color_tolerance.is_some() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&self.color_tolerance.unwrap_or(0.0).to_le_bytes());
        out.extend_from_slice(&self.provenance.sampling_seed.to_le_bytes());
        out.extend_from_slice(&self.provenance.candidate_hash.to_le_bytes());
        out.extend_from_slice(&self.provenance.points_hash.to_le_bytes());
        for w in &self.bits {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err("not a pattern table".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let n_vertices = u64_at(16) as usize;
        let n_candidates = u64_at(24) as usize;
        let words_per_row = words_for(n_candidates);
        let expected = n_vertices
            .checked_mul(words_per_row)
            .and_then(|w| w.checked_mul(8))
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or("size overflow")?;
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes, found {}", bytes.len()));
        }
        let bits = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            n_vertices,
            n_candidates,
            words_per_row,
            bits,
            epsilon: f64_at(32),
            color_tolerance: (u32_at(40) != 0).then(|| f64_at(48)),
            provenance: Provenance {
                object_id: u32_at(12),
                sampling_seed: u64_at(56),
                candidate_hash: u64_at(64),
                points_hash: u64_at(72),
            },
        })
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        // Write-then-rename so an interrupted run never leaves a torn file.
        let tmp = path.with_extension("bin.partial");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Cache {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// True when the table was computed for exactly these inputs.
    pub fn matches(
        &self,
        candidates: &CandidateSet,
        points_hash: u64,
        params: &PatternParams,
    ) -> bool {
        self.provenance.candidate_hash == candidates.hash()
            && self.n_candidates == candidates.len()
            && self.provenance.points_hash == points_hash
            && self.provenance.object_id == params.object_id
            && self.provenance.sampling_seed == params.sampling_seed
            && self.epsilon.to_bits() == params.epsilon.to_bits()
            && self.color_tolerance.map(f64::to_bits) == params.color_tolerance.map(f64::to_bits)
    }
}

/// Cache path keyed by object, sampling seed, candidate hash, ε, ζ and sample hash.
pub fn cache_path(
    dir: &Path,
    candidates: &CandidateSet,
    points_hash: u64,
    params: &PatternParams,
) -> PathBuf {
    let mut h = Sha256::new();
    h.update(params.object_id.to_le_bytes());
    h.update(params.sampling_seed.to_le_bytes());
    h.update(candidates.hash().to_le_bytes());
    h.update(params.epsilon.to_le_bytes());
    h.update(params.color_tolerance.unwrap_or(0.0).to_le_bytes());
    h.update(points_hash.to_le_bytes());
    let d = h.finalize();
    let key = u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"));
    dir.join(format!(
        "patterns_obj{:06}_{key:016x}.bin",
        params.object_id
    ))
}

/// Loads the cached table for these inputs, or computes and stores it.
/// Returns the table and whether it came from the cache.
pub fn load_or_compute(
    cache_dir: &Path,
    points: &PointSet,
    index: &SurfaceIndex,
    candidates: &CandidateSet,
    params: &PatternParams,
) -> Result<(PatternTable, bool)> {
    let points_hash = hash_points(points);
    let path = cache_path(cache_dir, candidates, points_hash, params);
    if path.exists() {
        match PatternTable::read_cache(&path) {
            Ok(t) if t.matches(candidates, points_hash, params) && t.n_vertices == points.len() => {
                return Ok((t, true));
            }
            Ok(_) => log::warn!("{}: stale pattern cache, recomputing", path.display()),
            Err(e) => log::warn!("{e}; recomputing"),
        }
    }
    let table = precompute_patterns(points, index, candidates, params)?;
    table.write_cache(&path)?;
    Ok((table, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{build_candidates, CandidateConfig, ContinuousSymmetry, SymmetrySpec};
    use crate::geom::{RigidTransform, Vec3};
    use crate::sampling::sample_surface;
    use crate::synth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the membership rule with a linear scan.
    fn direct_bit(points: &PointSet, v: usize, t: &RigidTransform, eps: f64) -> bool {
        let moved = t.apply(&points.positions()[v]);
        let d = points
            .positions()
            .iter()
            .map(|q| (q - moved).norm())
            .fold(f64::INFINITY, f64::min);
        d < eps
    }

    fn z_candidates(steps: usize, radius: f64) -> CandidateSet {
        let spec = SymmetrySpec {
            discrete: vec![],
            continuous: vec![ContinuousSymmetry {
                axis: Vec3::z(),
                offset: Vec3::zeros(),
            }],
        };
        build_candidates(
            &spec,
            &CandidateConfig {
                steps_per_turn: steps,
                ..CandidateConfig::for_object(radius, 1.0)
            },
        )
        .unwrap()
    }

    #[test]
    fn color_distance_cases() {
        assert_eq!(color_distance(&[0.2, 0.4, 0.6], &[0.2, 0.4, 0.6]), 0.0);
        assert!((color_distance(&[0.0; 3], &[1.0; 3]) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cylinder_table_is_all_true() {
        let mesh = synth::cylinder(6.0, 8.0, 256);
        let points = sample_surface(&mesh, 0.8, 1).unwrap();
        let index = SurfaceIndex::from_points(&points);
        let cands = z_candidates(24, 6.0);
        let table =
            precompute_patterns(&points, &index, &cands, &PatternParams::default()).unwrap();
        for j in 0..points.len() {
            for i in 0..cands.len() {
                assert!(table.get(j, i));
                if j % 50 == 0 {
                    assert!(direct_bit(&points, j, cands.get(i), 1.0));
                }
            }
        }
    }

    #[test]
    fn chamfered_cube_rz90_fails_only_near_the_corners() {
        let (side, chamfer) = (20.0, 3.0);
        let h = side / 2.0;
        let mesh = synth::chamfered_cube(side, chamfer);
        let points = sample_surface(&mesh, 0.5, 5).unwrap();
        let index = SurfaceIndex::from_points(&points);
        let cands = CandidateSet::from_transforms([RigidTransform::rot_z_deg(90.0)], h, 0.5);
        let table =
            precompute_patterns(&points, &index, &cands, &PatternParams::default()).unwrap();
        // Corners involved: the chamfered one and the three whose images under
        // Rz(90°) (or its inverse) land on it.
        let corner = Vec3::new(h, h, h);
        let rz = RigidTransform::rot_z_deg(90.0);
        let related = [corner, rz.inverse().apply(&corner)];
        let mut failures = 0;
        for j in 0..points.len() {
            let p = points.positions()[j];
            let expected = direct_bit(&points, j, cands.get(1), 1.0);
            assert_eq!(table.get(j, 1), expected, "vertex {p:?}");
            assert!(table.get(j, 0));
            if !expected {
                failures += 1;
                let near = related.iter().any(|c| (p - c).amax() <= chamfer + 1e-9);
                assert!(near, "unexpected failure far from the chamfer at {p:?}");
            }
        }
        assert!(failures > 0);
    }

    #[test]
    fn color_requires_colors() {
        let mesh = synth::box_mesh(Vec3::new(4.0, 4.0, 4.0));
        let points = sample_surface(&mesh, 1.0, 0).unwrap();
        let index = SurfaceIndex::from_points(&points);
        let cands = CandidateSet::from_transforms([], 2.0, 0.5);
        let params = PatternParams {
            color_tolerance: Some(0.3),
            ..Default::default()
        };
        assert!(matches!(
            precompute_patterns(&points, &index, &cands, &params),
            Err(Error::MissingColors)
        ));
    }

    #[test]
    fn color_breaks_geometric_symmetry() {
        // Square plate, left half red and right half blue: Rz(180°) is a
        // geometric symmetry but swaps the colors.
        let mut pts = Vec::new();
        let mut colors = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let p = Vec3::new(i as f64 * 0.5 - 4.75, j as f64 * 0.5 - 4.75, 0.0);
                colors.push(if p.x < 0.0 {
                    [1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 1.0]
                });
                pts.push(p);
            }
        }
        let points = PointSet::new(pts, Some(colors)).unwrap();
        let index = SurfaceIndex::from_points(&points);
        let cands = CandidateSet::from_transforms([RigidTransform::rot_z_deg(180.0)], 7.0, 0.5);
        let geometric =
            precompute_patterns(&points, &index, &cands, &PatternParams::default()).unwrap();
        assert!((0..points.len()).all(|j| geometric.get(j, 1)));
        let colored = precompute_patterns(
            &points,
            &index,
            &cands,
            &PatternParams {
                color_tolerance: Some(0.3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((0..points.len()).all(|j| !colored.get(j, 1) && colored.get(j, 0)));
    }

    #[test]
    fn boundary_distance_is_excluded() {
        let points =
            PointSet::from_positions(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        // Index only the origin: the second point sits exactly at ε.
        let index = SurfaceIndex::build(&[Vec3::zeros()]);
        let cands = CandidateSet::from_transforms([], 1.0, 0.5);
        let table =
            precompute_patterns(&points, &index, &cands, &PatternParams::default()).unwrap();
        assert!(table.get(0, 0));
        assert!(!table.get(1, 0));
    }

    #[test]
    fn cache_round_trip_and_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = synth::prism(5, 8.0, 6.0);
        let points = sample_surface(&mesh, 1.0, 2).unwrap();
        let index = SurfaceIndex::from_points(&points);
        let cands = z_candidates(10, 8.0);
        let params = PatternParams {
            object_id: 7,
            sampling_seed: 2,
            ..Default::default()
        };
        let (a, cached) = load_or_compute(dir.path(), &points, &index, &cands, &params).unwrap();
        assert!(!cached);
        let (b, cached) = load_or_compute(dir.path(), &points, &index, &cands, &params).unwrap();
        assert!(cached);
        assert_eq!(a, b);
        // Regular pentagonal prism: multiples of 72° survive.
        for j in 0..points.len() {
            assert!(a.get(j, 2) && a.get(j, 4) && a.get(j, 6) && a.get(j, 8));
        }
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..8], b"PPTABLE1");
        assert_eq!(bytes.len(), 80 + points.len() * 8);
        assert_eq!(PatternTable::from_bytes(&bytes).unwrap(), a);
        assert!(PatternTable::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn deterministic_bytes() {
        let mesh = synth::l_shape();
        let points = sample_surface(&mesh, 1.5, 0).unwrap();
        let index = SurfaceIndex::from_points(&points);
        let cands = z_candidates(12, 20.0);
        let p = PatternParams::default();
        let a = precompute_patterns(&points, &index, &cands, &p).unwrap();
        let b = precompute_patterns(&points, &index, &cands, &p).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = PatternTable::from_rows(
            &[vec![true, false, true]],
            1.0,
            Provenance {
                object_id: 3,
                sampling_seed: 9,
                candidate_hash: 0xAABB,
                points_hash: 0xCCDD,
            },
        )
        .unwrap();
        let b = t.to_bytes();
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[24..32].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(b[32..40].try_into().unwrap()), 1.0);
        assert_eq!(u64::from_le_bytes(b[64..72].try_into().unwrap()), 0xAABB);
        assert_eq!(u64::from_le_bytes(b[80..88].try_into().unwrap()), 0b101);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Strict pattern of a union equals the intersection of the parts.
        #[test]
        fn union_is_intersection(seed in any::<u64>(), n_cands in 1usize..150) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<bool>> = (0..60)
                .map(|_| (0..n_cands).map(|i| i == 0 || rng.random_bool(0.9)).collect())
                .collect();
            let table = PatternTable::from_rows(&rows, 1.0, Provenance {
                object_id: 0, sampling_seed: 0, candidate_hash: 0, points_hash: 0,
            }).unwrap();
            let (v1, v2): (Vec<u32>, Vec<u32>) = (0..60u32).partition(|_| rng.random_bool(0.5));
            let all: Vec<u32> = (0..60).collect();
            let union = table.strict_intersection(&all);
            let a = table.strict_intersection(&v1);
            let b = table.strict_intersection(&v2);
            let inter: Vec<usize> = a.iter().copied().filter(|i| b.contains(i)).collect();
            prop_assert_eq!(union, inter);
        }
    }
}
