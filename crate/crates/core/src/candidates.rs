//! Finite symmetry-candidate sets built from a per-object symmetry proposal.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};

pub const DEFAULT_STEPS_PER_TURN: usize = 360;

/// Index of the identity in every [`CandidateSet`].
pub const IDENTITY: usize = 0;

const AXIS_TOLERANCE: f64 = 1e-6;

/// Rotation about `axis` through the point `offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousSymmetry {
    pub axis: Vec3,
    pub offset: Vec3,
}

/// Symmetry proposal of one object, as in BOP `models_info.json`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymmetrySpec {
    pub discrete: Vec<RigidTransform>,
    pub continuous: Vec<ContinuousSymmetry>,
}

impl SymmetrySpec {
    pub fn validate(&self) -> Result<()> {
        for c in &self.continuous {
            let norm = c.axis.norm();
            if (norm - 1.0).abs() > AXIS_TOLERANCE {
                return Err(Error::NonUnitAxis { norm });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateConfig {
    pub steps_per_turn: usize,
    /// mm per radian in [`candidate_distance`]; the object's bounding radius.
    pub scale: f64,
    /// Candidates closer than this (mm) to an earlier one are dropped.
    pub dedup_threshold: f64,
    /// Also add every product `continuous ∘ discrete`.
    pub compose_products: bool,
}

impl CandidateConfig {
    /// Defaults for an object of bounding radius `radius` evaluated at tolerance `epsilon`.
    pub fn for_object(radius: f64, epsilon: f64) -> Self {
        Self {
            steps_per_turn: DEFAULT_STEPS_PER_TURN,
            scale: radius,
            dedup_threshold: epsilon / 2.0,
            compose_products: false,
        }
    }
}

/// Ordered candidate transforms; index 0 is exactly the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    transforms: Vec<RigidTransform>,
    hash: u64,
}

impl CandidateSet {
    /// Prepends the identity and drops near-duplicates (first occurrence wins).
    pub fn from_transforms(
        transforms: impl IntoIterator<Item = RigidTransform>,
        scale: f64,
        dedup_threshold: f64,
    ) -> Self {
        let mut kept = vec![RigidTransform::identity()];
        for t in transforms {
            if kept
                .iter()
                .all(|k| candidate_distance(k, &t, scale) >= dedup_threshold)
            {
                kept.push(t);
            }
        }
        let hash = hash_transforms(&kept);
        Self {
            transforms: kept,
            hash,
        }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn get(&self, i: usize) -> &RigidTransform {
        &self.transforms[i]
    }

    pub fn transforms(&self) -> &[RigidTransform] {
        &self.transforms
    }

    /// Content hash, used to tie pattern tables to the set they were built for.
    pub fn hash(&self) -> u64 {
        self.hash
    }
}

pub(crate) fn hash_transforms(ts: &[RigidTransform]) -> u64 {
    let mut h = Sha256::new();
    for t in ts {
        for v in t
            .rotation_row_major()
            .iter()
            .chain(t.translation_array().iter())
        {
            h.update(v.to_le_bytes());
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Geodesic rotation angle × `scale` plus translation gap, in mm.
pub fn candidate_distance(a: &RigidTransform, b: &RigidTransform, scale: f64) -> f64 {
    let relative = a.inverse().compose(b);
    relative.rotation_angle() * scale + (a.translation() - b.translation()).norm()
}

fn discretize(sym: &ContinuousSymmetry, steps: usize) -> Vec<RigidTransform> {
    (1..steps)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / steps as f64;
            let r = RigidTransform::from_axis_angle(&sym.axis, angle);
            let t = sym.offset - r.rotation() * sym.offset;
            RigidTransform::from_translation(t).compose(&r)
        })
        .collect()
}

/// Expands a symmetry proposal into a candidate set: identity, the discrete
/// symmetries, each continuous axis sampled at `steps_per_turn` angles (and,
/// with `compose_products`, every continuous×discrete product), deduplicated.
pub fn build_candidates(spec: &SymmetrySpec, config: &CandidateConfig) -> Result<CandidateSet> {
    spec.validate()?;
    if !spec.continuous.is_empty() && config.steps_per_turn < 2 {
        return Err(Error::InvalidArgument(format!(
            "steps_per_turn must be >= 2, got {}",
            config.steps_per_turn
        )));
    }
    if !(config.scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "candidate distance scale must be > 0, got {}",
            config.scale
        )));
    }
    let continuous: Vec<RigidTransform> = spec
        .continuous
        .iter()
        .flat_map(|c| discretize(c, config.steps_per_turn))
        .collect();
    let mut all: Vec<RigidTransform> = spec.discrete.clone();
    all.extend(continuous.iter().copied());
    if config.compose_products {
        for d in &spec.discrete {
            for c in &continuous {
                all.push(c.compose(d));
            }
        }
    }
    Ok(CandidateSet::from_transforms(
        all,
        config.scale,
        config.dedup_threshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z_axis() -> ContinuousSymmetry {
        ContinuousSymmetry {
            axis: Vec3::z(),
            offset: Vec3::zeros(),
        }
    }

    fn config(steps: usize) -> CandidateConfig {
        CandidateConfig {
            steps_per_turn: steps,
            scale: 50.0,
            dedup_threshold: 0.5,
            compose_products: false,
        }
    }

    #[test]
    fn empty_spec_is_identity_only() {
        let set = build_candidates(&SymmetrySpec::default(), &config(360)).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(*set.get(IDENTITY), RigidTransform::identity());
    }

    #[test]
    fn z_axis_four_steps() {
        let spec = SymmetrySpec {
            discrete: vec![],
            continuous: vec![z_axis()],
        };
        let set = build_candidates(&spec, &config(4)).unwrap();
        assert_eq!(set.len(), 4);
        for (k, t) in set.transforms().iter().enumerate() {
            let expected = RigidTransform::rot_z_deg(90.0 * k as f64);
            assert!((t.rotation() - expected.rotation()).abs().max() < 1e-12);
            assert!(t.translation().norm() < 1e-12);
        }
    }

    #[test]
    fn discrete_element_coinciding_with_a_step_is_deduplicated() {
        let spec = SymmetrySpec {
            discrete: vec![RigidTransform::rot_z_deg(180.0)],
            continuous: vec![z_axis()],
        };
        let set = build_candidates(&spec, &config(360)).unwrap();
        // Brute-force enumeration: identity + Rz(180°) + 359 steps, one coincident pair.
        let mut all = vec![RigidTransform::identity(), RigidTransform::rot_z_deg(180.0)];
        all.extend((1..360).map(|k| RigidTransform::rot_z_deg(k as f64)));
        let mut distinct: Vec<RigidTransform> = Vec::new();
        for t in all {
            if distinct
                .iter()
                .all(|d| (d.rotation() - t.rotation()).abs().max() > 1e-9)
            {
                distinct.push(t);
            }
        }
        assert_eq!(distinct.len(), 360);
        assert_eq!(set.len(), 360);

        let with_products = build_candidates(
            &spec,
            &CandidateConfig {
                compose_products: true,
                ..config(360)
            },
        )
        .unwrap();
        assert_eq!(with_products.len(), 360);
    }

    #[test]
    fn offset_axis_keeps_offset_fixed() {
        let offset = Vec3::new(5.0, -2.0, 1.0);
        let spec = SymmetrySpec {
            discrete: vec![],
            continuous: vec![ContinuousSymmetry {
                axis: Vec3::z(),
                offset,
            }],
        };
        let set = build_candidates(&spec, &config(8)).unwrap();
        for t in set.transforms() {
            assert!((t.apply(&offset) - offset).norm() < 1e-12);
        }
    }

    #[test]
    fn products_flag_adds_compositions() {
        let spec = SymmetrySpec {
            discrete: vec![RigidTransform::rot_x_deg(180.0)],
            continuous: vec![z_axis()],
        };
        let plain = build_candidates(&spec, &config(4)).unwrap();
        assert_eq!(plain.len(), 5);
        let products = build_candidates(
            &spec,
            &CandidateConfig {
                compose_products: true,
                ..config(4)
            },
        )
        .unwrap();
        assert_eq!(products.len(), 8);
    }

    #[test]
    fn non_unit_axis_is_rejected() {
        let spec = SymmetrySpec {
            discrete: vec![],
            continuous: vec![ContinuousSymmetry {
                axis: Vec3::new(0.0, 0.0, 2.0),
                offset: Vec3::zeros(),
            }],
        };
        assert!(matches!(
            build_candidates(&spec, &config(4)),
            Err(Error::NonUnitAxis { .. })
        ));
    }

    #[test]
    fn distance_closed_forms() {
        let id = RigidTransform::identity();
        assert_eq!(candidate_distance(&id, &id, 100.0), 0.0);
        let d = candidate_distance(&RigidTransform::rot_z_deg(180.0), &id, 100.0);
        assert!((d - 100.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn deterministic_hash() {
        let spec = SymmetrySpec {
            discrete: vec![RigidTransform::rot_x_deg(180.0)],
            continuous: vec![z_axis()],
        };
        let a = build_candidates(&spec, &config(36)).unwrap();
        let b = build_candidates(&spec, &config(36)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let c = build_candidates(&spec, &config(37)).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn distance_is_symmetric(
            a_axis in prop::array::uniform3(-1.0f64..1.0), a_angle in 0.0f64..3.1,
            b_axis in prop::array::uniform3(-1.0f64..1.0), b_angle in 0.0f64..3.1,
            ta in prop::array::uniform3(-50.0f64..50.0), tb in prop::array::uniform3(-50.0f64..50.0),
        ) {
            prop_assume!(Vec3::from(a_axis).norm() > 1e-3 && Vec3::from(b_axis).norm() > 1e-3);
            let a = RigidTransform::from_translation(Vec3::from(ta))
                .compose(&RigidTransform::from_axis_angle(&Vec3::from(a_axis), a_angle));
            let b = RigidTransform::from_translation(Vec3::from(tb))
                .compose(&RigidTransform::from_axis_angle(&Vec3::from(b_axis), b_angle));
            let ab = candidate_distance(&a, &b, 40.0);
            let ba = candidate_distance(&b, &a, 40.0);
            prop_assert!((ab - ba).abs() < 1e-9 * (1.0 + ab));
        }

        #[test]
        fn pure_axis_count_equals_steps(steps in 2usize..400) {
            let spec = SymmetrySpec { discrete: vec![], continuous: vec![z_axis()] };
            let cfg = CandidateConfig { steps_per_turn: steps, scale: 1.0, dedup_threshold: 1e-6, compose_products: false };
            let set = build_candidates(&spec, &cfg).unwrap();
            prop_assert_eq!(set.len(), steps);
        }
    }
}
