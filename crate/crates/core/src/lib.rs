//! Visibility-aware symmetry patterns for 6D pose datasets.
//!
//! The pipeline, per object and per image:
//!
//! 1. **Sampling** – the CAD model is sampled into a dense surface point set.
//! 2. **Candidates** – the object's symmetry proposal is expanded into a finite
//!    candidate set of rigid transforms (identity first).
//! 3. **Elementary patterns** – for every sample, the candidates that keep it
//!    within ε of the surface. Image independent, computed once and cached.
//! 4. **Visibility** – the scene is Z-buffered from the ground-truth poses and
//!    the visible samples of each instance are extracted.
//! 5. **Annotation** – a histogram over candidates of the visible samples'
//!    elementary patterns, thresholded by a soft intersection, gives the
//!    per-image symmetry pattern and the instance's pose distribution.
//!
//! [`metrics`] re-scores single-pose and pose-distribution estimates against
//! these distributions; [`bop`] holds the file formats.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotate;
pub mod bop;
pub mod candidates;
pub mod error;
pub mod geom;
pub mod mesh;
pub mod metrics;
pub mod patterns;
pub mod sampling;
pub mod spatial;
pub mod synth;
pub mod visibility;

pub use error::{Error, Result};
pub use geom::{transform_points, CameraModel, PointSet, Rgb, RigidTransform, Vec2, Vec3};
pub use mesh::TriangleMesh;
pub use spatial::{Neighbor, SurfaceIndex};
