//! Rigid-body math, point sets and the pinhole camera.
//!
//! Units are millimeters for positions and translations, pixels for image
//! coordinates. Rotations are stored as 3×3 matrices; quaternions only appear
//! at I/O boundaries (see [`RigidTransform::to_quaternion`]).

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Linear RGB triplet with components in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Tolerance used to validate rotations built from caller-supplied matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Element of SE(3): `x ↦ rotation·x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

fn orthonormality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).abs().max()
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a transform, rejecting matrices that are not rotations to within
    /// [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rigid transform"));
        }
        let orthonormality = orthonormality_error(&rotation);
        let det = rotation.determinant();
        if orthonormality > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation {
                orthonormality,
                det,
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Like [`RigidTransform::new`] but accepts rotations stored with reduced
    /// precision (as in most third-party pose files) and snaps them onto
    /// SO(3). Matrices further than `tolerance` from orthonormal, or with a
    /// negative determinant, are rejected.
    pub fn from_noisy_rotation(rotation: Mat3, translation: Vec3, tolerance: f64) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rigid transform"));
        }
        let orthonormality = orthonormality_error(&rotation);
        let det = rotation.determinant();
        if orthonormality > tolerance || det <= 0.0 {
            return Err(Error::InvalidRotation {
                orthonormality,
                det,
            });
        }
        if orthonormality <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE {
            return Ok(Self {
                rotation,
                translation,
            });
        }
        let svd = rotation.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => {
                return Err(Error::InvalidRotation {
                    orthonormality,
                    det,
                })
            }
        };
        let mut projected = u * v_t;
        if projected.determinant() < 0.0 {
            return Err(Error::InvalidRotation {
                orthonormality,
                det,
            });
        }
        // One Newton step towards orthonormality removes the SVD round-off.
        projected = 0.5 * (projected + projected.transpose().try_inverse().unwrap_or(projected));
        Self::new(projected, translation)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation: Vec3::zeros(),
        }
    }

    /// Rotation about the z axis by `degrees`.
    pub fn rot_z_deg(degrees: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), degrees.to_radians())
    }

    pub fn rot_x_deg(degrees: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), degrees.to_radians())
    }

    pub fn rot_y_deg(degrees: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), degrees.to_radians())
    }

    /// Row-major 9 floats + 3 floats, the layout of BOP `cam_R_m2c`/`cam_t_m2c`.
    pub fn from_row_major(r: &[f64], t: &[f64]) -> Result<Self> {
        let (rotation, translation) = Self::parse_row_major(r, t)?;
        Self::new(rotation, translation)
    }

    pub(crate) fn parse_row_major(r: &[f64], t: &[f64]) -> Result<(Mat3, Vec3)> {
        if r.len() != 9 || t.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "expected 9 rotation and 3 translation values, got {} and {}",
                r.len(),
                t.len()
            )));
        }
        Ok((Mat3::from_row_slice(r), Vec3::new(t[0], t[1], t[2])))
    }

    /// Flattened 4×4 homogeneous matrix, row-major (BOP `symmetries_discrete`).
    pub fn from_homogeneous_row_major(m: &[f64], tolerance: f64) -> Result<Self> {
        if m.len() != 16 {
            return Err(Error::InvalidArgument(format!(
                "expected 16 values for a 4x4 matrix, got {}",
                m.len()
            )));
        }
        let rotation = Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vec3::new(m[3], m[7], m[11]);
        Self::from_noisy_rotation(rotation, translation, tolerance)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Geodesic angle of the rotation part, in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let cos = (r.trace() - 1.0) * 0.5;
        let sin = 0.5
            * Vec3::new(
                r[(2, 1)] - r[(1, 2)],
                r[(0, 2)] - r[(2, 0)],
                r[(1, 0)] - r[(0, 1)],
            )
            .norm();
        sin.atan2(cos)
    }

    /// Unit quaternion `[w, x, y, z]` with `w ≥ 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let q =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        let q = q.into_inner();
        let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
        [sign * q.w, sign * q.i, sign * q.j, sign * q.k]
    }

    /// Inverse of [`RigidTransform::to_quaternion`]; the quaternion is normalized.
    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Self {
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        Self {
            rotation: *uq.to_rotation_matrix().matrix(),
            translation,
        }
    }
}

/// Positions in millimeters, optionally colored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    positions: Vec<Vec3>,
    colors: Option<Vec<Rgb>>,
}

impl PointSet {
    pub fn new(positions: Vec<Vec3>, colors: Option<Vec<Rgb>>) -> Result<Self> {
        if !positions.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("point positions"));
        }
        if let Some(c) = &colors {
            if c.len() != positions.len() {
                return Err(Error::ColorLengthMismatch {
                    positions: positions.len(),
                    colors: c.len(),
                });
            }
        }
        Ok(Self { positions, colors })
    }

    pub fn from_positions(positions: Vec<Vec3>) -> Result<Self> {
        Self::new(positions, None)
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Subset in the order of `indices`.
    pub fn select(&self, indices: &[u32]) -> PointSet {
        PointSet {
            positions: indices
                .iter()
                .map(|&i| self.positions[i as usize])
                .collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i as usize]).collect()),
        }
    }
}

/// Applies `t` to every position; colors pass through.
pub fn transform_points(t: &RigidTransform, points: &PointSet) -> PointSet {
    PointSet {
        positions: points.positions.iter().map(|p| t.apply(p)).collect(),
        colors: points.colors.clone(),
    }
}

/// Pinhole camera. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be > 0, got {fx}, {fy}"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidCamera("non-finite principal point".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!("image size {width}x{height}")));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// From a row-major 3×3 intrinsic matrix (BOP `cam_K`). Skew is ignored.
    pub fn from_k(k: &[f64], width: u32, height: u32) -> Result<Self> {
        if k.len() != 9 {
            return Err(Error::InvalidCamera(format!(
                "cam_K has {} entries",
                k.len()
            )));
        }
        Self::new(k[0], k[4], k[2], k[5], width, height)
    }

    pub fn project(&self, p: &Vec3) -> Result<Vec2> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok(self.project_unchecked(p))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, p: &Vec3) -> Vec2 {
        Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-space point at depth `z` (mm) seen at pixel coordinates `(u, v)`.
    pub fn unproject(&self, uv: &Vec2, z: f64) -> Vec3 {
        Vec3::new(
            (uv.x - self.cx) * z / self.fx,
            (uv.y - self.cy) * z / self.fy,
            z,
        )
    }

    /// Width / 640, the pixel-threshold unit used by projective recall.
    pub fn threshold_unit(&self) -> f64 {
        self.width as f64 / 640.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            0.0f64..std::f64::consts::PI,
            prop::array::uniform3(-500.0f64..500.0),
        )
            .prop_filter_map("degenerate axis", |(axis, angle, t)| {
                let axis = Vec3::from(axis);
                (axis.norm() > 1e-3).then(|| {
                    let r = RigidTransform::from_axis_angle(&axis, angle);
                    RigidTransform::new(*r.rotation(), Vec3::from(t)).unwrap()
                })
            })
    }

    #[test]
    fn compose_identity() {
        let id = RigidTransform::identity();
        assert_eq!(id.compose(&id), id);
    }

    #[test]
    fn rz90_twice_is_rz180() {
        let r = RigidTransform::rot_z_deg(90.0).compose(&RigidTransform::rot_z_deg(90.0));
        let expected = RigidTransform::rot_z_deg(180.0);
        assert!((r.rotation() - expected.rotation()).abs().max() < 1e-12);
    }

    #[test]
    fn transform_points_cases() {
        let pts = PointSet::from_positions(vec![Vec3::zeros()]).unwrap();
        let moved = transform_points(&RigidTransform::from_translation(Vec3::x()), &pts);
        assert_eq!(moved.positions()[0], Vec3::new(1.0, 0.0, 0.0));

        let pts = PointSet::from_positions(vec![Vec3::x()]).unwrap();
        let rotated = transform_points(&RigidTransform::rot_z_deg(90.0), &pts);
        assert!((rotated.positions()[0] - Vec3::y()).norm() < 1e-9);

        let colored =
            PointSet::new(vec![Vec3::new(1.0, 2.0, 3.0)], Some(vec![[0.1, 0.2, 0.3]])).unwrap();
        let same = transform_points(&RigidTransform::identity(), &colored);
        assert_eq!(same, colored);
    }

    #[test]
    fn rejects_reflection_and_non_orthonormal() {
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            RigidTransform::new(reflect, Vec3::zeros()),
            Err(Error::InvalidRotation { .. })
        ));
        assert!(RigidTransform::from_noisy_rotation(reflect, Vec3::zeros(), 1e-3).is_err());
        let scaled = Mat3::identity() * 1.01;
        assert!(RigidTransform::new(scaled, Vec3::zeros()).is_err());
    }

    #[test]
    fn noisy_rotation_is_snapped() {
        let r = RigidTransform::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7);
        let rounded = r.rotation().map(|v| (v * 1e5).round() / 1e5);
        let snapped = RigidTransform::from_noisy_rotation(rounded, Vec3::zeros(), 1e-3).unwrap();
        assert!(orthonormality_error(snapped.rotation()) < 1e-12);
        assert!((snapped.rotation() - r.rotation()).abs().max() < 1e-4);
    }

    #[test]
    fn homogeneous_layout() {
        let m = [
            -1.0, 0.0, 0.0, 1.5, 0.0, -1.0, 0.0, -2.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0,
        ];
        let t = RigidTransform::from_homogeneous_row_major(&m, 1e-6).unwrap();
        assert_eq!(t.translation_array(), [1.5, -2.0, 3.0]);
        assert_close(t.rotation_angle(), std::f64::consts::PI, 1e-12);
    }

    #[test]
    fn projection_cases() {
        let cam = CameraModel::new(100.0, 100.0, 0.0, 0.0, 640, 480).unwrap();
        let uv = cam.project(&Vec3::new(1.0, 0.0, 100.0)).unwrap();
        assert_close(uv.x, 1.0, 1e-12);
        assert_close(uv.y, 0.0, 1e-12);

        let cam = CameraModel::new(500.0, 520.0, 320.0, 240.0, 640, 480).unwrap();
        let uv = cam.project(&Vec3::new(0.0, 0.0, 42.0)).unwrap();
        assert_eq!((uv.x, uv.y), (320.0, 240.0));

        assert!(matches!(
            cam.project(&Vec3::new(0.0, 0.0, 0.0)),
            Err(Error::BehindCamera { .. })
        ));
        assert!(cam.project(&Vec3::new(1.0, 1.0, -5.0)).is_err());
    }

    #[test]
    fn invalid_camera() {
        assert!(CameraModel::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, 0, 10).is_err());
    }

    #[test]
    fn point_set_validation() {
        assert!(matches!(
            PointSet::new(vec![Vec3::zeros()], Some(vec![])),
            Err(Error::ColorLengthMismatch { .. })
        ));
        assert!(PointSet::from_positions(vec![Vec3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn compose_with_inverse_is_identity(t in arb_transform()) {
            let id = t.compose(&t.inverse());
            prop_assert!((id.rotation() - Mat3::identity()).abs().max() < 1e-9);
            prop_assert!(id.translation().norm() < 1e-6);
        }

        #[test]
        fn composition_matches_sequential_application(
            a in arb_transform(),
            b in arb_transform(),
            p in prop::array::uniform3(-100.0f64..100.0),
        ) {
            let p = Vec3::from(p);
            let lhs = a.compose(&b).apply(&p);
            let rhs = a.apply(&b.apply(&p));
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn composition_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!((l.rotation() - r.rotation()).abs().max() < 1e-9);
            prop_assert!((l.translation() - r.translation()).norm() < 1e-6);
        }

        #[test]
        fn unproject_inverts_project(
            x in -200.0f64..200.0, y in -200.0f64..200.0, z in 10.0f64..3000.0,
        ) {
            let cam = CameraModel::new(1075.65, 1073.90, 374.06, 255.96, 720, 540).unwrap();
            let p = Vec3::new(x, y, z);
            let uv = cam.project(&p).unwrap();
            let back = cam.unproject(&uv, z);
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn quaternion_round_trip(t in arb_transform()) {
            let q = t.to_quaternion();
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-6);
            let back = RigidTransform::from_quaternion(q, *t.translation());
            prop_assert!((back.rotation() - t.rotation()).abs().max() < 1e-9);
        }
    }
}
