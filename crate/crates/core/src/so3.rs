//! Rotation algebra on SO(3): ZYZ Euler angles, rotation matrices, the
//! bi-invariant geodesic distance and Haar sampling.
//!
//! A rotation `g(alpha, beta, gamma) = r_z(alpha) r_y(beta) r_z(gamma)` acts on
//! functions by `(g . f)(x) = f(g^{-1} x)`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `R^T R - I` and `det R - 1` accepted by [`RotationMatrix::try_from_matrix`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Below this value of `sin(beta)` the ZYZ chart is treated as degenerate.
const GIMBAL_EPS: f64 = 1e-12;

/// Wraps an angle to `[0, 2pi)`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// ZYZ Euler angles in the canonical chart `[0,2pi) x [0,pi] x [0,2pi)`.
///
/// Construction always canonicalizes: `beta` outside `[0, pi]` is reflected
/// using `(alpha, -beta, gamma) ~ (alpha + pi, beta, gamma + pi)`, which leaves
/// the rotation unchanged, and `alpha`, `gamma` are wrapped.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawEuler")]
pub struct EulerZYZ {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

#[derive(Deserialize)]
struct RawEuler {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl From<RawEuler> for EulerZYZ {
    fn from(r: RawEuler) -> Self {
        EulerZYZ::new(r.alpha, r.beta, r.gamma)
    }
}

impl fmt::Debug for EulerZYZ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "EulerZYZ({:.12}, {:.12}, {:.12})",
            self.alpha, self.beta, self.gamma
        )
    }
}

impl Default for EulerZYZ {
    fn default() -> Self {
        Self::identity()
    }
}

impl EulerZYZ {
    /// Builds canonical angles. Panics on non-finite input.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        assert!(
            alpha.is_finite() && beta.is_finite() && gamma.is_finite(),
            "Euler angles must be finite: ({alpha}, {beta}, {gamma})"
        );
        let mut b = wrap_angle(beta);
        let (mut a, mut g) = (alpha, gamma);
        if b > PI {
            b = TAU - b;
            a += PI;
            g += PI;
        }
        Self {
            alpha: wrap_angle(a),
            beta: b.clamp(0.0, PI),
            gamma: wrap_angle(g),
        }
    }

    pub fn identity() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn from_degrees(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self::new(alpha.to_radians(), beta.to_radians(), gamma.to_radians())
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn to_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn to_degrees(&self) -> [f64; 3] {
        [
            self.alpha.to_degrees(),
            self.beta.to_degrees(),
            self.gamma.to_degrees(),
        ]
    }

    /// Adds a chart increment and re-canonicalizes.
    pub fn offset(&self, d: [f64; 3]) -> Self {
        Self::new(self.alpha + d[0], self.beta + d[1], self.gamma + d[2])
    }

    pub fn to_matrix(&self) -> RotationMatrix {
        euler_to_matrix(self)
    }
}

/// A proper rotation, stored as a 3x3 orthogonal matrix with unit determinant.
#[derive(Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl fmt::Debug for RotationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RotationMatrix({:?})", self.to_rows())
    }
}

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Rotation by `angle` about the z axis.
    pub fn rz(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rotation by `angle` about the y axis.
    pub fn ry(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    /// Rotation by `angle` about the x axis.
    pub fn rx(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    /// Rotation by `angle` about the (normalized) `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let v = Vector3::from(axis);
        let n = v.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = v / n;
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        let (s, c) = angle.sin_cos();
        Self(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
    }

    /// Rotation `exp([v]_x)` for a rotation vector `v`.
    pub fn from_rotation_vector(v: [f64; 3]) -> Self {
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        Self::from_axis_angle(v, angle)
    }

    /// Validates an arbitrary matrix as a rotation.
    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NotARotation {
                residual: f64::NAN,
                det: f64::NAN,
            });
        }
        let residual = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if residual > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::NotARotation { residual, det });
        }
        Ok(Self(m))
    }

    pub fn try_from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::try_from_matrix(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        Self(self.0 * other.0)
    }

    pub fn inverse(&self) -> RotationMatrix {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.0 * Vector3::from(v);
        [r.x, r.y, r.z]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let sx = m[(2, 1)] - m[(1, 2)];
        let sy = m[(0, 2)] - m[(2, 0)];
        let sz = m[(1, 0)] - m[(0, 1)];
        let s = 0.5 * (sx * sx + sy * sy + sz * sz).sqrt();
        let c = 0.5 * (m.trace() - 1.0);
        s.atan2(c).clamp(0.0, PI)
    }

    pub fn to_euler(&self) -> EulerZYZ {
        matrix_to_euler_unchecked(self)
    }
}

/// `r_z(alpha) r_y(beta) r_z(gamma)`.
pub fn euler_to_matrix(e: &EulerZYZ) -> RotationMatrix {
    let (sa, ca) = e.alpha.sin_cos();
    let (sb, cb) = e.beta.sin_cos();
    let (sg, cg) = e.gamma.sin_cos();
    RotationMatrix(Matrix3::new(
        ca * cb * cg - sa * sg,
        -ca * cb * sg - sa * cg,
        ca * sb,
        sa * cb * cg + ca * sg,
        -sa * cb * sg + ca * cg,
        sa * sb,
        -sb * cg,
        sb * sg,
        cb,
    ))
}

/// Inverse of [`euler_to_matrix`]. At `beta in {0, pi}` the combined in-plane
/// angle is stored in `alpha` and `gamma = 0`.
pub fn matrix_to_euler(r: &RotationMatrix) -> Result<EulerZYZ> {
    // re-validate: RotationMatrix is only constructible through checked paths,
    // but a matrix accumulated through many compositions can drift
    RotationMatrix::try_from_matrix(r.0)?;
    Ok(matrix_to_euler_unchecked(r))
}

fn matrix_to_euler_unchecked(r: &RotationMatrix) -> EulerZYZ {
    let m = &r.0;
    let sb = m[(0, 2)].hypot(m[(1, 2)]);
    let beta = sb.atan2(m[(2, 2)]);
    if sb < GIMBAL_EPS {
        if m[(2, 2)] > 0.0 {
            // r_z(alpha + gamma)
            let a = m[(1, 0)].atan2(m[(0, 0)]);
            EulerZYZ::new(a, 0.0, 0.0)
        } else {
            // r_z(alpha) r_y(pi)
            let a = (-m[(0, 1)]).atan2(m[(1, 1)]);
            EulerZYZ::new(a, PI, 0.0)
        }
    } else {
        let alpha = m[(1, 2)].atan2(m[(0, 2)]);
        let gamma = m[(2, 1)].atan2(-m[(2, 0)]);
        EulerZYZ::new(alpha, beta, gamma)
    }
}

/// Bi-invariant geodesic distance: the angle of `R1^T R2`, in `[0, pi]`.
pub fn geodesic_distance(r1: &RotationMatrix, r2: &RotationMatrix) -> f64 {
    r1.inverse().compose(r2).angle()
}

/// Geodesic distance between two Euler triples.
pub fn euler_distance(a: &EulerZYZ, b: &EulerZYZ) -> f64 {
    geodesic_distance(&a.to_matrix(), &b.to_matrix())
}

/// Haar-uniform rotation drawn from a uniform unit quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            let [w, x, y, z] = q.map(|v| v / n);
            return RotationMatrix(Matrix3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ));
        }
    }
}

/// Haar-uniform rotation returned in Euler form.
pub fn random_euler<R: Rng + ?Sized>(rng: &mut R) -> EulerZYZ {
    random_rotation(rng).to_euler()
}

/// Rotation obtained by perturbing `base` by `angle` radians about a uniformly
/// random axis (right multiplication).
pub fn perturb<R: Rng + ?Sized>(rng: &mut R, base: &RotationMatrix, angle: f64) -> RotationMatrix {
    let axis: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
    base.compose(&RotationMatrix::from_axis_angle(axis, angle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &RotationMatrix, b: &RotationMatrix) -> f64 {
        (a.0 - b.0).amax()
    }

    #[test]
    fn identity_angles_give_identity() {
        let r = euler_to_matrix(&EulerZYZ::new(0.0, 0.0, 0.0));
        assert_eq!(r.0, Matrix3::identity());
    }

    #[test]
    fn pure_z_rotation() {
        let r = euler_to_matrix(&EulerZYZ::new(PI / 2.0, 0.0, 0.0));
        let want =
            RotationMatrix::try_from_rows([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
                .unwrap();
        assert!(max_abs_diff(&r, &want) < 1e-15);
    }

    #[test]
    fn euler_matches_factor_product() {
        let e = EulerZYZ::new(0.3, 1.2, 5.0);
        let prod = RotationMatrix::rz(0.3)
            .compose(&RotationMatrix::ry(1.2))
            .compose(&RotationMatrix::rz(5.0));
        assert!(max_abs_diff(&e.to_matrix(), &prod) < 1e-14);
    }

    #[test]
    fn inverse_identity_and_interior() {
        let e = matrix_to_euler(&RotationMatrix::identity()).unwrap();
        assert_eq!(e.to_array(), [0.0, 0.0, 0.0]);

        let e = EulerZYZ::new(1.1, 2.0, 0.3);
        let back = matrix_to_euler(&e.to_matrix()).unwrap();
        for (a, b) in back.to_array().iter().zip(e.to_array()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gimbal_convention() {
        let e = matrix_to_euler(&RotationMatrix::rz(0.7)).unwrap();
        assert!((e.alpha() - 0.7).abs() < 1e-12);
        assert_eq!(e.beta(), 0.0);
        assert_eq!(e.gamma(), 0.0);

        let r = RotationMatrix::rz(0.4).compose(&RotationMatrix::ry(PI));
        let e = matrix_to_euler(&r).unwrap();
        assert!((e.beta() - PI).abs() < 1e-12);
        assert_eq!(e.gamma(), 0.0);
        assert!(max_abs_diff(&e.to_matrix(), &r) < 1e-12);
    }

    #[test]
    fn rejects_non_rotations() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            RotationMatrix::try_from_matrix(m),
            Err(Error::NotARotation { .. })
        ));
        let m = Matrix3::identity() * 1.001;
        assert!(RotationMatrix::try_from_matrix(m).is_err());
    }

    #[test]
    fn canonicalization_preserves_rotation() {
        let raw = RotationMatrix::rz(0.5)
            .compose(&RotationMatrix::ry(-0.8))
            .compose(&RotationMatrix::rz(2.0));
        let e = EulerZYZ::new(0.5, -0.8, 2.0);
        assert!((0.0..=PI).contains(&e.beta()));
        assert!(max_abs_diff(&e.to_matrix(), &raw) < 1e-14);

        let e = EulerZYZ::new(-7.0, 4.0, 13.0);
        let raw = RotationMatrix::rz(-7.0)
            .compose(&RotationMatrix::ry(4.0))
            .compose(&RotationMatrix::rz(13.0));
        assert!(max_abs_diff(&e.to_matrix(), &raw) < 1e-13);
        assert!(e.alpha() < TAU && e.gamma() < TAU);
    }

    #[test]
    fn distance_basics() {
        let i = RotationMatrix::identity();
        assert_eq!(geodesic_distance(&i, &i), 0.0);
        for k in 0..=10 {
            let t = PI * k as f64 / 10.0;
            let d = geodesic_distance(&i, &RotationMatrix::rz(t));
            assert!((d - t).abs() < 1e-12, "{t} {d}");
        }
    }

    #[test]
    fn random_rotation_is_seeded() {
        let a = random_rotation(&mut ChaCha8Rng::seed_from_u64(7));
        let b = random_rotation(&mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert!(RotationMatrix::try_from_matrix(a.0).is_ok());
    }

    #[test]
    fn wrap_never_returns_tau() {
        assert_eq!(wrap_angle(-1e-300), 0.0);
        assert!(wrap_angle(-1e-17) < TAU);
        assert!((wrap_angle(-0.5) - (TAU - 0.5)).abs() < 1e-15);
    }
}
