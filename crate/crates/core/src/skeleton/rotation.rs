//! Rotation helpers: Euler ZXY conversion, per-axis rotations and the
//! direction-alignment solvers used by retargeting.

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Rotation axis of a single BVH rotation channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

/// Channel order used throughout the pipeline.
pub const ZXY: [Axis; 3] = [Axis::Z, Axis::X, Axis::Y];

pub fn axis_rotation(axis: Axis, degrees: f64) -> Matrix3<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    match axis {
        Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    }
}

/// Composes per-channel rotations in the order they are listed, the way a
/// BVH channel line is read: `R = R(order[0]) * R(order[1]) * ...`.
pub fn compose_channels(order: &[Axis], degrees: &[f64]) -> Matrix3<f64> {
    order
        .iter()
        .zip(degrees)
        .fold(Matrix3::identity(), |acc, (&axis, &deg)| {
            acc * axis_rotation(axis, deg)
        })
}

/// `Rz(a) * Rx(b) * Ry(c)` for angles `[a, b, c]` in degrees.
pub fn zxy_matrix(angles: [f64; 3]) -> Matrix3<f64> {
    compose_channels(&ZXY, &angles)
}

/// Extracts ZXY Euler angles (degrees) from a rotation matrix.
///
/// At gimbal lock (X angle at ±90°) the Y angle is set to zero and the
/// whole residual twist is attributed to Z.
pub fn matrix_to_zxy(m: &Matrix3<f64>) -> [f64; 3] {
    let cos_x = (m[(0, 1)] * m[(0, 1)] + m[(1, 1)] * m[(1, 1)]).sqrt();
    let x = m[(2, 1)].atan2(cos_x);
    if cos_x < 1e-12 {
        let z = m[(1, 0)].atan2(m[(0, 0)]);
        return [z.to_degrees(), x.to_degrees(), 0.0];
    }
    let z = (-m[(0, 1)]).atan2(m[(1, 1)]);
    let y = (-m[(2, 0)]).atan2(m[(2, 2)]);
    [z.to_degrees(), x.to_degrees(), y.to_degrees()]
}

/// Maps an angle in degrees into `(-180, 180]`.
pub fn wrap_degrees(a: f64) -> f64 {
    let mut w = a % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
pub fn minimal_rotation(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let a = from.normalize();
    let b = to.normalize();
    let cross = a.cross(&b);
    let dot = a.dot(&b).clamp(-1.0, 1.0);
    let sin = cross.norm();
    if sin < 1e-12 {
        if dot > 0.0 {
            return Matrix3::identity();
        }
        // antiparallel: half turn about any axis orthogonal to `a`
        let helper = if a.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let axis = nalgebra::Unit::new_normalize(a.cross(&helper));
        return *Rotation3::from_axis_angle(&axis, std::f64::consts::PI).matrix();
    }
    let axis = nalgebra::Unit::new_unchecked(cross / sin);
    *Rotation3::from_axis_angle(&axis, sin.atan2(dot)).matrix()
}

/// Least-squares rotation `R` maximising `sum_i w_i <to_i, R from_i>`.
///
/// Directions that span less than a plane leave the twist about their
/// common axis undetermined; in that case the minimal rotation of the
/// weighted mean direction is returned so fixed points stay fixed.
pub fn wahba_rotation(pairs: &[(Vector3<f64>, Vector3<f64>, f64)]) -> Matrix3<f64> {
    match pairs.len() {
        0 => return Matrix3::identity(),
        1 => return minimal_rotation(&pairs[0].0, &pairs[0].1),
        _ => {}
    }
    let mut b = Matrix3::zeros();
    for (from, to, w) in pairs {
        b += *w * to.normalize() * from.normalize().transpose();
    }
    let svd = b.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    if sv[1] <= 1e-9 * sv[0].max(1e-300) {
        let from: Vector3<f64> = pairs.iter().map(|(f, _, w)| *w * f.normalize()).sum();
        let to: Vector3<f64> = pairs.iter().map(|(_, t, w)| *w * t.normalize()).sum();
        if from.norm() < 1e-12 || to.norm() < 1e-12 {
            return minimal_rotation(&pairs[0].0, &pairs[0].1);
        }
        return minimal_rotation(&from, &to);
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Matrix3::identity(),
    };
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}
