use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{BvhDocument, BvhError};
use crate::skeleton::rotation::Axis;
use crate::skeleton::{matrix_to_zxy, zxy_matrix, Motion, Rig};

/// A coordinate axis with a sign, written `+X`, `-Y`, `Z` (= `+Z`) and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SignedAxis {
    pub axis: Axis,
    pub negative: bool,
}

impl SignedAxis {
    pub const PLUS_X: SignedAxis = SignedAxis { axis: Axis::X, negative: false };
    pub const MINUS_Y: SignedAxis = SignedAxis { axis: Axis::Y, negative: true };
    pub const PLUS_Y: SignedAxis = SignedAxis { axis: Axis::Y, negative: false };
    pub const PLUS_Z: SignedAxis = SignedAxis { axis: Axis::Z, negative: false };

    pub fn vector(self) -> Vector3<f64> {
        let v = self.axis.unit();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

impl fmt::Display for SignedAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = match self.axis {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        };
        write!(f, "{}{}", if self.negative { '-' } else { '+' }, axis)
    }
}

impl FromStr for SignedAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (negative, rest) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let axis = match rest.to_ascii_uppercase().as_str() {
            "X" => Axis::X,
            "Y" => Axis::Y,
            "Z" => Axis::Z,
            _ => return Err(format!("invalid axis `{s}`")),
        };
        Ok(SignedAxis { axis, negative })
    }
}

impl TryFrom<String> for SignedAxis {
    type Error = String;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<SignedAxis> for String {
    fn from(value: SignedAxis) -> Self {
        value.to_string()
    }
}

/// Source orientation of a rig (supplied by the caller) and the canonical
/// orientation it is rotated into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub forward: SignedAxis,
    pub up: SignedAxis,
    pub target_forward: SignedAxis,
    pub target_up: SignedAxis,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            forward: SignedAxis::MINUS_Y,
            up: SignedAxis::PLUS_Z,
            target_forward: SignedAxis::MINUS_Y,
            target_up: SignedAxis::PLUS_Z,
        }
    }
}

impl PreprocessConfig {
    /// Rotation sending the source forward/up pair onto the target pair.
    pub fn alignment(&self) -> Result<Matrix3<f64>, BvhError> {
        let frame = |fwd: SignedAxis, up: SignedAxis| {
            let (f, u) = (fwd.vector(), up.vector());
            if f.dot(&u).abs() > 0.5 {
                return Err(BvhError::InvalidAxes { forward: fwd, up });
            }
            Ok(Matrix3::from_columns(&[f, u, f.cross(&u)]))
        };
        let src = frame(self.forward, self.up)?;
        let dst = frame(self.target_forward, self.target_up)?;
        Ok(dst * src.transpose())
    }
}

fn bounding_box(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Uniformly rescales a rig so the longest side of its rest-pose bounding
/// box is 1. Returns the rescaled rig and the factor applied.
pub fn normalize_scale(rig: &Rig) -> Result<(Rig, f64), BvhError> {
    let (lo, hi) = bounding_box(&rig.rest_positions());
    let longest = (hi - lo).max();
    if !(longest > 1e-12) {
        return Err(BvhError::DegenerateBoundingBox);
    }
    let scale = 1.0 / longest;
    let offsets = rig.rest_offsets().iter().map(|o| o * scale).collect();
    Ok((Rig::new(rig.topology().clone(), offsets)?, scale))
}

/// Rotates the rest pose into the canonical orientation, rescales it to a
/// unit bounding box and centres that box on the origin.
pub fn preprocess(doc: &BvhDocument, config: &PreprocessConfig) -> Result<BvhDocument, BvhError> {
    let align = config.alignment()?;
    let motion = &doc.motion;
    let rig = motion.rig();

    let (offsets, rotations) = if align == Matrix3::identity() {
        (rig.rest_offsets().to_vec(), motion.rotations().to_vec())
    } else {
        // conjugating every local rotation rotates the whole pose, rest pose included
        let offsets = rig.rest_offsets().iter().map(|o| align * o).collect();
        let rotations = motion
            .rotations()
            .iter()
            .map(|r| matrix_to_zxy(&(align * zxy_matrix(*r) * align.transpose())))
            .collect();
        (offsets, rotations)
    };
    let rotated = Rig::new(rig.topology().clone(), offsets)?;
    let (scaled, _) = normalize_scale(&rotated)?;

    let (lo, hi) = bounding_box(&scaled.rest_positions());
    let center = (lo + hi) * 0.5;
    let mut offsets = scaled.rest_offsets().to_vec();
    offsets[scaled.topology().root()] -= center;
    let centred = Rig::new(scaled.topology().clone(), offsets)?;

    Ok(BvhDocument {
        channel_layout: doc.channel_layout.clone(),
        motion: Motion::new(centred, rotations, motion.frame_time())?,
    })
}
