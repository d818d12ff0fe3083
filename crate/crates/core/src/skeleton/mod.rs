//! Rig and motion data model plus forward kinematics.
//!
//! A [`Rig`] is the static part of a skeletal animation: the joint tree and
//! the rest-pose offset of every joint relative to its parent. A [`Motion`]
//! adds per-frame local rotations stored as ZXY Euler angles in degrees.
//! Root translation is not modelled; the root always sits at its rest offset.

pub mod rotation;

use std::collections::HashSet;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub use rotation::{matrix_to_zxy, wrap_degrees, zxy_matrix};

/// Largest joint count accepted by the denoiser.
pub const DEFAULT_MAX_JOINTS: usize = 140;
/// Longest frame window accepted by the denoiser.
pub const DEFAULT_MAX_FRAMES: usize = 90;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("joint name `{0}` appears more than once")]
    DuplicateName(String),
    #[error("joint {joint} references missing parent {parent}")]
    OrphanJoint { joint: usize, parent: usize },
    #[error("joints {first} and {second} both have no parent")]
    MultipleRoots { first: usize, second: usize },
    #[error("parent links of joint {joint} form a cycle")]
    CycleDetected { joint: usize },
    #[error("skeleton has {count} joints, limit is {max}")]
    TooManyJoints { count: usize, max: usize },
    #[error("names ({names}) and parents ({parents}) differ in length")]
    LengthMismatch { names: usize, parents: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RigError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("expected {expected} rest offsets, got {actual}")]
    OffsetCount { expected: usize, actual: usize },
    #[error("joint `{0}` has a zero-length bone")]
    ZeroLengthBone(String),
    #[error("joint `{0}` has a non-finite rest offset")]
    NonFiniteOffset(String),
    #[error("expected {expected} rotation triples, got {actual}")]
    RotationCount { expected: usize, actual: usize },
    #[error("motion has no frames")]
    NoFrames,
    #[error("non-finite rotation at frame {frame}, joint {joint}")]
    NonFiniteRotation { frame: usize, joint: usize },
}

/// Checks tree invariants on raw parent links, reporting the first violation.
pub fn validate_topology(
    names: &[String],
    parents: &[Option<usize>],
    max_joints: usize,
) -> Result<(), TopologyError> {
    if names.len() != parents.len() {
        return Err(TopologyError::LengthMismatch {
            names: names.len(),
            parents: parents.len(),
        });
    }
    if names.is_empty() {
        return Err(TopologyError::Empty);
    }
    if names.len() > max_joints {
        return Err(TopologyError::TooManyJoints {
            count: names.len(),
            max: max_joints,
        });
    }
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(TopologyError::DuplicateName(name.clone()));
        }
    }
    let mut root = None;
    for (joint, parent) in parents.iter().enumerate() {
        match parent {
            Some(p) if *p >= parents.len() => {
                return Err(TopologyError::OrphanJoint { joint, parent: *p })
            }
            Some(_) => {}
            None => match root {
                Some(first) => {
                    return Err(TopologyError::MultipleRoots {
                        first,
                        second: joint,
                    })
                }
                None => root = Some(joint),
            },
        }
    }
    // every chain of parent links must reach a root within J steps
    for start in 0..parents.len() {
        let mut cursor = start;
        let mut steps = 0;
        while let Some(p) = parents[cursor] {
            cursor = p;
            steps += 1;
            if steps > parents.len() {
                return Err(TopologyError::CycleDetected { joint: start });
            }
        }
    }
    Ok(())
}

/// Joint tree: unique names, parent links, child lists and a root-first
/// depth-first traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    traversal: Vec<usize>,
}

impl SkeletonTopology {
    pub fn new(names: Vec<String>, parents: Vec<Option<usize>>) -> Result<Self, TopologyError> {
        validate_topology(&names, &parents, usize::MAX)?;
        let mut children = vec![Vec::new(); names.len()];
        let mut root = 0;
        for (j, p) in parents.iter().enumerate() {
            match p {
                Some(p) => children[*p].push(j),
                None => root = j,
            }
        }
        let mut traversal = Vec::with_capacity(names.len());
        let mut stack = vec![root];
        while let Some(j) = stack.pop() {
            traversal.push(j);
            stack.extend(children[j].iter().rev());
        }
        Ok(Self {
            names,
            parents,
            children,
            traversal,
        })
    }

    /// Checks the joint budget on top of the tree invariants.
    pub fn validate(&self, max_joints: usize) -> Result<(), TopologyError> {
        validate_topology(&self.names, &self.parents, max_joints)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, joint: usize) -> &str {
        &self.names[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn children(&self, joint: usize) -> &[usize] {
        &self.children[joint]
    }

    pub fn root(&self) -> usize {
        self.traversal[0]
    }

    /// Root-first order in which every parent precedes its children.
    pub fn traversal(&self) -> &[usize] {
        &self.traversal
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_leaf(&self, joint: usize) -> bool {
        self.children[joint].is_empty()
    }

    pub fn depth(&self, joint: usize) -> usize {
        let mut depth = 0;
        let mut cursor = joint;
        while let Some(p) = self.parents[cursor] {
            depth += 1;
            cursor = p;
        }
        depth
    }

    /// Joints from the root down to `joint`, inclusive.
    pub fn path_from_root(&self, joint: usize) -> Vec<usize> {
        let mut path = vec![joint];
        let mut cursor = joint;
        while let Some(p) = self.parents[cursor] {
            path.push(p);
            cursor = p;
        }
        path.reverse();
        path
    }
}

/// Joint tree plus rest-pose offsets (each joint relative to its parent; the
/// root offset is its world rest position).
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    topology: SkeletonTopology,
    rest_offsets: Vec<Vector3<f64>>,
}

impl Rig {
    pub fn new(topology: SkeletonTopology, rest_offsets: Vec<Vector3<f64>>) -> Result<Self, RigError> {
        if rest_offsets.len() != topology.len() {
            return Err(RigError::OffsetCount {
                expected: topology.len(),
                actual: rest_offsets.len(),
            });
        }
        for (j, o) in rest_offsets.iter().enumerate() {
            if !o.iter().all(|v| v.is_finite()) {
                return Err(RigError::NonFiniteOffset(topology.name(j).to_string()));
            }
        }
        Ok(Self {
            topology,
            rest_offsets,
        })
    }

    /// Full static validation: joint budget plus no zero-length bones.
    pub fn validate(&self, max_joints: usize) -> Result<(), RigError> {
        self.topology.validate(max_joints)?;
        for j in 0..self.len() {
            if self.topology.parent(j).is_some() && self.rest_offsets[j].norm() <= 0.0 {
                return Err(RigError::ZeroLengthBone(self.topology.name(j).to_string()));
            }
        }
        Ok(())
    }

    pub fn topology(&self) -> &SkeletonTopology {
        &self.topology
    }

    pub fn rest_offsets(&self) -> &[Vector3<f64>] {
        &self.rest_offsets
    }

    pub fn len(&self) -> usize {
        self.topology.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topology.is_empty()
    }

    /// World positions of every joint with all rotations at identity.
    pub fn rest_positions(&self) -> Vec<Vector3<f64>> {
        let mut out = vec![Vector3::zeros(); self.len()];
        for &j in self.topology.traversal() {
            out[j] = match self.topology.parent(j) {
                Some(p) => out[p] + self.rest_offsets[j],
                None => self.rest_offsets[j],
            };
        }
        out
    }
}

/// Per-joint bone length; the root entry is zero.
pub fn bone_lengths(rig: &Rig) -> Vec<f64> {
    (0..rig.len())
        .map(|j| match rig.topology().parent(j) {
            Some(_) => rig.rest_offsets()[j].norm(),
            None => 0.0,
        })
        .collect()
}

/// A rig animated by local joint rotations.
///
/// Rotations are stored frame-major, one `[z, x, y]` triple of Euler angles
/// in degrees per joint, applied as `Rz * Rx * Ry` in the parent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    rig: Rig,
    rotations: Vec<[f64; 3]>,
    frames: usize,
    frame_time: f64,
}

impl Motion {
    pub fn new(rig: Rig, rotations: Vec<[f64; 3]>, frame_time: f64) -> Result<Self, RigError> {
        let joints = rig.len();
        if rotations.is_empty() {
            return Err(RigError::NoFrames);
        }
        if rotations.len() % joints != 0 {
            return Err(RigError::RotationCount {
                expected: joints * (rotations.len() / joints + 1),
                actual: rotations.len(),
            });
        }
        let frames = rotations.len() / joints;
        for (i, r) in rotations.iter().enumerate() {
            if !r.iter().all(|v| v.is_finite()) {
                return Err(RigError::NonFiniteRotation {
                    frame: i / joints,
                    joint: i % joints,
                });
            }
        }
        Ok(Self {
            rig,
            rotations,
            frames,
            frame_time,
        })
    }

    /// A motion of `frames` frames with every rotation at identity.
    pub fn rest(rig: Rig, frames: usize, frame_time: f64) -> Result<Self, RigError> {
        let n = rig.len() * frames;
        Self::new(rig, vec![[0.0; 3]; n], frame_time)
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.rig.len()
    }

    pub fn frame_time(&self) -> f64 {
        self.frame_time
    }

    pub fn rotations(&self) -> &[[f64; 3]] {
        &self.rotations
    }

    pub fn frame(&self, f: usize) -> &[[f64; 3]] {
        let j = self.joints();
        &self.rotations[f * j..(f + 1) * j]
    }

    pub fn rotation(&self, f: usize, j: usize) -> [f64; 3] {
        self.rotations[f * self.joints() + j]
    }

    /// Frames `[start, start + len)` as a new motion on the same rig.
    pub fn slice(&self, start: usize, len: usize) -> Motion {
        let j = self.joints();
        Motion {
            rig: self.rig.clone(),
            rotations: self.rotations[start * j..(start + len) * j].to_vec(),
            frames: len,
            frame_time: self.frame_time,
        }
    }

    pub fn into_parts(self) -> (Rig, Vec<[f64; 3]>, f64) {
        (self.rig, self.rotations, self.frame_time)
    }
}

/// World-space joint positions and orientations for every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPose {
    pub frames: usize,
    pub joints: usize,
    pub positions: Vec<Vector3<f64>>,
    pub orientations: Vec<Matrix3<f64>>,
}

impl GlobalPose {
    pub fn position(&self, f: usize, j: usize) -> Vector3<f64> {
        self.positions[f * self.joints + j]
    }

    pub fn orientation(&self, f: usize, j: usize) -> Matrix3<f64> {
        self.orientations[f * self.joints + j]
    }

    pub fn frame_positions(&self, f: usize) -> &[Vector3<f64>] {
        &self.positions[f * self.joints..(f + 1) * self.joints]
    }
}

/// Forward kinematics for one frame of local rotations.
pub fn fk_frame(rig: &Rig, rotations: &[[f64; 3]]) -> (Vec<Vector3<f64>>, Vec<Matrix3<f64>>) {
    let n = rig.len();
    let mut positions = vec![Vector3::zeros(); n];
    let mut orientations = vec![Matrix3::identity(); n];
    let topo = rig.topology();
    for &j in topo.traversal() {
        let local = zxy_matrix(rotations[j]);
        match topo.parent(j) {
            Some(p) => {
                positions[j] = positions[p] + orientations[p] * rig.rest_offsets()[j];
                orientations[j] = orientations[p] * local;
            }
            None => {
                positions[j] = rig.rest_offsets()[j];
                orientations[j] = local;
            }
        }
    }
    (positions, orientations)
}

pub fn forward_kinematics(motion: &Motion) -> GlobalPose {
    let mut positions = Vec::with_capacity(motion.rotations.len());
    let mut orientations = Vec::with_capacity(motion.rotations.len());
    for f in 0..motion.frames() {
        let (p, o) = fk_frame(motion.rig(), motion.frame(f));
        positions.extend(p);
        orientations.extend(o);
    }
    GlobalPose {
        frames: motion.frames(),
        joints: motion.joints(),
        positions,
        orientations,
    }
}
