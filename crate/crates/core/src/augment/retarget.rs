//! Per-frame retargeting of a rig onto world-space joint position streams.
//!
//! Joints are solved root first. Each joint's local rotation is the one that
//! best aligns the rest directions of its constrained children with the
//! observed child directions: a least-squares (Wahba) fit when there are
//! several children, the minimal arc when there is one.

use log::warn;
use nalgebra::{Matrix3, Vector3};

use super::AugmentError;
use crate::skeleton::rotation::wahba_rotation;
use crate::skeleton::{matrix_to_zxy, GlobalPose, Motion, Rig};

const MIN_DIRECTION: f64 = 1e-9;

/// Per-frame world positions for `streams` tracked points.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPositions {
    pub frames: usize,
    pub streams: usize,
    pub positions: Vec<Vector3<f64>>,
}

impl TargetPositions {
    pub fn at(&self, frame: usize, stream: usize) -> Vector3<f64> {
        self.positions[frame * self.streams + stream]
    }
}

impl From<&GlobalPose> for TargetPositions {
    fn from(pose: &GlobalPose) -> Self {
        Self {
            frames: pose.frames,
            streams: pose.joints,
            positions: pose.positions.clone(),
        }
    }
}

/// Residuals and fallbacks encountered while solving.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetargetReport {
    /// Sum over frames and aligned children of `|R d_rest - d_target|^2`.
    pub direction_error: f64,
    /// Largest distance between a solved joint and its target.
    pub max_position_error: f64,
    /// Joints with no constrained children; they get identity rotations.
    pub unconstrained: Vec<usize>,
    /// Frames where a joint kept its previous rotation because every target
    /// bone had zero length.
    pub held_rotations: usize,
}

/// Solves local rotations so `new_rig` follows `targets`.
///
/// `joint_map[j]` names the target stream for new-rig joint `j`, or `None`
/// for joints that only follow their parent.
pub fn retarget_to_rig(
    targets: &TargetPositions,
    new_rig: &Rig,
    joint_map: &[Option<usize>],
    frame_time: f64,
) -> Result<(Motion, RetargetReport), AugmentError> {
    let joints = new_rig.len();
    if joint_map.len() != joints {
        return Err(AugmentError::InvalidParams(format!(
            "joint map has {} entries for {} joints",
            joint_map.len(),
            joints
        )));
    }
    if let Some(bad) = joint_map.iter().flatten().find(|&&s| s >= targets.streams) {
        return Err(AugmentError::InvalidParams(format!("target stream {bad} does not exist")));
    }
    let topo = new_rig.topology();
    let offsets = new_rig.rest_offsets();
    let mut report = RetargetReport::default();

    for j in 0..joints {
        let constrained = topo
            .children(j)
            .iter()
            .any(|&c| joint_map[c].is_some() && offsets[c].norm() > MIN_DIRECTION);
        if !constrained {
            report.unconstrained.push(j);
        }
    }
    if report.unconstrained.len() < joints {
        // only interior joints with nothing to align are worth a warning
        let interior: Vec<_> = report
            .unconstrained
            .iter()
            .filter(|&&j| !topo.is_leaf(j))
            .map(|&j| topo.name(j))
            .collect();
        if !interior.is_empty() {
            warn!("joints without constrained children default to identity: {interior:?}");
        }
    }

    let mut rotations = Vec::with_capacity(targets.frames * joints);
    let mut previous: Vec<Matrix3<f64>> = vec![Matrix3::identity(); joints];
    let mut local = vec![Matrix3::identity(); joints];
    let mut world = vec![Matrix3::identity(); joints];
    let mut position = vec![Vector3::zeros(); joints];

    for f in 0..targets.frames {
        for &j in topo.traversal() {
            let parent_world = match topo.parent(j) {
                Some(p) => {
                    position[j] = position[p] + world[p] * offsets[j];
                    world[p]
                }
                None => {
                    position[j] = offsets[j];
                    Matrix3::identity()
                }
            };
            if let Some(s) = joint_map[j] {
                report.max_position_error = report.max_position_error.max((position[j] - targets.at(f, s)).norm());
            }

            let mut pairs = Vec::new();
            let mut any_constrained = false;
            for &c in topo.children(j) {
                let (Some(s), rest) = (joint_map[c], offsets[c]) else { continue };
                if rest.norm() <= MIN_DIRECTION {
                    continue;
                }
                any_constrained = true;
                let observed = targets.at(f, s) - position[j];
                if observed.norm() <= MIN_DIRECTION {
                    continue;
                }
                pairs.push((rest.normalize(), parent_world.transpose() * observed.normalize(), 1.0));
            }
            let r = if !any_constrained {
                Matrix3::identity()
            } else if pairs.is_empty() {
                report.held_rotations += 1;
                previous[j]
            } else {
                let r = wahba_rotation(&pairs);
                report.direction_error += pairs.iter().map(|(a, b, _)| (r * a - b).norm_squared()).sum::<f64>();
                r
            };
            local[j] = r;
            previous[j] = r;
            world[j] = parent_world * r;
        }
        rotations.extend(local.iter().map(matrix_to_zxy));
    }

    let motion = Motion::new(new_rig.clone(), rotations, frame_time)?;
    Ok((motion, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::rotation::axis_rotation;
    use crate::skeleton::{forward_kinematics, zxy_matrix, SkeletonTopology};
    use crate::synthetic;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_retarget_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let rig = synthetic::random_rig(&mut rng, 12, 3);
            let motion = synthetic::random_motion(&mut rng, rig.clone(), 8, 60.0);
            let pose = forward_kinematics(&motion);
            let map: Vec<_> = (0..rig.len()).map(Some).collect();
            let (solved, _) = retarget_to_rig(&(&pose).into(), &rig, &map, motion.frame_time()).unwrap();
            let again = forward_kinematics(&solved);
            for (a, b) in again.positions.iter().zip(&pose.positions) {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn single_child_axis_swap() {
        let topo = SkeletonTopology::new(vec!["a".into(), "b".into()], vec![None, Some(0)]).unwrap();
        let rig = Rig::new(topo, vec![Vector3::zeros(), Vector3::y()]).unwrap();
        let targets = TargetPositions {
            frames: 1,
            streams: 2,
            positions: vec![Vector3::zeros(), Vector3::x()],
        };
        let (m, _) = retarget_to_rig(&targets, &rig, &[Some(0), Some(1)], 0.1).unwrap();
        assert_relative_eq!(zxy_matrix(m.rotation(0, 0)), axis_rotation(crate::skeleton::rotation::Axis::Z, -90.0), epsilon = 1e-12);
        let pose = forward_kinematics(&m);
        assert_relative_eq!(pose.position(0, 1), Vector3::x(), epsilon = 1e-12);
    }

    #[test]
    fn zero_length_target_holds_previous_rotation() {
        let topo = SkeletonTopology::new(vec!["a".into(), "b".into()], vec![None, Some(0)]).unwrap();
        let rig = Rig::new(topo, vec![Vector3::zeros(), Vector3::y()]).unwrap();
        let targets = TargetPositions {
            frames: 2,
            streams: 2,
            positions: vec![Vector3::zeros(), Vector3::x(), Vector3::zeros(), Vector3::zeros()],
        };
        let (m, report) = retarget_to_rig(&targets, &rig, &[Some(0), Some(1)], 0.1).unwrap();
        assert_eq!(report.held_rotations, 1);
        assert_eq!(m.rotation(1, 0), m.rotation(0, 0));
    }

    #[test]
    fn leaves_get_identity() {
        let rig = synthetic::quadruped();
        let motion = synthetic::quadruped_walk(4, 0.0, 30.0);
        let pose = forward_kinematics(&motion);
        let map: Vec<_> = (0..rig.len()).map(Some).collect();
        let (m, report) = retarget_to_rig(&(&pose).into(), &rig, &map, 0.1).unwrap();
        let toe = rig.topology().index_of("LeftToe").unwrap();
        assert!(report.unconstrained.contains(&toe));
        assert_eq!(m.rotation(2, toe), [0.0; 3]);
    }
}
