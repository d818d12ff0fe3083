use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::retarget::{retarget_to_rig, TargetPositions};
use super::{AugmentError, AugmentationParams, AugmentationRecord};
use crate::skeleton::{forward_kinematics, Motion, Rig};

/// Makes the pose at one frame the new rest pose and re-derives every
/// frame's rotations against the original joint positions.
///
/// `frame_index = None` picks a frame uniformly from the seed.
pub fn reset_rest_pose(
    motion: &Motion,
    frame_index: Option<usize>,
    seed: u64,
) -> Result<(Motion, AugmentationRecord), AugmentError> {
    let frame_index = match frame_index {
        Some(i) => i,
        None => ChaCha8Rng::seed_from_u64(seed).random_range(0..motion.frames()),
    };
    let params = AugmentationParams::RestPoseReset { frame_index };
    let out = apply_reset(motion, frame_index)?;
    Ok((out, AugmentationRecord { seed, params }))
}

pub(super) fn apply_reset(motion: &Motion, frame_index: usize) -> Result<Motion, AugmentError> {
    if frame_index >= motion.frames() {
        return Err(AugmentError::FrameOutOfRange {
            index: frame_index,
            frames: motion.frames(),
        });
    }
    let rig = motion.rig();
    let topo = rig.topology();
    let pose = forward_kinematics(motion);
    let offsets = (0..rig.len())
        .map(|j| match topo.parent(j) {
            Some(p) => pose.position(frame_index, j) - pose.position(frame_index, p),
            None => rig.rest_offsets()[j],
        })
        .collect();
    let new_rig = Rig::new(topo.clone(), offsets)?;
    let map: Vec<_> = (0..rig.len()).map(Some).collect();
    let (out, _) = retarget_to_rig(&TargetPositions::from(&pose), &new_rig, &map, motion.frame_time())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::bone_lengths;
    use crate::synthetic;

    #[test]
    fn reset_preserves_dynamics_and_lengths() {
        let m = synthetic::quadruped_walk(16, 0.4, 40.0);
        let (out, rec) = reset_rest_pose(&m, Some(5), 11).unwrap();
        assert_eq!(rec.params, AugmentationParams::RestPoseReset { frame_index: 5 });
        let a = forward_kinematics(&m);
        let b = forward_kinematics(&out);
        let err = a.positions.iter().zip(&b.positions).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-4, "max FK error {err}");
        for (x, y) in bone_lengths(m.rig()).iter().zip(bone_lengths(out.rig())) {
            assert!((x - y).abs() < 1e-9);
        }
        for r in out.frame(5) {
            assert!(r.iter().all(|v| v.abs() < 1e-6), "{r:?}");
        }
    }

    #[test]
    fn random_frame_is_seeded() {
        let m = synthetic::quadruped_walk(16, 0.4, 40.0);
        let (a, ra) = reset_rest_pose(&m, None, 42).unwrap();
        let (b, rb) = reset_rest_pose(&m, None, 42).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_range_frame() {
        let m = synthetic::quadruped_walk(4, 0.0, 10.0);
        assert_eq!(
            reset_rest_pose(&m, Some(4), 0).unwrap_err(),
            AugmentError::FrameOutOfRange { index: 4, frames: 4 }
        );
    }
}
