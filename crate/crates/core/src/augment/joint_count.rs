use std::collections::HashSet;

use nalgebra::{Matrix3, Vector3};

use super::retarget::{retarget_to_rig, TargetPositions};
use super::{AugmentError, AugmentationParams, AugmentationRecord};
use crate::skeleton::{forward_kinematics, zxy_matrix, Motion, Rig, SkeletonTopology};

/// Whether `joint` may be erased: leaves and single-child pass-through joints
/// qualify, the root and branching joints never do.
pub fn is_removable(topo: &SkeletonTopology, joint: usize) -> bool {
    topo.parent(joint).is_some() && topo.children(joint).len() <= 1
}

/// Leaves plus pass-through joints whose local rotation barely moves.
///
/// Rotation spread is the mean squared Frobenius distance of a joint's local
/// rotation matrices from their average; pass-through joints are candidates
/// when it is below `variance_threshold`.
pub fn removal_candidates(motion: &Motion, variance_threshold: f64) -> Vec<String> {
    let topo = motion.rig().topology();
    (0..motion.joints())
        .filter(|&j| is_removable(topo, j))
        .filter(|&j| topo.is_leaf(j) || rotation_spread(motion, j) < variance_threshold)
        .map(|j| topo.name(j).to_string())
        .collect()
}

fn rotation_spread(motion: &Motion, joint: usize) -> f64 {
    let mats: Vec<Matrix3<f64>> = (0..motion.frames()).map(|f| zxy_matrix(motion.rotation(f, joint))).collect();
    let mean = mats.iter().sum::<Matrix3<f64>>() / mats.len() as f64;
    mats.iter().map(|m| (m - mean).norm_squared()).sum::<f64>() / mats.len() as f64
}

fn resolve(topo: &SkeletonTopology, names: &[String]) -> Result<Vec<usize>, AugmentError> {
    names
        .iter()
        .map(|n| topo.index_of(n).ok_or_else(|| AugmentError::UnknownJoint(n.clone())))
        .collect()
}

/// Erases the named joints and retargets the survivors onto the original
/// joint positions. A removed pass-through joint's offset is folded into
/// its child.
pub fn remove_joints(motion: &Motion, removable: &[String], seed: u64) -> Result<(Motion, AugmentationRecord), AugmentError> {
    let params = AugmentationParams::JointRemove { removed: removable.to_vec() };
    let out = apply_removal(motion, removable)?;
    Ok((out, AugmentationRecord { seed, params }))
}

pub(super) fn apply_removal(motion: &Motion, removed: &[String]) -> Result<Motion, AugmentError> {
    let rig = motion.rig();
    let topo = rig.topology();
    let removed_idx: HashSet<usize> = resolve(topo, removed)?.into_iter().collect();
    for &j in &removed_idx {
        if !is_removable(topo, j) {
            return Err(AugmentError::NotRemovable(topo.name(j).to_string()));
        }
    }
    let rest = rig.rest_positions();
    let mut new_index = vec![None; rig.len()];
    let mut names = Vec::new();
    let mut parents = Vec::new();
    let mut offsets = Vec::new();
    let mut joint_map = Vec::new();
    for &j in topo.traversal() {
        if removed_idx.contains(&j) {
            continue;
        }
        let mut ancestor = topo.parent(j);
        while let Some(a) = ancestor {
            if !removed_idx.contains(&a) {
                break;
            }
            ancestor = topo.parent(a);
        }
        new_index[j] = Some(names.len());
        names.push(topo.name(j).to_string());
        parents.push(ancestor.map(|a| new_index[a].expect("ancestors come first")));
        offsets.push(match ancestor {
            Some(a) => rest[j] - rest[a],
            None => rig.rest_offsets()[j],
        });
        joint_map.push(Some(j));
    }
    let new_rig = Rig::new(SkeletonTopology::new(names, parents)?, offsets)?;
    let pose = forward_kinematics(motion);
    let (out, _) = retarget_to_rig(&TargetPositions::from(&pose), &new_rig, &joint_map, motion.frame_time())?;
    Ok(out)
}

/// Splits each target bone (parent → target joint) into `parts_per_bone`
/// equal collinear segments; inserted joints follow the bone linearly.
pub fn subdivide_joints(
    motion: &Motion,
    targets: &[String],
    parts_per_bone: usize,
    max_joints: usize,
    seed: u64,
) -> Result<(Motion, AugmentationRecord), AugmentError> {
    let params = AugmentationParams::JointSubdivide {
        targets: targets.to_vec(),
        parts_per_bone,
    };
    let out = apply_subdivision(motion, targets, parts_per_bone, max_joints)?;
    Ok((out, AugmentationRecord { seed, params }))
}

pub(super) fn apply_subdivision(
    motion: &Motion,
    targets: &[String],
    parts: usize,
    max_joints: usize,
) -> Result<Motion, AugmentError> {
    if parts < 2 {
        return Err(AugmentError::InvalidParams(format!("parts_per_bone must be at least 2, got {parts}")));
    }
    let rig = motion.rig();
    let topo = rig.topology();
    let target_idx: HashSet<usize> = resolve(topo, targets)?.into_iter().collect();
    if let Some(&root) = target_idx.iter().find(|&&j| topo.parent(j).is_none()) {
        return Err(AugmentError::InvalidParams(format!("root `{}` has no bone to subdivide", topo.name(root))));
    }
    let count = rig.len() + target_idx.len() * (parts - 1);
    if count > max_joints {
        return Err(AugmentError::JointBudgetExceeded { count, max: max_joints });
    }

    // streams: original joints first, then one per inserted joint
    enum Stream {
        Original(usize),
        Between { parent: usize, child: usize, t: f64 },
    }
    let mut streams: Vec<Stream> = (0..rig.len()).map(Stream::Original).collect();
    let mut taken: HashSet<String> = topo.names().iter().cloned().collect();
    let mut new_index = vec![0usize; rig.len()];
    let mut names = Vec::new();
    let mut parents: Vec<Option<usize>> = Vec::new();
    let mut offsets = Vec::new();
    let mut joint_map = Vec::new();

    for &j in topo.traversal() {
        let mut parent = topo.parent(j).map(|p| new_index[p]);
        let mut offset = rig.rest_offsets()[j];
        if target_idx.contains(&j) {
            let p = topo.parent(j).expect("root rejected above");
            offset /= parts as f64;
            for i in 1..parts {
                let mut name = format!("{}_sub{i}", topo.name(j));
                while taken.contains(&name) {
                    name.push('_');
                }
                taken.insert(name.clone());
                names.push(name);
                parents.push(parent);
                offsets.push(offset);
                joint_map.push(Some(streams.len()));
                streams.push(Stream::Between {
                    parent: p,
                    child: j,
                    t: i as f64 / parts as f64,
                });
                parent = Some(names.len() - 1);
            }
        }
        new_index[j] = names.len();
        names.push(topo.name(j).to_string());
        parents.push(parent);
        offsets.push(offset);
        joint_map.push(Some(j));
    }

    let pose = forward_kinematics(motion);
    let mut positions = Vec::with_capacity(pose.frames * streams.len());
    for f in 0..pose.frames {
        for s in &streams {
            positions.push(match *s {
                Stream::Original(j) => pose.position(f, j),
                Stream::Between { parent, child, t } => {
                    let a: Vector3<f64> = pose.position(f, parent);
                    a + (pose.position(f, child) - a) * t
                }
            });
        }
    }
    let targets = TargetPositions {
        frames: pose.frames,
        streams: streams.len(),
        positions,
    };
    let new_rig = Rig::new(SkeletonTopology::new(names, parents)?, offsets)?;
    let (out, _) = retarget_to_rig(&targets, &new_rig, &joint_map, motion.frame_time())?;
    Ok(out)
}
