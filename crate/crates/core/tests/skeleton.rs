use nalgebra::{Matrix4, Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rigmotion::skeleton::*;
use rigmotion::synthetic;

/// Homogeneous transform of one joint: translate by the rest offset, then
/// rotate Z, X, Y. Rotation matrices are written out from scratch.
fn joint_transform(offset: Vector3<f64>, angles: [f64; 3]) -> Matrix4<f64> {
    let [z, x, y] = angles.map(f64::to_radians);
    let rz = Matrix4::new(z.cos(), -z.sin(), 0.0, 0.0, z.sin(), z.cos(), 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let rx = Matrix4::new(1.0, 0.0, 0.0, 0.0, 0.0, x.cos(), -x.sin(), 0.0, 0.0, x.sin(), x.cos(), 0.0, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix4::new(y.cos(), 0.0, y.sin(), 0.0, 0.0, 1.0, 0.0, 0.0, -y.sin(), 0.0, y.cos(), 0.0, 0.0, 0.0, 0.0, 1.0);
    Matrix4::new_translation(&offset) * rz * rx * ry
}

/// World positions by multiplying transforms along each root-to-joint path.
fn chain_oracle(motion: &Motion, frame: usize) -> Vec<Vector3<f64>> {
    let rig = motion.rig();
    (0..rig.len())
        .map(|j| {
            let m = rig
                .topology()
                .path_from_root(j)
                .iter()
                .fold(Matrix4::identity(), |acc, &k| acc * joint_transform(rig.rest_offsets()[k], motion.rotation(frame, k)));
            (m * Vector4::new(0.0, 0.0, 0.0, 1.0)).xyz()
        })
        .collect()
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("j{i}")).collect()
}

#[test]
fn topology_examples() {
    assert_eq!(validate_topology(&names(3), &[None, Some(0), Some(1)], 140), Ok(()));
    assert!(matches!(validate_topology(&names(3), &[None, Some(2), Some(1)], 140), Err(TopologyError::CycleDetected { .. })));
    assert!(matches!(validate_topology(&names(3), &[None, None, Some(0)], 140), Err(TopologyError::MultipleRoots { .. })));
    assert!(matches!(validate_topology(&names(2), &[None, Some(5)], 140), Err(TopologyError::OrphanJoint { .. })));
    let dup = vec!["a".to_string(), "a".to_string()];
    assert_eq!(validate_topology(&dup, &[None, Some(0)], 140), Err(TopologyError::DuplicateName("a".into())));
    assert!(matches!(validate_topology(&names(141), &vec![None; 141], 140), Err(TopologyError::TooManyJoints { .. })));
}

#[test]
fn quarter_turn_about_z() {
    let topo = SkeletonTopology::new(names(2), vec![None, Some(0)]).unwrap();
    let rig = Rig::new(topo, vec![Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0)]).unwrap();
    let m = Motion::new(rig, vec![[90.0, 0.0, 0.0], [0.0; 3]], 0.1).unwrap();
    let p = forward_kinematics(&m).position(0, 1);
    assert!((p - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
}

#[test]
fn rest_motion_gives_cumulative_offsets() {
    let rig = synthetic::quadruped();
    let pose = forward_kinematics(&Motion::rest(rig.clone(), 2, 0.1).unwrap());
    let rest = rig.rest_positions();
    for j in 0..rig.len() {
        let sum: Vector3<f64> = rig.topology().path_from_root(j).iter().map(|&k| rig.rest_offsets()[k]).sum();
        assert!((pose.position(1, j) - sum).norm() < 1e-12);
        assert!((rest[j] - sum).norm() < 1e-12);
    }
}

#[test]
fn bone_length_examples() {
    let topo = SkeletonTopology::new(names(2), vec![None, Some(0)]).unwrap();
    let rig = Rig::new(topo, vec![Vector3::new(1.0, 1.0, 1.0), Vector3::new(3.0, 4.0, 0.0)]).unwrap();
    assert_eq!(bone_lengths(&rig), vec![0.0, 5.0]);
    let parents = (0..10usize).map(|j| j.checked_sub(1)).collect();
    let unit = Rig::new(SkeletonTopology::new(names(10), parents).unwrap(), vec![Vector3::x(); 10]).unwrap();
    let l = bone_lengths(&unit);
    assert_eq!(l[0], 0.0);
    assert!(l[1..].iter().all(|&v| v == 1.0));
}

#[test]
fn zero_length_bones_are_rejected() {
    let topo = SkeletonTopology::new(names(2), vec![None, Some(0)]).unwrap();
    let rig = Rig::new(topo, vec![Vector3::zeros(), Vector3::zeros()]).unwrap();
    assert_eq!(rig.validate(140), Err(RigError::ZeroLengthBone("j1".into())));
}

fn rig_and_motion() -> impl Strategy<Value = Motion> {
    (any::<u64>(), 1usize..=20, 1usize..=10).prop_map(|(seed, joints, frames)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rig = synthetic::random_rig(&mut rng, joints, 4);
        synthetic::random_motion(&mut rng, rig, frames, 180.0)
    })
}

proptest! {
    #[test]
    fn fk_matches_matrix_chain(m in rig_and_motion()) {
        let pose = forward_kinematics(&m);
        for f in 0..m.frames() {
            for (j, p) in chain_oracle(&m, f).iter().enumerate() {
                prop_assert!((pose.position(f, j) - p).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn fk_keeps_bone_lengths_and_pins_root(m in rig_and_motion()) {
        let pose = forward_kinematics(&m);
        let topo = m.rig().topology();
        let lengths = bone_lengths(m.rig());
        for f in 0..m.frames() {
            prop_assert_eq!(pose.position(f, topo.root()), m.rig().rest_offsets()[topo.root()]);
            for j in 0..m.joints() {
                if let Some(p) = topo.parent(j) {
                    let d = (pose.position(f, j) - pose.position(f, p)).norm();
                    prop_assert!((d - lengths[j]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn fk_of_a_frame_equals_fk_of_a_single_frame_motion(m in rig_and_motion()) {
        let pose = forward_kinematics(&m);
        for f in 0..m.frames() {
            let single = forward_kinematics(&m.slice(f, 1));
            prop_assert_eq!(single.frame_positions(0), pose.frame_positions(f));
        }
    }

    #[test]
    fn traversal_puts_parents_first(seed in any::<u64>(), joints in 1usize..60) {
        let rig = synthetic::random_rig(&mut ChaCha8Rng::seed_from_u64(seed), joints, 3);
        let topo = rig.topology();
        let mut at = vec![0; joints];
        for (i, &j) in topo.traversal().iter().enumerate() {
            at[j] = i;
        }
        prop_assert_eq!(topo.traversal().len(), joints);
        for j in 0..joints {
            if let Some(p) = topo.parent(j) {
                prop_assert!(at[p] < at[j]);
            }
        }
    }

    #[test]
    fn euler_round_trip(z in -180.0f64..180.0, x in -89.9f64..89.9, y in -180.0f64..180.0) {
        let m = zxy_matrix([z, x, y]);
        let back = zxy_matrix(matrix_to_zxy(&m));
        prop_assert!((m - back).abs().max() < 1e-9);
    }
}

#[test]
fn euler_round_trip_at_gimbal_lock() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let x = if rng.random_bool(0.5) { 90.0 } else { -90.0 };
        let m = zxy_matrix([rng.random_range(-180.0..180.0), x, rng.random_range(-180.0..180.0)]);
        let a = matrix_to_zxy(&m);
        assert_eq!(a[2], 0.0);
        assert!((zxy_matrix(a) - m).abs().max() < 1e-9);
    }
}
