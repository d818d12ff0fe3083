use std::collections::BTreeMap;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rigmotion::augment::*;
use rigmotion::skeleton::{bone_lengths, forward_kinematics, zxy_matrix, Motion, Rig, SkeletonTopology};
use rigmotion::synthetic;

fn legs(range: [f64; 2]) -> PartGroupConfig {
    let group = |name: &str, side: &str| PartGroup {
        name: name.into(),
        joints: ["UpLeg", "Leg", "Foot"].iter().map(|j| format!("{side}{j}")).collect(),
        range,
    };
    PartGroupConfig {
        groups: vec![
            group("left_leg", "Left"),
            group("right_leg", "Right"),
            PartGroup {
                name: "neck".into(),
                joints: vec!["Neck".into(), "Head".into()],
                range,
            },
        ],
        symmetry_pairs: vec![("left_leg".into(), "right_leg".into())],
    }
}

/// Largest FK distance between joints with the same name in two motions.
fn max_named_error(a: &Motion, b: &Motion) -> f64 {
    let (pa, pb) = (forward_kinematics(a), forward_kinematics(b));
    let (ta, tb) = (a.rig().topology(), b.rig().topology());
    let mut worst: f64 = 0.0;
    for j in 0..b.joints() {
        if let Some(k) = ta.index_of(tb.name(j)) {
            for f in 0..a.frames() {
                worst = worst.max((pa.position(f, k) - pb.position(f, j)).norm());
            }
        }
    }
    worst
}

fn chain(joints: usize, step: Vector3<f64>) -> Rig {
    let names = (0..joints).map(|j| format!("c{j}")).collect();
    let parents = (0..joints).map(|j: usize| j.checked_sub(1)).collect();
    let mut offsets = vec![step; joints];
    offsets[0] = Vector3::zeros();
    Rig::new(SkeletonTopology::new(names, parents).unwrap(), offsets).unwrap()
}

#[test]
fn ten_thousand_scale_draws_stay_in_bounds_and_mirror() {
    let config = legs(SCALE_LIMITS);
    config.validate(Some(&synthetic::quadruped())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let f = config.draw_factors(&mut rng);
        assert!(f.values().all(|v| (0.8..=1.2).contains(v)), "{f:?}");
        assert_eq!(f["left_leg"], f["right_leg"]);
    }
}

#[test]
fn scaled_rigs_mirror_per_joint() {
    let m = synthetic::quadruped_walk(6, 0.0, 20.0);
    let before = bone_lengths(m.rig());
    for seed in 0..50 {
        let (out, rec) = scale_bone_lengths(&m, &legs(SCALE_LIMITS), false, seed).unwrap();
        let after = bone_lengths(out.rig());
        let topo = m.rig().topology();
        for part in ["UpLeg", "Leg", "Foot"] {
            let l = topo.index_of(&format!("Left{part}")).unwrap();
            let r = topo.index_of(&format!("Right{part}")).unwrap();
            assert_eq!(after[l] / before[l], after[r] / before[r]);
        }
        for (j, (a, b)) in after.iter().zip(&before).enumerate().skip(1) {
            let ratio = a / b;
            assert!((0.8 - 1e-12..=1.2 + 1e-12).contains(&ratio), "joint {j}: {ratio}");
        }
        assert_eq!(out.rotations(), m.rotations());
        assert_eq!(rec.replay(&m, 140).unwrap(), out);
    }
}

#[test]
fn bad_part_groups_are_rejected() {
    let m = synthetic::quadruped_walk(3, 0.0, 20.0);
    assert!(matches!(
        scale_bone_lengths(&m, &legs([0.7, 1.0]), false, 0),
        Err(AugmentError::ScaleOutOfRange { .. })
    ));
    let mut unknown = legs(SCALE_LIMITS);
    unknown.groups[2].joints.push("Wing".into());
    assert_eq!(scale_bone_lengths(&m, &unknown, false, 0).unwrap_err(), AugmentError::UnknownJoint("Wing".into()));
}

#[test]
fn removing_a_leaf_leaves_survivors_in_place() {
    let m = synthetic::quadruped_walk(12, 0.3, 35.0);
    let (out, rec) = remove_joints(&m, &["LeftToe".into()], 3).unwrap();
    assert_eq!(out.joints(), m.joints() - 1);
    assert!(out.rig().topology().index_of("LeftToe").is_none());
    assert!(max_named_error(&m, &out) <= 1e-4);
    assert_eq!(rec.kind(), AugmentationKind::JointRemove);
}

#[test]
fn removing_a_still_pass_through_joint_merges_offsets() {
    let m = synthetic::quadruped_walk(12, 0.3, 35.0);
    let tail = m.rig().topology().index_of("Tail").unwrap();
    let (rig, mut rots, dt) = m.clone().into_parts();
    for f in 0..12 {
        rots[f * rig.len() + tail] = [0.0; 3];
    }
    let m = Motion::new(rig, rots, dt).unwrap();
    assert!(removal_candidates(&m, 1e-3).contains(&"Tail".to_string()));
    let (out, _) = remove_joints(&m, &["Tail".into()], 0).unwrap();
    let t0 = m.rig().topology();
    let t1 = out.rig().topology();
    let expect = m.rig().rest_offsets()[tail] + m.rig().rest_offsets()[t0.index_of("Tail1").unwrap()];
    let got = out.rig().rest_offsets()[t1.index_of("Tail1").unwrap()];
    assert!((got - expect).norm() < 1e-12);
    assert_eq!(t1.name(t1.parent(t1.index_of("Tail1").unwrap()).unwrap()), "Hips");
    assert!(max_named_error(&m, &out) <= 1e-4);
}

#[test]
fn root_and_branching_joints_are_not_removable() {
    let m = synthetic::quadruped_walk(4, 0.0, 20.0);
    for name in ["Hips", "Spine1"] {
        assert_eq!(remove_joints(&m, &[name.into()], 0).unwrap_err(), AugmentError::NotRemovable(name.into()));
    }
}

#[test]
fn subdivided_midpoint_follows_the_bone() {
    let m = synthetic::quadruped_walk(10, 0.1, 40.0);
    let (out, rec) = subdivide_joints(&m, &["LeftLeg".into()], 2, 140, 5).unwrap();
    assert_eq!(out.joints(), m.joints() + 1);
    let t0 = m.rig().topology();
    let t1 = out.rig().topology();
    let inserted = (0..out.joints()).find(|&j| t0.index_of(t1.name(j)).is_none()).unwrap();
    let (pa, pb) = (forward_kinematics(&m), forward_kinematics(&out));
    let (up, leg) = (t0.index_of("LeftUpLeg").unwrap(), t0.index_of("LeftLeg").unwrap());
    for f in 0..m.frames() {
        let mid = (pa.position(f, up) + pa.position(f, leg)) * 0.5;
        assert!((pb.position(f, inserted) - mid).norm() <= 1e-4);
    }
    assert!(max_named_error(&m, &out) <= 1e-4);
    assert_eq!(rec.replay(&m, 140).unwrap(), out);
}

#[test]
fn straight_chain_subdivision_keeps_identity_rotations() {
    let rig = chain(5, Vector3::new(0.0, 0.0, 0.2));
    let m = Motion::rest(rig, 3, 0.1).unwrap();
    let (out, _) = subdivide_joints(&m, &["c2".into(), "c4".into()], 2, 140, 0).unwrap();
    assert_eq!(out.joints(), 7);
    for r in out.rotations() {
        assert!((zxy_matrix(*r) - Matrix3::identity()).abs().max() <= 1e-6, "{r:?}");
    }
}

#[test]
fn subdivision_respects_the_joint_budget() {
    let m = Motion::rest(chain(139, Vector3::new(0.0, 0.1, 0.0)), 1, 0.1).unwrap();
    assert_eq!(
        subdivide_joints(&m, &["c5".into(), "c9".into()], 2, 140, 0).unwrap_err(),
        AugmentError::JointBudgetExceeded { count: 141, max: 140 }
    );
}

fn random_motions(n: usize, seed: u64) -> Vec<Motion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let joints = rng.random_range(4..30);
            let rig = synthetic::random_rig(&mut rng, joints, 3);
            synthetic::random_motion(&mut rng, rig, 24, 70.0)
        })
        .collect()
}

#[test]
fn rest_pose_reset_reproduces_motion() {
    for (i, m) in random_motions(20, 7).iter().enumerate() {
        let frame = i % m.frames();
        let (out, _) = reset_rest_pose(m, Some(frame), i as u64).unwrap();
        assert!(max_named_error(m, &out) <= 1e-4, "motion {i}");
        for (a, b) in bone_lengths(out.rig()).iter().zip(bone_lengths(m.rig())) {
            assert!((a - b).abs() <= 1e-9);
        }
        for r in out.frame(frame) {
            assert!((zxy_matrix(*r) - Matrix3::identity()).abs().max() <= 1e-6);
        }
    }
    let m = synthetic::quadruped_walk(5, 0.0, 10.0);
    assert_eq!(
        reset_rest_pose(&m, Some(5), 0).unwrap_err(),
        AugmentError::FrameOutOfRange { index: 5, frames: 5 }
    );
}

#[test]
fn identity_retargeting_is_a_fixed_point() {
    for m in random_motions(20, 8) {
        let pose = forward_kinematics(&m);
        let map: Vec<_> = (0..m.joints()).map(Some).collect();
        let (out, report) = retarget_to_rig(&TargetPositions::from(&pose), m.rig(), &map, m.frame_time()).unwrap();
        let back = forward_kinematics(&out);
        for (a, b) in back.positions.iter().zip(&pose.positions) {
            assert!((a - b).norm() <= 1e-6);
        }
        assert!(report.max_position_error <= 1e-6);
    }
}

#[test]
fn single_child_axis_swap() {
    let topo = SkeletonTopology::new(vec!["a".into(), "b".into()], vec![None, Some(0)]).unwrap();
    let rig = Rig::new(topo, vec![Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0)]).unwrap();
    let targets = TargetPositions {
        frames: 1,
        streams: 2,
        positions: vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)],
    };
    let (out, _) = retarget_to_rig(&targets, &rig, &[Some(0), Some(1)], 0.1).unwrap();
    let r = out.rotation(0, 0);
    assert!((r[0] + 90.0).abs() < 1e-9 && r[1].abs() < 1e-9 && r[2].abs() < 1e-9, "{r:?}");
    assert!((forward_kinematics(&out).position(0, 1) - Vector3::x()).norm() < 1e-12);
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    *UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])).to_rotation_matrix().matrix()
}

#[test]
fn star_solution_beats_random_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..5 {
        let dirs: Vec<Vector3<f64>> = (0..3)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize() * rng.random_range(0.2..1.0))
            .collect();
        let names = ["hub", "a", "b", "c"].map(String::from).to_vec();
        let topo = SkeletonTopology::new(names, vec![None, Some(0), Some(0), Some(0)]).unwrap();
        let rig = Rig::new(topo, [vec![Vector3::zeros()], dirs.clone()].concat()).unwrap();
        let targets: Vec<Vector3<f64>> = (0..3).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let tp = TargetPositions {
            frames: 1,
            streams: 4,
            positions: [vec![Vector3::zeros()], targets.clone()].concat(),
        };
        let (out, _) = retarget_to_rig(&tp, &rig, &[Some(0), Some(1), Some(2), Some(3)], 0.1).unwrap();
        let cost = |r: &Matrix3<f64>| -> f64 { dirs.iter().zip(&targets).map(|(d, t)| (r * d.normalize() - t.normalize()).norm_squared()).sum() };
        let solved = cost(&zxy_matrix(out.rotation(0, 0)));
        for _ in 0..10_000 {
            let r = random_rotation(&mut rng);
            assert!(solved <= cost(&r) + 1e-12, "trial {trial}: {solved} beaten by {}", cost(&r));
        }
    }
}

fn policy() -> AugmentationPolicy {
    let mut by_species = BTreeMap::new();
    by_species.insert("dog".to_string(), legs(SCALE_LIMITS));
    let params = serde_json::json!({ "by_species": by_species });
    let mut p = AugmentationPolicy::default();
    p.stages[0].params = params;
    p
}

#[test]
fn pipeline_expansion_count_and_determinism() {
    let pipeline = AugmentationPipeline::from_policy(&policy(), &AugmentationRegistry::builtin()).unwrap();
    let m = synthetic::quadruped_walk(16, 0.2, 30.0);
    let ctx = AugmentContext { species: "dog" };
    let a = pipeline.expand(&m, &ctx, 25, 42).unwrap();
    let b = pipeline.expand(&m, &ctx, 25, 42).unwrap();
    assert_eq!(a.len(), 26);
    assert_eq!(a[0], (m.clone(), Vec::new()));
    assert_eq!(a, b);
    for (motion, records) in &a[1..] {
        assert!(!records.is_empty());
        assert!(motion.joints() <= 140);
        motion.rig().topology().validate(140).unwrap();
        let json = serde_json::to_string(records).unwrap();
        let back: Vec<AugmentationRecord> = serde_json::from_str(&json).unwrap();
        assert_eq!(&replay(&m, &back, 140).unwrap(), motion);
    }
    assert_ne!(a[1..], pipeline.expand(&m, &ctx, 25, 43).unwrap()[1..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn removal_skips_root_and_branches(seed in any::<u64>(), joints in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rig = synthetic::random_rig(&mut rng, joints, 3);
        let m = synthetic::random_motion(&mut rng, rig, 6, 30.0);
        let topo = m.rig().topology();
        for name in removal_candidates(&m, 1e-3) {
            let j = topo.index_of(&name).unwrap();
            prop_assert!(topo.parent(j).is_some());
            prop_assert!(topo.children(j).len() <= 1);
        }
        let stage = AugmentationRegistry::builtin().create("joint_remove", &serde_json::Value::Null, 140).unwrap();
        if let Some((_, rec)) = stage.augment(&m, &AugmentContext::default(), seed).unwrap() {
            let AugmentationParams::JointRemove { removed } = rec.params else { unreachable!() };
            for name in removed {
                let j = topo.index_of(&name).unwrap();
                prop_assert!(topo.parent(j).is_some() && topo.children(j).len() <= 1, "{}", name);
            }
        }
        for j in 0..m.joints() {
            if topo.parent(j).is_none() || topo.children(j).len() > 1 {
                let is_err = matches!(remove_joints(&m, &[topo.name(j).to_string()], 0), Err(AugmentError::NotRemovable(_)));
                prop_assert!(is_err);
            }
        }
    }

    #[test]
    fn augmentation_is_deterministic(seed in any::<u64>()) {
        let m = synthetic::quadruped_walk(8, 0.5, 25.0);
        let pipeline = AugmentationPipeline::from_policy(&policy(), &AugmentationRegistry::builtin()).unwrap();
        let ctx = AugmentContext { species: "dog" };
        prop_assert_eq!(pipeline.variant(&m, &ctx, seed).unwrap(), pipeline.variant(&m, &ctx, seed).unwrap());
    }
}
