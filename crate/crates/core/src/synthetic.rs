//! Procedural rigs and motions for tests, demos and smoke training runs.

use nalgebra::Vector3;
use rand::Rng;

use crate::skeleton::{Motion, Rig, SkeletonTopology};

/// Random tree with `joints` joints; each non-root joint picks a parent among
/// earlier joints that still has fewer than `max_children` children.
pub fn random_rig<R: Rng + ?Sized>(rng: &mut R, joints: usize, max_children: usize) -> Rig {
    assert!(joints >= 1 && max_children >= 1);
    let mut parents = vec![None];
    let mut child_count = vec![0usize];
    for j in 1..joints {
        let open: Vec<usize> = (0..j).filter(|&p| child_count[p] < max_children).collect();
        let p = open[rng.random_range(0..open.len())];
        parents.push(Some(p));
        child_count[p] += 1;
        child_count.push(0);
    }
    let names = (0..joints).map(|j| format!("joint{j}")).collect();
    let topo = SkeletonTopology::new(names, parents).expect("generated tree is valid");
    let offsets = (0..joints)
        .map(|j| {
            if j == 0 {
                return Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0);
            }
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let dir = if dir.norm() < 1e-3 { Vector3::z() } else { dir.normalize() };
            dir * rng.random_range(0.05..0.3)
        })
        .collect();
    Rig::new(topo, offsets).expect("generated offsets are finite")
}

/// Smooth periodic rotations with random amplitude, frequency and phase per
/// channel. Amplitudes are capped at `max_amplitude` degrees.
pub fn random_motion<R: Rng + ?Sized>(rng: &mut R, rig: Rig, frames: usize, max_amplitude: f64) -> Motion {
    let joints = rig.len();
    let params: Vec<[(f64, f64, f64); 3]> = (0..joints)
        .map(|_| {
            std::array::from_fn(|_| {
                (
                    rng.random_range(0.0..=max_amplitude),
                    rng.random_range(0.2..2.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
        })
        .collect();
    let mut rotations = Vec::with_capacity(frames * joints);
    for f in 0..frames {
        let t = f as f64 / frames.max(1) as f64;
        for p in &params {
            rotations.push(std::array::from_fn(|c| {
                let (amp, freq, phase) = p[c];
                amp * (std::f64::consts::TAU * freq * t + phase).sin()
            }));
        }
    }
    Motion::new(rig, rotations, 1.0 / 30.0).expect("generated motion is valid")
}

/// A small named four-legged rig facing -Y with Z up, with End Site leaves.
pub fn quadruped() -> Rig {
    let spec: &[(&str, Option<&str>, [f64; 3])] = &[
        ("Hips", None, [0.0, 0.1, 0.0]),
        ("Spine", Some("Hips"), [0.0, -0.12, 0.0]),
        ("Spine1", Some("Spine"), [0.0, -0.12, 0.01]),
        ("Neck", Some("Spine1"), [0.0, -0.08, 0.08]),
        ("Head", Some("Neck"), [0.0, -0.06, 0.06]),
        ("Head_End", Some("Head"), [0.0, -0.08, 0.0]),
        ("Tail", Some("Hips"), [0.0, 0.08, 0.02]),
        ("Tail1", Some("Tail"), [0.0, 0.08, 0.0]),
        ("Tail1_End", Some("Tail1"), [0.0, 0.08, -0.01]),
        ("LeftUpLeg", Some("Hips"), [0.06, 0.0, -0.02]),
        ("LeftLeg", Some("LeftUpLeg"), [0.0, 0.0, -0.14]),
        ("LeftFoot", Some("LeftLeg"), [0.0, 0.0, -0.12]),
        ("LeftToe", Some("LeftFoot"), [0.0, -0.04, -0.01]),
        ("RightUpLeg", Some("Hips"), [-0.06, 0.0, -0.02]),
        ("RightLeg", Some("RightUpLeg"), [0.0, 0.0, -0.14]),
        ("RightFoot", Some("RightLeg"), [0.0, 0.0, -0.12]),
        ("RightToe", Some("RightFoot"), [0.0, -0.04, -0.01]),
        ("LeftArm", Some("Spine1"), [0.06, -0.02, -0.02]),
        ("LeftForeArm", Some("LeftArm"), [0.0, 0.0, -0.14]),
        ("LeftHand", Some("LeftForeArm"), [0.0, 0.0, -0.12]),
        ("LeftHand_End", Some("LeftHand"), [0.0, -0.04, -0.01]),
        ("RightArm", Some("Spine1"), [-0.06, -0.02, -0.02]),
        ("RightForeArm", Some("RightArm"), [0.0, 0.0, -0.14]),
        ("RightHand", Some("RightForeArm"), [0.0, 0.0, -0.12]),
        ("RightHand_End", Some("RightHand"), [0.0, -0.04, -0.01]),
    ];
    let names: Vec<String> = spec.iter().map(|s| s.0.to_string()).collect();
    let parents = spec
        .iter()
        .map(|s| s.1.map(|p| names.iter().position(|n| n == p).expect("parent listed earlier")))
        .collect();
    let offsets = spec.iter().map(|s| Vector3::from(s.2)).collect();
    Rig::new(SkeletonTopology::new(names, parents).expect("static rig"), offsets).expect("static rig")
}

/// A walk-like cycle on [`quadruped`]: legs swing in antiphase, the spine and
/// tail sway. `phase` shifts the cycle so several distinct toy motions can be
/// produced from one rig.
pub fn quadruped_walk(frames: usize, phase: f64, amplitude: f64) -> Motion {
    let rig = quadruped();
    let topo = rig.topology().clone();
    let idx = |n: &str| topo.index_of(n).expect("joint exists");
    let swing = [
        ("LeftUpLeg", 1.0),
        ("RightUpLeg", -1.0),
        ("LeftArm", -1.0),
        ("RightArm", 1.0),
    ];
    let bend = [("LeftLeg", 1.0), ("RightLeg", -1.0), ("LeftForeArm", -1.0), ("RightForeArm", 1.0)];
    let mut rotations = vec![[0.0; 3]; frames * rig.len()];
    for f in 0..frames {
        let t = std::f64::consts::TAU * f as f64 / frames.max(1) as f64 + phase;
        let row = &mut rotations[f * topo.len()..(f + 1) * topo.len()];
        for (name, sign) in swing {
            row[idx(name)][1] = sign * amplitude * t.sin();
        }
        for (name, sign) in bend {
            row[idx(name)][1] = 0.5 * amplitude * (1.0 + sign * t.cos());
        }
        row[idx("Spine")][0] = 0.2 * amplitude * t.sin();
        row[idx("Tail")][0] = 0.5 * amplitude * (2.0 * t).sin();
        row[idx("Tail1")][0] = 0.5 * amplitude * (2.0 * t + 0.5).sin();
        row[idx("Neck")][1] = 0.2 * amplitude * (2.0 * t).cos();
        row[idx("Hips")][2] = 0.1 * amplitude * t.sin();
    }
    Motion::new(rig, rotations, 1.0 / 30.0).expect("valid motion")
}
