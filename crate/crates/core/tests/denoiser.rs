use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rigmotion::denoiser::*;
use rigmotion::nn::Mat;
use rigmotion::skeleton::{Rig, SkeletonTopology};
use rigmotion::synthetic;

fn small_config() -> DenoiserConfig {
    DenoiserConfig {
        depth: 2,
        d_model: 8,
        heads: 2,
        cond_dim: 4,
        diffusion_steps: 10,
        ..DenoiserConfig::desk()
    }
}

/// Overwrites every parameter with small random values so that all
/// residual branches are active.
fn randomize(model: &mut Denoiser, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, m) in model.params_mut().iter_mut() {
        for v in m.data.iter_mut() {
            *v = rng.random_range(-0.4..0.4);
        }
    }
}

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn two_joint_rig() -> Rig {
    let topo = SkeletonTopology::new(vec!["root".into(), "tip".into()], vec![None, Some(0)]).unwrap();
    Rig::new(topo, vec![Vector3::zeros(), Vector3::new(0.1, 0.3, -0.2)]).unwrap()
}

#[test]
fn masked_inputs_never_reach_unmasked_outputs() {
    for stage in [Stage::PoseOnly, Stage::Motion] {
        let mut model = Denoiser::new(small_config(), 3).unwrap();
        if stage == Stage::Motion {
            model.enter_motion_stage(4);
        }
        randomize(&mut model, 5);
        let m = synthetic::quadruped_walk(4, 0.0, 20.0);
        let joints = m.joints();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_values(&mut rng, 4 * joints * 3);
        let jm: Vec<bool> = (0..joints).map(|j| j != 7).collect();
        let fm = vec![true, true, false, true];
        let mut poked = x.clone();
        for f in 0..4 {
            for j in 0..joints {
                if !jm[j] || !fm[f] {
                    let at = (f * joints + j) * 3;
                    poked[at..at + 3].copy_from_slice(&[1e9, -3e7, 42.0]);
                }
            }
        }
        let run = |x: &[f64]| {
            let mut inp = SampleInput::new(m.rig(), 4, x, 5, Some(&[0.5, 0.1, -0.3, 0.2]));
            inp.joint_mask = Some(&jm);
            inp.frame_mask = Some(&fm);
            model.forward(&[inp]).unwrap().sample_output(0)
        };
        let (a, b) = (run(&x), run(&poked));
        assert_eq!(a, b, "{stage:?}");
        for f in 0..4 {
            for j in 0..joints {
                let at = (f * joints + j) * 3;
                if !jm[j] || !fm[f] {
                    assert_eq!(&a[at..at + 3], &[0.0; 3]);
                }
            }
        }
    }
}

#[test]
fn untrained_blocks_contribute_exact_zeros() {
    let fresh = Denoiser::new(small_config(), 8).unwrap();
    let mut scrambled = fresh.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (name, m) in scrambled.params_mut().iter_mut() {
        let in_block = name.starts_with("spatial.") || name.starts_with("temporal.");
        if in_block && !name.contains(".ada.") {
            m.data.iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
        }
    }
    let m = synthetic::quadruped_walk(3, 0.0, 20.0);
    let x = random_values(&mut rng, 3 * m.joints() * 3);
    let input = [SampleInput::new(m.rig(), 3, &x, 2, None)];
    assert_eq!(
        fresh.forward(&input).unwrap().sample_output(0),
        scrambled.forward(&input).unwrap().sample_output(0)
    );
}

#[test]
fn pose_stage_is_frame_permutation_equivariant() {
    let mut model = Denoiser::new(small_config(), 10).unwrap();
    randomize(&mut model, 11);
    let m = synthetic::quadruped_walk(5, 0.0, 20.0);
    let joints = m.joints();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_values(&mut rng, 5 * joints * 3);
    let perm = [3, 0, 4, 1, 2];
    let mut px = vec![0.0; x.len()];
    for (new, &old) in perm.iter().enumerate() {
        px[new * joints * 3..(new + 1) * joints * 3].copy_from_slice(&x[old * joints * 3..(old + 1) * joints * 3]);
    }
    let cond = [0.2, -0.1, 0.4, 0.9];
    let a = model.forward(&[SampleInput::new(m.rig(), 5, &x, 4, Some(&cond))]).unwrap().sample_output(0);
    let b = model.forward(&[SampleInput::new(m.rig(), 5, &px, 4, Some(&cond))]).unwrap().sample_output(0);
    for (new, &old) in perm.iter().enumerate() {
        assert_eq!(&b[new * joints * 3..(new + 1) * joints * 3], &a[old * joints * 3..(old + 1) * joints * 3]);
    }
}

/// Relabels joints in breadth-first order, which keeps every sibling list in
/// its original order and therefore every tree code.
fn bfs_relabel(rig: &Rig) -> (Rig, Vec<usize>) {
    let topo = rig.topology();
    let mut order = vec![topo.root()];
    let mut i = 0;
    while i < order.len() {
        order.extend_from_slice(topo.children(order[i]));
        i += 1;
    }
    let mut new_of = vec![0; rig.len()];
    for (n, &o) in order.iter().enumerate() {
        new_of[o] = n;
    }
    let names = order.iter().map(|&o| topo.name(o).to_string()).collect();
    let parents = order.iter().map(|&o| topo.parent(o).map(|p| new_of[p])).collect();
    let offsets = order.iter().map(|&o| rig.rest_offsets()[o]).collect();
    (Rig::new(SkeletonTopology::new(names, parents).unwrap(), offsets).unwrap(), order)
}

#[test]
fn motion_stage_is_joint_permutation_equivariant() {
    let mut model = Denoiser::new(small_config(), 13).unwrap();
    model.enter_motion_stage(14);
    randomize(&mut model, 15);
    let m = synthetic::quadruped_walk(4, 0.0, 20.0);
    let (rig2, order) = bfs_relabel(m.rig());
    assert_ne!(order, (0..m.joints()).collect::<Vec<_>>(), "relabeling must be non-trivial");
    let joints = m.joints();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = random_values(&mut rng, 4 * joints * 3);
    let mut px = vec![0.0; x.len()];
    for f in 0..4 {
        for (n, &o) in order.iter().enumerate() {
            let (a, b) = ((f * joints + n) * 3, (f * joints + o) * 3);
            px[a..a + 3].copy_from_slice(&x[b..b + 3]);
        }
    }
    let a = model.forward(&[SampleInput::new(m.rig(), 4, &x, 6, None)]).unwrap().sample_output(0);
    let b = model.forward(&[SampleInput::new(&rig2, 4, &px, 6, None)]).unwrap().sample_output(0);
    for f in 0..4 {
        for (n, &o) in order.iter().enumerate() {
            for c in 0..3 {
                let (u, v) = (b[(f * joints + n) * 3 + c], a[(f * joints + o) * 3 + c]);
                assert!((u - v).abs() < 1e-12, "frame {f} joint {o}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut model = Denoiser::new(small_config(), 17).unwrap();
    model.enter_motion_stage(18);
    randomize(&mut model, 19);
    let rig = two_joint_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let xa = random_values(&mut rng, 2 * 3 * 3);
    let xb = random_values(&mut rng, 2 * 3 * 3);
    let target = Mat::from_vec(12, 3, random_values(&mut rng, 36));
    let cond = [0.3, -0.7, 0.1, 0.5];
    let loss_of = |params: &rigmotion::nn::ParamStore| {
        let inputs = [
            SampleInput::new(&rig, 3, &xa, 7, Some(&cond)),
            SampleInput::new(&rig, 3, &xb, 2, None),
        ];
        let fwd = model.forward_with(params, &inputs, Stage::Motion).unwrap();
        let mut tape = fwd.tape;
        let loss = tape.masked_mse(fwd.output, target.clone(), fwd.valid.clone());
        (tape, loss)
    };
    let (tape, loss) = loss_of(model.params());
    let grads = tape.backward(loss);
    let h = 1e-5;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (name, value) in model.params().iter() {
        let g = grads.params.get(name);
        for i in 0..value.data.len() {
            let eval = |delta: f64| {
                let mut p = model.params().clone();
                p.get_mut(name).unwrap().data[i] += delta;
                let (t, l) = loss_of(&p);
                t.value(l).data[0]
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = g.map_or(0.0, |g| g.data[i]);
            let scale = analytic.abs().max(numeric.abs());
            let rel = (analytic - numeric).abs() / scale.max(1e-6);
            worst = worst.max(rel);
            assert!(rel <= 1e-4, "{name}[{i}]: analytic {analytic}, numeric {numeric}");
            checked += 1;
        }
    }
    assert_eq!(checked, model.params().scalar_count());
    println!("checked {checked} parameters, worst relative error {worst:.2e}");
}

#[test]
fn cfg_dropout_one_always_uses_null() {
    let mut cfg = small_config();
    cfg.cfg_dropout = 1.0;
    let mut model = Denoiser::new(cfg, 21).unwrap();
    let m = synthetic::quadruped_walk(6, 0.0, 20.0);
    let ex = TrainingExample {
        pose_conds: vec![vec![1.0, 0.0, 0.0, 0.0]; 6],
        motion_cond: Some(vec![0.0, 1.0, 0.0, 0.0]),
        motion: m,
    };
    let tc = TrainConfig {
        steps: 5,
        batch_size: 3,
        ..Default::default()
    };
    let rep = model.train(std::slice::from_ref(&ex), Stage::PoseOnly, &tc).unwrap();
    assert_eq!(rep.samples, 15);
    assert_eq!(rep.null_condition_samples, 15);
}

#[test]
fn motion_stage_trains_only_temporal_blocks() {
    let mut model = Denoiser::new(small_config(), 22).unwrap();
    let m = synthetic::quadruped_walk(8, 0.0, 20.0);
    let ex = TrainingExample::unconditional(m);
    let tc = TrainConfig {
        steps: 3,
        batch_size: 2,
        ..Default::default()
    };
    model.train(std::slice::from_ref(&ex), Stage::PoseOnly, &tc).unwrap();
    let before = model.clone();
    model.train(std::slice::from_ref(&ex), Stage::Motion, &tc).unwrap();
    assert_eq!(model.stage(), Stage::Motion);
    let mut changed = 0;
    for (name, value) in model.params().iter() {
        match before.params().get(name) {
            Some(old) => assert_eq!(old, value, "{name} must stay frozen"),
            None => {
                assert!(name.starts_with("temporal."));
                changed += 1;
            }
        }
    }
    assert!(changed > 0);
    assert!(matches!(
        model.train(std::slice::from_ref(&ex), Stage::PoseOnly, &tc),
        Err(DenoiserError::StageMismatch { .. })
    ));
}

fn briefly_trained(stage: Stage) -> Denoiser {
    let mut model = Denoiser::new(small_config(), 23).unwrap();
    let ex = TrainingExample {
        motion: synthetic::quadruped_walk(12, 0.0, 25.0),
        pose_conds: Vec::new(),
        motion_cond: Some(vec![0.5, 0.5, 0.5, 0.5]),
    };
    let tc = TrainConfig {
        steps: 4,
        batch_size: 2,
        ..Default::default()
    };
    model.train(std::slice::from_ref(&ex), Stage::PoseOnly, &tc).unwrap();
    if stage == Stage::Motion {
        model.train(std::slice::from_ref(&ex), Stage::Motion, &tc).unwrap();
    }
    model
}

#[test]
fn sampling_is_seed_deterministic() {
    let model = briefly_trained(Stage::Motion);
    let rig = synthetic::quadruped();
    let cond = [0.5, 0.5, 0.5, 0.5];
    let req = SampleRequest {
        rig: &rig,
        frames: 6,
        cond: Some(&cond),
        guidance: 2.0,
    };
    let a = model.sample(&req, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    let b = model.sample(&req, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    let c = model.sample(&req, &mut ChaCha8Rng::seed_from_u64(100)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.rotations().iter().flatten().all(|v| *v > -180.0 && *v <= 180.0));
}

#[test]
fn long_sampling_single_chunk_equals_sample() {
    let model = briefly_trained(Stage::Motion);
    let rig = two_joint_rig();
    let cond = vec![0.5, 0.5, 0.5, 0.5];
    let req = SampleRequest {
        rig: &rig,
        frames: 10,
        cond: Some(&cond),
        guidance: 1.5,
    };
    let direct = model.sample(&req, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let long = model
        .sample_long(&[Some(cond.clone())], &rig, 10, 0, 1.5, &LinearBlend, &mut ChaCha8Rng::seed_from_u64(5))
        .unwrap();
    assert_eq!(long.motion, direct);
}

#[test]
fn long_sampling_length_and_blend() {
    let mut cfg = small_config();
    cfg.depth = 1;
    cfg.diffusion_steps = 4;
    let mut model = Denoiser::new(cfg, 24).unwrap();
    model.enter_motion_stage(25);
    randomize(&mut model, 26);
    model.set_normalizer(Normalizer {
        mean: [0.0; 3],
        std: [0.5; 3],
    });
    let rig = two_joint_rig();
    let conds = vec![None, Some(vec![1.0, 0.0, 0.0, 0.0]), None];
    let long = model
        .sample_long(&conds, &rig, 90, 15, 2.0, &LinearBlend, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    assert_eq!(long.motion.frames(), 240);
    assert_eq!(long.starts, vec![0, 75, 150]);
    let joints = rig.len();
    for k in 1..3 {
        let mid = long.starts[k] + 7;
        for j in 0..joints {
            let a = long.chunks[k - 1][(75 + 7) * joints + j];
            let b = long.chunks[k][7 * joints + j];
            let got = long.motion.rotation(mid, j);
            for c in 0..3 {
                let expect = rigmotion::skeleton::rotation::wrap_degrees(0.5 * a[c] + 0.5 * b[c]);
                assert!((got[c] - expect).abs() < 1e-9);
            }
        }
    }
    assert!(matches!(
        model.sample_long(&conds, &rig, 90, 90, 1.0, &LinearBlend, &mut ChaCha8Rng::seed_from_u64(1)),
        Err(DenoiserError::OverlapTooLarge { .. })
    ));
}

#[test]
fn desk_preset_overfits_three_motions() {
    let motions = [
        synthetic::quadruped_walk(16, 0.0, 30.0),
        synthetic::quadruped_walk(16, 1.3, 20.0),
        synthetic::quadruped_walk(16, 2.1, 40.0),
    ];
    let cfg = DenoiserConfig::desk();
    let proj = PoseProjection::new(cfg.cond_dim, cfg.j_max, 11);
    let examples: Vec<TrainingExample> = motions
        .iter()
        .map(|m| TrainingExample {
            motion: m.clone(),
            pose_conds: (0..m.frames()).map(|f| proj.embed_pose(m.rig(), m.frame(f)).unwrap()).collect(),
            motion_cond: None,
        })
        .collect();
    let mut model = Denoiser::new(cfg, 0).unwrap();
    let tc = TrainConfig {
        steps: 2000,
        batch_size: 8,
        seed: 1,
        ..Default::default()
    };
    let rep = model.train(&examples, Stage::PoseOnly, &tc).unwrap();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let initial = mean(&rep.losses[..50]);
    let last = mean(&rep.losses[1900..]);
    assert!(last < 0.1 * initial, "initial {initial}, final {last}");
    let blocks: Vec<f64> = rep.losses.chunks(500).map(mean).collect();
    assert!(blocks.windows(2).all(|w| w[1] < w[0]), "{blocks:?}");

    let rig = motions[0].rig();
    let cond = proj.embed_pose(rig, motions[0].frame(3)).unwrap();
    let req = SampleRequest {
        rig,
        frames: 1,
        cond: Some(&cond),
        guidance: 1.0,
    };
    let a = model.sample(&req, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = model.sample(&req, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn normalization_round_trip(z in -180.0f64..180.0, x in -90.0f64..90.0, y in -180.0f64..180.0,
                                m0 in -1.0f64..1.0, s0 in 0.01f64..3.0) {
        let n = Normalizer { mean: [m0, -m0, 0.5 * m0], std: [s0, 1.0, 2.0 * s0] };
        let back = n.denormalize(n.normalize([z, x, y]));
        prop_assert!((back[0] - z).abs() < 1e-9 && (back[1] - x).abs() < 1e-9 && (back[2] - y).abs() < 1e-9);
    }
}
