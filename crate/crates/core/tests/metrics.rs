use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rigmotion::metrics::*;
use rigmotion::skeleton::{Motion, Rig};
use rigmotion::synthetic;

const FK: FkPositions = FkPositions { j_max: 32 };

/// One-hot embedding keyed by the first channel of the root rotation.
struct Tag;

impl EmbeddingProvider for Tag {
    fn name(&self) -> &str {
        "tag"
    }
    fn dim(&self) -> usize {
        8
    }
    fn embed_frame(&self, m: &Motion, f: usize) -> Result<Vec<f64>, MetricError> {
        let mut v = vec![0.0; 8];
        v[m.rotation(f, 0)[0] as usize] = 1.0;
        Ok(v)
    }
}

fn tagged(rig: &Rig, tags: &[f64]) -> Motion {
    let rots = tags.iter().flat_map(|&t| {
        let mut frame = vec![[0.0; 3]; rig.len()];
        frame[0] = [t, 0.0, 0.0];
        frame
    });
    Motion::new(rig.clone(), rots.collect(), 1.0 / 30.0).unwrap()
}

/// Coverage computed from scratch: every window embedded on its own,
/// every pair compared.
fn brute_coverage(reference: &Motion, generated: &Motion, theta: f64, p: &dyn EmbeddingProvider) -> f64 {
    let w = reference.frames().min(generated.frames()).min(90);
    let rw = extract_windows(reference, w).unwrap();
    let gw = extract_windows(generated, w).unwrap();
    let mut hits = 0;
    for r in &rw.windows {
        let er = p.embed_window(r).unwrap();
        let mut best = f64::NEG_INFINITY;
        for g in &gw.windows {
            best = best.max(cosine(&er, &p.embed_window(g).unwrap()));
        }
        if best > theta {
            hits += 1;
        }
    }
    hits as f64 / rw.len() as f64
}

fn brute_novelty(generated: &Motion, reference: &Motion, theta: f64, p: &dyn EmbeddingProvider) -> f64 {
    let w = reference.frames().min(generated.frames()).min(90);
    let rw = extract_windows(reference, w).unwrap();
    let gw = extract_windows(generated, w).unwrap();
    let mut hits = 0;
    for g in &gw.windows {
        let eg = p.embed_window(g).unwrap();
        let best = rw.windows.iter().map(|r| cosine(&eg, &p.embed_window(r).unwrap())).fold(f64::NEG_INFINITY, f64::max);
        if 1.0 - best > theta {
            hits += 1;
        }
    }
    hits as f64 / gw.len() as f64
}

#[test]
fn windows_match_direct_slicing() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rig = synthetic::random_rig(&mut rng, 6, 3);
    let m = synthetic::random_motion(&mut rng, rig, 5, 60.0);
    let set = extract_windows(&m, 2).unwrap();
    assert_eq!(set.len(), 4);
    assert_eq!((set.window, set.source_frames), (2, 5));
    for (s, w) in set.windows.iter().enumerate() {
        assert_eq!(w.frames(), 2);
        for f in 0..2 {
            assert_eq!(w.frame(f), m.frame(s + f));
        }
    }
}

#[test]
fn self_and_orthogonal_cases() {
    let m = synthetic::quadruped_walk(40, 0.0, 25.0);
    assert_eq!(coverage(&m, &m, 0.99, &FK).unwrap(), 1.0);
    assert_eq!(novelty(&m, &m, 0.01, &FK).unwrap(), 0.0);

    let rig = synthetic::quadruped();
    let a = tagged(&rig, &[0.0; 4]);
    let b = tagged(&rig, &[1.0; 4]);
    assert_eq!(coverage(&a, &b, 0.1, &Tag).unwrap(), 0.0);
    assert_eq!(novelty(&b, &a, 0.5, &Tag).unwrap(), 1.0);
}

#[test]
fn one_of_two_reference_windows_is_matched() {
    let rig = synthetic::quadruped();
    // w = 2: reference windows {0,0}, {0,2}, {2,2} against a single {0,0};
    // the middle one has similarity 1/√2
    let reference = tagged(&rig, &[0.0, 0.0, 2.0, 2.0]);
    let generated = tagged(&rig, &[0.0, 0.0]);
    let c = coverage(&reference, &generated, 0.8, &Tag).unwrap();
    assert_eq!(c, brute_coverage(&reference, &generated, 0.8, &Tag));
    assert!((c - 1.0 / 3.0).abs() < 1e-15);

    let reference = tagged(&rig, &[0.0, 3.0]);
    let generated = tagged(&rig, &[0.0]);
    // w = 1: reference windows {0} and {3}; only the first is matched
    assert_eq!(coverage(&reference, &generated, 0.5, &Tag).unwrap(), 0.5);
    assert_eq!(brute_coverage(&reference, &generated, 0.5, &Tag), 0.5);
    let n = novelty(&reference, &generated, 0.5, &Tag).unwrap();
    assert_eq!(n, 0.5);
    assert_eq!(n, brute_novelty(&reference, &generated, 0.5, &Tag));
}

#[test]
fn step_curve_area() {
    let auc = auc_sweep(|t| if t < 0.5 { 1.0 } else { 0.0 }, DEFAULT_GRID_STEP);
    assert!((auc - 0.5).abs() <= DEFAULT_GRID_STEP, "{auc}");
}

#[test]
fn self_metric_auc() {
    let m = synthetic::quadruped_walk(120, 0.3, 30.0);
    let r = evaluate(&[m.clone()], &[m], &FK, &EvalOptions::default()).unwrap();
    assert!(r.auc["coverage"] >= 0.99, "{:?}", r.auc);
    assert!(r.auc["novelty"] <= 0.01, "{:?}", r.auc);
    assert!(r.scalars["fid"] < 1e-6);
    assert_eq!(r.scalars["r_precision@1"], 1.0);
    assert!(r.to_csv().starts_with("metric,theta,value\n"));
    let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// Mean and unbiased covariance of 2-D points, written out by hand.
fn fit2(rows: &[Vec<f64>]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r[0]).sum::<f64>() / n;
    let my = rows.iter().map(|r| r[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for r in rows {
        sxx += (r[0] - mx) * (r[0] - mx);
        sxy += (r[0] - mx) * (r[1] - my);
        syy += (r[1] - my) * (r[1] - my);
    }
    ([mx, my], [[sxx / (n - 1.0), sxy / (n - 1.0)], [sxy / (n - 1.0), syy / (n - 1.0)]])
}

#[test]
fn fid_two_dimensional_closed_form() {
    let a = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 2.0], vec![0.0, -2.0]];
    let b: Vec<Vec<f64>> = a.iter().map(|r| vec![2.0 * r[0] + 1.0, r[1] + 1.0]).collect();
    // diagonal covariances 2/3, 8/3 against 8/3, 8/3 and unit offsets
    let expect = 2.0 + (2.0f64 / 3.0).sqrt().powi(2) * (1.0 - 2.0f64).powi(2);
    assert!((fid(&a, &b).unwrap() - expect).abs() < 1e-12);

    // general case: for 2×2 matrices with positive eigenvalues,
    // tr √M = √(tr M + 2√det M)
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = gaussian_rows(&mut rng, 7, 2);
        let y: Vec<Vec<f64>> = gaussian_rows(&mut rng, 9, 2).iter().map(|r| vec![r[0] * 1.7 + 0.3 * r[1] - 0.5, r[1] * 0.6 + 2.0]).collect();
        let ((m1, c1), (m2, c2)) = (fit2(&x), fit2(&y));
        let p = [
            [c1[0][0] * c2[0][0] + c1[0][1] * c2[1][0], c1[0][0] * c2[0][1] + c1[0][1] * c2[1][1]],
            [c1[1][0] * c2[0][0] + c1[1][1] * c2[1][0], c1[1][0] * c2[0][1] + c1[1][1] * c2[1][1]],
        ];
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let tr_sqrt = (p[0][0] + p[1][1] + 2.0 * det.sqrt()).sqrt();
        let expect = (m1[0] - m2[0]).powi(2) + (m1[1] - m2[1]).powi(2) + c1[0][0] + c1[1][1] + c2[0][0] + c2[1][1] - 2.0 * tr_sqrt;
        let got = fid(&x, &y).unwrap();
        assert!((got - expect).abs() < 1e-9 * expect.max(1.0), "{got} vs {expect}");
    }
}

#[test]
fn frechet_of_unit_gaussians() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let d = frechet_distance(&DVector::from_element(1, 0.0), &one, &DVector::from_element(1, 1.0), &one);
    assert!((d - 1.0).abs() < 1e-12);
}

#[test]
fn fid_identity_and_symmetry_in_high_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = gaussian_rows(&mut rng, 40, 12);
    let y = gaussian_rows(&mut rng, 30, 12);
    assert!(fid(&x, &x).unwrap() < 1e-6);
    assert!((fid(&x, &y).unwrap() - fid(&y, &x).unwrap()).abs() < 1e-6);
    // fewer samples than dimensions: rank-deficient covariances still work
    let z = gaussian_rows(&mut rng, 5, 12);
    assert!(fid(&z, &z).unwrap() < 1e-6);
}

#[test]
fn permuted_targets_retrieve_at_chance() {
    let n = 100;
    let trials = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = gaussian_rows(&mut rng, n, 16);
    assert_eq!(r_precision(&q, &q, 1).unwrap(), 1.0);
    let mut total = 0.0;
    for _ in 0..trials {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let t: Vec<Vec<f64>> = idx.iter().map(|&i| q[i].clone()).collect();
        total += r_precision(&q, &t, 1).unwrap();
    }
    // hits are fixed points of a random permutation: count has mean 1, variance 1
    let mean = total / trials as f64;
    let sigma = 1.0 / (n as f64 * (trials as f64).sqrt());
    assert!((mean - 1.0 / n as f64).abs() < 3.0 * sigma, "{mean}");
    assert!(matches!(r_precision(&q, &q[1..], 1), Err(MetricError::SizeMismatch(100, 99))));
}

#[test]
fn alignment_extremes_and_concentration() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = gaussian_rows(&mut rng, 1000, 512);
    let neg: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    assert!((alignment(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    assert!((alignment(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
    let b = gaussian_rows(&mut rng, 1000, 512);
    let s = alignment(&a, &b).unwrap();
    assert!((-0.1..=0.1).contains(&s), "{s}");
}

#[test]
fn multimodality_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let same = vec![vec![vec![0.3, -1.0]; 6]; 3];
    assert_eq!(multimodality(&same, &mut rng).unwrap(), 0.0);
    let across = vec![vec![vec![0.0, 0.0], vec![3.0, 4.0]]];
    assert_eq!(multimodality(&across, &mut rng).unwrap(), 5.0);
    assert!(matches!(multimodality(&[vec![vec![1.0]]], &mut rng), Err(MetricError::TooFewSamples { .. })));

    let sigma = 0.7;
    let group: Vec<Vec<f64>> = gaussian_rows(&mut rng, 4000, 10).iter().map(|r| r.iter().map(|v| v * sigma).collect()).collect();
    let got = multimodality(&[group], &mut rng).unwrap();
    let oracle: f64 = (0..20000)
        .map(|_| {
            let d: f64 = (0..10)
                .map(|_| {
                    let u: f64 = StandardNormal.sample(&mut rng);
                    let v: f64 = StandardNormal.sample(&mut rng);
                    (sigma * (u - v)).powi(2)
                })
                .sum();
            d.sqrt()
        })
        .sum::<f64>()
        / 20000.0;
    assert!((got - oracle).abs() < 0.05 * oracle, "{got} vs {oracle}");
}

#[test]
fn registry_builds_reference_provider() {
    let reg = EmbeddingRegistry::builtin();
    assert_eq!(reg.names().collect::<Vec<_>>(), ["fk_positions"]);
    let p = reg.create("fk_positions", 30).unwrap();
    assert_eq!(p.dim(), 90);
    let m = synthetic::quadruped_walk(3, 0.0, 10.0);
    let e = p.embed_frame(&m, 1).unwrap();
    assert!((e.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(e, p.embed_frame(&m, 1).unwrap());
    assert!(reg.create("siglip", 30).is_err());
    assert!(matches!(FkPositions { j_max: 3 }.embed_frame(&m, 0), Err(MetricError::TooManyJoints { .. })));
}

fn motion_pair() -> impl Strategy<Value = (Motion, Motion)> {
    (any::<u64>(), 2usize..8, 2usize..8, 1usize..7, 1usize..7).prop_map(|(seed, ja, jb, fa, fb)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ra = synthetic::random_rig(&mut rng, ja, 3);
        let rb = synthetic::random_rig(&mut rng, jb, 3);
        let amp = rng.random_range(5.0..90.0);
        (synthetic::random_motion(&mut rng, ra, fa, amp), synthetic::random_motion(&mut rng, rb, fb, amp))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn brute_force_equivalence((a, b) in motion_pair(), theta in 0.0f64..1.0) {
        prop_assert_eq!(coverage(&a, &b, theta, &FK).unwrap(), brute_coverage(&a, &b, theta, &FK));
        prop_assert_eq!(novelty(&b, &a, theta, &FK).unwrap(), brute_novelty(&b, &a, theta, &FK));
    }

    #[test]
    fn self_metrics((a, _) in motion_pair(), theta in 1e-6f64..(1.0 - 1e-6)) {
        prop_assert_eq!(coverage(&a, &a, theta, &FK).unwrap(), 1.0);
        prop_assert_eq!(novelty(&a, &a, theta, &FK).unwrap(), 0.0);
    }

    #[test]
    fn curves_are_non_increasing((a, b) in motion_pair()) {
        let w = window_size(&a, &b);
        let ra = window_embeddings(&a, w, &FK).unwrap();
        let rb = window_embeddings(&b, w, &FK).unwrap();
        let cov = best_similarities(&ra, &rb).unwrap();
        let nov = best_similarities(&rb, &ra).unwrap();
        let grid = theta_grid(0.05);
        for p in grid.windows(2) {
            prop_assert!(coverage_at(&cov, p[1]) <= coverage_at(&cov, p[0]));
            prop_assert!(novelty_at(&nov, p[1]) <= novelty_at(&nov, p[0]));
        }
    }

    #[test]
    fn fid_is_symmetric(seed in any::<u64>(), n in 2usize..12, m in 2usize..12, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian_rows(&mut rng, n, d);
        let y = gaussian_rows(&mut rng, m, d);
        let (f, g) = (fid(&x, &y).unwrap(), fid(&y, &x).unwrap());
        prop_assert!(f >= 0.0);
        prop_assert!((f - g).abs() < 1e-6, "{} vs {}", f, g);
        prop_assert!(fid(&x, &x).unwrap() < 1e-6);
    }
}
