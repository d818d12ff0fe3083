//! Rig augmentation: bone-length scaling, joint removal and subdivision, and
//! rest-pose resetting, each followed by retargeting so the augmented rig
//! reproduces the source motion.
//!
//! Every augmentation is a named [`Augmentation`] strategy. An
//! [`AugmentationRegistry`] maps names to factories, and an
//! [`AugmentationPipeline`] built from a JSON/TOML policy applies the
//! selected strategies in the fixed order bone length, joint count, rest
//! pose.

mod bone_length;
mod joint_count;
mod rest_pose;
pub mod retarget;

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::BvhError;
use crate::skeleton::{Motion, RigError, TopologyError, DEFAULT_MAX_JOINTS};

pub use bone_length::{scale_bone_lengths, PartGroup, PartGroupConfig, SCALE_LIMITS};
pub use joint_count::{is_removable, removal_candidates, remove_joints, subdivide_joints};
pub use rest_pose::reset_rest_pose;
pub use retarget::{retarget_to_rig, RetargetReport, TargetPositions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("scale range [{lo}, {hi}] of `{group}` is outside the allowed bounds")]
    ScaleOutOfRange { group: String, lo: f64, hi: f64 },
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("joint `{0}` is the root or has several children and cannot be removed")]
    NotRemovable(String),
    #[error("augmented rig would have {count} joints, limit is {max}")]
    JointBudgetExceeded { count: usize, max: usize },
    #[error("frame {index} is out of range for a {frames}-frame motion")]
    FrameOutOfRange { index: usize, frames: usize },
    #[error("joint `{0}` belongs to more than one part group")]
    OverlappingGroups(String),
    #[error("part groups `{0}` and `{1}` cannot mirror each other")]
    SymmetryMismatch(String, String),
    #[error("unknown augmentation `{0}`")]
    UnknownAugmentation(String),
    #[error("invalid augmentation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Bvh(#[from] BvhError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    BoneLength,
    JointRemove,
    JointSubdivide,
    RestPoseReset,
}

/// Everything needed to replay one augmentation without the RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationParams {
    BoneLength {
        group_factors: BTreeMap<String, f64>,
        joint_scales: BTreeMap<String, f64>,
        renormalize: bool,
    },
    JointRemove {
        removed: Vec<String>,
    },
    JointSubdivide {
        targets: Vec<String>,
        parts_per_bone: usize,
    },
    RestPoseReset {
        frame_index: usize,
    },
}

/// Provenance of one applied augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    #[serde(flatten)]
    pub params: AugmentationParams,
    pub seed: u64,
}

impl AugmentationRecord {
    pub fn kind(&self) -> AugmentationKind {
        match self.params {
            AugmentationParams::BoneLength { .. } => AugmentationKind::BoneLength,
            AugmentationParams::JointRemove { .. } => AugmentationKind::JointRemove,
            AugmentationParams::JointSubdivide { .. } => AugmentationKind::JointSubdivide,
            AugmentationParams::RestPoseReset { .. } => AugmentationKind::RestPoseReset,
        }
    }

    /// Re-applies this record to `motion`.
    pub fn replay(&self, motion: &Motion, max_joints: usize) -> Result<Motion, AugmentError> {
        match &self.params {
            p @ AugmentationParams::BoneLength { .. } => bone_length::apply_bone_scales(motion, p),
            AugmentationParams::JointRemove { removed } => joint_count::apply_removal(motion, removed),
            AugmentationParams::JointSubdivide { targets, parts_per_bone } => {
                joint_count::apply_subdivision(motion, targets, *parts_per_bone, max_joints)
            }
            AugmentationParams::RestPoseReset { frame_index } => rest_pose::apply_reset(motion, *frame_index),
        }
    }
}

/// Re-applies a chain of records in order.
pub fn replay(motion: &Motion, records: &[AugmentationRecord], max_joints: usize) -> Result<Motion, AugmentError> {
    records
        .iter()
        .try_fold(motion.clone(), |m, r| r.replay(&m, max_joints))
}

/// Per-motion information an augmentation may consult.
#[derive(Debug, Clone, Copy, Default)]
pub struct AugmentContext<'a> {
    pub species: &'a str,
}

/// A rig augmentation strategy.
pub trait Augmentation: Send + Sync {
    fn name(&self) -> &str;

    /// Position in the pipeline; lower ranks run first.
    fn rank(&self) -> AugmentationKind;

    /// Applies the augmentation with randomness drawn from `seed`. Returns
    /// `Ok(None)` when the motion offers nothing to augment (no candidate
    /// joints, no part groups for the species, ...).
    fn augment(
        &self,
        motion: &Motion,
        ctx: &AugmentContext<'_>,
        seed: u64,
    ) -> Result<Option<(Motion, AugmentationRecord)>, AugmentError>;
}

fn from_params<T: for<'de> Deserialize<'de>>(name: &str, params: &serde_json::Value) -> Result<T, AugmentError> {
    let value = if params.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_json::from_value(value).map_err(|e| AugmentError::InvalidParams(format!("{name}: {e}")))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoneLengthParams {
    pub renormalize: bool,
    /// Used for every motion whose species has no dedicated entry.
    pub part_groups: Option<PartGroupConfig>,
    pub by_species: BTreeMap<String, PartGroupConfig>,
}

pub struct BoneLengthAugmentation(pub BoneLengthParams);

impl Augmentation for BoneLengthAugmentation {
    fn name(&self) -> &str {
        "bone_length"
    }

    fn rank(&self) -> AugmentationKind {
        AugmentationKind::BoneLength
    }

    fn augment(
        &self,
        motion: &Motion,
        ctx: &AugmentContext<'_>,
        seed: u64,
    ) -> Result<Option<(Motion, AugmentationRecord)>, AugmentError> {
        let config = self.0.by_species.get(ctx.species).or(self.0.part_groups.as_ref());
        match config {
            Some(c) if !c.groups.is_empty() => scale_bone_lengths(motion, c, self.0.renormalize, seed).map(Some),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointRemoveParams {
    /// Rotation-spread threshold under which a pass-through joint counts as
    /// a redundant spine/root bone.
    pub variance_threshold: f64,
    pub max_removed: usize,
    /// Never shrink a rig below this many joints.
    pub min_joints: usize,
}

impl Default for JointRemoveParams {
    fn default() -> Self {
        Self {
            variance_threshold: 1e-3,
            max_removed: 3,
            min_joints: 2,
        }
    }
}

pub struct JointRemoveAugmentation(pub JointRemoveParams);

impl Augmentation for JointRemoveAugmentation {
    fn name(&self) -> &str {
        "joint_remove"
    }

    fn rank(&self) -> AugmentationKind {
        AugmentationKind::JointRemove
    }

    fn augment(
        &self,
        motion: &Motion,
        _ctx: &AugmentContext<'_>,
        seed: u64,
    ) -> Result<Option<(Motion, AugmentationRecord)>, AugmentError> {
        let candidates = removal_candidates(motion, self.0.variance_threshold);
        let budget = motion.joints().saturating_sub(self.0.min_joints).min(self.0.max_removed);
        if candidates.is_empty() || budget == 0 {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.random_range(1..=budget.min(candidates.len()));
        let chosen = choose(&mut rng, &candidates, count);
        remove_joints(motion, &chosen, seed).map(Some)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointSubdivideParams {
    /// Inclusive range of segments per split bone.
    pub parts_per_bone: [usize; 2],
    pub max_bones: usize,
}

impl Default for JointSubdivideParams {
    fn default() -> Self {
        Self {
            parts_per_bone: [2, 3],
            max_bones: 3,
        }
    }
}

pub struct JointSubdivideAugmentation {
    pub params: JointSubdivideParams,
    pub max_joints: usize,
}

impl Augmentation for JointSubdivideAugmentation {
    fn name(&self) -> &str {
        "joint_subdivide"
    }

    fn rank(&self) -> AugmentationKind {
        AugmentationKind::JointSubdivide
    }

    fn augment(
        &self,
        motion: &Motion,
        _ctx: &AugmentContext<'_>,
        seed: u64,
    ) -> Result<Option<(Motion, AugmentationRecord)>, AugmentError> {
        let [lo, hi] = self.params.parts_per_bone;
        if lo < 2 || hi < lo {
            return Err(AugmentError::InvalidParams(format!("parts_per_bone range [{lo}, {hi}]")));
        }
        let topo = motion.rig().topology();
        let candidates: Vec<String> = (0..motion.joints())
            .filter(|&j| topo.parent(j).is_some() && motion.rig().rest_offsets()[j].norm() > 1e-9)
            .map(|j| topo.name(j).to_string())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts = rng.random_range(lo..=hi);
        let room = self.max_joints.saturating_sub(motion.joints()) / (parts - 1);
        let budget = room.min(self.params.max_bones).min(candidates.len());
        if budget == 0 {
            return Ok(None);
        }
        let count = rng.random_range(1..=budget);
        let chosen = choose(&mut rng, &candidates, count);
        subdivide_joints(motion, &chosen, parts, self.max_joints, seed).map(Some)
    }
}

pub struct RestPoseResetAugmentation;

impl Augmentation for RestPoseResetAugmentation {
    fn name(&self) -> &str {
        "rest_pose_reset"
    }

    fn rank(&self) -> AugmentationKind {
        AugmentationKind::RestPoseReset
    }

    fn augment(
        &self,
        motion: &Motion,
        _ctx: &AugmentContext<'_>,
        seed: u64,
    ) -> Result<Option<(Motion, AugmentationRecord)>, AugmentError> {
        reset_rest_pose(motion, None, seed).map(Some)
    }
}

/// `count` distinct items in their original order.
fn choose<R: Rng>(rng: &mut R, items: &[String], count: usize) -> Vec<String> {
    let mut idx: Vec<usize> = rand::seq::index::sample(rng, items.len(), count).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

/// Builds an augmentation from its JSON parameters.
pub type AugmentationFactory = fn(&serde_json::Value, usize) -> Result<Box<dyn Augmentation>, AugmentError>;

/// Name → factory table of available augmentations.
pub struct AugmentationRegistry {
    factories: BTreeMap<String, AugmentationFactory>,
}

impl AugmentationRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registry with the four built-in strategies.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("bone_length", |p, _| {
            Ok(Box::new(BoneLengthAugmentation(from_params("bone_length", p)?)))
        });
        r.register("joint_remove", |p, _| {
            Ok(Box::new(JointRemoveAugmentation(from_params("joint_remove", p)?)))
        });
        r.register("joint_subdivide", |p, max_joints| {
            Ok(Box::new(JointSubdivideAugmentation {
                params: from_params("joint_subdivide", p)?,
                max_joints,
            }))
        });
        r.register("rest_pose_reset", |_, _| Ok(Box::new(RestPoseResetAugmentation)));
        r
    }

    pub fn register(&mut self, name: &str, factory: AugmentationFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, params: &serde_json::Value, max_joints: usize) -> Result<Box<dyn Augmentation>, AugmentError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| AugmentError::UnknownAugmentation(name.to_string()))?;
        factory(params, max_joints)
    }
}

impl Default for AugmentationRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

fn default_probability() -> f64 {
    1.0
}

fn default_max_joints() -> usize {
    DEFAULT_MAX_JOINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePolicy {
    pub name: String,
    #[serde(default = "default_probability")]
    pub probability: f64,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// Which augmentations to use, how often, and with what parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    #[serde(default = "default_max_joints")]
    pub max_joints: usize,
    pub stages: Vec<StagePolicy>,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        let stage = |name: &str, probability| StagePolicy {
            name: name.into(),
            probability,
            params: serde_json::Value::Null,
        };
        Self {
            max_joints: DEFAULT_MAX_JOINTS,
            stages: vec![
                stage("bone_length", 0.5),
                stage("joint_remove", 0.3),
                stage("joint_subdivide", 0.3),
                stage("rest_pose_reset", 0.5),
            ],
        }
    }
}

/// splitmix64 finalizer; spreads (seed, index) pairs over independent streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One augmented copy of a motion and the records that produced it.
pub type Variant = (Motion, Vec<AugmentationRecord>);

/// Ordered, probability-gated augmentation stages.
pub struct AugmentationPipeline {
    stages: Vec<(f64, Box<dyn Augmentation>)>,
    max_joints: usize,
}

impl AugmentationPipeline {
    pub fn from_policy(policy: &AugmentationPolicy, registry: &AugmentationRegistry) -> Result<Self, AugmentError> {
        let mut stages = Vec::new();
        for s in &policy.stages {
            if !(0.0..=1.0).contains(&s.probability) {
                return Err(AugmentError::InvalidParams(format!(
                    "probability {} of `{}` is not in [0, 1]",
                    s.probability, s.name
                )));
            }
            stages.push((s.probability, registry.create(&s.name, &s.params, policy.max_joints)?));
        }
        stages.sort_by_key(|(_, a)| a.rank());
        Ok(Self {
            stages,
            max_joints: policy.max_joints,
        })
    }

    pub fn stage_names(&self) -> Vec<&str> {
        self.stages.iter().map(|(_, a)| a.name()).collect()
    }

    pub fn max_joints(&self) -> usize {
        self.max_joints
    }

    /// One augmented variant. Each stage fires with its probability; if none
    /// fires, the first applicable stage is forced so the variant differs
    /// from the source.
    pub fn variant(&self, motion: &Motion, ctx: &AugmentContext<'_>, seed: u64) -> Result<Variant, AugmentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut current = motion.clone();
        let mut records = Vec::new();
        for (p, stage) in &self.stages {
            let fire = rng.random::<f64>() < *p;
            let stage_seed = rng.next_u64();
            if !fire {
                continue;
            }
            if let Some((m, r)) = stage.augment(&current, ctx, stage_seed)? {
                current = m;
                records.push(r);
            }
        }
        if records.is_empty() {
            for (i, (_, stage)) in self.stages.iter().enumerate() {
                if let Some((m, r)) = stage.augment(&current, ctx, derive_seed(seed, i as u64))? {
                    current = m;
                    records.push(r);
                    break;
                }
            }
        }
        current.rig().topology().validate(self.max_joints)?;
        Ok((current, records))
    }

    /// The source motion followed by `variants` augmented copies.
    pub fn expand(&self, motion: &Motion, ctx: &AugmentContext<'_>, variants: usize, seed: u64) -> Result<Vec<Variant>, AugmentError> {
        let mut out = Vec::with_capacity(variants + 1);
        out.push((motion.clone(), Vec::new()));
        for v in 0..variants {
            out.push(self.variant(motion, ctx, derive_seed(seed, v as u64))?);
        }
        Ok(out)
    }
}
