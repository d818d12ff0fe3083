use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AugmentError, AugmentationParams, AugmentationRecord};
use crate::bvh::normalize_scale;
use crate::skeleton::{Motion, Rig};

/// Hard bounds on any per-part scale factor.
pub const SCALE_LIMITS: [f64; 2] = [0.8, 1.2];

fn default_range() -> [f64; 2] {
    SCALE_LIMITS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartGroup {
    pub name: String,
    pub joints: Vec<String>,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
}

/// Body-part groups of one species, authored as data. Each group's bones are
/// scaled by one shared factor; the two groups of a symmetry pair always
/// share their factor, joint for joint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PartGroupConfig {
    pub groups: Vec<PartGroup>,
    #[serde(default)]
    pub symmetry_pairs: Vec<(String, String)>,
}

impl PartGroupConfig {
    fn group(&self, name: &str) -> Result<&PartGroup, AugmentError> {
        self.groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| AugmentError::InvalidParams(format!("unknown part group `{name}`")))
    }

    /// Checks ranges, disjointness, symmetry pairing and (when a rig is given)
    /// that every referenced joint exists.
    pub fn validate(&self, rig: Option<&Rig>) -> Result<(), AugmentError> {
        let mut seen = HashSet::new();
        for g in &self.groups {
            let [lo, hi] = g.range;
            if !(lo <= hi && lo >= SCALE_LIMITS[0] && hi <= SCALE_LIMITS[1]) {
                return Err(AugmentError::ScaleOutOfRange { group: g.name.clone(), lo, hi });
            }
            for joint in &g.joints {
                if !seen.insert(joint.as_str()) {
                    return Err(AugmentError::OverlappingGroups(joint.clone()));
                }
                if let Some(rig) = rig {
                    let j = rig.topology().index_of(joint).ok_or_else(|| AugmentError::UnknownJoint(joint.clone()))?;
                    if rig.topology().parent(j).is_none() {
                        return Err(AugmentError::InvalidParams(format!("root `{joint}` has no bone to scale")));
                    }
                }
            }
        }
        let mut paired = HashSet::new();
        for (a, b) in &self.symmetry_pairs {
            let (ga, gb) = (self.group(a)?, self.group(b)?);
            if ga.joints.len() != gb.joints.len() || ga.range != gb.range || a == b {
                return Err(AugmentError::SymmetryMismatch(a.clone(), b.clone()));
            }
            if !paired.insert(a.as_str()) || !paired.insert(b.as_str()) {
                return Err(AugmentError::SymmetryMismatch(a.clone(), b.clone()));
            }
        }
        Ok(())
    }

    /// Draws one factor per group; mirrored groups copy their partner's draw.
    pub fn draw_factors<R: Rng + ?Sized>(&self, rng: &mut R) -> BTreeMap<String, f64> {
        let mut factors = BTreeMap::new();
        for g in &self.groups {
            let mirror = self.symmetry_pairs.iter().find_map(|(a, b)| {
                if *b == g.name {
                    Some(a)
                } else if *a == g.name {
                    Some(b)
                } else {
                    None
                }
            });
            if let Some(f) = mirror.and_then(|m| factors.get(m)).copied() {
                factors.insert(g.name.clone(), f);
                continue;
            }
            let [lo, hi] = g.range;
            let f = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            factors.insert(g.name.clone(), f);
        }
        factors
    }
}

/// Scales each part group's bones by its drawn factor. Rotations are kept,
/// so bone directions follow the source motion exactly.
pub fn scale_bone_lengths(
    motion: &Motion,
    config: &PartGroupConfig,
    renormalize: bool,
    seed: u64,
) -> Result<(Motion, AugmentationRecord), AugmentError> {
    config.validate(Some(motion.rig()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group_factors = config.draw_factors(&mut rng);
    let mut joint_scales = BTreeMap::new();
    for g in &config.groups {
        for joint in &g.joints {
            joint_scales.insert(joint.clone(), group_factors[&g.name]);
        }
    }
    let params = AugmentationParams::BoneLength {
        group_factors,
        joint_scales,
        renormalize,
    };
    let out = apply_bone_scales(motion, &params)?;
    Ok((out, AugmentationRecord { seed, params }))
}

pub(super) fn apply_bone_scales(motion: &Motion, params: &AugmentationParams) -> Result<Motion, AugmentError> {
    let AugmentationParams::BoneLength { joint_scales, renormalize, .. } = params else {
        unreachable!("caller matched the kind");
    };
    let rig = motion.rig();
    let mut offsets = rig.rest_offsets().to_vec();
    for (name, &s) in joint_scales {
        if !(SCALE_LIMITS[0]..=SCALE_LIMITS[1]).contains(&s) {
            return Err(AugmentError::ScaleOutOfRange { group: name.clone(), lo: s, hi: s });
        }
        let j = rig.topology().index_of(name).ok_or_else(|| AugmentError::UnknownJoint(name.clone()))?;
        offsets[j] *= s;
    }
    let mut scaled = Rig::new(rig.topology().clone(), offsets)?;
    if *renormalize {
        scaled = normalize_scale(&scaled)?.0;
    }
    Ok(Motion::new(scaled, motion.rotations().to_vec(), motion.frame_time())?)
}
