//! BVH reading and writing, rest-pose normalization and the dataset manifest.

mod manifest;
mod parse;
mod preprocess;
mod write;

use thiserror::Error;

use crate::skeleton::rotation::Axis;
use crate::skeleton::{Motion, Rig, RigError, TopologyError};

pub use manifest::{Captions, DatasetManifest, ManifestEntry, ManifestError};
pub use parse::{parse_bvh, END_SITE_SUFFIX};
pub use preprocess::{normalize_scale, preprocess, PreprocessConfig, SignedAxis};
pub use write::write_bvh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BvhError {
    #[error("line {line}: {message} (found `{token}`)")]
    Syntax {
        line: usize,
        token: String,
        message: String,
    },
    #[error("line {line}: unsupported channel `{channel}`")]
    UnsupportedChannel { line: usize, channel: String },
    #[error("motion section has no frames")]
    EmptyMotion,
    #[error("rest pose bounding box is degenerate")]
    DegenerateBoundingBox,
    #[error("forward and up axes must be orthogonal ({forward} / {up})")]
    InvalidAxes { forward: SignedAxis, up: SignedAxis },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Rig(#[from] RigError),
}

impl BvhError {
    /// Source line of the error, when it has one.
    pub fn line(&self) -> Option<usize> {
        match self {
            BvhError::Syntax { line, .. } | BvhError::UnsupportedChannel { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    XPosition,
    YPosition,
    ZPosition,
    XRotation,
    YRotation,
    ZRotation,
}

impl Channel {
    pub fn axis_of_rotation(self) -> Option<Axis> {
        match self {
            Channel::XRotation => Some(Axis::X),
            Channel::YRotation => Some(Axis::Y),
            Channel::ZRotation => Some(Axis::Z),
            _ => None,
        }
    }

    pub fn axis_of_position(self) -> Option<Axis> {
        match self {
            Channel::XPosition => Some(Axis::X),
            Channel::YPosition => Some(Axis::Y),
            Channel::ZPosition => Some(Axis::Z),
            _ => None,
        }
    }

    pub fn bvh_name(self) -> &'static str {
        match self {
            Channel::XPosition => "Xposition",
            Channel::YPosition => "Yposition",
            Channel::ZPosition => "Zposition",
            Channel::XRotation => "Xrotation",
            Channel::YRotation => "Yrotation",
            Channel::ZRotation => "Zrotation",
        }
    }
}

/// A parsed BVH file: the motion (which owns the rig) plus the channel list
/// each joint declared in the source. Joints with an empty channel list are
/// End Sites.
#[derive(Debug, Clone, PartialEq)]
pub struct BvhDocument {
    pub channel_layout: Vec<Vec<Channel>>,
    pub motion: Motion,
}

impl BvhDocument {
    /// Wraps a motion, declaring ZXY rotation channels on every joint except
    /// zero-rotation leaves named like End Sites.
    pub fn from_motion(motion: Motion) -> Self {
        let topo = motion.rig().topology();
        let layout = (0..motion.joints())
            .map(|j| {
                let end_site = topo.is_leaf(j)
                    && topo.parent(j).is_some()
                    && topo.name(j).ends_with(END_SITE_SUFFIX)
                    && (0..motion.frames()).all(|f| motion.rotation(f, j) == [0.0; 3]);
                if end_site {
                    Vec::new()
                } else {
                    vec![Channel::ZRotation, Channel::XRotation, Channel::YRotation]
                }
            })
            .collect();
        Self {
            channel_layout: layout,
            motion,
        }
    }

    pub fn rig(&self) -> &Rig {
        self.motion.rig()
    }

    pub fn frame_time(&self) -> f64 {
        self.motion.frame_time()
    }
}
