use log::warn;
use nalgebra::Vector3;

use super::{BvhDocument, BvhError, Channel};
use crate::skeleton::rotation::{compose_channels, matrix_to_zxy, Axis, ZXY};
use crate::skeleton::{Motion, Rig, SkeletonTopology};

/// Suffix given to joints created from `End Site` blocks.
pub const END_SITE_SUFFIX: &str = "_End";

const MAX_CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    line: usize,
}

struct Lexer<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut last_line = 1;
        for (i, line) in text.lines().enumerate() {
            last_line = i + 1;
            for word in line.split_whitespace() {
                // braces glued to names ("Hips{") are split off
                let mut rest = word;
                while !rest.is_empty() {
                    match rest.find(['{', '}']) {
                        Some(0) => {
                            tokens.push(Token { text: &rest[..1], line: i + 1 });
                            rest = &rest[1..];
                        }
                        Some(k) => {
                            tokens.push(Token { text: &rest[..k], line: i + 1 });
                            rest = &rest[k..];
                        }
                        None => {
                            tokens.push(Token { text: rest, line: i + 1 });
                            rest = "";
                        }
                    }
                }
            }
        }
        Self { tokens, pos: 0, last_line }
    }

    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self, expected: &str) -> Result<Token<'a>, BvhError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(*t)
            }
            None => Err(BvhError::Syntax {
                line: self.last_line,
                token: "<eof>".into(),
                message: format!("expected {expected}"),
            }),
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<Token<'a>, BvhError> {
        let t = self.next(keyword)?;
        if t.text.eq_ignore_ascii_case(keyword) {
            Ok(t)
        } else {
            Err(syntax(t, &format!("expected `{keyword}`")))
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, BvhError> {
        let t = self.next(what)?;
        match t.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(syntax(t, &format!("expected {what}"))),
        }
    }

    fn count(&mut self, what: &str) -> Result<usize, BvhError> {
        let t = self.next(what)?;
        t.text
            .parse::<usize>()
            .map_err(|_| syntax(t, &format!("expected {what}")))
    }

    /// Remaining tokens on the line of `first`, joined by single spaces.
    fn rest_of_line(&mut self, line: usize) -> String {
        let mut parts = Vec::new();
        while let Some(t) = self.peek() {
            if t.line != line || t.text == "{" {
                break;
            }
            parts.push(t.text);
            self.pos += 1;
        }
        parts.join(" ")
    }
}

fn syntax(t: Token<'_>, message: &str) -> BvhError {
    BvhError::Syntax {
        line: t.line,
        token: t.text.chars().take(64).collect(),
        message: message.to_string(),
    }
}

struct RawJoint {
    name: String,
    parent: Option<usize>,
    offset: Vector3<f64>,
    channels: Vec<Channel>,
}

fn parse_channel(t: Token<'_>) -> Result<Channel, BvhError> {
    let channel = match t.text.to_ascii_lowercase().as_str() {
        "xposition" => Channel::XPosition,
        "yposition" => Channel::YPosition,
        "zposition" => Channel::ZPosition,
        "xrotation" => Channel::XRotation,
        "yrotation" => Channel::YRotation,
        "zrotation" => Channel::ZRotation,
        _ => {
            return Err(BvhError::UnsupportedChannel {
                line: t.line,
                channel: t.text.chars().take(64).collect(),
            })
        }
    };
    Ok(channel)
}

fn unique_name(joints: &[RawJoint], base: String) -> String {
    if !joints.iter().any(|j| j.name == base) {
        return base;
    }
    (1..)
        .map(|i| format!("{base}{i}"))
        .find(|candidate| !joints.iter().any(|j| &j.name == candidate))
        .expect("unbounded search")
}

fn parse_hierarchy(lex: &mut Lexer<'_>) -> Result<Vec<RawJoint>, BvhError> {
    lex.expect("HIERARCHY")?;
    let mut joints: Vec<RawJoint> = Vec::new();
    // stack of open joint blocks; `None` marks an End Site block
    let mut stack: Vec<Option<usize>> = Vec::new();
    let mut seen_root = false;
    loop {
        let t = lex.next("joint declaration")?;
        let keyword = t.text.to_ascii_uppercase();
        match keyword.as_str() {
            "ROOT" | "JOINT" => {
                if keyword == "ROOT" && (seen_root || !stack.is_empty()) {
                    return Err(syntax(t, "only one ROOT is supported"));
                }
                if keyword == "JOINT" && !matches!(stack.last(), Some(Some(_))) {
                    return Err(syntax(t, "JOINT outside of a joint block"));
                }
                seen_root = true;
                let name = lex.rest_of_line(t.line);
                if name.is_empty() {
                    return Err(syntax(t, "missing joint name"));
                }
                lex.expect("{")?;
                let parent = stack.last().copied().flatten();
                lex.expect("OFFSET")?;
                let offset = Vector3::new(lex.number("offset")?, lex.number("offset")?, lex.number("offset")?);
                let mut channels = Vec::new();
                if lex.peek().is_some_and(|p| p.text.eq_ignore_ascii_case("CHANNELS")) {
                    let ct = lex.next("CHANNELS")?;
                    let n = lex.count("channel count")?;
                    if n > MAX_CHANNELS {
                        return Err(syntax(ct, "too many channels"));
                    }
                    for _ in 0..n {
                        let c = parse_channel(lex.next("channel name")?)?;
                        if channels.contains(&c) {
                            return Err(BvhError::UnsupportedChannel {
                                line: ct.line,
                                channel: format!("duplicate {c:?}"),
                            });
                        }
                        channels.push(c);
                    }
                }
                joints.push(RawJoint { name, parent, offset, channels });
                stack.push(Some(joints.len() - 1));
            }
            "END" => {
                lex.expect("Site")?;
                let parent = match stack.last() {
                    Some(Some(p)) => *p,
                    _ => return Err(syntax(t, "End Site outside of a joint block")),
                };
                lex.expect("{")?;
                lex.expect("OFFSET")?;
                let offset = Vector3::new(lex.number("offset")?, lex.number("offset")?, lex.number("offset")?);
                let name = unique_name(&joints, format!("{}{END_SITE_SUFFIX}", joints[parent].name));
                joints.push(RawJoint {
                    name,
                    parent: Some(parent),
                    offset,
                    channels: Vec::new(),
                });
                stack.push(None);
            }
            "}" => {
                if stack.pop().is_none() {
                    return Err(syntax(t, "unbalanced `}`"));
                }
                if stack.is_empty() {
                    break;
                }
            }
            _ => return Err(syntax(t, "expected ROOT, JOINT, End Site or `}`")),
        }
    }
    Ok(joints)
}

/// Parses BVH text. Rotations are converted to ZXY order, position channels
/// are dropped and End Sites become zero-rotation leaf joints.
pub fn parse_bvh(text: &str) -> Result<BvhDocument, BvhError> {
    let mut lex = Lexer::new(text);
    let joints = parse_hierarchy(&mut lex)?;

    lex.expect("MOTION")?;
    let frames_tok = lex.next("Frames:")?;
    let frames = if frames_tok.text.eq_ignore_ascii_case("Frames:") {
        lex.count("frame count")?
    } else if frames_tok.text.eq_ignore_ascii_case("Frames") {
        lex.expect(":")?;
        lex.count("frame count")?
    } else {
        return Err(syntax(frames_tok, "expected `Frames:`"));
    };
    lex.expect("Frame")?;
    let time_tok = lex.next("Time:")?;
    if time_tok.text.eq_ignore_ascii_case("Time") {
        lex.expect(":")?;
    } else if !time_tok.text.eq_ignore_ascii_case("Time:") {
        return Err(syntax(time_tok, "expected `Time:`"));
    }
    let frame_time = lex.number("frame time")?;
    if frame_time <= 0.0 {
        return Err(syntax(time_tok, "frame time must be positive"));
    }
    if frames == 0 {
        return Err(BvhError::EmptyMotion);
    }

    let root_positions = joints[0].channels.iter().any(|c| c.axis_of_position().is_some());
    if root_positions {
        warn!("root translation channels are dropped; the root stays at its rest offset");
    }
    for j in joints.iter().skip(1) {
        if j.channels.iter().any(|c| c.axis_of_position().is_some()) {
            warn!("position channels of joint `{}` are discarded", j.name);
        }
    }

    let per_frame: usize = joints.iter().map(|j| j.channels.len()).sum();
    let native: Vec<bool> = joints
        .iter()
        .map(|j| {
            let rot: Vec<Axis> = j.channels.iter().filter_map(|c| c.axis_of_rotation()).collect();
            rot == ZXY
        })
        .collect();

    let mut rotations = Vec::new();
    let mut values = vec![0.0; per_frame];
    for _ in 0..frames {
        for v in values.iter_mut() {
            *v = lex.number("channel value")?;
        }
        let mut cursor = 0;
        for (j, joint) in joints.iter().enumerate() {
            let vals = &values[cursor..cursor + joint.channels.len()];
            cursor += joint.channels.len();
            let mut order = Vec::with_capacity(3);
            let mut angles = Vec::with_capacity(3);
            for (c, v) in joint.channels.iter().zip(vals) {
                if let Some(axis) = c.axis_of_rotation() {
                    order.push(axis);
                    angles.push(*v);
                }
            }
            let zxy = if native[j] {
                [angles[0], angles[1], angles[2]]
            } else if order.is_empty() {
                [0.0; 3]
            } else {
                matrix_to_zxy(&compose_channels(&order, &angles))
            };
            rotations.push(zxy);
        }
    }
    if let Some(t) = lex.peek() {
        return Err(syntax(t, "unexpected data after last frame"));
    }

    let names = joints.iter().map(|j| j.name.clone()).collect();
    let parents = joints.iter().map(|j| j.parent).collect();
    let topology = SkeletonTopology::new(names, parents)?;
    let rig = Rig::new(topology, joints.iter().map(|j| j.offset).collect())?;
    let motion = Motion::new(rig, rotations, frame_time)?;
    Ok(BvhDocument {
        channel_layout: joints.into_iter().map(|j| j.channels).collect(),
        motion,
    })
}
