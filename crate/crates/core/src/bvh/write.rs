use std::fmt::Write as _;

use super::{BvhDocument, BvhError};

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push('\t');
    }
}

/// Emits BVH text with LF line endings and six-decimal values. Every joint
/// except End Sites carries `Zrotation Xrotation Yrotation` channels.
pub fn write_bvh(doc: &BvhDocument) -> Result<String, BvhError> {
    let motion = &doc.motion;
    if motion.frames() == 0 {
        return Err(BvhError::EmptyMotion);
    }
    let rig = motion.rig();
    let topo = rig.topology();
    let is_end_site = |j: usize| {
        topo.parent(j).is_some()
            && topo.is_leaf(j)
            && doc.channel_layout.get(j).is_some_and(|c| c.is_empty())
    };

    let mut out = String::from("HIERARCHY\n");
    // explicit stack of (joint, depth, closing?) keeps deep rigs off the call stack
    let mut stack = vec![(topo.root(), 0usize, false)];
    while let Some((j, depth, closing)) = stack.pop() {
        if closing {
            indent(&mut out, depth);
            out.push_str("}\n");
            continue;
        }
        let o = rig.rest_offsets()[j];
        indent(&mut out, depth);
        if is_end_site(j) {
            out.push_str("End Site\n");
        } else if topo.parent(j).is_none() {
            let _ = writeln!(out, "ROOT {}", topo.name(j));
        } else {
            let _ = writeln!(out, "JOINT {}", topo.name(j));
        }
        indent(&mut out, depth);
        out.push_str("{\n");
        indent(&mut out, depth + 1);
        let _ = writeln!(out, "OFFSET {:.6} {:.6} {:.6}", o.x, o.y, o.z);
        if !is_end_site(j) {
            indent(&mut out, depth + 1);
            out.push_str("CHANNELS 3 Zrotation Xrotation Yrotation\n");
        }
        stack.push((j, depth, true));
        for &c in topo.children(j).iter().rev() {
            stack.push((c, depth + 1, false));
        }
    }

    let order: Vec<usize> = topo
        .traversal()
        .iter()
        .copied()
        .filter(|&j| !is_end_site(j))
        .collect();
    out.push_str("MOTION\n");
    let _ = writeln!(out, "Frames: {}", motion.frames());
    let _ = writeln!(out, "Frame Time: {:.6}", motion.frame_time());
    for f in 0..motion.frames() {
        let mut first = true;
        for &j in &order {
            for v in motion.rotation(f, j) {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:.6}");
            }
        }
        out.push('\n');
    }
    Ok(out)
}
