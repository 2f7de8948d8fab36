//! Acclaim skeleton file (`.asf`) parser.
//!
//! Recognized sections: `:version`, `:name`, `:units`, `:documentation`,
//! `:root`, `:bonedata` and `:hierarchy`. Angles are converted to radians and
//! lengths to meters here; nothing downstream sees file units.

use std::collections::{HashMap, HashSet, VecDeque};

use super::{Bone, Channel, FileUnits, SkeletonDef, METERS_PER_INCH};
use crate::error::{Error, Result};
use crate::kinematics::Vec3;

pub(crate) const ROOT_NAME: &str = "root";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Units,
    Documentation,
    Root,
    BoneData,
    Hierarchy,
    Ignored,
}

#[derive(Default)]
struct BoneBuilder {
    line: usize,
    name: Option<String>,
    direction: Option<[f64; 3]>,
    length: Option<f64>,
    axis: [f64; 3],
    axis_order: Option<[usize; 3]>,
    dof: Vec<Channel>,
}

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(line, format!("expected a number, found `{tok}`")))
}

fn parse_vec3(toks: &[&str], line: usize) -> Result<[f64; 3]> {
    if toks.len() < 3 {
        return Err(syntax(line, "expected three numbers"));
    }
    Ok([
        parse_f64(toks[0], line)?,
        parse_f64(toks[1], line)?,
        parse_f64(toks[2], line)?,
    ])
}

pub(crate) fn parse_axis_order(tok: &str, line: usize) -> Result<[usize; 3]> {
    let chars: Vec<char> = tok.to_ascii_uppercase().chars().collect();
    let mut order = [0usize; 3];
    if chars.len() != 3 {
        return Err(syntax(line, format!("bad axis order `{tok}`")));
    }
    for (slot, c) in order.iter_mut().zip(&chars) {
        *slot = match c {
            'X' => 0,
            'Y' => 1,
            'Z' => 2,
            _ => return Err(syntax(line, format!("bad axis order `{tok}`"))),
        };
    }
    let mut seen = order;
    seen.sort_unstable();
    if seen != [0, 1, 2] {
        return Err(syntax(line, format!("bad axis order `{tok}`")));
    }
    Ok(order)
}

/// Parses a CMU-style skeleton definition.
pub fn parse_skeleton(text: &str) -> Result<SkeletonDef> {
    let mut section = Section::Preamble;
    let mut units = FileUnits::default();
    let mut name = String::from("skeleton");
    let mut root_order: Vec<Channel> = vec![
        Channel::Tx,
        Channel::Ty,
        Channel::Tz,
        Channel::Rx,
        Channel::Ry,
        Channel::Rz,
    ];
    let mut root_axis_order = [0usize, 1, 2];
    let mut root_position = [0.0; 3];
    let mut root_orientation = [0.0; 3];
    let mut builders: Vec<BoneBuilder> = Vec::new();
    let mut current: Option<BoneBuilder> = None;
    let mut limits_open = false;
    // (line, parent, children)
    let mut hierarchy: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut in_hierarchy_block = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let key = toks[0];

        if let Some(sec) = key.strip_prefix(':') {
            if current.is_some() {
                return Err(syntax(line_no, "unterminated bone block"));
            }
            limits_open = false;
            section = match sec.to_ascii_lowercase().as_str() {
                "version" => Section::Preamble,
                "name" => {
                    if let Some(n) = toks.get(1) {
                        name = n.to_string();
                    }
                    Section::Preamble
                }
                "units" => Section::Units,
                "documentation" => Section::Documentation,
                "root" => Section::Root,
                "bonedata" => Section::BoneData,
                "hierarchy" => Section::Hierarchy,
                _ => Section::Ignored,
            };
            continue;
        }

        match section {
            Section::Preamble => return Err(syntax(line_no, format!("unexpected `{key}` outside a section"))),
            Section::Documentation | Section::Ignored => {}
            Section::Units => match key.to_ascii_lowercase().as_str() {
                "length" => {
                    let v = parse_f64(toks.get(1).copied().unwrap_or(""), line_no)?;
                    if v <= 0.0 {
                        return Err(syntax(line_no, "length unit must be positive"));
                    }
                    units.length_to_m = METERS_PER_INCH / v;
                }
                "angle" => {
                    units.angle_to_rad = match toks.get(1).map(|s| s.to_ascii_lowercase()) {
                        Some(s) if s.starts_with("deg") => std::f64::consts::PI / 180.0,
                        Some(s) if s.starts_with("rad") => 1.0,
                        _ => return Err(syntax(line_no, "angle unit must be deg or rad")),
                    };
                }
                "mass" => {}
                other => return Err(syntax(line_no, format!("unknown unit `{other}`"))),
            },
            Section::Root => match key.to_ascii_lowercase().as_str() {
                "order" => {
                    root_order = toks[1..]
                        .iter()
                        .map(|t| {
                            t.parse::<Channel>().map_err(|_| Error::UnknownChannel {
                                bone: ROOT_NAME.into(),
                                channel: t.to_string(),
                            })
                        })
                        .collect::<Result<_>>()?;
                }
                "axis" => {
                    root_axis_order = parse_axis_order(toks.get(1).copied().unwrap_or(""), line_no)?
                }
                "position" => root_position = parse_vec3(&toks[1..], line_no)?,
                "orientation" => root_orientation = parse_vec3(&toks[1..], line_no)?,
                other => return Err(syntax(line_no, format!("unknown root field `{other}`"))),
            },
            Section::BoneData => {
                let lower = key.to_ascii_lowercase();
                if limits_open && lower.starts_with('(') {
                    continue;
                }
                limits_open = false;
                match lower.as_str() {
                    "begin" => {
                        if current.is_some() {
                            return Err(syntax(line_no, "nested bone block"));
                        }
                        current = Some(BoneBuilder {
                            line: line_no,
                            ..Default::default()
                        });
                    }
                    "end" => {
                        let b = current
                            .take()
                            .ok_or_else(|| syntax(line_no, "`end` without `begin`"))?;
                        builders.push(b);
                    }
                    _ => {
                        let b = current
                            .as_mut()
                            .ok_or_else(|| syntax(line_no, format!("`{key}` outside a bone block")))?;
                        match lower.as_str() {
                            "id" => {}
                            "name" => {
                                b.name = Some(
                                    toks.get(1)
                                        .ok_or_else(|| syntax(line_no, "missing bone name"))?
                                        .to_string(),
                                )
                            }
                            "direction" => b.direction = Some(parse_vec3(&toks[1..], line_no)?),
                            "length" => {
                                b.length = Some(parse_f64(toks.get(1).copied().unwrap_or(""), line_no)?)
                            }
                            "axis" => {
                                b.axis = parse_vec3(&toks[1..], line_no)?;
                                b.axis_order = Some(parse_axis_order(
                                    toks.get(4).copied().unwrap_or("XYZ"),
                                    line_no,
                                )?);
                            }
                            "dof" => {
                                let bone_name = b.name.clone().unwrap_or_default();
                                b.dof = toks[1..]
                                    .iter()
                                    .map(|t| {
                                        t.parse::<Channel>().map_err(|_| Error::UnknownChannel {
                                            bone: bone_name.clone(),
                                            channel: t.to_string(),
                                        })
                                    })
                                    .collect::<Result<_>>()?;
                            }
                            "limits" => limits_open = true,
                            "bodymass" | "cofmass" => {}
                            other => {
                                return Err(syntax(line_no, format!("unknown bone field `{other}`")))
                            }
                        }
                    }
                }
            }
            Section::Hierarchy => match key.to_ascii_lowercase().as_str() {
                "begin" => in_hierarchy_block = true,
                "end" => in_hierarchy_block = false,
                _ => {
                    if !in_hierarchy_block {
                        return Err(syntax(line_no, "hierarchy entry outside begin/end"));
                    }
                    hierarchy.push((
                        line_no,
                        toks[0].to_string(),
                        toks[1..].iter().map(|s| s.to_string()).collect(),
                    ));
                }
            },
        }
    }
    if current.is_some() {
        return Err(syntax(text.lines().count(), "unterminated bone block"));
    }

    // Build bones in file units, converted below.
    let mut bones: HashMap<String, Bone> = HashMap::new();
    let mut bone_lines: HashMap<String, usize> = HashMap::new();
    for b in builders {
        let name = b.name.ok_or_else(|| syntax(b.line, "bone without a name"))?;
        if name == ROOT_NAME || bones.contains_key(&name) {
            return Err(syntax(b.line, format!("duplicate bone `{name}`")));
        }
        let dir = Vec3::from(b.direction.ok_or_else(|| syntax(b.line, format!("bone `{name}` has no direction")))?);
        let n = dir.norm();
        if !(n > 1e-9) {
            return Err(syntax(b.line, format!("bone `{name}` has a zero direction")));
        }
        let length = b.length.ok_or_else(|| syntax(b.line, format!("bone `{name}` has no length")))?;
        if length < 0.0 {
            return Err(syntax(b.line, format!("bone `{name}` has negative length")));
        }
        let axis = b.axis.map(|a| a * units.angle_to_rad);
        bone_lines.insert(name.clone(), b.line);
        bones.insert(
            name.clone(),
            Bone {
                name,
                parent: None,
                direction: (dir / n).into(),
                length: length * units.length_to_m,
                axis,
                axis_order: b.axis_order.unwrap_or([0, 1, 2]),
                dof: b.dof,
            },
        );
    }

    let mut children: HashMap<String, Vec<String>> = HashMap::new();
    let mut parent_of: HashMap<String, String> = HashMap::new();
    for (line, parent, kids) in &hierarchy {
        if parent != ROOT_NAME && !bones.contains_key(parent) {
            return Err(syntax(*line, format!("unknown bone `{parent}` in hierarchy")));
        }
        for k in kids {
            if !bones.contains_key(k) {
                return Err(syntax(*line, format!("unknown bone `{k}` in hierarchy")));
            }
            if k == parent {
                return Err(Error::CyclicHierarchy(k.clone()));
            }
            if parent_of.insert(k.clone(), parent.clone()).is_some() {
                return Err(syntax(*line, format!("bone `{k}` has two parents")));
            }
            children.entry(parent.clone()).or_default().push(k.clone());
        }
    }

    // Breadth-first from the root gives parents-before-children regardless of
    // the order hierarchy lines were written in.
    let root = Bone {
        name: ROOT_NAME.into(),
        parent: None,
        direction: [0.0, 1.0, 0.0],
        length: 0.0,
        axis: root_orientation.map(|a| a * units.angle_to_rad),
        axis_order: root_axis_order,
        dof: root_order.iter().copied().filter(|c| c.is_rotation()).collect(),
    };
    let mut ordered = vec![root];
    let mut visited: HashSet<String> = HashSet::new();
    let mut queue: VecDeque<String> = VecDeque::from([ROOT_NAME.to_string()]);
    while let Some(p) = queue.pop_front() {
        for k in children.get(&p).into_iter().flatten() {
            if !visited.insert(k.clone()) {
                return Err(Error::CyclicHierarchy(k.clone()));
            }
            let mut b = bones[k].clone();
            b.parent = Some(p.clone());
            ordered.push(b);
            queue.push_back(k.clone());
        }
    }
    if visited.len() != bones.len() {
        // Anything unreachable from the root either sits on a cycle or is
        // detached from the tree.
        let mut missing: Vec<&String> = bones.keys().filter(|k| !visited.contains(*k)).collect();
        missing.sort();
        let first = missing[0];
        let mut cur = first.clone();
        let mut seen = HashSet::new();
        while let Some(p) = parent_of.get(&cur) {
            if !seen.insert(cur.clone()) {
                return Err(Error::CyclicHierarchy(cur));
            }
            cur = p.clone();
        }
        return Err(syntax(
            bone_lines[first.as_str()],
            format!("bone `{first}` is not connected to the root"),
        ));
    }

    let skel = SkeletonDef {
        name,
        bones: ordered,
        root_order,
        root_position: root_position.map(|v| v * units.length_to_m),
        file_units: units,
    };
    skel.validate()?;
    Ok(skel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::RawFrame;
    use crate::kinematics::Quaternion;
    use approx::assert_abs_diff_eq;

    const ROOT_ONLY: &str = "\
:version 1.10
:name tiny
:units
  mass 1.0
  length 1.0
  angle deg
:documentation
  a skeleton with only a root
:root
  order TX TY TZ RX RY RZ
  axis XYZ
  position 0 0 0
  orientation 0 0 0
:bonedata
:hierarchy
  begin
  end
";

    fn chain(hierarchy: &str) -> String {
        // length unit 0.0254 makes file lengths read directly as meters
        format!(
            "\
:units
  length 0.0254
  angle deg
:root
  order TX TY TZ RX RY RZ
  axis XYZ
  position 0 0 0
  orientation 0 0 0
:bonedata
  begin
    id 1
    name upper
    direction 0 0 1
    length 0.5
    axis 0 0 0 XYZ
    dof rx ry rz
    limits (-180 180)
           (-180 180)
           (-180 180)
  end
  begin
    id 2
    name lower
    direction 0 1 0
    length 1.0
    axis 0 0 0 XYZ
    dof rx
    limits (-180 180)
  end
:hierarchy
  begin
{hierarchy}
  end
"
        )
    }

    #[test]
    fn root_only() {
        let s = parse_skeleton(ROOT_ONLY).unwrap();
        assert_eq!(s.bones.len(), 1);
        assert_eq!(s.bones[0].name, "root");
        assert!(s.bones[0].parent.is_none());
        assert_eq!(s.name, "tiny");
    }

    #[test]
    fn two_bone_chain_tip() {
        let s = parse_skeleton(&chain("    root upper\n    upper lower")).unwrap();
        assert_eq!(s.bones.len(), 3);
        assert_abs_diff_eq!(s.bones[1].length, 0.5, epsilon = 1e-12);
        let frame = RawFrame {
            root_translation: [0.0; 3],
            rotations: vec![Quaternion::IDENTITY; 3],
        };
        let (_, tips) = s.forward(&frame);
        // child tip = parent tip + (0, 1, 0)
        let d = tips[2] - tips[1];
        assert_abs_diff_eq!(d, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn hierarchy_order_independent() {
        let a = parse_skeleton(&chain("    root upper\n    upper lower")).unwrap();
        let b = parse_skeleton(&chain("    upper lower\n    root upper")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cyclic_hierarchy_rejected() {
        let err = parse_skeleton(&chain("    upper lower\n    lower upper")).unwrap_err();
        assert!(matches!(err, Error::CyclicHierarchy(_)), "{err}");
    }

    #[test]
    fn unknown_channel_rejected() {
        let text = chain("    root upper\n    upper lower").replace("dof rx\n", "dof rq\n");
        let err = parse_skeleton(&text).unwrap_err();
        assert!(matches!(err, Error::UnknownChannel { ref channel, .. } if channel == "rq"), "{err}");
    }

    #[test]
    fn syntax_error_has_line_number() {
        let text = ROOT_ONLY.replace("  position 0 0 0", "  position 0 zero 0");
        match parse_skeleton(&text).unwrap_err() {
            Error::Syntax { line, .. } => assert_eq!(line, 12),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn declared_scale_converts_to_meters() {
        let text = chain("    root upper\n    upper lower").replace("length 0.0254", "length 0.45");
        let s = parse_skeleton(&text).unwrap();
        assert_abs_diff_eq!(s.bones[2].length, 1.0 / 0.45 * 0.0254, epsilon = 1e-15);
    }
}
