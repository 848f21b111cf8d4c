//! A small SVG subset: one `<g id="layer_…">` per layer holding closed,
//! solid-filled `<path>` elements.

use std::fmt::Write as _;
use std::path::Path;

use roxmltree::{Document, Node};

use crate::error::{Error, Result};
use crate::io::raster::quantize;
use crate::scene::{LayerVector, PathPrimitive, Point, VectorDocument};

pub const LAYER_PREFIX: &str = "layer_";

/// Six significant digits, never in exponent form, trailing zeros dropped.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let mut s = if magnitude >= 5 {
        let scale = 10f64.powi(magnitude - 5);
        format!("{:.0}", (v / scale).round() * scale)
    } else {
        let decimals = (5 - magnitude).min(24) as usize;
        format!("{v:.decimals$}")
    };
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn hex_color(rgb: [f64; 3]) -> String {
    format!("#{:02X}{:02X}{:02X}", quantize(rgb[0]), quantize(rgb[1]), quantize(rgb[2]))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn path_data(prim: &PathPrimitive) -> String {
    let pts = prim.points();
    let p = |q: Point| format!("{} {}", format_number(q.x), format_number(q.y));
    let mut d = format!("M {}", p(pts[0]));
    for seg in prim.segments() {
        write!(d, " C {} {} {}", p(seg[1]), p(seg[2]), p(seg[3])).unwrap();
    }
    d.push_str(" Z");
    d
}

pub fn svg_string(doc: &VectorDocument) -> String {
    let (w, h) = (doc.canvas_width, doc.canvas_height);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    )
    .unwrap();
    for layer in &doc.layers {
        writeln!(out, "  <g id=\"{}{}\">", LAYER_PREFIX, escape(&layer.vector.layer_id)).unwrap();
        for prim in &layer.vector.primitives {
            writeln!(
                out,
                "    <path d=\"{}\" fill=\"{}\" fill-opacity=\"{}\" fill-rule=\"nonzero\"/>",
                path_data(prim),
                hex_color(prim.fill_rgb),
                format_number(prim.fill_opacity)
            )
            .unwrap();
        }
        out.push_str("  </g>\n");
    }
    out.push_str("</svg>\n");
    out
}

pub fn emit_svg(doc: &VectorDocument, path: &Path) -> Result<()> {
    std::fs::write(path, svg_string(doc)).map_err(|e| Error::io(path, e))
}

pub fn parse_svg_subset(path: &Path) -> Result<VectorDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_svg_str(&text)
}

fn unsupported(node: &Node, feature: impl Into<String>) -> Error {
    let name = node.tag_name().name();
    let element = match node.attribute("id") {
        Some(id) => format!("{name} id=\"{id}\""),
        None => name.to_string(),
    };
    Error::UnsupportedFeature {
        element,
        feature: feature.into(),
    }
}

fn parse_length(node: &Node, name: &str) -> Result<Option<f64>> {
    let Some(raw) = node.attribute(name) else {
        return Ok(None);
    };
    let trimmed = raw.trim().trim_end_matches("px");
    trimmed
        .parse::<f64>()
        .map(Some)
        .map_err(|_| unsupported(node, format!("{name}=\"{raw}\"")))
}

fn canvas_size(root: &Node) -> Result<(usize, usize)> {
    let mut w = parse_length(root, "width")?;
    let mut h = parse_length(root, "height")?;
    if let Some(vb) = root.attribute("viewBox") {
        let nums: Vec<f64> = vb
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::SvgParse(format!("malformed viewBox \"{vb}\"")))?;
        if nums.len() != 4 {
            return Err(Error::SvgParse(format!("malformed viewBox \"{vb}\"")));
        }
        if nums[0] != 0.0 || nums[1] != 0.0 || w.is_some_and(|w| w != nums[2]) || h.is_some_and(|h| h != nums[3]) {
            return Err(unsupported(root, format!("viewBox \"{vb}\" that is not the identity")));
        }
        w = w.or(Some(nums[2]));
        h = h.or(Some(nums[3]));
    }
    match (w, h) {
        (Some(w), Some(h)) if w >= 1.0 && h >= 1.0 && w.fract() == 0.0 && h.fract() == 0.0 => Ok((w as usize, h as usize)),
        _ => Err(Error::SvgParse("root <svg> needs integer width and height".into())),
    }
}

/// Presentation attributes, from plain attributes or a `style` list.
fn attributes<'a>(node: &Node<'a, 'a>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = node
        .attributes()
        .filter(|a| a.namespace().is_none())
        .map(|a| (a.name().to_string(), a.value().to_string()))
        .collect();
    if let Some(style) = node.attribute("style") {
        for decl in style.split(';') {
            if let Some((k, v)) = decl.split_once(':') {
                out.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }
    out
}

fn is_identity_transform(value: &str) -> bool {
    let v = value.trim();
    if v.is_empty() {
        return true;
    }
    let Some((name, rest)) = v.split_once('(') else {
        return false;
    };
    let nums: Vec<f64> = rest
        .trim_end_matches(')')
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect();
    match name.trim() {
        "matrix" => nums == [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        "translate" => nums.iter().all(|n| *n == 0.0),
        "scale" => nums.iter().all(|n| *n == 1.0),
        "rotate" => nums.first() == Some(&0.0),
        _ => false,
    }
}

fn check_common(node: &Node, attrs: &[(String, String)]) -> Result<()> {
    for (k, v) in attrs {
        match k.as_str() {
            "transform" if !is_identity_transform(v) => return Err(unsupported(node, format!("transform \"{v}\""))),
            "stroke" if v != "none" => return Err(unsupported(node, format!("stroke \"{v}\""))),
            "filter" | "mask" | "clip-path" if v != "none" => return Err(unsupported(node, k.clone())),
            "fill-rule" if v != "nonzero" => return Err(unsupported(node, format!("fill-rule \"{v}\""))),
            "opacity" if v.parse::<f64>().ok() != Some(1.0) => return Err(unsupported(node, format!("opacity \"{v}\""))),
            _ => {}
        }
    }
    Ok(())
}

fn parse_color(node: &Node, v: &str) -> Result<[f64; 3]> {
    let v = v.trim();
    if v.starts_with("url(") {
        return Err(unsupported(node, format!("paint server fill \"{v}\"")));
    }
    let bad = || unsupported(node, format!("fill color \"{v}\""));
    if let Some(hex) = v.strip_prefix('#') {
        let channel = |s: &str| u8::from_str_radix(s, 16).map(|c| c as f64 / 255.0).map_err(|_| bad());
        return match hex.len() {
            6 => Ok([channel(&hex[0..2])?, channel(&hex[2..4])?, channel(&hex[4..6])?]),
            3 => {
                let d = |k: usize| channel(&hex[k..k + 1].repeat(2));
                Ok([d(0)?, d(1)?, d(2)?])
            }
            _ => Err(bad()),
        };
    }
    if let Some(body) = v.strip_prefix("rgb(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        if parts.len() == 3 {
            let mut rgb = [0.0; 3];
            for (c, p) in rgb.iter_mut().zip(parts) {
                *c = match p.strip_suffix('%') {
                    Some(pct) => pct.parse::<f64>().map_err(|_| bad())? / 100.0,
                    None => p.parse::<f64>().map_err(|_| bad())? / 255.0,
                }
                .clamp(0.0, 1.0);
            }
            return Ok(rgb);
        }
    }
    match v {
        "black" => Ok([0.0; 3]),
        "white" => Ok([1.0; 3]),
        _ => Err(bad()),
    }
}

fn parse_path(node: &Node) -> Result<PathPrimitive> {
    let attrs = attributes(node);
    check_common(node, &attrs)?;
    let get = |name: &str| attrs.iter().rev().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
    let fill = parse_color(node, get("fill").unwrap_or("black"))?;
    let opacity = match get("fill-opacity") {
        None => 1.0,
        Some(v) => v
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::SvgParse(format!("fill-opacity \"{v}\" is not a number")))?
            .clamp(0.0, 1.0),
    };
    let d = get("d").ok_or_else(|| Error::SvgParse("<path> without d".into()))?;
    let segments = parse_path_data(d).map_err(|e| match e {
        PathDataError::Unsupported(what) => unsupported(node, what),
        PathDataError::Malformed(msg) => Error::SvgParse(format!("path data \"{d}\": {msg}")),
    })?;
    PathPrimitive::from_segments(&segments, fill, opacity)
}

enum PathDataError {
    Unsupported(String),
    Malformed(String),
}

fn tokenize(d: &str) -> std::result::Result<Vec<PathToken>, PathDataError> {
    let mut out = Vec::new();
    let bytes = d.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() || c == ',' {
            i += 1;
        } else if c.is_ascii_alphabetic() {
            out.push(PathToken::Command(c));
            i += 1;
        } else {
            let start = i;
            if c == '+' || c == '-' {
                i += 1;
            }
            let mut seen_dot = false;
            let mut seen_exp = false;
            while i < bytes.len() {
                let ch = bytes[i] as char;
                if ch.is_ascii_digit() {
                    i += 1;
                } else if ch == '.' && !seen_dot && !seen_exp {
                    seen_dot = true;
                    i += 1;
                } else if (ch == 'e' || ch == 'E') && !seen_exp {
                    seen_exp = true;
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                } else {
                    break;
                }
            }
            let text = &d[start..i];
            let v = text
                .parse::<f64>()
                .map_err(|_| PathDataError::Malformed(format!("bad number `{text}`")))?;
            out.push(PathToken::Number(v));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
enum PathToken {
    Command(char),
    Number(f64),
}

fn line_as_cubic(a: Point, b: Point) -> [Point; 4] {
    [a, a + (b - a) * (1.0 / 3.0), a + (b - a) * (2.0 / 3.0), b]
}

/// Cubic segments of a single closed subpath. Lines are degree-elevated,
/// and the outline is closed with a line when it does not end at its start.
fn parse_path_data(d: &str) -> std::result::Result<Vec<[Point; 4]>, PathDataError> {
    let tokens = tokenize(d)?;
    let mut segments: Vec<[Point; 4]> = Vec::new();
    let mut start: Option<Point> = None;
    let mut current = Point::new(0.0, 0.0);
    let mut closed = false;
    let mut i = 0;
    let mut command: Option<char> = None;
    let number = |i: &mut usize| -> std::result::Result<f64, PathDataError> {
        match tokens.get(*i) {
            Some(PathToken::Number(v)) => {
                *i += 1;
                Ok(*v)
            }
            _ => Err(PathDataError::Malformed("missing coordinate".into())),
        }
    };
    while i < tokens.len() {
        let cmd = match tokens[i] {
            PathToken::Command(c) => {
                i += 1;
                c
            }
            PathToken::Number(_) => match command {
                // Coordinates after a moveto are implicit linetos.
                Some('M') => 'L',
                Some('m') => 'l',
                Some(c) if c != 'Z' && c != 'z' => c,
                _ => return Err(PathDataError::Malformed("coordinates without a command".into())),
            },
        };
        command = Some(cmd);
        let relative = cmd.is_ascii_lowercase();
        let base = if relative { current } else { Point::new(0.0, 0.0) };
        if closed && !matches!(cmd, 'Z' | 'z') {
            return Err(PathDataError::Unsupported("multiple subpaths".into()));
        }
        match cmd.to_ascii_uppercase() {
            'M' => {
                if start.is_some() {
                    return Err(PathDataError::Unsupported("multiple subpaths".into()));
                }
                let p = Point::new(number(&mut i)?, number(&mut i)?) + base;
                start = Some(p);
                current = p;
            }
            'L' | 'H' | 'V' | 'C' => {
                if start.is_none() {
                    return Err(PathDataError::Malformed("path must begin with a moveto".into()));
                }
                let seg = match cmd.to_ascii_uppercase() {
                    'L' => {
                        let p = Point::new(number(&mut i)?, number(&mut i)?) + base;
                        line_as_cubic(current, p)
                    }
                    'H' => {
                        let x = number(&mut i)? + base.x;
                        line_as_cubic(current, Point::new(x, current.y))
                    }
                    'V' => {
                        let y = number(&mut i)? + base.y;
                        line_as_cubic(current, Point::new(current.x, y))
                    }
                    _ => {
                        let c1 = Point::new(number(&mut i)?, number(&mut i)?) + base;
                        let c2 = Point::new(number(&mut i)?, number(&mut i)?) + base;
                        let p = Point::new(number(&mut i)?, number(&mut i)?) + base;
                        [current, c1, c2, p]
                    }
                };
                current = seg[3];
                segments.push(seg);
            }
            'Z' => {
                closed = true;
                if let Some(s) = start {
                    current = s;
                }
            }
            other => return Err(PathDataError::Unsupported(format!("path command `{other}`"))),
        }
    }
    let start = start.ok_or_else(|| PathDataError::Malformed("empty path".into()))?;
    if segments.is_empty() {
        return Err(PathDataError::Malformed("path has no segments".into()));
    }
    let end = segments.last().unwrap()[3];
    if end != start {
        segments.push(line_as_cubic(end, start));
    }
    Ok(segments)
}

const IGNORED: [&str; 4] = ["title", "desc", "metadata", "defs"];

fn collect_group(node: &Node, layer: &mut LayerVector) -> Result<()> {
    for child in node.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "path" => layer.primitives.push(parse_path(&child)?),
            "g" => {
                check_common(&child, &attributes(&child))?;
                collect_group(&child, layer)?;
            }
            "defs" => {
                if let Some(def) = child.children().find(Node::is_element) {
                    return Err(unsupported(&def, format!("<{}> definition", def.tag_name().name())));
                }
            }
            name if IGNORED.contains(&name) => {}
            name => return Err(unsupported(&child, format!("<{name}> element"))),
        }
    }
    Ok(())
}

/// Parses SVG text within the subset. Top-level groups become layers;
/// paths directly under the root form one extra layer named `root`.
pub fn parse_svg_str(text: &str) -> Result<VectorDocument> {
    let xml = Document::parse(text).map_err(|e| Error::SvgParse(e.to_string()))?;
    let root = xml.root_element();
    if root.tag_name().name() != "svg" {
        return Err(Error::SvgParse(format!("root element is <{}>, not <svg>", root.tag_name().name())));
    }
    check_common(&root, &attributes(&root))?;
    let (w, h) = canvas_size(&root)?;
    let mut doc = VectorDocument::new(w, h);
    let mut loose = LayerVector::new("root");
    for (k, child) in root.children().filter(Node::is_element).enumerate() {
        match child.tag_name().name() {
            "g" => {
                check_common(&child, &attributes(&child))?;
                let id = child
                    .attribute("id")
                    .map(|id| id.strip_prefix(LAYER_PREFIX).unwrap_or(id).to_string())
                    .unwrap_or_else(|| format!("group{k}"));
                let mut layer = LayerVector::new(id);
                collect_group(&child, &mut layer)?;
                doc.push_layer(layer, None);
            }
            "path" => loose.primitives.push(parse_path(&child)?),
            "defs" => {
                if let Some(def) = child.children().find(Node::is_element) {
                    return Err(unsupported(&def, format!("<{}> definition", def.tag_name().name())));
                }
            }
            name if IGNORED.contains(&name) => {}
            name => return Err(unsupported(&child, format!("<{name}> element"))),
        }
    }
    if !loose.is_empty() {
        doc.push_layer(loose, None);
    }
    Ok(doc)
}
