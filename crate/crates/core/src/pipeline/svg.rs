//! Labeled SVG import and layered SVG export.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use svgtypes::{PathParser, PointsParser, SimplePathSegment, SimplifyingPathParser, Transform};
use thiserror::Error;

use crate::geometry::{
    locate_point, signed_ring_area, LineString, Location, MultiPolygon, Point, PolygonWithHoles,
    Segment,
};
use crate::postprocess::PostprocessOutput;
use crate::ragbuild::{ClassLabel, RegionGraph};

const CURVE_STEPS: usize = 8;

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed SVG: {0}")]
    Xml(#[from] roxmltree::Error),
    #[error("<{element}> at line {row}, column {col}: {message}")]
    Element {
        element: String,
        row: u32,
        col: u32,
        message: String,
    },
}

/// How a class attribute maps onto the label vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassMapping {
    Label(ClassLabel),
    /// Deliberately ignored classes such as room separation lines.
    Ignored,
    Unknown,
}

/// Maps a class attribute (case and separator insensitive). Parking doors
/// count as doors; room separation lines are ignored.
pub fn map_class_name(raw: &str) -> ClassMapping {
    let norm: String = raw
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect();
    let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
    let direct = |s: &str| -> Option<ClassMapping> {
        let l = match s {
            "room" | "space" => ClassLabel::Room,
            "wall" | "walls" => ClassLabel::Wall,
            "door" | "doors" | "parking door" => ClassLabel::Door,
            "window" | "windows" => ClassLabel::Window,
            "stair" | "stairs" => ClassLabel::Stair,
            "object" | "objects" => ClassLabel::Object,
            "porch" => ClassLabel::Porch,
            "outer space" | "outerspace" | "outer" => ClassLabel::OuterSpace,
            "room separation" => return Some(ClassMapping::Ignored),
            _ => return None,
        };
        Some(ClassMapping::Label(l))
    };
    if let Some(m) = direct(&norm) {
        return m;
    }
    // multi-token class lists such as "Wall External"
    norm.split(' ')
        .find_map(direct)
        .unwrap_or(ClassMapping::Unknown)
}

fn compose(outer: Transform, inner: Transform) -> Transform {
    Transform::new(
        outer.a * inner.a + outer.c * inner.b,
        outer.b * inner.a + outer.d * inner.b,
        outer.a * inner.c + outer.c * inner.d,
        outer.b * inner.c + outer.d * inner.d,
        outer.a * inner.e + outer.c * inner.f + outer.e,
        outer.b * inner.e + outer.d * inner.f + outer.f,
    )
}

fn apply(t: &Transform, x: f64, y: f64) -> Point {
    Point::new(t.a * x + t.c * y + t.e, t.b * x + t.d * y + t.f)
}

fn rings_of_path(d: &str) -> Result<Vec<Vec<Point>>, String> {
    // validate first: the simplifying parser stops silently on errors
    for seg in PathParser::from(d) {
        seg.map_err(|e| e.to_string())?;
    }
    let mut rings = Vec::new();
    let mut cur: Vec<Point> = Vec::new();
    let mut last = Point::new(0.0, 0.0);
    for seg in SimplifyingPathParser::from(d) {
        match seg.map_err(|e| e.to_string())? {
            SimplePathSegment::MoveTo { x, y } => {
                if cur.len() >= 3 {
                    rings.push(std::mem::take(&mut cur));
                }
                cur.clear();
                last = Point::new(x, y);
                cur.push(last);
            }
            SimplePathSegment::LineTo { x, y } => {
                last = Point::new(x, y);
                cur.push(last);
            }
            SimplePathSegment::CurveTo {
                x1,
                y1,
                x2,
                y2,
                x,
                y,
            } => {
                let (p0, p1, p2, p3) = (
                    last,
                    Point::new(x1, y1),
                    Point::new(x2, y2),
                    Point::new(x, y),
                );
                for k in 1..=CURVE_STEPS {
                    let t = k as f64 / CURVE_STEPS as f64;
                    let u = 1.0 - t;
                    cur.push(
                        p0.scale(u * u * u)
                            + p1.scale(3.0 * u * u * t)
                            + p2.scale(3.0 * u * t * t)
                            + p3.scale(t * t * t),
                    );
                }
                last = p3;
            }
            SimplePathSegment::Quadratic { x1, y1, x, y } => {
                let (p0, p1, p2) = (last, Point::new(x1, y1), Point::new(x, y));
                for k in 1..=CURVE_STEPS {
                    let t = k as f64 / CURVE_STEPS as f64;
                    let u = 1.0 - t;
                    cur.push(p0.scale(u * u) + p1.scale(2.0 * u * t) + p2.scale(t * t));
                }
                last = p2;
            }
            SimplePathSegment::ClosePath => {
                if cur.len() >= 3 {
                    rings.push(std::mem::take(&mut cur));
                }
                cur.clear();
            }
        }
    }
    if cur.len() >= 3 {
        rings.push(cur);
    }
    Ok(rings)
}

/// Groups rings into polygons: the largest ring is an exterior, rings
/// starting inside it become its holes, the rest are handled recursively.
fn polygons_from_rings(mut rings: Vec<Vec<Point>>) -> Result<Vec<PolygonWithHoles>, String> {
    let mut out = Vec::new();
    while !rings.is_empty() {
        let (i, _) = rings
            .iter()
            .enumerate()
            .map(|(i, r)| (i, signed_ring_area(r).abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let ext = rings.remove(i);
        let shell = PolygonWithHoles::from_points(ext.clone()).map_err(|e| e.to_string())?;
        let (holes, rest): (Vec<_>, Vec<_>) = rings
            .into_iter()
            .partition(|r| matches!(locate_point(&shell, r[0]), Location::Inside));
        let holes = holes
            .into_iter()
            .map(LineString::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        out.push(
            PolygonWithHoles::new(LineString::new(ext).map_err(|e| e.to_string())?, holes)
                .map_err(|e| e.to_string())?,
        );
        rings = rest;
    }
    Ok(out)
}

/// Parses polygon, path and rect elements that carry a class attribute.
pub fn parse_labeled_svg(text: &str) -> Result<Vec<(PolygonWithHoles, ClassLabel)>, SvgError> {
    let doc = roxmltree::Document::parse(text)?;
    let mut out = Vec::new();
    for node in doc.descendants().filter(|n| n.is_element()) {
        let tag = node.tag_name().name();
        if !matches!(tag, "polygon" | "path" | "rect") {
            continue;
        }
        let Some(class) = node.attribute("class") else {
            continue;
        };
        let pos = doc.text_pos_at(node.range().start);
        let err = |message: String| SvgError::Element {
            element: tag.to_string(),
            row: pos.row,
            col: pos.col,
            message,
        };
        let label = match map_class_name(class) {
            ClassMapping::Label(l) => l,
            ClassMapping::Ignored => continue,
            ClassMapping::Unknown => {
                log::warn!(
                    "skipping <{tag}> with unknown class {class:?} at line {}",
                    pos.row
                );
                continue;
            }
        };
        let mut t = Transform::default();
        for anc in node
            .ancestors()
            .filter(|n| n.is_element())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
        {
            if let Some(s) = anc.attribute("transform") {
                let inner =
                    Transform::from_str(s).map_err(|e| err(format!("bad transform: {e}")))?;
                t = compose(t, inner);
            }
        }
        let rings: Vec<Vec<Point>> = match tag {
            "polygon" => {
                let pts = node
                    .attribute("points")
                    .ok_or_else(|| err("missing points".into()))?;
                vec![PointsParser::from(pts)
                    .map(|(x, y)| Point::new(x, y))
                    .collect()]
            }
            "path" => rings_of_path(node.attribute("d").ok_or_else(|| err("missing d".into()))?)
                .map_err(err)?,
            _ => {
                let num = |k: &str| -> Result<f64, SvgError> {
                    node.attribute(k)
                        .unwrap_or("0")
                        .trim_end_matches("px")
                        .parse::<f64>()
                        .map_err(|e| err(format!("bad {k}: {e}")))
                };
                let (x, y, w, h) = (num("x")?, num("y")?, num("width")?, num("height")?);
                vec![vec![
                    Point::new(x, y),
                    Point::new(x + w, y),
                    Point::new(x + w, y + h),
                    Point::new(x, y + h),
                ]]
            }
        };
        let rings = rings
            .into_iter()
            .map(|r| r.into_iter().map(|p| apply(&t, p.x, p.y)).collect())
            .collect();
        for p in polygons_from_rings(rings).map_err(err)? {
            out.push((p, label));
        }
    }
    Ok(out)
}

pub fn import_labeled_svg(path: &Path) -> Result<Vec<(PolygonWithHoles, ClassLabel)>, SvgError> {
    let text = std::fs::read_to_string(path).map_err(|source| SvgError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_labeled_svg(&text)
}

const PALETTE: [&str; ClassLabel::COUNT] = [
    "#f4d58d", "#2d2d2d", "#d1495b", "#00a6ed", "#8f5fbf", "#3bb273", "#edae49", "#e8e8e8",
];
const UNLABELED: &str = "#b0b0b0";
const SEGMENT_PALETTE: [&str; 6] = [
    "#e63946", "#457b9d", "#2a9d8f", "#f4a261", "#6a4c93", "#8ab17d",
];

pub fn class_color(c: ClassLabel) -> &'static str {
    PALETTE[c.index()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgRegion {
    pub polygon: PolygonWithHoles,
    pub label: Option<ClassLabel>,
    pub id: Option<u32>,
}

/// Layers of a debug rendering; empty layers are omitted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SvgScene {
    pub width: usize,
    pub height: usize,
    pub regions: Vec<SvgRegion>,
    pub rag_nodes: Vec<(u32, Point)>,
    pub rag_edges: Vec<(Point, Point)>,
    pub p_wall: MultiPolygon,
    pub separation_lines: Vec<Segment>,
    pub wall_segments: Vec<(PolygonWithHoles, Vec<u32>)>,
}

impl SvgScene {
    pub fn new(width: usize, height: usize) -> Self {
        SvgScene {
            width,
            height,
            ..Default::default()
        }
    }

    pub fn from_truth(
        width: usize,
        height: usize,
        truth: &[(PolygonWithHoles, ClassLabel)],
    ) -> Self {
        let regions = truth
            .iter()
            .map(|(p, c)| SvgRegion {
                polygon: p.clone(),
                label: Some(*c),
                id: None,
            })
            .collect();
        SvgScene {
            width,
            height,
            regions,
            ..Default::default()
        }
    }

    /// Regions colored by label plus the adjacency graph.
    pub fn from_graph(g: &RegionGraph) -> Self {
        let regions = g
            .nodes
            .iter()
            .map(|(&id, n)| SvgRegion {
                polygon: n.region.polygon.clone(),
                label: n.label,
                id: Some(id),
            })
            .collect();
        let rag_nodes = g
            .nodes
            .iter()
            .map(|(&id, n)| (id, n.region.centroid))
            .collect();
        let rag_edges = g
            .edges
            .iter()
            .map(|&(a, b, _)| (g.nodes[&a].region.centroid, g.nodes[&b].region.centroid))
            .collect();
        SvgScene {
            width: g.width,
            height: g.height,
            regions,
            rag_nodes,
            rag_edges,
            ..Default::default()
        }
    }

    pub fn with_postprocess(mut self, out: &PostprocessOutput) -> Self {
        self.p_wall = out.p_wall.clone();
        self.separation_lines = out.separation_lines.iter().map(|l| l.segment).collect();
        self.wall_segments = out
            .wall_segments
            .iter()
            .map(|s| (s.polygon.clone(), s.room_ids.clone()))
            .collect();
        self
    }
}

fn path_data(p: &PolygonWithHoles) -> String {
    let mut d = String::new();
    for ring in p.rings() {
        for (i, q) in ring.ring_vertices().iter().enumerate() {
            let _ = write!(d, "{}{} {} ", if i == 0 { "M" } else { "L" }, q.x, q.y);
        }
        d.push_str("Z ");
    }
    d.trim_end().to_string()
}

/// Deterministic layered SVG. Region paths carry their class name so the
/// output can be imported again.
pub fn export_svg(scene: &SvgScene) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = scene.width,
        h = scene.height
    );
    if !scene.regions.is_empty() {
        s.push_str("  <g id=\"regions\" stroke=\"none\">\n");
        for r in &scene.regions {
            let color = r.label.map_or(UNLABELED, class_color);
            s.push_str("    <path");
            if let Some(l) = r.label {
                let _ = write!(s, r#" class="{}""#, l.name());
            }
            if let Some(id) = r.id {
                let _ = write!(s, r#" data-id="{id}""#);
            }
            let _ = writeln!(
                s,
                r#" fill="{color}" fill-rule="evenodd" d="{}"/>"#,
                path_data(&r.polygon)
            );
        }
        s.push_str("  </g>\n");
    }
    if !scene.rag_edges.is_empty() || !scene.rag_nodes.is_empty() {
        s.push_str("  <g id=\"rag\" stroke=\"#1d3557\" stroke-width=\"0.6\" fill=\"#1d3557\">\n");
        for (a, b) in &scene.rag_edges {
            let _ = writeln!(
                s,
                r#"    <line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                a.x, a.y, b.x, b.y
            );
        }
        for (id, c) in &scene.rag_nodes {
            let _ = writeln!(
                s,
                r#"    <circle data-id="{id}" cx="{}" cy="{}" r="1.5"/>"#,
                c.x, c.y
            );
        }
        s.push_str("  </g>\n");
    }
    if !scene.p_wall.is_empty() {
        s.push_str("  <g id=\"p-wall\" fill=\"none\" stroke=\"#000000\" stroke-width=\"0.8\">\n");
        for p in &scene.p_wall.polygons {
            let _ = writeln!(s, r#"    <path d="{}"/>"#, path_data(p));
        }
        s.push_str("  </g>\n");
    }
    if !scene.wall_segments.is_empty() {
        s.push_str("  <g id=\"wall-segments\" fill-opacity=\"0.6\" stroke=\"#ffffff\" stroke-width=\"0.3\">\n");
        for (i, (p, rooms)) in scene.wall_segments.iter().enumerate() {
            let ids: Vec<String> = rooms.iter().map(u32::to_string).collect();
            let _ = writeln!(
                s,
                r#"    <path data-rooms="{}" fill="{}" fill-rule="evenodd" d="{}"/>"#,
                ids.join(" "),
                SEGMENT_PALETTE[i % SEGMENT_PALETTE.len()],
                path_data(p)
            );
        }
        s.push_str("  </g>\n");
    }
    if !scene.separation_lines.is_empty() {
        s.push_str("  <g id=\"separation-lines\" stroke=\"#ff006e\" stroke-width=\"0.8\">\n");
        for l in &scene.separation_lines {
            let _ = writeln!(
                s,
                r#"    <line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                l.a.x, l.a.y, l.b.x, l.b.y
            );
        }
        s.push_str("  </g>\n");
    }
    s.push_str("</svg>\n");
    s
}
