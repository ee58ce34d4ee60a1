//! Region adjacency graph construction.
//!
//! Both ink and background are split into 4-connected components; each
//! component becomes a region with a pixel-exact polygon. Two regions are
//! adjacent when any of their pixels are 4-neighbours.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, BBox, Point, PolygonWithHoles};
use crate::raster::{
    connected_components_of, label_polygons, scan_polygon, BinaryRaster, Connectivity, GridWindow,
    LabelRaster,
};
use crate::zernike::{ZernikeConfig, ZernikeError, ZernikeExtractor, ZernikeFeatures};

pub const FORMAT_VERSION: u32 = 1;

/// Smallest centroid distance used as an edge weight.
pub const MIN_EDGE_WEIGHT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("raster produced no regions")]
    NoRegions,
    #[error("truth polygon list is empty")]
    EmptyTruth,
    #[error("feature extraction failed for region {id}: {source}")]
    Feature { id: u32, source: ZernikeError },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RagError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClassLabel {
    Room = 0,
    Wall = 1,
    Door = 2,
    Window = 3,
    Stair = 4,
    Object = 5,
    Porch = 6,
    OuterSpace = 7,
}

impl ClassLabel {
    pub const COUNT: usize = 8;
    pub const ALL: [ClassLabel; 8] = [
        ClassLabel::Room,
        ClassLabel::Wall,
        ClassLabel::Door,
        ClassLabel::Window,
        ClassLabel::Stair,
        ClassLabel::Object,
        ClassLabel::Porch,
        ClassLabel::OuterSpace,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        ClassLabel::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Room => "room",
            ClassLabel::Wall => "wall",
            ClassLabel::Door => "door",
            ClassLabel::Window => "window",
            ClassLabel::Stair => "stair",
            ClassLabel::Object => "object",
            ClassLabel::Porch => "porch",
            ClassLabel::OuterSpace => "outer_space",
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(c: ClassLabel) -> u8 {
        c as u8
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        ClassLabel::from_index(v as usize)
            .ok_or_else(|| format!("class index {v} out of range 0..8"))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: u32,
    pub polygon: PolygonWithHoles,
    pub centroid: Point,
    pub area: f64,
    /// Ink component (as opposed to background).
    pub ink: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub degree: usize,
    pub area: f64,
    pub zernike: ZernikeFeatures,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.zernike.amplitudes.len());
        v.push(self.degree as f64);
        v.push(self.area);
        v.extend_from_slice(&self.zernike.amplitudes);
        v
    }

    pub fn len(&self) -> usize {
        2 + self.zernike.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Centroid translation and invariant-ratio scaling before projection.
    #[default]
    Normalized,
    /// Unscaled moments in the disk spanned by the bounding box.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagConfig {
    pub min_region_area: usize,
    pub zernike: ZernikeConfig,
    pub feature_mode: FeatureMode,
}

impl Default for RagConfig {
    fn default() -> Self {
        RagConfig {
            min_region_area: 4,
            zernike: ZernikeConfig::default(),
            feature_mode: FeatureMode::Normalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub region: Region,
    pub features: FeatureVector,
    pub label: Option<ClassLabel>,
}

/// Feature settings recorded alongside a graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub mode: FeatureMode,
    pub c: f64,
    pub n_max: u32,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    pub width: usize,
    pub height: usize,
    pub nodes: BTreeMap<u32, Node>,
    /// `(i, j, weight)` with `i < j`, sorted.
    pub edges: Vec<(u32, u32, f64)>,
    pub outer_space: Option<u32>,
    pub meta: FeatureMeta,
}

/// Vectorization output: regions in id order plus the label raster they
/// were traced from (0 marks dropped pixels and is never a region id).
#[derive(Debug, Clone)]
pub struct Vectorized {
    pub regions: Vec<Region>,
    pub labels: LabelRaster,
    pub outer_space: Option<u32>,
}

/// Splits ink and background into 4-connected regions, drops those with
/// fewer than `min_region_area` pixels and renumbers the rest `1..=n` in
/// raster-scan order. The largest background component touching the image
/// border is reported as outer space.
pub fn vectorize(r: &BinaryRaster, min_region_area: usize) -> Result<Vectorized> {
    let (w, h) = (r.width(), r.height());
    let ink = connected_components_of(r, true, Connectivity::Four);
    let bg = connected_components_of(r, false, Connectivity::Four);
    let n_ink = ink.max_label();
    // unified raw ids: ink k -> k, background k -> n_ink + k
    let raw: Vec<u32> = ink
        .labels()
        .iter()
        .zip(bg.labels())
        .map(|(&a, &b)| if a != 0 { a } else { n_ink + b })
        .collect();
    let n_raw = (n_ink + bg.max_label()) as usize;
    let mut counts = vec![0usize; n_raw + 1];
    for &l in &raw {
        counts[l as usize] += 1;
    }
    let mut remap = vec![0u32; n_raw + 1];
    let mut next = 1u32;
    for &l in &raw {
        if remap[l as usize] == 0 && counts[l as usize] >= min_region_area.max(1) {
            remap[l as usize] = next;
            next += 1;
        }
    }
    let labels_vec: Vec<u32> = raw.iter().map(|&l| remap[l as usize]).collect();
    if next == 1 {
        return Err(RagError::NoRegions);
    }
    let labels = LabelRaster::new(w, h, labels_vec).expect("same dimensions");

    let mut on_border: BTreeSet<u32> = BTreeSet::new();
    let is_ink_new: Vec<bool> = {
        let mut v = vec![false; next as usize];
        for (i, &l) in labels.labels().iter().enumerate() {
            if l != 0 {
                v[l as usize] = r.bits()[i];
            }
        }
        v
    };
    for (i, &l) in labels.labels().iter().enumerate() {
        let (x, y) = (i % w, i / w);
        if l != 0 && !is_ink_new[l as usize] && (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
            on_border.insert(l);
        }
    }
    let mut pix = vec![0usize; next as usize];
    for &l in labels.labels() {
        pix[l as usize] += 1;
    }
    let outer_space = on_border
        .iter()
        .copied()
        .max_by(|a, b| pix[*a as usize].cmp(&pix[*b as usize]).then(b.cmp(a)));

    let polys = label_polygons(&labels);
    let regions: Vec<Region> = polys
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(id, p)| {
            let polygon = p.expect("every surviving label has pixels");
            let centroid = geometry::centroid(&polygon).expect("pixel polygons have area");
            Region {
                id: id as u32,
                centroid,
                area: pix[id] as f64,
                polygon,
                ink: is_ink_new[id],
            }
        })
        .collect();
    Ok(Vectorized {
        regions,
        labels,
        outer_space,
    })
}

fn edge_weight(a: Point, b: Point) -> f64 {
    a.dist(b).max(MIN_EDGE_WEIGHT)
}

/// Edges between regions whose pixels are 4-neighbours, weighted by
/// centroid distance.
pub fn adjacency(regions: &[Region], labels: &LabelRaster) -> Vec<(u32, u32, f64)> {
    let (w, h) = (labels.width(), labels.height());
    let l = labels.labels();
    let mut pairs = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            let a = l[y * w + x];
            if a == 0 {
                continue;
            }
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let b = l[ny * w + nx];
                    if b != 0 && b != a {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    let by_id: BTreeMap<u32, &Region> = regions.iter().map(|r| (r.id, r)).collect();
    pairs
        .into_iter()
        .filter_map(|(a, b)| {
            let (ra, rb) = (by_id.get(&a)?, by_id.get(&b)?);
            Some((a, b, edge_weight(ra.centroid, rb.centroid)))
        })
        .collect()
}

/// Vectorize, connect and describe.
pub fn build_rag(r: &BinaryRaster, cfg: &RagConfig) -> Result<RegionGraph> {
    let v = vectorize(r, cfg.min_region_area)?;
    let edges = adjacency(&v.regions, &v.labels);
    assemble(r.width(), r.height(), v.regions, edges, v.outer_space, cfg)
}

/// Computes node features for a fixed region set and edge list.
pub fn assemble(
    width: usize,
    height: usize,
    regions: Vec<Region>,
    edges: Vec<(u32, u32, f64)>,
    outer_space: Option<u32>,
    cfg: &RagConfig,
) -> Result<RegionGraph> {
    let ex =
        ZernikeExtractor::new(cfg.zernike).map_err(|source| RagError::Feature { id: 0, source })?;
    let mut degree: BTreeMap<u32, usize> = regions.iter().map(|r| (r.id, 0)).collect();
    for &(a, b, _) in &edges {
        *degree.get_mut(&a).expect("edge endpoint is a region") += 1;
        *degree.get_mut(&b).expect("edge endpoint is a region") += 1;
    }
    let zs: Vec<Result<ZernikeFeatures>> = regions
        .par_iter()
        .map(|r| {
            let f = match cfg.feature_mode {
                FeatureMode::Normalized => ex.features(&r.polygon),
                FeatureMode::Raw => ex.raw_features(&r.polygon),
            };
            f.map_err(|source| RagError::Feature { id: r.id, source })
        })
        .collect();
    let mut nodes = BTreeMap::new();
    for (region, z) in regions.into_iter().zip(zs) {
        let features = FeatureVector {
            degree: degree[&region.id],
            area: region.area,
            zernike: z?,
        };
        nodes.insert(
            region.id,
            Node {
                region,
                features,
                label: None,
            },
        );
    }
    let meta = FeatureMeta {
        mode: cfg.feature_mode,
        c: cfg.zernike.c,
        n_max: cfg.zernike.n_max,
        grid: cfg.zernike.grid,
    };
    Ok(RegionGraph {
        width,
        height,
        nodes,
        edges,
        outer_space,
        meta,
    })
}

impl RegionGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.nodes.keys().copied().collect()
    }

    pub fn neighbours(&self) -> BTreeMap<u32, Vec<(u32, f64)>> {
        let mut out: BTreeMap<u32, Vec<(u32, f64)>> =
            self.nodes.keys().map(|&k| (k, Vec::new())).collect();
        for &(a, b, w) in &self.edges {
            out.entry(a).or_default().push((b, w));
            out.entry(b).or_default().push((a, w));
        }
        out
    }

    pub fn labels(&self) -> BTreeMap<u32, ClassLabel> {
        self.nodes
            .iter()
            .filter_map(|(&k, n)| n.label.map(|l| (k, l)))
            .collect()
    }

    pub fn set_labels(&mut self, labels: &BTreeMap<u32, ClassLabel>) {
        for (k, n) in self.nodes.iter_mut() {
            n.label = labels.get(k).copied();
        }
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.nodes.values().all(|n| n.label.is_some())
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            format_version: FORMAT_VERSION,
            width: self.width,
            height: self.height,
            features: self.meta,
            outer_space: self.outer_space,
            nodes: self
                .nodes
                .values()
                .map(|n| NodeRecord {
                    id: n.region.id,
                    label: n.label,
                    ink: n.region.ink,
                    degree: n.features.degree,
                    area: n.features.area,
                    zernike: n.features.zernike.amplitudes.clone(),
                    centroid: n.region.centroid,
                    polygon: n.region.polygon.clone(),
                })
                .collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn from_file(f: GraphFile) -> Result<Self> {
        if f.format_version != FORMAT_VERSION {
            return Err(RagError::InvalidGraph(format!(
                "unsupported format_version {}",
                f.format_version
            )));
        }
        let mut nodes = BTreeMap::new();
        for r in f.nodes {
            let node = Node {
                region: Region {
                    id: r.id,
                    polygon: r.polygon,
                    centroid: r.centroid,
                    area: r.area,
                    ink: r.ink,
                },
                features: FeatureVector {
                    degree: r.degree,
                    area: r.area,
                    zernike: ZernikeFeatures {
                        amplitudes: r.zernike,
                    },
                },
                label: r.label,
            };
            if nodes.insert(r.id, node).is_some() {
                return Err(RagError::InvalidGraph(format!(
                    "duplicate node id {}",
                    r.id
                )));
            }
        }
        let mut edges = f.edges;
        for e in edges.iter_mut() {
            if e.0 == e.1 {
                return Err(RagError::InvalidGraph(format!("self-loop on {}", e.0)));
            }
            if !nodes.contains_key(&e.0) || !nodes.contains_key(&e.1) {
                return Err(RagError::InvalidGraph(format!(
                    "edge ({}, {}) references a missing node",
                    e.0, e.1
                )));
            }
            if !(e.2.is_finite() && e.2 > 0.0) {
                return Err(RagError::InvalidGraph(format!(
                    "edge ({}, {}) has weight {}",
                    e.0, e.1, e.2
                )));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0, e.2);
            }
        }
        edges.sort_by_key(|e| (e.0, e.1));
        edges.dedup_by(|a, b| (a.0, a.1) == (b.0, b.1));
        Ok(RegionGraph {
            width: f.width,
            height: f.height,
            nodes,
            edges,
            outer_space: f.outer_space,
            meta: f.features,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        RegionGraph::from_file(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ClassLabel>,
    #[serde(default)]
    pub ink: bool,
    pub degree: usize,
    pub area: f64,
    pub zernike: Vec<f64>,
    pub centroid: Point,
    pub polygon: PolygonWithHoles,
}

/// On-disk graph layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    pub features: FeatureMeta,
    #[serde(default)]
    pub outer_space: Option<u32>,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<(u32, u32, f64)>,
}

// ---- IoU relabeling -------------------------------------------------------

/// Pixel-center mask of a polygon on the image grid, stored over the
/// polygon's clipped bounding box.
#[derive(Debug, Clone)]
pub struct PixelMask {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub bits: Vec<bool>,
    pub count: usize,
}

impl PixelMask {
    pub fn of_polygon(p: &PolygonWithHoles, width: usize, height: usize) -> PixelMask {
        let bb = p.bbox();
        let x0 = bb.min.x.floor().clamp(0.0, width as f64) as usize;
        let y0 = bb.min.y.floor().clamp(0.0, height as f64) as usize;
        let x1 = bb.max.x.ceil().clamp(0.0, width as f64) as usize;
        let y1 = bb.max.y.ceil().clamp(0.0, height as f64) as usize;
        let (w, h) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
        let mut bits = vec![false; w * h];
        let mut count = 0;
        if w > 0 && h > 0 {
            let g = GridWindow {
                origin: Point::new(x0 as f64, y0 as f64),
                cell: 1.0,
                cols: w,
                rows: h,
            };
            scan_polygon(p, &g, |row, c0, c1| {
                for c in c0..c1 {
                    bits[row * w + c] = true;
                }
                count += c1 - c0;
            });
        }
        PixelMask {
            x0,
            y0,
            w,
            h,
            bits,
            count,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        x >= self.x0
            && y >= self.y0
            && x < self.x0 + self.w
            && y < self.y0 + self.h
            && self.bits[(y - self.y0) * self.w + (x - self.x0)]
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (self.x0 + i % self.w, self.y0 + i / self.w))
    }

    fn bbox(&self) -> BBox {
        BBox {
            min: Point::new(self.x0 as f64, self.y0 as f64),
            max: Point::new((self.x0 + self.w) as f64, (self.y0 + self.h) as f64),
        }
    }

    pub fn intersection(&self, o: &PixelMask) -> usize {
        if !self.bbox().intersects(&o.bbox()) {
            return 0;
        }
        let xs = self.x0.max(o.x0)..(self.x0 + self.w).min(o.x0 + o.w);
        let ys = self.y0.max(o.y0)..(self.y0 + self.h).min(o.y0 + o.h);
        let mut n = 0;
        for y in ys {
            for x in xs.clone() {
                if self.get(x, y) && o.get(x, y) {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Assigns each region the class of the truth polygon with the highest
/// pixel IoU. Ties prefer the larger truth polygon, then the lower class
/// index; regions overlapping no truth polygon become outer space.
pub fn relabel_by_iou(
    regions: &[Region],
    truth: &[(PolygonWithHoles, ClassLabel)],
    width: usize,
    height: usize,
) -> Result<BTreeMap<u32, ClassLabel>> {
    if truth.is_empty() {
        return Err(RagError::EmptyTruth);
    }
    let tmasks: Vec<(PixelMask, f64, ClassLabel)> = truth
        .par_iter()
        .map(|(p, c)| {
            (
                PixelMask::of_polygon(p, width, height),
                geometry::area(p).unwrap_or(0.0),
                *c,
            )
        })
        .collect();
    let out: Vec<(u32, ClassLabel)> = regions
        .par_iter()
        .map(|r| {
            let rm = PixelMask::of_polygon(&r.polygon, width, height);
            let mut best: Option<(f64, f64, ClassLabel)> = None;
            for (tm, ta, c) in &tmasks {
                let inter = rm.intersection(tm);
                if inter == 0 {
                    continue;
                }
                let iou = inter as f64 / (rm.count + tm.count - inter) as f64;
                let better = match best {
                    None => true,
                    Some((bi, ba, bc)) => {
                        iou > bi
                            || (iou == bi && (*ta > ba || (*ta == ba && c.index() < bc.index())))
                    }
                };
                if better {
                    best = Some((iou, *ta, *c));
                }
            }
            (r.id, best.map_or(ClassLabel::OuterSpace, |b| b.2))
        })
        .collect();
    Ok(out.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster_from(rows: &[&str]) -> BinaryRaster {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryRaster::new(w, h, bits).unwrap()
    }

    fn hollow_square() -> BinaryRaster {
        let mut r = BinaryRaster::empty(30, 30);
        for y in 5..25 {
            for x in 5..25 {
                if !(8..22).contains(&x) || !(8..22).contains(&y) {
                    r.set(x, y, true);
                }
            }
        }
        r
    }

    #[test]
    fn vectorize_hollow_square() {
        let v = vectorize(&hollow_square(), 4).unwrap();
        assert_eq!(v.regions.len(), 3);
        let outer = v.outer_space.unwrap();
        assert_eq!(outer, 1);
        let wall = v.regions.iter().find(|r| r.ink).unwrap();
        assert_eq!(wall.area, 400.0 - 196.0);
        assert_eq!(geometry::area(&wall.polygon).unwrap(), wall.area);
        assert_eq!(wall.polygon.interiors().len(), 1);
        let total: f64 = v.regions.iter().map(|r| r.area).sum();
        assert_eq!(total, 900.0);
    }

    #[test]
    fn vectorize_solid_square_and_drops_specks() {
        let mut r = BinaryRaster::empty(20, 20);
        for y in 4..12 {
            for x in 4..12 {
                r.set(x, y, true);
            }
        }
        r.set(16, 16, true);
        let v = vectorize(&r, 4).unwrap();
        assert_eq!(v.regions.len(), 2);
        assert_eq!(v.labels.get(16, 16), 0);
        assert_eq!(vectorize(&r, 1).unwrap().regions.len(), 3);
    }

    #[test]
    fn adjacency_examples() {
        let v = vectorize(&hollow_square(), 4).unwrap();
        let e = adjacency(&v.regions, &v.labels);
        let room = v
            .regions
            .iter()
            .find(|r| !r.ink && Some(r.id) != v.outer_space)
            .unwrap()
            .id;
        let wall = v.regions.iter().find(|r| r.ink).unwrap().id;
        let outer = v.outer_space.unwrap();
        let has = |a: u32, b: u32| e.iter().any(|&(i, j, _)| (i, j) == (a.min(b), a.max(b)));
        assert!(has(room, wall) && has(wall, outer) && !has(room, outer));
        assert_eq!(e.len(), 2);

        let two = raster_from(&["#########", "#...#...#", "#...#...#", "#########"]);
        let v = vectorize(&two, 1).unwrap();
        let e = adjacency(&v.regions, &v.labels);
        let rooms: Vec<u32> = v.regions.iter().filter(|r| !r.ink).map(|r| r.id).collect();
        assert_eq!(rooms.len(), 2);
        assert!(!e
            .iter()
            .any(|&(i, j, _)| rooms.contains(&i) && rooms.contains(&j)));

        let single = BinaryRaster::empty(6, 6);
        let v = vectorize(&single, 1).unwrap();
        assert!(adjacency(&v.regions, &v.labels).is_empty());
    }

    #[test]
    fn build_rag_path_graph_with_18_features() {
        let cfg = RagConfig::default();
        let g = build_rag(&hollow_square(), &cfg).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges.len(), 2);
        let wall = g.nodes.values().find(|n| n.region.ink).unwrap();
        assert_eq!(wall.features.degree, 2);
        for n in g.nodes.values() {
            assert_eq!(n.features.len(), 18);
            assert!(n.features.to_vec().iter().all(|v| v.is_finite()));
        }
        let deg: usize = g.nodes.values().map(|n| n.features.degree).sum();
        assert_eq!(deg, 2 * g.edges.len());
    }

    #[test]
    fn graph_json_round_trip() {
        let mut g = build_rag(&hollow_square(), &RagConfig::default()).unwrap();
        let labels: BTreeMap<u32, ClassLabel> = g
            .ids()
            .into_iter()
            .map(|i| (i, ClassLabel::from_index(i as usize % 8).unwrap()))
            .collect();
        g.set_labels(&labels);
        let s = g.to_json();
        assert!(s.contains("\"format_version\":1"));
        let back = RegionGraph::from_json(&s).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), s);
    }

    #[test]
    fn class_label_encoding() {
        assert_eq!(serde_json::to_string(&ClassLabel::OuterSpace).unwrap(), "7");
        assert_eq!(
            serde_json::from_str::<ClassLabel>("2").unwrap(),
            ClassLabel::Door
        );
        assert!(serde_json::from_str::<ClassLabel>("8").is_err());
        assert_eq!("porch".parse::<ClassLabel>().unwrap(), ClassLabel::Porch);
        for c in ClassLabel::ALL {
            assert_eq!(ClassLabel::from_index(c.index()), Some(c));
        }
    }

    #[test]
    fn relabel_examples() {
        let region = |id: u32, x0: f64, y0: f64, x1: f64, y1: f64| {
            let polygon = PolygonWithHoles::rect(x0, y0, x1, y1).unwrap();
            let centroid = geometry::centroid(&polygon).unwrap();
            let area = geometry::area(&polygon).unwrap();
            Region {
                id,
                polygon,
                centroid,
                area,
                ink: false,
            }
        };
        let truth = vec![
            (
                PolygonWithHoles::rect(0.0, 0.0, 10.0, 10.0).unwrap(),
                ClassLabel::Room,
            ),
            (
                PolygonWithHoles::rect(10.0, 0.0, 12.0, 10.0).unwrap(),
                ClassLabel::Wall,
            ),
        ];
        let regions = vec![
            region(1, 0.0, 0.0, 10.0, 10.0),
            region(2, 3.0, 0.0, 11.0, 10.0),
            region(3, 30.0, 30.0, 35.0, 35.0),
        ];
        let l = relabel_by_iou(&regions, &truth, 40, 40).unwrap();
        assert_eq!(l[&1], ClassLabel::Room);
        assert_eq!(l[&2], ClassLabel::Room);
        assert_eq!(l[&3], ClassLabel::OuterSpace);
        let mut rev = truth.clone();
        rev.reverse();
        assert_eq!(relabel_by_iou(&regions, &rev, 40, 40).unwrap(), l);
        assert!(relabel_by_iou(&regions, &[], 40, 40).is_err());
    }

    #[test]
    fn relabel_tie_prefers_larger_truth_then_lower_class() {
        let polygon = PolygonWithHoles::rect(0.0, 0.0, 4.0, 2.0).unwrap();
        let r = Region {
            id: 1,
            centroid: geometry::centroid(&polygon).unwrap(),
            area: 8.0,
            polygon,
            ink: true,
        };
        // both halves give IoU 0.5
        let truth = vec![
            (
                PolygonWithHoles::rect(0.0, 0.0, 2.0, 2.0).unwrap(),
                ClassLabel::Window,
            ),
            (
                PolygonWithHoles::rect(2.0, 0.0, 4.0, 2.0).unwrap(),
                ClassLabel::Door,
            ),
        ];
        assert_eq!(
            relabel_by_iou(&[r], &truth, 10, 10).unwrap()[&1],
            ClassLabel::Door
        );
    }
}
