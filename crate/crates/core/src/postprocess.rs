//! Post-processing of a labeled region graph: door splitting, room and
//! wall merging, the room connectivity graph, and wall splitting into
//! convex, room-associated segments.
//!
//! Ink and background regions of a binary plan never touch a region of
//! their own colour, so a door pocket inside a wall and the swing glyph in
//! the room are not pixel neighbours. Merging and linking therefore use a
//! proximity neighbourhood: two regions are neighbours when some pair of
//! their pixel centers lies within `neighbour_tolerance`. Every RAG edge is
//! such a pair at distance 1.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::geometry::{
    self, angle_between, boundary_distance, buffer, contains, convex_hull, locate_point_multi,
    point_segment_distance, polygon_distance, segments_cross, segments_intersect, shortest_line,
    simplify_polygon, BufferOptions, LineString, Location, MultiPolygon, Point, PolygonWithHoles,
    Segment,
};
use crate::ragbuild::{ClassLabel, PixelMask, RegionGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    /// Pixel-center distance under which two regions count as neighbours.
    pub neighbour_tolerance: f64,
    pub dp_epsilon: f64,
    /// Radius of the buff/debuff closing applied to merged rooms.
    pub closing_radius: f64,
    pub angle_min: f64,
    pub ortho_tol: f64,
    pub alg2_eps: f64,
    /// Distance under which a wall segment is associated with a room.
    pub association_tolerance: f64,
    pub min_sliver_area: f64,
    pub buffer: BufferOptions,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            neighbour_tolerance: 4.5,
            dp_epsilon: 1.0,
            closing_radius: 1.0,
            angle_min: 40.0,
            ortho_tol: 10.0,
            alg2_eps: 0.5,
            association_tolerance: 1.5,
            min_sliver_area: 1.0,
            buffer: BufferOptions::default(),
        }
    }
}

// ---- neighbourhood --------------------------------------------------------

/// Symmetric region neighbourhood with contact counts (pixel pairs within
/// tolerance), used as a boundary-length proxy for tie-breaks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Neighbourhood {
    contacts: BTreeMap<(u32, u32), usize>,
}

impl Neighbourhood {
    /// Rasterizes every node polygon onto the plan grid and counts center
    /// pairs closer than `tolerance`. RAG edges are always included.
    pub fn build(g: &RegionGraph, tolerance: f64) -> Self {
        let (w, h) = (g.width.max(1), g.height.max(1));
        let mut labels = vec![0u32; w * h];
        for (&id, n) in &g.nodes {
            let m = PixelMask::of_polygon(&n.region.polygon, w, h);
            for (x, y) in m.pixels() {
                labels[y * w + x] = id;
            }
        }
        let r = tolerance.max(1.0).floor() as i64;
        let t2 = tolerance * tolerance;
        let mut offsets = Vec::new();
        for dy in 0..=r {
            for dx in -r..=r {
                if (dy > 0 || dx > 0) && ((dx * dx + dy * dy) as f64) <= t2 {
                    offsets.push((dx, dy));
                }
            }
        }
        let mut contacts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let a = labels[y as usize * w + x as usize];
                if a == 0 {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let b = labels[ny as usize * w + nx as usize];
                    if b != 0 && b != a {
                        *contacts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                    }
                }
            }
        }
        for &(a, b, _) in &g.edges {
            contacts.entry((a.min(b), a.max(b))).or_insert(1);
        }
        Neighbourhood { contacts }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = ((u32, u32), usize)>) -> Self {
        Neighbourhood {
            contacts: pairs
                .into_iter()
                .map(|((a, b), c)| ((a.min(b), a.max(b)), c))
                .collect(),
        }
    }

    pub fn contact(&self, a: u32, b: u32) -> usize {
        self.contacts
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0)
    }

    pub fn adjacent(&self, a: u32, b: u32) -> bool {
        a != b && self.contact(a, b) > 0
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32, usize)> + '_ {
        self.contacts.iter().map(|(&(a, b), &c)| (a, b, c))
    }
}

fn ids_with(g: &RegionGraph, c: ClassLabel) -> Vec<u32> {
    g.nodes
        .iter()
        .filter(|(_, n)| n.label == Some(c))
        .map(|(&k, _)| k)
        .collect()
}

fn area_of(g: &RegionGraph, id: u32) -> f64 {
    g.nodes[&id].region.area
}

fn union_all<'a>(polys: impl IntoIterator<Item = &'a PolygonWithHoles>) -> MultiPolygon {
    let mut acc = MultiPolygon::default();
    for p in polys {
        acc = acc.union(&MultiPolygon::from(p.clone()));
    }
    acc
}

// ---- door splitting -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoorSplit {
    /// Part drawn in the room; `None` for doors without a visible swing.
    pub swing: Option<u32>,
    /// Part that lies inside the wall.
    pub embedded: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DoorSplitResult {
    pub splits: Vec<DoorSplit>,
    /// Door regions left without a partner although a neighbouring door
    /// existed (e.g. three mutually adjacent door regions).
    pub flagged: Vec<u32>,
}

/// Pairs neighbouring door regions. Within each connected group the
/// largest unmatched door is paired with its largest unmatched neighbour;
/// the larger of a pair is the swing, equal areas make the lower id the
/// swing. Doors without partner are embedded-only.
pub fn split_doors(g: &RegionGraph, nb: &Neighbourhood) -> DoorSplitResult {
    let doors = ids_with(g, ClassLabel::Door);
    let bigger =
        |a: u32, b: u32| -> Ordering { area_of(g, b).total_cmp(&area_of(g, a)).then(a.cmp(&b)) };
    let mut order = doors.clone();
    order.sort_by(|&a, &b| bigger(a, b));
    let mut matched: BTreeSet<u32> = BTreeSet::new();
    let mut out = DoorSplitResult::default();
    for &d in &order {
        if matched.contains(&d) {
            continue;
        }
        let partner = order
            .iter()
            .copied()
            .filter(|&o| o != d && !matched.contains(&o) && nb.adjacent(d, o))
            .min_by(|&a, &b| bigger(a, b));
        matched.insert(d);
        match partner {
            Some(p) => {
                matched.insert(p);
                let (swing, embedded) = if bigger(d, p) == Ordering::Less {
                    (d, p)
                } else {
                    (p, d)
                };
                out.splits.push(DoorSplit {
                    swing: Some(swing),
                    embedded,
                });
            }
            None => {
                if doors.iter().any(|&o| o != d && nb.adjacent(d, o)) {
                    log::warn!("door region {d} has only already-paired door neighbours; kept as embedded-only");
                    out.flagged.push(d);
                }
                out.splits.push(DoorSplit {
                    swing: None,
                    embedded: d,
                });
            }
        }
    }
    out.splits.sort_by_key(|s| s.embedded);
    out
}

// ---- merging --------------------------------------------------------------

/// A group of regions absorbed into one target node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedGroup {
    pub id: u32,
    pub members: Vec<u32>,
    pub attachments: Vec<u32>,
    pub polygon: MultiPolygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    pub groups: BTreeMap<u32, MergedGroup>,
    pub unattached: Vec<u32>,
    pub iterations: usize,
}

/// Fixed-point attachment: in every round each still-free mergeable
/// region joins the neighbouring group with the largest contact count
/// (ties to the lower group id); all joins of a round apply together.
pub fn attach_fixed_point(
    targets: &[u32],
    mergeable: &[u32],
    nb: &Neighbourhood,
) -> (BTreeMap<u32, Vec<u32>>, Vec<u32>, usize) {
    let mut owner: BTreeMap<u32, u32> = targets.iter().map(|&t| (t, t)).collect();
    let mut free: BTreeSet<u32> = mergeable
        .iter()
        .copied()
        .filter(|m| !owner.contains_key(m))
        .collect();
    let mut iterations = 0;
    loop {
        let mut joins = Vec::new();
        for &m in &free {
            let mut score: BTreeMap<u32, usize> = BTreeMap::new();
            for (&member, &grp) in &owner {
                let c = nb.contact(m, member);
                if c > 0 {
                    *score.entry(grp).or_insert(0) += c;
                }
            }
            if let Some((&grp, _)) = score.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
                joins.push((m, grp));
            }
        }
        if joins.is_empty() {
            break;
        }
        iterations += 1;
        for (m, grp) in joins {
            owner.insert(m, grp);
            free.remove(&m);
        }
    }
    let mut groups: BTreeMap<u32, Vec<u32>> = targets.iter().map(|&t| (t, Vec::new())).collect();
    for (&m, &grp) in &owner {
        if m != grp {
            groups.get_mut(&grp).expect("group exists").push(m);
        }
    }
    (groups, free.into_iter().collect(), iterations)
}

fn closing(m: &MultiPolygon, radius: f64, opts: BufferOptions) -> MultiPolygon {
    if radius <= 0.0 || m.is_empty() {
        return m.clone();
    }
    // a closing contains its input; the union undoes the chord error of
    // the polygonal arcs at convex corners
    buffer(&buffer(m, radius, opts), -radius, opts).union(m)
}

fn simplify_multi(m: &MultiPolygon, eps: f64) -> MultiPolygon {
    if eps <= 0.0 {
        return m.clone();
    }
    MultiPolygon::new(
        m.polygons
            .iter()
            .map(|p| simplify_polygon(p, eps))
            .collect(),
    )
}

/// Merges objects, stairs and door swings into the room regions they
/// touch, then simplifies and closes each merged room.
pub fn merge_rooms(
    g: &RegionGraph,
    doors: &DoorSplitResult,
    nb: &Neighbourhood,
    cfg: &PostprocessConfig,
) -> MergeResult {
    let rooms = ids_with(g, ClassLabel::Room);
    let mut mergeable: Vec<u32> = g
        .nodes
        .iter()
        .filter(|(_, n)| matches!(n.label, Some(ClassLabel::Object) | Some(ClassLabel::Stair)))
        .map(|(&k, _)| k)
        .collect();
    mergeable.extend(doors.splits.iter().filter_map(|s| s.swing));
    mergeable.sort_unstable();
    let (groups, unattached, iterations) = attach_fixed_point(&rooms, &mergeable, nb);
    let groups = groups
        .into_iter()
        .map(|(id, attachments)| {
            let mut members = vec![id];
            members.extend(&attachments);
            members.sort_unstable();
            let raw = union_all(members.iter().map(|m| &g.nodes[m].region.polygon));
            let polygon = closing(
                &simplify_multi(&raw, cfg.dp_epsilon),
                cfg.closing_radius,
                cfg.buffer,
            );
            (
                id,
                MergedGroup {
                    id,
                    members,
                    attachments,
                    polygon,
                },
            )
        })
        .collect();
    MergeResult {
        groups,
        unattached,
        iterations,
    }
}

/// Walls absorb embedded door parts and windows; the union is simplified
/// into `P_wall`.
pub fn merge_walls(
    g: &RegionGraph,
    doors: &DoorSplitResult,
    nb: &Neighbourhood,
    cfg: &PostprocessConfig,
) -> MultiPolygon {
    let walls = ids_with(g, ClassLabel::Wall);
    if walls.is_empty() {
        return MultiPolygon::default();
    }
    let mut mergeable = ids_with(g, ClassLabel::Window);
    mergeable.extend(doors.splits.iter().map(|s| s.embedded));
    mergeable.sort_unstable();
    let (groups, _, _) = attach_fixed_point(&walls, &mergeable, nb);
    let members = groups
        .iter()
        .flat_map(|(&w, att)| std::iter::once(w).chain(att.iter().copied()));
    let polys: Vec<&PolygonWithHoles> = members.map(|m| &g.nodes[&m].region.polygon).collect();
    simplify_multi(&union_all(polys), cfg.dp_epsilon).without_slivers(cfg.min_sliver_area)
}

// ---- room connectivity ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Room,
    Porch,
    OuterSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceNode {
    pub id: u32,
    pub kind: SpaceKind,
    pub members: Vec<u32>,
    pub attachments: Vec<u32>,
    pub polygon: MultiPolygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorNode {
    pub id: u32,
    pub swing: Option<u32>,
    pub embedded: u32,
    pub polygon: MultiPolygon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RcgEdge {
    pub door: u32,
    pub space: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConnectivityGraph {
    pub spaces: Vec<SpaceNode>,
    pub doors: Vec<DoorNode>,
    pub edges: Vec<RcgEdge>,
    /// Building footprint: the holes of the outer-space polygon.
    pub footprint: MultiPolygon,
}

impl RoomConnectivityGraph {
    pub fn room_count(&self) -> usize {
        self.spaces
            .iter()
            .filter(|s| s.kind == SpaceKind::Room)
            .count()
    }

    pub fn door_degree(&self, door: u32) -> usize {
        self.edges.iter().filter(|e| e.door == door).count()
    }

    /// Edges join a door with a space, never two spaces or two doors.
    pub fn is_bipartite(&self) -> bool {
        let spaces: BTreeSet<u32> = self.spaces.iter().map(|s| s.id).collect();
        let doors: BTreeSet<u32> = self.doors.iter().map(|d| d.id).collect();
        self.edges
            .iter()
            .all(|e| doors.contains(&e.door) && spaces.contains(&e.space))
    }

    /// For every door, the sorted set of space ids it links.
    pub fn topology(&self) -> BTreeMap<u32, Vec<u32>> {
        let mut t: BTreeMap<u32, Vec<u32>> =
            self.doors.iter().map(|d| (d.id, Vec::new())).collect();
        for e in &self.edges {
            t.entry(e.door).or_default().push(e.space);
        }
        for v in t.values_mut() {
            v.sort_unstable();
        }
        t
    }
}

/// Links each door to every room, porch or outer-space node neighbouring
/// either of its parts.
pub fn room_connectivity(
    g: &RegionGraph,
    rooms: &MergeResult,
    doors: &DoorSplitResult,
    nb: &Neighbourhood,
) -> RoomConnectivityGraph {
    let mut spaces: Vec<SpaceNode> = rooms
        .groups
        .values()
        .map(|grp| SpaceNode {
            id: grp.id,
            kind: SpaceKind::Room,
            members: grp.members.clone(),
            attachments: grp.attachments.clone(),
            polygon: grp.polygon.clone(),
        })
        .collect();
    for p in ids_with(g, ClassLabel::Porch) {
        spaces.push(SpaceNode {
            id: p,
            kind: SpaceKind::Porch,
            members: vec![p],
            attachments: Vec::new(),
            polygon: MultiPolygon::from(g.nodes[&p].region.polygon.clone()),
        });
    }
    let outer = ids_with(g, ClassLabel::OuterSpace);
    let mut footprint = MultiPolygon::default();
    if !outer.is_empty() {
        let polygon = union_all(outer.iter().map(|o| &g.nodes[o].region.polygon));
        let holes: Vec<PolygonWithHoles> = polygon
            .polygons
            .iter()
            .flat_map(|p| p.interiors().iter())
            .filter_map(|ring| PolygonWithHoles::new(ring.clone(), Vec::new()).ok())
            .collect();
        footprint = union_all(holes.iter());
        spaces.push(SpaceNode {
            id: outer[0],
            kind: SpaceKind::OuterSpace,
            members: outer.clone(),
            attachments: Vec::new(),
            polygon,
        });
    }
    spaces.sort_by_key(|s| s.id);

    let mut door_nodes = Vec::new();
    let mut edges = BTreeSet::new();
    for s in &doors.splits {
        let parts: Vec<u32> = std::iter::once(s.embedded).chain(s.swing).collect();
        let polygon = union_all(parts.iter().map(|p| &g.nodes[p].region.polygon));
        door_nodes.push(DoorNode {
            id: s.embedded,
            swing: s.swing,
            embedded: s.embedded,
            polygon,
        });
        for sp in &spaces {
            let members = sp.members.iter().chain(&sp.attachments);
            let linked = members
                .clone()
                .any(|m| parts.iter().any(|&p| nb.adjacent(p, *m)));
            // a swing merged into a room links that room as well
            let owns_swing = s.swing.is_some_and(|sw| sp.attachments.contains(&sw));
            if linked || owns_swing {
                edges.insert(RcgEdge {
                    door: s.embedded,
                    space: sp.id,
                });
            }
        }
    }
    RoomConnectivityGraph {
        spaces,
        doors: door_nodes,
        edges: edges.into_iter().collect(),
        footprint,
    }
}

// ---- separation lines -----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Best,
    SecondBest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationLine {
    pub segment: Segment,
    pub origin_point: Point,
    pub kind: LineKind,
}

fn orthogonal(a: &Segment, b: &Segment, tol: f64) -> bool {
    angle_between(a, b).is_ok_and(|ang| ang >= 90.0 - tol)
}

/// For every ring vertex, the shortest wall-contained line to any ring
/// edge that is near-orthogonal to that edge or to an edge incident to the
/// vertex, plus the next longer such line at more than `angle_min` to it.
/// Of any two properly crossing lines the longer one is dropped.
pub fn separation_lines(
    p_wall: &MultiPolygon,
    angle_min: f64,
    ortho_tol: f64,
) -> Vec<SeparationLine> {
    let rings: Vec<&LineString> = p_wall.rings().collect();
    let edges: Vec<Segment> = rings.iter().flat_map(|r| r.segments()).collect();
    let mut lines: Vec<SeparationLine> = Vec::new();
    for ring in &rings {
        let verts = ring.ring_vertices();
        let n = verts.len();
        for i in 0..n {
            let pt = verts[i];
            let prev = Segment::new(verts[(i + n - 1) % n], pt).ok();
            let next = Segment::new(pt, verts[(i + 1) % n]).ok();
            let mut candidates: Vec<Segment> = edges
                .iter()
                .filter_map(|e| {
                    let sl = shortest_line(pt, *e)?;
                    let ortho = orthogonal(&sl, e, ortho_tol)
                        || prev.is_some_and(|s| orthogonal(&sl, &s, ortho_tol))
                        || next.is_some_and(|s| orthogonal(&sl, &s, ortho_tol));
                    (ortho && contains(p_wall, &sl)).then_some(sl)
                })
                .collect();
            if candidates.is_empty() {
                continue;
            }
            candidates.sort_by(|a, b| a.length().total_cmp(&b.length()));
            let best = candidates[0];
            lines.push(SeparationLine {
                segment: best,
                origin_point: pt,
                kind: LineKind::Best,
            });
            if let Some(second) = candidates[1..]
                .iter()
                .find(|c| angle_between(c, &best).is_ok_and(|a| a > angle_min))
            {
                lines.push(SeparationLine {
                    segment: *second,
                    origin_point: pt,
                    kind: LineKind::SecondBest,
                });
            }
        }
    }
    let mut unique: Vec<SeparationLine> = Vec::new();
    for l in lines {
        if !unique.iter().any(|u| u.segment.same_as(&l.segment, 1e-9)) {
            unique.push(l);
        }
    }
    remove_crossing_lines(unique)
}

/// Repeatedly removes the longer line of a properly crossing pair.
pub fn remove_crossing_lines(mut lines: Vec<SeparationLine>) -> Vec<SeparationLine> {
    loop {
        let mut worst: Option<usize> = None;
        'outer: for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                if segments_cross(&lines[i].segment, &lines[j].segment) {
                    let li = lines[i].segment.length();
                    let lj = lines[j].segment.length();
                    worst = Some(if lj > li { j } else { i });
                    break 'outer;
                }
            }
        }
        match worst {
            Some(k) => {
                lines.remove(k);
            }
            None => return lines,
        }
    }
}

// ---- polygon construction -------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    /// Hull clipped to `P_wall`.
    pub polygon: PolygonWithHoles,
    /// Convex hull of the lines bounding the segment.
    pub hull: PolygonWithHoles,
    pub room_ids: Vec<u32>,
    /// Clipping removed more than 1% of the hull.
    pub clipped: bool,
    /// Emitted without a convex hull because no interior point qualified.
    pub fallback: bool,
}

const NODE_TOL: f64 = 1e-6;

/// Splits every line at endpoints of other lines lying on its interior and
/// removes duplicates.
pub fn node_lines(lines: &[Segment]) -> Vec<Segment> {
    let endpoints: Vec<Point> = lines.iter().flat_map(|s| [s.a, s.b]).collect();
    let mut out: Vec<Segment> = Vec::new();
    for s in lines {
        let d = s.direction();
        let len2 = d.dot(d);
        let mut ts: Vec<f64> = endpoints
            .iter()
            .filter(|&&p| point_segment_distance(p, *s) <= NODE_TOL)
            .map(|&p| (p - s.a).dot(d) / len2)
            .filter(|&t| t > 1e-9 && t < 1.0 - 1e-9)
            .collect();
        ts.push(0.0);
        ts.push(1.0);
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() * len2.sqrt() <= NODE_TOL);
        for w in ts.windows(2) {
            if let Ok(piece) = Segment::new(s.a.lerp(s.b, w[0]), s.a.lerp(s.b, w[1])) {
                if !out.iter().any(|o| o.same_as(&piece, NODE_TOL)) {
                    out.push(piece);
                }
            }
        }
    }
    out
}

fn clearance(part: &PolygonWithHoles, lines: &[Segment], p: Point) -> f64 {
    let boundary = part
        .edges()
        .map(|e| point_segment_distance(p, e))
        .fold(f64::INFINITY, f64::min);
    let inside = matches!(geometry::locate_point(part, p), Location::Inside);
    if !inside {
        return -boundary;
    }
    lines
        .iter()
        .map(|l| point_segment_distance(p, *l))
        .fold(boundary, f64::min)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    c: Point,
    h: f64,
    d: f64,
    max: f64,
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.max == o.max
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cell {
    fn cmp(&self, o: &Self) -> Ordering {
        self.max.total_cmp(&o.max)
    }
}

/// Point of `part` farthest from its boundary and from `lines`
/// (quadtree search to `precision`).
pub fn pole_of_inaccessibility(
    part: &PolygonWithHoles,
    lines: &[Segment],
    precision: f64,
) -> Option<(Point, f64)> {
    let bb = part.bbox();
    let size = bb.width().min(bb.height());
    if size <= 0.0 {
        return None;
    }
    let local: Vec<Segment> = lines
        .iter()
        .copied()
        .filter(|l| {
            let lb = geometry::BBox::of_points(&[l.a, l.b]);
            lb.intersects(&bb)
        })
        .collect();
    let f = |p: Point| clearance(part, &local, p);
    let mk = |c: Point, h: f64| {
        let d = f(c);
        Cell {
            c,
            h,
            d,
            max: d + h * std::f64::consts::SQRT_2,
        }
    };
    let mut heap = BinaryHeap::new();
    let h = size / 2.0;
    let mut y = bb.min.y;
    while y < bb.max.y {
        let mut x = bb.min.x;
        while x < bb.max.x {
            heap.push(mk(Point::new(x + h, y + h), h));
            x += size;
        }
        y += size;
    }
    let mut best = mk(geometry::centroid(part).unwrap_or(bb.min), 0.0);
    let center = mk(
        Point::new((bb.min.x + bb.max.x) / 2.0, (bb.min.y + bb.max.y) / 2.0),
        0.0,
    );
    if center.d > best.d {
        best = center;
    }
    let mut budget = 20_000;
    while let Some(cell) = heap.pop() {
        if cell.d > best.d {
            best = cell;
        }
        if cell.max - best.d <= precision || budget == 0 {
            continue;
        }
        budget -= 1;
        let h2 = cell.h / 2.0;
        for (dx, dy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
            heap.push(mk(Point::new(cell.c.x + dx * h2, cell.c.y + dy * h2), h2));
        }
    }
    (best.d > 0.0).then_some((best.c, best.d))
}

fn shortened(a: Point, b: Point) -> Option<Segment> {
    let len = a.dist(b);
    if len <= 1e-9 {
        return None;
    }
    let t = (1.0 - 1e-6 / len.max(1.0)).max(0.0);
    Segment::new(a, a.lerp(b, t)).ok()
}

fn blocked(ray: Option<Segment>, others: &[Segment], skip: Option<usize>) -> bool {
    match ray {
        None => false,
        Some(r) => others
            .iter()
            .enumerate()
            .any(|(k, o)| Some(k) != skip && segments_intersect(&r, o)),
    }
}

/// Lines visible from `p`, ordered by distance, with the midpoint pruning
/// pass applied.
fn visible_lines(p: Point, lines: &[Segment]) -> Vec<Segment> {
    let mut order: Vec<(f64, Segment)> = lines
        .iter()
        .map(|l| (point_segment_distance(p, *l), *l))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut added: Vec<Segment> = Vec::new();
    for (_, l) in order {
        let foot = geometry::closest_point_on_segment(p, l);
        if !blocked(shortened(p, foot), &added, None) {
            added.push(l);
        }
    }
    let mut k = 0;
    while k < added.len() {
        let mp = added[k].midpoint();
        if blocked(shortened(p, mp), &added, Some(k)) {
            added.remove(k);
        } else {
            k += 1;
        }
    }
    added
}

/// Carves `p_wall` into convex pieces bounded by its ring edges and the
/// separation lines.
pub fn construct_polygons(
    p_wall: &MultiPolygon,
    lines: &[SeparationLine],
    cfg: &PostprocessConfig,
) -> Vec<WallSegment> {
    let mut all: Vec<Segment> = p_wall.edges().collect();
    all.extend(lines.iter().map(|l| l.segment));
    let noded = node_lines(&all);
    let seps: Vec<Segment> = lines.iter().map(|l| l.segment).collect();
    let total = p_wall.area();
    let mut remaining = p_wall.clone().without_slivers(cfg.min_sliver_area);
    let mut out = Vec::new();
    let max_iter = 4 * noded.len() + 64;
    for _ in 0..max_iter {
        if remaining.area() < cfg.min_sliver_area {
            break;
        }
        let mut pick: Option<(Point, f64)> = None;
        for part in &remaining.polygons {
            if let Some((pt, d)) = pole_of_inaccessibility(part, &seps, 0.05) {
                if d > cfg.alg2_eps && pick.is_none_or(|b| d > b.1) {
                    pick = Some((pt, d));
                }
            }
        }
        let Some((pt, _)) = pick else { break };
        let mut candidates: Vec<Segment> = noded
            .iter()
            .copied()
            .filter(|l| {
                !matches!(
                    locate_point_multi(&remaining, l.midpoint()),
                    Location::Outside
                )
            })
            .collect();
        // edges of `remaining` created by earlier subtractions are noded too,
        // so an unsplit edge never spans several pieces
        candidates.extend(remaining.edges());
        let candidates = node_lines(&candidates);
        let added = visible_lines(pt, &candidates);
        let hull = match convex_hull(&added) {
            Ok(h) => h,
            Err(_) => break,
        };
        let clipped_m = MultiPolygon::from(hull.clone()).intersection(&remaining);
        let clipped_area = clipped_m.area();
        if clipped_area < 1e-9 {
            break;
        }
        let hull_area = geometry::area(&hull).unwrap_or(0.0);
        let clipped = hull_area - clipped_area > 0.01 * hull_area;
        remaining = remaining
            .difference(&clipped_m)
            .without_slivers(cfg.min_sliver_area);
        for piece in clipped_m.without_slivers(cfg.min_sliver_area).polygons {
            out.push(WallSegment {
                polygon: piece,
                hull: hull.clone(),
                room_ids: Vec::new(),
                clipped,
                fallback: false,
            });
        }
    }
    if remaining.area() >= cfg.min_sliver_area {
        log::warn!(
            "wall splitting left {:.1} of {:.1} px² without a convex cover; emitted as fallback segments",
            remaining.area(),
            total
        );
        for part in remaining.polygons {
            out.push(WallSegment {
                hull: part.clone(),
                polygon: part,
                room_ids: Vec::new(),
                clipped: false,
                fallback: true,
            });
        }
    }
    out
}

/// Associates each segment with every space polygon within `tolerance`;
/// segments touching none go to `orphan_target` when given.
pub fn associate_walls(
    segments: &mut [WallSegment],
    spaces: &[(u32, MultiPolygon)],
    tolerance: f64,
    orphan_target: Option<u32>,
) {
    for s in segments.iter_mut() {
        let sb = s.polygon.bbox().expanded(tolerance);
        let mut ids: Vec<u32> = spaces
            .iter()
            .filter(|(_, m)| {
                m.polygons.iter().any(|p| {
                    p.bbox().intersects(&sb) && polygon_distance(&s.polygon, p) <= tolerance
                })
            })
            .map(|(id, _)| *id)
            .collect();
        if ids.is_empty() {
            ids.extend(orphan_target);
        }
        ids.sort_unstable();
        ids.dedup();
        s.room_ids = ids;
    }
}

// ---- orchestration --------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PostprocessOutput {
    pub doors: DoorSplitResult,
    pub rooms: MergeResult,
    pub rcg: RoomConnectivityGraph,
    pub p_wall: MultiPolygon,
    pub separation_lines: Vec<SeparationLine>,
    pub wall_segments: Vec<WallSegment>,
}

pub fn postprocess(g: &RegionGraph, cfg: &PostprocessConfig) -> PostprocessOutput {
    let nb = Neighbourhood::build(g, cfg.neighbour_tolerance);
    let doors = split_doors(g, &nb);
    let rooms = merge_rooms(g, &doors, &nb, cfg);
    let rcg = room_connectivity(g, &rooms, &doors, &nb);
    let p_wall = merge_walls(g, &doors, &nb, cfg);
    let (separation_lines, mut wall_segments) = if p_wall.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let lines = separation_lines(&p_wall, cfg.angle_min, cfg.ortho_tol);
        let segs = construct_polygons(&p_wall, &lines, cfg);
        (lines, segs)
    };
    let spaces: Vec<(u32, MultiPolygon)> = rcg
        .spaces
        .iter()
        .map(|s| (s.id, s.polygon.clone()))
        .collect();
    let outer = rcg
        .spaces
        .iter()
        .find(|s| s.kind == SpaceKind::OuterSpace)
        .map(|s| s.id);
    associate_walls(
        &mut wall_segments,
        &spaces,
        cfg.association_tolerance,
        outer,
    );
    PostprocessOutput {
        doors,
        rooms,
        rcg,
        p_wall,
        separation_lines,
        wall_segments,
    }
}

/// Minimum distance between any separation line and the complement of
/// `P_wall`, used by containment checks: `0` means fully inside.
pub fn line_outside_distance(p_wall: &MultiPolygon, s: &Segment) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..=16 {
        let p = s.a.lerp(s.b, k as f64 / 16.0);
        if matches!(locate_point_multi(p_wall, p), Location::Outside) {
            worst = worst.max(boundary_distance(p_wall, p));
        }
    }
    worst
}
