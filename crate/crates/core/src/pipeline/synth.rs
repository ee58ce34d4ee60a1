//! Synthetic floor plans with exact ground truth.
//!
//! The building is a rectangle recursively split into rooms. Walls are solid
//! ink. A door is drawn as a white pocket inside the wall, bounded by 2 px
//! face lines on both sides, plus a swing glyph (leaf and quarter arc) in
//! one of the two rooms, kept 1 px away from the wall. Windows are longer
//! pockets in exterior walls. Objects are filled rectangles, stairs are
//! outlined rectangles with stripes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{MultiPolygon, Point, PolygonWithHoles};
use crate::preprocess::TextBox;
use crate::ragbuild::ClassLabel;
use crate::raster::{rotate_expand, GrayRaster, RotationFrame};

const FACE: i64 = 2;
const GAP: f64 = 1.0;
const ARC_SEGMENTS: usize = 16;
const MARGIN: i64 = 24;
const SUBDIVISION_ATTEMPTS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible plan: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPlanSpec {
    pub rooms: usize,
    pub canvas: usize,
    pub wall_width: usize,
    pub door_width: usize,
    pub window_count: usize,
    /// Applied to the finished plan with canvas expansion.
    pub rotation: f64,
    pub seed: u64,
    pub max_objects_per_room: usize,
    pub stairs: usize,
    pub porch: bool,
    /// Adds a text-like legend outside the building and reports its box.
    pub legend: bool,
}

impl Default for SyntheticPlanSpec {
    fn default() -> Self {
        SyntheticPlanSpec {
            rooms: 5,
            canvas: 320,
            wall_width: 8,
            door_width: 16,
            window_count: 3,
            rotation: 0.0,
            seed: 0,
            max_objects_per_room: 2,
            stairs: 1,
            porch: false,
            legend: false,
        }
    }
}

/// A space on one side of a door.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceRef {
    Room(usize),
    Outer,
}

/// Half-open integer pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl IRect {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        IRect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> i64 {
        self.width().max(0) * self.height().max(0)
    }

    pub fn expanded(&self, d: i64) -> IRect {
        IRect::new(self.x0 - d, self.y0 - d, self.x1 + d, self.y1 + d)
    }

    pub fn overlaps(&self, o: &IRect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }

    pub fn contains_rect(&self, o: &IRect) -> bool {
        o.x0 >= self.x0 && o.x1 <= self.x1 && o.y0 >= self.y0 && o.y1 <= self.y1
    }

    pub fn polygon(&self) -> PolygonWithHoles {
        PolygonWithHoles::rect(
            self.x0 as f64,
            self.y0 as f64,
            self.x1 as f64,
            self.y1 as f64,
        )
        .expect("non-empty rectangle")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorInfo {
    pub spaces: (SpaceRef, SpaceRef),
    pub swing_room: usize,
    pub embedded: IRect,
    pub swing: PolygonWithHoles,
    /// Ink pixels of the drawn swing glyph.
    pub swing_ink: usize,
}

/// Ground-truth layout, available to tests and the closure check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanLayout {
    pub building: IRect,
    pub rooms: Vec<IRect>,
    pub doors: Vec<DoorInfo>,
    pub windows: Vec<IRect>,
    pub objects: Vec<IRect>,
    pub stairs: Vec<IRect>,
    pub porch: Option<IRect>,
}

impl PlanLayout {
    /// Sorted list of the space pairs each door connects.
    pub fn door_topology(&self) -> Vec<(SpaceRef, SpaceRef)> {
        let mut t: Vec<(SpaceRef, SpaceRef)> = self
            .doors
            .iter()
            .map(|d| (d.spaces.0.min(d.spaces.1), d.spaces.0.max(d.spaces.1)))
            .collect();
        t.sort();
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPlan {
    pub image: GrayRaster,
    pub truth: Vec<(PolygonWithHoles, ClassLabel)>,
    pub boxes: Vec<TextBox>,
    /// Layout in the coordinates of the unrotated plan.
    pub layout: PlanLayout,
    /// Maps unrotated coordinates into `image` when a rotation was applied.
    pub frame: Option<RotationFrame>,
}

struct Canvas {
    w: i64,
    h: i64,
    ink: Vec<bool>,
}

impl Canvas {
    fn new(w: i64, h: i64) -> Self {
        Canvas {
            w,
            h,
            ink: vec![false; (w * h) as usize],
        }
    }

    fn put(&mut self, x: i64, y: i64, v: bool) {
        if x >= 0 && y >= 0 && x < self.w && y < self.h {
            self.ink[(y * self.w + x) as usize] = v;
        }
    }

    fn fill(&mut self, r: &IRect, v: bool) {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                self.put(x, y, v);
            }
        }
    }

    fn to_gray(&self) -> GrayRaster {
        let vals = self.ink.iter().map(|&b| if b { 0 } else { 255 }).collect();
        GrayRaster::new(self.w as usize, self.h as usize, vals).expect("sized buffer")
    }
}

/// A door or window opening in a wall band. Vertical walls occupy
/// `x ∈ [s, s + w)` with the opening along `y ∈ [t, t + len)`.
#[derive(Debug, Clone, Copy)]
struct Opening {
    vertical: bool,
    s: i64,
    t: i64,
    len: i64,
}

impl Opening {
    fn pocket(&self, w: i64) -> IRect {
        if self.vertical {
            IRect::new(self.s + FACE, self.t, self.s + w - FACE, self.t + self.len)
        } else {
            IRect::new(self.t, self.s + FACE, self.t + self.len, self.s + w - FACE)
        }
    }

    /// Face position and unit normal into the room on the low (`false`) or
    /// high (`true`) coordinate side of the wall.
    fn face(&self, w: i64, high: bool) -> (f64, Point) {
        let (pos, sign) = if high {
            ((self.s + w) as f64, 1.0)
        } else {
            (self.s as f64, -1.0)
        };
        let into = if self.vertical {
            Point::new(sign, 0.0)
        } else {
            Point::new(0.0, sign)
        };
        (pos, into)
    }

    /// Region a swing on the given side sweeps, as a pixel rectangle.
    fn footprint(&self, w: i64, high: bool) -> IRect {
        let d = self.len;
        let (lo, hi) = if high {
            (self.s + w, self.s + w + d)
        } else {
            (self.s - d, self.s)
        };
        if self.vertical {
            IRect::new(lo, self.t, hi, self.t + self.len)
        } else {
            IRect::new(self.t, lo, self.t + self.len, hi)
        }
    }
}

struct Swing {
    sector: PolygonWithHoles,
    pixels: Vec<(i64, i64)>,
}

fn draw_swing(op: &Opening, w: i64, high: bool, hinge_at_start: bool) -> Swing {
    let r = op.len as f64;
    let (face, into) = op.face(w, high);
    let (t0, along) = if hinge_at_start {
        (op.t as f64, 1.0)
    } else {
        ((op.t + op.len) as f64, -1.0)
    };
    let (hinge, along) = if op.vertical {
        (Point::new(face, t0), Point::new(0.0, along))
    } else {
        (Point::new(t0, face), Point::new(along, 0.0))
    };
    let mut pts = vec![hinge];
    for k in 0..=ARC_SEGMENTS {
        let th = std::f64::consts::FRAC_PI_2 * k as f64 / ARC_SEGMENTS as f64;
        pts.push(hinge + along.scale(r * th.cos()) + into.scale(r * th.sin()));
    }
    let sector = PolygonWithHoles::from_points(pts).expect("quarter disk");

    let pocket_area = op.pocket(w).area();
    let fp = op.footprint(w, high);
    let collect = |leaf: f64| -> Vec<(i64, i64)> {
        let mut px = Vec::new();
        for y in fp.y0..fp.y1 {
            for x in fp.x0..fp.x1 {
                let c = Point::new(x as f64 + 0.5, y as f64 + 0.5) - hinge;
                let (a, b) = (c.dot(along), c.dot(into));
                let d = (a * a + b * b).sqrt();
                if a >= 0.0 && b >= GAP && d < r && (a < leaf || d >= r - 2.0) {
                    px.push((x, y));
                }
            }
        }
        px
    };
    // the swing part must stay the larger door region
    let mut leaf = 3.0;
    let mut pixels = collect(leaf);
    while (pixels.len() as i64) <= pocket_area && leaf < r / 2.0 {
        leaf += 1.0;
        pixels = collect(leaf);
    }
    Swing { sector, pixels }
}

/// Splits the interior into `n` rooms. Unlucky cut positions can leave no
/// splittable cell, so a bounded number of fresh attempts is made.
fn subdivide(
    interior: IRect,
    n: usize,
    w: i64,
    min_side: i64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<IRect>, SynthError> {
    let mut last = None;
    for _ in 0..SUBDIVISION_ATTEMPTS {
        match subdivide_once(interior, n, w, min_side, rng) {
            Ok(cells) => return Ok(cells),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// One guillotine pass: repeatedly cuts the largest splittable cell across
/// its longer side at a random position.
fn subdivide_once(
    interior: IRect,
    n: usize,
    w: i64,
    min_side: i64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<IRect>, SynthError> {
    let mut cells = vec![interior];
    while cells.len() < n {
        let splittable = |c: &IRect| c.width().max(c.height()) >= 2 * min_side + w;
        let pick = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| splittable(c))
            .max_by_key(|(i, c)| (c.area(), std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
            .ok_or_else(|| {
                SynthError::Infeasible(format!("cannot fit {n} rooms with minimum side {min_side}"))
            })?;
        let c = cells.remove(pick);
        let vertical = c.width() >= c.height();
        let (lo, hi) = if vertical { (c.x0, c.x1) } else { (c.y0, c.y1) };
        let s = rng.gen_range(lo + min_side..=hi - w - min_side);
        let (a, b) = if vertical {
            (
                IRect::new(c.x0, c.y0, s, c.y1),
                IRect::new(s + w, c.y0, c.x1, c.y1),
            )
        } else {
            (
                IRect::new(c.x0, c.y0, c.x1, s),
                IRect::new(c.x0, s + w, c.x1, c.y1),
            )
        };
        cells.insert(pick, b);
        cells.insert(pick, a);
    }
    Ok(cells)
}

fn union_rects(rs: impl IntoIterator<Item = IRect>) -> MultiPolygon {
    let mut acc = MultiPolygon::default();
    for r in rs {
        acc = acc.union(&MultiPolygon::from(r.polygon()));
    }
    acc
}

fn place_rect(
    room: &IRect,
    size: (i64, i64),
    forbidden: &[IRect],
    clearance: i64,
    rng: &mut ChaCha8Rng,
) -> Option<IRect> {
    let inner = room.expanded(-clearance);
    for _ in 0..60 {
        let (w, h) = if rng.gen_bool(0.5) {
            size
        } else {
            (size.1, size.0)
        };
        if inner.width() < w || inner.height() < h {
            continue;
        }
        let x = rng.gen_range(inner.x0..=inner.x1 - w);
        let y = rng.gen_range(inner.y0..=inner.y1 - h);
        let r = IRect::new(x, y, x + w, y + h);
        if forbidden
            .iter()
            .all(|f| !f.expanded(clearance).overlaps(&r))
        {
            return Some(r);
        }
    }
    None
}

fn validate(spec: &SyntheticPlanSpec) -> Result<(), SynthError> {
    let bad = |m: &str| Err(SynthError::Infeasible(m.to_string()));
    if spec.rooms < 1 {
        return bad("at least one room is required");
    }
    if !(6..=10).contains(&spec.wall_width) {
        return bad("wall_width must be within 6..=10");
    }
    if spec.door_width < 12 {
        return bad("door_width must be at least 12");
    }
    if !spec.rotation.is_finite() {
        return bad("rotation must be finite");
    }
    Ok(())
}

/// Generates a plan raster and its labeled truth polygons. The truth tiles
/// the canvas: every pixel belongs to exactly one truth polygon.
pub fn generate_synthetic(spec: &SyntheticPlanSpec) -> Result<SyntheticPlan, SynthError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.canvas as i64;
    let w = spec.wall_width as i64;
    let dw = spec.door_width as i64;
    let m = dw + 4;
    let min_side = 3 * dw + 8;
    let avail = n - 2 * MARGIN;
    if avail < min_side + 2 * w {
        return Err(SynthError::Infeasible(format!("canvas {n} too small")));
    }
    let bw = rng.gen_range((avail * 4 / 5).max(min_side + 2 * w)..=avail);
    let bh = rng.gen_range((avail * 4 / 5).max(min_side + 2 * w)..=avail);
    let building = IRect::new(MARGIN, MARGIN, MARGIN + bw, MARGIN + bh);
    let interior = building.expanded(-w);
    let rooms = subdivide(interior, spec.rooms, w, min_side, &mut rng)?;

    let mut canvas = Canvas::new(n, n);
    canvas.fill(&building, true);
    for r in &rooms {
        canvas.fill(r, false);
    }

    let mut doors: Vec<DoorInfo> = Vec::new();
    let mut pockets: Vec<IRect> = Vec::new();
    let mut forbidden: Vec<Vec<IRect>> = vec![Vec::new(); rooms.len()];
    let mut sectors: Vec<Vec<PolygonWithHoles>> = vec![Vec::new(); rooms.len()];
    // openings already cut into each exterior side
    let mut exterior_used: Vec<(bool, i64, i64, i64)> = Vec::new();

    let mut add_door = |op: Opening,
                        low: SpaceRef,
                        high: SpaceRef,
                        canvas: &mut Canvas,
                        rng: &mut ChaCha8Rng,
                        doors: &mut Vec<DoorInfo>,
                        pockets: &mut Vec<IRect>| {
        let pocket = op.pocket(w);
        canvas.fill(&pocket, false);
        pockets.push(pocket);
        let high_side = match (low, high) {
            (SpaceRef::Outer, _) => true,
            (_, SpaceRef::Outer) => false,
            _ => rng.gen_bool(0.5),
        };
        let room = match if high_side { high } else { low } {
            SpaceRef::Room(i) => i,
            SpaceRef::Outer => unreachable!("swings open into rooms"),
        };
        let swing = draw_swing(&op, w, high_side, rng.gen_bool(0.5));
        for &(x, y) in &swing.pixels {
            canvas.put(x, y, true);
        }
        forbidden[room].push(op.footprint(w, high_side));
        sectors[room].push(swing.sector.clone());
        doors.push(DoorInfo {
            spaces: (low, high),
            swing_room: room,
            embedded: pocket,
            swing: swing.sector,
            swing_ink: swing.pixels.len(),
        });
    };

    // interior doors on every shared wall long enough to hold one
    for i in 0..rooms.len() {
        for j in 0..rooms.len() {
            let (a, b) = (rooms[i], rooms[j]);
            let (vertical, s, o0, o1) = if a.x1 + w == b.x0 {
                (true, a.x1, a.y0.max(b.y0), a.y1.min(b.y1))
            } else if a.y1 + w == b.y0 {
                (false, a.y1, a.x0.max(b.x0), a.x1.min(b.x1))
            } else {
                continue;
            };
            if o1 - o0 < 2 * m + dw {
                continue;
            }
            let t = rng.gen_range(o0 + m..=o1 - m - dw);
            let op = Opening {
                vertical,
                s,
                t,
                len: dw,
            };
            add_door(
                op,
                SpaceRef::Room(i),
                SpaceRef::Room(j),
                &mut canvas,
                &mut rng,
                &mut doors,
                &mut pockets,
            );
        }
    }

    // exterior sides per room: (vertical, wall s, along lo, along hi, room is on high side)
    let exterior_sides = |r: &IRect| {
        let mut v = Vec::new();
        if r.x0 == interior.x0 {
            v.push((true, building.x0, r.y0, r.y1, true));
        }
        if r.x1 == interior.x1 {
            v.push((true, interior.x1, r.y0, r.y1, false));
        }
        if r.y0 == interior.y0 {
            v.push((false, building.y0, r.x0, r.x1, true));
        }
        if r.y1 == interior.y1 {
            v.push((false, interior.y1, r.x0, r.x1, false));
        }
        v
    };

    // entrance
    let mut entrance_sides: Vec<(usize, (bool, i64, i64, i64, bool))> = Vec::new();
    for (i, r) in rooms.iter().enumerate() {
        for side in exterior_sides(r) {
            if side.3 - side.2 >= 2 * m + dw {
                entrance_sides.push((i, side));
            }
        }
    }
    if entrance_sides.is_empty() {
        return Err(SynthError::Infeasible(
            "no exterior wall can hold an entrance".into(),
        ));
    }
    let (ri, (vertical, s, lo, hi, room_high)) =
        entrance_sides[rng.gen_range(0..entrance_sides.len())];
    let t = rng.gen_range(lo + m..=hi - m - dw);
    let op = Opening {
        vertical,
        s,
        t,
        len: dw,
    };
    let (low, high) = if room_high {
        (SpaceRef::Outer, SpaceRef::Room(ri))
    } else {
        (SpaceRef::Room(ri), SpaceRef::Outer)
    };
    add_door(
        op,
        low,
        high,
        &mut canvas,
        &mut rng,
        &mut doors,
        &mut pockets,
    );
    exterior_used.push((vertical, s, t, t + dw));

    // windows
    let mut windows = Vec::new();
    let all_sides: Vec<(bool, i64, i64, i64, bool)> =
        rooms.iter().flat_map(exterior_sides).collect();
    let mut attempts = 0;
    while windows.len() < spec.window_count
        && attempts < 50 * spec.window_count.max(1)
        && !all_sides.is_empty()
    {
        attempts += 1;
        let (vertical, s, lo, hi, _) = all_sides[rng.gen_range(0..all_sides.len())];
        let len = rng.gen_range(20..=40);
        if hi - lo < len + 12 {
            continue;
        }
        let t = rng.gen_range(lo + 6..=hi - 6 - len);
        let clash = exterior_used
            .iter()
            .any(|&(v, s2, a, b)| v == vertical && s2 == s && t < b + 6 && a < t + len + 6);
        if clash {
            continue;
        }
        let op = Opening {
            vertical,
            s,
            t,
            len,
        };
        let pocket = op.pocket(w);
        canvas.fill(&pocket, false);
        windows.push(pocket);
        exterior_used.push((vertical, s, t, t + len));
    }

    // stairs and objects
    let mut stairs = Vec::new();
    for _ in 0..spec.stairs {
        let ri = rng.gen_range(0..rooms.len());
        let size = (rng.gen_range(20..=26), rng.gen_range(28..=40));
        if let Some(r) = place_rect(&rooms[ri], size, &forbidden[ri], 3, &mut rng) {
            canvas.fill(&r, true);
            let inner = r.expanded(-1);
            canvas.fill(&inner, false);
            let horizontal_stripes = r.height() >= r.width();
            let (lo, hi) = if horizontal_stripes {
                (inner.y0, inner.y1)
            } else {
                (inner.x0, inner.x1)
            };
            let mut k = lo + 3;
            while k + 3 <= hi {
                let stripe = if horizontal_stripes {
                    IRect::new(inner.x0, k, inner.x1, k + 1)
                } else {
                    IRect::new(k, inner.y0, k + 1, inner.y1)
                };
                canvas.fill(&stripe, true);
                k += 4;
            }
            forbidden[ri].push(r);
            stairs.push((ri, r));
        }
    }
    let mut objects = Vec::new();
    for ri in 0..rooms.len() {
        let count = rng.gen_range(0..=spec.max_objects_per_room);
        for _ in 0..count {
            let size = (rng.gen_range(5..=14), rng.gen_range(5..=14));
            if let Some(r) = place_rect(&rooms[ri], size, &forbidden[ri], 3, &mut rng) {
                canvas.fill(&r, true);
                forbidden[ri].push(r);
                objects.push((ri, r));
            }
        }
    }

    // porch on the top side, fenced by a 2 px rail
    let mut porch = None;
    let mut rails = Vec::new();
    if spec.porch {
        let pw = rng.gen_range(40..=60).min(building.width() - 2 * w);
        let x0 = rng.gen_range(building.x0 + w..=building.x1 - w - pw);
        let area = IRect::new(x0, building.y0 - 20, x0 + pw, building.y0);
        rails = vec![
            IRect::new(area.x0, area.y0, area.x1, area.y0 + 2),
            IRect::new(area.x0, area.y0 + 2, area.x0 + 2, area.y1),
            IRect::new(area.x1 - 2, area.y0 + 2, area.x1, area.y1),
        ];
        for r in &rails {
            canvas.fill(r, true);
        }
        porch = Some(IRect::new(area.x0 + 2, area.y0 + 2, area.x1 - 2, area.y1));
    }

    let mut boxes = Vec::new();
    if spec.legend {
        let (x0, y0) = (4, (n - MARGIN + 6).min(n - 8));
        let mut x = x0;
        for _ in 0..rng.gen_range(4..=7) {
            let gw = rng.gen_range(2..=4);
            canvas.fill(&IRect::new(x, y0, x + gw, y0 + 5), true);
            x += gw + 2;
        }
        boxes.push(TextBox {
            x: x0 - 2,
            y: y0 - 2,
            w: x - x0 + 4,
            h: 9,
        });
    }

    // ground truth
    let mut truth: Vec<(PolygonWithHoles, ClassLabel)> = Vec::new();
    let holes_in_walls = union_rects(
        rooms
            .iter()
            .copied()
            .chain(pockets.iter().copied())
            .chain(windows.iter().copied()),
    );
    let walls = MultiPolygon::from(building.polygon()).difference(&holes_in_walls);
    truth.extend(walls.polygons.into_iter().map(|p| (p, ClassLabel::Wall)));
    truth.extend(rails.iter().map(|r| (r.polygon(), ClassLabel::Wall)));
    truth.extend(pockets.iter().map(|p| (p.polygon(), ClassLabel::Door)));
    truth.extend(windows.iter().map(|p| (p.polygon(), ClassLabel::Window)));
    for d in &doors {
        truth.push((d.swing.clone(), ClassLabel::Door));
    }
    for (_, s) in &stairs {
        truth.push((s.polygon(), ClassLabel::Stair));
    }
    for (_, o) in &objects {
        truth.push((o.polygon(), ClassLabel::Object));
    }
    for (i, r) in rooms.iter().enumerate() {
        let mut cut: Vec<PolygonWithHoles> = sectors[i].clone();
        cut.extend(stairs.iter().filter(|s| s.0 == i).map(|s| s.1.polygon()));
        cut.extend(objects.iter().filter(|o| o.0 == i).map(|o| o.1.polygon()));
        let mut cut_m = MultiPolygon::default();
        for c in cut {
            cut_m = cut_m.union(&MultiPolygon::from(c));
        }
        let room = MultiPolygon::from(r.polygon()).difference(&cut_m);
        truth.extend(room.polygons.into_iter().map(|p| (p, ClassLabel::Room)));
    }
    if let Some(p) = porch {
        truth.push((p.polygon(), ClassLabel::Porch));
    }
    let mut occupied = MultiPolygon::from(building.polygon());
    if let Some(p) = porch {
        occupied = occupied.union(&MultiPolygon::from(p.expanded(2).polygon()));
    }
    let canvas_rect = IRect::new(0, 0, n, n);
    let outer = MultiPolygon::from(canvas_rect.polygon()).difference(&occupied);
    truth.extend(
        outer
            .polygons
            .into_iter()
            .map(|p| (p, ClassLabel::OuterSpace)),
    );

    let layout = PlanLayout {
        building,
        rooms,
        doors,
        windows,
        objects: objects.into_iter().map(|o| o.1).collect(),
        stairs: stairs.into_iter().map(|s| s.1).collect(),
        porch,
    };
    let mut plan = SyntheticPlan {
        image: canvas.to_gray(),
        truth,
        boxes,
        layout,
        frame: None,
    };
    if spec.rotation.rem_euclid(360.0) != 0.0 {
        plan = rotate_plan(&plan, spec.rotation);
    }
    Ok(plan)
}

/// Maps truth polygons into a rotation frame; outer space is rebuilt as
/// the expanded canvas minus everything else.
pub fn rotate_truth(
    truth: &[(PolygonWithHoles, ClassLabel)],
    frame: &RotationFrame,
) -> Vec<(PolygonWithHoles, ClassLabel)> {
    let mut out: Vec<(PolygonWithHoles, ClassLabel)> = truth
        .iter()
        .filter(|(_, c)| *c != ClassLabel::OuterSpace)
        .map(|(p, c)| {
            (
                p.map(|q| frame.forward(q))
                    .expect("rotation is an isometry"),
                *c,
            )
        })
        .collect();
    let mut inside = MultiPolygon::default();
    for (p, _) in &out {
        inside = inside.union(&MultiPolygon::from(p.without_holes()));
    }
    let full =
        PolygonWithHoles::rect(0.0, 0.0, frame.width as f64, frame.height as f64).expect("canvas");
    let outer = MultiPolygon::from(full).difference(&inside);
    out.extend(
        outer
            .polygons
            .into_iter()
            .map(|p| (p, ClassLabel::OuterSpace)),
    );
    out
}

/// Axis-aligned box covering a rotated text box.
pub fn rotate_box(b: &TextBox, frame: &RotationFrame) -> TextBox {
    let corners = [
        (b.x, b.y),
        (b.x + b.w, b.y),
        (b.x, b.y + b.h),
        (b.x + b.w, b.y + b.h),
    ]
    .map(|(x, y)| frame.forward(Point::new(x as f64, y as f64)));
    let x0 = corners
        .iter()
        .map(|p| p.x)
        .fold(f64::INFINITY, f64::min)
        .floor() as i64;
    let y0 = corners
        .iter()
        .map(|p| p.y)
        .fold(f64::INFINITY, f64::min)
        .floor() as i64;
    let x1 = corners
        .iter()
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil() as i64;
    let y1 = corners
        .iter()
        .map(|p| p.y)
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil() as i64;
    TextBox {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    }
}

/// Rotates image, truth and text boxes onto the expanded canvas.
pub fn rotate_plan(plan: &SyntheticPlan, angle_deg: f64) -> SyntheticPlan {
    let frame = RotationFrame::new(plan.image.width(), plan.image.height(), angle_deg);
    SyntheticPlan {
        image: rotate_expand(&plan.image, angle_deg),
        truth: rotate_truth(&plan.truth, &frame),
        boxes: plan.boxes.iter().map(|b| rotate_box(b, &frame)).collect(),
        layout: plan.layout.clone(),
        frame: Some(frame),
    }
}

/// Sum of truth areas and area of their union, for tiling checks.
pub fn truth_coverage(truth: &[(PolygonWithHoles, ClassLabel)]) -> (f64, f64) {
    let mut union = MultiPolygon::default();
    let mut sum = 0.0;
    for (p, _) in truth {
        sum += crate::geometry::area(p).unwrap_or(0.0);
        union = union.union(&MultiPolygon::from(p.clone()));
    }
    (sum, union.area())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_room_plan() {
        let spec = SyntheticPlanSpec {
            rooms: 1,
            seed: 3,
            ..Default::default()
        };
        let p = generate_synthetic(&spec).unwrap();
        assert_eq!(p.layout.rooms.len(), 1);
        assert_eq!(p.layout.doors.len(), 1);
        assert_eq!(
            p.layout.door_topology(),
            vec![(SpaceRef::Room(0), SpaceRef::Outer)]
        );
        assert!(p.truth.iter().any(|t| t.1 == ClassLabel::OuterSpace));
        assert_eq!(
            p.truth.iter().filter(|t| t.1 == ClassLabel::Room).count(),
            1
        );
    }

    #[test]
    fn same_seed_same_plan() {
        let spec = SyntheticPlanSpec {
            seed: 11,
            legend: true,
            porch: true,
            ..Default::default()
        };
        assert_eq!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&spec).unwrap()
        );
        let other = SyntheticPlanSpec {
            seed: 12,
            ..spec.clone()
        };
        assert_ne!(
            generate_synthetic(&spec).unwrap().image,
            generate_synthetic(&other).unwrap().image
        );
    }

    #[test]
    fn truth_tiles_canvas() {
        let spec = SyntheticPlanSpec {
            rooms: 5,
            seed: 7,
            porch: true,
            ..Default::default()
        };
        let p = generate_synthetic(&spec).unwrap();
        let canvas = (spec.canvas * spec.canvas) as f64;
        let (sum, union) = truth_coverage(&p.truth);
        // boolean ops on the swing arcs leave float noise only
        assert!((union - canvas).abs() < 1e-9 * canvas, "union {union}");
        assert!((sum - canvas).abs() < 1e-9 * canvas, "sum {sum}");
    }

    #[test]
    fn door_parts_keep_swing_larger() {
        for w in 6..=10 {
            let spec = SyntheticPlanSpec {
                wall_width: w,
                seed: 5,
                ..Default::default()
            };
            let p = generate_synthetic(&spec).unwrap();
            for d in &p.layout.doors {
                assert!(d.swing_ink as i64 > d.embedded.area());
            }
        }
    }

    #[test]
    fn infeasible_specs() {
        assert!(generate_synthetic(&SyntheticPlanSpec {
            rooms: 0,
            ..Default::default()
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticPlanSpec {
            rooms: 60,
            ..Default::default()
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticPlanSpec {
            wall_width: 3,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn rotated_plan_keeps_tiling() {
        let spec = SyntheticPlanSpec {
            rooms: 3,
            seed: 2,
            rotation: 45.0,
            ..Default::default()
        };
        let p = generate_synthetic(&spec).unwrap();
        let f = p.frame.unwrap();
        assert_eq!((p.image.width(), p.image.height()), (f.width, f.height));
        let (sum, union) = truth_coverage(&p.truth);
        let canvas = (f.width * f.height) as f64;
        assert!((union - canvas).abs() < 1e-3 * canvas);
        assert!((sum - canvas).abs() < 1e-3 * canvas);
    }
}
