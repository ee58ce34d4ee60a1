//! Binary, label and gray rasters plus the raster-side operations of the
//! pipeline: thresholding, dilation, contour tracing, component labeling,
//! polygon rasterization and rotation with canvas expansion.
//!
//! Pixel `(x, y)` covers the square `[x, x+1] × [y, y+1]`; its center is
//! `(x + 0.5, y + 0.5)`. Traced contours run along pixel corners.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{merge_collinear, signed_ring_area, LineString, Point, PolygonWithHoles};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be positive (got {0}x{1})")]
    EmptyDimensions(usize, usize),
    #[error("buffer length {got} does not match {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("image decode failed: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RasterError>;

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyDimensions(width, height));
    }
    if width * height != len {
        return Err(RasterError::LengthMismatch {
            width,
            height,
            got: len,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        Ok(GrayRaster {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, v: u8) -> Self {
        assert!(
            width > 0 && height > 0,
            "raster dimensions must be positive"
        );
        GrayRaster {
            width,
            height,
            values: vec![v; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.values[y * self.width + x] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(BinaryRaster {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        assert!(
            width > 0 && height > 0,
            "raster dimensions must be positive"
        );
        BinaryRaster {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn and(&self, o: &BinaryRaster) -> BinaryRaster {
        assert_eq!((self.width, self.height), (o.width, o.height));
        let bits = self
            .bits
            .iter()
            .zip(&o.bits)
            .map(|(&a, &b)| a && b)
            .collect();
        BinaryRaster {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// Foreground rendered black (0) on white (255).
    pub fn to_gray(&self) -> GrayRaster {
        let values = self.bits.iter().map(|&b| if b { 0 } else { 255 }).collect();
        GrayRaster {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelRaster {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        check_dims(width, height, labels.len())?;
        Ok(LabelRaster {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

// ---- pixel operations -----------------------------------------------------

/// Foreground iff intensity < `threshold` (dark ink on white paper).
pub fn binarize(img: &GrayRaster, threshold: u8) -> BinaryRaster {
    BinaryRaster {
        width: img.width,
        height: img.height,
        bits: img.values.iter().map(|&v| v < threshold).collect(),
    }
}

/// Square dilation with a `(2k+1)×(2k+1)` kernel; the border is clamped.
pub fn dilate_square(r: &BinaryRaster, k: usize) -> BinaryRaster {
    let (w, h) = (r.width, r.height);
    // separable: horizontal then vertical running max
    let mut tmp = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(k);
            let hi = (x + k).min(w - 1);
            tmp[y * w + x] = (lo..=hi).any(|xx| r.bits[y * w + xx]);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(k);
        let hi = (y + k).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|yy| tmp[yy * w + x]);
        }
    }
    BinaryRaster {
        width: w,
        height: h,
        bits: out,
    }
}

pub fn dilate3x3(r: &BinaryRaster) -> BinaryRaster {
    dilate_square(r, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Labels maximal connected regions of pixels equal to `value` with ids
/// `1, 2, …` in raster-scan order of their first pixel; other pixels get 0.
pub fn connected_components_of(r: &BinaryRaster, value: bool, conn: Connectivity) -> LabelRaster {
    let (w, h) = (r.width, r.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 1u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if r.bits[start] != value || labels[start] != 0 {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if r.bits[j] == value && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    LabelRaster {
        width: w,
        height: h,
        labels,
    }
}

/// Foreground components.
pub fn connected_components(r: &BinaryRaster, conn: Connectivity) -> LabelRaster {
    connected_components_of(r, true, conn)
}

// ---- boundary tracing -----------------------------------------------------

const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

fn dir_index(d: (i64, i64)) -> usize {
    DIRS.iter().position(|&e| e == d).unwrap()
}

/// How the tracer resolves a saddle vertex where two region pixels touch
/// diagonally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaddleRule {
    /// Keep diagonal pixels apart (4-connected regions).
    Separate,
    /// Join diagonal pixels (8-connected regions).
    Join,
}

/// Traces the pixel-corner boundary of the pixel set `inside` restricted to
/// the window `[x0, x1) × [y0, y1)`. Every cycle keeps the region on its
/// left in raw `(x, y)` coordinates, so outer boundaries come out with
/// positive shoelace area and hole boundaries with negative area. Collinear
/// vertices are merged.
pub fn trace_boundaries(
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
    inside: impl Fn(i64, i64) -> bool,
    rule: SaddleRule,
) -> Vec<Vec<Point>> {
    let vw = (x1 - x0 + 1) as usize;
    let vh = (y1 - y0 + 1) as usize;
    let vidx = |x: i64, y: i64| (y - y0) as usize * vw + (x - x0) as usize;
    let mut out_mask = vec![0u8; vw * vh];
    let inb = |x: i64, y: i64| x >= x0 && y >= y0 && x < x1 && y < y1 && inside(x, y);
    let mut edge_count = 0usize;
    for y in y0..y1 {
        for x in x0..x1 {
            if !inside(x, y) {
                continue;
            }
            if !inb(x, y - 1) {
                out_mask[vidx(x, y)] |= 1 << 0;
                edge_count += 1;
            }
            if !inb(x + 1, y) {
                out_mask[vidx(x + 1, y)] |= 1 << 1;
                edge_count += 1;
            }
            if !inb(x, y + 1) {
                out_mask[vidx(x + 1, y + 1)] |= 1 << 2;
                edge_count += 1;
            }
            if !inb(x - 1, y) {
                out_mask[vidx(x, y + 1)] |= 1 << 3;
                edge_count += 1;
            }
        }
    }
    let mut cycles = Vec::new();
    if edge_count == 0 {
        return cycles;
    }
    for sy in y0..=y1 {
        for sx in x0..=x1 {
            while out_mask[vidx(sx, sy)] != 0 {
                let m = out_mask[vidx(sx, sy)];
                let d0 = m.trailing_zeros() as usize;
                let mut pts = Vec::new();
                let (mut x, mut y) = (sx, sy);
                let mut d = d0;
                loop {
                    out_mask[vidx(x, y)] &= !(1 << d);
                    pts.push(Point::new(x as f64, y as f64));
                    x += DIRS[d].0;
                    y += DIRS[d].1;
                    let m = out_mask[vidx(x, y)];
                    if m == 0 {
                        break;
                    }
                    d = if m.count_ones() == 1 {
                        m.trailing_zeros() as usize
                    } else {
                        let (dx, dy) = DIRS[d];
                        let turn = match rule {
                            SaddleRule::Separate => (-dy, dx),
                            SaddleRule::Join => (dy, -dx),
                        };
                        let t = dir_index(turn);
                        if m & (1 << t) != 0 {
                            t
                        } else {
                            m.trailing_zeros() as usize
                        }
                    };
                }
                let merged = merge_collinear(&pts);
                if merged.len() >= 3 {
                    cycles.push(merged);
                }
            }
        }
    }
    cycles
}

fn component_bboxes(labels: &LabelRaster) -> Vec<(i64, i64, i64, i64)> {
    let n = labels.max_label() as usize;
    let mut bb = vec![(i64::MAX, i64::MAX, i64::MIN, i64::MIN); n + 1];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = ((i % labels.width) as i64, (i / labels.width) as i64);
        let b = &mut bb[l as usize];
        b.0 = b.0.min(x);
        b.1 = b.1.min(y);
        b.2 = b.2.max(x + 1);
        b.3 = b.3.max(y + 1);
    }
    bb
}

/// Pixel-corner polygon (with holes) of the pixels carrying `label`.
/// Returns `None` for an absent label.
pub fn label_polygon(
    labels: &LabelRaster,
    label: u32,
    bbox: (i64, i64, i64, i64),
) -> Option<PolygonWithHoles> {
    let (x0, y0, x1, y1) = bbox;
    if x0 >= x1 {
        return None;
    }
    let w = labels.width;
    let inside = |x: i64, y: i64| labels.labels[y as usize * w + x as usize] == label;
    let cycles = trace_boundaries(x0, y0, x1, y1, inside, SaddleRule::Separate);
    cycles_to_polygon(cycles)
}

fn cycles_to_polygon(cycles: Vec<Vec<Point>>) -> Option<PolygonWithHoles> {
    let (mut outer, mut holes): (Vec<_>, Vec<_>) =
        cycles.into_iter().partition(|c| signed_ring_area(c) > 0.0);
    outer.sort_by(|a, b| signed_ring_area(b).total_cmp(&signed_ring_area(a)));
    let ext = outer.into_iter().next()?;
    let ext = LineString::new_ring(ext).ok()?;
    holes.sort_by(|a, b| signed_ring_area(a).total_cmp(&signed_ring_area(b)));
    let holes = holes
        .into_iter()
        .filter_map(|h| LineString::new_ring(h).ok())
        .collect();
    PolygonWithHoles::new(ext, holes).ok()
}

/// Polygons of every label `1..=max_label` of a label raster (index 0 unused).
pub fn label_polygons(labels: &LabelRaster) -> Vec<Option<PolygonWithHoles>> {
    let bb = component_bboxes(labels);
    let mut out = vec![None];
    for (l, &b) in bb.iter().enumerate().skip(1) {
        out.push(label_polygon(labels, l as u32, b));
    }
    out
}

/// Outer contours of all 8-connected foreground components, as closed
/// pixel-corner rings sorted by descending enclosed area. Equal areas keep
/// the raster-scan order of the components' first pixels.
pub fn trace_contours(r: &BinaryRaster) -> Vec<LineString> {
    let labels = connected_components(r, Connectivity::Eight);
    let bb = component_bboxes(&labels);
    let w = r.width;
    let mut rings: Vec<(f64, LineString)> = Vec::new();
    for (l, &(x0, y0, x1, y1)) in bb.iter().enumerate().skip(1) {
        if x0 >= x1 {
            continue;
        }
        let l = l as u32;
        let inside = |x: i64, y: i64| labels.labels[y as usize * w + x as usize] == l;
        // The outer boundary is the unique positive cycle under the joining
        // saddle rule; hole cycles are negative and ignored.
        let cycles = trace_boundaries(x0, y0, x1, y1, inside, SaddleRule::Join);
        if let Some(best) = cycles
            .into_iter()
            .filter(|c| signed_ring_area(c) > 0.0)
            .max_by(|a, b| signed_ring_area(a).total_cmp(&signed_ring_area(b)))
        {
            let a = signed_ring_area(&best);
            if let Ok(ring) = LineString::new_ring(best) {
                rings.push((a, ring));
            }
        }
    }
    rings.sort_by(|a, b| b.0.total_cmp(&a.0));
    rings.into_iter().map(|(_, r)| r).collect()
}

// ---- rasterization --------------------------------------------------------

/// Axis-aligned sampling window: `cols × rows` cells of size `cell`
/// starting at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridWindow {
    pub origin: Point,
    pub cell: f64,
    pub cols: usize,
    pub rows: usize,
}

impl GridWindow {
    /// `d × d` grid over `[-r, r]²`.
    pub fn centered(r: f64, d: usize) -> Self {
        GridWindow {
            origin: Point::new(-r, -r),
            cell: 2.0 * r / d as f64,
            cols: d,
            rows: d,
        }
    }

    /// The native pixel grid of a `width × height` image.
    pub fn pixels(width: usize, height: usize) -> Self {
        GridWindow {
            origin: Point::new(0.0, 0.0),
            cell: 1.0,
            cols: width,
            rows: height,
        }
    }

    pub fn center(&self, col: usize, row: usize) -> Point {
        Point::new(
            self.origin.x + (col as f64 + 0.5) * self.cell,
            self.origin.y + (row as f64 + 0.5) * self.cell,
        )
    }
}

/// Calls `f(row, col_start, col_end)` for every run of cells whose centers
/// lie inside `p` (even-odd rule over all rings, so holes are excluded).
pub fn scan_polygon(p: &PolygonWithHoles, g: &GridWindow, mut f: impl FnMut(usize, usize, usize)) {
    let edges: Vec<(Point, Point)> = p.edges().map(|s| (s.a, s.b)).collect();
    let bb = p.bbox();
    let row_lo = ((bb.min.y - g.origin.y) / g.cell - 0.5).ceil().max(0.0) as usize;
    let row_hi =
        (((bb.max.y - g.origin.y) / g.cell - 0.5).floor() + 1.0).clamp(0.0, g.rows as f64) as usize;
    let mut xs: Vec<f64> = Vec::new();
    for row in row_lo..row_hi {
        let yc = g.origin.y + (row as f64 + 0.5) * g.cell;
        xs.clear();
        for &(a, b) in &edges {
            // half-open rule on y keeps shared vertices from double counting
            if (a.y <= yc) != (b.y <= yc) {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // cell col has center origin.x + (col+0.5)*cell; include if center in [x0, x1)
            let c0 = ((pair[0] - g.origin.x) / g.cell - 0.5).ceil().max(0.0);
            let c1 = ((pair[1] - g.origin.x) / g.cell - 0.5)
                .ceil()
                .min(g.cols as f64);
            if c1 > c0 {
                f(row, c0 as usize, c1 as usize);
            }
        }
    }
}

/// `rows × cols` mask of the cells whose center lies inside `p`.
pub fn rasterize_window(p: &PolygonWithHoles, g: &GridWindow) -> BinaryRaster {
    let mut out = BinaryRaster::empty(g.cols, g.rows);
    scan_polygon(p, g, |row, c0, c1| {
        for c in c0..c1 {
            out.bits[row * g.cols + c] = true;
        }
    });
    out
}

/// `d × d` rasterization over `[-r, r]²`.
pub fn rasterize(p: &PolygonWithHoles, r: f64, d: usize) -> BinaryRaster {
    rasterize_window(p, &GridWindow::centered(r, d))
}

// ---- rotation -------------------------------------------------------------

/// Affine map taking source image coordinates to the expanded, rotated
/// canvas produced by [`rotate_expand`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationFrame {
    pub angle_deg: f64,
    pub src_center: Point,
    pub dst_center: Point,
    pub width: usize,
    pub height: usize,
}

impl RotationFrame {
    pub fn new(width: usize, height: usize, angle_deg: f64) -> Self {
        let (s, c) = crate::geometry::sin_cos_deg(angle_deg);
        let (w, h) = (width as f64, height as f64);
        let nw = (w * c.abs() + h * s.abs() - 1e-9).ceil().max(1.0) as usize;
        let nh = (w * s.abs() + h * c.abs() - 1e-9).ceil().max(1.0) as usize;
        RotationFrame {
            angle_deg,
            src_center: Point::new(w / 2.0, h / 2.0),
            dst_center: Point::new(nw as f64 / 2.0, nh as f64 / 2.0),
            width: nw,
            height: nh,
        }
    }

    pub fn forward(&self, p: Point) -> Point {
        p.rotate_about(self.src_center, self.angle_deg) - self.src_center + self.dst_center
    }

    pub fn inverse(&self, q: Point) -> Point {
        (q - self.dst_center + self.src_center).rotate_about(self.src_center, -self.angle_deg)
    }
}

/// Rotates about the image center onto the bounding canvas of the rotated
/// image; uncovered pixels are white. Bilinear sampling.
pub fn rotate_expand(img: &GrayRaster, angle_deg: f64) -> GrayRaster {
    let frame = RotationFrame::new(img.width, img.height, angle_deg);
    let mut out = GrayRaster::filled(frame.width, frame.height, 255);
    let sample = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= img.width as i64 || y >= img.height as i64 {
            255.0
        } else {
            f64::from(img.values[y as usize * img.width + x as usize])
        }
    };
    for y in 0..frame.height {
        for x in 0..frame.width {
            let src = frame.inverse(Point::new(x as f64 + 0.5, y as f64 + 0.5));
            let (fx, fy) = (src.x - 0.5, src.y - 0.5);
            if fx < -1.0 || fy < -1.0 || fx > img.width as f64 || fy > img.height as f64 {
                continue;
            }
            let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let v = sample(ix, iy) * (1.0 - tx) * (1.0 - ty)
                + sample(ix + 1, iy) * tx * (1.0 - ty)
                + sample(ix, iy + 1) * (1.0 - tx) * ty
                + sample(ix + 1, iy + 1) * tx * ty;
            out.values[y * frame.width + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Exact vertex rotation about `center`.
pub fn rotate_polygon(p: &PolygonWithHoles, angle_deg: f64, center: Point) -> PolygonWithHoles {
    p.map(|q| q.rotate_about(center, angle_deg))
        .expect("rotation is an isometry")
}

// ---- file IO --------------------------------------------------------------

fn pgm_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = String::new();
    loop {
        let buf = r.fill_buf()?;
        if buf.is_empty() {
            break;
        }
        let c = buf[0];
        if c == b'#' && tok.is_empty() {
            let mut line = String::new();
            r.read_line(&mut line)?;
            continue;
        }
        r.consume(1);
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c as char);
    }
    if tok.is_empty() {
        return Err(RasterError::Pgm("unexpected end of header".into()));
    }
    Ok(tok)
}

/// Reads a binary (P5) PGM with maxval ≤ 255.
pub fn read_pgm(reader: impl Read) -> Result<GrayRaster> {
    let mut r = BufReader::new(reader);
    if pgm_token(&mut r)? != "P5" {
        return Err(RasterError::Pgm("expected P5 magic".into()));
    }
    let parse = |s: String| {
        s.parse::<usize>()
            .map_err(|_| RasterError::Pgm(format!("bad number {s:?}")))
    };
    let w = parse(pgm_token(&mut r)?)?;
    let h = parse(pgm_token(&mut r)?)?;
    let maxval = parse(pgm_token(&mut r)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(RasterError::Pgm(format!("unsupported maxval {maxval}")));
    }
    let mut values = vec![0u8; w * h];
    r.read_exact(&mut values)
        .map_err(|_| RasterError::Pgm("truncated pixel data".into()))?;
    if maxval != 255 {
        for v in &mut values {
            *v = ((u32::from(*v) * 255 + maxval as u32 / 2) / maxval as u32) as u8;
        }
    }
    GrayRaster::new(w, h, values)
}

pub fn write_pgm(img: &GrayRaster, mut w: impl Write) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.values)?;
    Ok(())
}

/// Loads PGM by extension, anything else through the `image` crate
/// (converted to 8-bit luma).
pub fn load_gray(path: &Path) -> Result<GrayRaster> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return read_pgm(std::fs::File::open(path)?);
    }
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    GrayRaster::new(w as usize, h as usize, img.into_raw())
}

/// Saves as PGM for `.pgm`, otherwise as PNG.
pub fn save_gray(img: &GrayRaster, path: &Path) -> Result<()> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        return write_pgm(img, f);
    }
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.values.clone())
        .expect("dimensions checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::area;

    fn raster_from(rows: &[&str]) -> BinaryRaster {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryRaster::new(w, h, bits).unwrap()
    }

    #[test]
    fn binarize_examples() {
        assert!(binarize(&GrayRaster::filled(4, 3, 255), 128).is_empty());
        assert_eq!(binarize(&GrayRaster::filled(4, 3, 0), 128).count(), 12);
        let checker: Vec<u8> = (0..16)
            .map(|i| if (i % 4 + i / 4) % 2 == 0 { 0 } else { 255 })
            .collect();
        let b = binarize(&GrayRaster::new(4, 4, checker).unwrap(), 128);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(b.get(x, y), (x + y) % 2 == 0);
            }
        }
    }

    #[test]
    fn dilate_examples() {
        let mut r = BinaryRaster::empty(11, 11);
        r.set(5, 5, true);
        let d = dilate3x3(&r);
        assert_eq!(d.count(), 9);
        for y in 4..=6 {
            for x in 4..=6 {
                assert!(d.get(x, y));
            }
        }
        assert!(dilate3x3(&BinaryRaster::empty(5, 5)).is_empty());
        let gap = raster_from(&["#.#"]);
        assert_eq!(dilate3x3(&gap).count(), 3);
        // clamped border
        let corner = raster_from(&["#..", "...", "..."]);
        assert_eq!(dilate3x3(&corner).count(), 4);
    }

    #[test]
    fn trace_contours_examples() {
        let mut r = BinaryRaster::empty(20, 20);
        for y in 3..13 {
            for x in 4..14 {
                r.set(x, y, true);
            }
        }
        let c = trace_contours(&r);
        assert_eq!(c.len(), 1);
        assert_eq!(signed_ring_area(c[0].ring_vertices()), 100.0);
        assert_eq!(c[0].ring_vertices().len(), 4);
        assert!(trace_contours(&BinaryRaster::empty(5, 5)).is_empty());
        let two = raster_from(&["#....", ".....", "..###", "..###", "..###"]);
        let c = trace_contours(&two);
        assert_eq!(c.len(), 2);
        assert_eq!(signed_ring_area(c[0].ring_vertices()), 9.0);
        assert_eq!(signed_ring_area(c[1].ring_vertices()), 1.0);
    }

    #[test]
    fn trace_contours_joins_diagonals_and_ignores_holes() {
        let diag = raster_from(&["#.", ".#"]);
        let c = trace_contours(&diag);
        assert_eq!(c.len(), 1);
        assert_eq!(signed_ring_area(c[0].ring_vertices()), 2.0);
        let ring = raster_from(&["###", "#.#", "###"]);
        let c = trace_contours(&ring);
        assert_eq!(signed_ring_area(c[0].ring_vertices()), 9.0);
    }

    #[test]
    fn components_examples() {
        let two = raster_from(&["##...", "##...", "...##"]);
        let l = connected_components(&two, Connectivity::Four);
        assert_eq!(l.get(0, 0), 1);
        assert_eq!(l.get(4, 2), 2);
        assert_eq!(l.max_label(), 2);
        assert_eq!(
            connected_components(&BinaryRaster::empty(3, 3), Connectivity::Four).max_label(),
            0
        );
        let ring = raster_from(&["#####", "#...#", "#...#", "#####", "....."]);
        let bg = connected_components_of(&ring, false, Connectivity::Four);
        assert_eq!(bg.max_label(), 2);
        assert_ne!(bg.get(2, 2), bg.get(0, 4));
        // diagonal contact: separate under 4, joined under 8
        let d = raster_from(&["#.", ".#"]);
        assert_eq!(connected_components(&d, Connectivity::Four).max_label(), 2);
        assert_eq!(connected_components(&d, Connectivity::Eight).max_label(), 1);
    }

    #[test]
    fn label_polygon_has_holes() {
        let ring = raster_from(&["#####", "#...#", "#...#", "#####"]);
        let l = connected_components(&ring, Connectivity::Four);
        let polys = label_polygons(&l);
        let p = polys[1].as_ref().unwrap();
        assert_eq!(p.interiors().len(), 1);
        assert_eq!(area(p).unwrap(), 14.0);
    }

    #[test]
    fn rasterize_examples() {
        let sq = PolygonWithHoles::rect(-1.0, -1.0, 1.0, 1.0).unwrap();
        assert_eq!(rasterize(&sq, 1.0, 4).count(), 16);
        let far = PolygonWithHoles::rect(5.0, 5.0, 6.0, 6.0).unwrap();
        assert!(rasterize(&far, 1.0, 8).is_empty());
        let half = PolygonWithHoles::rect(-1.0, -1.0, 0.0, 1.0).unwrap();
        let f = rasterize(&half, 1.0, 100).count() as f64 / 10_000.0;
        assert!((f - 0.5).abs() <= 0.02);
    }

    #[test]
    fn rasterize_matches_pixel_polygons() {
        let rows = ["..####..", ".##..##.", ".#....#.", ".######."];
        let r = raster_from(&rows);
        let l = connected_components(&r, Connectivity::Four);
        let p = label_polygons(&l)[1].clone().unwrap();
        let back = rasterize_window(&p, &GridWindow::pixels(r.width(), r.height()));
        assert_eq!(back, r);
    }

    #[test]
    fn rotate_expand_examples() {
        let vals: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
        let img = GrayRaster::new(4, 3, vals).unwrap();
        assert_eq!(rotate_expand(&img, 0.0), img);
        let r90 = rotate_expand(&img, 90.0);
        assert_eq!((r90.width(), r90.height()), (3, 4));
        // forward map of pixel centers carries values exactly
        let frame = RotationFrame::new(4, 3, 90.0);
        for y in 0..3 {
            for x in 0..4 {
                let q = frame.forward(Point::new(x as f64 + 0.5, y as f64 + 0.5));
                assert_eq!(r90.get(q.x as usize, q.y as usize), img.get(x, y));
            }
        }
        let big = GrayRaster::filled(100, 100, 0);
        let r45 = rotate_expand(&big, 45.0);
        assert_eq!((r45.width(), r45.height()), (142, 142));
        assert_eq!(r45.get(0, 0), 255);
        assert_eq!(r45.get(71, 71), 0);
    }

    #[test]
    fn four_quarter_turns_restore_image() {
        let vals: Vec<u8> = (0..35).map(|i| (i * 7) as u8).collect();
        let img = GrayRaster::new(7, 5, vals).unwrap();
        let mut r = img.clone();
        for _ in 0..4 {
            r = rotate_expand(&r, 90.0);
        }
        assert_eq!(r, img);
    }

    #[test]
    fn rotate_polygon_examples() {
        let sq = PolygonWithHoles::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(rotate_polygon(&sq, 0.0, Point::new(3.0, 3.0)), sq);
        let r = rotate_polygon(&sq, 90.0, Point::new(0.5, 0.5));
        assert!((area(&r).unwrap() - 1.0).abs() < 1e-12);
        for v in r.exterior().points() {
            assert!(v.x.fract() == 0.0 && v.y.fract() == 0.0 && (0.0..=1.0).contains(&v.x));
        }
        let tri = PolygonWithHoles::from_points(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.5),
            Point::new(1.0, 2.0),
        ])
        .unwrap();
        let r = rotate_polygon(&tri, 37.0, Point::new(1.0, 1.0));
        assert!((area(&r).unwrap() - area(&tri).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let img = GrayRaster::new(3, 2, vec![0, 10, 20, 200, 255, 7]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&img, &mut buf).unwrap();
        assert_eq!(&buf[..11], b"P5\n3 2\n255\n");
        assert_eq!(read_pgm(&buf[..]).unwrap(), img);
        let with_comment = b"P5\n# made by hand\n3 2\n255\n\x00\x0a\x14\xc8\xff\x07";
        assert_eq!(read_pgm(&with_comment[..]).unwrap(), img);
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n255\n\x00"[..]).is_err());
    }
}
