//! Building extraction: mask text, dilate, keep the largest outer contour,
//! open it with a disk and blank everything outside.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{buffer_polygon, BufferOptions, PolygonWithHoles};
use crate::raster::{
    binarize, connected_components, dilate3x3, rasterize_window, trace_contours, BinaryRaster,
    Connectivity, GrayRaster, GridWindow,
};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("no building found")]
    NoBuilding,
    #[error("outline too thin")]
    OutlineTooThin,
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

/// Axis-aligned text bounding box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl TextBox {
    /// Pixel ranges `[x0, x1) × [y0, y1)` clamped to the image, or `None`
    /// when the box misses it or has no extent.
    pub fn clamped(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        if self.w < 1 || self.h < 1 {
            return None;
        }
        let x0 = self.x.clamp(0, width as i64) as usize;
        let y0 = self.y.clamp(0, height as i64) as usize;
        let x1 = (self.x + self.w).clamp(0, width as i64) as usize;
        let y1 = (self.y + self.h).clamp(0, height as i64) as usize;
        (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub threshold: u8,
    pub refine_radius: f64,
    pub buffer: BufferOptions,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            threshold: 128,
            refine_radius: 5.0,
            buffer: BufferOptions::default(),
        }
    }
}

pub fn mask_text(r: &BinaryRaster, boxes: &[TextBox]) -> BinaryRaster {
    let mut out = r.clone();
    for b in boxes {
        if let Some((x0, y0, x1, y1)) = b.clamped(r.width(), r.height()) {
            for y in y0..y1 {
                for x in x0..x1 {
                    out.set(x, y, false);
                }
            }
        }
    }
    out
}

/// Outer contour of maximal area as a hole-free polygon. Ties go to the
/// component met first in raster-scan order.
pub fn largest_contour(r: &BinaryRaster) -> Result<PolygonWithHoles> {
    let ring = trace_contours(r)
        .into_iter()
        .next()
        .ok_or(PreprocessError::NoBuilding)?;
    PolygonWithHoles::new(ring, Vec::new()).map_err(|_| PreprocessError::NoBuilding)
}

/// Morphological opening with a disk of `radius`; the largest piece wins
/// if erosion splits the outline.
pub fn refine_outline(
    p: &PolygonWithHoles,
    radius: f64,
    opts: BufferOptions,
) -> Result<PolygonWithHoles> {
    let eroded = buffer_polygon(p, -radius, opts);
    let core = eroded.largest().ok_or(PreprocessError::OutlineTooThin)?;
    let opened = buffer_polygon(core, radius, opts);
    opened
        .largest()
        .cloned()
        .ok_or(PreprocessError::OutlineTooThin)
}

/// Clears every pixel whose center lies outside `outline`.
pub fn filter_building(r: &BinaryRaster, outline: &PolygonWithHoles) -> BinaryRaster {
    let inside = rasterize_window(outline, &GridWindow::pixels(r.width(), r.height()));
    r.and(&inside)
}

/// Intermediate products kept for inspection.
#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    pub binary: BinaryRaster,
    pub masked: BinaryRaster,
    pub dilated: BinaryRaster,
    pub contour: PolygonWithHoles,
    pub outline: PolygonWithHoles,
    pub filtered: BinaryRaster,
}

/// Full chain. The dilated raster only drives outline detection; the
/// filter is applied to the masked ink so wall thickness is unchanged.
pub fn preprocess_detailed(
    img: &GrayRaster,
    boxes: &[TextBox],
    cfg: &PreprocessConfig,
) -> Result<PreprocessOutput> {
    let binary = binarize(img, cfg.threshold);
    let masked = mask_text(&binary, boxes);
    let dilated = dilate3x3(&masked);
    let contour = largest_contour(&dilated)?;
    let outline = refine_outline(&contour, cfg.refine_radius, cfg.buffer)?;
    let filtered = filter_building(&masked, &outline);
    if filtered.is_empty() {
        return Err(PreprocessError::NoBuilding);
    }
    Ok(PreprocessOutput {
        binary,
        masked,
        dilated,
        contour,
        outline,
        filtered,
    })
}

pub fn preprocess_pipeline(
    img: &GrayRaster,
    boxes: &[TextBox],
    cfg: &PreprocessConfig,
) -> Result<BinaryRaster> {
    preprocess_detailed(img, boxes, cfg).map(|o| o.filtered)
}

/// Heuristic stand-in for a text detector: bounding boxes of 8-connected
/// ink components with at most `max_area` pixels, grown by `pad`.
pub fn detect_small_components(r: &BinaryRaster, max_area: usize, pad: i64) -> Vec<TextBox> {
    let labels = connected_components(r, Connectivity::Eight);
    let n = labels.max_label() as usize;
    let mut stats = vec![(0usize, i64::MAX, i64::MAX, i64::MIN, i64::MIN); n + 1];
    for (i, &l) in labels.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = ((i % r.width()) as i64, (i / r.width()) as i64);
        let s = &mut stats[l as usize];
        s.0 += 1;
        s.1 = s.1.min(x);
        s.2 = s.2.min(y);
        s.3 = s.3.max(x);
        s.4 = s.4.max(y);
    }
    stats
        .iter()
        .skip(1)
        .filter(|s| s.0 > 0 && s.0 <= max_area)
        .map(|s| TextBox {
            x: s.1 - pad,
            y: s.2 - pad,
            w: s.3 - s.1 + 1 + 2 * pad,
            h: s.4 - s.2 + 1 + 2 * pad,
        })
        .collect()
}
