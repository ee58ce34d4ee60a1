//! C ABI over the floorplan library.
//!
//! Objects cross the boundary as opaque handles created by `*_new` / `*_load`
//! style constructors and released with the matching `*_free`. Every fallible
//! function returns an [`FpStatus`]; on failure a message is kept per thread
//! and can be copied out with [`fp_last_error_message`]. Panics never unwind
//! into the caller; they surface as [`FpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use floorplan::classify::{ClassifierModel, NodeClassifier};
use floorplan::geometry::{LineString, Point, PolygonWithHoles};
use floorplan::pipeline::{graph_stage, rcg_json, walls_json, PipelineConfig, PipelineError};
use floorplan::postprocess::postprocess;
use floorplan::ragbuild::RegionGraph;
use floorplan::raster::{load_gray, GrayRaster};
use floorplan::zernike::{invariant_ratio, ZernikeExtractor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    /// A pipeline stage failed on valid input.
    Stage = 4,
    /// The output buffer is too small; the required size was reported.
    BufferTooSmall = 5,
    Panic = 6,
}

/// Pipeline configuration handle.
pub struct FpConfig(PipelineConfig);

/// Grayscale image handle.
pub struct FpImage(GrayRaster);

/// Region adjacency graph handle.
pub struct FpGraph(RegionGraph);

/// Trained classifier handle.
pub struct FpModel(ClassifierModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

struct Failure(FpStatus, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::Input(_) => FpStatus::InvalidInput,
            PipelineError::Io { .. } => FpStatus::Io,
            PipelineError::Stage { .. } => FpStatus::Stage,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FpStatus::InvalidInput, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(FpStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FpStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn as_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| invalid(format!("{name} is not UTF-8: {e}")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| invalid(e.to_string()))
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Version string of the library, statically allocated.
#[no_mangle]
pub extern "C" fn fp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of the calling thread into `buf`,
/// NUL-terminated and truncated to `capacity`. Returns the full message
/// length excluding the terminator, or 0 if there is no error.
///
/// # Safety
/// `buf` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fp_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && capacity > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates a configuration with default values.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn fp_config_new_default(out: *mut *mut FpConfig) -> FpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(FpConfig(PipelineConfig::default())));
        Ok(())
    })
}

/// Parses and validates a JSON configuration. Missing fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_config_from_json(
    json: *const c_char,
    out: *mut *mut FpConfig,
) -> FpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = PipelineConfig::from_json(as_str(json, "json")?)?;
        *out = Box::into_raw(Box::new(FpConfig(cfg)));
        Ok(())
    })
}

/// Serializes a configuration to JSON. Release the string with
/// [`fp_string_free`].
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_config_to_json(
    cfg: *const FpConfig,
    out: *mut *mut c_char,
) -> FpStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let out = out_ptr(out, "out")?;
        *out = into_c_string(cfg.0.to_json())?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_config_free(cfg: *mut FpConfig) {
    free_box(cfg)
}

/// Loads a grayscale image (PNG or PGM) from disk.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_image_load(path: *const c_char, out: *mut *mut FpImage) -> FpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = Path::new(as_str(path, "path")?);
        let img = load_gray(path)
            .map_err(|e| Failure(FpStatus::Io, format!("{}: {e}", path.display())))?;
        *out = Box::into_raw(Box::new(FpImage(img)));
        Ok(())
    })
}

/// Copies `width * height` row-major 8-bit pixels into a new image.
///
/// # Safety
/// `pixels` must point to `width * height` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn fp_image_from_gray(
    pixels: *const u8,
    width: usize,
    height: usize,
    out: *mut *mut FpImage,
) -> FpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| invalid("image size overflows"))?;
        let values = std::slice::from_raw_parts(pixels, n).to_vec();
        let img = GrayRaster::new(width, height, values).map_err(|e| invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(FpImage(img)));
        Ok(())
    })
}

/// Reports the image size.
///
/// # Safety
/// `img` must be a live handle; `width` and `height` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fp_image_size(
    img: *const FpImage,
    width: *mut usize,
    height: *mut usize,
) -> FpStatus {
    guard(|| {
        let img = as_ref(img, "img")?;
        *out_ptr(width, "width")? = img.0.width();
        *out_ptr(height, "height")? = img.0.height();
        Ok(())
    })
}

/// # Safety
/// `img` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_image_free(img: *mut FpImage) {
    free_box(img)
}

/// Preprocesses the image and builds its unlabeled region graph.
///
/// # Safety
/// `img` and `cfg` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_build_rag(
    img: *const FpImage,
    cfg: *const FpConfig,
    out: *mut *mut FpGraph,
) -> FpStatus {
    guard(|| {
        let img = as_ref(img, "img")?;
        let cfg = as_ref(cfg, "cfg")?;
        let out = out_ptr(out, "out")?;
        cfg.0.validate()?;
        let (_, g) = graph_stage(&img.0, &[], &cfg.0)?;
        *out = Box::into_raw(Box::new(FpGraph(g)));
        Ok(())
    })
}

/// Parses a graph previously written with [`fp_graph_to_json`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_from_json(
    json: *const c_char,
    out: *mut *mut FpGraph,
) -> FpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let g =
            RegionGraph::from_json(as_str(json, "json")?).map_err(|e| invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(FpGraph(g)));
        Ok(())
    })
}

/// # Safety
/// `g` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_node_count(g: *const FpGraph, out: *mut usize) -> FpStatus {
    guard(|| {
        let g = as_ref(g, "graph")?;
        *out_ptr(out, "out")? = g.0.node_count();
        Ok(())
    })
}

/// # Safety
/// `g` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_edge_count(g: *const FpGraph, out: *mut usize) -> FpStatus {
    guard(|| {
        let g = as_ref(g, "graph")?;
        *out_ptr(out, "out")? = g.0.edges.len();
        Ok(())
    })
}

/// Serializes the graph to JSON. Release the string with [`fp_string_free`].
///
/// # Safety
/// `g` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_to_json(g: *const FpGraph, out: *mut *mut c_char) -> FpStatus {
    guard(|| {
        let g = as_ref(g, "graph")?;
        let out = out_ptr(out, "out")?;
        *out = into_c_string(g.0.to_json())?;
        Ok(())
    })
}

/// Labels every node of the graph with the model's prediction.
///
/// # Safety
/// `g` and `model` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_predict(g: *mut FpGraph, model: *const FpModel) -> FpStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        let g = out_ptr(g, "graph")?;
        let labels = model
            .0
            .predict(&g.0)
            .map_err(|e| Failure(FpStatus::Stage, format!("predict: {e}")))?;
        g.0.set_labels(&labels);
        Ok(())
    })
}

/// Runs post-processing on a fully labeled graph. The room connectivity
/// graph and the wall segments are returned as JSON strings; either output
/// pointer may be null when not needed.
///
/// # Safety
/// `g` and `cfg` must be live handles; outputs null or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fp_postprocess(
    g: *const FpGraph,
    cfg: *const FpConfig,
    rcg_out: *mut *mut c_char,
    walls_out: *mut *mut c_char,
) -> FpStatus {
    guard(|| {
        let g = as_ref(g, "graph")?;
        let cfg = as_ref(cfg, "cfg")?;
        if !g.0.is_fully_labeled() {
            return Err(invalid("graph has unlabeled nodes"));
        }
        let post = postprocess(&g.0, &cfg.0.postprocess);
        if let Some(o) = rcg_out.as_mut() {
            *o = into_c_string(rcg_json(&post))?;
        }
        if let Some(o) = walls_out.as_mut() {
            *o = into_c_string(walls_json(&post))?;
        }
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_free(g: *mut FpGraph) {
    free_box(g)
}

/// Parses a trained model from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_model_from_json(
    json: *const c_char,
    out: *mut *mut FpModel,
) -> FpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = ClassifierModel::from_json(as_str(json, "json")?)
            .map_err(|e| invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(FpModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_model_free(model: *mut FpModel) {
    free_box(model)
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn polygon_from_xy(xy: *const f64, n_points: usize) -> Result<PolygonWithHoles, Failure> {
    if xy.is_null() {
        return Err(null("xy"));
    }
    let len = n_points
        .checked_mul(2)
        .ok_or_else(|| invalid("point count overflows"))?;
    let coords = std::slice::from_raw_parts(xy, len);
    let pts: Vec<Point> = coords
        .chunks_exact(2)
        .map(|c| Point::new(c[0], c[1]))
        .collect();
    let ring = LineString::new_ring(pts).map_err(|e| invalid(e.to_string()))?;
    PolygonWithHoles::new(ring, Vec::new()).map_err(|e| invalid(e.to_string()))
}

/// Invariant ratio `A / (π r²)` of the simple polygon given as `n_points`
/// interleaved `x, y` pairs.
///
/// # Safety
/// `xy` must point to `2 * n_points` readable doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn fp_invariant_ratio(
    xy: *const f64,
    n_points: usize,
    out: *mut f64,
) -> FpStatus {
    guard(|| {
        let p = polygon_from_xy(xy, n_points)?;
        let out = out_ptr(out, "out")?;
        *out = invariant_ratio(&p).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Normalized Zernike amplitudes of a simple polygon, using the Zernike
/// settings of `cfg`. `written` always receives the feature count; when it
/// exceeds `capacity` nothing is copied and
/// [`FpStatus::BufferTooSmall`] is returned.
///
/// # Safety
/// `xy` must point to `2 * n_points` readable doubles, `out` to `capacity`
/// writable doubles (or be null when `capacity` is 0), `written` be valid.
#[no_mangle]
pub unsafe extern "C" fn fp_zernike_features(
    xy: *const f64,
    n_points: usize,
    cfg: *const FpConfig,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> FpStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let written = out_ptr(written, "written")?;
        let p = polygon_from_xy(xy, n_points)?;
        let ex = ZernikeExtractor::new(cfg.0.rag.zernike).map_err(|e| invalid(e.to_string()))?;
        let f = ex.features(&p).map_err(|e| invalid(e.to_string()))?;
        *written = f.amplitudes.len();
        if f.amplitudes.len() > capacity {
            return Err(Failure(
                FpStatus::BufferTooSmall,
                format!(
                    "need {} values, buffer holds {capacity}",
                    f.amplitudes.len()
                ),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping(f.amplitudes.as_ptr(), out, f.amplitudes.len());
        Ok(())
    })
}
