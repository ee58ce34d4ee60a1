//! Rotation, scale and translation invariant shape descriptors built from
//! Zernike moment amplitudes.
//!
//! A polygon is moved so its centroid is at the origin and scaled to the
//! fixed area `c·r²·π`; its indicator function is then sampled on a `D×D`
//! grid over `[-r, r]²` and projected onto the Zernike basis of the unit
//! disk. Only the moduli `|Z_nm|` are kept, which removes the rotation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, centroid, origin_radius, GeometryError, Point, PolygonWithHoles};
use crate::raster::{scan_polygon, GridWindow};

#[derive(Debug, Error, PartialEq)]
pub enum ZernikeError {
    #[error("invalid Zernike index (n={n}, m={m}): need 0 <= m <= n and n - m even")]
    InvalidIndex { n: i64, m: i64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, ZernikeError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZernikeConfig {
    pub n_max: u32,
    /// Target invariant ratio: normalized polygons have area `c·π` in the
    /// unit disk.
    pub c: f64,
    pub grid: usize,
}

impl Default for ZernikeConfig {
    fn default() -> Self {
        ZernikeConfig {
            n_max: 6,
            c: 1.0 / 80.0,
            grid: 256,
        }
    }
}

impl ZernikeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(ZernikeError::Config(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        if self.grid < 32 {
            return Err(ZernikeError::Config(format!(
                "grid must be at least 32, got {}",
                self.grid
            )));
        }
        if self.n_max > 40 {
            return Err(ZernikeError::Config(format!(
                "n_max {} is unreasonably large",
                self.n_max
            )));
        }
        Ok(())
    }
}

/// `(n, m)` pairs with `0 <= m <= n <= n_max`, `n - m` even, in
/// lexicographic order.
pub fn index_pairs(n_max: u32) -> Vec<(u32, u32)> {
    (0..=n_max)
        .flat_map(|n| {
            (0..=n)
                .filter(move |m| (n - m) % 2 == 0)
                .map(move |m| (n, m))
        })
        .collect()
}

/// Column names `z_n_m` matching [`index_pairs`].
pub fn feature_names(n_max: u32) -> Vec<String> {
    index_pairs(n_max)
        .into_iter()
        .map(|(n, m)| format!("z_{n}_{m}"))
        .collect()
}

fn factorial(k: i64) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn radial_coefficients(n: i64, m: i64) -> Vec<(i32, f64)> {
    (0..=(n - m) / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * factorial(n - k)
                / (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k));
            ((n - 2 * k) as i32, c)
        })
        .collect()
}

/// Zernike radial polynomial `R_nm(ρ)`.
pub fn radial_polynomial(n: i64, m: i64, rho: f64) -> Result<f64> {
    if m < 0 || m > n || (n - m) % 2 != 0 {
        return Err(ZernikeError::InvalidIndex { n, m });
    }
    Ok(radial_coefficients(n, m)
        .into_iter()
        .map(|(p, c)| c * rho.powi(p))
        .sum())
}

/// `A / (R²π)` of the centroid-centered polygon; the largest `c` for which
/// the normalized polygon still fits in the unit disk.
pub fn invariant_ratio(p: &PolygonWithHoles) -> Result<f64> {
    let a = geometry::area(p)?;
    let c = centroid(p)?;
    let centered = p.translate(Point::new(-c.x, -c.y));
    let r = origin_radius(&centered);
    if r <= 0.0 {
        return Err(GeometryError::ZeroArea.into());
    }
    Ok(a / (r * r * std::f64::consts::PI))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPolygon {
    pub polygon: PolygonWithHoles,
    pub scale_factor: f64,
    pub fully_captured: bool,
    /// Radius of the capture disk.
    pub radius: f64,
}

/// Centers `p` at the origin and scales it by `√(c·r²·π / A)`.
pub fn normalize(p: &PolygonWithHoles, c: f64, r: f64) -> Result<NormalizedPolygon> {
    let a = geometry::area(p)?;
    let ctr = centroid(p)?;
    let f = (c * r * r * std::f64::consts::PI / a).sqrt();
    let polygon = p.map(|q| (q - ctr).scale(f))?;
    // relative slack so the equality case survives rounding
    let fully_captured = c <= invariant_ratio(p)? * (1.0 + 1e-12);
    Ok(NormalizedPolygon {
        polygon,
        scale_factor: f,
        fully_captured,
        radius: r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZernikeFeatures {
    pub amplitudes: Vec<f64>,
}

/// Zernike kernels `((n+1)/π)·R_nm(ρ)·e^{-imθ}·ΔA` tabulated at the pixel
/// centers of a `D×D` grid over `[-1, 1]²`; zero outside the unit disk.
#[derive(Debug)]
pub struct ZernikeBasis {
    n_max: u32,
    grid: usize,
    pairs: Vec<(u32, u32)>,
    /// Interleaved `[re, im]` per pair per pixel, row-major pixels.
    table: Vec<f64>,
}

impl ZernikeBasis {
    pub fn new(n_max: u32, grid: usize) -> Self {
        let pairs = index_pairs(n_max);
        let np = pairs.len();
        let coeffs: Vec<Vec<(i32, f64)>> = pairs
            .iter()
            .map(|&(n, m)| radial_coefficients(n as i64, m as i64))
            .collect();
        let cell = 2.0 / grid as f64;
        let da = cell * cell;
        let mut table = vec![0.0; grid * grid * np * 2];
        let mut rho_pow = vec![0.0; n_max as usize + 1];
        let mut phase = vec![(0.0, 0.0); n_max as usize + 1];
        for row in 0..grid {
            let y = -1.0 + (row as f64 + 0.5) * cell;
            for col in 0..grid {
                let x = -1.0 + (col as f64 + 0.5) * cell;
                let rho = (x * x + y * y).sqrt();
                if rho > 1.0 {
                    continue;
                }
                rho_pow[0] = 1.0;
                for k in 1..rho_pow.len() {
                    rho_pow[k] = rho_pow[k - 1] * rho;
                }
                // e^{-iθ} = (x - iy)/ρ, powers by repeated multiplication
                let (c1, s1) = if rho > 0.0 {
                    (x / rho, -y / rho)
                } else {
                    (1.0, 0.0)
                };
                phase[0] = (1.0, 0.0);
                for k in 1..phase.len() {
                    let (a, b) = phase[k - 1];
                    phase[k] = (a * c1 - b * s1, a * s1 + b * c1);
                }
                let base = (row * grid + col) * np * 2;
                for (k, &(n, m)) in pairs.iter().enumerate() {
                    let radial: f64 = coeffs[k]
                        .iter()
                        .map(|&(p, c)| c * rho_pow[p as usize])
                        .sum();
                    let w = (n as f64 + 1.0) / std::f64::consts::PI * radial * da;
                    let (cr, ci) = phase[m as usize];
                    table[base + 2 * k] = w * cr;
                    table[base + 2 * k + 1] = w * ci;
                }
            }
        }
        ZernikeBasis {
            n_max,
            grid,
            pairs,
            table,
        }
    }

    /// Process-wide cache keyed by `(n_max, grid)`.
    pub fn shared(n_max: u32, grid: usize) -> Arc<ZernikeBasis> {
        static CACHE: OnceLock<Mutex<HashMap<(u32, usize), Arc<ZernikeBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry((n_max, grid))
            .or_insert_with(|| Arc::new(ZernikeBasis::new(n_max, grid)))
            .clone()
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Amplitudes of the indicator of `p` seen through the disk of radius
    /// `radius` about `center`, mapped onto the unit disk.
    pub fn amplitudes_in_disk(
        &self,
        p: &PolygonWithHoles,
        center: Point,
        radius: f64,
    ) -> ZernikeFeatures {
        let d = self.grid;
        let np = self.pairs.len();
        let window = GridWindow {
            origin: Point::new(center.x - radius, center.y - radius),
            cell: 2.0 * radius / d as f64,
            cols: d,
            rows: d,
        };
        let mut acc = vec![0.0; np * 2];
        scan_polygon(p, &window, |row, c0, c1| {
            let start = (row * d + c0) * np * 2;
            let end = (row * d + c1) * np * 2;
            for chunk in self.table[start..end].chunks_exact(np * 2) {
                for (a, v) in acc.iter_mut().zip(chunk) {
                    *a += v;
                }
            }
        });
        let amplitudes = acc.chunks_exact(2).map(|z| z[0].hypot(z[1])).collect();
        ZernikeFeatures { amplitudes }
    }

    pub fn amplitudes(&self, np: &NormalizedPolygon) -> ZernikeFeatures {
        self.amplitudes_in_disk(&np.polygon, Point::new(0.0, 0.0), np.radius)
    }
}

/// Normalization plus amplitude extraction with a shared precomputed basis.
#[derive(Debug, Clone)]
pub struct ZernikeExtractor {
    cfg: ZernikeConfig,
    basis: Arc<ZernikeBasis>,
}

impl ZernikeExtractor {
    pub fn new(cfg: ZernikeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ZernikeExtractor {
            cfg,
            basis: ZernikeBasis::shared(cfg.n_max, cfg.grid),
        })
    }

    pub fn config(&self) -> &ZernikeConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &ZernikeBasis {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.pairs.is_empty()
    }

    pub fn features(&self, p: &PolygonWithHoles) -> Result<ZernikeFeatures> {
        let np = normalize(p, self.cfg.c, 1.0)?;
        Ok(self.basis.amplitudes(&np))
    }

    /// Moments without area normalization: the disk is centered on the
    /// centroid with radius half the longer bounding-box side and nothing
    /// outside it contributes. Used as the unnormalized baseline.
    pub fn raw_features(&self, p: &PolygonWithHoles) -> Result<ZernikeFeatures> {
        let ctr = centroid(p)?;
        let bb = p.bbox();
        let radius = 0.5 * bb.width().max(bb.height());
        if radius <= 0.0 {
            return Err(GeometryError::ZeroArea.into());
        }
        Ok(self.basis.amplitudes_in_disk(p, ctr, radius))
    }
}

/// [`normalize`] followed by amplitude extraction.
pub fn feature_pipeline(p: &PolygonWithHoles, cfg: &ZernikeConfig) -> Result<ZernikeFeatures> {
    ZernikeExtractor::new(*cfg)?.features(p)
}
