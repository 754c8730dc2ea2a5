//! Base/warp tiepoints at working resolution.
//!
//! The built-in path detects FAST-9 corners on both images and pairs them by
//! normalized cross-correlation of intensity patches. Matches computed by
//! other tools enter through the text interchange format in [`format`].

mod fast;
pub mod format;
mod matcher;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Band, PixelPoint};

pub use fast::{detect_corners, segment_test, Corner, CIRCLE};
pub use format::{export_tiepoints, import_tiepoints, read_tiepoints, write_tiepoints};
pub use matcher::{describe_and_match, MatchConfig};

/// One base/warp correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiePoint {
    pub base: PixelPoint,
    pub warp: PixelPoint,
    /// Match confidence in `[0, 1]`.
    pub score: f64,
}

impl TiePoint {
    pub fn new(base: PixelPoint, warp: PixelPoint, score: f64) -> Self {
        Self { base, warp, score }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Builtin,
    Synthetic,
    Imported(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Builtin => f.write_str("builtin"),
            Provenance::Synthetic => f.write_str("synthetic"),
            Provenance::Imported(name) => write!(f, "imported:{name}"),
        }
    }
}

/// Tiepoints between two working-resolution grids, in canonical order
/// (base x, then base y).
#[derive(Debug, Clone, PartialEq)]
pub struct TiePointSet {
    points: Vec<TiePoint>,
    provenance: Provenance,
    working_gsd_m: f64,
    base_dims: (usize, usize),
    warp_dims: (usize, usize),
}

pub(crate) fn inside(p: PixelPoint, (w, h): (usize, usize)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= w as f64 && p.y <= h as f64
}

impl TiePointSet {
    pub fn new(
        mut points: Vec<TiePoint>,
        provenance: Provenance,
        working_gsd_m: f64,
        base_dims: (usize, usize),
        warp_dims: (usize, usize),
    ) -> Result<Self> {
        if !(working_gsd_m.is_finite() && working_gsd_m > 0.0) {
            return Err(Error::invalid(format!("working GSD {working_gsd_m} is not positive")));
        }
        for (i, tp) in points.iter().enumerate() {
            if !tp.base.is_finite() || !tp.warp.is_finite() || !tp.score.is_finite() {
                return Err(Error::invalid(format!("tiepoint {i} has a non-finite value")));
            }
            if !inside(tp.base, base_dims) {
                return Err(Error::invalid(format!("tiepoint {i} base lies outside the base grid")));
            }
            if !inside(tp.warp, warp_dims) {
                return Err(Error::invalid(format!("tiepoint {i} warp lies outside the warp grid")));
            }
        }
        points.sort_by(|a, b| a.base.x.total_cmp(&b.base.x).then(a.base.y.total_cmp(&b.base.y)));
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if points[j].base.x - points[i].base.x > 1e-6 {
                    break;
                }
                if (points[j].base.y - points[i].base.y).abs() <= 1e-6 {
                    return Err(Error::invalid(format!(
                        "duplicate base coordinate ({}, {})",
                        points[i].base.x, points[i].base.y
                    )));
                }
            }
        }
        Ok(Self {
            points,
            provenance,
            working_gsd_m,
            base_dims,
            warp_dims,
        })
    }

    pub fn points(&self) -> &[TiePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn working_gsd_m(&self) -> f64 {
        self.working_gsd_m
    }

    pub fn base_dims(&self) -> (usize, usize) {
        self.base_dims
    }

    pub fn warp_dims(&self) -> (usize, usize) {
        self.warp_dims
    }

    /// Subset selected by `mask`, same grids and provenance.
    pub fn select(&self, mask: &[bool]) -> Self {
        Self {
            points: self
                .points
                .iter()
                .zip(mask)
                .filter_map(|(p, &keep)| keep.then_some(*p))
                .collect(),
            ..self.clone()
        }
    }
}

/// Settings for the built-in detect-and-match path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Corners kept per image, strongest first.
    pub max_corners: usize,
    /// FAST threshold on the 0-255 stretched reference band.
    pub fast_threshold: u32,
    pub matching: MatchConfig,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            max_corners: 1000,
            fast_threshold: 12,
            matching: MatchConfig::default(),
        }
    }
}

/// Linear 1%-99% percentile stretch to `[0, 255]`; nodata becomes NaN.
pub fn stretch_to_byte(band: &Band) -> Result<Band> {
    let mut valid: Vec<f32> = band.data().iter().copied().filter(|v| !band.is_nodata(*v)).collect();
    if valid.is_empty() {
        return band.with_data(vec![f32::NAN; band.data().len()]).map(|b| b.with_nodata(Some(f64::NAN)));
    }
    valid.sort_by(f32::total_cmp);
    let pick = |q: f64| valid[((valid.len() - 1) as f64 * q).round() as usize];
    let (lo, hi) = (pick(0.01), pick(0.99));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data = band
        .data()
        .iter()
        .map(|&v| {
            if band.is_nodata(v) {
                f32::NAN
            } else {
                ((v - lo) / span * 255.0).clamp(0.0, 255.0)
            }
        })
        .collect();
    Ok(band.with_data(data)?.with_nodata(Some(f64::NAN)))
}

/// Detect corners on both working-resolution bands and match them.
pub fn extract_tiepoints(base: &Band, warp: &Band, cfg: &DetectConfig) -> Result<TiePointSet> {
    let corners = |b: &Band| -> Result<Vec<PixelPoint>> {
        let stretched = stretch_to_byte(b)?;
        Ok(detect_corners(&stretched, cfg.max_corners, cfg.fast_threshold)
            .iter()
            .map(Corner::point)
            .collect())
    };
    let (bp, wp) = (corners(base)?, corners(warp)?);
    describe_and_match(base, warp, &bp, &wp, &cfg.matching)
}
