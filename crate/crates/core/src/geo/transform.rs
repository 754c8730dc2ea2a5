use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous pixel coordinates. `(0, 0)` is the outer corner of the top-left
/// pixel, so the center of pixel `(col, row)` is `(col + 0.5, row + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Center of the integer pixel `(col, row)`.
    pub fn center_of(col: usize, row: usize) -> Self {
        Self::new(col as f64 + 0.5, row as f64 + 0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Projected map coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Affine map between pixel space and world space.
///
/// ```text
/// world_x = origin_x + col * pixel_width + row * row_rotation
/// world_y = origin_y + col * col_rotation + row * pixel_height
/// ```
///
/// The six-tuple order used for serialization is the GDAL one:
/// `[origin_x, pixel_width, row_rotation, origin_y, col_rotation, pixel_height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct AffineGeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
    pub row_rotation: f64,
    pub col_rotation: f64,
}

impl AffineGeoTransform {
    /// North-up transform without shear terms.
    pub const fn north_up(origin_x: f64, origin_y: f64, pixel_width: f64, pixel_height: f64) -> Self {
        Self {
            origin_x,
            origin_y,
            pixel_width,
            pixel_height,
            row_rotation: 0.0,
            col_rotation: 0.0,
        }
    }

    pub fn from_gdal(c: [f64; 6]) -> Self {
        Self {
            origin_x: c[0],
            pixel_width: c[1],
            row_rotation: c[2],
            origin_y: c[3],
            col_rotation: c[4],
            pixel_height: c[5],
        }
    }

    pub fn to_gdal(&self) -> [f64; 6] {
        [
            self.origin_x,
            self.pixel_width,
            self.row_rotation,
            self.origin_y,
            self.col_rotation,
            self.pixel_height,
        ]
    }

    pub fn determinant(&self) -> f64 {
        self.pixel_width * self.pixel_height - self.row_rotation * self.col_rotation
    }

    pub fn is_invertible(&self) -> bool {
        let det = self.determinant();
        det.is_finite() && det != 0.0 && self.to_gdal().iter().all(|v| v.is_finite())
    }

    pub fn check_invertible(&self) -> Result<()> {
        if self.is_invertible() {
            Ok(())
        } else {
            Err(Error::SingularTransform {
                determinant: self.determinant(),
            })
        }
    }

    /// Ground sampling distance along the column axis.
    pub fn gsd(&self) -> f64 {
        self.pixel_width.abs()
    }

    /// Same origin, linear part scaled by `factor` (coarser grid when > 1).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pixel_width: self.pixel_width * factor,
            pixel_height: self.pixel_height * factor,
            row_rotation: self.row_rotation * factor,
            col_rotation: self.col_rotation * factor,
            ..*self
        }
    }

    /// Transform whose pixel `(0, 0)` sits at this transform's pixel
    /// `(col, row)`.
    pub fn offset(&self, col: usize, row: usize) -> Self {
        let corner = project(self, PixelPoint::new(col as f64, row as f64));
        Self {
            origin_x: corner.x,
            origin_y: corner.y,
            ..*self
        }
    }
}

impl TryFrom<[f64; 6]> for AffineGeoTransform {
    type Error = String;

    fn try_from(c: [f64; 6]) -> Result<Self, String> {
        let gt = Self::from_gdal(c);
        if gt.is_invertible() {
            Ok(gt)
        } else {
            Err(format!("geotransform {c:?} is not invertible"))
        }
    }
}

impl From<AffineGeoTransform> for [f64; 6] {
    fn from(gt: AffineGeoTransform) -> Self {
        gt.to_gdal()
    }
}

/// Pixel to world.
#[inline]
pub fn project(gt: &AffineGeoTransform, p: PixelPoint) -> WorldPoint {
    WorldPoint {
        x: gt.origin_x + p.x * gt.pixel_width + p.y * gt.row_rotation,
        y: gt.origin_y + p.x * gt.col_rotation + p.y * gt.pixel_height,
    }
}

/// World to pixel.
#[inline]
pub fn backproject(gt: &AffineGeoTransform, w: WorldPoint) -> Result<PixelPoint> {
    let det = gt.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularTransform { determinant: det });
    }
    let dx = w.x - gt.origin_x;
    let dy = w.y - gt.origin_y;
    Ok(PixelPoint {
        x: (gt.pixel_height * dx - gt.row_rotation * dy) / det,
        y: (gt.pixel_width * dy - gt.col_rotation * dx) / det,
    })
}
