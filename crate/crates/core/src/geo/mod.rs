//! Georeferenced rasters, pixel/world projection and AOI clipping.

mod raster;
mod transform;

pub use raster::{clip, covering_window, footprint, Aoi, Band, BandMeta, GeoRaster, SampleType};
pub use transform::{backproject, project, AffineGeoTransform, PixelPoint, WorldPoint};

/// Output grid specification: a geotransform and dimensions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub transform: AffineGeoTransform,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn of(band: &Band) -> Self {
        Self {
            transform: *band.transform(),
            width: band.width(),
            height: band.height(),
        }
    }
}
