//! Raster file formats, selected by extension: `.tif`/`.tiff` for GeoTIFF,
//! `.json` for the raw-samples-plus-sidecar format.

pub mod geotiff;
pub mod sidecar;

use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::GeoRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    GeoTiff,
    Sidecar,
}

impl RasterFormat {
    pub fn detect(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("tif" | "tiff") => Ok(RasterFormat::GeoTiff),
            Some("json") => Ok(RasterFormat::Sidecar),
            _ => Err(Error::invalid(format!(
                "cannot infer raster format of {} (expected .tif, .tiff or .json)",
                path.display()
            ))),
        }
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<GeoRaster> {
    let path = path.as_ref();
    let result = match RasterFormat::detect(path)? {
        RasterFormat::GeoTiff => geotiff::read(path),
        RasterFormat::Sidecar => sidecar::read(path),
    };
    result.map_err(|e| e.in_file(path))
}

pub fn write_raster(raster: &GeoRaster, path: impl AsRef<Path>) -> Result<()> {
    write_raster_with_metadata(raster, path, None)
}

/// Like [`write_raster`]; `metadata` is embedded in sidecar documents and
/// ignored for GeoTIFF.
pub fn write_raster_with_metadata(
    raster: &GeoRaster,
    path: impl AsRef<Path>,
    metadata: Option<serde_json::Value>,
) -> Result<()> {
    let path = path.as_ref();
    let result = match RasterFormat::detect(path)? {
        RasterFormat::GeoTiff => geotiff::write(raster, path),
        RasterFormat::Sidecar => sidecar::write(raster, path, metadata),
    };
    result.map_err(|e| e.in_file(path))
}
