//! Portable raster format: one raw little-endian sample file per band plus a
//! JSON document carrying the grid, georeferencing and band metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{AffineGeoTransform, Band, BandMeta, GeoRaster, SampleType};

pub const FORMAT_TAG: &str = "coreg-raster v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterDocument {
    pub format: String,
    pub crs_id: String,
    pub bands: Vec<BandDocument>,
    /// Free-form provenance (e.g. the alignment run that produced it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandDocument {
    #[serde(flatten)]
    pub meta: BandMeta,
    pub width: usize,
    pub height: usize,
    pub sample_type: SampleType,
    pub geotransform: AffineGeoTransform,
    #[serde(default)]
    pub nodata: Option<f64>,
    /// Sample file, relative to the document's directory.
    pub data: PathBuf,
}

pub fn read(path: &Path) -> Result<GeoRaster> {
    let text = fs::read_to_string(path)?;
    let doc: RasterDocument = serde_json::from_str(&text)?;
    if doc.format != FORMAT_TAG {
        return Err(Error::invalid(format!("unsupported raster format tag '{}'", doc.format)));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let bands = doc
        .bands
        .into_iter()
        .map(|bd| {
            let bytes = fs::read(dir.join(&bd.data))?;
            let expected = bd.width * bd.height * bd.sample_type.byte_width();
            if bytes.len() != expected {
                return Err(Error::invalid(format!(
                    "{}: expected {expected} bytes, found {}",
                    bd.data.display(),
                    bytes.len()
                )));
            }
            let data = decode_samples(&bytes, bd.sample_type);
            Ok(Band::new(bd.meta, bd.sample_type, bd.width, bd.height, bd.geotransform, data)?
                .with_nodata(bd.nodata))
        })
        .collect::<Result<Vec<_>>>()?;
    GeoRaster::new(doc.crs_id, bands)
}

pub fn write(raster: &GeoRaster, path: &Path, metadata: Option<serde_json::Value>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("raster")
        .to_string();
    let mut bands = Vec::with_capacity(raster.bands().len());
    for (i, band) in raster.bands().iter().enumerate() {
        let file = PathBuf::from(format!("{stem}.{i}_{}.bin", sanitize(band.name())));
        fs::write(dir.join(&file), encode_samples(band.data(), band.sample_type()))?;
        bands.push(BandDocument {
            meta: band.meta().clone(),
            width: band.width(),
            height: band.height(),
            sample_type: band.sample_type(),
            geotransform: *band.transform(),
            nodata: band.nodata(),
            data: file,
        });
    }
    let doc = RasterDocument {
        format: FORMAT_TAG.to_string(),
        crs_id: raster.crs_id().to_string(),
        bands,
        metadata,
    };
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn decode_samples(bytes: &[u8], st: SampleType) -> Vec<f32> {
    match st {
        SampleType::U8 => bytes.iter().map(|&b| b as f32).collect(),
        SampleType::U16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32)
            .collect(),
        SampleType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    }
}

fn encode_samples(data: &[f32], st: SampleType) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * st.byte_width());
    for &v in data {
        let q = st.quantize(v);
        match st {
            SampleType::U8 => out.push(q as u8),
            SampleType::U16 => out.extend_from_slice(&(q as u16).to_le_bytes()),
            SampleType::F32 => out.extend_from_slice(&q.to_le_bytes()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_resolution_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pan = Band::new(
            BandMeta::new("B8 pan", 15.0).with_wavelength("0.503-0.676 um"),
            SampleType::U16,
            4,
            2,
            AffineGeoTransform::north_up(500000.0, 4000000.0, 15.0, -15.0),
            vec![0.0, 1.0, 2.0, 65535.0, 4.0, 5.0, 6.0, 7.0],
        )
        .unwrap()
        .with_nodata(Some(0.0));
        let red = Band::new(
            BandMeta::new("B4", 30.0),
            SampleType::F32,
            2,
            1,
            AffineGeoTransform::north_up(500000.0, 4000000.0, 30.0, -30.0),
            vec![0.25, -1.5],
        )
        .unwrap();
        let mask = Band::new(
            BandMeta::new("qa", 30.0).categorical(),
            SampleType::U8,
            2,
            1,
            AffineGeoTransform::north_up(500000.0, 4000000.0, 30.0, -30.0),
            vec![1.0, 255.0],
        )
        .unwrap();
        let r = GeoRaster::new("EPSG:32611", vec![pan, red, mask]).unwrap();
        let path = dir.path().join("scene.json");
        write(&r, &path, None).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn truncated_sample_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let b = Band::from_grid("x", 3, 3, AffineGeoTransform::north_up(0.0, 0.0, 1.0, -1.0), vec![1.0; 9])
            .unwrap();
        let path = dir.path().join("r.json");
        write(&GeoRaster::new("EPSG:4326", vec![b]).unwrap(), &path, None).unwrap();
        fs::write(dir.path().join("r.0_x.bin"), [0u8; 5]).unwrap();
        assert!(read(&path).is_err());
    }
}
