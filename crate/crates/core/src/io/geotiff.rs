//! GeoTIFF reading and writing through the standard model tags.
//!
//! Every page (IFD) of a file contributes its samples as bands; all samples
//! of one page share that page's geotransform. Written files carry one band
//! per page so bands of different resolutions fit in one file.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;

use crate::error::{Error, Result};
use crate::geo::{AffineGeoTransform, Band, BandMeta, GeoRaster, SampleType};

const KEY_MODEL_TYPE: u16 = 1024;
const KEY_RASTER_TYPE: u16 = 1025;
const KEY_GEOGRAPHIC_TYPE: u16 = 2048;
const KEY_PROJECTED_CS_TYPE: u16 = 3072;
const PAGE_NAME: Tag = Tag::Unknown(285);

pub fn read(path: &Path) -> Result<GeoRaster> {
    let file = BufReader::new(File::open(path)?);
    let mut decoder = Decoder::new(file)?.with_limits(Limits::unlimited());
    let mut crs_id: Option<String> = None;
    let mut bands = Vec::new();
    loop {
        let (w, h) = decoder.dimensions()?;
        let (w, h) = (w as usize, h as usize);
        let transform = read_transform(&mut decoder)?;
        if crs_id.is_none() {
            crs_id = read_crs(&mut decoder)?;
        }
        let nodata = decoder
            .find_tag(Tag::GdalNodata)?
            .and_then(|v| v.into_string().ok())
            .and_then(|s| s.trim_matches(char::from(0)).trim().parse::<f64>().ok());
        let page_name = decoder
            .find_tag(PAGE_NAME)?
            .and_then(|v| v.into_string().ok())
            .map(|s| s.trim_matches(char::from(0)).to_string());
        let planar = decoder.find_tag_unsigned::<u16>(Tag::PlanarConfiguration)?.unwrap_or(1);
        let (samples, sample_type) = decode(decoder.read_image()?);
        let spp = samples.len() / (w * h).max(1);
        if spp == 0 || spp * w * h != samples.len() {
            return Err(Error::invalid("GeoTIFF sample count does not match its dimensions"));
        }
        for s in 0..spp {
            let data: Vec<f32> = if spp == 1 {
                samples.clone()
            } else if planar == 2 {
                samples[s * w * h..(s + 1) * w * h].to_vec()
            } else {
                samples.iter().skip(s).step_by(spp).copied().collect()
            };
            let name = match (&page_name, spp) {
                (Some(n), 1) => n.clone(),
                (Some(n), _) => format!("{n}_{}", s + 1),
                (None, _) => format!("band_{}", bands.len() + 1),
            };
            let meta = BandMeta::new(name, transform.gsd());
            bands.push(Band::new(meta, sample_type, w, h, transform, data)?.with_nodata(nodata));
        }
        if !decoder.more_images() {
            break;
        }
        decoder.next_image()?;
    }
    GeoRaster::new(crs_id.unwrap_or_else(|| "unknown".to_string()), bands)
}

fn decode(result: DecodingResult) -> (Vec<f32>, SampleType) {
    match result {
        DecodingResult::U8(v) => (v.into_iter().map(f32::from).collect(), SampleType::U8),
        DecodingResult::U16(v) => (v.into_iter().map(f32::from).collect(), SampleType::U16),
        DecodingResult::F32(v) => (v, SampleType::F32),
        DecodingResult::F64(v) => (v.into_iter().map(|x| x as f32).collect(), SampleType::F32),
        DecodingResult::I8(v) => (v.into_iter().map(f32::from).collect(), SampleType::F32),
        DecodingResult::I16(v) => (v.into_iter().map(f32::from).collect(), SampleType::F32),
        DecodingResult::U32(v) => (v.into_iter().map(|x| x as f32).collect(), SampleType::F32),
        DecodingResult::I32(v) => (v.into_iter().map(|x| x as f32).collect(), SampleType::F32),
        DecodingResult::U64(v) => (v.into_iter().map(|x| x as f32).collect(), SampleType::F32),
        DecodingResult::I64(v) => (v.into_iter().map(|x| x as f32).collect(), SampleType::F32),
        DecodingResult::F16(v) => (v.into_iter().map(f32::from).collect(), SampleType::F32),
    }
}

fn read_transform<R: std::io::Read + std::io::Seek>(decoder: &mut Decoder<R>) -> Result<AffineGeoTransform> {
    if let Some(m) = decoder.find_tag(Tag::ModelTransformationTag)? {
        let m = m.into_f64_vec()?;
        if m.len() >= 8 {
            return Ok(AffineGeoTransform::from_gdal([m[3], m[0], m[1], m[7], m[4], m[5]]));
        }
    }
    let scale = decoder.find_tag(Tag::ModelPixelScaleTag)?.map(|v| v.into_f64_vec()).transpose()?;
    let tie = decoder.find_tag(Tag::ModelTiepointTag)?.map(|v| v.into_f64_vec()).transpose()?;
    match (scale, tie) {
        (Some(s), Some(t)) if s.len() >= 2 && t.len() >= 6 => Ok(AffineGeoTransform::north_up(
            t[3] - t[0] * s[0],
            t[4] + t[1] * s[1],
            s[0],
            -s[1],
        )),
        _ => Err(Error::invalid("GeoTIFF has no affine georeferencing tags")),
    }
}

fn read_crs<R: std::io::Read + std::io::Seek>(decoder: &mut Decoder<R>) -> Result<Option<String>> {
    if let Some(keys) = decoder.find_tag_unsigned_vec::<u16>(Tag::GeoKeyDirectoryTag)? {
        for entry in keys.chunks_exact(4).skip(1) {
            let (id, location, value) = (entry[0], entry[1], entry[3]);
            if location == 0
                && (id == KEY_PROJECTED_CS_TYPE || id == KEY_GEOGRAPHIC_TYPE)
                && value != 0
                && value != 32767
            {
                return Ok(Some(format!("EPSG:{value}")));
            }
        }
    }
    Ok(decoder
        .find_tag(Tag::ImageDescription)?
        .and_then(|v| v.into_string().ok())
        .map(|s| s.trim_matches(char::from(0)).to_string())
        .filter(|s| !s.is_empty()))
}

fn epsg_code(crs_id: &str) -> Option<u16> {
    crs_id
        .strip_prefix("EPSG:")
        .or_else(|| crs_id.strip_prefix("epsg:"))
        .and_then(|c| c.parse().ok())
}

/// Write every band as its own page.
pub fn write(raster: &GeoRaster, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut encoder = TiffEncoder::new(&mut out)?;
    for band in raster.bands() {
        let (w, h) = (band.width() as u32, band.height() as u32);
        match band.sample_type() {
            SampleType::U8 => {
                let data: Vec<u8> = band.data().iter().map(|&v| SampleType::U8.quantize(v) as u8).collect();
                let mut img = encoder.new_image::<colortype::Gray8>(w, h)?;
                write_geo_tags(img.encoder(), band, raster.crs_id())?;
                img.write_data(&data)?;
            }
            SampleType::U16 => {
                let data: Vec<u16> = band.data().iter().map(|&v| SampleType::U16.quantize(v) as u16).collect();
                let mut img = encoder.new_image::<colortype::Gray16>(w, h)?;
                write_geo_tags(img.encoder(), band, raster.crs_id())?;
                img.write_data(&data)?;
            }
            SampleType::F32 => {
                let mut img = encoder.new_image::<colortype::Gray32Float>(w, h)?;
                write_geo_tags(img.encoder(), band, raster.crs_id())?;
                img.write_data(band.data())?;
            }
        }
    }
    Ok(())
}

fn write_geo_tags<W: std::io::Write + std::io::Seek, K: tiff::encoder::TiffKind>(
    dir: &mut tiff::encoder::DirectoryEncoder<'_, W, K>,
    band: &Band,
    crs_id: &str,
) -> Result<()> {
    let gt = band.transform();
    if gt.row_rotation == 0.0 && gt.col_rotation == 0.0 && gt.pixel_width > 0.0 && gt.pixel_height < 0.0 {
        dir.write_tag(Tag::ModelPixelScaleTag, &[gt.pixel_width, -gt.pixel_height, 0.0][..])?;
        dir.write_tag(Tag::ModelTiepointTag, &[0.0, 0.0, 0.0, gt.origin_x, gt.origin_y, 0.0][..])?;
    } else {
        let m = [
            gt.pixel_width,
            gt.row_rotation,
            0.0,
            gt.origin_x,
            gt.col_rotation,
            gt.pixel_height,
            0.0,
            gt.origin_y,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
        ];
        dir.write_tag(Tag::ModelTransformationTag, &m[..])?;
    }
    let mut keys: Vec<u16> = vec![1, 1, 0, 2, KEY_MODEL_TYPE, 0, 1, 1, KEY_RASTER_TYPE, 0, 1, 1];
    if let Some(code) = epsg_code(crs_id) {
        keys.extend_from_slice(&[KEY_PROJECTED_CS_TYPE, 0, 1, code]);
        keys[3] = 3;
    } else {
        dir.write_tag(Tag::ImageDescription, crs_id)?;
    }
    dir.write_tag(Tag::GeoKeyDirectoryTag, &keys[..])?;
    if let Some(nd) = band.nodata() {
        dir.write_tag(Tag::GdalNodata, format!("{nd}").as_str())?;
    }
    dir.write_tag(PAGE_NAME, band.name())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geotiff_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = Band::new(
            BandMeta::new("B8", 15.0),
            SampleType::U16,
            3,
            2,
            AffineGeoTransform::north_up(300000.0, 5000000.0, 15.0, -15.0),
            vec![1.0, 2.0, 3.0, 400.0, 500.0, 60000.0],
        )
        .unwrap()
        .with_nodata(Some(0.0));
        let b = Band::new(
            BandMeta::new("B4", 30.0),
            SampleType::F32,
            2,
            1,
            AffineGeoTransform::north_up(300000.0, 5000000.0, 30.0, -30.0),
            vec![0.5, 0.75],
        )
        .unwrap();
        let r = GeoRaster::new("EPSG:32611", vec![a, b]).unwrap();
        let path = dir.path().join("scene.tif");
        write(&r, &path).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn rotated_transform_and_opaque_crs() {
        let dir = tempfile::tempdir().unwrap();
        let gt = AffineGeoTransform {
            origin_x: 10.0,
            origin_y: 20.0,
            pixel_width: 2.0,
            pixel_height: -2.0,
            row_rotation: 0.5,
            col_rotation: 0.25,
        };
        let a = Band::new(BandMeta::new("m", 2.0), SampleType::U8, 2, 2, gt, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = GeoRaster::new("local-grid", vec![a]).unwrap();
        let path = dir.path().join("rot.tif");
        write(&r, &path).unwrap();
        assert_eq!(read(&path).unwrap(), r);
    }
}
