use serde::{Deserialize, Serialize};

use super::transform::{backproject, project, AffineGeoTransform, PixelPoint, WorldPoint};
use crate::error::{Error, Result};

/// Storage type of a band on disk. In memory every band holds `f32`
/// samples, which represent all 8- and 16-bit unsigned values exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleType {
    U8,
    U16,
    F32,
}

impl SampleType {
    pub fn byte_width(self) -> usize {
        match self {
            SampleType::U8 => 1,
            SampleType::U16 => 2,
            SampleType::F32 => 4,
        }
    }

    /// Round and clamp `v` to the representable range.
    pub fn quantize(self, v: f32) -> f32 {
        match self {
            SampleType::U8 => v.round().clamp(0.0, u8::MAX as f32),
            SampleType::U16 => v.round().clamp(0.0, u16::MAX as f32),
            SampleType::F32 => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMeta {
    pub name: String,
    /// Nominal ground sampling distance in meters.
    pub gsd_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<String>,
    /// Categorical bands (masks, classes) are resampled with nearest
    /// neighbour by default.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub categorical: bool,
}

impl BandMeta {
    pub fn new(name: impl Into<String>, gsd_m: f64) -> Self {
        Self {
            name: name.into(),
            gsd_m,
            wavelength: None,
            categorical: false,
        }
    }

    pub fn with_wavelength(mut self, wavelength: impl Into<String>) -> Self {
        self.wavelength = Some(wavelength.into());
        self
    }

    pub fn categorical(mut self) -> Self {
        self.categorical = true;
        self
    }
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aoi {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub crs_id: String,
}

impl Aoi {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64, crs_id: impl Into<String>) -> Result<Self> {
        let aoi = Self {
            min_x,
            min_y,
            max_x,
            max_y,
            crs_id: crs_id.into(),
        };
        aoi.validate()?;
        Ok(aoi)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.min_x, self.min_y, self.max_x, self.max_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.min_x >= self.max_x || self.min_y >= self.max_y {
            return Err(Error::invalid(format!(
                "degenerate AOI ({}, {}, {}, {})",
                self.min_x, self.min_y, self.max_x, self.max_y
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Area of the intersection; zero when the rectangles only touch.
    pub fn intersection_area(&self, other: &Aoi) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    pub fn intersects(&self, other: &Aoi) -> bool {
        self.intersection_area(other) > 0.0
    }

    pub fn contains(&self, other: &Aoi) -> bool {
        self.min_x <= other.min_x
            && self.min_y <= other.min_y
            && self.max_x >= other.max_x
            && self.max_y >= other.max_y
    }

    pub fn corners(&self) -> [WorldPoint; 4] {
        [
            WorldPoint::new(self.min_x, self.min_y),
            WorldPoint::new(self.max_x, self.min_y),
            WorldPoint::new(self.min_x, self.max_y),
            WorldPoint::new(self.max_x, self.max_y),
        ]
    }
}

/// One sample grid with its own georeferencing.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    meta: BandMeta,
    sample_type: SampleType,
    width: usize,
    height: usize,
    transform: AffineGeoTransform,
    nodata: Option<f64>,
    data: Vec<f32>,
}

impl Band {
    pub fn new(
        meta: BandMeta,
        sample_type: SampleType,
        width: usize,
        height: usize,
        transform: AffineGeoTransform,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("band '{}' has an empty grid", meta.name)));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "band '{}': {} samples for a {}x{} grid",
                meta.name,
                data.len(),
                width,
                height
            )));
        }
        transform.check_invertible()?;
        if (meta.gsd_m - transform.gsd()).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "band '{}': nominal GSD {} m disagrees with geotransform pixel width {} m",
                meta.name,
                meta.gsd_m,
                transform.gsd()
            )));
        }
        Ok(Self {
            meta,
            sample_type,
            width,
            height,
            transform,
            nodata: None,
            data,
        })
    }

    /// `f32` band whose nominal GSD is taken from the transform.
    pub fn from_grid(
        name: impl Into<String>,
        width: usize,
        height: usize,
        transform: AffineGeoTransform,
        data: Vec<f32>,
    ) -> Result<Self> {
        let meta = BandMeta::new(name, transform.gsd());
        Self::new(meta, SampleType::F32, width, height, transform, data)
    }

    pub fn with_nodata(mut self, nodata: Option<f64>) -> Self {
        self.nodata = nodata;
        self
    }

    pub fn with_meta(mut self, meta: BandMeta) -> Result<Self> {
        if (meta.gsd_m - self.transform.gsd()).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "band '{}': nominal GSD {} m disagrees with geotransform",
                meta.name, meta.gsd_m
            )));
        }
        self.meta = meta;
        Ok(self)
    }

    pub fn meta(&self) -> &BandMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn sample_type(&self) -> SampleType {
        self.sample_type
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn transform(&self) -> &AffineGeoTransform {
        &self.transform
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn gsd(&self) -> f64 {
        self.transform.gsd()
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// True when `v` equals the band's nodata value.
    #[inline]
    pub fn is_nodata(&self, v: f32) -> bool {
        match self.nodata {
            Some(nd) => v == nd as f32 || (nd.is_nan() && v.is_nan()),
            None => false,
        }
    }

    /// Nodata value to write where no source sample exists.
    pub fn fill_value(&self) -> f32 {
        self.nodata.map(|v| v as f32).unwrap_or(0.0)
    }

    pub fn footprint(&self, crs_id: &str) -> Aoi {
        let (w, h) = (self.width as f64, self.height as f64);
        let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .map(|(x, y)| project(&self.transform, PixelPoint::new(x, y)));
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in corners {
            min_x = min_x.min(c.x);
            min_y = min_y.min(c.y);
            max_x = max_x.max(c.x);
            max_y = max_y.max(c.y);
        }
        Aoi {
            min_x,
            min_y,
            max_x,
            max_y,
            crs_id: crs_id.to_string(),
        }
    }

    /// Window `[col0, col1) x [row0, row1)` with the transform re-anchored
    /// so that retained samples keep their world coordinates.
    pub fn window(&self, col0: usize, row0: usize, col1: usize, row1: usize) -> Result<Self> {
        if col0 >= col1 || row0 >= row1 || col1 > self.width || row1 > self.height {
            return Err(Error::NoOverlap);
        }
        let w = col1 - col0;
        let mut data = Vec::with_capacity(w * (row1 - row0));
        for row in row0..row1 {
            let start = row * self.width + col0;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Self {
            meta: self.meta.clone(),
            sample_type: self.sample_type,
            width: w,
            height: row1 - row0,
            transform: self.transform.offset(col0, row0),
            nodata: self.nodata,
            data,
        })
    }

    /// Same grid and metadata, new samples.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::invalid("replacement data has the wrong length"));
        }
        Ok(Self {
            data,
            ..self.clone()
        })
    }
}

/// A multi-band georeferenced scene. Bands may differ in resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRaster {
    crs_id: String,
    bands: Vec<Band>,
}

impl GeoRaster {
    pub fn new(crs_id: impl Into<String>, bands: Vec<Band>) -> Result<Self> {
        let crs_id = crs_id.into();
        let Some(first) = bands.first() else {
            return Err(Error::invalid("raster has no bands"));
        };
        let reference = first.footprint(&crs_id);
        for band in &bands[1..] {
            if !band.footprint(&crs_id).intersects(&reference) {
                return Err(Error::invalid(format!(
                    "band '{}' does not overlap the raster footprint",
                    band.name()
                )));
            }
        }
        Ok(Self { crs_id, bands })
    }

    pub fn crs_id(&self) -> &str {
        &self.crs_id
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band(&self, i: usize) -> Option<&Band> {
        self.bands.get(i)
    }

    pub fn into_bands(self) -> Vec<Band> {
        self.bands
    }

    /// Index of the band used for tiepoint matching: the first band whose
    /// name mentions "pan", otherwise band 0.
    pub fn reference_band_index(&self) -> usize {
        self.bands
            .iter()
            .position(|b| b.name().to_ascii_lowercase().contains("pan"))
            .unwrap_or(0)
    }

    pub fn reference_band(&self) -> &Band {
        &self.bands[self.reference_band_index()]
    }
}

/// World bounding box of band 0.
pub fn footprint(r: &GeoRaster) -> Aoi {
    r.bands[0].footprint(&r.crs_id)
}

/// Snap values within `eps` of an integer onto it before floor/ceil.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Pixel window `(col0, row0, col1, row1)` of the smallest pixel-aligned
/// rectangle of `band` covering `aoi`, clamped to the grid.
pub fn covering_window(band: &Band, aoi: &Aoi) -> Result<(usize, usize, usize, usize)> {
    let (mut c0, mut r0) = (f64::INFINITY, f64::INFINITY);
    let (mut c1, mut r1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for corner in aoi.corners() {
        let p = backproject(band.transform(), corner)?;
        c0 = c0.min(p.x);
        r0 = r0.min(p.y);
        c1 = c1.max(p.x);
        r1 = r1.max(p.y);
    }
    let c0 = snap(c0).floor().max(0.0);
    let r0 = snap(r0).floor().max(0.0);
    let c1 = snap(c1).ceil().min(band.width() as f64);
    let r1 = snap(r1).ceil().min(band.height() as f64);
    if c0 >= c1 || r0 >= r1 {
        return Err(Error::NoOverlap);
    }
    Ok((c0 as usize, r0 as usize, c1 as usize, r1 as usize))
}

/// Crop every band to the smallest pixel-aligned window covering `aoi`.
pub fn clip(r: &GeoRaster, aoi: &Aoi) -> Result<GeoRaster> {
    aoi.validate()?;
    if aoi.crs_id != r.crs_id {
        return Err(Error::CrsMismatch {
            left: r.crs_id.clone(),
            right: aoi.crs_id.clone(),
        });
    }
    if !footprint(r).intersects(aoi) {
        return Err(Error::NoOverlap);
    }
    let bands = r
        .bands
        .iter()
        .map(|band| {
            let (c0, r0, c1, r1) = covering_window(band, aoi)?;
            band.window(c0, r0, c1, r1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeoRaster {
        crs_id: r.crs_id.clone(),
        bands,
    })
}
