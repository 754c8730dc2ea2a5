//! Downsampling to the working resolution and model-driven resampling of
//! each band through the chain of geotransforms.
//!
//! For every output pixel center the chain is:
//!
//! 1. output pixel → world, through the output grid;
//! 2. world → working-base pixel `(x_b, y_b)`;
//! 3. correction model → working-warp pixel `(x̂_w, ŷ_w)`;
//! 4. working-warp pixel → world;
//! 5. world → pixel of the input band, which is then sampled.
//!
//! Steps 1, 2, 4 and 5 only involve per-band metadata, so one model fitted
//! on the reference band serves every band regardless of its resolution.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{backproject, project, AffineGeoTransform, Band, BandMeta, GeoRaster, GridSpec, PixelPoint, SampleType};
use crate::model::{evaluate, CorrectionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationMethod {
    Nearest,
    Bilinear,
    AreaAverage,
}

impl InterpolationMethod {
    /// Bilinear for continuous reflectance, nearest for categorical bands.
    pub fn default_for(meta: &BandMeta) -> Self {
        if meta.categorical {
            InterpolationMethod::Nearest
        } else {
            InterpolationMethod::Bilinear
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InterpolationMethod::Nearest => "nearest",
            InterpolationMethod::Bilinear => "bilinear",
            InterpolationMethod::AreaAverage => "area_average",
        }
    }
}

impl fmt::Display for InterpolationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterpolationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(InterpolationMethod::Nearest),
            "bilinear" => Ok(InterpolationMethod::Bilinear),
            "area_average" | "area" => Ok(InterpolationMethod::AreaAverage),
            other => Err(Error::invalid(format!("unknown interpolation '{other}'"))),
        }
    }
}

/// Common grid on which tiepoints are found and the model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingResolution {
    pub gsd_m: f64,
}

impl WorkingResolution {
    pub fn new(gsd_m: f64) -> Result<Self> {
        if !(gsd_m.is_finite() && gsd_m > 0.0) {
            return Err(Error::invalid(format!("working GSD {gsd_m} must be positive")));
        }
        Ok(Self { gsd_m })
    }

    /// Coarsest reference-band GSD among `rasters`.
    pub fn coarsest(rasters: &[&GeoRaster]) -> Result<Self> {
        let gsd = rasters
            .iter()
            .map(|r| r.reference_band().gsd())
            .fold(0.0, f64::max);
        Self::new(gsd)
    }

    /// Working grid for `band`: same origin and orientation, pixels scaled to
    /// the working GSD, dimensions rounded to the nearest whole pixel.
    pub fn grid_for(&self, band: &Band) -> Result<GridSpec> {
        let src = band.gsd();
        if src > self.gsd_m * (1.0 + 1e-9) {
            return Err(Error::UpsampleRequested {
                source_gsd: src,
                target_gsd: self.gsd_m,
            });
        }
        let factor = self.gsd_m / src;
        let dim = |n: usize| ((n as f64 / factor).round() as usize).max(1);
        Ok(GridSpec {
            transform: band.transform().scaled(factor),
            width: dim(band.width()),
            height: dim(band.height()),
        })
    }
}

/// Point sample of `band` at continuous pixel location `p`; `None` outside
/// the grid or on nodata.
pub fn sample(band: &Band, p: PixelPoint, method: InterpolationMethod) -> Option<f32> {
    match method {
        InterpolationMethod::Nearest | InterpolationMethod::AreaAverage => sample_nearest(band, p),
        InterpolationMethod::Bilinear => sample_bilinear(band, p),
    }
}

#[inline]
fn sample_nearest(band: &Band, p: PixelPoint) -> Option<f32> {
    let (w, h) = (band.width() as f64, band.height() as f64);
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x < w && p.y < h) {
        return None;
    }
    let v = band.get(p.x as usize, p.y as usize);
    (!band.is_nodata(v)).then_some(v)
}

fn sample_bilinear(band: &Band, p: PixelPoint) -> Option<f32> {
    let (w, h) = (band.width(), band.height());
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= w as f64 && p.y <= h as f64) {
        return None;
    }
    let fx = p.x - 0.5;
    let fy = p.y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let clamp_x = |c: f64| c.clamp(0.0, (w - 1) as f64) as usize;
    let clamp_y = |r: f64| r.clamp(0.0, (h - 1) as f64) as usize;
    let taps = [
        (clamp_x(x0), clamp_y(y0), (1.0 - tx) * (1.0 - ty)),
        (clamp_x(x0 + 1.0), clamp_y(y0), tx * (1.0 - ty)),
        (clamp_x(x0), clamp_y(y0 + 1.0), (1.0 - tx) * ty),
        (clamp_x(x0 + 1.0), clamp_y(y0 + 1.0), tx * ty),
    ];
    let mut sum = 0.0f64;
    let mut weight = 0.0f64;
    for (c, r, wgt) in taps {
        if wgt <= 0.0 {
            continue;
        }
        let v = band.get(c, r);
        if band.is_nodata(v) {
            continue;
        }
        sum += wgt * v as f64;
        weight += wgt;
    }
    (weight > 0.0).then(|| (sum / weight) as f32)
}

/// Offsets of the 4x4 supersampling lattice inside one pixel.
const SUPERSAMPLE: [f64; 4] = [0.125, 0.375, 0.625, 0.875];

fn mean_of(values: impl Iterator<Item = Option<f32>>) -> Option<f32> {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for v in values.flatten() {
        sum += v as f64;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64) as f32)
}

/// Downsample `band` onto its working-resolution grid.
pub fn to_working_resolution(band: &Band, target: &WorkingResolution, method: InterpolationMethod) -> Result<Band> {
    let grid = target.grid_for(band)?;
    if (band.gsd() - target.gsd_m).abs() <= 1e-9 * target.gsd_m {
        return Ok(band.clone());
    }
    let factor = target.gsd_m / band.gsd();
    let integral = (factor - factor.round()).abs() < 1e-9;
    let fill = band.fill_value();
    let src_gt = *band.transform();
    let mut data = vec![0.0f32; grid.width * grid.height];
    let mut any_missing = false;

    data.par_chunks_mut(grid.width)
        .enumerate()
        .map(|(row, out)| {
            let mut missing = false;
            for (col, slot) in out.iter_mut().enumerate() {
                let value = match method {
                    InterpolationMethod::AreaAverage if integral => {
                        let k = factor.round() as usize;
                        let (c0, r0) = (col * k, row * k);
                        let c1 = ((col + 1) * k).min(band.width());
                        let r1 = ((row + 1) * k).min(band.height());
                        mean_of((r0..r1).flat_map(|r| {
                            (c0..c1).map(move |c| {
                                let v = band.get(c, r);
                                (!band.is_nodata(v)).then_some(v)
                            })
                        }))
                    }
                    InterpolationMethod::AreaAverage => mean_of(SUPERSAMPLE.iter().flat_map(|&oy| {
                        SUPERSAMPLE.iter().map(move |&ox| {
                            let world = project(&grid.transform, PixelPoint::new(col as f64 + ox, row as f64 + oy));
                            backproject(&src_gt, world).ok().and_then(|p| sample_nearest(band, p))
                        })
                    })),
                    m => {
                        let world = project(&grid.transform, PixelPoint::center_of(col, row));
                        backproject(&src_gt, world).ok().and_then(|p| sample(band, p, m))
                    }
                };
                *slot = value.unwrap_or_else(|| {
                    missing = true;
                    fill
                });
            }
            missing
        })
        .collect::<Vec<_>>()
        .into_iter()
        .for_each(|m| any_missing |= m);

    let mut meta = band.meta().clone();
    meta.gsd_m = grid.transform.gsd();
    let nodata = if any_missing { band.nodata().or(Some(fill as f64)) } else { band.nodata() };
    Ok(Band::new(meta, SampleType::F32, grid.width, grid.height, grid.transform, data)?.with_nodata(nodata))
}

/// The geotransforms the chain passes through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleChain<'a> {
    pub output: &'a AffineGeoTransform,
    pub working_base: &'a AffineGeoTransform,
    pub working_warp: &'a AffineGeoTransform,
    pub input: &'a AffineGeoTransform,
    pub model: &'a CorrectionModel,
}

impl ResampleChain<'_> {
    pub fn check(&self) -> Result<()> {
        for gt in [self.output, self.working_base, self.working_warp, self.input] {
            gt.check_invertible()?;
        }
        Ok(())
    }

    /// Input-band pixel location feeding output location `p`.
    #[inline]
    pub fn source_location(&self, p: PixelPoint) -> Result<PixelPoint> {
        let world = project(self.output, p);
        let base = backproject(self.working_base, world)?;
        let warp = evaluate(self.model, base);
        let world = project(self.working_warp, warp);
        backproject(self.input, world)
    }
}

/// Resample `warp_in` onto `out_grid` through the correction chain.
/// Output pixels whose source falls outside `warp_in` are nodata.
pub fn resample_band_through_model(
    warp_in: &Band,
    working_base: &AffineGeoTransform,
    working_warp: &AffineGeoTransform,
    model: &CorrectionModel,
    out_grid: &GridSpec,
    method: InterpolationMethod,
) -> Result<Band> {
    let chain = ResampleChain {
        output: &out_grid.transform,
        working_base,
        working_warp,
        input: warp_in.transform(),
        model,
    };
    chain.check()?;
    if out_grid.width == 0 || out_grid.height == 0 {
        return Err(Error::invalid("output grid is empty"));
    }
    let fill = warp_in.fill_value();
    let st = warp_in.sample_type();
    let mut data = vec![fill; out_grid.width * out_grid.height];
    data.par_chunks_mut(out_grid.width)
        .enumerate()
        .try_for_each(|(row, out)| -> Result<()> {
            for (col, slot) in out.iter_mut().enumerate() {
                let value = match method {
                    InterpolationMethod::AreaAverage => {
                        let mut vals = Vec::with_capacity(16);
                        for &oy in &SUPERSAMPLE {
                            for &ox in &SUPERSAMPLE {
                                let src = chain.source_location(PixelPoint::new(col as f64 + ox, row as f64 + oy))?;
                                vals.push(sample_nearest(warp_in, src));
                            }
                        }
                        mean_of(vals.into_iter())
                    }
                    m => sample(warp_in, chain.source_location(PixelPoint::center_of(col, row))?, m),
                };
                if let Some(v) = value {
                    *slot = st.quantize(v);
                }
            }
            Ok(())
        })?;
    let mut meta = warp_in.meta().clone();
    meta.gsd_m = out_grid.transform.gsd();
    Ok(
        Band::new(meta, st, out_grid.width, out_grid.height, out_grid.transform, data)?
            .with_nodata(Some(warp_in.nodata().unwrap_or(fill as f64))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    fn gt(gsd: f64) -> AffineGeoTransform {
        AffineGeoTransform::north_up(1000.0, 2000.0, gsd, -gsd)
    }

    fn band(w: usize, h: usize, gsd: f64, f: impl Fn(usize, usize) -> f32) -> Band {
        let data = (0..h).flat_map(|r| (0..w).map(move |c| (c, r))).map(|(c, r)| f(c, r)).collect();
        Band::from_grid("b", w, h, gt(gsd), data).unwrap()
    }

    #[test]
    fn same_gsd_is_identity() {
        let b = band(7, 5, 4.0, |c, r| (c * 3 + r) as f32);
        let out = to_working_resolution(&b, &WorkingResolution::new(4.0).unwrap(), InterpolationMethod::Bilinear).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn constant_area_average() {
        let b = band(8, 8, 5.0, |_, _| 42.0);
        let out =
            to_working_resolution(&b, &WorkingResolution::new(10.0).unwrap(), InterpolationMethod::AreaAverage).unwrap();
        assert_eq!(out.dims(), (4, 4));
        assert!(out.data().iter().all(|&v| v == 42.0));
        assert_eq!(out.gsd(), 10.0);
        assert_eq!(out.transform().origin_x, 1000.0);
    }

    #[test]
    fn checkerboard_block_means() {
        let b = band(8, 8, 5.0, |c, r| if (c + r) % 2 == 0 { 0.0 } else { 100.0 });
        let out =
            to_working_resolution(&b, &WorkingResolution::new(10.0).unwrap(), InterpolationMethod::AreaAverage).unwrap();
        // Oracle: explicit 2x2 block means.
        for r in 0..4 {
            for c in 0..4 {
                let mean = (b.get(2 * c, 2 * r) + b.get(2 * c + 1, 2 * r) + b.get(2 * c, 2 * r + 1) + b.get(2 * c + 1, 2 * r + 1))
                    / 4.0;
                assert_eq!(out.get(c, r), mean);
                assert_eq!(mean, 50.0);
            }
        }
    }

    #[test]
    fn upsample_is_refused() {
        let b = band(4, 4, 10.0, |_, _| 1.0);
        assert!(matches!(
            to_working_resolution(&b, &WorkingResolution::new(5.0).unwrap(), InterpolationMethod::Nearest),
            Err(Error::UpsampleRequested { .. })
        ));
    }

    #[test]
    fn nodata_is_skipped_in_area_average() {
        let b = band(4, 2, 5.0, |c, _| if c == 0 { 0.0 } else { 8.0 }).with_nodata(Some(0.0));
        let out =
            to_working_resolution(&b, &WorkingResolution::new(10.0).unwrap(), InterpolationMethod::AreaAverage).unwrap();
        assert_eq!(out.data(), &[8.0, 8.0]);
        assert_eq!(out.nodata(), Some(0.0));
    }

    #[test]
    fn non_integral_ratio_uses_supersampling() {
        let b = band(30, 30, 10.0, |c, _| c as f32);
        let out =
            to_working_resolution(&b, &WorkingResolution::new(15.0).unwrap(), InterpolationMethod::AreaAverage).unwrap();
        assert_eq!(out.dims(), (20, 20));
        // Output column 0 spans source columns 0 and half of 1: samples at
        // 0.1875, 0.5625, 0.9375, 1.3125 source px -> 0, 0, 0, 1.
        assert_eq!(out.get(0, 0), 0.25);
    }

    #[test]
    fn bilinear_midpoint_and_edges() {
        let b = band(2, 1, 1.0, |c, _| c as f32 * 10.0);
        assert_eq!(sample(&b, PixelPoint::new(1.0, 0.5), InterpolationMethod::Bilinear), Some(5.0));
        assert_eq!(sample(&b, PixelPoint::new(0.1, 0.5), InterpolationMethod::Bilinear), Some(0.0));
        assert_eq!(sample(&b, PixelPoint::new(2.5, 0.5), InterpolationMethod::Bilinear), None);
        assert_eq!(sample(&b, PixelPoint::new(1.99, 0.99), InterpolationMethod::Nearest), Some(10.0));
        assert_eq!(sample(&b, PixelPoint::new(-0.01, 0.5), InterpolationMethod::Nearest), None);
    }

    #[test]
    fn identity_chain_is_bit_exact() {
        let b = band(13, 9, 10.0, |c, r| (c * 31 + r * 7) as f32 * 0.37);
        let g = GridSpec::of(&b);
        let out = resample_band_through_model(
            &b,
            b.transform(),
            b.transform(),
            &CorrectionModel::identity(ModelKind::Affine),
            &g,
            InterpolationMethod::Nearest,
        )
        .unwrap();
        assert_eq!(out.data(), b.data());
    }

    #[test]
    fn shift_chain_matches_array_shift() {
        let b = band(12, 6, 10.0, |c, r| (c + 100 * r) as f32 + 1.0);
        let g = GridSpec::of(&b);
        let out = resample_band_through_model(
            &b,
            b.transform(),
            b.transform(),
            &CorrectionModel::shift(2.0, 0.0),
            &g,
            InterpolationMethod::Nearest,
        )
        .unwrap();
        let fill = out.nodata().unwrap() as f32;
        for r in 0..6 {
            for c in 0..12 {
                let expect = if c + 2 < 12 { b.get(c + 2, r) } else { fill };
                assert_eq!(out.get(c, r), expect);
            }
        }
    }

    #[test]
    fn chain_locality_in_a1() {
        let base = gt(10.0);
        let warp = AffineGeoTransform::north_up(995.0, 2004.0, 10.0, -10.0);
        let input = AffineGeoTransform::north_up(995.0, 2004.0, 30.0, -30.0);
        let out = AffineGeoTransform::north_up(995.0, 2004.0, 30.0, -30.0);
        let m0 = CorrectionModel::new(ModelKind::Quadratic, vec![0.3, 1.0, 0.01, 1e-5, 0.0, 2e-5], vec![-0.2, 0.0, 1.0, 0.0, 1e-5, 0.0])
            .unwrap();
        let mut a = m0.a().to_vec();
        a[0] += 1.0;
        let m1 = CorrectionModel::new(ModelKind::Quadratic, a, m0.b().to_vec()).unwrap();
        for (c, r) in [(0, 0), (5, 7), (31, 2)] {
            let p = PixelPoint::center_of(c, r);
            let c0 = ResampleChain { output: &out, working_base: &base, working_warp: &warp, input: &input, model: &m0 };
            let c1 = ResampleChain { model: &m1, ..c0 };
            let (s0, s1) = (c0.source_location(p).unwrap(), c1.source_location(p).unwrap());
            // One working pixel (10 m) is a third of an input pixel (30 m).
            assert!((s1.x - s0.x - 1.0 / 3.0).abs() < 1e-9);
            assert!((s1.y - s0.y).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_output_grid_rejected() {
        let b = band(4, 4, 10.0, |_, _| 1.0);
        let mut g = GridSpec::of(&b);
        g.transform.pixel_width = 0.0;
        let r = resample_band_through_model(
            &b,
            b.transform(),
            b.transform(),
            &CorrectionModel::shift(0.0, 0.0),
            &g,
            InterpolationMethod::Nearest,
        );
        assert!(matches!(r, Err(Error::SingularTransform { .. })));
    }
}
