//! Seeded synthetic base/warp pairs with a known correction model.
//!
//! Pixel values integrate an analytic texture (band-limited sinusoids plus
//! Gaussian blobs laid out on a jittered grid) defined in base world
//! coordinates. A warp pixel at working location `q` shows the ground that
//! the base sees at `M⁻¹(q)`, so the true model maps base to warp exactly as
//! a fitted one should.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{backproject, project, AffineGeoTransform, Band, BandMeta, GeoRaster, PixelPoint, SampleType, WorldPoint};
use crate::model::{evaluate, CorrectionModel, ModelKind};
use crate::tiepoints::{inside, Provenance, TiePoint, TiePointSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Width and height of the warp image, in working-resolution pixels.
    pub size: usize,
    pub seed: u64,
    /// True base-to-warp mapping in working-resolution pixels.
    pub model: CorrectionModel,
    /// Standard deviation of tiepoint noise per axis, in pixels.
    pub noise_sigma_px: f64,
    /// Fraction of tiepoints whose warp location is uniformly random.
    pub outlier_fraction: f64,
    /// Base GSD is the working GSD divided by this.
    pub resolution_ratio: usize,
    pub working_gsd_m: f64,
    pub tiepoint_count: usize,
    pub crs_id: String,
    /// World coordinates of the upper-left corner.
    pub origin: [f64; 2],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            size: 256,
            seed: 0,
            model: CorrectionModel::identity(ModelKind::Affine),
            noise_sigma_px: 0.0,
            outlier_fraction: 0.0,
            resolution_ratio: 2,
            working_gsd_m: 10.0,
            tiepoint_count: 150,
            crs_id: "EPSG:32611".into(),
            origin: [500_000.0, 4_100_000.0],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::invalid("synthetic size must be at least 32"));
        }
        if self.resolution_ratio == 0 {
            return Err(Error::invalid("resolution ratio must be at least 1"));
        }
        if !(self.noise_sigma_px >= 0.0 && self.noise_sigma_px.is_finite()) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier fraction must lie in [0, 1)"));
        }
        if !(self.working_gsd_m > 0.0 && self.working_gsd_m.is_finite()) {
            return Err(Error::invalid("working GSD must be positive"));
        }
        Ok(())
    }

    fn working_transform(&self) -> AffineGeoTransform {
        AffineGeoTransform::north_up(self.origin[0], self.origin[1], self.working_gsd_m, -self.working_gsd_m)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub base: GeoRaster,
    pub warp: GeoRaster,
    pub truth: CorrectionModel,
    /// Noisy tiepoints with outliers, on the working grids.
    pub tiepoints: TiePointSet,
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    x: f64,
    y: f64,
    inv_two_var: f64,
    amp: f64,
}

/// Analytic intensity field over world coordinates.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<Wave>,
    blobs: Vec<Blob>,
    cell: f64,
    min_x: f64,
    min_y: f64,
    cols: usize,
    rows: usize,
}

const WAVES: usize = 6;
const CELL_PX: f64 = 12.0;

impl Texture {
    /// Texture covering the square `[x0, x0 + extent] x [y0, y0 + extent]`
    /// with features scaled to `gsd`-metre pixels.
    pub fn new(seed: u64, x0: f64, y0: f64, extent: f64, gsd: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..WAVES)
            .map(|_| {
                let wavelength = rng.random_range(8.0..40.0) * gsd;
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / wavelength;
                Wave {
                    kx: k * angle.cos(),
                    ky: k * angle.sin(),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amp: rng.random_range(10.0..22.0),
                }
            })
            .collect();
        let cell = CELL_PX * gsd;
        let cols = (extent / cell).ceil() as usize + 1;
        let rows = cols;
        let blobs = (0..cols * rows)
            .map(|i| {
                let (cx, cy) = ((i % cols) as f64, (i / cols) as f64);
                let sigma = rng.random_range(1.2..2.5) * gsd;
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Blob {
                    x: x0 + (cx + rng.random_range(0.2..0.8)) * cell,
                    y: y0 + (cy + rng.random_range(0.2..0.8)) * cell,
                    inv_two_var: 1.0 / (2.0 * sigma * sigma),
                    amp: sign * rng.random_range(40.0..80.0),
                }
            })
            .collect();
        Self {
            waves,
            blobs,
            cell,
            min_x: x0,
            min_y: y0,
            cols,
            rows,
        }
    }

    pub fn value(&self, w: WorldPoint) -> f64 {
        let mut v = 128.0;
        for wave in &self.waves {
            v += wave.amp * (wave.kx * w.x + wave.ky * w.y + wave.phase).cos();
        }
        let ci = ((w.x - self.min_x) / self.cell).floor() as isize;
        let cj = ((w.y - self.min_y) / self.cell).floor() as isize;
        for dj in -1..=1 {
            for di in -1..=1 {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i as usize >= self.cols || j as usize >= self.rows {
                    continue;
                }
                let b = &self.blobs[j as usize * self.cols + i as usize];
                let d2 = (w.x - b.x).powi(2) + (w.y - b.y).powi(2);
                v += b.amp * (-d2 * b.inv_two_var).exp();
            }
        }
        v
    }
}

/// Base location `p` with `evaluate(model, p) == q`, by Newton iteration.
pub fn invert_model(model: &CorrectionModel, q: PixelPoint) -> Option<PixelPoint> {
    let (a, b) = (model.a(), model.b());
    let jacobian = |p: PixelPoint| -> [f64; 4] {
        match model.kind() {
            ModelKind::Shift => [1.0, 0.0, 0.0, 1.0],
            ModelKind::Affine => [a[1], a[2], b[1], b[2]],
            ModelKind::Quadratic => [
                a[1] + 2.0 * a[3] * p.x + a[4] * p.y,
                a[2] + a[4] * p.x + 2.0 * a[5] * p.y,
                b[1] + 2.0 * b[3] * p.x + b[4] * p.y,
                b[2] + b[4] * p.x + 2.0 * b[5] * p.y,
            ],
        }
    };
    let first = evaluate(model, q);
    let mut p = PixelPoint::new(2.0 * q.x - first.x, 2.0 * q.y - first.y);
    for _ in 0..50 {
        let f = evaluate(model, p);
        let (rx, ry) = (f.x - q.x, f.y - q.y);
        if rx.abs() < 1e-12 && ry.abs() < 1e-12 {
            return Some(p);
        }
        let [j00, j01, j10, j11] = jacobian(p);
        let det = j00 * j11 - j01 * j10;
        if det.abs() < 1e-12 {
            return None;
        }
        p = PixelPoint::new(p.x - (j11 * rx - j01 * ry) / det, p.y - (-j10 * rx + j00 * ry) / det);
    }
    let f = evaluate(model, p);
    ((f.x - q.x).abs() < 1e-9 && (f.y - q.y).abs() < 1e-9).then_some(p)
}

/// Band whose pixels average `value` over an `s x s` subsample pattern.
fn render(
    name: &str,
    transform: AffineGeoTransform,
    width: usize,
    height: usize,
    s: usize,
    value: impl Fn(WorldPoint) -> Result<f64> + Sync,
) -> Result<Band> {
    let mut data = vec![0.0f32; width * height];
    let step = 1.0 / s as f64;
    data.par_chunks_mut(width).enumerate().try_for_each(|(row, out)| -> Result<()> {
        for (col, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..s {
                for i in 0..s {
                    let p = PixelPoint::new(col as f64 + (i as f64 + 0.5) * step, row as f64 + (j as f64 + 0.5) * step);
                    acc += value(project(&transform, p))?;
                }
            }
            *slot = (acc / (s * s) as f64) as f32;
        }
        Ok(())
    })?;
    let meta = BandMeta::new(name, transform.gsd());
    Band::new(meta, SampleType::F32, width, height, transform, data)
}

/// Base and warp rasters plus tiepoints for `spec`.
///
/// The base has one `pan` band at `working_gsd / resolution_ratio`. The
/// warp shares the base's georeferencing at working resolution and carries
/// a `pan` band plus a `nir` band at twice the working GSD.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let gsd = spec.working_gsd_m;
    let n = spec.size;
    let extent = n as f64 * gsd;
    let margin = 64.0 * gsd;
    let (x0, y_top) = (spec.origin[0], spec.origin[1]);
    let texture = Texture::new(spec.seed, x0 - margin, y_top - extent - margin, extent + 2.0 * margin, gsd);
    let working = spec.working_transform();

    let ratio = spec.resolution_ratio;
    let base_gsd = gsd / ratio as f64;
    let base_gt = AffineGeoTransform::north_up(x0, y_top, base_gsd, -base_gsd);
    let base_sub = (4 / ratio).max(1);
    let base_band = render("pan", base_gt, n * ratio, n * ratio, base_sub, |w| Ok(texture.value(w)))?;

    let truth = spec.model.clone();
    let warp_value = |w: WorldPoint| -> Result<f64> {
        let q = backproject(&working, w)?;
        let p = invert_model(&truth, q)
            .ok_or_else(|| Error::invalid("true model is not invertible over the scene"))?;
        Ok(texture.value(project(&working, p)))
    };
    let warp_pan = render("pan", working, n, n, 4, warp_value)?;
    let coarse = AffineGeoTransform::north_up(x0, y_top, 2.0 * gsd, -2.0 * gsd);
    let warp_nir = render("nir", coarse, n.div_ceil(2), n.div_ceil(2), 4, warp_value)?;

    let base = GeoRaster::new(spec.crs_id.clone(), vec![base_band])?;
    let warp = GeoRaster::new(spec.crs_id.clone(), vec![warp_pan, warp_nir])?;
    let tiepoints = synthetic_tiepoints(spec)?;
    Ok(SyntheticScene {
        base,
        warp,
        truth,
        tiepoints,
    })
}

/// Tiepoints drawn directly from the true model: inliers carry Gaussian
/// noise, outliers land uniformly on the warp grid.
pub fn synthetic_tiepoints(spec: &SyntheticSpec) -> Result<TiePointSet> {
    spec.validate()?;
    let n = spec.size as f64;
    let dims = (spec.size, spec.size);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let noise = Normal::new(0.0, spec.noise_sigma_px).map_err(|e| Error::invalid(e.to_string()))?;
    let outliers = (spec.tiepoint_count as f64 * spec.outlier_fraction).round() as usize;
    let mut points = Vec::with_capacity(spec.tiepoint_count);
    let mut attempts = 0usize;
    while points.len() < spec.tiepoint_count {
        attempts += 1;
        if attempts > 1000 * spec.tiepoint_count.max(1) {
            return Err(Error::invalid("true model maps too little of the base grid onto the warp grid"));
        }
        let base = PixelPoint::new(rng.random_range(1.0..n - 1.0), rng.random_range(1.0..n - 1.0));
        let q = evaluate(&spec.model, base);
        if !(q.x >= 1.0 && q.y >= 1.0 && q.x <= n - 1.0 && q.y <= n - 1.0) {
            continue;
        }
        let warp = if points.len() < spec.tiepoint_count - outliers {
            let w = PixelPoint::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng));
            PixelPoint::new(w.x.clamp(0.0, n), w.y.clamp(0.0, n))
        } else {
            PixelPoint::new(rng.random_range(0.0..n), rng.random_range(0.0..n))
        };
        debug_assert!(inside(warp, dims));
        points.push(TiePoint::new(base, warp, 1.0));
    }
    TiePointSet::new(points, Provenance::Synthetic, spec.working_gsd_m, dims, dims)
}
