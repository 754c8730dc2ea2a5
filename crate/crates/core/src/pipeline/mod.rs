//! End-to-end alignment: load, reduce to the working resolution, find
//! tiepoints, fit robustly, then resample every warp band through the
//! fitted model.

mod report;
mod synthetic;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{clip, footprint, Aoi, Band, GeoRaster, GridSpec};
use crate::io::{read_raster, write_raster_with_metadata};
use crate::model::{ModelDocument, ModelKind};
use crate::ransac::{ransac_fit, RansacConfig, RobustFitResult};
use crate::resample::{resample_band_through_model, to_working_resolution, InterpolationMethod, WorkingResolution};
use crate::tiepoints::{export_tiepoints, extract_tiepoints, import_tiepoints, DetectConfig, TiePointSet};

pub use report::{StackReport, StackRow, Summary};
pub use synthetic::{generate_synthetic, invert_model, synthetic_tiepoints, SyntheticScene, SyntheticSpec, Texture};

/// Which correction model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelPolicy {
    Fixed(ModelKind),
    /// Affine, upgraded to quadratic when the quadratic fit keeps strictly
    /// more inliers.
    Auto,
}

/// Affine consensus needed before a quadratic fit is attempted under
/// [`ModelPolicy::Auto`].
pub const AUTO_QUADRATIC_MIN_INLIERS: usize = 24;

impl Default for ModelPolicy {
    fn default() -> Self {
        ModelPolicy::Fixed(ModelKind::Affine)
    }
}

impl fmt::Display for ModelPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelPolicy::Fixed(k) => write!(f, "{k}"),
            ModelPolicy::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for ModelPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(ModelPolicy::Auto)
        } else {
            s.parse().map(ModelPolicy::Fixed)
        }
    }
}

impl TryFrom<String> for ModelPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelPolicy> for String {
    fn from(p: ModelPolicy) -> Self {
        p.to_string()
    }
}

/// Where tiepoints come from: the built-in matcher or an interchange file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum TiepointSource {
    #[default]
    Builtin,
    File(PathBuf),
}

impl From<String> for TiepointSource {
    fn from(s: String) -> Self {
        if s == "builtin" {
            TiepointSource::Builtin
        } else {
            TiepointSource::File(s.into())
        }
    }
}

impl From<TiepointSource> for String {
    fn from(t: TiepointSource) -> Self {
        match t {
            TiepointSource::Builtin => "builtin".into(),
            TiepointSource::File(p) => p.display().to_string(),
        }
    }
}

/// Everything except the inputs and outputs of an alignment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignOptions {
    pub aoi: Option<Aoi>,
    pub model: ModelPolicy,
    /// Forced interpolation for every band; per-band default when unset.
    pub interpolation: Option<InterpolationMethod>,
    pub ransac: RansacConfig,
    pub detect: DetectConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentJob {
    /// Row label in stack reports; defaults to the warp file stem.
    #[serde(default)]
    pub scene_id: Option<String>,
    pub base: PathBuf,
    pub warp: PathBuf,
    #[serde(default)]
    pub tiepoints: TiepointSource,
    pub out: PathBuf,
    #[serde(flatten)]
    pub options: AlignOptions,
}

impl AlignmentJob {
    pub fn new(base: impl Into<PathBuf>, warp: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            scene_id: None,
            base: base.into(),
            warp: warp.into(),
            tiepoints: TiepointSource::Builtin,
            out: out.into(),
            options: AlignOptions::default(),
        }
    }

    pub fn label(&self) -> String {
        self.scene_id.clone().unwrap_or_else(|| {
            self.warp
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.warp.display().to_string())
        })
    }
}

/// Reads a JSON array of jobs. Relative paths are taken relative to the
/// jobs file.
pub fn load_jobs(path: impl AsRef<Path>) -> Result<Vec<AlignmentJob>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    let mut jobs: Vec<AlignmentJob> = serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = dir.join(&*p);
        }
    };
    for job in &mut jobs {
        fix(&mut job.base);
        fix(&mut job.warp);
        fix(&mut job.out);
        if let TiepointSource::File(p) = &mut job.tiepoints {
            fix(p);
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandInterpolation {
    pub band: String,
    pub method: InterpolationMethod,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_kind: ModelKind,
    pub model_policy: ModelPolicy,
    pub ransac: RansacConfig,
    pub seed: u64,
    pub interpolation: Vec<BandInterpolation>,
    pub tiepoint_source: String,
    pub tiepoint_count: usize,
    pub detect: DetectConfig,
    pub aoi: Option<Aoi>,
    pub working_gsd_m: f64,
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub aligned: GeoRaster,
    pub fit: RobustFitResult,
    pub model: ModelDocument,
    pub tiepoints: TiePointSet,
    pub metadata: RunMetadata,
}

/// Working-resolution reference bands of an overlapping base/warp pair.
#[derive(Debug, Clone)]
pub struct WorkingPair {
    pub base: GeoRaster,
    pub warp: GeoRaster,
    pub resolution: WorkingResolution,
    pub working_base: Band,
    pub working_warp: Band,
}

/// Footprint and CRS checks only; no pixel work.
fn check_overlap(base: &GeoRaster, warp: &GeoRaster, aoi: Option<&Aoi>) -> Result<()> {
    if base.crs_id() != warp.crs_id() {
        return Err(Error::CrsMismatch {
            left: base.crs_id().into(),
            right: warp.crs_id().into(),
        });
    }
    let (fb, fw) = (footprint(base), footprint(warp));
    let mut area = fb.intersection_area(&fw);
    if let Some(aoi) = aoi {
        if aoi.crs_id != base.crs_id() {
            return Err(Error::CrsMismatch {
                left: aoi.crs_id.clone(),
                right: base.crs_id().into(),
            });
        }
        area = area.min(fb.intersection_area(aoi)).min(fw.intersection_area(aoi));
    }
    if area > 0.0 {
        Ok(())
    } else {
        Err(Error::NoOverlap)
    }
}

fn working_method(band: &Band) -> InterpolationMethod {
    if band.meta().categorical {
        InterpolationMethod::Nearest
    } else {
        InterpolationMethod::AreaAverage
    }
}

/// Clip to the AOI and bring both reference bands to the coarser GSD.
pub fn prepare(base: &GeoRaster, warp: &GeoRaster, aoi: Option<&Aoi>) -> Result<WorkingPair> {
    check_overlap(base, warp, aoi)?;
    let (base, warp) = match aoi {
        Some(a) => (clip(base, a)?, clip(warp, a)?),
        None => (base.clone(), warp.clone()),
    };
    let resolution = WorkingResolution::coarsest(&[&base, &warp])?;
    let rb = base.reference_band();
    let rw = warp.reference_band();
    let working_base = to_working_resolution(rb, &resolution, working_method(rb))?;
    let working_warp = to_working_resolution(rw, &resolution, working_method(rw))?;
    Ok(WorkingPair {
        base,
        warp,
        resolution,
        working_base,
        working_warp,
    })
}

fn as_alignment_failure(e: Error) -> Error {
    match e {
        Error::NoConsensus { .. } | Error::InsufficientPoints { .. } | Error::RankDeficient { .. } => {
            Error::FailedAlignment(Box::new(e))
        }
        other => other,
    }
}

/// Robust fit under `policy`.
pub fn fit_with_policy(policy: ModelPolicy, tps: &TiePointSet, cfg: &RansacConfig) -> Result<RobustFitResult> {
    let pts = tps.points();
    let run = |kind| ransac_fit(kind, pts, cfg);
    let result = match policy {
        ModelPolicy::Fixed(kind) => run(kind),
        ModelPolicy::Auto => match run(ModelKind::Affine) {
            Ok(affine) => {
                if affine.report.inlier_count >= AUTO_QUADRATIC_MIN_INLIERS {
                    match run(ModelKind::Quadratic) {
                        Ok(q) if q.report.inlier_count > affine.report.inlier_count => Ok(q),
                        _ => Ok(affine),
                    }
                } else {
                    Ok(affine)
                }
            }
            Err(Error::NoConsensus { .. } | Error::InsufficientPoints { .. } | Error::RankDeficient { .. }) => {
                run(ModelKind::Shift)
            }
            Err(e) => Err(e),
        },
    };
    result.map_err(as_alignment_failure)
}

fn check_imported(tps: &TiePointSet, pair: &WorkingPair) -> Result<()> {
    let gsd = pair.resolution.gsd_m;
    if tps.base_dims() != pair.working_base.dims() || tps.warp_dims() != pair.working_warp.dims() {
        return Err(Error::invalid(format!(
            "tiepoint grids {:?}/{:?} do not match the working grids {:?}/{:?}",
            tps.base_dims(),
            tps.warp_dims(),
            pair.working_base.dims(),
            pair.working_warp.dims()
        )));
    }
    if ((tps.working_gsd_m() - gsd) / gsd).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "tiepoint GSD {} m does not match the working GSD {gsd} m",
            tps.working_gsd_m()
        )));
    }
    Ok(())
}

/// Align `warp` onto `base`. `tiepoints`, when given, are used instead of
/// the built-in matcher and must be expressed on the working grids.
pub fn align_rasters(
    base: &GeoRaster,
    warp: &GeoRaster,
    opts: &AlignOptions,
    tiepoints: Option<TiePointSet>,
) -> Result<Alignment> {
    opts.ransac.validate()?;
    let pair = prepare(base, warp, opts.aoi.as_ref())?;
    let tiepoints = match tiepoints {
        Some(t) => {
            check_imported(&t, &pair)?;
            t
        }
        None => extract_tiepoints(&pair.working_base, &pair.working_warp, &opts.detect)?,
    };
    let fit = fit_with_policy(opts.model, &tiepoints, &opts.ransac)?;

    let wb = *pair.working_base.transform();
    let ww = *pair.working_warp.transform();
    let gsd = pair.resolution.gsd_m;
    let mut interpolation = Vec::new();
    let bands = pair
        .warp
        .bands()
        .iter()
        .map(|band| {
            let method = opts
                .interpolation
                .unwrap_or_else(|| InterpolationMethod::default_for(band.meta()));
            interpolation.push(BandInterpolation {
                band: band.name().to_string(),
                method,
            });
            // The band keeps its own GSD on the base's working footprint.
            let factor = band.gsd() / gsd;
            let dim = |n: usize| ((n as f64 / factor).round() as usize).max(1);
            let grid = GridSpec {
                transform: wb.scaled(factor),
                width: dim(pair.working_base.width()),
                height: dim(pair.working_base.height()),
            };
            (band, grid, method)
        })
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(band, grid, method)| resample_band_through_model(band, &wb, &ww, &fit.model, &grid, method))
        .collect::<Result<Vec<_>>>()?;
    let aligned = GeoRaster::new(pair.base.crs_id(), bands)?;

    let metadata = RunMetadata {
        model_kind: fit.model.kind(),
        model_policy: opts.model,
        ransac: opts.ransac.clone(),
        seed: opts.ransac.seed,
        interpolation,
        tiepoint_source: tiepoints.provenance().to_string(),
        tiepoint_count: tiepoints.len(),
        detect: opts.detect.clone(),
        aoi: opts.aoi.clone(),
        working_gsd_m: gsd,
    };
    let model = ModelDocument {
        model: fit.model.clone(),
        working_gsd_m: gsd,
        base_grid: GridSpec::of(&pair.working_base),
        warp_grid: GridSpec::of(&pair.working_warp),
    };
    Ok(Alignment {
        aligned,
        fit,
        model,
        tiepoints,
        metadata,
    })
}

/// Output file names inside a job's output directory.
pub mod outputs {
    pub const MODEL: &str = "model.json";
    pub const FIT: &str = "fit.json";
    pub const TIEPOINTS: &str = "tiepoints.txt";
    pub const RUN: &str = "run.json";
    pub const ALIGNED_STEM: &str = "aligned";
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::from(e).in_file(path))
}

/// Persist an alignment into `dir`. The aligned raster keeps the warp
/// input's format.
pub fn write_outputs(alignment: &Alignment, dir: &Path, like: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let ext = match like.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("tif") || e.eq_ignore_ascii_case("tiff") => "tif",
        _ => "json",
    };
    let raster_path = dir.join(format!("{}.{ext}", outputs::ALIGNED_STEM));
    let meta = serde_json::to_value(&alignment.metadata)?;
    write_raster_with_metadata(&alignment.aligned, &raster_path, Some(meta))?;
    write_json(&dir.join(outputs::MODEL), &alignment.model)?;
    write_json(
        &dir.join(outputs::FIT),
        &serde_json::json!({ "metadata": alignment.metadata, "result": alignment.fit }),
    )?;
    write_json(&dir.join(outputs::RUN), &alignment.metadata)?;
    export_tiepoints(&alignment.tiepoints, dir.join(outputs::TIEPOINTS))?;
    Ok(raster_path)
}

/// Run one job from files to files.
pub fn align_pair(job: &AlignmentJob) -> Result<Alignment> {
    let base = read_raster(&job.base)?;
    let warp = read_raster(&job.warp)?;
    align_loaded(job, &base, &warp)
}

/// [`align_pair`] for rasters the caller already read from `job.base` and
/// `job.warp`.
pub fn align_loaded(job: &AlignmentJob, base: &GeoRaster, warp: &GeoRaster) -> Result<Alignment> {
    // Cheap guard before any tiepoint file parsing or pixel work.
    check_overlap(base, warp, job.options.aoi.as_ref())?;
    let tiepoints = match &job.tiepoints {
        TiepointSource::Builtin => None,
        TiepointSource::File(p) => Some(import_tiepoints(p)?),
    };
    let alignment = align_rasters(base, warp, &job.options, tiepoints)?;
    write_outputs(&alignment, &job.out, &job.warp)?;
    Ok(alignment)
}

/// Run jobs on up to `workers` threads. Rows follow job order; failed jobs
/// become error rows and are left out of the aggregates.
pub fn align_stack(jobs: &[AlignmentJob], workers: usize) -> Result<StackReport> {
    if jobs.is_empty() {
        return Err(Error::invalid("stack has no jobs"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|job| match align_pair(job) {
                Ok(a) => StackRow::success(job.label(), &a.fit),
                Err(e) => StackRow::failure(job.label(), &e),
            })
            .collect()
    });
    Ok(StackReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_strings() {
        for s in ["shift", "affine", "quadratic", "auto"] {
            assert_eq!(s.parse::<ModelPolicy>().unwrap().to_string(), s);
        }
        assert!("cubic".parse::<ModelPolicy>().is_err());
    }

    #[test]
    fn job_json_defaults() {
        let job: AlignmentJob = serde_json::from_str(r#"{"base":"b.json","warp":"w.json","out":"o","model":"auto"}"#).unwrap();
        assert_eq!(job.tiepoints, TiepointSource::Builtin);
        assert_eq!(job.options.model, ModelPolicy::Auto);
        assert_eq!(job.options.ransac, RansacConfig::default());
        assert_eq!(job.label(), "w");
        let job: AlignmentJob =
            serde_json::from_str(r#"{"base":"b","warp":"w","out":"o","tiepoints":"tp.txt","scene_id":"x"}"#).unwrap();
        assert_eq!(job.tiepoints, TiepointSource::File("tp.txt".into()));
        assert_eq!(job.label(), "x");
    }
}
