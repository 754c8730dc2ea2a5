use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coreg::catalog::{candidates_for_aoi, load_manifest, load_planet_months, pair_months, write_plan};
use coreg::geo::Aoi;
use coreg::io::{read_raster, write_raster};
use coreg::pipeline::{
    align_loaded, align_stack, generate_synthetic, load_jobs, AlignmentJob, ModelPolicy, StackReport, SyntheticSpec,
    TiepointSource,
};
use coreg::resample::InterpolationMethod;
use coreg::tiepoints::export_tiepoints;

#[derive(Parser)]
#[command(name = "coreg", version, about = "Co-register multi-resolution satellite images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align one warp image onto a base image.
    Align(AlignArgs),
    /// Run a list of alignment jobs and write a stack report.
    Stack(StackArgs),
    /// Pick the least cloudy low-resolution scenes for each mosaic month.
    Pair(PairArgs),
    /// Generate a synthetic base/warp pair with known ground truth.
    Synth(SynthArgs),
    /// Render a stack report as a table.
    Report(ReportArgs),
}

/// `minx,miny,maxx,maxy` with an optional trailing CRS id.
#[derive(Debug, Clone)]
struct AoiArg {
    bounds: [f64; 4],
    crs_id: Option<String>,
}

impl AoiArg {
    fn resolve(&self, default_crs: &str) -> coreg::Result<Aoi> {
        let [x0, y0, x1, y1] = self.bounds;
        Aoi::new(x0, y0, x1, y1, self.crs_id.as_deref().unwrap_or(default_crs))
    }
}

fn parse_aoi(s: &str) -> Result<AoiArg, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if !(4..=5).contains(&parts.len()) {
        return Err("expected minx,miny,maxx,maxy[,crs]".into());
    }
    let mut bounds = [0.0; 4];
    for (slot, p) in bounds.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("'{p}' is not a number"))?;
    }
    Ok(AoiArg {
        bounds,
        crs_id: parts.get(4).map(|c| c.to_string()),
    })
}

fn parse_policy(s: &str) -> Result<ModelPolicy, String> {
    s.parse().map_err(|e: coreg::Error| e.to_string())
}

fn parse_interp(s: &str) -> Result<InterpolationMethod, String> {
    s.parse().map_err(|e: coreg::Error| e.to_string())
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    warp: PathBuf,
    /// Area of interest in the base CRS: minx,miny,maxx,maxy[,crs].
    #[arg(long, value_parser = parse_aoi)]
    aoi: Option<AoiArg>,
    /// shift, affine, quadratic or auto.
    #[arg(long, default_value = "affine", value_parser = parse_policy)]
    model: ModelPolicy,
    /// nearest, bilinear or area_average; per-band default when omitted.
    #[arg(long, value_parser = parse_interp)]
    interp: Option<InterpolationMethod>,
    /// Tiepoint interchange file, or `builtin` for the built-in matcher.
    #[arg(long, default_value = "builtin")]
    tiepoints: String,
    /// RANSAC inlier threshold in working-resolution pixels.
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StackArgs {
    /// JSON array of alignment jobs.
    #[arg(long)]
    jobs: PathBuf,
    /// Parallel jobs; defaults to the number of CPUs.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PairArgs {
    /// JSON array of scene records.
    #[arg(long)]
    manifest: PathBuf,
    /// JSON array of {scene_id, year, month} mosaic entries.
    #[arg(long)]
    planet_months: PathBuf,
    /// Highest acceptable cloud fraction, in [0, 1].
    #[arg(long)]
    max_cloud: f64,
    /// Only consider scenes overlapping this area: minx,miny,maxx,maxy[,crs].
    #[arg(long, value_parser = parse_aoi)]
    aoi: Option<AoiArg>,
    #[arg(long, default_value = "plan.json")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RasterExt {
    Tif,
    Json,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthetic specification; defaults apply to missing fields.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "tif")]
    format: RasterExt,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    /// Report written by `stack`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> coreg::Error + '_ {
    move |e| coreg::Error::InvalidInput(format!("{}: {e}", path.display()))
}

fn align(args: AlignArgs) -> coreg::Result<ExitCode> {
    let base = read_raster(&args.base)?;
    let warp = read_raster(&args.warp)?;
    let mut job = AlignmentJob::new(&args.base, &args.warp, &args.out);
    job.tiepoints = TiepointSource::from(args.tiepoints);
    job.options.model = args.model;
    job.options.interpolation = args.interp;
    job.options.ransac.inlier_threshold_px = args.threshold;
    job.options.ransac.seed = args.seed;
    job.options.aoi = args.aoi.map(|a| a.resolve(base.crs_id())).transpose()?;
    let a = align_loaded(&job, &base, &warp)?;
    let r = &a.fit.report;
    eprintln!(
        "{}: {} model, {}/{} inliers, RMSE {:.3} -> {:.3} px; outputs in {}",
        job.label(),
        a.fit.model.kind(),
        r.inlier_count,
        r.total_count,
        r.rmse_before,
        r.rmse_after,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn stack(args: StackArgs) -> coreg::Result<ExitCode> {
    let jobs = load_jobs(&args.jobs)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    let report = align_stack(&jobs, workers)?;
    report.save(&args.out)?;
    for row in report.rows.iter().filter(|r| !r.is_ok()) {
        eprintln!("{}: {}", row.scene_id, row.error.as_deref().unwrap_or("failed"));
    }
    print!("{}", report.to_text());
    eprintln!(
        "{} succeeded, {} failed; report in {}",
        report.succeeded,
        report.failed,
        args.out.display()
    );
    Ok(if report.failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn pair(args: PairArgs) -> coreg::Result<ExitCode> {
    if !(0.0..=1.0).contains(&args.max_cloud) {
        return Err(coreg::Error::InvalidInput("--max-cloud must lie in [0, 1]".into()));
    }
    let mut candidates = load_manifest(&args.manifest)?;
    let months = load_planet_months(&args.planet_months)?;
    if let Some(aoi) = &args.aoi {
        let crs = candidates.first().map_or("", |c| c.footprint.crs_id.as_str()).to_string();
        candidates = candidates_for_aoi(&candidates, &aoi.resolve(&crs)?);
    }
    let slots = pair_months(&months, &candidates, args.max_cloud);
    write_plan(&slots, &args.out)?;
    let mut filled = 0;
    for slot in &slots {
        let pick = |r: &Option<coreg::catalog::SceneRecord>| r.as_ref().map_or("-".to_string(), |r| r.scene_id.clone());
        filled += usize::from(slot.landsat8.is_some()) + usize::from(slot.sentinel2.is_some());
        println!("{}  {}  {}  {}", slot.label(), slot.reference_scene_id, pick(&slot.landsat8), pick(&slot.sentinel2));
    }
    eprintln!(
        "{} months, {filled} of {} slots filled; plan in {}",
        slots.len(),
        2 * slots.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn synth(args: SynthArgs) -> coreg::Result<ExitCode> {
    let text = fs::read_to_string(&args.spec).map_err(io_err(&args.spec))?;
    let spec: SyntheticSpec = serde_json::from_str(&text)?;
    let scene = generate_synthetic(&spec)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let ext = match args.format {
        RasterExt::Tif => "tif",
        RasterExt::Json => "json",
    };
    write_raster(&scene.base, args.out.join(format!("base.{ext}")))?;
    write_raster(&scene.warp, args.out.join(format!("warp.{ext}")))?;
    let truth = args.out.join("truth.json");
    fs::write(&truth, serde_json::to_string_pretty(&scene.truth)?).map_err(io_err(&truth))?;
    export_tiepoints(&scene.tiepoints, args.out.join("tiepoints.txt"))?;
    eprintln!(
        "{0}/base.{ext}, {0}/warp.{ext}, truth.json and {1} tiepoints written",
        args.out.display(),
        scene.tiepoints.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> coreg::Result<ExitCode> {
    let report = StackReport::load(&args.input)?;
    let table = match args.format {
        TableFormat::Text => report.to_text(),
        TableFormat::Csv => report.to_csv()?,
    };
    match &args.out {
        Some(path) => fs::write(path, table).map_err(io_err(path))?,
        None => print!("{table}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Align(a) => align(a),
        Command::Stack(a) => stack(a),
        Command::Pair(a) => pair(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
