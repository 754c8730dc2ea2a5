//! Tiepoint interchange format.
//!
//! ```text
//! murat-tiepoints v1 <base_w> <base_h> <warp_w> <warp_h> <gsd_m>
//! # comments start with '#'
//! x_b y_b x_w y_w score
//! ```
//!
//! Coordinates are continuous working-resolution pixel coordinates. Floats
//! are written in shortest round-trip form, so export followed by import
//! reproduces every value exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Provenance, TiePoint, TiePointSet};
use crate::error::{Error, Result};
use crate::geo::PixelPoint;

pub const MAGIC: &str = "murat-tiepoints";
pub const VERSION: &str = "v1";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} '{tok}'")))
}

/// Base dims, warp dims and working GSD from a header line.
type Header = ((usize, usize), (usize, usize), f64);

pub fn read_tiepoints<R: BufRead>(reader: R, name: &str) -> Result<TiePointSet> {
    let mut header: Option<Header> = None;
    let mut points = Vec::new();
    let mut last_line = 0;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = text.split_whitespace().collect();
        let Some((base_dims, warp_dims, _)) = header else {
            if toks.len() != 7 || toks[0] != MAGIC || toks[1] != VERSION {
                return Err(parse_err(lineno, format!("expected '{MAGIC} {VERSION} <base_w> <base_h> <warp_w> <warp_h> <gsd_m>'")));
            }
            let bw = parse_num(toks[2], lineno, "base width")?;
            let bh = parse_num(toks[3], lineno, "base height")?;
            let ww = parse_num(toks[4], lineno, "warp width")?;
            let wh = parse_num(toks[5], lineno, "warp height")?;
            let gsd: f64 = parse_num(toks[6], lineno, "GSD")?;
            if !(gsd.is_finite() && gsd > 0.0) {
                return Err(parse_err(lineno, "GSD must be positive"));
            }
            header = Some(((bw, bh), (ww, wh), gsd));
            continue;
        };
        if toks.len() != 5 {
            return Err(parse_err(lineno, format!("expected 5 fields, found {}", toks.len())));
        }
        let mut v = [0.0f64; 5];
        for (slot, tok) in v.iter_mut().zip(&toks) {
            *slot = parse_num(tok, lineno, "number")?;
            if !slot.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value '{tok}'")));
            }
        }
        let checks = [
            ("x_b", v[0], base_dims.0, base_dims),
            ("y_b", v[1], base_dims.1, base_dims),
            ("x_w", v[2], warp_dims.0, warp_dims),
            ("y_w", v[3], warp_dims.1, warp_dims),
        ];
        for (axis, value, limit, (width, height)) in checks {
            if value < 0.0 || value > limit as f64 {
                return Err(Error::OutOfGrid {
                    line: lineno,
                    axis,
                    value,
                    width,
                    height,
                });
            }
        }
        if !(0.0..=1.0).contains(&v[4]) {
            return Err(parse_err(lineno, format!("score {} outside [0, 1]", v[4])));
        }
        points.push((lineno, TiePoint::new(PixelPoint::new(v[0], v[1]), PixelPoint::new(v[2], v[3]), v[4])));
    }
    let Some((base_dims, warp_dims, gsd)) = header else {
        return Err(parse_err(last_line.max(1), "missing header line"));
    };
    // Report duplicates with the line of the later occurrence.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a].1.base, &points[b].1.base);
        pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y))
    });
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            let (a, b) = (&points[i].1.base, &points[j].1.base);
            if b.x - a.x > 1e-6 {
                break;
            }
            if (b.y - a.y).abs() <= 1e-6 {
                return Err(parse_err(points[i].0.max(points[j].0), "duplicate base coordinate"));
            }
        }
    }
    TiePointSet::new(
        points.into_iter().map(|(_, p)| p).collect(),
        Provenance::Imported(name.to_string()),
        gsd,
        base_dims,
        warp_dims,
    )
}

pub fn write_tiepoints<W: Write>(set: &TiePointSet, mut out: W) -> Result<()> {
    let (bw, bh) = set.base_dims();
    let (ww, wh) = set.warp_dims();
    writeln!(out, "{MAGIC} {VERSION} {bw} {bh} {ww} {wh} {}", set.working_gsd_m())?;
    writeln!(out, "# source: {}", set.provenance())?;
    for tp in set.points() {
        writeln!(out, "{} {} {} {} {}", tp.base.x, tp.base.y, tp.warp.x, tp.warp.y, tp.score)?;
    }
    out.flush()?;
    Ok(())
}

pub fn import_tiepoints(path: impl AsRef<Path>) -> Result<TiePointSet> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("tiepoints")
        .to_string();
    let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_tiepoints(BufReader::new(file), &name).map_err(|e| e.in_file(path))
}

pub fn export_tiepoints(set: &TiePointSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    write_tiepoints(set, BufWriter::new(file))
}
